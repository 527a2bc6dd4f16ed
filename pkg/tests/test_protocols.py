import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq
from scipy.sparse import diags
from scipy.sparse.csgraph import shortest_path

from spinphoton import qstate
from spinphoton.entanglement import SpinRegister, teleported_cnot_circuit
from spinphoton.network import Link, WernerSource
from spinphoton.protocols import (
    ClientConfig,
    ConnectivityReport,
    HubConfig,
    TimeBinQubit,
    apply_frame,
    format_table,
    h2,
    load_timebin,
    mdi_qkd_single_hub,
    mdi_qkd_two_hub,
    overhead_compare,
    secret_fraction,
    swap_chain_fidelity,
    swap_chain_gate_count,
    swap_chain_gates,
    transversal_depth,
)
from spinphoton.qstate import DensityMatrix, GateSpec, NoiseChannel

IDEAL = ClientConfig(source="single_photon", mean_photon_number=1.0)
HUB = HubConfig()
LINK = Link("hubs", ("h1", "h2"))


def noisy(p, kind="depolarizing"):
    return ClientConfig(source="single_photon", mean_photon_number=1.0, noise=NoiseChannel(kind, p))


# --- loading ------------------------------------------------------------------------------

def test_timebin_validation():
    with pytest.raises(ValueError):
        TimeBinQubit("Y", 0)
    with pytest.raises(ValueError):
        TimeBinQubit("Z", 2)
    with pytest.raises(ValueError):
        TimeBinQubit("Z", 0, mean_photon_number=0.0)


def load_until_herald(q, client, rng, reg=None):
    reg = reg or SpinRegister("hub", 0.0)
    while True:
        res = load_timebin(q, reg, client, HUB, rng)
        if res.heralded:
            return res, reg


def test_ideal_z_loading_is_perfect():
    rng = np.random.default_rng(0)
    for _ in range(50):
        res, reg = load_until_herald(TimeBinQubit("Z", 0, 1.0), IDEAL, rng)
        spin = apply_frame(reg.memory[res.slot], res.frame)
        prob, _ = qstate.project_qubit(spin, 0, 0, "Z")
        assert prob == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("basis,bit", [("Z", 0), ("Z", 1), ("X", 0), ("X", 1)])
@pytest.mark.parametrize("noise", [None, NoiseChannel("dephasing", 0.2), NoiseChannel("amplitude_damping", 0.3)])
def test_loading_teleports_channel_output(basis, bit, noise):
    """Frame-corrected spin equals the client state after its channel, for both Bell outcomes."""
    client = ClientConfig(source="single_photon", mean_photon_number=1.0, noise=noise)
    q = TimeBinQubit(basis, bit, 1.0)
    target = q.state() if noise is None else qstate.apply_channel(q.state(), noise)
    rng = np.random.default_rng(1)
    frames = set()
    for _ in range(30):
        res, reg = load_until_herald(q, client, rng)
        frames.add(res.frame)
        spin = apply_frame(reg.memory[res.slot], res.frame)
        assert np.allclose(spin.data, target.data, atol=1e-12)
    assert frames == {(1, 0), (1, 1)}


def test_vacuum_limit_never_heralds():
    client = ClientConfig(mean_photon_number=1e-9)
    p, _ = HUB.herald_probabilities(client)
    assert p < 1e-9
    rng = np.random.default_rng(2)
    reg = SpinRegister("hub", 0.0)
    assert not any(load_timebin(TimeBinQubit("Z", 0, 1e-9), reg, client, HUB, rng).heralded for _ in range(10_000))


def photon_count_oracle(mu, eta_c, eta_e, n, rng):
    """Herald frequency from explicit Poisson photon numbers and the linear-optics herald rule."""
    photons = rng.poisson(mu * eta_c, size=n)
    emitted = rng.random(n) < eta_e
    coin = rng.random(n) < 0.5
    heralds = coin & (((photons == 1) & emitted) | (photons >= 2))
    return heralds.mean()


@pytest.mark.parametrize("mu,eta_c", [(0.1, 1.0), (0.5, 0.3), (2.0, 0.8)])
def test_herald_probability_scales_with_photons(mu, eta_c):
    client = ClientConfig(mean_photon_number=mu, channel_efficiency=eta_c)
    hub = HubConfig(emission_efficiency=0.7)
    p, _ = hub.herald_probabilities(client)
    oracle = photon_count_oracle(mu, eta_c, 0.7, 1_000_000, np.random.default_rng(3))
    assert p == pytest.approx(oracle, abs=3 * math.sqrt(p * (1 - p) / 1_000_000))
    rng = np.random.default_rng(4)
    reg = SpinRegister("hub", 0.0)
    n = 20_000
    k = 0
    for _ in range(n):
        res = load_timebin(TimeBinQubit("Z", 0, mu), reg, client, hub, rng)
        if res.heralded:
            k += 1
            del reg.memory[res.slot]
    assert abs(k - p * n) <= 3 * math.sqrt(n * p * (1 - p))


def test_dephased_x_states_load_with_error_p():
    p = 0.07
    client = noisy(p, "dephasing")
    # channel composition oracle: <-| Z-flip(p)(|+><+|) |-> = p
    rho = qstate.apply_channel(TimeBinQubit("X", 0).state(), NoiseChannel("dephasing", p))
    assert qstate.project_qubit(rho, 0, 1, "X")[0] == pytest.approx(p, abs=1e-12)
    rng = np.random.default_rng(5)
    n, errors = 10_000, 0
    for i in range(n):
        bit = i & 1
        res, reg = load_until_herald(TimeBinQubit("X", bit, 1.0), client, rng)
        outcome, _, _ = qstate.measure_qubit(apply_frame(reg.memory[res.slot], res.frame), 0, "X", rng)
        errors += outcome != bit
    assert abs(errors - p * n) <= 3 * math.sqrt(n * p * (1 - p))


def test_loading_needs_free_slot():
    reg = SpinRegister("hub", 0.0, num_nuclei=1)
    reg.store(1, qstate.new_basis_state(1, "0"))
    with pytest.raises(ValueError):
        load_timebin(TimeBinQubit("Z", 0), reg, IDEAL, HUB, np.random.default_rng(0))


# --- key rate formula ---------------------------------------------------------------------

def test_binary_entropy_and_secret_fraction():
    assert h2(0.0) == 0.0 and h2(0.5) == 1.0 and h2(1.0) == 0.0
    assert secret_fraction(0.0) == 1.0
    root = brentq(lambda q: 1 - 2 * h2(q), 0.01, 0.3)
    assert root == pytest.approx(0.110028, abs=1e-6)
    assert secret_fraction(0.11) == pytest.approx(0.0, abs=1e-3)
    assert secret_fraction(0.2) == 0.0
    assert secret_fraction(0.05) == pytest.approx(1 - 2 * (-0.05 * math.log2(0.05) - 0.95 * math.log2(0.95)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.5))
def test_secret_fraction_formula(q):
    assert 0.0 <= secret_fraction(q) <= 1.0
    assert secret_fraction(q) == max(0.0, 1 - 2 * h2(q))


# --- single hub ---------------------------------------------------------------------------

def test_noiseless_session():
    res = mdi_qkd_single_hub(IDEAL, IDEAL, HUB, 10_000, None, np.random.default_rng(6))
    assert res.qber == 0.0 and res.secret_fraction == 1.0
    assert res.sifted_bits > 0 and res.sifted_bits <= res.rounds
    n = res.completed_rounds
    assert abs(res.sifted_bits - 0.5 * n) <= 3 * math.sqrt(n * 0.25)
    assert res.raw_rate_hz > 0


def qber_band(res, q):
    return 3 * math.sqrt(q * (1 - q) / res.sifted_bits)


def test_five_percent_symmetric_noise():
    res = mdi_qkd_single_hub(noisy(0.1), IDEAL, HUB, 10_000, None, np.random.default_rng(7))
    assert abs(res.qber - 0.05) <= qber_band(res, 0.05)
    assert abs(res.qber_z - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / res.sifted_z)
    assert abs(res.qber_x - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / res.sifted_x)
    band = qber_band(res, 0.05)
    assert secret_fraction(0.05 + band) <= res.secret_fraction <= secret_fraction(0.05 - band)
    assert res.secret_fraction == pytest.approx(1 - 2 * h2(0.05), abs=0.1)


def test_threshold_qber_kills_key():
    res = mdi_qkd_single_hub(noisy(0.22), IDEAL, HUB, 10_000, None, np.random.default_rng(8))
    assert abs(res.qber - 0.11) <= qber_band(res, 0.11)
    assert res.secret_fraction < 0.1


def test_multiphoton_heralds_raise_qber():
    client = ClientConfig(source="wcp", mean_photon_number=0.5)
    _, mixed = HUB.herald_probabilities(client)
    expected = 0.5 * (1 - (1 - mixed) ** 2)  # any maximally mixed spin randomises the parity
    res = mdi_qkd_single_hub(client, client, HUB, 20_000, None, np.random.default_rng(9))
    assert abs(res.qber - expected) <= qber_band(res, expected)


def test_abandoned_rounds():
    hub = HubConfig(max_reloads=1)
    client = ClientConfig(source="single_photon", mean_photon_number=1.0, channel_efficiency=0.2)
    res = mdi_qkd_single_hub(client, client, hub, 5_000, None, np.random.default_rng(10))
    p = 0.5 * 0.2
    n = res.rounds
    assert abs(res.completed_rounds - p * p * n) <= 3 * math.sqrt(n * p * p * (1 - p * p))
    assert res.duration_ns == pytest.approx(n * hub.attempt_ns)


# --- two hubs -----------------------------------------------------------------------------

def test_two_hub_perfect_pair_matches_single_hub_stream():
    a, b = noisy(0.1), IDEAL
    one = mdi_qkd_single_hub(a, b, HUB, 5_000, None, np.random.default_rng(11))
    two = mdi_qkd_two_hub(a, b, HUB, LINK, WernerSource(1.0, 1.0), 5_000, None, np.random.default_rng(11))
    assert (one.sifted_z, one.sifted_x, one.errors_z, one.errors_x) == (two.sifted_z, two.sifted_x, two.errors_z, two.errors_x)


def test_two_hub_perfect_pair_indistinguishable():
    a, b = noisy(0.1), IDEAL
    one = mdi_qkd_single_hub(a, b, HUB, 22_000, None, np.random.default_rng(12))
    two = mdi_qkd_two_hub(a, b, HUB, LINK, WernerSource(1.0, 1.0), 22_000, None, np.random.default_rng(13))
    assert one.sifted_bits >= 10_000 and two.sifted_bits >= 10_000
    e1, e2 = one.errors_z + one.errors_x, two.errors_z + two.errors_x
    pooled = (e1 + e2) / (one.sifted_bits + two.sifted_bits)
    z = (e1 / one.sifted_bits - e2 / two.sifted_bits) / math.sqrt(
        pooled * (1 - pooled) * (1 / one.sifted_bits + 1 / two.sifted_bits)
    )
    p_value = math.erfc(abs(z) / math.sqrt(2))
    assert p_value > 0.01


def teleported_bsm_error(basis, coeffs):
    """Average parity-error probability of the nonlocal Bell measurement from the 4-qubit circuit."""
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            data = qstate.tensor(TimeBinQubit(basis, a).state(), TimeBinQubit(basis, b).state())
            out = qstate.apply_gate(teleported_cnot_circuit(data, coeffs), GateSpec("H", (0,)))
            probs = np.real(np.diag(out.data)).reshape(2, 2)  # [x parity bit, z parity bit]
            wrong = probs[1 - (a ^ b), :].sum() if basis == "X" else probs[:, 1 - (a ^ b)].sum()
            total += wrong / 4
    return total


def test_two_hub_werner_pair_excess_qber():
    f = 0.9
    e = (1 - f) / 3
    coeffs = [f, e, e, e]
    qz, qx = teleported_bsm_error("Z", coeffs), teleported_bsm_error("X", coeffs)
    assert qz == pytest.approx(2 * e, abs=1e-12) and qx == pytest.approx(2 * e, abs=1e-12)
    res = mdi_qkd_two_hub(IDEAL, IDEAL, HUB, LINK, WernerSource(1.0, f), 20_000, None, np.random.default_rng(14))
    assert abs(res.qber_z - qz) <= 3 * math.sqrt(qz * (1 - qz) / res.sifted_z)
    assert abs(res.qber_x - qx) <= 3 * math.sqrt(qx * (1 - qx) / res.sifted_x)


def test_two_hub_asymmetric_pair_errors():
    coeffs = [0.8, 0.2, 0.0, 0.0]  # X error on the pair flips only the Z parity
    assert teleported_bsm_error("Z", coeffs) == pytest.approx(0.2)
    assert teleported_bsm_error("X", coeffs) == pytest.approx(0.0, abs=1e-12)
    src = WernerSource(1.0, 1.0)

    class XErrorSource:
        def success_probability(self, eta):
            return src.success_probability(eta)

        def race(self, eta, channels, max_steps, rng):
            found = src.race(eta, channels, max_steps, rng)
            return found and (found[0], np.array(coeffs))

    res = mdi_qkd_two_hub(IDEAL, IDEAL, HUB, LINK, XErrorSource(), 10_000, None, np.random.default_rng(15))
    assert res.errors_x == 0
    assert abs(res.qber_z - 0.2) <= 3 * math.sqrt(0.16 / res.sifted_z)


def test_dead_inter_hub_link():
    dark = Link("hubs", ("h1", "h2"), detector_efficiency=0.0)
    res = mdi_qkd_two_hub(IDEAL, IDEAL, HUB, dark, WernerSource(1.0, 1.0), 1_000, None, np.random.default_rng(16))
    assert res.sifted_bits == 0 and res.secret_fraction == 0.0 and res.completed_rounds == 0


# --- connectivity ---------------------------------------------------------------------------

def test_transversal_depth_examples():
    assert transversal_depth(7, 7).depth == 1
    assert transversal_depth(7, 1, "all_to_all").depth == 7
    assert transversal_depth(7, 2, "all_to_all").depth == 4
    r = transversal_depth(7, 7, "all_to_all", gate_fidelity=0.99)
    assert r.total_gates == 7 and r.est_fidelity == pytest.approx(0.99**7)


def planar_oracle(n, c):
    """Route every qubit to its nearest port with graph shortest paths on the line."""
    ports = [min(n - 1, int((i + 0.5) * n / c)) for i in range(c)]
    line = diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1]) if n > 1 else np.zeros((1, 1))
    dist = shortest_path(line, unweighted=True, indices=ports)
    load = np.zeros(c)
    for q in range(n):
        k = int(np.argmin(dist[:, q]))
        load[k] += 1 + 6 * dist[k, q]
    return int(load.max()), int(load.sum())


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.sampled_from(["all_to_all", "planar"]))
def test_depth_bounds(n, c, conn):
    r = transversal_depth(n, c, conn)
    assert r.depth >= math.ceil(n / c)
    assert r.interconnects_used == min(n, c)
    if c >= n:
        assert r.depth == 1
    if conn == "planar":
        assert (r.depth, r.total_gates) == planar_oracle(n, min(n, c))


def test_planar_single_port():
    r = transversal_depth(7, 1, "planar")
    dists = [abs(q - 3) for q in range(7)]
    assert r.depth == sum(1 + 6 * d for d in dists) == 7 + 6 * 12
    with pytest.raises(ValueError):
        transversal_depth(0, 1)
    with pytest.raises(ValueError):
        transversal_depth(3, 1, "ring")
    with pytest.raises(ValueError):
        ConnectivityReport(1, 7, 1.0, 1, n=7, interconnects=1)


def test_swap_chain_examples():
    assert swap_chain_fidelity(1, 0.97) == pytest.approx(0.97)
    assert swap_chain_fidelity(5, 1.0) == 1.0
    assert swap_chain_fidelity(5, 0.99) == pytest.approx(0.99**25)
    assert swap_chain_gate_count(0) == 0 and swap_chain_fidelity(0, 0.9) == 1.0
    with pytest.raises(ValueError):
        swap_chain_fidelity(2, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0.5, 0.999))
def test_swap_chain_monotone(d, f):
    assert swap_chain_fidelity(d + 1, f) < swap_chain_fidelity(d, f)
    assert swap_chain_fidelity(d + 1, 1.0) == swap_chain_fidelity(d, 1.0) == 1.0


def _pauli_products():
    labels = "IXYZ"
    return [np.kron(qstate.pauli(a), qstate.pauli(b)) for a in labels for b in labels]


def flagged_noisy_network(rho, gates, f, flag):
    """Each gate: ideal with probability f, else ideal then two-qubit depolarising and the flag set."""
    reset_to_one = [np.array([[0, 0], [1, 0]]), np.array([[0, 0], [0, 1]])]
    paulis = _pauli_products()
    for g in gates:
        rho = qstate.apply_gate(rho, g)
        dep = sum(qstate.apply_unitary(rho, p, g.targets).data for p in paulis) / 16
        bad = qstate.apply_kraus(DensityMatrix(dep), reset_to_one, [flag])
        rho = DensityMatrix(f * rho.data + (1 - f) * bad.data)
    return rho


def test_swap_network_circuit_oracle():
    d, f = 5, 0.99
    gates = swap_chain_gates(d)
    assert len(gates) == swap_chain_gate_count(d) == 25
    # noiseless network acts as CNOT(0, d) on random inputs
    rng = np.random.default_rng(17)
    for _ in range(3):
        v = rng.normal(size=2 ** (d + 1)) + 1j * rng.normal(size=2 ** (d + 1))
        rho = DensityMatrix.from_vector(v)
        out = rho
        for g in gates:
            out = qstate.apply_gate(out, g)
        direct = qstate.apply_gate(rho, GateSpec("CNOT", (0, d)))
        assert np.allclose(out.data, direct.data, atol=1e-10)
    # fault-free probability through the noisy network
    flag = qstate.new_basis_state(1, "0")
    start = qstate.tensor(flag, DensityMatrix.from_vector([1, 1]), qstate.new_basis_state(d, "0" * d))
    noisy_out = flagged_noisy_network(
        DensityMatrix(start.data), [GateSpec(g.kind, tuple(t + 1 for t in g.targets)) for g in gates], f, 0
    )
    clean, _ = qstate.project_qubit(noisy_out, 0, 0)
    assert clean == pytest.approx(swap_chain_fidelity(d, f), abs=1e-6)
    ideal = qstate.apply_gate(start, GateSpec("CNOT", (1, d + 1)))
    data_out = qstate.partial_trace(noisy_out, range(1, d + 2))
    assert qstate.fidelity(data_out, qstate.partial_trace(ideal, range(1, d + 2))) >= clean - 1e-9


def test_overhead_examples():
    r = overhead_compare(3000, 1000, 100)
    assert (r.surface_per_logical, r.qldpc_per_logical, r.ratio) == (3000, 10, 300)
    assert overhead_compare(3000, 3, 1).qldpc_per_logical == 3
    assert overhead_compare(50, 50, 1).ratio == 1
    with pytest.raises(ValueError):
        overhead_compare(0, 3, 1)


def test_table_is_aligned():
    text = format_table([transversal_depth(7, c, "planar", 0.999) for c in (1, 2, 7)])
    lines = text.splitlines()
    assert len(lines) == 5 and len({len(l) for l in lines}) == 1
    assert "planar" in lines[2]
