"""Key distribution through spin hubs, and connectivity cost analyses.

Time-bin photons from clients are teleported into hub spins, and a Bell
measurement between two loaded spins reveals the parity of the two clients'
bits. The hubs can be the same node or two nodes joined by a heralded pair,
in which case the Bell measurement runs through a teleported CNOT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import qstate
from .entanglement import SpinRegister, teleported_cnot_circuit
from .network import (
    DEFAULT_MAX_ATTEMPTS,
    Engine,
    Link,
    LinkSource,
    LinkTimeoutError,
    LinkTiming,
    TopologyConstants,
    run_link_until_success,
)
from .qstate import DensityMatrix, GateSpec, NoiseChannel

SOURCES = ("wcp", "single_photon")


# --- key distribution ---------------------------------------------------------------------

@dataclass(frozen=True)
class TimeBinQubit:
    """Z basis: bit 0 early, bit 1 late. X basis: bit 0 ``(e+l)/sqrt2``, bit 1 ``(e-l)/sqrt2``."""

    basis: str
    bit: int
    mean_photon_number: float = 0.1
    arrival_window_ns: float = 1.0

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ValueError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        if self.mean_photon_number <= 0:
            raise ValueError("mean photon number must be positive")
        if self.arrival_window_ns <= 0:
            raise ValueError("arrival window must be positive")

    def state(self) -> DensityMatrix:
        return _encoded_state(self.basis, self.bit)


@lru_cache(maxsize=None)
def _encoded_state(basis: str, bit: int) -> DensityMatrix:
    if basis == "Z":
        return qstate.new_basis_state(1, str(bit))
    return DensityMatrix.from_vector([1.0, -1.0 if bit else 1.0])


@dataclass(frozen=True)
class ClientConfig:
    source: str = "wcp"
    mean_photon_number: float = 0.1
    channel_efficiency: float = 1.0
    noise: NoiseChannel | None = None
    x_basis_prob: float = 0.5

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.mean_photon_number <= 0:
            raise ValueError("mean photon number must be positive")
        if not 0.0 <= self.channel_efficiency <= 1.0 or not 0.0 <= self.x_basis_prob <= 1.0:
            raise ValueError("efficiencies and probabilities must lie in [0, 1]")
        if self.noise is not None and self.noise.target != 0:
            raise ValueError("client noise acts on the single photonic qubit (target 0)")

    def photon_statistics(self, mean_photon_number: float | None = None) -> tuple[float, float]:
        """Probabilities of exactly one and of two or more photons reaching the hub."""
        mu = self.mean_photon_number if mean_photon_number is None else mean_photon_number
        if self.source == "single_photon":
            return min(mu, 1.0) * self.channel_efficiency, 0.0
        lam = mu * self.channel_efficiency
        p0 = math.exp(-lam)
        p1 = lam * p0
        return p1, max(0.0, 1.0 - p0 - p1)


@dataclass(frozen=True)
class HubConfig:
    emission_efficiency: float = 1.0
    attempt_ns: float = 1_000.0
    bsm_ns: float = 0.0
    max_reloads: int = 10

    def __post_init__(self):
        if not 0.0 <= self.emission_efficiency <= 1.0:
            raise ValueError("emission efficiency must lie in [0, 1]")
        if self.attempt_ns <= 0 or self.bsm_ns < 0:
            raise ValueError("durations must be non-negative (attempt time positive)")
        if self.max_reloads < 1:
            raise ValueError("max_reloads must be at least 1")

    def herald_probabilities(self, client: ClientConfig, mean_photon_number: float | None = None) -> tuple[float, float]:
        """Per-attempt herald probability and the fraction of heralds caused by multiphoton events."""
        p1, pmulti = client.photon_statistics(mean_photon_number)
        genuine = 0.5 * p1 * self.emission_efficiency  # linear optics resolves only the two Psi outcomes
        spurious = 0.5 * pmulti
        total = genuine + spurious
        return total, (spurious / total if total > 0 else 0.0)


@lru_cache(maxsize=None)
def _loading_branches(basis: str, bit: int, noise: NoiseChannel | None) -> tuple[tuple[float, DensityMatrix], ...]:
    """Spin states (before frame correction) for the two accepted Bell outcomes.

    Qubits: 0 client photon, 1 spin, 2 photon emitted by the spin.
    """
    client = _encoded_state(basis, bit)
    if noise is not None:
        client = qstate.apply_channel(client, noise)
    rho = qstate.tensor(client, qstate.bell_state("phi+"))
    rho = qstate.apply_gate(rho, GateSpec("CNOT", (0, 2)))
    rho = qstate.apply_gate(rho, GateSpec("H", (0,)))
    p_psi, rho = qstate.project_qubit(rho, 2, 1)
    out = []
    for m in (0, 1):
        p, post = qstate.project_qubit(rho, 0, m)
        out.append((p, qstate.partial_trace(post, [1])))
    return tuple(out)


def apply_frame(state: DensityMatrix, frame: tuple[int, int]) -> DensityMatrix:
    """Undo a recorded ``(x, z)`` Pauli frame: X first, then Z."""
    x, z = frame
    if x:
        state = qstate.apply_gate(state, GateSpec("X", (0,)))
    if z:
        state = qstate.apply_gate(state, GateSpec("Z", (0,)))
    return state


@dataclass(frozen=True)
class LoadResult:
    heralded: bool
    slot: int | None = None
    frame: tuple[int, int] | None = None
    multiphoton: bool = False


def _sample_loaded(q: TimeBinQubit, client: ClientConfig, mixed: bool, rng: np.random.Generator):
    branches = _loading_branches(q.basis, q.bit, client.noise)
    m = int(rng.random() >= branches[0][0])
    if mixed:
        return (1, m), qstate.maximally_mixed(1)
    return (1, m), branches[m][1]


def load_timebin(
    q: TimeBinQubit,
    reg: SpinRegister,
    client: ClientConfig,
    hub: HubConfig,
    rng: np.random.Generator,
) -> LoadResult:
    """One heralded loading attempt of ``q`` into a free nuclear slot of ``reg``.

    On success the slot holds the client state up to the returned Pauli frame.
    """
    slot = reg.free_nuclear_slot()
    if slot is None:
        raise ValueError(f"register {reg.node_id} has no free slot")
    p_herald, multi_frac = hub.herald_probabilities(client, q.mean_photon_number)
    if rng.random() >= p_herald:
        return LoadResult(False)
    mixed = bool(rng.random() < multi_frac)
    frame, state = _sample_loaded(q, client, mixed, rng)
    reg.store(slot, state)
    return LoadResult(True, slot, frame, mixed)


def h2(q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise ValueError("argument must lie in [0, 1]")
    if q in (0.0, 1.0):
        return 0.0
    return -q * math.log2(q) - (1 - q) * math.log2(1 - q)


def secret_fraction(qber: float) -> float:
    return max(0.0, 1.0 - 2.0 * h2(qber))


@dataclass(frozen=True)
class QkdSessionResult:
    sifted_bits: int
    qber: float
    secret_fraction: float
    raw_rate_hz: float
    rounds: int = 0
    completed_rounds: int = 0
    sifted_z: int = 0
    sifted_x: int = 0
    errors_z: int = 0
    errors_x: int = 0
    duration_ns: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.qber <= 0.5:
            raise ValueError("qber must lie in [0, 0.5]")
        if self.sifted_bits > self.rounds:
            raise ValueError("cannot sift more bits than rounds")

    @property
    def qber_z(self) -> float:
        return self.errors_z / self.sifted_z if self.sifted_z else 0.0

    @property
    def qber_x(self) -> float:
        return self.errors_x / self.sifted_x if self.sifted_x else 0.0


@lru_cache(maxsize=None)
def _pauli_pair(k: int) -> tuple[float, ...]:
    c = [0.0] * 4
    c[k] = 1.0
    return tuple(c)


def _outcome_table(a: DensityMatrix, b: DensityMatrix, pair_error: int | None) -> np.ndarray:
    """Joint probabilities of (X parity, Z parity) bits, indexed ``2*mx + mz``."""
    data = qstate.tensor(a, b)
    if pair_error is None:
        data = qstate.apply_gate(data, GateSpec("CNOT", (0, 1)))
    else:
        data = teleported_cnot_circuit(data, _pauli_pair(pair_error))
    data = qstate.apply_gate(data, GateSpec("H", (0,)))
    return np.clip(np.real(np.diag(data.data)), 0.0, None)


class _Tables:
    """Caches outcome tables keyed by how each spin was loaded."""

    def __init__(self):
        self._cache: dict = {}

    def get(self, key_a, state_a, key_b, state_b, pair_error):
        key = (key_a, key_b, pair_error)
        if key not in self._cache:
            self._cache[key] = _outcome_table(state_a, state_b, pair_error)
        return self._cache[key]


def _load_with_retries(q, client, hub, rng):
    """Return ``(attempts, loaded key, corrected state)``; key is ``None`` if every reload failed."""
    p_herald, multi_frac = hub.herald_probabilities(client, q.mean_photon_number)
    if p_herald <= 0.0:
        return hub.max_reloads, None, None
    attempts = int(rng.geometric(p_herald))
    if attempts > hub.max_reloads:
        return hub.max_reloads, None, None
    mixed = bool(rng.random() < multi_frac)
    frame, _ = _sample_loaded(q, client, mixed, rng)
    if mixed:
        return attempts, ("mixed",), qstate.maximally_mixed(1)
    return attempts, (q.basis, q.bit, client.noise, frame), _corrected(q.basis, q.bit, client.noise, frame)


@lru_cache(maxsize=None)
def _corrected(basis, bit, noise, frame) -> DensityMatrix:
    return apply_frame(_loading_branches(basis, bit, noise)[frame[1]][1], frame)


def _client_round(client: ClientConfig, rng) -> TimeBinQubit:
    basis = "X" if rng.random() < client.x_basis_prob else "Z"
    return TimeBinQubit(basis, int(rng.random() < 0.5), client.mean_photon_number)


def _session(clientA, clientB, hub, rounds, engine, rng, pair_supplier):
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    engine = engine or Engine()
    tables = _Tables()
    t = engine.now
    start = t
    completed = sifted_z = sifted_x = err_z = err_x = 0
    for _ in range(rounds):
        qa, qb = _client_round(clientA, rng), _client_round(clientB, rng)
        na, key_a, state_a = _load_with_retries(qa, clientA, hub, rng)
        nb, key_b, state_b = _load_with_retries(qb, clientB, hub, rng)
        round_ns = max(na, nb) * hub.attempt_ns
        engine.schedule(t, "attempt_start", {"round": completed})
        linked, pair, pair_ns = pair_supplier(t)
        round_ns = max(round_ns, pair_ns)
        t += round_ns + hub.bsm_ns
        if key_a is None or key_b is None or not linked:
            continue
        completed += 1
        engine.schedule(t, "protocol_done", {"round": completed})
        if qa.basis != qb.basis:
            continue
        if pair is None:
            table = tables.get(key_a, state_a, key_b, state_b, None)
        else:
            table = sum(c * tables.get(key_a, state_a, key_b, state_b, k) for k, c in enumerate(pair) if c > 0)
        outcome = int(rng.choice(4, p=table / table.sum()))
        mx, mz = outcome >> 1, outcome & 1
        parity = qa.bit ^ qb.bit
        if qa.basis == "Z":
            sifted_z += 1
            err_z += mz != parity
        else:
            sifted_x += 1
            err_x += mx != parity
    engine.run()
    duration = t - start
    sifted = sifted_z + sifted_x
    q = (err_z + err_x) / sifted if sifted else 0.0
    q = min(q, 1.0 - q)  # anticorrelated keys are relabelled by one public bit flip
    sf = secret_fraction(q) if sifted else 0.0
    rate = sifted / (duration * 1e-9) if duration > 0 else 0.0
    return QkdSessionResult(sifted, q, sf, rate, rounds, completed, sifted_z, sifted_x, err_z, err_x, duration)


def _local(_t):
    return True, None, 0.0


def mdi_qkd_single_hub(
    clientA: ClientConfig,
    clientB: ClientConfig,
    hub: HubConfig,
    rounds: int,
    engine: Engine | None,
    rng: np.random.Generator,
) -> QkdSessionResult:
    """Both clients load into the same hub, and a local Bell measurement reveals their parity."""
    return _session(clientA, clientB, hub, rounds, engine, rng, _local)


def mdi_qkd_two_hub(
    clientA: ClientConfig,
    clientB: ClientConfig,
    hub: HubConfig,
    inter_hub_link: Link,
    link_source: LinkSource,
    rounds: int,
    engine: Engine | None,
    rng: np.random.Generator,
    *,
    constants: TopologyConstants = TopologyConstants(),
    timing: LinkTiming = LinkTiming(),
    max_link_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> QkdSessionResult:
    """Clients load into different hubs; the Bell measurement uses a teleported CNOT over a heralded pair.

    Client sampling draws from ``rng`` exactly as the single-hub session does;
    the inter-hub link uses a child stream spawned from it.
    """
    link_rng = rng.spawn(1)[0]

    def supply(t):
        try:
            pair, _, elapsed = run_link_until_success(
                inter_hub_link, link_source, None, link_rng,
                constants=constants, timing=timing, max_attempts=max_link_attempts, start_ns=t,
            )
        except LinkTimeoutError:
            return False, None, 0.0
        pair.consume()
        return True, tuple(float(c) for c in pair.coeffs), elapsed

    return _session(clientA, clientB, hub, rounds, engine, rng, supply)


# --- connectivity -------------------------------------------------------------------------

CONNECTIVITIES = ("all_to_all", "planar")


@dataclass(frozen=True)
class ConnectivityReport:
    depth: int
    total_gates: int
    est_fidelity: float
    interconnects_used: int
    n: int = 0
    interconnects: int = 0
    connectivity: str = "all_to_all"

    def __post_init__(self):
        if self.n and self.interconnects and self.depth < math.ceil(self.n / self.interconnects):
            raise ValueError("depth below the serialisation bound")


def swap_chain_gate_count(distance: int) -> int:
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return 0 if distance == 0 else 6 * (distance - 1) + 1


def swap_chain_gates(distance: int) -> list[GateSpec]:
    """CNOT-only circuit for CNOT(0, distance) on a line: swap in, act, swap back."""
    if distance < 1:
        raise ValueError("distance must be at least 1")

    def swap(i, j):
        return [GateSpec("CNOT", (i, j)), GateSpec("CNOT", (j, i)), GateSpec("CNOT", (i, j))]

    there = [g for i in range(distance - 1) for g in swap(i, i + 1)]
    back = [g for i in reversed(range(distance - 1)) for g in swap(i, i + 1)]
    return there + [GateSpec("CNOT", (distance - 1, distance))] + back


def swap_chain_fidelity(distance: int, gate_fidelity: float) -> float:
    if not 0.0 < gate_fidelity <= 1.0:
        raise ValueError("gate fidelity must lie in (0, 1]")
    return gate_fidelity ** swap_chain_gate_count(distance)


def _port_positions(n: int, c: int) -> list[int]:
    return [min(n - 1, int((i + 0.5) * n / c)) for i in range(c)]


def transversal_depth(
    n: int, c: int, intra_module_connectivity: str = "all_to_all", gate_fidelity: float = 1.0
) -> ConnectivityReport:
    """Depth of a transversal CNOT between two ``n``-qubit blocks joined by ``c`` interconnects.

    With planar modules the data sit on a line, each qubit is routed to its
    nearest port by nearest-neighbour swaps, and each port serves its queue
    serially. Depth is counted in two-qubit gate layers.
    """
    if n < 1 or c < 1:
        raise ValueError("n and c must be at least 1")
    if intra_module_connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}")
    if not 0.0 < gate_fidelity <= 1.0:
        raise ValueError("gate fidelity must lie in (0, 1]")
    used = min(n, c)
    if intra_module_connectivity == "all_to_all":
        depth, gates = math.ceil(n / c), n
    else:
        ports = _port_positions(n, used)
        load = [0] * used
        for q in range(n):
            k = min(range(used), key=lambda i: (abs(ports[i] - q), i))
            load[k] += swap_chain_gate_count(abs(ports[k] - q) + 1)
        depth, gates = max(load), sum(load)
    return ConnectivityReport(depth, gates, gate_fidelity**gates, used, n, c, intra_module_connectivity)


@dataclass(frozen=True)
class OverheadReport:
    surface_per_logical: float
    qldpc_per_logical: float
    ratio: float


def overhead_compare(surface_phys_per_logical: int, qldpc_n: int, qldpc_k: int) -> OverheadReport:
    if min(surface_phys_per_logical, qldpc_n, qldpc_k) < 1:
        raise ValueError("all inputs must be positive integers")
    qldpc = qldpc_n / qldpc_k
    return OverheadReport(float(surface_phys_per_logical), qldpc, surface_phys_per_logical / qldpc)


def format_table(reports: Sequence[ConnectivityReport]) -> str:
    """Render reports as an aligned plain-text table."""
    header = ("n", "c", "connectivity", "depth", "gates", "est_fidelity", "ports_used")
    rows = [
        (str(r.n), str(r.interconnects), r.connectivity, str(r.depth), str(r.total_gates),
         f"{r.est_fidelity:.6g}", str(r.interconnects_used))
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)
