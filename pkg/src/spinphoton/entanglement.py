"""Bell-pair bookkeeping: Bell-diagonal algebra, swapping, distillation, teleported CNOT.

A :class:`BellDiagonalPair` stores four probabilities ``(pI, pX, pY, pZ)``: the
weight of each Pauli error applied to the first half of ``|Phi+>``. Pauli
errors compose by XOR of their ``(x, z)`` bits, so every operation here maps
Bell-diagonal inputs to Bell-diagonal outputs in closed form. The
density-matrix circuits in this module (``*_circuit`` functions) are the
reference route used to check those closed forms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qstate
from .qstate import DensityMatrix, GateSpec, NoiseChannel

PAULI_LABELS = ("I", "X", "Y", "Z")
# (x, z) bits of each Pauli in PAULI_LABELS order
_XZ = ((0, 0), (1, 0), (1, 1), (0, 1))
_FROM_XZ = {xz: k for k, xz in enumerate(_XZ)}
_PRODUCT = np.array([[_FROM_XZ[(_XZ[i][0] ^ _XZ[j][0], _XZ[i][1] ^ _XZ[j][1])] for j in range(4)] for i in range(4)])

Endpoint = tuple[str, int]


class ConsumedPairError(RuntimeError):
    """A Bell pair was used after it had already been consumed."""


class SlotCollisionError(ValueError):
    pass


def _normalise(coeffs: Sequence[float]) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float).reshape(4)
    if np.any(c < -1e-12):
        raise ValueError(f"Bell coefficients must be non-negative, got {c}")
    c = np.clip(c, 0.0, None)
    total = c.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"Bell coefficients must sum to 1, got {total}")
    return c / total


@dataclass(eq=False)
class BellDiagonalPair:
    """A shared two-qubit entangled resource."""

    coeffs: np.ndarray
    endpoints: tuple[Endpoint, Endpoint] = (("a", 0), ("b", 0))
    created_at_ns: float = 0.0
    consumed: bool = False

    def __post_init__(self):
        self.coeffs = _normalise(self.coeffs)
        self.endpoints = (tuple(self.endpoints[0]), tuple(self.endpoints[1]))

    @classmethod
    def werner(cls, fidelity: float, **kwargs) -> "BellDiagonalPair":
        e = (1.0 - fidelity) / 3.0
        return cls(np.array([fidelity, e, e, e]), **kwargs)

    @property
    def fidelity(self) -> float:
        return float(self.coeffs[0])

    @property
    def nodes(self) -> tuple[str, str]:
        return self.endpoints[0][0], self.endpoints[1][0]

    def consume(self) -> None:
        if self.consumed:
            raise ConsumedPairError(f"pair {self.endpoints} has already been consumed")
        self.consumed = True

    def to_density_matrix(self) -> DensityMatrix:
        return pair_density_matrix(self.coeffs)


# --- Bell basis <-> density matrices -----------------------------------------------

def _bell_basis() -> np.ndarray:
    phi = qstate.bell_vector("phi+")
    cols = [np.kron(qstate.pauli(p), np.eye(2)) @ phi for p in PAULI_LABELS]
    return np.stack(cols, axis=1)


_BELL_BASIS = _bell_basis()


def pair_density_matrix(coeffs: Sequence[float]) -> DensityMatrix:
    c = np.asarray(coeffs, dtype=float)
    return DensityMatrix((_BELL_BASIS * c) @ _BELL_BASIS.conj().T)


def bell_coefficients(rho: DensityMatrix) -> tuple[np.ndarray, float]:
    """Bell-basis diagonal of a two-qubit state and its largest off-diagonal magnitude."""
    m = _BELL_BASIS.conj().T @ rho.data @ _BELL_BASIS
    diag = np.real(np.diag(m)).copy()
    off = float(np.max(np.abs(m - np.diag(np.diag(m)))))
    return diag, off


# --- closed forms --------------------------------------------------------------------

def compose_errors(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Distribution of the product of two independent Pauli errors."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = np.zeros(4)
    np.add.at(out, _PRODUCT, np.outer(a, b))
    return out


def werner_swap_fidelity(fa: float, fb: float) -> float:
    wa, wb = (4 * fa - 1) / 3, (4 * fb - 1) / 3
    return (1 + 3 * wa * wb) / 4


def dephase_coeffs(coeffs: Sequence[float], flip_prob: float) -> np.ndarray:
    """Apply a phase flip with probability ``flip_prob`` to one half of the pair."""
    c = np.asarray(coeffs, float)
    return (1 - flip_prob) * c + flip_prob * c[[3, 2, 1, 0]]


def depolarize_coeffs(coeffs: Sequence[float], p: float) -> np.ndarray:
    c = np.asarray(coeffs, float)
    return (1 - p) * c + p / 4


def dejmps_rotate(coeffs: Sequence[float]) -> np.ndarray:
    """Coefficients after ``Rx(pi/2)`` on side A and ``Rx(-pi/2)`` on side B (Y and Z swap)."""
    c = np.asarray(coeffs, float)
    return c[[0, 1, 3, 2]]


def bbpssw_closed_form(a: Sequence[float], b: Sequence[float], dejmps: bool = False) -> tuple[float, np.ndarray]:
    """Success probability and output coefficients of one recurrence step.

    Pair ``a`` is kept (CNOT controls), pair ``b`` is measured in Z on both
    sides. X errors propagate from a to b and are detected on parity
    mismatch; Z errors propagate from b back to a.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    if dejmps:
        a, b = dejmps_rotate(a), dejmps_rotate(b)
    # group by x bit: x=0 -> (I, Z), x=1 -> (X, Y)
    p_success = (a[0] + a[3]) * (b[0] + b[3]) + (a[1] + a[2]) * (b[1] + b[2])
    out = np.array(
        [
            a[0] * b[0] + a[3] * b[3],
            a[1] * b[1] + a[2] * b[2],
            a[1] * b[2] + a[2] * b[1],
            a[0] * b[3] + a[3] * b[0],
        ]
    )
    if p_success <= 0:
        return 0.0, np.array([0.25, 0.25, 0.25, 0.25])
    return float(p_success), out / p_success


def teleported_cnot_fidelity(coeffs: Sequence[float]) -> float:
    """Average gate fidelity of the one-pair teleported CNOT.

    Pair errors map to Paulis on the data (X -> X on target, Z -> Z on
    control), so the process fidelity equals ``pI``.
    """
    d = 4
    return (d * float(coeffs[0]) + 1) / (d + 1)


# --- operations on pairs ------------------------------------------------------------

def _check_unconsumed(*pairs: BellDiagonalPair) -> None:
    for p in pairs:
        if p.consumed:
            raise ConsumedPairError(f"pair {p.endpoints} has already been consumed")


def swap_entanglement(ab: BellDiagonalPair, bc: BellDiagonalPair) -> BellDiagonalPair:
    """Bell measurement at the shared node; returns the outer pair and consumes both inputs."""
    _check_unconsumed(ab, bc)
    shared = set(ab.nodes) & set(bc.nodes)
    if len(shared) != 1 or ab.nodes[0] == ab.nodes[1] or bc.nodes[0] == bc.nodes[1]:
        raise ValueError(f"pairs {ab.nodes} and {bc.nodes} must share exactly one node")
    (mid,) = shared
    outer_a = ab.endpoints[0] if ab.endpoints[1][0] == mid else ab.endpoints[1]
    outer_c = bc.endpoints[1] if bc.endpoints[0][0] == mid else bc.endpoints[0]
    ab.consume()
    bc.consume()
    return BellDiagonalPair(
        compose_errors(ab.coeffs, bc.coeffs),
        (outer_a, outer_c),
        created_at_ns=max(ab.created_at_ns, bc.created_at_ns),
    )


def distill_bbpssw(
    a: BellDiagonalPair, b: BellDiagonalPair, rng: np.random.Generator, dejmps: bool = False
) -> BellDiagonalPair | None:
    """One recurrence step on two pairs between the same nodes; both inputs are consumed."""
    _check_unconsumed(a, b)
    if sorted(a.nodes) != sorted(b.nodes):
        raise ValueError(f"distillation needs pairs between the same nodes, got {a.nodes} and {b.nodes}")
    p, out = bbpssw_closed_form(a.coeffs, b.coeffs, dejmps)
    a.consume()
    b.consume()
    if rng.random() >= p:
        return None
    return BellDiagonalPair(out, a.endpoints, created_at_ns=max(a.created_at_ns, b.created_at_ns))


def tiered_distill(
    pairs: Sequence[BellDiagonalPair], levels: int, rng: np.random.Generator, dejmps: bool = False
) -> BellDiagonalPair | None:
    """Pairwise tournament over ``levels`` rounds using the first ``2**levels`` pairs.

    Stops at the first failed round; pairs that took part are consumed.
    """
    need = 2**levels
    if levels < 0 or len(pairs) < need:
        raise ValueError(f"{levels} level(s) need {need} pairs, got {len(pairs)}")
    current = list(pairs[:need])
    if levels == 0:
        return current[0]
    ends = sorted(current[0].nodes)
    for p in current:
        if sorted(p.nodes) != ends:
            raise ValueError("all pairs must share the same endpoints")
    for _ in range(levels):
        survivors = []
        for kept, sacrificed in zip(current[::2], current[1::2]):
            out = distill_bbpssw(kept, sacrificed, rng, dejmps)
            if out is None:
                return None
            survivors.append(out)
        current = survivors
    return current[0]


# --- spin registers and memory ------------------------------------------------------

ELECTRON_SLOT = 0


@dataclass
class SpinRegister:
    """One electron (slot 0) and up to three nuclear spins (slots 1..3)."""

    node_id: str
    per_attempt_dephasing: float
    t2_electron_ms: float = 2.1
    t2_nuclear_s: float = 1.1
    t1_nuclear_s: float = math.inf
    num_nuclei: int = 3
    memory: dict[int, DensityMatrix] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.num_nuclei <= 3:
            raise ValueError("a register holds at most three nuclear spins")
        if not 0.0 <= self.per_attempt_dephasing <= 1.0:
            raise ValueError("per_attempt_dephasing must be in [0, 1]")
        if min(self.t2_electron_ms, self.t2_nuclear_s, self.t1_nuclear_s) < 0:
            raise ValueError("coherence times must be non-negative")

    @property
    def nuclear_slots(self) -> tuple[int, ...]:
        return tuple(range(1, self.num_nuclei + 1))

    def free_nuclear_slot(self) -> int | None:
        for s in self.nuclear_slots:
            if s not in self.memory:
                return s
        return None

    def store(self, slot: int, state: DensityMatrix) -> None:
        if slot != ELECTRON_SLOT and slot not in self.nuclear_slots:
            raise IndexError(f"register {self.node_id} has no slot {slot}")
        if state.num_qubits != 1:
            raise ValueError("register slots hold single-qubit states")
        self.memory[slot] = state


def _t1_t2_kraus_params(t_ns: float, t1_ns: float, t2_ns: float) -> tuple[float, float]:
    gamma = 0.0 if math.isinf(t1_ns) else 1.0 - math.exp(-t_ns / t1_ns)
    target = 0.0 if t2_ns == 0 else math.exp(-t_ns / t2_ns)
    residual = target / math.sqrt(1.0 - gamma) if gamma < 1 else 0.0
    return gamma, (1.0 - min(residual, 1.0)) / 2.0


def apply_memory_decay(reg: SpinRegister, attempts: int, elapsed_ns: float = 0.0) -> None:
    """Degrade stored states for ``attempts`` entanglement attempts and ``elapsed_ns`` of storage.

    Each attempt fully scrambles a nuclear phase with probability ``eps``, so
    off-diagonals shrink by ``(1 - eps)**attempts``.
    """
    if attempts < 0:
        raise ValueError(f"attempts must be non-negative, got {attempts}")
    if elapsed_ns < 0:
        raise ValueError("elapsed time must be non-negative")
    scrambled = 1.0 - (1.0 - reg.per_attempt_dephasing) ** attempts
    for slot, state in list(reg.memory.items()):
        if slot == ELECTRON_SLOT:
            t1, t2 = math.inf, reg.t2_electron_ms * 1e6
        else:
            t1, t2 = reg.t1_nuclear_s * 1e9, reg.t2_nuclear_s * 1e9
            if scrambled > 0:
                state = qstate.apply_channel(state, NoiseChannel("dephasing", scrambled / 2))
        if elapsed_ns > 0:
            gamma, flip = _t1_t2_kraus_params(elapsed_ns, t1, t2)
            if gamma > 0:
                state = qstate.apply_channel(state, NoiseChannel("amplitude_damping", gamma))
            if flip > 0:
                state = qstate.apply_channel(state, NoiseChannel("dephasing", flip))
        reg.memory[slot] = state


# --- teleported CNOT -----------------------------------------------------------------

@dataclass(frozen=True)
class GateFidelityReport:
    avg_gate_fidelity: float
    process_matrix_diagnostic: np.ndarray | None = None

    def __post_init__(self):
        if not -1e-12 <= self.avg_gate_fidelity <= 1 + 1e-12:
            raise ValueError(f"fidelity out of range: {self.avg_gate_fidelity}")


_CNOT = GateSpec("CNOT", (0, 1)).matrix()


def teleported_cnot_circuit(data: DensityMatrix, pair_coeffs: Sequence[float]) -> DensityMatrix:
    """Run the one-pair CNOT teleportation on a two-qubit (control, target) state.

    Qubits: 0 control, 1 target, 2 electron at the control node, 3 electron
    at the target node. Both measurement branches are enumerated with their
    Born weights, so the returned state is the exact channel output.
    """
    rho = qstate.tensor(data, pair_density_matrix(pair_coeffs))
    rho = qstate.apply_gate(rho, GateSpec("CNOT", (0, 2)))
    out = np.zeros((4, 4), dtype=complex)
    for m1 in (0, 1):
        p1, r1 = qstate.project_qubit(rho, 2, m1, "Z")
        if r1 is None:
            continue
        if m1:
            r1 = qstate.apply_gate(r1, GateSpec("X", (3,)))
        r1 = qstate.apply_gate(r1, GateSpec("CNOT", (3, 1)))
        for m2 in (0, 1):
            p2, r2 = qstate.project_qubit(r1, 3, m2, "X")
            if r2 is None:
                continue
            if m2:
                r2 = qstate.apply_gate(r2, GateSpec("Z", (0,)))
            out += p1 * p2 * qstate.partial_trace(r2, [0, 1]).data
    return DensityMatrix(out)


def _pauli_labels_2q() -> list[str]:
    return ["".join(p) for p in itertools.product(PAULI_LABELS, repeat=2)]


def pauli_transfer_matrix(channel, unitary: np.ndarray | None = None) -> np.ndarray:
    """PTM ``R[i, j] = tr(P_i E(P_j)) / 4`` of a two-qubit channel.

    ``channel`` maps DensityMatrix to DensityMatrix. Non-physical Pauli inputs
    are reached by linearity: ``P = 2 * ((I + P)/4 - (I - P)/4)``. When
    ``unitary`` is given, the ideal ``U^dagger`` is applied after the channel.
    """
    labels = _pauli_labels_2q()
    mats = [qstate.pauli(l) for l in labels]
    eye = np.eye(4)
    outputs = []
    for lab, p in zip(labels, mats):
        if lab == "II":
            e = 4 * channel(DensityMatrix(eye / 4)).data
        else:
            plus = channel(DensityMatrix((eye + p) / 4)).data
            minus = channel(DensityMatrix((eye - p) / 4)).data
            e = 2 * (plus - minus)
        if unitary is not None:
            e = unitary.conj().T @ e @ unitary
        outputs.append(e)
    return np.array([[np.real(np.trace(pi @ e)) / 4 for e in outputs] for pi in mats])


def circuit_gate_fidelity(pair_coeffs: Sequence[float]) -> tuple[float, np.ndarray]:
    """Average gate fidelity of the simulated teleported CNOT against the ideal CNOT."""
    ptm = pauli_transfer_matrix(lambda r: teleported_cnot_circuit(r, pair_coeffs), unitary=_CNOT)
    d = 4
    f_pro = np.trace(ptm) / d**2
    return float((d * f_pro + 1) / (d + 1)), ptm


def teleported_cnot(
    bp: BellDiagonalPair,
    control: tuple[SpinRegister, int],
    target: tuple[SpinRegister, int],
    oracle: bool = False,
) -> GateFidelityReport:
    """Consume ``bp`` to apply CNOT from ``control`` to ``target`` nuclear slots.

    With ``oracle=True`` the fidelity comes from the density-matrix circuit
    and the Pauli transfer matrix is attached as a diagnostic.
    """
    _check_unconsumed(bp)
    (creg, cslot), (treg, tslot) = control, target
    used = set(bp.endpoints)
    for reg, slot in (control, target):
        if slot == ELECTRON_SLOT or (reg.node_id, slot) in used:
            raise SlotCollisionError(f"slot {slot} on {reg.node_id} is held by the Bell pair's electron")
        if slot not in reg.nuclear_slots:
            raise SlotCollisionError(f"register {reg.node_id} has no nuclear slot {slot}")
    if creg is treg and cslot == tslot:
        raise SlotCollisionError("control and target must differ")
    bp.consume()
    if oracle:
        f, ptm = circuit_gate_fidelity(bp.coeffs)
        return GateFidelityReport(min(max(f, 0.0), 1.0), ptm)
    return GateFidelityReport(teleported_cnot_fidelity(bp.coeffs))


# --- reference circuits for swapping and distillation ---------------------------------

def swap_circuit(a: Sequence[float], b: Sequence[float]) -> DensityMatrix:
    """Bell measurement on qubits 1, 2 of ``pair_a (0,1) x pair_b (2,3)``; returns state of (0, 3)."""
    rho = qstate.tensor(pair_density_matrix(a), pair_density_matrix(b))
    rho = qstate.apply_gate(rho, GateSpec("CNOT", (1, 2)))
    rho = qstate.apply_gate(rho, GateSpec("H", (1,)))
    out = np.zeros((4, 4), dtype=complex)
    for m1, m2 in itertools.product((0, 1), repeat=2):
        p1, r = qstate.project_qubit(rho, 1, m1)
        if r is None:
            continue
        p2, r = qstate.project_qubit(r, 2, m2)
        if r is None:
            continue
        if m2:
            r = qstate.apply_gate(r, GateSpec("X", (3,)))
        if m1:
            r = qstate.apply_gate(r, GateSpec("Z", (3,)))
        out += p1 * p2 * qstate.partial_trace(r, [0, 3]).data
    return DensityMatrix(out)


def distill_circuit(a: Sequence[float], b: Sequence[float], dejmps: bool = False) -> tuple[float, DensityMatrix | None]:
    """Recurrence on ``pair_a (A1=0, B1=1) x pair_b (A2=2, B2=3)``.

    Returns the probability of parity agreement and the kept pair's state.
    """
    rho = qstate.tensor(pair_density_matrix(a), pair_density_matrix(b))
    if dejmps:
        for q, sign in ((0, 1), (1, -1), (2, 1), (3, -1)):
            rho = qstate.apply_gate(rho, GateSpec("RX", (q,), sign * np.pi / 2))
    rho = qstate.apply_gate(rho, GateSpec("CNOT", (0, 2)))
    rho = qstate.apply_gate(rho, GateSpec("CNOT", (1, 3)))
    kept = np.zeros((4, 4), dtype=complex)
    total = 0.0
    for m in (0, 1):
        p1, r = qstate.project_qubit(rho, 2, m)
        if r is None:
            continue
        p2, r = qstate.project_qubit(r, 3, m)
        if r is None:
            continue
        total += p1 * p2
        kept += p1 * p2 * qstate.partial_trace(r, [0, 1]).data
    if total <= 0:
        return 0.0, None
    return total, DensityMatrix(kept / total)
