"""Dense density-matrix engine for small registers (at most 10 qubits).

Qubit ordering: index 0 is the most significant bit of the basis label, so
``new_basis_state(3, "100")`` puts qubit 0 in ``|1>``. Every function returns a
new :class:`DensityMatrix`; inputs are never modified.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 10

ATOL_EXACT = 1e-12
ATOL_EIGEN = 1e-10


class CapacityError(ValueError):
    """Raised when a register size falls outside 1..MAX_QUBITS."""


def _check_capacity(num_qubits: int) -> None:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise CapacityError(f"num_qubits must be in 1..{MAX_QUBITS}, got {num_qubits}")


class DensityMatrix:
    """A density operator over ``num_qubits`` qubits.

    The underlying array is marked read-only; operations build new objects.
    """

    __slots__ = ("num_qubits", "data")

    def __init__(self, data: np.ndarray, num_qubits: int | None = None):
        data = np.array(data, dtype=complex)
        dim = data.shape[0]
        if data.ndim != 2 or data.shape[1] != dim:
            raise ValueError(f"expected a square matrix, got shape {data.shape}")
        n = int(round(np.log2(dim))) if dim > 0 else 0
        if 2**n != dim:
            raise ValueError(f"dimension {dim} is not a power of two")
        if num_qubits is not None and num_qubits != n:
            raise ValueError(f"num_qubits={num_qubits} does not match dimension {dim}")
        _check_capacity(n)
        data.setflags(write=False)
        self.num_qubits = n
        self.data = data

    @classmethod
    def from_vector(cls, psi: Sequence[complex]) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def probabilities(self) -> np.ndarray:
        """Diagonal of the matrix: computational-basis outcome probabilities."""
        return np.clip(np.real(np.diag(self.data)), 0.0, None)

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.data @ op))

    def __repr__(self) -> str:
        return f"DensityMatrix(num_qubits={self.num_qubits})"


def check_invariants(rho: DensityMatrix, atol: float = ATOL_EXACT, psd_tol: float = ATOL_EIGEN) -> None:
    """Assert Hermiticity, unit trace and positivity; raise ``AssertionError`` otherwise."""
    m = rho.data
    herm = np.max(np.abs(m - m.conj().T))
    if herm > atol:
        raise AssertionError(f"not Hermitian (max deviation {herm:.3e})")
    tr = abs(np.trace(m) - 1.0)
    if tr > atol:
        raise AssertionError(f"trace deviates from 1 by {tr:.3e}")
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2).min()
    if lam < -psd_tol:
        raise AssertionError(f"negative eigenvalue {lam:.3e}")


def new_basis_state(num_qubits: int, bitstring: str | Sequence[int]) -> DensityMatrix:
    _check_capacity(num_qubits)
    bits = [int(b) for b in bitstring]
    if len(bits) != num_qubits or any(b not in (0, 1) for b in bits):
        raise ValueError(f"bitstring {bitstring!r} is not {num_qubits} bits")
    index = int("".join(map(str, bits)), 2)
    data = np.zeros((2**num_qubits, 2**num_qubits), dtype=complex)
    data[index, index] = 1.0
    return DensityMatrix(data)


def maximally_mixed(num_qubits: int) -> DensityMatrix:
    _check_capacity(num_qubits)
    d = 2**num_qubits
    return DensityMatrix(np.eye(d, dtype=complex) / d)


def tensor(*states: DensityMatrix) -> DensityMatrix:
    """Kronecker product; the first argument occupies the lowest qubit indices."""
    out = np.array([[1.0 + 0j]])
    for s in states:
        out = np.kron(out, s.data)
    return DensityMatrix(out)


# --- gates -----------------------------------------------------------------

_S2 = 1 / np.sqrt(2)
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_FIXED = {
    **{k: v for k, v in _PAULI.items() if k != "I"},
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}
_ROTATIONS = {"RX", "RY", "RZ"}
_ARITY = {"X": 1, "Y": 1, "Z": 1, "H": 1, "S": 1, "RX": 1, "RY": 1, "RZ": 1, "CNOT": 2, "SWAP": 2, "CZ": 2}
_SELF_INVERSE = {"X", "Y", "Z", "H", "CNOT", "SWAP", "CZ"}


def pauli(label: str) -> np.ndarray:
    """Matrix for a Pauli string such as ``"XZ"`` (qubit 0 first)."""
    out = np.array([[1.0 + 0j]])
    for ch in label:
        out = np.kron(out, _PAULI[ch])
    return out


@dataclass(frozen=True)
class GateSpec:
    """A named gate acting on ``targets``; for CNOT the first target is the control."""

    kind: str
    targets: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if kind not in _ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        if len(self.targets) != _ARITY[kind]:
            raise ValueError(f"{kind} acts on {_ARITY[kind]} qubit(s), got targets {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"gate targets must be distinct, got {self.targets}")
        if (kind in _ROTATIONS) != (self.theta is not None):
            raise ValueError(f"theta is required for rotations and only for rotations ({kind})")

    def matrix(self) -> np.ndarray:
        if self.kind in _ROTATIONS:
            return _rotation(self.kind, float(self.theta))
        return _FIXED[self.kind]

    def inverse(self) -> "GateSpec":
        """The inverse gate, up to a global phase (S inverts to RZ(-pi/2))."""
        if self.kind in _SELF_INVERSE:
            return self
        if self.kind == "S":
            return GateSpec("RZ", self.targets, -np.pi / 2)
        return GateSpec(self.kind, self.targets, -float(self.theta))


def _rotation(kind: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[np.exp(-1j * theta / 2), 0], [0, np.exp(1j * theta / 2)]])


def _check_targets(n: int, targets: Iterable[int]) -> tuple[int, ...]:
    targets = tuple(targets)
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit index {t} out of range for {n}-qubit state")
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets must be distinct, got {targets}")
    return targets


def _left(t: np.ndarray, op: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Contract ``op`` (2^k x 2^k) into tensor axes ``axes``."""
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    out = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _sandwich(data: np.ndarray, n: int, left: np.ndarray, targets: tuple[int, ...], right: np.ndarray | None = None) -> np.ndarray:
    """Return ``L rho R^dagger`` restricted to ``targets``; ``R`` defaults to ``L``."""
    right = left if right is None else right
    t = data.reshape((2,) * (2 * n))
    t = _left(t, left, targets)
    t = _left(t, right.conj(), tuple(n + q for q in targets))
    return t.reshape(2**n, 2**n)


def apply_unitary(rho: DensityMatrix, u: np.ndarray, targets: Sequence[int]) -> DensityMatrix:
    targets = _check_targets(rho.num_qubits, targets)
    if u.shape != (2 ** len(targets),) * 2:
        raise ValueError(f"operator shape {u.shape} does not match {len(targets)} target(s)")
    return DensityMatrix(_sandwich(rho.data, rho.num_qubits, u, targets))


def apply_gate(rho: DensityMatrix, g: GateSpec) -> DensityMatrix:
    return apply_unitary(rho, g.matrix(), g.targets)


def apply_kraus(rho: DensityMatrix, kraus: Sequence[np.ndarray], targets: Sequence[int]) -> DensityMatrix:
    targets = _check_targets(rho.num_qubits, targets)
    out = np.zeros_like(rho.data)
    for k in kraus:
        out = out + _sandwich(rho.data, rho.num_qubits, k, targets)
    return DensityMatrix(out)


# --- noise -----------------------------------------------------------------

CHANNEL_KINDS = ("depolarizing", "dephasing", "amplitude_damping", "bit_flip")


@dataclass(frozen=True)
class NoiseChannel:
    """Single-qubit noise.

    ``dephasing`` is a phase flip with probability ``p`` (off-diagonals scale
    by ``1 - 2p``); ``depolarizing`` maps to ``(1-p) rho + p I/2``.
    """

    kind: str
    p: float
    target: int = 0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"channel probability must be in [0, 1], got {self.p}")

    def kraus(self) -> list[np.ndarray]:
        return list(_kraus(self.kind, float(self.p)))


@lru_cache(maxsize=256)
def _kraus(kind: str, p: float) -> tuple[np.ndarray, ...]:
    i, x, y, z = (_PAULI[k] for k in "IXYZ")
    if kind == "depolarizing":
        return (np.sqrt(1 - 3 * p / 4) * i, np.sqrt(p / 4) * x, np.sqrt(p / 4) * y, np.sqrt(p / 4) * z)
    if kind == "dephasing":
        return (np.sqrt(1 - p) * i, np.sqrt(p) * z)
    if kind == "bit_flip":
        return (np.sqrt(1 - p) * i, np.sqrt(p) * x)
    return (
        np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
        np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
    )


def apply_channel(rho: DensityMatrix, ch: NoiseChannel) -> DensityMatrix:
    return apply_kraus(rho, ch.kraus(), (ch.target,))


# --- measurement -------------------------------------------------------------

_BASIS_VECTORS = {
    "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
    "X": (np.array([_S2, _S2], dtype=complex), np.array([_S2, -_S2], dtype=complex)),
    "Y": (np.array([_S2, 1j * _S2]), np.array([_S2, -1j * _S2])),
}


def project_qubit(rho: DensityMatrix, q: int, outcome: int, basis: str = "Z") -> tuple[float, DensityMatrix | None]:
    """Born probability of ``outcome`` and the renormalised post-measurement state.

    The state is ``None`` when the outcome has zero probability.
    """
    (q,) = _check_targets(rho.num_qubits, (q,))
    v = _BASIS_VECTORS[basis.upper()][outcome]
    proj = np.outer(v, v.conj())
    unnorm = _sandwich(rho.data, rho.num_qubits, proj, (q,))
    prob = float(np.real(np.trace(unnorm)))
    if prob <= 0.0:
        return 0.0, None
    post = unnorm / prob
    return prob, DensityMatrix((post + post.conj().T) / 2)


def measure_qubit(rho: DensityMatrix, q: int, basis: str, rng: np.random.Generator) -> tuple[int, DensityMatrix, float]:
    """Sample a projective measurement of qubit ``q``.

    Returns ``(outcome, post_state, prob)`` where ``prob`` is the Born
    probability of the sampled outcome.
    """
    p0, post0 = project_qubit(rho, q, 0, basis)
    if rng.random() < p0:
        return 0, post0, p0
    p1, post1 = project_qubit(rho, q, 1, basis)
    if post1 is None:  # p0 rounded to exactly 1
        return 0, post0, p0
    return 1, post1, p1


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on ``keep``, in ascending qubit order."""
    keep = sorted(set(_check_targets(rho.num_qubits, tuple(keep))))
    if not keep:
        raise ValueError("keep set must be non-empty")
    n = rho.num_qubits
    if len(keep) == n:
        return rho
    drop = [q for q in range(n) if q not in keep]
    t = rho.data.reshape((2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] for i in range(n)]
    for q in drop:
        col[q] = row[q]
    out = "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = 2 ** len(keep)
    return DensityMatrix(reduced.reshape(d, d))


def _clip_spectrum(w: np.ndarray) -> np.ndarray:
    # rounding-level eigenvalues of singular inputs would otherwise leak ~1e-8 through sqrt
    w = np.where(w < _SPECTRUM_FLOOR * max(float(w.max()), 1.0), 0.0, w)
    return w


_SPECTRUM_FLOOR = 1e-14


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(_clip_spectrum(w))) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    if rho.num_qubits != sigma.num_qubits:
        raise ValueError(f"dimension mismatch: {rho.num_qubits} vs {sigma.num_qubits} qubits")
    s = _psd_sqrt(rho.data)
    m = s @ sigma.data @ s
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)
    f = float(np.sum(np.sqrt(_clip_spectrum(lam))) ** 2)
    return min(max(f, 0.0), 1.0)


# --- Bell states -------------------------------------------------------------

BELL_LABELS = ("phi+", "psi+", "psi-", "phi-")


def bell_vector(label: str) -> np.ndarray:
    vecs = {
        "phi+": [1, 0, 0, 1],
        "phi-": [1, 0, 0, -1],
        "psi+": [0, 1, 1, 0],
        "psi-": [0, 1, -1, 0],
    }
    return np.array(vecs[label], dtype=complex) * _S2


def bell_state(label: str = "phi+") -> DensityMatrix:
    return DensityMatrix.from_vector(bell_vector(label))
