"""Spin-photon emission, two-photon interference and Barrett-Kok heralding.

Units: times in ns, rates and detunings in MHz. Dephasing rates are decay
rates (1/us); detunings are ordinary frequencies and enter phases as
``2*pi*Delta``.

Every attempt consumes a fixed row of :data:`UNIFORMS_PER_ATTEMPT` uniforms
from the caller's generator. Because ``rng.random((n, k))`` fills row by row,
``n`` single attempts and one batch of ``n`` attempts see the same numbers,
which keeps single-shot and batched paths in lock-step under a shared seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri

from .entanglement import BellDiagonalPair, depolarize_coeffs

BARE_LIFETIME_NS = 940.0
DEFAULT_PURCELL = 20.0
LINEWIDTH_FACTOR = 5.0

UNIFORMS_PER_ATTEMPT = 27
_CHUNK = 100_000


@dataclass(frozen=True)
class EmitterParams:
    """Optical properties of one spin-photon interface.

    ``dephasing_rate_mhz=None`` selects the pure-dephasing rate that makes the
    total linewidth ``LINEWIDTH_FACTOR`` times the lifetime limit.
    """

    bare_lifetime_ns: float = BARE_LIFETIME_NS
    purcell_factor: float = DEFAULT_PURCELL
    dephasing_rate_mhz: float | None = None
    detuning_mhz: float = 0.0
    efficiency: float = 1.0
    cyclicity: float = 1.0
    spectral_diffusion_mhz: float = 0.0

    def __post_init__(self):
        if self.bare_lifetime_ns <= 0:
            raise ValueError("bare_lifetime_ns must be positive")
        if self.purcell_factor < 1:
            raise ValueError("purcell_factor must be >= 1")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not 0.0 < self.cyclicity <= 1.0:
            raise ValueError(f"cyclicity must be in (0, 1], got {self.cyclicity}")
        if self.dephasing_rate_mhz is not None and self.dephasing_rate_mhz < 0:
            raise ValueError("dephasing_rate_mhz must be non-negative")
        if self.spectral_diffusion_mhz < 0:
            raise ValueError("spectral_diffusion_mhz must be non-negative")

    @property
    def lifetime_ns(self) -> float:
        return self.bare_lifetime_ns / self.purcell_factor

    @property
    def gamma_mhz(self) -> float:
        if self.dephasing_rate_mhz is not None:
            return self.dephasing_rate_mhz
        # linewidth 1/tau + 2*gamma = LINEWIDTH_FACTOR/tau
        return (LINEWIDTH_FACTOR - 1) / (2 * self.lifetime_ns) * 1e3

    @classmethod
    def ideal(cls, **kwargs) -> "EmitterParams":
        """Lifetime-limited emitter with no dephasing."""
        kwargs.setdefault("dephasing_rate_mhz", 0.0)
        return cls(**kwargs)


@dataclass(frozen=True)
class HeraldConfig:
    dt_max_ns: float
    window_ns: float
    dark_count_rate_hz: float = 0.0
    depolarizing_floor: float = 0.0

    def __post_init__(self):
        if self.dt_max_ns <= 0 or self.window_ns <= 0:
            raise ValueError("dt_max_ns and window_ns must be positive")
        if self.dt_max_ns > self.window_ns:
            raise ValueError(f"dt_max_ns ({self.dt_max_ns}) exceeds window_ns ({self.window_ns})")
        if self.dark_count_rate_hz < 0:
            raise ValueError("dark_count_rate_hz must be non-negative")
        if not 0.0 <= self.depolarizing_floor <= 1.0:
            raise ValueError("depolarizing_floor must be in [0, 1]")


@dataclass
class AttemptOutcome:
    success: bool
    photons_detected: tuple[int, int]
    dt_ns: float | None = None
    heralded_pair: BellDiagonalPair | None = None
    # click pattern: same detector twice heralds psi+, different detectors psi-
    pattern: str | None = None

    def __post_init__(self):
        if self.success:
            assert self.photons_detected == (1, 1), "a herald needs exactly one click per round"
            assert self.dt_ns is not None and self.heralded_pair is not None

    @property
    def heralded_state(self) -> str | None:
        if self.pattern is None:
            return None
        return "psi+" if self.pattern == "same" else "psi-"


# --- interference ------------------------------------------------------------------------

def _visibility(dt_ns, gamma_sum_mhz, detuning_diff_mhz, overlap):
    dt = np.abs(np.asarray(dt_ns, dtype=float))
    decay = np.exp(-gamma_sum_mhz * 1e-3 * dt)
    beat = np.cos(2 * np.pi * detuning_diff_mhz * 1e-3 * np.asarray(dt_ns, dtype=float))
    return overlap * decay * beat


def wavepacket_overlap(a: EmitterParams, b: EmitterParams) -> float:
    ta, tb = a.lifetime_ns, b.lifetime_ns
    return 2 * math.sqrt(ta * tb) / (ta + tb)


def hom_visibility(dt_ns: float, a: EmitterParams, b: EmitterParams) -> float:
    """Two-photon interference visibility conditioned on detection-time difference ``dt_ns``."""
    v = _visibility(dt_ns, a.gamma_mhz + b.gamma_mhz, a.detuning_mhz - b.detuning_mhz, wavepacket_overlap(a, b))
    return float(np.clip(v, -1.0, 1.0))


def herald_fidelity(dt_ns: float, a: EmitterParams, b: EmitterParams) -> float:
    """Fidelity of the heralded pair with its target Bell state: ``(1 + V) / 2``."""
    return min(max((1.0 + hom_visibility(dt_ns, a, b)) / 2.0, 0.0), 1.0)


def heralded_pair(
    dt_ns: float, a: EmitterParams, b: EmitterParams, depolarizing_floor: float = 0.0, **pair_kwargs
) -> BellDiagonalPair:
    """Phase-flip-only pair ``(F, 0, 0, 1-F)`` for a herald at ``dt_ns``."""
    f = herald_fidelity(dt_ns, a, b)
    coeffs = depolarize_coeffs([f, 0.0, 0.0, 1.0 - f], depolarizing_floor)
    return BellDiagonalPair(coeffs, **pair_kwargs)


# --- Barrett-Kok sampling ------------------------------------------------------------------

@dataclass
class AttemptBatch:
    """Vectorised outcome of ``n`` attempts evaluated at the loosest threshold (the window)."""

    heralded: np.ndarray  # exactly one click per round, before the dt cut
    dt_ns: np.ndarray
    coeffs: np.ndarray  # shape (n, 4); false heralds carry a maximally mixed pair
    clicks: np.ndarray  # shape (n, 2)
    same_detector: np.ndarray
    genuine: np.ndarray

    def __len__(self) -> int:
        return len(self.heralded)

    @property
    def fidelity(self) -> np.ndarray:
        return self.coeffs[:, 0]

    def accepted(self, dt_max_ns: float) -> np.ndarray:
        return self.heralded & (np.abs(self.dt_ns) <= dt_max_ns)


def _exp_time(u, tau):
    return -tau * np.log1p(-u)


def evaluate_attempts(a: EmitterParams, b: EmitterParams, h: HeraldConfig, u: np.ndarray) -> AttemptBatch:
    """Turn a ``(n, UNIFORMS_PER_ATTEMPT)`` block of uniforms into attempt outcomes.

    Both spins start in an equal superposition; round 1 excites spin-up,
    the spins are flipped and round 2 repeats. The anti-correlated branches
    emit one photon per round and are the only genuine heralds.
    """
    u = np.atleast_2d(u)
    n = u.shape[0]
    w = h.window_ns
    branch = np.minimum((u[:, 0] * 4).astype(int), 3)  # 0: up-up, 1: down-down, 2: a then b, 3: b then a
    emits = np.zeros((n, 2, 2), dtype=bool)  # [trial, round, emitter]
    emits[:, 0, 0] = (branch == 0) | (branch == 2)
    emits[:, 0, 1] = (branch == 0) | (branch == 3)
    emits[:, 1, 0] = (branch == 1) | (branch == 3)
    emits[:, 1, 1] = (branch == 1) | (branch == 2)

    cyc = np.array([a.cyclicity, b.cyclicity, a.cyclicity, b.cyclicity])
    spins_ok = np.all(u[:, 1:5] < cyc, axis=1)

    eta = np.array([a.efficiency, b.efficiency])
    tau = np.array([a.lifetime_ns, b.lifetime_ns])
    times = np.empty((n, 2, 2))
    detected = np.empty((n, 2, 2), dtype=bool)
    port = np.empty((n, 2, 2), dtype=int)
    for r in range(2):
        for e in range(2):
            times[:, r, e] = _exp_time(u[:, 9 + 2 * r + e], tau[e])
            detected[:, r, e] = emits[:, r, e] & (u[:, 5 + 2 * r + e] < eta[e]) & (times[:, r, e] < w)
            port[:, r, e] = (u[:, 13 + 2 * r + e] >= 0.5).astype(int)

    p_dark = -math.expm1(-h.dark_count_rate_hz * 1e-9 * w)
    dark = u[:, 17:21].reshape(n, 2, 2) < p_dark  # [trial, round, detector]
    dark_t = u[:, 21:25].reshape(n, 2, 2) * w

    fired = np.zeros((n, 2, 2), dtype=bool)  # [trial, round, detector]
    first = np.full((n, 2, 2), np.inf)
    for r in range(2):
        for e in range(2):
            for d in range(2):
                hit = detected[:, r, e] & (port[:, r, e] == d)
                fired[:, r, d] |= hit
                first[:, r, d] = np.where(hit, np.minimum(first[:, r, d], times[:, r, e]), first[:, r, d])
        for d in range(2):
            fired[:, r, d] |= dark[:, r, d]
            first[:, r, d] = np.where(dark[:, r, d], np.minimum(first[:, r, d], dark_t[:, r, d]), first[:, r, d])

    clicks = fired.sum(axis=2)
    heralded = spins_ok & (clicks[:, 0] == 1) & (clicks[:, 1] == 1)
    t_click = np.where(fired, first, 0.0).max(axis=2)  # one detector fired when heralded
    dt = np.where(heralded, t_click[:, 1] - t_click[:, 0], np.nan)
    det_r = np.argmax(fired, axis=2)
    same = det_r[:, 0] == det_r[:, 1]

    genuine = heralded & (branch >= 2) & detected.any(axis=2).all(axis=1)
    da = a.detuning_mhz + a.spectral_diffusion_mhz * ndtri(np.clip(u[:, 25], 1e-300, 1 - 1e-16))
    db = b.detuning_mhz + b.spectral_diffusion_mhz * ndtri(np.clip(u[:, 26], 1e-300, 1 - 1e-16))
    v = _visibility(np.nan_to_num(dt), a.gamma_mhz + b.gamma_mhz, da - db, wavepacket_overlap(a, b))
    f = np.clip((1 + v) / 2, 0.0, 1.0)
    coeffs = np.zeros((n, 4))
    coeffs[:, 0], coeffs[:, 3] = f, 1 - f
    coeffs[~genuine] = 0.25
    coeffs = depolarize_coeffs(coeffs, h.depolarizing_floor)
    return AttemptBatch(heralded, dt, coeffs, clicks, same, genuine)


def _outcome(batch: AttemptBatch, i: int, h: HeraldConfig) -> AttemptOutcome:
    clicks = (int(batch.clicks[i, 0]), int(batch.clicks[i, 1]))
    if not (batch.heralded[i] and abs(batch.dt_ns[i]) <= h.dt_max_ns):
        return AttemptOutcome(False, clicks)
    pair = BellDiagonalPair(batch.coeffs[i])
    return AttemptOutcome(
        True, clicks, float(batch.dt_ns[i]), pair, "same" if batch.same_detector[i] else "different"
    )


def barrett_kok_attempt(a: EmitterParams, b: EmitterParams, h: HeraldConfig, rng: np.random.Generator) -> AttemptOutcome:
    batch = evaluate_attempts(a, b, h, rng.random((1, UNIFORMS_PER_ATTEMPT)))
    return _outcome(batch, 0, h)


def sample_attempts(
    a: EmitterParams, b: EmitterParams, h: HeraldConfig, n: int, rng: np.random.Generator
) -> AttemptBatch:
    """``n`` attempts, drawn in chunks so memory stays bounded."""
    parts = []
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        parts.append(evaluate_attempts(a, b, h, rng.random((m, UNIFORMS_PER_ATTEMPT))))
        done += m
    if len(parts) == 1:
        return parts[0]
    return AttemptBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in AttemptBatch.__dataclass_fields__))


def _accept_fraction(ta: float, tb: float, window: float, dt_max: float) -> float:
    """P(both emissions inside the window and |t_b - t_a| <= dt_max)."""
    def cdf_b(t):
        return -math.expm1(-t / tb)

    def integrand(x):
        return math.exp(-x / ta) / ta * (cdf_b(min(x + dt_max, window)) - cdf_b(max(x - dt_max, 0.0)))

    val, _ = quad(integrand, 0.0, window, points=[min(dt_max, window)], limit=200)
    return val


def attempt_success_probability(a: EmitterParams, b: EmitterParams, h: HeraldConfig | None = None) -> float:
    """Analytic herald probability without dark counts; ``h`` adds the window and time-difference cuts."""
    p = a.efficiency * b.efficiency / 2 * (a.cyclicity * b.cyclicity) ** 2
    if h is not None:
        p *= _accept_fraction(a.lifetime_ns, b.lifetime_ns, h.window_ns, h.dt_max_ns)
    return p


def curve_from_batch(batch: AttemptBatch, thresholds: Sequence[float]) -> list[tuple[float, float, float]]:
    rows = []
    for thr in thresholds:
        ok = batch.accepted(thr)
        k = int(ok.sum())
        fid = float(batch.fidelity[ok].mean()) if k else float("nan")
        rows.append((float(thr), k / len(batch), fid))
    return rows


def rate_fidelity_curve(
    a: EmitterParams,
    b: EmitterParams,
    thresholds: Sequence[float],
    trials: int,
    rng: np.random.Generator,
    herald: HeraldConfig | None = None,
) -> list[tuple[float, float, float]]:
    """Herald rate and mean heralded fidelity per threshold ``dt_max``.

    All thresholds are applied to one shared stream of attempts, so the
    accepted sets are nested and the rate column is exactly monotone.
    ``herald`` supplies window and detector settings; by default the window
    equals the largest threshold.
    """
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("at least one threshold is required")
    if any(t2 < t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    if trials < 10_000:
        raise ValueError(f"trials must be at least 10^4, got {trials}")
    if herald is None:
        herald = HeraldConfig(thresholds[-1], thresholds[-1])
    elif thresholds[-1] > herald.window_ns:
        raise ValueError("thresholds cannot exceed the detection window")
    batch = sample_attempts(a, b, herald, trials, rng)
    return curve_from_batch(batch, thresholds)
