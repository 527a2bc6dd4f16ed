"""Topology, link budgets, a deterministic event engine and repeater protocols."""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np
from scipy.special import comb

from .entanglement import (
    BellDiagonalPair,
    SpinRegister,
    apply_memory_decay,
    compose_errors,
    dephase_coeffs,
    swap_entanglement,
    tiered_distill,
)
from .photonics import EmitterParams, HeraldConfig, attempt_success_probability, sample_attempts

DEFAULT_MAX_ATTEMPTS = 10**7
EVENT_KINDS = ("attempt_start", "herald_arrived", "swap_ready", "distill_ready", "protocol_done")
PLACEMENTS = ("before_swap", "after_swap")


class LinkTimeoutError(RuntimeError):
    """A link failed to herald within its attempt budget."""

    def __init__(self, link_id: str, attempts: int):
        super().__init__(f"link {link_id!r} produced no herald within {attempts} attempts")
        self.link_id = link_id
        self.attempts = attempts


class InsufficientRegistersError(ValueError):
    pass


# --- topology ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyConstants:
    fibre_atten_db_per_km: float = 0.2
    switch_loss_db: float = 1.5
    speed_of_light_fibre_km_per_ms: float = 200.0

    def __post_init__(self):
        if self.fibre_atten_db_per_km < 0 or self.switch_loss_db < 0:
            raise ValueError("losses must be non-negative")
        if self.speed_of_light_fibre_km_per_ms <= 0:
            raise ValueError("speed of light in fibre must be positive")


@dataclass(frozen=True)
class Node:
    node_id: str
    registers: int = 2
    cryostat_id: str = "0"

    def __post_init__(self):
        if self.registers < 0:
            raise ValueError(f"node {self.node_id}: register count must be non-negative")


@dataclass(frozen=True)
class Link:
    link_id: str
    endpoints: tuple[str, str]
    fibre_km: float = 0.0
    switch_layers: int = 0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        if len(self.endpoints) != 2 or self.endpoints[0] == self.endpoints[1]:
            raise ValueError(f"link {self.link_id}: needs two distinct endpoints")
        if self.fibre_km < 0 or self.switch_layers < 0:
            raise ValueError(f"link {self.link_id}: fibre length and switch layers must be non-negative")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError(f"link {self.link_id}: detector efficiency must lie in [0, 1]")


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    constants: TopologyConstants = TopologyConstants()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        if len({l.link_id for l in self.links}) != len(self.links):
            raise ValueError("duplicate link ids")
        for l in self.links:
            for e in l.endpoints:
                if e not in ids:
                    raise ValueError(f"link {l.link_id} references unknown node {e!r}")

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj = {n.node_id: set() for n in self.nodes}
        for l in self.links:
            a, b = l.endpoints
            adj[a].add(b)
            adj[b].add(a)
        seen, todo = set(), deque([self.nodes[0].node_id])
        while todo:
            v = todo.popleft()
            if v not in seen:
                seen.add(v)
                todo.extend(adj[v] - seen)
        return len(seen) == len(self.nodes)

    def chain(self) -> tuple[list[str], list[Link]]:
        """Order the links as a simple path; raises if the topology is not one."""
        if not self.links:
            raise ValueError("a chain needs at least one link")
        degree = {n.node_id: 0 for n in self.nodes}
        for l in self.links:
            for e in l.endpoints:
                degree[e] += 1
        used = [v for v, d in degree.items() if d > 0]
        ends = [v for v in used if degree[v] == 1]
        if len(used) != len(self.links) + 1 or len(ends) != 2 or any(d > 2 for d in degree.values()):
            raise ValueError("topology is not a simple chain")
        if not self.is_connected() and len(used) != len(self.nodes):
            raise ValueError("topology is not connected")
        start = next(n.node_id for n in self.nodes if n.node_id in ends)
        path, ordered, remaining = [start], [], list(self.links)
        while remaining:
            here = path[-1]
            nxt = next((l for l in remaining if here in l.endpoints), None)
            if nxt is None:
                raise ValueError("topology is not connected")
            remaining.remove(nxt)
            ordered.append(nxt)
            path.append(nxt.endpoints[1] if nxt.endpoints[0] == here else nxt.endpoints[0])
        return path, ordered

    @classmethod
    def linear_chain(
        cls,
        num_links: int,
        fibre_km: float = 0.0,
        registers: int = 2,
        switch_layers: int = 0,
        detector_efficiency: float = 1.0,
        constants: TopologyConstants = TopologyConstants(),
    ) -> "Topology":
        nodes = tuple(Node(f"n{i}", registers, f"c{i}") for i in range(num_links + 1))
        links = tuple(
            Link(f"l{i}", (f"n{i}", f"n{i + 1}"), fibre_km, switch_layers, detector_efficiency)
            for i in range(num_links)
        )
        return cls(nodes, links, constants)


def link_efficiency(link: Link, constants: TopologyConstants = TopologyConstants()) -> float:
    loss_db = link.fibre_km * constants.fibre_atten_db_per_km + link.switch_layers * constants.switch_loss_db
    return 10.0 ** (-loss_db / 10.0) * link.detector_efficiency


def one_way_delay_ns(link: Link, constants: TopologyConstants = TopologyConstants()) -> float:
    return link.fibre_km / constants.speed_of_light_fibre_km_per_ms * 1e6


@dataclass(frozen=True)
class LinkTiming:
    pump_cycle_ns: float = 2_000.0
    herald_latency_ns: float = 0.0

    def __post_init__(self):
        if self.pump_cycle_ns <= 0 or self.herald_latency_ns < 0:
            raise ValueError("pump cycle must be positive and herald latency non-negative")


def attempt_duration_ns(link: Link, timing: LinkTiming, constants: TopologyConstants = TopologyConstants()) -> float:
    return max(timing.pump_cycle_ns, 2.0 * one_way_delay_ns(link, constants) + timing.herald_latency_ns)


# --- event engine -----------------------------------------------------------------------

@dataclass(order=True, frozen=True)
class SimEvent:
    time_ns: float
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class Engine:
    """Single-threaded event queue; ties resolve by insertion order."""

    def __init__(self):
        self.now = 0.0
        self._queue: list[tuple[SimEvent, Callable | None]] = []
        self._seq = itertools.count()
        self.processed: list[SimEvent] = []

    def schedule(self, time_ns: float, kind: str, payload: Any = None, handler: Callable | None = None) -> SimEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if time_ns < self.now:
            raise AssertionError(f"causality violation: {kind} at {time_ns} scheduled from {self.now}")
        ev = SimEvent(float(time_ns), next(self._seq), kind, payload)
        heapq.heappush(self._queue, (ev, handler))
        return ev

    def run(self) -> float:
        while self._queue:
            ev, handler = heapq.heappop(self._queue)
            assert ev.time_ns >= self.now, "engine popped an event from the past"
            self.now = ev.time_ns
            self.processed.append(ev)
            if handler is not None:
                handler(ev)
        return self.now

    def __len__(self) -> int:
        return len(self._queue)


# --- link sources -----------------------------------------------------------------------

class LinkSource(Protocol):
    def success_probability(self, eta: float) -> float: ...

    def race(self, eta: float, channels: int, max_steps: int, rng: np.random.Generator):
        """Return ``(step, coeffs)`` for the first herald over parallel channels, or ``None``."""
        ...


@dataclass(frozen=True)
class WernerSource:
    """Abstract heralding with a fixed Werner output; two photons per herald see the link loss."""

    p_success: float
    fidelity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p_success <= 1.0 or not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")

    def success_probability(self, eta: float) -> float:
        return self.p_success * eta * eta

    def race(self, eta, channels, max_steps, rng):
        p = self.success_probability(eta)
        if p <= 0.0:
            return None
        step = int(rng.geometric(p, size=channels).min())
        if step > max_steps:
            return None
        e = (1.0 - self.fidelity) / 3.0
        return step, np.array([self.fidelity, e, e, e])


@dataclass(frozen=True)
class BarrettKokSource:
    """Full two-round photon-counting simulation; link loss multiplies each emitter's efficiency."""

    emitter_a: EmitterParams = EmitterParams()
    emitter_b: EmitterParams = EmitterParams()
    herald: HeraldConfig = HeraldConfig(dt_max_ns=5.0, window_ns=250.0)

    def _scaled(self, eta):
        return (
            dataclasses.replace(self.emitter_a, efficiency=self.emitter_a.efficiency * eta),
            dataclasses.replace(self.emitter_b, efficiency=self.emitter_b.efficiency * eta),
        )

    def success_probability(self, eta: float) -> float:
        return attempt_success_probability(*self._scaled(eta), self.herald)

    def race(self, eta, channels, max_steps, rng):
        a, b = self._scaled(eta)
        p = attempt_success_probability(a, b, self.herald)
        if p <= 0.0 and self.herald.dark_count_rate_hz == 0:
            return None
        p_step = -math.expm1(channels * math.log1p(-min(p, 1 - 1e-15))) if p > 0 else 0.0
        chunk = int(np.clip(math.ceil(4.0 / p_step) if p_step > 0 else 100_000, 16, max(16, 100_000 // channels)))
        done = 0
        while done < max_steps:
            m = min(chunk, max_steps - done)
            batch = sample_attempts(a, b, self.herald, m * channels, rng)
            ok = batch.accepted(self.herald.dt_max_ns).reshape(m, channels)
            hits = np.flatnonzero(ok.any(axis=1))
            if hits.size:
                t = int(hits[0])
                c = int(np.argmax(ok[t]))
                return done + t + 1, batch.coeffs[t * channels + c]
            done += m
        return None


# --- single links -----------------------------------------------------------------------

@dataclass(frozen=True)
class LinkRun:
    pair: BellDiagonalPair
    attempts: int
    elapsed_ns: float


def _source_for(source, link: Link):
    if isinstance(source, dict):
        return source[link.link_id]
    return source


def _race_link(link, source, channels, engine, rng, constants, timing, max_attempts, start_ns):
    source = _source_for(source, link)
    if channels < 1:
        raise ValueError("parallel_channels must be at least 1")
    eta = link_efficiency(link, constants)
    duration = attempt_duration_ns(link, timing, constants)
    if engine is not None:
        engine.schedule(max(start_ns, engine.now), "attempt_start", {"link": link.link_id})
    found = source.race(eta, channels, max_attempts, rng)
    if found is None:
        raise LinkTimeoutError(link.link_id, max_attempts)
    steps, coeffs = found
    elapsed = steps * duration
    pair = BellDiagonalPair(
        coeffs, ((link.endpoints[0], 0), (link.endpoints[1], 0)), created_at_ns=start_ns + elapsed
    )
    if engine is not None:
        engine.schedule(max(start_ns + elapsed, engine.now), "herald_arrived", {"link": link.link_id})
    return pair, steps, elapsed


def run_link_until_success(
    link: Link,
    source: LinkSource,
    engine: Engine | None,
    rng: np.random.Generator,
    *,
    constants: TopologyConstants = TopologyConstants(),
    timing: LinkTiming = LinkTiming(),
    registers: Sequence[SpinRegister] = (),
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    start_ns: float = 0.0,
) -> tuple[BellDiagonalPair, int, float]:
    """Attempt heralding on ``link`` until success; returns ``(pair, attempts, elapsed_ns)``.

    ``registers`` are the endpoint registers whose stored spins suffer the
    per-attempt and storage decay caused by the attempts.
    """
    pair, attempts, elapsed = _race_link(link, source, 1, engine, rng, constants, timing, max_attempts, start_ns)
    for reg in registers:
        apply_memory_decay(reg, attempts, elapsed)
    return pair, attempts, elapsed


def multiplexed_link(
    link: Link,
    parallel_channels: int,
    source: LinkSource,
    engine: Engine | None,
    rng: np.random.Generator,
    *,
    constants: TopologyConstants = TopologyConstants(),
    timing: LinkTiming = LinkTiming(),
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    start_ns: float = 0.0,
) -> tuple[BellDiagonalPair, float]:
    """Race independent attempt streams over the same link; the first herald wins."""
    pair, _, elapsed = _race_link(
        link, source, parallel_channels, engine, rng, constants, timing, max_attempts, start_ns
    )
    return pair, elapsed


# --- repeaters --------------------------------------------------------------------------

@dataclass(frozen=True)
class MemoryModel:
    """Decay of stored pairs: per-attempt scrambling plus storage dephasing on each half."""

    per_attempt_dephasing: float = 0.0
    t2_nuclear_s: float = 1.1

    def decay(self, coeffs: np.ndarray, attempts: int, wait_ns: float) -> np.ndarray:
        out = np.asarray(coeffs, dtype=float)
        if attempts > 0 and self.per_attempt_dephasing > 0:
            scrambled = 1.0 - (1.0 - self.per_attempt_dephasing) ** attempts
            out = dephase_coeffs(dephase_coeffs(out, scrambled / 2), scrambled / 2)
        if wait_ns > 0 and math.isfinite(self.t2_nuclear_s):
            flip = -math.expm1(-wait_ns / (self.t2_nuclear_s * 1e9)) / 2
            out = dephase_coeffs(dephase_coeffs(out, flip), flip)
        return out


@dataclass(frozen=True)
class RepeaterResult:
    end_to_end_fidelity: float
    wall_time_ns: float
    attempts_total: int
    pairs_distilled: int
    successes: int = 1
    coeffs: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)
    hop_wall_times_ns: tuple[float, ...] = ()
    logical_error_per_hop: tuple[float, ...] = ()

    def __post_init__(self):
        if not -1e-12 <= self.end_to_end_fidelity <= 1 + 1e-12:
            raise ValueError("fidelity out of range")
        if self.attempts_total < self.successes:
            raise ValueError("attempts cannot be fewer than heralded successes")


def _check_registers(topo: Topology, path: list[str], per_link: int) -> None:
    for i, v in enumerate(path):
        need = per_link * (1 if i in (0, len(path) - 1) else 2)
        have = topo.node(v).registers
        if have < need:
            raise InsufficientRegistersError(f"node {v} has {have} registers, protocol needs {need}")


class _Gen1:
    def __init__(self, topo, links, rounds, placement, engine, rng, source, timing, memory, dejmps, max_attempts):
        self.topo, self.links, self.rounds = topo, links, rounds
        self.placement, self.engine, self.rng = placement, engine, rng
        self.source, self.timing, self.memory = source, timing, memory
        self.dejmps, self.max_attempts = dejmps, max_attempts
        self.levels = int(math.log2(len(links)))
        self.attempts = 0
        self.successes = 0
        self.distilled = 0
        self.clock_ns = min(attempt_duration_ns(l, timing, topo.constants) for l in links)
        self.result: BellDiagonalPair | None = None

    def distills_at(self, level: int) -> bool:
        if self.rounds == 0:
            return False
        if self.placement == "before_swap":
            return level < self.levels
        return level > 0

    def copies_per_link(self) -> int:
        return 2 ** (self.rounds * sum(self.distills_at(l) for l in range(self.levels + 1)))

    def _age(self, pair: BellDiagonalPair, now: float) -> BellDiagonalPair:
        wait = now - pair.created_at_ns
        if wait <= 0:
            return pair
        coeffs = self.memory.decay(pair.coeffs, int(wait // self.clock_ns), wait)
        return BellDiagonalPair(coeffs, pair.endpoints, created_at_ns=now)

    def request(self, level: int, index: int, t: float, done: Callable, distill: bool = True) -> None:
        if distill and self.distills_at(level):
            self._request_distilled(level, index, t, done)
        elif level == 0:
            self._request_link(index, t, done)
        else:
            self._request_swapped(level, index, t, done)

    def _request_link(self, index, t, done):
        link = self.links[index]
        pair, attempts, elapsed = _race_link(
            link, self.source, 1, None, self.rng, self.topo.constants, self.timing, self.max_attempts, t
        )
        self.attempts += attempts
        self.successes += 1
        self.engine.schedule(t, "attempt_start", {"link": link.link_id})
        self.engine.schedule(t + elapsed, "herald_arrived", {"link": link.link_id}, lambda ev: done(pair, ev.time_ns))

    def _gather(self, count, finish):
        got: dict[int, tuple[BellDiagonalPair, float]] = {}

        def make(i):
            def cb(pair, when):
                got[i] = (pair, when)
                if len(got) == count:
                    finish([got[k][0] for k in range(count)], max(w for _, w in got.values()))
            return cb

        return [make(i) for i in range(count)]

    def _request_swapped(self, level, index, t, done):
        def finish(pairs, when):
            def do_swap(ev):
                left, right = (self._age(p, ev.time_ns) for p in pairs)
                done(swap_entanglement(left, right), ev.time_ns)

            self.engine.schedule(when, "swap_ready", {"level": level, "index": index}, do_swap)

        cbs = self._gather(2, finish)
        self.request(level - 1, 2 * index, t, cbs[0])
        self.request(level - 1, 2 * index + 1, t, cbs[1])

    def _request_distilled(self, level, index, t, done):
        copies = 2**self.rounds

        def finish(pairs, when):
            def do_distill(ev):
                aged = [self._age(p, ev.time_ns) for p in pairs]
                out = tiered_distill(aged, self.rounds, self.rng, self.dejmps)
                if out is None:
                    self.request(level, index, ev.time_ns, done)
                else:
                    self.distilled += copies
                    done(BellDiagonalPair(out.coeffs, out.endpoints, created_at_ns=ev.time_ns), ev.time_ns)

            self.engine.schedule(when, "distill_ready", {"level": level, "index": index}, do_distill)

        for cb in self._gather(copies, finish):
            self.request(level, index, t, cb, distill=False)

    def run(self) -> tuple[BellDiagonalPair, float]:
        def finish(pair, when):
            self.result = pair
            self.engine.schedule(when, "protocol_done", {"fidelity": pair.fidelity})

        self.request(self.levels, 0, self.engine.now, finish)
        self.engine.run()
        return self.result, self.engine.now


def gen1_repeater(
    chain: Topology,
    distill_rounds: int,
    engine: Engine | None,
    rng: np.random.Generator,
    *,
    source: LinkSource,
    timing: LinkTiming = LinkTiming(),
    memory: MemoryModel = MemoryModel(),
    placement: str = "after_swap",
    dejmps: bool = False,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> RepeaterResult:
    """Nested swapping over a chain of ``2**k`` links, optionally distilling at each level.

    ``source`` is one link source for every link or a dict keyed by link id.
    ``placement`` picks whether distillation acts on the inputs of each swap
    level or on its outputs. Every distilled pair consumes ``2**distill_rounds``
    fresh copies, all generated in parallel.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"placement must be one of {PLACEMENTS}")
    if distill_rounds < 0:
        raise ValueError("distill_rounds must be non-negative")
    path, links = chain.chain()
    n = len(links)
    if n & (n - 1):
        raise ValueError(f"nested doubling needs a power-of-two number of links, got {n}")
    engine = engine or Engine()
    proto = _Gen1(chain, links, distill_rounds, placement, engine, rng, source, timing, memory, dejmps, max_attempts)
    _check_registers(chain, path, proto.copies_per_link())
    start = engine.now
    pair, end = proto.run()
    return RepeaterResult(
        pair.fidelity, end - start, proto.attempts, proto.distilled, proto.successes, tuple(pair.coeffs)
    )


def logical_error_rate(p_phys: float | Sequence[float], n: int = 7, d: int = 3) -> float:
    """Probability that more than ``(d-1)//2`` of ``n`` independent carriers fail.

    A sequence gives per-carrier rates (Poisson-binomial); a scalar is shared.
    """
    t = (d - 1) // 2
    if np.ndim(p_phys) == 0:
        p = float(p_phys)
        if not 0.0 <= p <= 1.0:
            raise ValueError("error probability must lie in [0, 1]")
        return float(sum(comb(n, j, exact=True) * p**j * (1 - p) ** (n - j) for j in range(t + 1, n + 1)))
    ps = np.asarray(p_phys, dtype=float)
    if ps.shape != (n,):
        raise ValueError(f"need {n} per-carrier error rates")
    dist = np.zeros(n + 1)
    dist[0] = 1.0
    for p in ps:
        dist[1:] = dist[1:] * (1 - p) + dist[:-1] * p
        dist[0] *= 1 - p
    return float(dist[t + 1 :].sum())


def gen2_repeater(
    chain: Topology,
    code: tuple[int, int, int],
    engine: Engine | None,
    rng: np.random.Generator,
    *,
    source: LinkSource,
    timing: LinkTiming = LinkTiming(),
    schedule: str = "parallel",
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> RepeaterResult:
    """Encoded hops: ``n`` physical pairs per hop, transversal logical swaps between hops.

    Hops proceed concurrently. With ``schedule="parallel"`` a hop's ``n``
    links race side by side; ``"serial"`` runs them one after another for
    comparison.
    """
    n, k, d = code
    if (n, k, d) != (7, 1, 3):
        raise ValueError("only the [[7,1,3]] code is supported")
    if schedule not in ("parallel", "serial"):
        raise ValueError("schedule must be 'parallel' or 'serial'")
    path, links = chain.chain()
    for v in path:
        if chain.node(v).registers < n:
            raise InsufficientRegistersError(f"node {v} has {chain.node(v).registers} registers, code needs {n}")
    engine = engine or Engine()
    start = engine.now
    hop_times, hop_errors, hop_coeffs = [], [], []
    attempts = 0
    for link in links:
        t = start
        finish_times, infidelities = [], []
        for _ in range(n):
            pair, a, elapsed = _race_link(
                link, source, 1, engine, rng, chain.constants, timing, max_attempts,
                t if schedule == "serial" else start,
            )
            attempts += a
            finish_times.append(pair.created_at_ns)
            infidelities.append(1.0 - pair.fidelity)
            if schedule == "serial":
                t = pair.created_at_ns
        hop_times.append(max(finish_times) - start)
        p_l = logical_error_rate(infidelities, n, d)
        hop_errors.append(p_l)
        hop_coeffs.append(np.array([1 - p_l, p_l / 3, p_l / 3, p_l / 3]))
    end = start + max(hop_times)
    engine.schedule(end, "swap_ready", {"hops": len(links)})
    engine.schedule(end, "protocol_done")
    engine.run()
    coeffs = hop_coeffs[0]
    for c in hop_coeffs[1:]:
        coeffs = compose_errors(coeffs, c)
    return RepeaterResult(
        float(coeffs[0]), end - start, attempts, 0, n * len(links), tuple(coeffs),
        tuple(hop_times), tuple(hop_errors),
    )


def expected_max_geometric(p: float, n: int) -> float:
    """Mean of the largest of ``n`` iid geometric(p) variables (inclusion-exclusion)."""
    q = 1.0 - p
    return float(sum((-1) ** (j + 1) * comb(n, j, exact=True) / (1 - q**j) for j in range(1, n + 1)))
