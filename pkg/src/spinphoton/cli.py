"""Command-line experiment runner.

    spinphoton simulate <experiment> --config run.yaml [--seed N] [--out results.csv]
    spinphoton validate --config run.yaml
    spinphoton schema

Trial ``t`` of sweep point ``s`` draws from
``Generator(PCG64(SeedSequence(seed, spawn_key=(s, t))))``.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import network, protocols
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, parse_config, reference_table
from .photonics import rate_fidelity_curve

CSV_HEADER = ("experiment", "sweep_param", "sweep_value", "metric", "value", "stderr", "trials", "seed", "status")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_param: str
    sweep_value: float | None
    metric: str
    value: float
    stderr: float
    trials: int
    seed: int
    status: str = "ok"

    def as_csv(self) -> list[str]:
        sv = "" if self.sweep_value is None else repr(float(self.sweep_value))
        return [self.experiment, self.sweep_param, sv, self.metric, repr(float(self.value)),
                repr(float(self.stderr)), str(self.trials), str(self.seed), self.status]


def trial_rng(seed: int, sweep_index: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(sweep_index, trial_index))))


# --- per-experiment trials ------------------------------------------------------------------
# Each returns a dict of metric -> value for one trial.

def _bell_pair_curve(cfg: ExperimentConfig, rng):
    h = cfg.herald.build()
    a, b = cfg.emitter(cfg.link_source.emitter_a), cfg.emitter(cfg.link_source.emitter_b)
    (_, rate, fid), = rate_fidelity_curve(a, b, [h.dt_max_ns], cfg.bell_pair_curve.attempts, rng, h)
    return {"rate": rate, "fidelity": fid}


def _repeater_gen1(cfg, rng):
    r = cfg.repeater
    res = network.gen1_repeater(
        cfg.topology.build(), r.distill_rounds, None, rng,
        source=cfg.link_source_object(), timing=cfg.timing.build(), memory=r.memory(),
        placement=r.placement, dejmps=r.dejmps, max_attempts=r.max_attempts,
    )
    return {"fidelity": res.end_to_end_fidelity, "wall_time_ns": res.wall_time_ns,
            "attempts": float(res.attempts_total), "pairs_distilled": float(res.pairs_distilled)}


def _repeater_gen2(cfg, rng):
    r = cfg.repeater
    res = network.gen2_repeater(
        cfg.topology.build(), (7, 1, 3), None, rng, source=cfg.link_source_object(),
        timing=cfg.timing.build(), schedule=r.schedule, max_attempts=r.max_attempts,
    )
    return {"fidelity": res.end_to_end_fidelity, "wall_time_ns": res.wall_time_ns,
            "attempts": float(res.attempts_total),
            "logical_error_per_hop": float(np.mean(res.logical_error_per_hop))}


def _qkd_metrics(res):
    return {"qber": res.qber, "secret_fraction": res.secret_fraction,
            "sifted_bits": float(res.sifted_bits), "raw_rate_hz": res.raw_rate_hz}


def _qkd_single_hub(cfg, rng):
    q = cfg.qkd
    return _qkd_metrics(protocols.mdi_qkd_single_hub(
        q.client_a.build(), q.client_b.build(), q.hub.build(), q.rounds, None, rng))


def _qkd_two_hub(cfg, rng):
    q = cfg.qkd
    topo = cfg.topology.build()
    link = next(l for l in topo.links if l.link_id == q.inter_hub_link)
    return _qkd_metrics(protocols.mdi_qkd_two_hub(
        q.client_a.build(), q.client_b.build(), q.hub.build(), link, cfg.link_source_object(),
        q.rounds, None, rng, constants=topo.constants, timing=cfg.timing.build(),
        max_link_attempts=cfg.repeater.max_attempts,
    ))


def _connectivity_report(cfg):
    c = cfg.connectivity
    return protocols.transversal_depth(c.n, c.interconnects, c.intra_module_connectivity, c.gate_fidelity)


def _connectivity(cfg, _rng):
    c = cfg.connectivity
    rep = _connectivity_report(cfg)
    return {"depth": float(rep.depth), "total_gates": float(rep.total_gates),
            "est_fidelity": rep.est_fidelity, "interconnects_used": float(rep.interconnects_used),
            "swap_chain_fidelity": protocols.swap_chain_fidelity(c.distance, c.gate_fidelity)}


def _overhead(cfg, _rng):
    o = cfg.overhead
    rep = protocols.overhead_compare(o.surface_phys_per_logical, o.qldpc_n, o.qldpc_k)
    return {"surface_per_logical": rep.surface_per_logical, "qldpc_per_logical": rep.qldpc_per_logical,
            "ratio": rep.ratio}


RUNNERS: dict[str, Callable] = {
    "bell_pair_curve": _bell_pair_curve,
    "repeater_gen1": _repeater_gen1,
    "repeater_gen2": _repeater_gen2,
    "qkd_single_hub": _qkd_single_hub,
    "qkd_two_hub": _qkd_two_hub,
    "connectivity": _connectivity,
    "overhead": _overhead,
}
DETERMINISTIC = {"connectivity", "overhead"}


def _summarise(samples: list[dict]) -> dict[str, tuple[float, float, int]]:
    out = {}
    for metric in samples[0]:
        vals = np.array([s[metric] for s in samples], dtype=float)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            out[metric] = (math.nan, math.nan, 0)
            continue
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[metric] = (float(vals.mean()), se, int(vals.size))
    return out


def run_experiment(cfg: ExperimentConfig, output_path: str | Path | None = None) -> list[ResultRow]:
    """Run every sweep point and trial; write the CSV (unless ``output_path`` is ``""``) and return rows."""
    runner = RUNNERS[cfg.experiment]
    param = cfg.sweep.parameter if cfg.sweep else ""
    rows: list[ResultRow] = []
    for s, (value, point) in enumerate(cfg.sweep_points()):
        trials = 1 if cfg.experiment in DETERMINISTIC else cfg.trials
        samples, timeouts = [], 0
        for t in range(trials):
            try:
                samples.append(runner(point, trial_rng(cfg.seed, s, t)))
            except network.LinkTimeoutError:
                timeouts += 1
        if not samples:
            rows.append(ResultRow(cfg.experiment, param, value, "all", math.nan, math.nan, 0, cfg.seed, "timeout"))
            continue
        status = "ok" if timeouts == 0 else f"timeout:{timeouts}/{trials}"
        for metric, (mean, se, n) in _summarise(samples).items():
            rows.append(ResultRow(cfg.experiment, param, value, metric, mean, se, n, cfg.seed, status))
    target = cfg.output_path if output_path is None else output_path
    if target != "":
        write_csv(rows, target)
    return rows


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def write_csv(rows: Sequence[ResultRow], path: str | Path) -> None:
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8")


# --- entry point --------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinphoton", description="Spin-photon network experiment runner.")
    sub = p.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run an experiment and write CSV results")
    sim.add_argument("experiment", choices=EXPERIMENTS)
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    val = sub.add_parser("validate", help="parse and validate a config without running it")
    val.add_argument("--config", required=True)
    sub.add_parser("schema", help="print the configuration reference")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "schema":
        print(reference_table())
        return 0
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text, getattr(args, "experiment", None))
        if args.command == "simulate" and args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed: must lie in [0, 2**64), got {args.seed}")
            cfg = dataclasses.replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.command == "validate":
        points = len(cfg.sweep.values) if cfg.sweep else 1
        print(f"ok: {cfg.experiment}, {points} sweep point(s), {cfg.trials} trial(s)")
        return 0
    try:
        rows = run_experiment(cfg, args.out)
    except Exception as exc:  # noqa: BLE001 - any failure during a run maps to exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment == "connectivity":
        print(protocols.format_table([_connectivity_report(p) for _, p in cfg.sweep_points()]))
    print(f"wrote {len(rows)} rows to {args.out or cfg.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
