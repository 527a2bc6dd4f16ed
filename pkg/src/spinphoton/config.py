"""Experiment configuration: strict YAML parsing, defaults, and sweeps.

Every section is a frozen dataclass whose fields carry their valid range in
``metadata``. Parsing rejects unknown keys and reports the dotted path of the
offending field. ``reference_table()`` renders the schema with defaults.
"""

from __future__ import annotations

import dataclasses
import math
import re
import types
import typing
from dataclasses import dataclass, field
from typing import Any

import yaml

from .network import BarrettKokSource, Link, LinkTiming, MemoryModel, Node, Topology, TopologyConstants, WernerSource
from .photonics import EmitterParams, HeraldConfig
from .protocols import ClientConfig, HubConfig
from .qstate import NoiseChannel

EXPERIMENTS = (
    "bell_pair_curve",
    "repeater_gen1",
    "repeater_gen2",
    "qkd_single_hub",
    "qkd_two_hub",
    "connectivity",
    "overhead",
)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the dotted field path."""


def _f(default, lo=None, hi=None, *, lo_open=False, choices=None, doc="", factory=None):
    meta = {"lo": lo, "hi": hi, "lo_open": lo_open, "choices": choices, "doc": doc}
    if factory is not None:
        return field(default_factory=factory, metadata=meta)
    return field(default=default, metadata=meta)


@dataclass(frozen=True)
class EmitterSection:
    bare_lifetime_ns: float = _f(940.0, 0, lo_open=True, doc="lifetime without cavity enhancement")
    purcell_factor: float = _f(20.0, 1, doc="lifetime reduction factor")
    dephasing_rate_mhz: float | None = _f(None, 0, doc="pure dephasing; null = 5x lifetime-limited linewidth")
    detuning_mhz: float = _f(0.0)
    efficiency: float = _f(1.0, 0, 1, doc="photon emission-to-detection efficiency")
    cyclicity: float = _f(1.0, 0, 1, lo_open=True)
    spectral_diffusion_mhz: float = _f(0.0, 0)

    def build(self) -> EmitterParams:
        return EmitterParams(**dataclasses.asdict(self))


@dataclass(frozen=True)
class HeraldSection:
    dt_max_ns: float = _f(5.0, 0, lo_open=True, doc="accepted |detection time difference|")
    window_ns: float = _f(250.0, 0, lo_open=True, doc="detection window per round")
    dark_count_rate_hz: float = _f(0.0, 0)
    depolarizing_floor: float = _f(0.0, 0, 1)

    def build(self) -> HeraldConfig:
        if self.dt_max_ns > self.window_ns:
            raise ConfigError("herald.dt_max_ns: must not exceed herald.window_ns")
        return HeraldConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class ConstantsSection:
    fibre_atten_db_per_km: float = _f(0.2, 0)
    switch_loss_db: float = _f(1.5, 0)
    speed_of_light_fibre_km_per_ms: float = _f(200.0, 0, lo_open=True)


@dataclass(frozen=True)
class NodeSection:
    node_id: str = _f("")
    registers: int = _f(2, 0)
    cryostat_id: str = _f("0")


@dataclass(frozen=True)
class LinkSection:
    link_id: str = _f("")
    endpoints: list = _f(None, factory=list)
    fibre_km: float = _f(0.0, 0)
    switch_layers: int = _f(0, 0)
    detector_efficiency: float = _f(1.0, 0, 1)


def _default_nodes():
    return [NodeSection("n0"), NodeSection("n1")]


def _default_links():
    return [LinkSection("l0", ["n0", "n1"])]


@dataclass(frozen=True)
class TopologySection:
    constants: ConstantsSection = _f(None, factory=ConstantsSection)
    nodes: list[NodeSection] = _f(None, factory=_default_nodes)
    links: list[LinkSection] = _f(None, factory=_default_links)

    def build(self) -> Topology:
        try:
            return Topology(
                tuple(Node(n.node_id, n.registers, n.cryostat_id) for n in self.nodes),
                tuple(Link(l.link_id, tuple(l.endpoints), l.fibre_km, l.switch_layers, l.detector_efficiency)
                      for l in self.links),
                TopologyConstants(**dataclasses.asdict(self.constants)),
            )
        except ValueError as exc:
            raise ConfigError(f"topology: {exc}") from None


@dataclass(frozen=True)
class TimingSection:
    pump_cycle_ns: float = _f(2_000.0, 0, lo_open=True, doc="optical pumping cycle per attempt")
    herald_latency_ns: float = _f(0.0, 0)

    def build(self) -> LinkTiming:
        return LinkTiming(**dataclasses.asdict(self))


@dataclass(frozen=True)
class SourceSection:
    kind: str = _f("barrett_kok", choices=("barrett_kok", "werner"))
    emitter_a: str = _f("a", doc="name in the emitters table")
    emitter_b: str = _f("b")
    p_success: float = _f(0.01, 0, 1, doc="werner kind: herald probability on a lossless link")
    fidelity: float = _f(1.0, 0, 1, doc="werner kind: pair fidelity")


@dataclass(frozen=True)
class BellCurveSection:
    attempts: int = _f(10_000, 10_000, doc="attempts sampled per trial")


@dataclass(frozen=True)
class RepeaterSection:
    distill_rounds: int = _f(0, 0)
    placement: str = _f("after_swap", choices=("before_swap", "after_swap"))
    dejmps: bool = _f(False)
    per_attempt_dephasing: float | None = _f(None, 0, 1, doc="nuclear dephasing per link attempt; required for repeater_gen1")
    t2_nuclear_s: float = _f(1.1, 0, lo_open=True)
    max_attempts: int = _f(10**7, 1)
    schedule: str = _f("parallel", choices=("parallel", "serial"), doc="gen-2 only")

    def memory(self) -> MemoryModel:
        return MemoryModel(self.per_attempt_dephasing or 0.0, self.t2_nuclear_s)


@dataclass(frozen=True)
class NoiseSection:
    kind: str = _f("depolarizing", choices=("depolarizing", "dephasing", "amplitude_damping", "bit_flip"))
    p: float = _f(0.0, 0, 1)


@dataclass(frozen=True)
class ClientSection:
    source: str = _f("wcp", choices=("wcp", "single_photon"))
    mean_photon_number: float = _f(0.1, 0, lo_open=True)
    channel_efficiency: float = _f(1.0, 0, 1)
    x_basis_prob: float = _f(0.5, 0, 1)
    noise: NoiseSection | None = _f(None)

    def build(self) -> ClientConfig:
        noise = NoiseChannel(self.noise.kind, self.noise.p) if self.noise and self.noise.p > 0 else None
        return ClientConfig(self.source, self.mean_photon_number, self.channel_efficiency, noise, self.x_basis_prob)


@dataclass(frozen=True)
class HubSection:
    emission_efficiency: float = _f(1.0, 0, 1)
    attempt_ns: float = _f(1_000.0, 0, lo_open=True)
    bsm_ns: float = _f(0.0, 0)
    max_reloads: int = _f(10, 1)

    def build(self) -> HubConfig:
        return HubConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class QkdSection:
    rounds: int = _f(10_000, 1)
    client_a: ClientSection = _f(None, factory=ClientSection)
    client_b: ClientSection = _f(None, factory=ClientSection)
    hub: HubSection = _f(None, factory=HubSection)
    inter_hub_link: str = _f("l0", doc="link id used between the two hubs")


@dataclass(frozen=True)
class ConnectivitySection:
    n: int = _f(7, 1)
    interconnects: int = _f(7, 1)
    intra_module_connectivity: str = _f("all_to_all", choices=("all_to_all", "planar"))
    gate_fidelity: float = _f(0.999, 0, 1, lo_open=True)
    distance: int = _f(1, 0, doc="qubit separation for the swap-chain estimate")


@dataclass(frozen=True)
class OverheadSection:
    surface_phys_per_logical: int = _f(3000, 1)
    qldpc_n: int = _f(1000, 1)
    qldpc_k: int = _f(100, 1)


@dataclass(frozen=True)
class SweepSection:
    parameter: str = _f("")
    values: list[float] = _f(None, factory=list)


def _default_emitters():
    return {"a": EmitterSection(), "b": EmitterSection()}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = _f(None, choices=EXPERIMENTS)
    seed: int = _f(0, 0, 2**64 - 1)
    trials: int = _f(1, 1)
    output_path: str = _f("results.csv")
    emitters: dict[str, EmitterSection] = _f(None, factory=_default_emitters)
    herald: HeraldSection = _f(None, factory=HeraldSection)
    topology: TopologySection = _f(None, factory=TopologySection)
    timing: TimingSection = _f(None, factory=TimingSection)
    link_source: SourceSection = _f(None, factory=SourceSection)
    sweep: SweepSection | None = _f(None)
    bell_pair_curve: BellCurveSection = _f(None, factory=BellCurveSection)
    repeater: RepeaterSection = _f(None, factory=RepeaterSection)
    qkd: QkdSection = _f(None, factory=QkdSection)
    connectivity: ConnectivitySection = _f(None, factory=ConnectivitySection)
    overhead: OverheadSection = _f(None, factory=OverheadSection)

    def emitter(self, name: str) -> EmitterParams:
        if name not in self.emitters:
            raise ConfigError(f"link_source: unknown emitter {name!r}")
        return self.emitters[name].build()

    def link_source_object(self):
        s = self.link_source
        if s.kind == "werner":
            return WernerSource(s.p_success, s.fidelity)
        return BarrettKokSource(self.emitter(s.emitter_a), self.emitter(s.emitter_b), self.herald.build())

    def sweep_points(self) -> list[tuple[float | None, "ExperimentConfig"]]:
        if self.sweep is None:
            return [(None, self)]
        return [(v, set_path(self, self.sweep.parameter, v)) for v in self.sweep.values]


# --- generic strict parsing ---------------------------------------------------------------

def _unwrap_optional(tp):
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _check_range(value, meta, path):
    choices = meta.get("choices")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path}: must be one of {list(choices)}, got {value!r}")
    lo, hi = meta.get("lo"), meta.get("hi")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if isinstance(value, float) and math.isnan(value):
            raise ConfigError(f"{path}: must be a number, got nan")
        if lo is not None and (value < lo or (meta.get("lo_open") and value == lo)):
            raise ConfigError(f"{path}: must be {'>' if meta.get('lo_open') else '>='} {lo}, got {value}")
        if hi is not None and value > hi:
            raise ConfigError(f"{path}: must be <= {hi}, got {value}")


def _coerce(tp, value, path):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value required")
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is dict:
        _, vt = typing.get_args(tp)
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return {str(k): _coerce(vt, v, f"{path}.{k}") for k, v in value.items()}
    if origin is list or tp is list:
        args = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_coerce(args[0], v, f"{path}[{i}]") if args else v for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name: f for f in dataclasses.fields(cls)}
    prefix = f"{path}." if path else ""
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown key")
    kwargs = {}
    for name, f in names.items():
        if name in data:
            value = _coerce(hints[name], data[name], prefix + name)
            _check_range(value, f.metadata, prefix + name)
            kwargs[name] = value
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment is None:
        raise ConfigError("experiment: value required")
    for name, em in cfg.emitters.items():
        try:
            em.build()
        except ValueError as exc:
            raise ConfigError(f"emitters.{name}: {exc}") from None
    for name, section in (("herald", cfg.herald), ("topology", cfg.topology)):
        try:
            section.build()
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{name}: {exc}") from None
    if cfg.link_source.kind == "barrett_kok":
        cfg.emitter(cfg.link_source.emitter_a)
        cfg.emitter(cfg.link_source.emitter_b)
    if cfg.experiment == "repeater_gen1" and cfg.repeater.per_attempt_dephasing is None:
        raise ConfigError("repeater.per_attempt_dephasing: value required for repeater_gen1 (no default)")
    if cfg.experiment == "qkd_two_hub":
        if cfg.qkd.inter_hub_link not in {l.link_id for l in cfg.topology.links}:
            raise ConfigError(f"qkd.inter_hub_link: no link named {cfg.qkd.inter_hub_link!r}")
    if cfg.sweep is not None:
        if not cfg.sweep.values:
            raise ConfigError("sweep.values: at least one value required")
        for i, v in enumerate(cfg.sweep.values):
            try:
                point = set_path(cfg, cfg.sweep.parameter, v)
            except ConfigError as exc:
                raise ConfigError(f"sweep.values[{i}] -> {exc}") from None
            _validate(dataclasses.replace(point, sweep=None))
    return cfg


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse and validate a YAML document; ``experiment`` fills or must match the document's."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<document>: not valid YAML ({exc})") from None
    data = {} if data is None else data
    if isinstance(data, dict) and experiment is not None:
        if data.get("experiment", experiment) != experiment:
            raise ConfigError(f"experiment: config names {data['experiment']!r} but {experiment!r} was requested")
        data = {**data, "experiment": experiment}
    return _validate(_build(ExperimentConfig, data))


def to_dict(cfg) -> Any:
    if dataclasses.is_dataclass(cfg):
        return {f.name: to_dict(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}
    if isinstance(cfg, dict):
        return {k: to_dict(v) for k, v in cfg.items()}
    if isinstance(cfg, list):
        return [to_dict(v) for v in cfg]
    return cfg


def serialize(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


# --- sweeps -------------------------------------------------------------------------------

def _set(obj, parts, value, path):
    head, rest = parts[0], parts[1:]
    if isinstance(obj, dict):
        if head not in obj or not rest:
            raise ConfigError(f"{path}: does not resolve to a real-valued field")
        return {**obj, head: _set(obj[head], rest, value, path)}
    if isinstance(obj, list):
        if not head.isdigit() or int(head) >= len(obj):
            raise ConfigError(f"{path}: bad list index {head!r}")
        i = int(head)
        if not rest:
            raise ConfigError(f"{path}: does not resolve to a real-valued field")
        return obj[:i] + [_set(obj[i], rest, value, path)] + obj[i + 1 :]
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(f"{path}: does not resolve to a field")
    fields = {f.name: f for f in dataclasses.fields(obj)}
    if head not in fields:
        raise ConfigError(f"{path}: unknown field {head!r}")
    if rest:
        return dataclasses.replace(obj, **{head: _set(getattr(obj, head), rest, value, path)})
    tp, _ = _unwrap_optional(typing.get_type_hints(type(obj))[head])
    if tp is float:
        new = float(value)
    elif tp is int and float(value).is_integer():
        new = int(value)
    else:
        raise ConfigError(f"{path}: does not resolve to a real-valued field")
    _check_range(new, fields[head].metadata, path)
    return dataclasses.replace(obj, **{head: new})


def set_path(cfg: ExperimentConfig, path: str, value: float) -> ExperimentConfig:
    """Return a copy of ``cfg`` with the numeric field at dotted ``path`` replaced.

    List items are addressed as ``links.0.fibre_km`` or ``links[0].fibre_km``.
    """
    if not path:
        raise ConfigError("sweep.parameter: value required")
    parts = re.sub(r"\[(\d+)\]", r".\1", path).split(".")
    return _set(cfg, parts, value, path)


# --- documentation --------------------------------------------------------------------------

def _walk(cls, prefix):
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        tp, _ = _unwrap_optional(hints[f.name])
        name = prefix + f.name
        if dataclasses.is_dataclass(tp):
            yield from _walk(tp, name + ".")
            continue
        origin = typing.get_origin(tp)
        args = typing.get_args(tp)
        if origin is dict and dataclasses.is_dataclass(args[1]):
            yield from _walk(args[1], name + ".<name>.")
            continue
        if origin is list and args and dataclasses.is_dataclass(args[0]):
            yield from _walk(args[0], name + "[].")
            continue
        if f.default is not dataclasses.MISSING:
            default = f.default
        else:
            default = to_dict(f.default_factory())
        m = f.metadata
        if m.get("choices"):
            rng = "|".join(m["choices"])
        elif m.get("lo") is not None or m.get("hi") is not None:
            lo = "" if m.get("lo") is None else f"{'(' if m.get('lo_open') else '['}{m['lo']}"
            hi = "" if m.get("hi") is None else f"{m['hi']}]"
            rng = f"{lo or '(-inf'}, {hi or 'inf)'}"
        else:
            rng = ""
        yield name, getattr(tp, "__name__", str(tp)), repr(default), rng, m.get("doc", "")


def reference_table() -> str:
    rows = list(_walk(ExperimentConfig, ""))
    header = ("key", "type", "default", "range", "notes")
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(4)]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths + [0])).rstrip()]
    for r in rows:
        out.append("  ".join(v.ljust(w) for v, w in zip(r, widths + [0])).rstrip())
    out.append("")
    out.append("Cryostat temperature (1-2 K) is documentation only and not a model input.")
    return "\n".join(out)
