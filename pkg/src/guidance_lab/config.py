"""Experiment configuration: YAML parsing, validation, defaults and hashing.

Every section is strict: unknown keys are rejected with the dotted path of the
offending entry. Omitted sections take command-specific defaults, so an empty
document is a valid configuration for any command.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from . import guidance as G
from .errors import ConfigError, DomainError, GuidanceLabError
from .mixtures import Component, LabeledDistribution
from .samplers import SamplerConfig
from .schedule import NoiseSchedule, ScheduleKind
from .theory import GridSpec

COMMANDS = ("verify", "toy2d", "sweep", "trace", "heatmap")


@dataclass(frozen=True)
class ComponentSpec:
    weight: float
    label: str
    mean: tuple
    # None: point mass; float: isotropic; flat tuple: diagonal; nested tuple: full matrix
    cov: object = None

    def build(self) -> Component:
        cov = self.cov
        if isinstance(cov, tuple):
            cov = np.array(cov, dtype=float)
        return Component(self.weight, self.label, np.array(self.mean, dtype=float), cov)

    def to_dict(self) -> dict:
        d = {"weight": self.weight, "label": self.label, "mean": list(self.mean)}
        if self.cov is not None:
            d["cov"] = _listify(self.cov)
        return d


@dataclass(frozen=True)
class DistributionSpec:
    components: tuple
    radius: float | None = None

    def build(self) -> LabeledDistribution:
        return LabeledDistribution(tuple(c.build() for c in self.components), radius=self.radius)

    @property
    def labels(self) -> list[str]:
        return list(dict.fromkeys(c.label for c in self.components))

    def to_dict(self) -> dict:
        d = {"components": [c.to_dict() for c in self.components]}
        if self.radius is not None:
            d["radius"] = self.radius
        return d


def reference_toy() -> DistributionSpec:
    """Two classes of two Gaussians each: a horizontal pair and a vertical pair."""
    return DistributionSpec((
        ComponentSpec(0.25, "orange", (-1.5, 0.0), 0.25),
        ComponentSpec(0.25, "orange", (1.5, 0.0), 0.25),
        ComponentSpec(0.25, "gray", (0.0, 2.5), 0.35),
        ComponentSpec(0.25, "gray", (0.0, -2.5), 0.35),
    ), radius=3.0)


def two_atom(dimension: int = 1, a: float = 1.0) -> DistributionSpec:
    plus = (a,) + (0.0,) * (dimension - 1)
    minus = (-a,) + (0.0,) * (dimension - 1)
    return DistributionSpec((ComponentSpec(0.5, "+", plus), ComponentSpec(0.5, "-", minus)),
                            radius=a)


@dataclass(frozen=True)
class MetricsConfig:
    mass: float = 0.99
    # None: the sampler's t_end (or 0.05 when that is 0)
    t_eval: float | None = None
    mc_samples: int = 1_000_000
    contour_seed: int = 0
    energy_distance: bool = True


@dataclass(frozen=True)
class VerifyConfig:
    tightness_t: tuple = (0.1, 0.5, 1.0, 2.0)
    score_configs: int = 100
    score_t_points: int = 50
    score_t_range: tuple = (0.05, 5.0)
    probes: int = 512
    harnack_pairs: int = 10_000
    alpha_h: tuple = (1.5, 2.0, 4.0)
    harnack_dims: tuple = (1, 2, 3)
    kl_a: tuple = (0.5, 1.0)
    kl_t: tuple = (0.5, 1.0, 2.0)
    kl_mc_log2: int = 20
    de_bruijn_points: int = 20
    de_bruijn_range: tuple = (0.2, 3.0)


@dataclass(frozen=True)
class SweepConfig:
    omega0: tuple = (1.0, 1.35, 1.5, 1.7, 1.8)
    lam: tuple = (0.03, 0.15, 0.6, math.log(2.0), 1.0)


@dataclass(frozen=True)
class HeatmapConfig:
    times: tuple = (0.1, 0.5, 1.0, 3.0)
    grid: GridSpec = GridSpec()


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    distribution: DistributionSpec
    schedule: NoiseSchedule
    guidance: tuple
    sampler: SamplerConfig
    target_class: str
    metrics: MetricsConfig = MetricsConfig()
    n_samples: int = 5000
    seeds: tuple = tuple(range(10))
    threads: int = 1
    output_dir: str = "runs"
    write_samples: bool = True
    verify: VerifyConfig = VerifyConfig()
    sweep: SweepConfig = SweepConfig()
    heatmap: HeatmapConfig = HeatmapConfig()

    @property
    def t_eval(self) -> float:
        if self.metrics.t_eval is not None:
            return self.metrics.t_eval
        return self.sampler.t_end if self.sampler.t_end > 0 else 0.05


# ---------------------------------------------------------------- defaults


def default_config(command: str) -> ExperimentConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {list(COMMANDS)}",
                          field="command")
    if command in ("toy2d", "sweep"):
        sched = NoiseSchedule.vp_linear()
        return ExperimentConfig(
            command=command,
            distribution=reference_toy(),
            schedule=sched,
            guidance=(G.Fixed(1.0), G.C2FG(1.0, 0.6, sched.t_max),
                      G.BetaPDF(omega_peak=1.5, a=2.0, b=2.0, t_max=sched.t_max, baseline=0.0)),
            sampler=SamplerConfig(kind="reverse_sde", steps=250, t_end=0.05, grid="geometric"),
            target_class="orange",
            n_samples=5000 if command == "toy2d" else 2000,
            seeds=tuple(range(10)) if command == "toy2d" else (0, 1),
        )
    if command == "heatmap":
        sched = NoiseSchedule.canonical_ou()
        return ExperimentConfig(command=command, distribution=two_atom(2), schedule=sched,
                                guidance=(G.Fixed(1.0),), sampler=SamplerConfig(kind="pf_ode"),
                                target_class="+", n_samples=1, seeds=(0,))
    sched = NoiseSchedule.canonical_ou()
    if command == "trace":
        return ExperimentConfig(command=command, distribution=two_atom(1), schedule=sched,
                                guidance=(G.Fixed(1.0),),
                                sampler=SamplerConfig(kind="pf_ode", steps=100, t_end=0.05,
                                                      grid="uniform"),
                                target_class="+", n_samples=256, seeds=(0,))
    return ExperimentConfig(command=command, distribution=two_atom(1), schedule=sched,
                            guidance=(G.Fixed(1.0),), sampler=SamplerConfig(kind="pf_ode"),
                            target_class="+", n_samples=1, seeds=(0,))


# ---------------------------------------------------------------- parsing helpers


def _listify(value):
    if isinstance(value, (tuple, list)):
        return [_listify(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _num(value, path, *, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", field=path)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-8" as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", field=path) from None
    if not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=path)
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", field=path)
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=path)
    return value


def _num_list(value, path, *, integer=False):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"expected a list, got {value!r}", field=path)
    return tuple(_num(v, path, integer=integer) for v in value)


def _mapping(value, path, allowed) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"expected a mapping, got {type(value).__name__}", field=path)
    for key in value:
        if key not in allowed:
            raise ConfigError(f"unknown field {key!r} (allowed: {sorted(allowed)})",
                              field=f"{path}.{key}" if path else str(key))
    return value


def _section(cls, value, path, converters):
    """Build a flat dataclass section, converting each present key."""
    names = {f.name for f in fields(cls)}
    raw = _mapping(value, path, names)
    kwargs = {}
    for key, item in raw.items():
        kwargs[key] = converters[key](item, f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc), field=path) from exc


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"expected true/false, got {value!r}", field=path)
    return value


def _pair(value, path):
    pair = _num_list(value, path)
    if len(pair) != 2 or not pair[0] < pair[1]:
        raise ConfigError("expected an increasing pair [low, high]", field=path)
    return pair


def _cov(value, path):
    if value is None:
        return None
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return tuple(_num_list(row, path) for row in value)
        return _num_list(value, path)
    return _num(value, path)


def _parse_distribution(value, path="distribution") -> DistributionSpec:
    raw = _mapping(value, path, {"preset", "components", "radius"})
    preset = raw.get("preset")
    if preset is not None:
        if "components" in raw:
            raise ConfigError("give either preset or components, not both", field=path)
        presets = {"reference_toy": reference_toy, "two_atom": lambda: two_atom(1),
                   "two_atom_2d": lambda: two_atom(2)}
        if preset not in presets:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(presets)}",
                              field=f"{path}.preset")
        spec = presets[preset]()
        if "radius" in raw:
            spec = replace(spec, radius=_num(raw["radius"], f"{path}.radius", allow_none=True))
        return spec
    comps_raw = raw.get("components")
    cpath = f"{path}.components"
    if not isinstance(comps_raw, list) or not comps_raw:
        raise ConfigError("expected a non-empty list of components", field=cpath)
    comps = []
    for item in comps_raw:
        c = _mapping(item, cpath, {"weight", "label", "mean", "cov"})
        for key in ("weight", "label", "mean"):
            if key not in c:
                raise ConfigError(f"missing required field {key!r}", field=f"{cpath}.{key}")
        weight = _num(c["weight"], f"{cpath}.weight")
        if not 0 < weight <= 1:
            raise ConfigError(f"weight must lie in (0, 1], got {weight}", field=f"{cpath}.weight")
        comps.append(ComponentSpec(weight, str(c["label"]), _num_list(c["mean"], f"{cpath}.mean"),
                                   _cov(c.get("cov"), f"{cpath}.cov")))
    total = math.fsum(c.weight for c in comps)
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"component weights sum to {total!r}, must sum to 1",
                          field=f"{cpath}.weight")
    if len({len(c.mean) for c in comps}) != 1:
        raise ConfigError("all component means must have the same dimension", field=f"{cpath}.mean")
    spec = DistributionSpec(tuple(comps),
                            _num(raw.get("radius"), f"{path}.radius", allow_none=True))
    try:
        spec.build()
    except GuidanceLabError as exc:
        raise ConfigError(str(exc), field=cpath) from exc
    return spec


_SCHEDULE_FIELDS = {
    ScheduleKind.VP_LINEAR.value: {"beta_min", "beta_max", "t_max"},
    ScheduleKind.VP_CONSTANT.value: {"beta_const", "t_max"},
    ScheduleKind.VE_GEOMETRIC.value: {"sigma_min", "sigma_max", "t_max"},
}


def _parse_schedule(value, default: NoiseSchedule, path="schedule") -> NoiseSchedule:
    if value is None:
        return default
    raw = _mapping(value, path, {"kind"} | set().union(*_SCHEDULE_FIELDS.values()))
    kind = raw.get("kind", default.kind.value)
    if kind not in _SCHEDULE_FIELDS:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected one of {sorted(_SCHEDULE_FIELDS)}",
                          field=f"{path}.kind")
    _mapping(raw, path, {"kind"} | _SCHEDULE_FIELDS[kind])
    kwargs = {k: _num(v, f"{path}.{k}") for k, v in raw.items() if k != "kind"}
    try:
        return NoiseSchedule(ScheduleKind(kind), **kwargs)
    except DomainError as exc:
        raise ConfigError(str(exc), field=path) from exc


def _parse_guidance(value, default: tuple, t_max: float, path="guidance") -> tuple:
    if value is None:
        return default
    if isinstance(value, dict):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a non-empty list of guidance schedules", field=path)
    out = []
    for item in value:
        if not isinstance(item, dict):
            raise ConfigError(f"expected a mapping, got {item!r}", field=path)
        kind = item.get("kind")
        if kind not in G.guidance_kinds():
            raise ConfigError(f"unknown guidance kind {kind!r}; expected one of {G.guidance_kinds()}",
                              field=f"{path}.kind")
        item = dict(item)
        gpath = f"{path}.{kind}"
        for key, v in list(item.items()):
            if key != "kind":
                item[key] = _num(v, f"{gpath}.{key}")
        spec_cls = {cls.kind: cls for cls in (G.Fixed, G.C2FG, G.Interval, G.Linear, G.ReverseLinear,
                                              G.Sine, G.BetaPDF, G.RatioAdaptive)}[kind]
        if "t_max" in {f.name for f in fields(spec_cls)} and "t_max" not in item:
            item["t_max"] = t_max
        try:
            out.append(G.guidance_from_dict(item))
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc), field=gpath) from exc
    return tuple(out)


def _parse_sampler(value, default: SamplerConfig, path="sampler") -> SamplerConfig:
    if value is None:
        return default
    raw = _mapping(value, path, {"kind", "steps", "t_start", "t_end", "grid", "ode_method"})
    kwargs = {}
    if "kind" in raw:
        kwargs["kind"] = raw["kind"]
    if "steps" in raw:
        kwargs["steps"] = _num(raw["steps"], f"{path}.steps", integer=True)
    for key in ("t_start", "t_end"):
        if key in raw:
            kwargs[key] = _num(raw[key], f"{path}.{key}", allow_none=True)
    for key in ("grid", "ode_method"):
        if key in raw:
            kwargs[key] = raw[key]
    try:
        return SamplerConfig(**kwargs)
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc), field=path) from exc


def _parse_grid(value, path) -> GridSpec:
    conv = {k: (lambda v, p: _num(v, p, integer=True)) if k in ("nx", "ny") else
            (lambda v, p: _num(v, p)) for k in ("x_min", "x_max", "y_min", "y_max", "nx", "ny")}
    return _section(GridSpec, value, path, conv)


def _int_list(v, p):
    return _num_list(v, p, integer=True)


_VERIFY_CONV = {
    "tightness_t": _num_list, "score_configs": lambda v, p: _num(v, p, integer=True),
    "score_t_points": lambda v, p: _num(v, p, integer=True), "score_t_range": _pair,
    "probes": lambda v, p: _num(v, p, integer=True),
    "harnack_pairs": lambda v, p: _num(v, p, integer=True), "alpha_h": _num_list,
    "harnack_dims": _int_list, "kl_a": _num_list, "kl_t": _num_list,
    "kl_mc_log2": lambda v, p: _num(v, p, integer=True),
    "de_bruijn_points": lambda v, p: _num(v, p, integer=True), "de_bruijn_range": _pair,
}
_METRICS_CONV = {
    "mass": _num, "t_eval": lambda v, p: _num(v, p, allow_none=True),
    "mc_samples": lambda v, p: _num(v, p, integer=True),
    "contour_seed": lambda v, p: _num(v, p, integer=True), "energy_distance": _bool,
}

_TOP_LEVEL = {"command", "distribution", "schedule", "guidance", "sampler", "target_class",
              "metrics", "n_samples", "seeds", "threads", "output_dir", "write_samples", "verify",
              "sweep", "heatmap"}


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    labels = cfg.distribution.labels
    if cfg.target_class not in labels:
        raise ConfigError(f"class {cfg.target_class!r} not in distribution labels {labels}",
                          field="target_class")
    if not cfg.seeds:
        raise ConfigError("seeds must be non-empty", field="seeds")
    if any(s < 0 or s >= 2 ** 64 for s in cfg.seeds):
        raise ConfigError("seeds must be unsigned 64-bit integers", field="seeds")
    if cfg.n_samples < 1:
        raise ConfigError("n_samples must be >= 1", field="n_samples")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1", field="threads")
    if not 0 < cfg.metrics.mass < 1:
        raise ConfigError("mass must lie in (0, 1)", field="metrics.mass")
    if cfg.metrics.mc_samples < 1:
        raise ConfigError("mc_samples must be >= 1", field="metrics.mc_samples")
    if not 0 < cfg.t_eval <= cfg.schedule.t_max:
        raise ConfigError(f"t_eval must lie in (0, {cfg.schedule.t_max}]", field="metrics.t_eval")
    t_start = cfg.schedule.t_max if cfg.sampler.t_start is None else cfg.sampler.t_start
    if not cfg.sampler.t_end < t_start <= cfg.schedule.t_max:
        raise ConfigError("need t_end < t_start <= schedule.t_max", field="sampler")
    if cfg.sampler.kind.value == "ddim" and not cfg.schedule.is_vp:
        raise ConfigError("ddim needs a VP schedule", field="sampler.kind")
    for spec in cfg.guidance:
        tm = getattr(spec, "t_max", None)
        if tm is not None and tm != cfg.schedule.t_max:
            raise ConfigError(f"guidance t_max {tm} differs from schedule t_max {cfg.schedule.t_max}",
                              field=f"guidance.{spec.kind}")
    if cfg.command in ("toy2d", "sweep", "heatmap") and len(cfg.distribution.components[0].mean) != 2:
        raise ConfigError(f"{cfg.command} needs a 2-D distribution", field="distribution")
    v = cfg.verify
    if v.score_configs < 1 or v.score_t_points < 2 or v.probes < 2 or v.harnack_pairs < 1:
        raise ConfigError("counts must be positive (t points and probes >= 2)", field="verify")
    if any(a <= 1 for a in v.alpha_h):
        raise ConfigError("alpha_h values must be > 1", field="verify.alpha_h")
    if any(n < 1 for n in v.harnack_dims):
        raise ConfigError("dimensions must be >= 1", field="verify.harnack_dims")
    if cfg.command == "heatmap" and (
            not cfg.heatmap.times or any(not 0 < t <= cfg.schedule.t_max for t in cfg.heatmap.times)):
        raise ConfigError("times must be non-empty and lie in (0, t_max]", field="heatmap.times")
    if not cfg.sweep.omega0 or not cfg.sweep.lam:
        raise ConfigError("sweep grids must be non-empty", field="sweep")
    return cfg


def config_from_dict(raw, command: str | None = None) -> ExperimentConfig:
    raw = _mapping(raw, "", _TOP_LEVEL)
    file_command = raw.get("command")
    if command is not None and file_command is not None and file_command != command:
        raise ConfigError(f"config is for {file_command!r}, not {command!r}", field="command")
    command = command or file_command
    if command is None:
        raise ConfigError("no command given", field="command")
    base = default_config(command)
    schedule = _parse_schedule(raw.get("schedule"), base.schedule)
    changes = {"schedule": schedule}
    if "distribution" in raw:
        changes["distribution"] = _parse_distribution(raw["distribution"])
    if "schedule" in raw and "guidance" not in raw:
        # keep default guidance consistent with a custom horizon
        changes["guidance"] = tuple(
            replace(g, t_max=schedule.t_max) if hasattr(g, "t_max") else g for g in base.guidance)
    else:
        changes["guidance"] = _parse_guidance(raw.get("guidance"), base.guidance, schedule.t_max)
    changes["sampler"] = _parse_sampler(raw.get("sampler"), base.sampler)
    if "target_class" in raw:
        changes["target_class"] = str(raw["target_class"])
    if "metrics" in raw:
        changes["metrics"] = _section(MetricsConfig, raw["metrics"], "metrics", _METRICS_CONV)
    for key in ("n_samples", "threads"):
        if key in raw:
            changes[key] = _num(raw[key], key, integer=True)
    if "seeds" in raw:
        seeds = raw["seeds"]
        changes["seeds"] = (_num(seeds, "seeds", integer=True),) if not isinstance(seeds, list) \
            else _num_list(seeds, "seeds", integer=True)
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigError("expected a path string", field="output_dir")
        changes["output_dir"] = raw["output_dir"]
    if "write_samples" in raw:
        changes["write_samples"] = _bool(raw["write_samples"], "write_samples")
    if "verify" in raw:
        changes["verify"] = _section(VerifyConfig, raw["verify"], "verify", _VERIFY_CONV)
    if "sweep" in raw:
        changes["sweep"] = _section(SweepConfig, raw["sweep"], "sweep",
                                    {"omega0": _num_list, "lam": _num_list})
    if "heatmap" in raw:
        h = _mapping(raw["heatmap"], "heatmap", {"times", "grid"})
        changes["heatmap"] = HeatmapConfig(
            _num_list(h["times"], "heatmap.times") if "times" in h else base.heatmap.times,
            _parse_grid(h["grid"], "heatmap.grid") if "grid" in h else base.heatmap.grid)
    return _validate(replace(base, **changes))


def parse_config(text, command: str | None = None) -> ExperimentConfig:
    """Parse a YAML document (bytes or str) into a validated :class:`ExperimentConfig`."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not valid UTF-8 ({exc.reason})") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ConfigError(str(exc.problem or exc), line=line, column=col) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_dict({} if raw is None else raw, command)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "command": cfg.command,
        "distribution": cfg.distribution.to_dict(),
        "schedule": cfg.schedule.to_dict(),
        "guidance": [g.to_dict() for g in cfg.guidance],
        "sampler": cfg.sampler.to_dict(),
        "target_class": cfg.target_class,
        "metrics": _listify(_asdict_flat(cfg.metrics)),
        "n_samples": cfg.n_samples,
        "seeds": list(cfg.seeds),
        "threads": cfg.threads,
        "output_dir": cfg.output_dir,
        "write_samples": cfg.write_samples,
        "verify": _listify(_asdict_flat(cfg.verify)),
        "sweep": _listify(_asdict_flat(cfg.sweep)),
        "heatmap": {"times": list(cfg.heatmap.times), "grid": _asdict_flat(cfg.heatmap.grid)},
    }


def _asdict_flat(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def serialize_config(cfg: ExperimentConfig, runtime: bool = True) -> str:
    """YAML form; ``runtime=False`` drops threads and output_dir, which never change results."""
    d = config_to_dict(cfg)
    if not runtime:
        del d["threads"], d["output_dir"]
    return yaml.safe_dump(d, sort_keys=False, default_flow_style=None)


def config_hash(cfg: ExperimentConfig) -> str:
    """16 hex digits (64 bits) of SHA-256 over the canonical JSON form.

    Thread count and output directory do not affect results and are left out.
    """
    d = config_to_dict(cfg)
    d.pop("threads")
    d.pop("output_dir")
    canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def with_overrides(cfg: ExperimentConfig, *, out: str | None = None, seed: int | None = None,
                   threads: int | None = None) -> ExperimentConfig:
    """Apply command-line overrides; ``seed`` shifts the seed list to start at ``seed``."""
    changes = {}
    if out is not None:
        changes["output_dir"] = out
    if seed is not None:
        changes["seeds"] = tuple(seed + i for i in range(len(cfg.seeds)))
    if threads is not None:
        changes["threads"] = threads
    return _validate(replace(cfg, **changes)) if changes else cfg
