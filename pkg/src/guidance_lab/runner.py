"""Experiment pipelines behind the command-line entry point.

Each run writes to ``<output_dir>/<command>/<config-hash>/``: CSV artifacts,
``summary.json`` and ``manifest.json``. CSV rows start with ``config_hash`` and
``seed`` columns. Floats are written with ``repr`` so files are byte-stable.
Only ``manifest.json`` holds wall-clock timings.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr
from scipy.stats import t as student_t

from . import guidance as G
from . import theory as T
from .config import ExperimentConfig, config_hash, serialize_config
from .metrics import class_fidelity, contour_threshold, energy_distance, outlier_rate
from .mixtures import LabeledDistribution, diffuse, sample_mixture
from .samplers import generate
from .schedule import NoiseSchedule, score_bound_envelope

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


@dataclass
class RunManifest:
    config_hash: str
    command: str
    output_dir: str
    artifacts: list[str] = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "undefined" if math.isnan(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


class _Artifacts:
    def __init__(self, root: Path, chash: str):
        self.root = root
        self.chash = chash
        self.files: list[str] = []

    def csv(self, name: str, header: list[str], rows, seed) -> None:
        """Write rows; ``seed`` is a constant or ``None`` when rows carry their own seed first."""
        path = self.root / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if seed is None:
                writer.writerow(["config_hash", *header])
                for row in rows:
                    writer.writerow([self.chash, *map(_fmt, row)])
            else:
                writer.writerow(["config_hash", "seed", *header])
                for row in rows:
                    writer.writerow([self.chash, seed, *map(_fmt, row)])
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        (self.root / name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def text(self, name: str, text: str) -> None:
        (self.root / name).write_text(text)
        self.files.append(name)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_directory(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir) / cfg.command / config_hash(cfg)


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute the configured pipeline and persist its artifacts."""
    chash = config_hash(cfg)
    root = run_directory(cfg)
    root.mkdir(parents=True, exist_ok=True)
    arts = _Artifacts(root, chash)
    manifest = RunManifest(chash, cfg.command, str(root))
    arts.text("config.yaml", serialize_config(cfg, runtime=False))
    pipeline = {"verify": _verify, "toy2d": _toy2d, "sweep": _sweep, "trace": _trace,
                "heatmap": _heatmap}[cfg.command]
    summary = pipeline(cfg, arts, manifest)
    summary.update({"command": cfg.command, "config_hash": chash, "seeds": list(cfg.seeds),
                    "sampler_kind": cfg.sampler.kind.value, "verdicts": manifest.verdicts,
                    "passed": manifest.passed})
    arts.json("summary.json", summary)
    manifest.artifacts = list(arts.files)
    digests = {name: hashlib.sha256((root / name).read_bytes()).hexdigest() for name in arts.files}
    (root / "manifest.json").write_text(json.dumps(_jsonable({
        "config_hash": chash, "command": cfg.command, "artifacts": manifest.artifacts,
        "sha256": digests, "verdicts": manifest.verdicts, "timings_s": manifest.timings,
        "exit_code": manifest.exit_code, "threads": cfg.threads, "output_dir": cfg.output_dir,
    }), indent=2, sort_keys=True) + "\n")
    return manifest


class _Stage:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = time.perf_counter() - self.start
        return False


# ---------------------------------------------------------------- verify


def random_atom_config(rng: np.random.Generator, max_atoms: int = 8, max_dim: int = 3,
                       max_radius: float = 2.0) -> LabeledDistribution:
    """Random two-class point-mass distribution with both classes present."""
    k = int(rng.integers(2, max_atoms + 1))
    d = int(rng.integers(1, max_dim + 1))
    radius = float(rng.uniform(0.1, max_radius))
    direction = rng.standard_normal((k, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    locs = direction * radius * rng.uniform(size=(k, 1)) ** (1.0 / d)
    labels = ["a"] + ["b"] + [str(rng.choice(["a", "b"])) for _ in range(k - 2)]
    weights = rng.dirichlet(np.ones(k))
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return LabeledDistribution.atoms(locs, labels, weights=weights, radius=radius)


def score_suite(kind: str, configs: int, t_points: int, t_range, probes: int, seed: int):
    """Score-gap bound over random atom configurations; returns the list of reports."""
    rng = np.random.default_rng([seed, 0 if kind == "vp" else 1])
    t_max = t_range[1]
    sched = NoiseSchedule.canonical_ou(t_max) if kind == "vp" else NoiseSchedule.ve_geometric(t_max=t_max)
    t_grid = np.linspace(t_range[0], t_range[1], t_points)
    reports = []
    for i in range(configs):
        dist = random_atom_config(rng)
        reports.append(T.check_score_mse_bound(dist, "a", sched, t_grid,
                                               T.ProbeSpec(count=probes, seed=seed * 1000 + i)))
    return reports


def _verify(cfg: ExperimentConfig, arts: _Artifacts, manifest: RunManifest) -> dict:
    v = cfg.verify
    seed = cfg.seeds[0]
    checks = {}

    def record(name, report, rows=None, header=None):
        if rows is None:
            header = ["index", "t", "measured", "bound", "margin"]
            rows = [(i, p.t, p.measured, p.bound, p.margin) for i, p in enumerate(report.points)]
        arts.csv(f"{name}.csv", header, rows, seed)
        manifest.verdicts[name] = bool(report.passed)
        checks[name] = report.verdict()

    with _Stage(manifest, "score_tightness"):
        two = two_atom_distribution()
        ou = NoiseSchedule.canonical_ou()
        rep = T.check_score_mse_bound(two, "+", ou, v.tightness_t, reference="-")
        rel = [abs(p.margin) / p.bound for p in rep.points]
        rep.passed = rep.passed and max(rel) <= 1e-9
        record("score_tightness", rep,
               [(i, p.t, p.measured, p.bound, p.margin, r) for i, (p, r) in enumerate(zip(rep.points, rel))],
               ["index", "t", "measured", "bound", "margin", "relative_gap"])

    for kind in ("vp", "ve"):
        with _Stage(manifest, f"score_suite_{kind}"):
            reports = score_suite(kind, v.score_configs, v.score_t_points, v.score_t_range, v.probes,
                                  seed)
            rows = [(c, i, p.t, p.measured, p.bound, p.margin)
                    for c, r in enumerate(reports) for i, p in enumerate(r.points)]
            arts.csv(f"score_suite_{kind}.csv", ["config", "index", "t", "measured", "bound", "margin"],
                     rows, seed)
            name = f"score_suite_{kind}"
            manifest.verdicts[name] = all(r.passed for r in reports)
            checks[name] = {"check": name, "passed": manifest.verdicts[name],
                            "tolerance": T.SCORE_TOL,
                            "worst_margin": min(r.worst_margin for r in reports),
                            "violations": sum(not r.passed for r in reports)}

    with _Stage(manifest, "harnack"):
        rows = []
        for kind in ("vp", "ve"):
            for a in v.alpha_h:
                for n in v.harnack_dims:
                    rep = T.check_harnack(kind, pairs=v.harnack_pairs, alpha_h=a, dimension=n,
                                          seed=seed)
                    name = f"harnack_{kind}_a{a:g}_n{n}"
                    manifest.verdicts[name] = bool(rep.passed)
                    checks[name] = rep.verdict()
                    rows.extend((kind, a, n, i, s.s1, s.s2, s.lhs, s.rhs, s.rhs - s.lhs, s.rhs_swapped)
                                for i, s in enumerate(rep.samples))
        arts.csv("harnack.csv", ["kind", "alpha_h", "n", "pair", "s1", "s2", "lhs", "rhs", "margin",
                                 "rhs_norm_term_flipped"], rows, seed)
        closed = T.harnack_sample("ve", [0.0], [0.0], 1.0, 2.0, 2.0)
        expected_lhs = -0.5 * math.log(4.0 * math.pi)
        expected_rhs = expected_lhs + 0.5 * math.log(2.0)
        ok = abs(closed.lhs - expected_lhs) <= 1e-12 and abs(closed.rhs - expected_rhs) <= 1e-12
        manifest.verdicts["harnack_ve_closed_form"] = ok
        checks["harnack_ve_closed_form"] = {"check": "harnack_ve_closed_form", "passed": ok,
                                            "lhs": closed.lhs, "rhs": closed.rhs}

    with _Stage(manifest, "kl_bound"):
        rows = []
        ok = True
        for a in v.kl_a:
            rep = T.check_kl_bound([a], v.kl_t, seed=seed, mc_log2=v.kl_mc_log2)
            rel = [abs(p.margin) / p.bound for p in rep.points]
            ok &= rep.passed and max(rel) <= T.KL_TOL
            rows.extend((a, p.t, p.measured, p.bound, p.margin, p.extra["mc"], p.extra["mc_rel_error"])
                        for p in rep.points)
        arts.csv("kl_bound.csv", ["a", "t", "measured", "bound", "margin", "mc", "mc_rel_error"],
                 rows, seed)
        manifest.verdicts["kl_bound"] = bool(ok)
        checks["kl_bound"] = {"check": "kl_bound", "passed": bool(ok), "tolerance": T.KL_TOL,
                              "mc_tolerance": T.KL_MC_TOL}

    with _Stage(manifest, "de_bruijn"):
        grid = np.linspace(*v.de_bruijn_range, v.de_bruijn_points)
        rng = np.random.default_rng([seed, 2])
        rows, ok = [], True
        for name, (a1, a2) in (("pm1", ([1.0], [-1.0])),
                               ("random2d", (rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)))):
            rep = T.check_de_bruijn(a1, a2, grid)
            ok &= rep.passed
            rows.extend((name, p.t, p.measured, p.bound, p.extra["relative_error"]) for p in rep.points)
        arts.csv("de_bruijn.csv", ["case", "t", "dkl_dt", "minus_half_g2_fisher", "relative_error"],
                 rows, seed)
        manifest.verdicts["de_bruijn"] = bool(ok)
        checks["de_bruijn"] = {"check": "de_bruijn", "passed": bool(ok), "tolerance": T.DE_BRUIJN_TOL}

    with _Stage(manifest, "envelope"):
        rows, ok = [], True
        for label, sched in (("vp", NoiseSchedule.canonical_ou()),
                             ("ve", NoiseSchedule.ve_geometric(t_max=5.0))):
            ts = np.linspace(0.05, 5.0, 100)
            env = np.asarray(score_bound_envelope(sched, ts))
            ok &= bool(np.all(np.diff(env) < 0))
            rows.extend((label, t, e) for t, e in zip(ts, env))
        arts.csv("envelope.csv", ["kind", "t", "alpha_over_sigma2"], rows, seed)
        manifest.verdicts["envelope_monotone"] = ok
        checks["envelope_monotone"] = {"check": "envelope_monotone", "passed": ok}

    return {"checks": checks}


def two_atom_distribution(dimension: int = 1, a: float = 1.0) -> LabeledDistribution:
    e = np.zeros(dimension)
    e[0] = a
    return LabeledDistribution.atoms([e, -e], ["+", "-"])


# ---------------------------------------------------------------- toy2d / sweep


def _ci95(values) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return math.nan
    return float(student_t.ppf(0.975, len(values) - 1) * np.std(values, ddof=1) / math.sqrt(len(values)))


def _stats(values) -> dict:
    values = np.asarray(values, dtype=float)
    return {"mean": float(np.mean(values)),
            "std": float(np.std(values, ddof=1)) if len(values) > 1 else math.nan,
            "ci95": _ci95(values)}


class _Evaluator:
    """Shared reference objects for scoring generated batches."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dist = cfg.distribution.build()
        self.t_eval = cfg.t_eval
        self.reference = diffuse(self.dist, cfg.schedule, self.t_eval, restrict_to=cfg.target_class)
        self.contour = contour_threshold(self.reference, cfg.metrics.mass, cfg.metrics.mc_samples,
                                         cfg.metrics.contour_seed)

    def sample(self, spec, seed):
        return generate(self.dist, self.cfg.schedule, spec, self.cfg.target_class, self.cfg.sampler,
                        self.cfg.n_samples, seed, threads=self.cfg.threads).samples

    def metrics(self, samples, seed) -> dict:
        out = {"outlier_rate": outlier_rate(samples, self.contour),
               "class_fidelity": class_fidelity(samples, self.dist, self.cfg.schedule, self.t_eval,
                                                self.cfg.target_class)}
        if self.cfg.metrics.energy_distance:
            exact = sample_mixture(self.reference, len(samples), [seed, 1])
            out["energy_distance"] = energy_distance(samples, exact)
        return out


def toy_ordering(per_guidance: dict, labels_by_kind: dict) -> dict:
    """Outlier-rate ordering c2fg < fixed < beta_pdf and the fidelity side condition."""
    needed = ("c2fg", "fixed", "beta_pdf")
    if not all(k in labels_by_kind for k in needed):
        return {"evaluated": False}
    c, f, b = (per_guidance[labels_by_kind[k]] for k in needed)
    oc, of, ob = c["outlier_rate"], f["outlier_rate"], b["outlier_rate"]
    return {
        "evaluated": True,
        "outlier_order_holds": oc["mean"] < of["mean"] < ob["mean"],
        "c2fg_beta_ci_disjoint": oc["mean"] + oc["ci95"] < ob["mean"] - ob["ci95"],
        "c2fg_fidelity_ok": c["class_fidelity"]["mean"] >= f["class_fidelity"]["mean"] - 0.01,
    }


def _toy2d(cfg: ExperimentConfig, arts: _Artifacts, manifest: RunManifest) -> dict:
    with _Stage(manifest, "contour"):
        ev = _Evaluator(cfg)
    rows, sample_rows = [], []
    per_guidance, labels_by_kind = {}, {}
    for spec in cfg.guidance:
        label = G.guidance_label(spec)
        labels_by_kind.setdefault(spec.kind, label)
        values = {}
        with _Stage(manifest, f"generate:{label}"):
            for seed in cfg.seeds:
                samples = ev.sample(spec, seed)
                m = ev.metrics(samples, seed)
                for key, val in m.items():
                    values.setdefault(key, []).append(val)
                rows.append((seed, label, *m.values()))
                if cfg.write_samples:
                    sample_rows.extend((seed, label, i, *x) for i, x in enumerate(samples))
        per_guidance[label] = {k: _stats(v) for k, v in values.items()}
    metric_names = list(values)
    arts.csv("runs.csv", ["seed", "guidance", *metric_names], rows, None)
    if cfg.write_samples:
        dims = [f"x{j}" for j in range(cfg.distribution.build().dimension)]
        arts.csv("samples.csv", ["seed", "guidance", "index", *dims], sample_rows, None)
    ordering = toy_ordering(per_guidance, labels_by_kind)
    if ordering["evaluated"]:
        manifest.verdicts["toy_ordering"] = bool(ordering["outlier_order_holds"]
                                                 and ordering["c2fg_beta_ci_disjoint"]
                                                 and ordering["c2fg_fidelity_ok"])
    return {"per_guidance": per_guidance, "ordering": ordering,
            "contour": {"mass": ev.contour.mass, "log_threshold": ev.contour.log_threshold,
                        "mc_samples": ev.contour.mc_samples, "t_eval": ev.t_eval}}


def _sweep(cfg: ExperimentConfig, arts: _Artifacts, manifest: RunManifest) -> dict:
    with _Stage(manifest, "contour"):
        ev = _Evaluator(cfg)
    rows, cells = [], []
    with _Stage(manifest, "sweep"):
        for w0 in cfg.sweep.omega0:
            for lam in cfg.sweep.lam:
                spec = G.C2FG(w0, lam, cfg.schedule.t_max)
                values = {}
                for seed in cfg.seeds:
                    m = ev.metrics(ev.sample(spec, seed), seed)
                    for key, val in m.items():
                        values.setdefault(key, []).append(val)
                    rows.append((seed, w0, lam, *m.values()))
                cells.append({"omega0": w0, "lambda": lam, **{k: _stats(v) for k, v in values.items()}})
    arts.csv("sweep.csv", ["seed", "omega0", "lambda", *values], rows, None)
    return {"cells": cells}


# ---------------------------------------------------------------- trace / heatmap


def _trace(cfg: ExperimentConfig, arts: _Artifacts, manifest: RunManifest) -> dict:
    dist = cfg.distribution.build()
    results = {}
    rows = []
    with _Stage(manifest, "trace"):
        for seed in cfg.seeds:
            recs = T.discrepancy_trace(dist, cfg.target_class, cfg.schedule, cfg.sampler, cfg.n_samples,
                                       seed, guidance=cfg.guidance[0], threads=cfg.threads)
            rows.extend((seed, i, r.t, r.mse, r.cosine, r.bound) for i, r in enumerate(recs))
            ts = np.array([r.t for r in recs])
            cos = np.array([r.cosine for r in recs])
            rho = float(spearmanr(cos, ts)[0]) if np.ptp(cos) > 0 else math.nan
            within = bool(all(r.mse <= r.bound ** 2 for r in recs)) if dist.is_all_atoms else None
            results[str(seed)] = {"spearman_cosine_t": rho, "mse_within_bound_sq": within}
    arts.csv("trace.csv", ["seed", "step", "t", "mse", "cosine", "bound"], rows, None)
    if dist.is_all_atoms:
        manifest.verdicts["mse_within_bound_sq"] = all(r["mse_within_bound_sq"] for r in results.values())
    return {"per_seed": results}


def _heatmap(cfg: ExperimentConfig, arts: _Artifacts, manifest: RunManifest) -> dict:
    dist = cfg.distribution.build()
    grid = cfg.heatmap.grid
    xs, ys = grid.axes()
    rows, stats = [], {}
    with _Stage(manifest, "heatmap"):
        for t in cfg.heatmap.times:
            mat = T.log_ratio_grid(dist, cfg.target_class, cfg.schedule, t, grid)
            for i in range(grid.nx):
                for j in range(grid.ny):
                    rows.append((t, i, j, xs[i], ys[j], mat[i, j]))
            finite = mat[np.isfinite(mat)]
            stats[repr(float(t))] = {"max_abs": float(np.max(np.abs(finite))) if finite.size else math.nan,
                                     "undefined": int(np.sum(~np.isfinite(mat)))}
    arts.csv("heatmap.csv", ["t", "ix", "iy", "x", "y", "log2_ratio"], rows, cfg.seeds[0])
    return {"per_t": stats, "shape": [grid.nx, grid.ny]}
