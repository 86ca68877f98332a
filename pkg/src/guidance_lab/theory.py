"""Numerical checks of the score-gap, Harnack, KL and de Bruijn relations.

Each check returns a :class:`BoundReport` whose points carry ``measured``,
``bound`` and ``margin = bound - measured``. A report passes when every
margin is at least ``-tolerance * max(1, bound)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm, qmc

from . import guidance as G
from .errors import DomainError, UnsupportedDistributionError
from .mixtures import LabeledDistribution, diffuse, log_density, sample_mixture, score
from .samplers import SamplerConfig, generate_with_trace
from .schedule import (NoiseSchedule, beta, marginal_coefficients, score_bound_envelope,
                       vp_coefficients)

SCORE_TOL = 1e-8
HARNACK_TOL = 1e-9
KL_TOL = 1e-6
KL_MC_TOL = 1e-2
DE_BRUIJN_TOL = 1e-3
ZERO_NORM = 1e-12


@dataclass
class BoundPoint:
    t: float
    measured: float
    bound: float
    margin: float
    extra: dict = field(default_factory=dict)


@dataclass
class HarnackSample:
    x1: np.ndarray
    x2: np.ndarray
    s1: float
    s2: float
    alpha_h: float
    m: int
    lhs: float
    rhs: float
    # the same right-hand side with the norm term's sign flipped
    rhs_swapped: float = math.nan


@dataclass
class BoundReport:
    check_name: str
    points: list[BoundPoint]
    passed: bool
    tolerance: float
    samples: list[HarnackSample] | None = None
    notes: dict = field(default_factory=dict)

    @property
    def worst_margin(self) -> float:
        """Smallest margin normalised by ``max(1, bound)``."""
        if not self.points:
            return math.inf
        return min(p.margin / max(1.0, p.bound) for p in self.points)

    def verdict(self) -> dict:
        return {"check": self.check_name, "passed": bool(self.passed),
                "tolerance": self.tolerance, "worst_margin": self.worst_margin}

    def write_csv(self, path) -> None:
        extra_keys = sorted({k for p in self.points for k in p.extra})
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "t", "measured", "bound", "margin", *extra_keys])
            for i, p in enumerate(self.points):
                writer.writerow([i, repr(float(p.t)), repr(float(p.measured)), repr(float(p.bound)),
                                 repr(float(p.margin)), *[repr(p.extra.get(k, "")) for k in extra_keys]])

    def write_verdict(self, path) -> None:
        Path(path).write_text(json.dumps(self.verdict(), indent=2, sort_keys=True) + "\n")


def _passes(points, tolerance) -> bool:
    return all(p.margin >= -tolerance * max(1.0, p.bound) for p in points)


def _report(name, points, tolerance, **kwargs) -> BoundReport:
    return BoundReport(name, points, _passes(points, tolerance), tolerance, **kwargs)


@dataclass(frozen=True)
class ProbeSpec:
    """Probe points: a lattice over the bulk plus draws from the diffused marginal.

    ``count`` is the total; about ``lattice_fraction`` of it goes to the lattice.
    """

    count: int = 512
    lattice_fraction: float = 0.5
    seed: int = 0

    def points(self, mix, alpha: float, sigma: float, radius: float, seed_offset: int = 0):
        d = mix.dimension
        per_axis = int(math.floor((self.count * self.lattice_fraction) ** (1.0 / d) + 1e-9))
        if per_axis >= 2:
            half = alpha * radius + 3.0 * sigma
            axis = np.linspace(-half, half, per_axis)
            lattice = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        else:
            lattice = np.empty((0, d))
        n_draw = self.count - len(lattice)
        draws = sample_mixture(mix, n_draw, self.seed + seed_offset) if n_draw > 0 else np.empty((0, d))
        return np.concatenate([lattice, draws], axis=0)


def check_score_mse_bound(dist0: LabeledDistribution, conditional_class, schedule: NoiseSchedule,
                          t_grid, probes: ProbeSpec = ProbeSpec(), reference=None,
                          tolerance: float = SCORE_TOL) -> BoundReport:
    """Compare ``max_x |score_cond - score_ref|`` with ``(alpha/sigma^2) * 2R`` (VE: ``2R/sigma^2``).

    ``reference`` is another class label, or ``None`` for the unconditional mixture.
    ``R`` is ``dist0.radius``.
    """
    if not dist0.is_all_atoms:
        raise UnsupportedDistributionError(
            "score-gap check needs an all-atom distribution (C = 2R is exact only there)")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid <= 0):
        raise DomainError("t_grid must be > 0")
    radius = dist0.radius
    points = []
    for i, t in enumerate(t_grid):
        cond = diffuse(dist0, schedule, t, restrict_to=conditional_class)
        ref = diffuse(dist0, schedule, t, restrict_to=reference)
        full = diffuse(dist0, schedule, t)
        alpha, sigma = marginal_coefficients(schedule, t)
        x = probes.points(full, alpha, sigma, radius, seed_offset=i)
        gap = np.linalg.norm(score(cond, x) - score(ref, x), axis=1)
        measured = float(np.max(gap))
        bound = float(score_bound_envelope(schedule, t)) * 2.0 * radius
        points.append(BoundPoint(float(t), measured, bound, bound - measured))
    return _report("score_mse_bound", points, tolerance)


def _harnack_log_rhs(kind, log_p2, x1, x2, s1, s2, alpha_h, m, n):
    """Log right-hand side and its norm-term-flipped variant; works row-wise on batches."""
    dim = m if kind == "vp" else n
    dist2 = np.sum((x1 - x2) ** 2, axis=-1)
    rhs = log_p2 + 0.5 * dim * alpha_h * np.log(s2 / s1) + alpha_h ** 2 * dist2 / (4.0 * (s2 - s1))
    if kind == "ve":
        return rhs, rhs
    norm_term = 0.5 * (np.sum(x2 * x2, axis=-1) - np.sum(x1 * x1, axis=-1))
    return rhs + norm_term, rhs - norm_term


def _log_density_batch(kind, x, s, atom):
    s = np.asarray(s, dtype=float)
    n = x.shape[-1]
    if kind == "vp":
        mean, var = np.exp(-s)[..., None] * atom, -np.expm1(-2.0 * s)
    elif kind == "ve":
        mean, var = atom, 2.0 * s
    else:
        raise DomainError(f"kind must be 'vp' or 've', got {kind!r}")
    return -0.5 * n * np.log(2.0 * np.pi * var) - np.sum((x - mean) ** 2, axis=-1) / (2.0 * var)


def harnack_log_density(kind: str, x, s: float, atom) -> float:
    """Log density after reparameterised time ``s`` from a point mass at ``atom``.

    ``vp``: OU marginal ``N(e^{-s} x0, (1 - e^{-2s}) I)``.
    ``ve``: heat kernel ``(4 pi s)^{-n/2} exp(-|x - x0|^2 / (4 s))``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(_log_density_batch(kind, x, s, np.asarray(atom, dtype=float)))


def harnack_sample(kind: str, x1, x2, s1: float, s2: float, alpha_h: float, m: int | None = None,
                   atom=None) -> HarnackSample:
    """Evaluate both sides of the Harnack inequality (log domain) for one pair."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    n = x1.size
    m = n if m is None else int(m)
    if not alpha_h > 1:
        raise DomainError("alpha_h must be > 1")
    if m < n:
        raise DomainError("m must be >= n")
    if not 0 < s1 < s2:
        raise DomainError("need 0 < s1 < s2")
    atom = np.zeros(n) if atom is None else np.asarray(atom, dtype=float)
    lhs = harnack_log_density(kind, x1, s1, atom)
    log_p2 = harnack_log_density(kind, x2, s2, atom)
    rhs, rhs_swapped = _harnack_log_rhs(kind, log_p2, x1, x2, s1, s2, alpha_h, m, n)
    return HarnackSample(x1, x2, float(s1), float(s2), float(alpha_h), m, lhs, float(rhs),
                         float(rhs_swapped))


def check_harnack(kind: str, dist0: LabeledDistribution | None = None, pairs: int = 10_000,
                  alpha_h: float = 2.0, m: int | None = None, seed: int = 0, dimension: int = 1,
                  x_radius: float = 3.0, s_range=(0.05, 5.0),
                  tolerance: float = HARNACK_TOL) -> BoundReport:
    """Random-pair Harnack check from a single point mass (default: the origin).

    ``x1, x2`` are uniform in the ball of radius ``x_radius``; ``s1 < s2`` uniform in ``s_range``.
    """
    if kind not in ("vp", "ve"):
        raise DomainError(f"kind must be 'vp' or 've', got {kind!r}")
    if pairs < 1:
        raise DomainError("pairs must be >= 1")
    if dist0 is None:
        atom = np.zeros(dimension)
    else:
        if len(dist0.components) != 1 or not dist0.is_all_atoms:
            raise UnsupportedDistributionError("Harnack checks need a single-atom distribution")
        atom = dist0.components[0].mean
    n = atom.size
    m = n if m is None else int(m)
    if not alpha_h > 1:
        raise DomainError("alpha_h must be > 1")
    if m < n:
        raise DomainError("m must be >= n")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal((2, pairs, n))
    direction /= np.linalg.norm(direction, axis=2, keepdims=True)
    xs = direction * x_radius * rng.uniform(size=(2, pairs, 1)) ** (1.0 / n)
    s_pair = np.sort(rng.uniform(*s_range, size=(pairs, 2)), axis=1)
    x1, x2 = xs
    s1, s2 = s_pair[:, 0], s_pair[:, 1]
    keep = s1 < s2
    x1, x2, s1, s2 = x1[keep], x2[keep], s1[keep], s2[keep]
    lhs = _log_density_batch(kind, x1, s1, atom)
    rhs, rhs_swapped = _harnack_log_rhs(kind, _log_density_batch(kind, x2, s2, atom),
                                        x1, x2, s1, s2, alpha_h, m, n)
    samples = [HarnackSample(x1[i], x2[i], float(s1[i]), float(s2[i]), float(alpha_h), m,
                             float(lhs[i]), float(rhs[i]), float(rhs_swapped[i]))
               for i in range(len(lhs))]
    points = [BoundPoint(float(i), float(lhs[i]), float(rhs[i]), float(rhs[i] - lhs[i]),
                         {"s1": float(s1[i]), "s2": float(s2[i])}) for i in range(len(lhs))]
    # log-domain: tolerance is absolute in log units
    passed = all(p.margin >= -tolerance for p in points)
    return BoundReport(f"harnack_{kind}", points, passed, tolerance, samples=samples,
                       notes={"alpha_h": alpha_h, "m": m, "atom": atom.tolist()})


def kl_closed_form(a, t: float) -> float:
    """KL between the OU marginals started from point masses at ``+a`` and ``-a``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    alpha, sigma = vp_coefficients(NoiseSchedule.canonical_ou(max(5.0, t)), t)
    delta = 2.0 * alpha * a
    return float(delta @ delta) / (2.0 * sigma * sigma)


def kl_bound(radius: float, t: float) -> float:
    return 2.0 * radius ** 2 * math.exp(-2.0 * t) / (-math.expm1(-2.0 * t))


def kl_monte_carlo(a, t: float, n_log2: int = 20, seed: int = 0) -> float:
    """``E_p[log p - log q]`` with ``2**n_log2`` scrambled-Sobol draws from ``p``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = a.size
    sched = NoiseSchedule.canonical_ou(max(5.0, t))
    plus = LabeledDistribution.atoms([a], ["p"])
    minus = LabeledDistribution.atoms([-a], ["q"])
    p, q = diffuse(plus, sched, t), diffuse(minus, sched, t)
    u = qmc.Sobol(d, scramble=True, seed=seed).random_base2(n_log2)
    z = norm.ppf(u)
    x = p.means[0] + z @ p.chol[0].T
    return float(np.mean(log_density(p, x) - log_density(q, x)))


def check_kl_bound(a, t_grid, seed: int = 0, mc_log2: int = 20,
                   tolerance: float = KL_TOL, mc_tolerance: float = KL_MC_TOL) -> BoundReport:
    """Closed-form KL against ``2R^2 e^{-2t} / (1 - e^{-2t})`` with ``R = |a|``.

    Each point also carries a quasi-Monte-Carlo estimate; the report passes only if
    those agree with the closed form within ``mc_tolerance`` (relative).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    radius = float(np.linalg.norm(a))
    points = []
    mc_ok = True
    for t in np.atleast_1d(np.asarray(t_grid, dtype=float)):
        if not t > 0:
            raise DomainError("t_grid must be > 0")
        kl = kl_closed_form(a, t)
        bound = kl_bound(radius, t)
        mc = kl_monte_carlo(a, t, mc_log2, seed) if radius > 0 else 0.0
        rel = abs(mc - kl) / kl if kl > 0 else abs(mc)
        mc_ok &= rel <= mc_tolerance
        points.append(BoundPoint(float(t), kl, bound, bound - kl, {"mc": mc, "mc_rel_error": rel}))
    report = _report("kl_bound", points, tolerance, notes={"mc_tolerance": mc_tolerance})
    report.passed = report.passed and mc_ok
    return report


def _two_atom_kl(a1, a2, t):
    alpha, sigma = vp_coefficients(NoiseSchedule.canonical_ou(max(5.0, t + 1.0)), t)
    delta = alpha * (a1 - a2)
    return float(delta @ delta) / (2.0 * sigma * sigma)


def relative_fisher(a1, a2, t: float) -> float:
    """``|score_p - score_q|^2`` for OU marginals from point masses ``a1``, ``a2``.

    The two marginals share a covariance, so the score gap is constant in ``x``.
    """
    a1 = np.atleast_1d(np.asarray(a1, dtype=float))
    a2 = np.atleast_1d(np.asarray(a2, dtype=float))
    sched = NoiseSchedule.canonical_ou(max(5.0, t + 1.0))
    p = diffuse(LabeledDistribution.atoms([a1], ["p"]), sched, t)
    q = diffuse(LabeledDistribution.atoms([a2], ["q"]), sched, t)
    x = p.means[0]
    gap = score(p, x) - score(q, x)
    return float(gap @ gap)


def check_de_bruijn(a1, a2, t_grid, step: float = 1e-4,
                    tolerance: float = DE_BRUIJN_TOL) -> BoundReport:
    """Central difference of ``KL(t)`` against ``-1/2 g^2 I(t)`` (``= -I`` for the unit OU)."""
    a1 = np.atleast_1d(np.asarray(a1, dtype=float))
    a2 = np.atleast_1d(np.asarray(a2, dtype=float))
    sched = NoiseSchedule.canonical_ou()
    points = []
    for t in np.atleast_1d(np.asarray(t_grid, dtype=float)):
        if not t > step:
            raise DomainError("t_grid must exceed the finite-difference step")
        deriv = (_two_atom_kl(a1, a2, t + step) - _two_atom_kl(a1, a2, t - step)) / (2.0 * step)
        target = -0.5 * float(beta(sched, min(t, sched.t_max))) * relative_fisher(a1, a2, t)
        rel = abs(deriv - target) / abs(target) if target != 0 else abs(deriv)
        points.append(BoundPoint(float(t), deriv, target, -rel, {"relative_error": rel}))
    report = _report("de_bruijn", points, tolerance)
    report.passed = all(p.extra["relative_error"] <= tolerance for p in points)
    return report


def cosine_similarity(a, b):
    """Row-wise cosine; rows where either vector is zero count as 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, np.sum(a * b, axis=-1) / safe, 1.0)


@dataclass
class TraceRecord:
    t: float
    mse: float
    cosine: float
    bound: float


def default_trace_config() -> SamplerConfig:
    # uniform grid: a geometric one crowds the late steps, where both posteriors
    # have collapsed onto the same atom and the cosine climbs back toward 1
    return SamplerConfig(kind="pf_ode", steps=100, t_end=0.05, grid="uniform")


def discrepancy_trace(dist0: LabeledDistribution, conditional_class, schedule: NoiseSchedule,
                      config: SamplerConfig | None = None, n_traj: int = 256, seed: int = 0,
                      guidance=None, threads: int = 1, uncond_dist=None) -> list[TraceRecord]:
    """Score-gap statistics along guided reverse trajectories.

    ``bound`` is the score-gap envelope ``2R * alpha/sigma^2`` (NaN unless ``dist0`` is all atoms).
    """
    config = default_trace_config() if config is None else config
    guidance = G.Fixed(1.0) if guidance is None else guidance
    _, trace = generate_with_trace(dist0, schedule, guidance, conditional_class, config, n_traj, seed,
                                   threads=threads, uncond_dist=uncond_dist)
    gap = trace.score_cond - trace.score_uncond
    mse = np.mean(np.sum(gap * gap, axis=-1), axis=1)
    cos = np.mean(cosine_similarity(trace.score_cond, trace.score_uncond), axis=1)
    if dist0.is_all_atoms:
        bound = np.asarray(score_bound_envelope(schedule, trace.times)) * 2.0 * dist0.radius
    else:
        bound = np.full(len(trace.times), math.nan)
    return [TraceRecord(float(t), float(m), float(c), float(b))
            for t, m, c, b in zip(trace.times, mse, cos, bound)]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular 2-D lattice ``[x_min, x_max] x [y_min, y_max]`` with ``nx * ny`` points."""

    x_min: float = -3.0
    x_max: float = 3.0
    y_min: float = -3.0
    y_max: float = 3.0
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise DomainError("grid must have at least one point per axis")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DomainError("grid bounds must be ordered")

    def axes(self):
        return np.linspace(self.x_min, self.x_max, self.nx), np.linspace(self.y_min, self.y_max, self.ny)

    def points(self):
        xs, ys = self.axes()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def log_ratio_grid(dist0: LabeledDistribution, conditional_class, schedule: NoiseSchedule, t: float,
                   grid: GridSpec = GridSpec()) -> np.ndarray:
    """``log2(|score_cond| / |score_uncond|)`` on a 2-D lattice, shape ``(nx, ny)``.

    Entries where ``|score_uncond| < 1e-12`` are NaN (undefined), as are entries
    where the conditional score vanishes.
    """
    if dist0.dimension != 2:
        raise DomainError("log_ratio_grid works on 2-D distributions")
    x = grid.points()
    cond = diffuse(dist0, schedule, t, restrict_to=conditional_class)
    full = diffuse(dist0, schedule, t)
    nc = np.linalg.norm(score(cond, x), axis=1)
    nu = np.linalg.norm(score(full, x), axis=1)
    defined = (nu >= ZERO_NORM) & (nc >= ZERO_NORM)
    out = np.full(len(x), math.nan)
    out[defined] = np.log2(nc[defined] / nu[defined])
    return out.reshape(grid.nx, grid.ny)
