"""Forward sampling and guided reverse-time generation with exact scores.

Three reverse integrators are provided:

* ``reverse_sde``: Euler-Maruyama on ``dx = [f x - g^2 s] dt + g dw_bar``
* ``pf_ode``: explicit Euler (or midpoint) on ``dx = [f x - 1/2 g^2 s] dt``
* ``ddim``: the deterministic recursion on epsilon predictions
  ``x0_hat = (x - sqrt(1 - abar_t) eps) / sqrt(abar_t)``,
  ``x_next = sqrt(abar_next) x0_hat + sqrt(1 - abar_next) eps``

where ``s`` (or ``eps``) is the classifier-free combination of the exact
class-conditional and unconditional fields at the current grid time.

Every trajectory draws its noise from its own ``SeedSequence(seed,
spawn_key=(index,))`` stream and trajectories are processed in fixed-size
chunks, so the number of worker threads never changes the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import guidance as G
from .errors import DegenerateDensityError, DivergedTrajectoryError, DomainError, KindMismatchError
from .mixtures import LabeledDistribution, diffuse, sample_mixture, score
from .schedule import NoiseSchedule, beta, drift_coefficient, marginal_coefficients

CHUNK_SIZE = 256
NORM_CAP = 1e6
DEFAULT_T0 = 0.05


class SamplerKind(str, Enum):
    REVERSE_SDE = "reverse_sde"
    PF_ODE = "pf_ode"
    DDIM = "ddim"


@dataclass(frozen=True)
class SamplerConfig:
    kind: SamplerKind = SamplerKind.DDIM
    steps: int = 250
    t_start: float | None = None
    t_end: float | None = None
    grid: str | None = None
    ode_method: str = "euler"

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind(self.kind))
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        if self.t_end is None:
            object.__setattr__(self, "t_end", 0.0 if self.kind is SamplerKind.DDIM else DEFAULT_T0)
        if self.grid is None:
            object.__setattr__(self, "grid", "uniform" if self.kind is SamplerKind.DDIM else "geometric")
        if self.grid not in ("uniform", "geometric"):
            raise DomainError(f"grid must be 'uniform' or 'geometric', got {self.grid!r}")
        if self.ode_method not in ("euler", "midpoint"):
            raise DomainError("ode_method must be 'euler' or 'midpoint'")
        if self.t_end < 0:
            raise DomainError("t_end must be >= 0")
        if self.t_start is not None and not self.t_end < self.t_start:
            raise DomainError("t_end must be < t_start")
        if self.grid == "geometric" and self.t_end <= 0:
            raise DomainError("a geometric grid needs t_end > 0")

    def time_grid(self, schedule: NoiseSchedule) -> np.ndarray:
        """Descending times ``t_0 = t_start > ... > t_steps = t_end``."""
        t_start = schedule.t_max if self.t_start is None else self.t_start
        if not (self.t_end < t_start <= schedule.t_max + 1e-12):
            raise DomainError(f"need t_end < t_start <= t_max, got {self.t_end}, {t_start}")
        if self.grid == "uniform":
            ts = np.linspace(t_start, self.t_end, self.steps + 1)
        else:
            frac = np.arange(self.steps, -1, -1) / self.steps
            ts = self.t_end * (t_start / self.t_end) ** frac
            ts[0], ts[-1] = t_start, self.t_end
        return ts

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "steps": self.steps, "t_start": self.t_start,
                "t_end": self.t_end, "grid": self.grid, "ode_method": self.ode_method}


@dataclass
class SampleBatch:
    samples: np.ndarray
    target_class: object
    guidance: object
    seed: int
    trajectory_times: np.ndarray | None = None
    config: SamplerConfig | None = None


@dataclass
class Trace:
    """Per-step records aligned with ``times`` (the evaluation time of each step)."""

    times: np.ndarray
    x: np.ndarray
    score_cond: np.ndarray
    score_uncond: np.ndarray
    omega: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


def _substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _chunks(n: int):
    return [(lo, min(lo + CHUNK_SIZE, n)) for lo in range(0, n, CHUNK_SIZE)]


def _run_chunks(fn, n: int, threads: int):
    chunks = _chunks(n)
    if threads <= 1 or len(chunks) == 1:
        return [fn(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def forward_sample(dist0: LabeledDistribution, schedule: NoiseSchedule, t: float, n: int,
                   seed: int) -> SampleBatch:
    """Exact draws from the diffused marginal at time ``t``."""
    mix = diffuse(dist0, schedule, t)
    return SampleBatch(sample_mixture(mix, n, seed), None, None, seed, np.array([t]))


class _Fields:
    """Diffused conditional/unconditional mixtures precomputed on a time grid."""

    def __init__(self, dist0, uncond_dist, schedule, target_class, times):
        self.schedule = schedule
        self.dist0, self.uncond_dist, self.target = dist0, uncond_dist, target_class
        self.cond = []
        self.uncond = []
        for t in times:
            try:
                self.cond.append(diffuse(dist0, schedule, t, restrict_to=target_class))
                self.uncond.append(diffuse(uncond_dist, schedule, t))
            except DegenerateDensityError as exc:
                raise DomainError(
                    f"grid time {t} has no density for atom components; raise t_end") from exc

    def scores(self, i: int, x):
        return score(self.cond[i], x), score(self.uncond[i], x)

    def scores_at(self, t: float, x):
        cond = diffuse(self.dist0, self.schedule, t, restrict_to=self.target)
        return score(cond, x), score(diffuse(self.uncond_dist, self.schedule, t), x)


def _weights(spec, t, s_cond, s_uncond, sigma):
    if spec.needs_ratio:
        eps_c = G.eps_from_score(s_cond, sigma)
        eps_u = G.eps_from_score(s_uncond, sigma)
        ratio = G.guidance_ratio(eps_c, eps_u, spec.delta)
        return G.omega(spec, t, ratio)
    return G.omega(spec, t)


def _check_state(x, step, t):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > NORM_CAP:
        raise DivergedTrajectoryError(step, t)


def _integrate(fields: _Fields, spec, config: SamplerConfig, ts: np.ndarray, x: np.ndarray,
               noise: np.ndarray | None, record: bool):
    """Integrate one chunk. ``noise`` has shape ``(steps, n, d)`` for the SDE."""
    sched = fields.schedule
    steps = len(ts) - 1
    rec = {"x": [], "sc": [], "su": [], "w": []} if record else None
    kind = config.kind
    if kind is SamplerKind.DDIM:
        abar = np.asarray(marginal_coefficients(sched, ts)[0]) ** 2
    for i in range(steps):
        t, t_next = ts[i], ts[i + 1]
        h = t - t_next
        s_c, s_u = fields.scores(i, x)
        _, sigma = marginal_coefficients(sched, t)
        w = _weights(spec, t, s_c, s_u, sigma)
        if record:
            rec["x"].append(x.copy())
            rec["sc"].append(s_c)
            rec["su"].append(s_u)
            rec["w"].append(np.broadcast_to(np.asarray(w, dtype=float), (x.shape[0],)).copy())
        if kind is SamplerKind.DDIM:
            eps = G.combine(G.eps_from_score(s_c, sigma), G.eps_from_score(s_u, sigma), w)
            x0_hat = (x - math.sqrt(1.0 - abar[i]) * eps) / math.sqrt(abar[i])
            x = math.sqrt(abar[i + 1]) * x0_hat + math.sqrt(max(1.0 - abar[i + 1], 0.0)) * eps
        else:
            guided = G.combine(s_c, s_u, w)
            f = drift_coefficient(sched, t)
            g2 = beta(sched, t)
            if kind is SamplerKind.REVERSE_SDE:
                x = x - h * (f * x - g2 * guided) + math.sqrt(g2 * h) * noise[i]
            elif config.ode_method == "euler":
                x = x - h * (f * x - 0.5 * g2 * guided)
            else:
                x = _midpoint_step(fields, spec, sched, x, t, h, f, g2, guided)
        _check_state(x, i, t_next)
    return x, rec


def _midpoint_step(fields, spec, sched, x, t, h, f, g2, guided):
    # the half-step fields are diffused on demand; midpoint is an opt-in refinement
    t_mid = t - 0.5 * h
    x_mid = x - 0.5 * h * (f * x - 0.5 * g2 * guided)
    s_c, s_u = fields.scores_at(t_mid, x_mid)
    _, sigma = marginal_coefficients(sched, t_mid)
    w = _weights(spec, t_mid, s_c, s_u, sigma)
    g_mid = G.combine(s_c, s_u, w)
    f_mid = drift_coefficient(sched, t_mid)
    g2_mid = beta(sched, t_mid)
    return x - h * (f_mid * x_mid - 0.5 * g2_mid * g_mid)


def _prior_scale(schedule: NoiseSchedule, t_start: float) -> float:
    if schedule.is_vp:
        # alpha(t_max) is taken as ~0: the VP prior is N(0, I)
        return 1.0
    return float(marginal_coefficients(schedule, t_start)[1])


def _generate(dist0, schedule, spec, target_class, config, n, seed, threads, uncond_dist, record):
    if n < 1:
        raise DomainError("n must be >= 1")
    if config.kind is SamplerKind.DDIM and not schedule.is_vp:
        raise KindMismatchError("ddim requires a VP schedule")
    dist0.class_prior(target_class)
    uncond_dist = dist0 if uncond_dist is None else uncond_dist
    if (dist0.has_atoms or uncond_dist.has_atoms) and config.t_end < DEFAULT_T0:
        raise DomainError(f"point-mass components need t_end >= {DEFAULT_T0}, got {config.t_end}")
    ts = config.time_grid(schedule)
    fields = _Fields(dist0, uncond_dist, schedule, target_class, ts[:-1])
    d = dist0.dimension
    steps = config.steps
    scale = _prior_scale(schedule, ts[0])
    stochastic = config.kind is SamplerKind.REVERSE_SDE

    def run(lo, hi):
        m = hi - lo
        x = np.empty((m, d))
        noise = np.empty((steps, m, d)) if stochastic else None
        for j in range(m):
            rng = _substream(seed, lo + j)
            draws = rng.standard_normal((1 + (steps if stochastic else 0), d))
            x[j] = scale * draws[0]
            if stochastic:
                noise[:, j, :] = draws[1:]
        return _integrate(fields, spec, config, ts, x, noise, record)

    parts = _run_chunks(run, n, threads)
    samples = np.concatenate([p[0] for p in parts], axis=0)
    batch = SampleBatch(samples, target_class, spec, seed, ts, config)
    if not record:
        return batch, None
    trace = Trace(
        times=ts[:-1].copy(),
        x=np.concatenate([np.stack(p[1]["x"]) for p in parts], axis=1),
        score_cond=np.concatenate([np.stack(p[1]["sc"]) for p in parts], axis=1),
        score_uncond=np.concatenate([np.stack(p[1]["su"]) for p in parts], axis=1),
        omega=np.concatenate([np.stack(p[1]["w"]) for p in parts], axis=1),
    )
    return batch, trace


def generate(dist0: LabeledDistribution, schedule: NoiseSchedule, guidance, target_class,
             config: SamplerConfig, n: int, seed: int, threads: int = 1,
             uncond_dist: LabeledDistribution | None = None) -> SampleBatch:
    """Run ``n`` guided reverse trajectories toward ``target_class``.

    ``uncond_dist`` replaces the unconditional field (defaults to ``dist0``).
    """
    batch, _ = _generate(dist0, schedule, guidance, target_class, config, n, seed, threads,
                         uncond_dist, record=False)
    return batch


def generate_with_trace(dist0: LabeledDistribution, schedule: NoiseSchedule, guidance, target_class,
                        config: SamplerConfig, n: int, seed: int, threads: int = 1,
                        uncond_dist: LabeledDistribution | None = None):
    """As :func:`generate`, also returning per-step states, both scores and weights.

    Trace arrays have shape ``(steps, n, d)`` (``omega``: ``(steps, n)``).
    """
    return _generate(dist0, schedule, guidance, target_class, config, n, seed, threads,
                     uncond_dist, record=True)
