"""Sample-quality metrics for the toy experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .mixtures import GaussianMixture, LabeledDistribution, class_posterior, log_density, sample_mixture
from .schedule import NoiseSchedule

# rows per block in pairwise sums; fixed so the reduction order never changes
BLOCK = 1024


@dataclass(frozen=True)
class ContourThreshold:
    """Density level whose super-level set holds about ``mass`` of ``mixture``."""

    mixture: GaussianMixture
    mass: float
    density_threshold: float
    log_threshold: float
    mc_samples: int
    seed: int


def contour_threshold(mix: GaussianMixture, mass: float = 0.99, mc_samples: int = 1_000_000,
                      seed: int = 0) -> ContourThreshold:
    """Monte-Carlo ``(1 - mass)``-quantile of ``p(X)`` for ``X ~ mix``."""
    if not 0.0 < mass < 1.0:
        raise DomainError(f"mass must lie in (0, 1), got {mass}")
    if mc_samples < 1:
        raise DomainError("mc_samples must be >= 1")
    x = sample_mixture(mix, mc_samples, seed)
    logp = log_density(mix, x)
    level = float(np.quantile(logp, 1.0 - mass))
    return ContourThreshold(mix, mass, math.exp(level), level, mc_samples, seed)


def _as_samples(samples, dim=None):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    if x.ndim != 2:
        raise DomainError("samples must be an (n, d) matrix")
    if dim is not None and x.shape[1] != dim:
        raise DomainError(f"dimension mismatch: samples have {x.shape[1]}, expected {dim}")
    return x


def outlier_rate(samples, threshold: ContourThreshold) -> float:
    """Fraction of samples whose density lies below the contour level."""
    x = _as_samples(samples, threshold.mixture.dimension)
    if len(x) == 0:
        raise DomainError("empty sample batch")
    # compare in log space so far-out samples (density underflow) still count
    return float(np.mean(log_density(threshold.mixture, x) < threshold.log_threshold))


def _mean_pairwise_distance(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for lo in range(0, len(a), BLOCK):
        block = a[lo:lo + BLOCK]
        d2 = (np.sum(block * block, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * block @ b.T)
        total += float(np.sum(np.sqrt(np.maximum(d2, 0.0))))
    return total / (len(a) * len(b))


def energy_distance(a, b) -> float:
    """``2 E|A - B| - E|A - A'| - E|B - B'|`` over all pairs (V-statistic)."""
    a = _as_samples(a)
    b = _as_samples(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) < 2 or len(b) < 2:
        raise DomainError("energy distance needs at least 2 samples per set")
    value = (2.0 * _mean_pairwise_distance(a, b) - _mean_pairwise_distance(a, a)
             - _mean_pairwise_distance(b, b))
    return max(value, 0.0)


def sliced_wasserstein2(a, b, projections: int = 128, seed: int = 0) -> float:
    """Sliced 2-Wasserstein distance from sorted 1-D projections.

    Unequal sample sizes are matched through empirical quantiles on a common grid.
    """
    a = _as_samples(a)
    b = _as_samples(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) == 0 or len(b) == 0:
        raise DomainError("empty sample batch")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    if len(a) != len(b):
        n = max(len(a), len(b))
        q = (np.arange(n) + 0.5) / n
        pa = np.quantile(pa, q, axis=0)
        pb = np.quantile(pb, q, axis=0)
    return float(math.sqrt(np.mean((pa - pb) ** 2)))


def class_fidelity(samples, dist0: LabeledDistribution, schedule: NoiseSchedule, t_eval: float,
                   target_class) -> float:
    """Mean exact posterior probability of ``target_class`` at time ``t_eval``."""
    if not 0.0 < t_eval <= schedule.t_max:
        raise DomainError(f"t_eval must lie in (0, {schedule.t_max}]")
    dist0.class_prior(target_class)
    x = _as_samples(samples, dist0.dimension)
    if len(x) == 0:
        raise DomainError("empty sample batch")
    post = class_posterior(dist0, schedule, t_eval, x)
    return float(np.mean(post[target_class]))
