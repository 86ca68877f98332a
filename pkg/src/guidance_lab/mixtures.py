"""Labeled initial distributions and their exact diffused marginals.

An initial distribution is a finite mixture of atoms (point masses) and
Gaussians, each component tagged with a class label. Under a Gaussian
transition ``x_t = alpha x_0 + sigma xi`` every component stays Gaussian,
so marginals, scores and posterior means are available in closed form.

Point evaluations accept a single point of shape ``(d,)`` or a batch of
shape ``(N, d)`` and return matching shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateDensityError, DomainError, UnknownClassError
from .schedule import NoiseSchedule, marginal_coefficients

_WEIGHT_TOL = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Component:
    """One mixture component; ``cov is None`` marks a point mass at ``mean``."""

    weight: float
    label: Hashable
    mean: np.ndarray
    cov: np.ndarray | None = None

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        if self.cov is not None:
            cov = np.array(self.cov, dtype=float)
            if cov.ndim == 0:
                cov = float(cov) * np.eye(mean.size)
            elif cov.ndim == 1:
                cov = np.diag(cov)
            if cov.shape != (mean.size, mean.size):
                raise DomainError(f"covariance shape {cov.shape} does not match mean")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise DomainError("covariance must be symmetric")
            if np.linalg.eigvalsh(cov)[0] <= 0:
                raise DomainError("covariance must be positive definite")
            cov.setflags(write=False)
            object.__setattr__(self, "cov", cov)
        if not (0.0 < self.weight <= 1.0):
            raise DomainError(f"component weight must lie in (0, 1], got {self.weight}")

    @property
    def is_atom(self) -> bool:
        return self.cov is None

    @classmethod
    def atom(cls, weight, label, location) -> "Component":
        return cls(weight, label, location, None)

    @classmethod
    def gaussian(cls, weight, label, mean, cov) -> "Component":
        return cls(weight, label, mean, cov)


@dataclass(frozen=True)
class LabeledDistribution:
    components: tuple[Component, ...]
    radius: float | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DomainError("a distribution needs at least one component")
        object.__setattr__(self, "components", comps)
        dims = {c.mean.size for c in comps}
        if len(dims) != 1:
            raise DomainError(f"components have mixed dimensions {sorted(dims)}")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise DomainError(f"component weights sum to {total!r}, expected 1")
        max_norm = max(float(np.linalg.norm(c.mean)) for c in comps)
        if self.radius is None:
            object.__setattr__(self, "radius", max_norm)
        elif self.radius < max_norm - 1e-12:
            raise DomainError(f"radius {self.radius} is below the largest component norm {max_norm}")

    @property
    def dimension(self) -> int:
        return self.components[0].mean.size

    @property
    def labels(self) -> tuple:
        seen = []
        for c in self.components:
            if c.label not in seen:
                seen.append(c.label)
        return tuple(seen)

    @property
    def is_all_atoms(self) -> bool:
        return all(c.is_atom for c in self.components)

    @property
    def has_atoms(self) -> bool:
        return any(c.is_atom for c in self.components)

    def class_prior(self, label) -> float:
        self._require_label(label)
        return sum(c.weight for c in self.components if c.label == label)

    def restrict(self, label) -> "LabeledDistribution":
        """The class-conditional initial distribution p(x_0 | y = label)."""
        self._require_label(label)
        kept = [c for c in self.components if c.label == label]
        z = sum(c.weight for c in kept)
        comps = tuple(Component(c.weight / z, c.label, c.mean, c.cov) for c in kept)
        return LabeledDistribution(comps, radius=self.radius)

    def translated(self, shift) -> "LabeledDistribution":
        shift = np.asarray(shift, dtype=float)
        comps = tuple(Component(c.weight, c.label, c.mean + shift, c.cov) for c in self.components)
        return LabeledDistribution(comps)

    def _require_label(self, label):
        if label not in self.labels:
            raise UnknownClassError(f"unknown class {label!r}; known: {list(self.labels)}")

    @classmethod
    def atoms(cls, locations, labels, weights=None, radius=None) -> "LabeledDistribution":
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        if locations.shape[0] == 1 and len(labels) > 1:
            locations = locations.T
        k = len(labels)
        if weights is None:
            weights = np.full(k, 1.0 / k)
        comps = tuple(Component.atom(w, y, loc) for w, y, loc in zip(weights, labels, locations))
        return cls(comps, radius=radius)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weights ``(K,)``, means ``(K, d)``, covariances ``(K, d, d)``; Cholesky factors cached."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    labels: tuple = ()
    chol: np.ndarray = field(init=False, repr=False)
    chol_inv: np.ndarray = field(init=False, repr=False)
    log_norm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None] if w.size > 1 else mu[None, :]
        cov = np.array(self.covs, dtype=float)
        k, d = mu.shape
        if cov.ndim == 1:
            cov = cov[:, None, None] * np.eye(d)
        if cov.shape != (k, d, d) or w.size != k:
            raise DomainError("inconsistent mixture shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise DomainError(f"mixture weights must be nonnegative and sum to 1, got {w.sum()!r}")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DomainError("mixture covariances must be positive definite") from exc
        eye = np.eye(d)
        chol_inv = np.stack([solve_triangular(L, eye, lower=True) for L in chol])
        with np.errstate(divide="ignore"):
            log_norm = (np.log(w) - np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
                        - 0.5 * d * _LOG_2PI)
        for arr in (w, mu, cov, chol, chol_inv, log_norm):
            arr.setflags(write=False)
        object.__setattr__(self, "chol_inv", chol_inv)
        object.__setattr__(self, "log_norm", log_norm)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "labels", tuple(self.labels) if self.labels else (None,) * k)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @classmethod
    def single(cls, mean, cov) -> "GaussianMixture":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(mean.size)
        return cls(np.ones(1), mean[None, :], cov[None])


@dataclass(frozen=True)
class ClassPosterior:
    """``probabilities[..., j]`` is p(y = labels[j] | x_t = x)."""

    labels: tuple
    probabilities: np.ndarray

    def __getitem__(self, label):
        try:
            j = self.labels.index(label)
        except ValueError:
            raise UnknownClassError(f"unknown class {label!r}") from None
        return self.probabilities[..., j]


def _as_batch(mix_dim: int, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != mix_dim:
        raise DomainError(f"expected points of dimension {mix_dim}, got shape {x.shape}")
    return xb, single


def diffuse(dist0: LabeledDistribution, schedule: NoiseSchedule, t: float,
            restrict_to=None) -> GaussianMixture:
    """Exact marginal of x_t; with ``restrict_to`` the class-conditional marginal."""
    dist = dist0.restrict(restrict_to) if restrict_to is not None else dist0
    alpha, sigma = marginal_coefficients(schedule, t)
    d = dist.dimension
    if dist.has_atoms and sigma == 0.0:
        raise DegenerateDensityError(f"atoms have no density at t={t} (sigma = 0)")
    means, covs = [], []
    for c in dist.components:
        means.append(alpha * c.mean)
        base = np.zeros((d, d)) if c.is_atom else alpha * alpha * c.cov
        covs.append(base + sigma * sigma * np.eye(d))
    return GaussianMixture(
        np.array([c.weight for c in dist.components]),
        np.array(means),
        np.array(covs),
        labels=tuple(c.label for c in dist.components),
    )


def _lse(a, axis=1, keepdims=False):
    # max-shifted log-sum-exp; rows that are all -inf stay -inf
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def component_log_densities(mix: GaussianMixture, x):
    """``log w_k + log N(x; mu_k, Sigma_k)`` with shape ``(N, K)``, plus whitened residuals.

    The residual array ``(K, N, d)`` holds ``L_k^{-1}(x - mu_k)``.
    """
    xb, _ = _as_batch(mix.dimension, x)
    diff = xb[None, :, :] - mix.means[:, None, :]
    white = np.matmul(diff, np.swapaxes(mix.chol_inv, 1, 2))
    out = mix.log_norm[None, :] - 0.5 * np.sum(white * white, axis=2).T
    return out, white


def responsibilities(mix: GaussianMixture, x):
    lp, _ = component_log_densities(mix, x)
    return np.exp(lp - _lse(lp, keepdims=True))


def log_density(mix: GaussianMixture, x):
    xb, single = _as_batch(mix.dimension, x)
    lp, _ = component_log_densities(mix, xb)
    out = _lse(lp)
    return float(out[0]) if single else out


def score(mix: GaussianMixture, x):
    """``grad log p(x) = -sum_k r_k(x) Sigma_k^{-1} (x - mu_k)``."""
    xb, single = _as_batch(mix.dimension, x)
    lp, white = component_log_densities(mix, xb)
    r = np.exp(lp - _lse(lp, keepdims=True))
    # Sigma^{-1} (x - mu) = L^{-T} L^{-1} (x - mu)
    prec_res = np.matmul(white, mix.chol_inv)
    out = -np.einsum("nk,knd->nd", r, prec_res)
    return out[0] if single else out


def posterior_mean(dist0: LabeledDistribution, schedule: NoiseSchedule, t: float, x,
                   restrict_to=None):
    """``E[x_0 | x_t = x]`` (optionally within one class).

    Each Gaussian component contributes its own posterior mean
    ``mu + alpha Sigma C^{-1} (x - alpha mu)`` with ``C = alpha^2 Sigma + sigma^2 I``;
    atoms contribute their location.
    """
    if t <= 0:
        raise DomainError("posterior_mean needs t > 0")
    dist = dist0.restrict(restrict_to) if restrict_to is not None else dist0
    mix = diffuse(dist, schedule, t)
    xb, single = _as_batch(mix.dimension, x)
    alpha, _ = marginal_coefficients(schedule, t)
    r = responsibilities(mix, xb)
    out = np.zeros_like(xb)
    for j, c in enumerate(dist.components):
        if c.is_atom:
            comp_mean = np.broadcast_to(c.mean, xb.shape)
        else:
            L = mix.chol[j]
            resid = (xb - mix.means[j]).T
            solved = solve_triangular(L, solve_triangular(L, resid, lower=True), lower=True, trans="T")
            comp_mean = c.mean + alpha * (c.cov @ solved).T
        out += r[:, j:j + 1] * comp_mean
    return out[0] if single else out


def class_posterior(dist0: LabeledDistribution, schedule: NoiseSchedule, t: float, x) -> ClassPosterior:
    """Exact p(y | x_t = x) by Bayes' rule over the labeled components."""
    if t <= 0:
        raise DomainError("class_posterior needs t > 0")
    mix = diffuse(dist0, schedule, t)
    xb, single = _as_batch(mix.dimension, x)
    lp, _ = component_log_densities(mix, xb)
    labels = dist0.labels
    per_class = np.stack(
        [_lse(lp[:, [j for j, y in enumerate(mix.labels) if y == lab]], axis=1) for lab in labels],
        axis=1,
    )
    probs = np.exp(per_class - _lse(per_class, axis=1, keepdims=True))
    return ClassPosterior(labels, probs[0] if single else probs)


def sample_mixture(mix: GaussianMixture, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. points: categorical component, then ``mu + L z``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    z = rng.standard_normal((n, mix.dimension))
    return mix.means[comp] + np.einsum("nij,nj->ni", mix.chol[comp], z)


def component_labels_mask(mix: GaussianMixture, labels: Sequence) -> np.ndarray:
    return np.array([y in labels for y in mix.labels])
