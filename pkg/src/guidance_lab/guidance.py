"""Guidance-weight schedules and the classifier-free combination rule.

A schedule maps diffusion time ``t`` (``t_max`` = pure noise, ``0`` = data)
to the weight ``omega`` used in ``uncond + omega * (cond - uncond)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar, Union

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import DomainError

_T_SLACK = 1e-12


def _as_t(t, t_max: float | None):
    arr = np.asarray(t, dtype=float)
    hi = math.inf if t_max is None else t_max + _T_SLACK
    if np.any(~np.isfinite(arr)) or np.any(arr < -_T_SLACK) or np.any(arr > hi):
        raise DomainError(f"t must lie in [0, {t_max}], got {t}")
    return arr


def _out(values, t):
    return float(values) if np.ndim(t) == 0 else np.asarray(values, dtype=float)


@dataclass(frozen=True)
class _Schedule:
    kind: ClassVar[str] = ""
    needs_ratio: ClassVar[bool] = False

    def __call__(self, t, ratio=None):
        return omega(self, t, ratio)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for f in fields(self):
            d[_KEY_ALIASES.get(f.name, f.name)] = getattr(self, f.name)
        return d


@dataclass(frozen=True)
class Fixed(_Schedule):
    omega: float = 1.0
    kind: ClassVar[str] = "fixed"

    def __post_init__(self):
        if not self.omega >= 0:
            raise DomainError("fixed omega must be >= 0")

    def _eval(self, t):
        return np.full_like(t, self.omega)


@dataclass(frozen=True)
class C2FG(_Schedule):
    """``omega(t) = omega0 * exp(lam * (1 - t / t_max))``.

    Equals ``omega0`` at ``t_max`` and rises to ``omega0 * e**lam`` at ``t = 0``.
    """

    omega0: float = 1.0
    lam: float = 0.6
    t_max: float = 1.0
    kind: ClassVar[str] = "c2fg"

    def __post_init__(self):
        if not (self.omega0 > 0 and self.lam > 0 and self.t_max > 0):
            raise DomainError("c2fg needs omega0 > 0, lambda > 0, t_max > 0")

    def _eval(self, t):
        return self.omega0 * np.exp(self.lam * (1.0 - t / self.t_max))


@dataclass(frozen=True)
class Interval(_Schedule):
    """``omega`` on the closed interval ``[t_low, t_high]``, ``outside`` elsewhere."""

    omega: float = 1.8
    t_low: float = 0.0
    t_high: float = 0.7
    outside: float = 1.0
    t_max: float = 1.0
    kind: ClassVar[str] = "interval"

    def __post_init__(self):
        if not (0.0 <= self.t_low < self.t_high <= self.t_max):
            raise DomainError(
                f"interval needs 0 <= t_low < t_high <= t_max, got "
                f"[{self.t_low}, {self.t_high}] with t_max={self.t_max}")
        if self.omega < 0 or self.outside < 0:
            raise DomainError("interval weights must be >= 0")

    def _eval(self, t):
        inside = (t >= self.t_low) & (t <= self.t_high)
        return np.where(inside, self.omega, self.outside)


@dataclass(frozen=True)
class Linear(_Schedule):
    omega_peak: float = 1.0
    t_max: float = 1.0
    kind: ClassVar[str] = "linear"

    def __post_init__(self):
        _check_peak(self)

    def _eval(self, t):
        return self.omega_peak * t / self.t_max


@dataclass(frozen=True)
class ReverseLinear(_Schedule):
    omega_peak: float = 1.0
    t_max: float = 1.0
    kind: ClassVar[str] = "reverse_linear"

    def __post_init__(self):
        _check_peak(self)

    def _eval(self, t):
        return self.omega_peak * (1.0 - t / self.t_max)


@dataclass(frozen=True)
class Sine(_Schedule):
    omega_peak: float = 1.0
    t_max: float = 1.0
    kind: ClassVar[str] = "sine"

    def __post_init__(self):
        _check_peak(self)

    def _eval(self, t):
        # clip the float noise at the endpoints, where sin(pi) is ~1e-16 below zero
        return self.omega_peak * np.clip(np.sin(np.pi * t / self.t_max), 0.0, None)


@dataclass(frozen=True)
class BetaPDF(_Schedule):
    """Beta-density shaped weight over normalised reverse time ``u = 1 - t/t_max``.

    ``omega(t) = baseline + (omega_peak - baseline) * pdf(u; a, b) / max pdf``.
    ``baseline = 1`` keeps plain conditional sampling at both ends; with
    ``baseline = 0`` the weight is a scaled Beta density itself, which for
    ``a = b = 2, omega_peak = 1.5`` is exactly ``1.0 * Beta(2, 2).pdf(u)``.
    """

    omega_peak: float = 1.5
    a: float = 2.0
    b: float = 2.0
    t_max: float = 1.0
    baseline: float = 1.0
    kind: ClassVar[str] = "beta_pdf"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.t_max > 0):
            raise DomainError("beta_pdf needs a > 0, b > 0, t_max > 0")
        if self.omega_peak < 0 or self.baseline < 0:
            raise DomainError("beta_pdf weights must be >= 0")
        if self.a < 1 or self.b < 1:
            # the density is unbounded at an endpoint; no finite peak to normalise by
            raise DomainError("beta_pdf needs a >= 1 and b >= 1 for a finite peak")

    @property
    def pdf_max(self) -> float:
        if self.a == 1 and self.b == 1:
            mode = 0.5
        else:
            mode = (self.a - 1) / (self.a + self.b - 2)
        return float(beta_dist.pdf(mode, self.a, self.b))

    def _eval(self, t):
        u = np.clip(1.0 - t / self.t_max, 0.0, 1.0)
        shape = beta_dist.pdf(u, self.a, self.b) / self.pdf_max
        return self.baseline + (self.omega_peak - self.baseline) * shape


@dataclass(frozen=True)
class RatioAdaptive(_Schedule):
    """``omega = 1 + (omega_max - 1) * exp(-alpha * ratio)``.

    ``ratio`` is the relative guidance magnitude
    ``|eps_c - eps_u| / (|eps_u| + delta)`` (see :func:`guidance_ratio`).
    """

    omega_max: float = 18.0
    alpha: float = 12.0
    delta: float = 1e-8
    kind: ClassVar[str] = "ratio_adaptive"
    needs_ratio: ClassVar[bool] = True

    def __post_init__(self):
        if not (self.omega_max > 1 and self.alpha > 0 and self.delta > 0):
            raise DomainError("ratio_adaptive needs omega_max > 1, alpha > 0, delta > 0")

    def _eval(self, t, ratio):
        return 1.0 + (self.omega_max - 1.0) * np.exp(-self.alpha * ratio)


GuidanceSpec = Union[Fixed, C2FG, Interval, Linear, ReverseLinear, Sine, BetaPDF, RatioAdaptive]

_KINDS = {cls.kind: cls for cls in (Fixed, C2FG, Interval, Linear, ReverseLinear, Sine, BetaPDF,
                                    RatioAdaptive)}
_KEY_ALIASES = {"lam": "lambda"}
_FROM_KEY = {v: k for k, v in _KEY_ALIASES.items()}


def _check_peak(spec):
    if spec.omega_peak < 0 or not spec.t_max > 0:
        raise DomainError(f"{spec.kind} needs omega_peak >= 0 and t_max > 0")


def omega(spec: GuidanceSpec, t, ratio=None):
    """Evaluate the guidance weight at ``t`` (scalar or array)."""
    t_arr = _as_t(t, getattr(spec, "t_max", None))
    if spec.needs_ratio:
        if ratio is None:
            raise DomainError("ratio_adaptive guidance needs the current ratio")
        r = np.asarray(ratio, dtype=float)
        if np.any(r < 0):
            raise DomainError("ratio must be >= 0")
        values = spec._eval(t_arr, r)
        return float(values) if np.ndim(values) == 0 else values
    return _out(spec._eval(t_arr), t)


def guidance_from_dict(d: dict) -> GuidanceSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise DomainError(f"unknown guidance kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls = _KINDS[kind]
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in d.items():
        name = _FROM_KEY.get(key, key)
        if name not in names:
            raise DomainError(f"unknown field {key!r} for guidance kind {kind!r}")
        kwargs[name] = float(value)
    return cls(**kwargs)


def guidance_kinds() -> list[str]:
    return sorted(_KINDS)


def guidance_label(spec: GuidanceSpec) -> str:
    parts = [f"{k}={v:g}" for k, v in asdict(spec).items()]
    return f"{spec.kind}(" + ",".join(parts) + ")"


def combine(cond, uncond, w):
    """``uncond + w * (cond - uncond)``; exact at ``w = 0`` and ``w = 1``.

    ``w`` may be a scalar or an array broadcastable against the leading axes.
    """
    cond = np.asarray(cond, dtype=float)
    uncond = np.asarray(uncond, dtype=float)
    if cond.shape != uncond.shape:
        raise DomainError(f"shape mismatch {cond.shape} vs {uncond.shape}")
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DomainError("guidance weight must be finite")
    if w.ndim == 1 and cond.ndim == 2:
        w = w[:, None]
    # select the endpoints explicitly: uncond + 1*(cond - uncond) can differ from cond by rounding
    out = uncond + w * (cond - uncond)
    out = np.where(w == 1.0, cond, out)
    out = np.where(w == 0.0, uncond, out)
    return out


def eps_from_score(score, sigma):
    if not sigma > 0:
        raise DomainError("sigma must be > 0")
    return -sigma * np.asarray(score, dtype=float)


def score_from_eps(eps, sigma):
    if not sigma > 0:
        raise DomainError("sigma must be > 0")
    return -np.asarray(eps, dtype=float) / sigma


def guidance_ratio(eps_cond, eps_uncond, delta: float = 1e-8):
    """Per-point ``|eps_c - eps_u| / (|eps_u| + delta)`` along the last axis."""
    eps_cond = np.asarray(eps_cond, dtype=float)
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    num = np.linalg.norm(eps_cond - eps_uncond, axis=-1)
    return num / (np.linalg.norm(eps_uncond, axis=-1) + delta)
