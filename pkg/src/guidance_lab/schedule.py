"""Forward-process noise schedules.

Every schedule defines the Gaussian transition ``x_t = alpha(t) x_0 + sigma(t) xi``.

VP kinds follow ``dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw`` so that
``alpha(t) = exp(-1/2 int_0^t beta)`` and ``sigma(t)^2 = 1 - alpha(t)^2``.
With a constant ``beta = 2`` this is the canonical OU process
``dx = -x dt + sqrt(2) dw`` with ``alpha = e^{-t}`` and ``sigma^2 = 1 - e^{-2t}``.

The VE kind keeps ``alpha = 1`` and interpolates ``sigma`` geometrically
between ``sigma_min`` and ``sigma_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, KindMismatchError

# float slack on the [0, t_max] domain check, so grids built by linspace pass
_T_SLACK = 1e-12


class ScheduleKind(str, Enum):
    VP_LINEAR = "vp-linear-beta"
    VP_CONSTANT = "vp-constant-beta"
    VE_GEOMETRIC = "ve-geometric"

    @property
    def is_vp(self) -> bool:
        return self is not ScheduleKind.VE_GEOMETRIC


@dataclass(frozen=True)
class NoiseSchedule:
    kind: ScheduleKind = ScheduleKind.VP_LINEAR
    beta_min: float = 0.1
    beta_max: float = 20.0
    beta_const: float = 2.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    t_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.t_max > 0:
            raise DomainError(f"t_max must be > 0, got {self.t_max}")
        if self.kind is ScheduleKind.VP_LINEAR:
            if self.beta_min < 0 or self.beta_max < self.beta_min:
                raise DomainError("need 0 <= beta_min <= beta_max")
            if self.beta_max == 0:
                raise DomainError("beta_max must be > 0")
        elif self.kind is ScheduleKind.VP_CONSTANT:
            if not self.beta_const > 0:
                raise DomainError("beta_const must be > 0")
        else:
            if not (0 < self.sigma_min < self.sigma_max):
                raise DomainError("need 0 < sigma_min < sigma_max")

    @classmethod
    def vp_linear(cls, beta_min: float = 0.1, beta_max: float = 20.0,
                  t_max: float = 1.0) -> "NoiseSchedule":
        return cls(ScheduleKind.VP_LINEAR, beta_min=beta_min, beta_max=beta_max, t_max=t_max)

    @classmethod
    def vp_constant(cls, beta_const: float = 2.0, t_max: float = 1.0) -> "NoiseSchedule":
        return cls(ScheduleKind.VP_CONSTANT, beta_const=beta_const, t_max=t_max)

    @classmethod
    def canonical_ou(cls, t_max: float = 5.0) -> "NoiseSchedule":
        """VP with beta = 2, i.e. ``dx = -x dt + sqrt(2) dw``."""
        return cls.vp_constant(2.0, t_max)

    @classmethod
    def ve_geometric(cls, sigma_min: float = 0.01, sigma_max: float = 50.0,
                     t_max: float = 1.0) -> "NoiseSchedule":
        return cls(ScheduleKind.VE_GEOMETRIC, sigma_min=sigma_min, sigma_max=sigma_max,
                   t_max=t_max)

    @property
    def is_vp(self) -> bool:
        return self.kind.is_vp

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "t_max": self.t_max}
        if self.kind is ScheduleKind.VP_LINEAR:
            d.update(beta_min=self.beta_min, beta_max=self.beta_max)
        elif self.kind is ScheduleKind.VP_CONSTANT:
            d.update(beta_const=self.beta_const)
        else:
            d.update(sigma_min=self.sigma_min, sigma_max=self.sigma_max)
        return d


@dataclass(frozen=True)
class CoefficientTable:
    """Discretised VP coefficients; ``alpha_bar[i] = alpha(times[i])**2``."""

    times: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


def _check_t(schedule: NoiseSchedule, t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < -_T_SLACK) or np.any(t > schedule.t_max + _T_SLACK):
        raise DomainError(f"t must lie in [0, {schedule.t_max}], got {t}")
    return np.clip(t, 0.0, schedule.t_max)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def integrated_beta(schedule: NoiseSchedule, t):
    """``int_0^t beta(r) dr`` in closed form (VP kinds only)."""
    if not schedule.is_vp:
        raise KindMismatchError("integrated_beta is defined for VP schedules only")
    t = _check_t(schedule, t)
    if schedule.kind is ScheduleKind.VP_CONSTANT:
        out = schedule.beta_const * t
    else:
        slope = (schedule.beta_max - schedule.beta_min) / schedule.t_max
        out = schedule.beta_min * t + 0.5 * slope * t * t
    return _scalar_or_array(out)


def beta(schedule: NoiseSchedule, t):
    """Squared diffusion coefficient g(t)^2 of the forward SDE.

    For VP kinds this is beta(t); for VE it is d(sigma^2)/dt.
    """
    t = _check_t(schedule, t)
    if schedule.kind is ScheduleKind.VP_CONSTANT:
        out = np.full_like(t, schedule.beta_const)
    elif schedule.kind is ScheduleKind.VP_LINEAR:
        out = schedule.beta_min + (schedule.beta_max - schedule.beta_min) * t / schedule.t_max
    else:
        rate = math.log(schedule.sigma_max / schedule.sigma_min) / schedule.t_max
        out = 2.0 * rate * ve_sigma(schedule, t) ** 2
    return _scalar_or_array(out)


def drift_coefficient(schedule: NoiseSchedule, t):
    """The linear drift factor f(t) in ``dx = f(t) x dt + g(t) dw``."""
    if schedule.is_vp:
        return _scalar_or_array(-0.5 * np.asarray(beta(schedule, t)))
    _check_t(schedule, t)
    return _scalar_or_array(np.zeros_like(np.asarray(t, dtype=float)))


def vp_coefficients(schedule: NoiseSchedule, t):
    """Return ``(alpha, sigma)`` for a VP schedule at time ``t`` (scalar or array)."""
    if not schedule.is_vp:
        raise KindMismatchError(f"vp_coefficients called on {schedule.kind.value} schedule")
    integral = np.asarray(integrated_beta(schedule, t))
    alpha = np.exp(-0.5 * integral)
    # sigma^2 = 1 - alpha^2, written with expm1 to keep precision near t = 0
    sigma = np.sqrt(-np.expm1(-integral))
    return _scalar_or_array(alpha), _scalar_or_array(sigma)


def ve_sigma(schedule: NoiseSchedule, t):
    if schedule.is_vp:
        raise KindMismatchError(f"ve_sigma called on {schedule.kind.value} schedule")
    t = _check_t(schedule, t)
    log_ratio = math.log(schedule.sigma_max / schedule.sigma_min)
    out = schedule.sigma_min * np.exp(log_ratio * t / schedule.t_max)
    return _scalar_or_array(out)


def marginal_coefficients(schedule: NoiseSchedule, t):
    """``(alpha, sigma)`` for any schedule kind; VE has alpha = 1."""
    if schedule.is_vp:
        return vp_coefficients(schedule, t)
    sigma = ve_sigma(schedule, t)
    return _scalar_or_array(np.ones_like(np.asarray(sigma))), sigma


def reparam_time(schedule: NoiseSchedule, t):
    """Time change that turns the forward process into a standard form.

    VP: ``s = 1/2 int_0^t beta`` (unit OU clock). VE: ``s = 1/2 sigma_t^2``,
    under which the marginal solves the heat equation ``p_s = Laplacian p``.
    """
    if schedule.is_vp:
        return _scalar_or_array(0.5 * np.asarray(integrated_beta(schedule, t)))
    return _scalar_or_array(0.5 * np.asarray(ve_sigma(schedule, t)) ** 2)


def score_bound_envelope(schedule: NoiseSchedule, t):
    """``alpha/sigma^2`` (VP) or ``1/sigma^2`` (VE): the t-dependence of the score gap bound."""
    alpha, sigma = marginal_coefficients(schedule, t)
    with np.errstate(divide="ignore"):
        out = np.asarray(alpha) / np.asarray(sigma) ** 2
    return _scalar_or_array(out)


def coefficient_table(schedule: NoiseSchedule, times) -> CoefficientTable:
    if not schedule.is_vp:
        raise KindMismatchError("coefficient tables are built for VP schedules only")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a non-empty 1-D sequence")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly ascending")
    alpha, sigma = vp_coefficients(schedule, times)
    alpha_bar = np.atleast_1d(np.asarray(alpha) ** 2)
    table = CoefficientTable(times.copy(), alpha_bar, np.atleast_1d(np.asarray(sigma)))
    if table.alpha_bar.size > 1 and np.any(np.diff(table.alpha_bar) >= 0):
        raise DomainError("alpha_bar is not strictly decreasing on this grid (beta vanishes)")
    return table
