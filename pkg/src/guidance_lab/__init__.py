"""Exact-score laboratory for time-varying classifier-free guidance."""

from .errors import (ConfigError, DegenerateDensityError, DivergedTrajectoryError, DomainError,
                     GuidanceLabError, KindMismatchError, UnknownClassError,
                     UnsupportedDistributionError)
from .guidance import (C2FG, BetaPDF, Fixed, Interval, Linear, RatioAdaptive, ReverseLinear, Sine,
                       combine, omega)
from .mixtures import Component, GaussianMixture, LabeledDistribution, diffuse, score
from .samplers import SamplerConfig, generate, generate_with_trace
from .schedule import NoiseSchedule, ScheduleKind

__version__ = "0.1.0"

__all__ = [
    "BetaPDF", "C2FG", "Component", "ConfigError", "DegenerateDensityError",
    "DivergedTrajectoryError", "DomainError", "Fixed", "GaussianMixture", "GuidanceLabError",
    "Interval", "KindMismatchError", "LabeledDistribution", "Linear", "NoiseSchedule",
    "RatioAdaptive", "ReverseLinear", "SamplerConfig", "ScheduleKind", "Sine",
    "UnknownClassError", "UnsupportedDistributionError", "combine", "diffuse", "generate",
    "generate_with_trace", "omega", "score",
]
