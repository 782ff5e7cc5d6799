"""Pair sources: lambda-parameterized emitters and the singlet reference sampler."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import ConfigError
from .model import (
    AnalyzerSetting,
    ChannelOutcome,
    PairEmission,
    angle_difference,
    as_angle,
    normalize_angles,
    quantize_angle,
)


class SourceKind(str, enum.Enum):
    FIXED_AXIS = "fixed-axis"
    UNIFORM = "uniform"
    SINGLET = "singlet"


@dataclass(frozen=True)
class LambdaDistribution:
    """Distribution of the left signal's polarization angle.

    FIXED_AXIS puts mass 1/2 on ``axis`` and on ``axis + 90``. UNIFORM is the
    flat density 1/180 on [0, 180); ``axis`` only offsets the draws, which
    leaves the distribution unchanged but lets a rotation act on individual
    emissions.
    """

    kind: SourceKind = SourceKind.FIXED_AXIS
    axis: float = 0.0

    def __post_init__(self) -> None:
        kind = SourceKind(self.kind)
        if kind is SourceKind.SINGLET:
            raise ConfigError("the singlet source has no lambda distribution; use SingletSource")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "axis", quantize_angle(self.axis))

    @property
    def support(self) -> tuple[float, ...] | None:
        """Atoms of a discrete distribution, ``None`` for a continuous one."""
        if self.kind is SourceKind.FIXED_AXIS:
            return tuple(sorted({self.axis, quantize_angle(self.axis + 90.0)}))
        return None

    def rotated(self, theta: float) -> "LambdaDistribution":
        return LambdaDistribution(self.kind, self.axis + theta)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "axis": self.axis}


@dataclass(frozen=True)
class SingletSource:
    """Born-rule sampler for the polarization singlet; carries no lambda."""

    @property
    def kind(self) -> SourceKind:
        return SourceKind.SINGLET

    def rotated(self, theta: float) -> "SingletSource":
        return self

    def to_dict(self) -> dict[str, Any]:
        return {"kind": SourceKind.SINGLET.value}


SINGLET = SingletSource()
Source = Union[LambdaDistribution, SingletSource]


def source_from_dict(d: dict[str, Any]) -> Source:
    kind = SourceKind(d["kind"])
    if kind is SourceKind.SINGLET:
        return SINGLET
    return LambdaDistribution(kind, float(d.get("axis", 0.0)))


def sample_lambdas(dist: LambdaDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` left-signal polarizations from ``dist``."""
    if dist.kind is SourceKind.FIXED_AXIS:
        bits = rng.integers(0, 2, size=size)
        return normalize_angles(dist.axis + 90.0 * bits)
    base = normalize_angles(180.0 * rng.random(size))
    return normalize_angles(base + dist.axis)


def sample_pair(dist: LambdaDistribution, rng: np.random.Generator, size: int | None = None):
    """One emission (``size=None``) or arrays ``(lambda_left, lambda_right)``."""
    left = sample_lambdas(dist, rng, 1 if size is None else size)
    if size is None:
        return PairEmission(float(left[0]))
    return left, normalize_angles(left + 90.0)


def singlet_joint_probabilities(delta_deg) -> dict[tuple[ChannelOutcome, ChannelOutcome], Any]:
    """Joint outcome probabilities for analyzers separated by ``delta_deg``."""
    d = np.radians(delta_deg)
    same = 0.5 * np.sin(d) ** 2
    diff = 0.5 * np.cos(d) ** 2
    P, M = ChannelOutcome.PLUS, ChannelOutcome.MINUS
    return {(P, P): same, (M, M): same, (P, M): diff, (M, P): diff}


def singlet_outcomes_from_uniform(delta_deg, u) -> tuple[np.ndarray, np.ndarray]:
    """Map uniforms to joint singlet outcomes by inverting the 4-point CDF.

    Cell order along [0, 1): (+,+), (-,-), (+,-), (-,+).
    """
    d = np.radians(np.asarray(delta_deg, dtype=np.float64))
    p_same = np.sin(d) ** 2
    u = np.asarray(u, dtype=np.float64)
    same = u < p_same
    first_half = np.where(same, u < 0.5 * p_same, u < p_same + 0.5 * (1.0 - p_same))
    out_a = np.where(first_half, 1, -1).astype(np.int8)
    out_b = np.where(same, out_a, -out_a).astype(np.int8)
    return out_a, out_b


def sample_outcomes_singlet(a: AnalyzerSetting | float, b: AnalyzerSetting | float,
                            rng: np.random.Generator, size: int | None = None):
    """Draw joint (out_a, out_b) for the singlet under ideal detection.

    The joint outcome is drawn in one step from the four-point Born
    distribution; nothing is sampled sequentially per side.
    """
    delta = angle_difference(as_angle(a), as_angle(b))
    u = rng.random(1 if size is None else size)
    out_a, out_b = singlet_outcomes_from_uniform(delta, u)
    if size is None:
        return ChannelOutcome(int(out_a[0])), ChannelOutcome(int(out_b[0]))
    return out_a, out_b

