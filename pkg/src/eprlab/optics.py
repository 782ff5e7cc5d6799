"""Malus-law polarizers and dual-channel photodetection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError
from .model import AnalyzerSetting, ChannelOutcome, angle_difference, as_angle


@dataclass(frozen=True)
class DetectorParams:
    """Per-channel detection efficiency and dark-count probability per trial."""

    efficiency: float = 1.0
    dark_rate: float = 0.0

    def __post_init__(self) -> None:
        eff, dark = float(self.efficiency), float(self.dark_rate)
        if not 0.0 <= eff <= 1.0:
            raise ConfigError(f"efficiency must be in [0, 1], got {eff}")
        if not 0.0 <= dark < 1.0:
            raise ConfigError(f"dark_rate must be in [0, 1), got {dark}")
        object.__setattr__(self, "efficiency", eff)
        object.__setattr__(self, "dark_rate", dark)

    @property
    def ideal(self) -> bool:
        return self.efficiency == 1.0 and self.dark_rate == 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"efficiency": self.efficiency, "dark_rate": self.dark_rate}


IDEAL = DetectorParams()


def malus_transmission(lam, analyzer):
    """cos^2 of the angle between signal polarization and polarizer axis.

    Accepts scalars or arrays; angles in degrees.
    """
    d = np.radians(angle_difference(lam, as_angle(analyzer) if np.ndim(analyzer) == 0 else analyzer))
    t = np.cos(d) ** 2
    return float(t) if np.ndim(t) == 0 else t


def branch_probabilities(lam, analyzer, params: DetectorParams):
    """(P(PLUS), P(MINUS), P(NONE)) before dark counts."""
    t = malus_transmission(lam, analyzer)
    p_plus = params.efficiency * t
    p_minus = params.efficiency * (1.0 - t)
    return p_plus, p_minus, 1.0 - p_plus - p_minus


def detect_from_uniform(lam, analyzer, params: DetectorParams, u_hit, u_dark) -> np.ndarray:
    """Outcome codes given two uniforms per trial.

    ``u_hit`` selects PLUS / MINUS / nothing by the Malus branch weights;
    ``u_dark`` injects a dark count on either face only when nothing fired.
    """
    t = np.asarray(malus_transmission(lam, analyzer), dtype=np.float64)
    u_hit = np.asarray(u_hit, dtype=np.float64)
    u_dark = np.asarray(u_dark, dtype=np.float64)
    p_plus = params.efficiency * t
    p_detect = params.efficiency
    out = np.where(u_hit < p_plus, 1, np.where(u_hit < p_detect, -1, 0)).astype(np.int8)
    half = 0.5 * params.dark_rate
    dark = np.where(u_dark < half, 1, np.where(u_dark < params.dark_rate, -1, 0)).astype(np.int8)
    return np.where(out == 0, dark, out).astype(np.int8)


def detect_dual_channel(lam, analyzer: AnalyzerSetting | float, params: DetectorParams,
                        rng: np.random.Generator, size: int | None = None):
    """Photodetection behind a polarizing beam splitter.

    Draws exactly two uniforms per trial from ``rng``. With ``size=None`` a
    single :class:`ChannelOutcome` is returned, otherwise an int8 code array
    (``lam`` may then be an array of matching length).
    """
    n = 1 if size is None else size
    u = rng.random((2, n))
    codes = detect_from_uniform(lam, analyzer, params, u[0], u[1])
    if size is None:
        return ChannelOutcome(int(codes.reshape(-1)[0]))
    return np.broadcast_to(codes, (n,)).copy()
