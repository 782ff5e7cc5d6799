"""Statistical rotational invariance vs per-pair deterministic anticorrelation.

Invariance is judged on estimated correlation functions only. Per-pair
anticorrelation gets its own statistic, :func:`determinism_fraction`.
A failed invariance row is a result, not an error: the fixed-axis source is
expected to fail under SETTINGS_ONLY rotation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .acquisition import ExperimentConfig, SettingPair, run_experiment
from .errors import EmptyCellError, UsageError
from .estimators import RateEstimate, correlation, report
from .model import AnalyzerSetting, TrialLog, as_angle, quantize_angle


class RotationMode(str, enum.Enum):
    CO_ROTATE = "co-rotate"
    SIGNALS_ONLY = "signals-only"
    SETTINGS_ONLY = "settings-only"


@dataclass(frozen=True)
class RotationSpec:
    theta: float
    mode: RotationMode = RotationMode.CO_ROTATE

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", quantize_angle(self.theta))
        object.__setattr__(self, "mode", RotationMode(self.mode))

    @property
    def rotates_signals(self) -> bool:
        return self.mode in (RotationMode.CO_ROTATE, RotationMode.SIGNALS_ONLY)

    @property
    def rotates_settings(self) -> bool:
        return self.mode in (RotationMode.CO_ROTATE, RotationMode.SETTINGS_ONLY)


@dataclass(frozen=True)
class InvarianceRow:
    a: float
    b: float
    e_baseline: float
    e_rotated: float
    abs_delta: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "a_deg": self.a, "b_deg": self.b,
            "E_baseline": self.e_baseline, "E_rotated": self.e_rotated,
            "abs_delta": self.abs_delta, "threshold_3sigma": self.threshold,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class InvarianceReport:
    source: str
    rotation: RotationSpec
    rows: tuple[InvarianceRow, ...]
    record_identical: bool

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return report(
            "invariance",
            source=self.source,
            theta_deg=self.rotation.theta,
            mode=self.rotation.mode.value,
            rows=[r.to_dict() for r in self.rows],
            all_pass=self.passed,
            record_identical=self.record_identical,
        )


def rotate_config(config: ExperimentConfig, rot: RotationSpec) -> ExperimentConfig:
    """Shift the source axis and/or the analyzer settings by ``rot.theta``.

    The singlet sampler has no emitted polarization to rotate, so a
    SIGNALS_ONLY rotation leaves it unchanged.
    """
    cfg = config
    if rot.rotates_signals:
        cfg = cfg.with_source(cfg.source.rotated(rot.theta))
    if rot.rotates_settings:
        cfg = cfg.with_schedule(SettingPair(p.a + rot.theta, p.b + rot.theta, p.trials) for p in cfg.schedule)
    return cfg


def invariance_test(config: ExperimentConfig, rot: RotationSpec,
                    settings_grid: Sequence[tuple[float, float]] | None = None,
                    trials_per_pair: int | None = None, workers: int = 1) -> InvarianceReport:
    """Compare correlations of a baseline run with a rotated run.

    Both runs share the seed, so their random streams are matched
    trial-for-trial. ``settings_grid`` replaces the config's schedule (each
    pair gets ``trials_per_pair`` trials, defaulting to the first schedule
    entry's count); with no grid the config's schedule is used as is.
    """
    if settings_grid is not None:
        n = trials_per_pair or config.schedule[0].trials
        config = config.with_schedule(SettingPair(a, b, n) for a, b in settings_grid)
    rotated_cfg = rotate_config(config, rot)
    base_log = run_experiment(config, workers=workers)
    rot_log = run_experiment(rotated_cfg, workers=workers)

    rows = []
    for p, q in zip(config.schedule, rotated_cfg.schedule):
        try:
            e0 = correlation(base_log, p.a, p.b)
            e1 = correlation(rot_log, q.a, q.b)
        except EmptyCellError:
            continue
        delta = abs(e1.value - e0.value)
        thr = 3.0 * math.hypot(e0.std_err, e1.std_err)
        rows.append(InvarianceRow(p.a, p.b, e0.value, e1.value, delta, thr, delta <= thr))

    identical = bool(
        np.array_equal(base_log.out_a, rot_log.out_a) and np.array_equal(base_log.out_b, rot_log.out_b)
    )
    return InvarianceReport(config.source.kind.value, rot, tuple(rows), identical)


def determinism_fraction(log: TrialLog, a: AnalyzerSetting | float, b: AnalyzerSetting | float) -> RateEstimate:
    """Fraction of coincident records at equal settings with opposite outcomes.

    Returns a :class:`RateEstimate`; ``float()`` of it is the fraction.
    """
    if as_angle(a) != as_angle(b):
        raise UsageError("determinism_fraction is defined only at equal settings (a == b)")
    mask = log.at_settings(a, b) & (log.out_a != 0) & (log.out_b != 0)
    n = int(mask.sum())
    if n == 0:
        raise EmptyCellError(f"no coincident records at a = b = {as_angle(a)}")
    return RateEstimate.from_counts(int((log.out_a[mask] != log.out_b[mask]).sum()), n)


def fixed_axis_determinism(theta_deg: float) -> float:
    """Closed form ``1 - sin^2(2 theta) / 2`` for the fixed-axis source at a = b = theta."""
    return 1.0 - 0.5 * math.sin(2.0 * math.radians(theta_deg)) ** 2
