"""Shared domain types and polarization-angle arithmetic.

Angles are plain floats in degrees. A linear polarizer at ``theta`` and at
``theta + 180`` is the same device, so every orientation is reduced to the
half-open interval [0, 180).

Angles that enter a trial log are additionally quantized to 1e-6 degree
(``ANGLE_DECIMALS``). That is the resolution of the CSV format, so logs
round-trip exactly, and differences of quantized angles can be recovered
exactly, which keeps rotated simulations bit-identical to unrotated ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import DomainError

PERIOD_DEG = 180.0
ANGLE_DECIMALS = 6

AngleDeg = float


def normalize_angle(raw: float) -> AngleDeg:
    """Reduce ``raw`` degrees to the representative in [0, 180)."""
    raw = float(raw)
    if not math.isfinite(raw):
        raise DomainError(f"angle must be finite, got {raw!r}")
    r = raw % PERIOD_DEG
    # tiny negative inputs round up to exactly 180.0
    if r >= PERIOD_DEG:
        r = 0.0
    return r + 0.0  # folds -0.0 into 0.0


def quantize_angle(raw: float) -> AngleDeg:
    """Normalize and round to the 1e-6 degree log resolution."""
    return normalize_angle(round(normalize_angle(raw), ANGLE_DECIMALS))


def normalize_angles(raw: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle` followed by quantization."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise DomainError("angles must be finite")
    r = np.round(np.mod(raw, PERIOD_DEG), ANGLE_DECIMALS)
    r = np.mod(r, PERIOD_DEG)
    r[r >= PERIOD_DEG] = 0.0
    return r + 0.0


def angle_difference(x, y):
    """Exact ``(x - y) mod 180`` for quantized angles (scalars or arrays).

    Both inputs live on the 1e-6 degree grid, so the true difference does
    too; rounding strips the floating-point error of the subtraction.
    """
    d = np.round(np.mod(np.subtract(x, y, dtype=np.float64), PERIOD_DEG), ANGLE_DECIMALS)
    d = np.mod(d, PERIOD_DEG)
    if np.ndim(d) == 0:
        return float(d)
    return d


class ChannelOutcome(enum.IntEnum):
    """Which beam-splitter face fired. The integer values are the log codes."""

    PLUS = 1
    MINUS = -1
    NONE = 0


@dataclass(frozen=True, order=True)
class AnalyzerSetting:
    """A polarizer orientation, normalized and quantized on construction."""

    angle: AngleDeg

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", quantize_angle(self.angle))

    def __float__(self) -> float:
        return self.angle


def as_angle(x: AnalyzerSetting | float) -> AngleDeg:
    if isinstance(x, AnalyzerSetting):
        return x.angle
    return quantize_angle(x)


@dataclass(frozen=True)
class PairEmission:
    """One source event: the left signal's polarization and its complement."""

    lambda_left: AngleDeg
    lambda_right: AngleDeg = field(default=float("nan"))

    def __post_init__(self) -> None:
        left = quantize_angle(self.lambda_left)
        object.__setattr__(self, "lambda_left", left)
        object.__setattr__(self, "lambda_right", quantize_angle(left + 90.0))

    @classmethod
    def from_left(cls, lambda_left: float) -> "PairEmission":
        return cls(lambda_left)


@dataclass(frozen=True)
class TrialRecord:
    n: int
    a: AnalyzerSetting
    b: AnalyzerSetting
    out_a: ChannelOutcome
    out_b: ChannelOutcome
    zeus_lambda: AngleDeg | None = None


def _codes(values) -> np.ndarray:
    raw = np.asarray(values)
    if raw.size and not np.all(np.isin(raw, (-1, 0, 1))):
        raise ValueError("outcome codes must be +1, -1 or 0")
    return raw.astype(np.int8)


class TrialLog:
    """Columnar collection of trial records plus experiment metadata.

    Columns are numpy arrays of equal length: ``n`` (int64), ``a_deg`` and
    ``b_deg`` (float64), ``out_a`` and ``out_b`` (int8 outcome codes) and the
    optional ``zeus_lambda`` (float64, or ``None`` when the log was taken
    without Zeus mode). ``meta`` is a JSON-compatible dict.
    """

    __slots__ = ("n", "a_deg", "b_deg", "out_a", "out_b", "zeus_lambda", "meta")

    def __init__(
        self,
        n: np.ndarray,
        a_deg: np.ndarray,
        b_deg: np.ndarray,
        out_a: np.ndarray,
        out_b: np.ndarray,
        zeus_lambda: np.ndarray | None = None,
        meta: dict[str, Any] | None = None,
    ):
        self.n = np.asarray(n, dtype=np.int64)
        self.a_deg = normalize_angles(a_deg)
        self.b_deg = normalize_angles(b_deg)
        self.out_a = _codes(out_a)
        self.out_b = _codes(out_b)
        self.zeus_lambda = None if zeus_lambda is None else normalize_angles(zeus_lambda)
        self.meta = dict(meta or {})
        size = self.n.shape[0]
        cols = [self.a_deg, self.b_deg, self.out_a, self.out_b]
        if self.zeus_lambda is not None:
            cols.append(self.zeus_lambda)
        if any(c.shape != (size,) for c in cols):
            raise ValueError("all TrialLog columns must be 1-d with equal length")
        if size > 1 and not np.all(np.diff(self.n) > 0):
            raise ValueError("run index n must be strictly increasing")
        if size and self.n[0] < 1:
            raise ValueError("run index n must be positive")

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord], meta: dict[str, Any] | None = None) -> "TrialLog":
        records = list(records)
        zeus = [r.zeus_lambda for r in records]
        has = [z is not None for z in zeus]
        if any(has) and not all(has):
            raise ValueError("zeus_lambda must be present on all records or on none")
        return cls(
            n=[r.n for r in records],
            a_deg=[r.a.angle for r in records],
            b_deg=[r.b.angle for r in records],
            out_a=[int(r.out_a) for r in records],
            out_b=[int(r.out_b) for r in records],
            zeus_lambda=[float(z) for z in zeus] if records and all(has) else None,
            meta=meta,
        )

    @property
    def has_zeus(self) -> bool:
        return self.zeus_lambda is not None

    def __len__(self) -> int:
        return int(self.n.shape[0])

    def __getitem__(self, i: int) -> TrialRecord:
        z = None if self.zeus_lambda is None else float(self.zeus_lambda[i])
        return TrialRecord(
            n=int(self.n[i]),
            a=AnalyzerSetting(float(self.a_deg[i])),
            b=AnalyzerSetting(float(self.b_deg[i])),
            out_a=ChannelOutcome(int(self.out_a[i])),
            out_b=ChannelOutcome(int(self.out_b[i])),
            zeus_lambda=z,
        )

    def __iter__(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield self[i]

    def select(self, mask: np.ndarray, meta: dict[str, Any] | None = None) -> "TrialLog":
        """Sub-log of the rows where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return TrialLog(
            self.n[mask],
            self.a_deg[mask],
            self.b_deg[mask],
            self.out_a[mask],
            self.out_b[mask],
            None if self.zeus_lambda is None else self.zeus_lambda[mask],
            self.meta if meta is None else meta,
        )

    def at_settings(self, a: AnalyzerSetting | float | None = None, b: AnalyzerSetting | float | None = None) -> np.ndarray:
        """Boolean mask of rows taken at the given settings (either may be None)."""
        mask = np.ones(len(self), dtype=bool)
        if a is not None:
            mask &= self.a_deg == as_angle(a)
        if b is not None:
            mask &= self.b_deg == as_angle(b)
        return mask

    def same_records(self, other: "TrialLog") -> bool:
        """Record-for-record equality, ignoring metadata."""
        if (self.zeus_lambda is None) != (other.zeus_lambda is None):
            return False
        same = (
            np.array_equal(self.n, other.n)
            and np.array_equal(self.a_deg, other.a_deg)
            and np.array_equal(self.b_deg, other.b_deg)
            and np.array_equal(self.out_a, other.out_a)
            and np.array_equal(self.out_b, other.out_b)
        )
        if same and self.zeus_lambda is not None:
            same = np.array_equal(self.zeus_lambda, other.zeus_lambda)
        return bool(same)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrialLog):
            return NotImplemented
        return self.same_records(other) and self.meta == other.meta

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"TrialLog({len(self)} records, zeus={self.has_zeus})"
