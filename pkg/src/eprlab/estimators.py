"""Rates, correlations, CHSH, Bell-Ansatz quadrature, Bayes joints, screening off.

Every estimator here is a fold over a :class:`~eprlab.model.TrialLog`.
Outcome labels PLUS / MINUS become +1 / -1 only inside these functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence, Union

import numpy as np

from .errors import ConditioningOnNullError, EmptyCellError, ReportError, UsageError
from .model import AnalyzerSetting, ChannelOutcome, TrialLog, as_angle
from .source import LambdaDistribution, SourceKind

SCHEMA_VERSION = 1


def report(kind: str, **payload: Any) -> dict[str, Any]:
    """Wrap a JSON payload with the schema header."""
    return {"schema": SCHEMA_VERSION, "kind": kind, **payload}


class Side(str, enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class Estimate:
    value: float
    n_used: int
    std_err: float

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "n_used": self.n_used, "std_err": self.std_err}


@dataclass(frozen=True)
class RateEstimate(Estimate):
    """A proportion with its binomial standard error."""

    count: int = 0

    @classmethod
    def from_counts(cls, count: int, n: int) -> "RateEstimate":
        p = count / n
        return cls(p, n, math.sqrt(p * (1.0 - p) / n), count)

    def to_dict(self) -> dict[str, Any]:
        return {**super().to_dict(), "count": self.count}


@dataclass(frozen=True)
class CorrelationEstimate(Estimate):
    """Mean product of +-1 outcomes; ``std_err = sqrt((1 - value**2) / n_used)``."""

    @classmethod
    def from_products(cls, total: int, n: int) -> "CorrelationEstimate":
        v = total / n
        return cls(v, n, math.sqrt(max(0.0, 1.0 - v * v) / n))


def _event_code(event: ChannelOutcome | str) -> int:
    ev = ChannelOutcome[event.upper()] if isinstance(event, str) else ChannelOutcome(event)
    if ev is ChannelOutcome.NONE:
        raise UsageError("event must be PLUS or MINUS")
    return int(ev)


def single_rate(log: TrialLog, side: Side | str, setting: AnalyzerSetting | float,
                event: ChannelOutcome | str = ChannelOutcome.PLUS) -> RateEstimate:
    """Fraction of trials at ``setting`` on ``side`` whose ``event`` channel fired."""
    side = Side(side)
    if side is Side.A:
        mask, codes = log.at_settings(a=setting), log.out_a
    else:
        mask, codes = log.at_settings(b=setting), log.out_b
    n = int(mask.sum())
    if n == 0:
        raise EmptyCellError(f"no records with side {side.value} at {as_angle(setting)} deg")
    return RateEstimate.from_counts(int((codes[mask] == _event_code(event)).sum()), n)


def correlation(log: TrialLog, a: AnalyzerSetting | float, b: AnalyzerSetting | float) -> CorrelationEstimate:
    """Mean of out_a * out_b over coincident records at (a, b).

    Records with NONE on either side are skipped, so unfiltered logs give the
    same answer as logs passed through the REQUIRE_BOTH filter.
    """
    mask = log.at_settings(a, b) & (log.out_a != 0) & (log.out_b != 0)
    n = int(mask.sum())
    if n == 0:
        raise EmptyCellError(f"no coincident records at (a, b) = ({as_angle(a)}, {as_angle(b)})")
    total = int(np.dot(log.out_a[mask].astype(np.int64), log.out_b[mask].astype(np.int64)))
    return CorrelationEstimate.from_products(total, n)


def setting_pairs(log: TrialLog) -> list[tuple[float, float]]:
    """Distinct (a, b) pairs present in the log, in first-appearance order."""
    seen: dict[tuple[float, float], None] = {}
    for a, b in zip(log.a_deg.tolist(), log.b_deg.tolist()):
        seen.setdefault((a, b), None)
    return list(seen)


class QMKind(str, enum.Enum):
    SPIN = "spin"
    POLARIZATION = "polarization"


def qm_prediction(kind: QMKind | str, a, b) -> float:
    """Quantum expectation of the product of outcomes.

    SPIN: ``-cos(theta_ab)``. ``a`` and ``b`` are either planar directions in
    degrees or 3-vectors. POLARIZATION: ``-cos 2(a - b)`` with angles in degrees.
    """
    kind = QMKind(kind)
    if kind is QMKind.POLARIZATION:
        return -math.cos(2.0 * math.radians(as_angle(a) - as_angle(b)))
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return -math.cos(math.radians(float(a) - float(b)))
    va, vb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if va.shape != (3,) or vb.shape != (3,):
        raise UsageError("spin directions must be angles or 3-vectors")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise UsageError("spin direction vectors must be non-zero")
    return -float(np.dot(va, vb) / (na * nb))


OutcomeFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LocalModel:
    """Deterministic local outcome functions and a lambda density.

    ``outcome_a(a, lam)`` and ``outcome_b(b, lam)`` receive a setting in
    degrees and an array of lambdas and must return +-1 arrays. Neither sees
    the other station's setting.
    """

    outcome_a: OutcomeFn
    outcome_b: OutcomeFn
    rho: LambdaDistribution


TWO_POINT = "two-point"


@dataclass(frozen=True)
class Grid:
    n: int = 3600

    def __post_init__(self) -> None:
        if self.n < 1:
            raise UsageError("grid size must be positive")

    def nodes(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * (180.0 / self.n)


Quadrature = Union[str, Grid]


def _sign(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0.0, 1, -1)


def sign_model(rho: LambdaDistribution) -> LocalModel:
    """A = sign cos 2(lam - a), B = -sign cos 2(lam - b)."""
    return LocalModel(
        outcome_a=lambda a, lam: _sign(np.cos(2.0 * np.radians(lam - a))),
        outcome_b=lambda b, lam: -_sign(np.cos(2.0 * np.radians(lam - b))),
        rho=rho,
    )


def sign_model_closed_form(a: float, b: float) -> float:
    """Uniform-rho sign-model expectation ``-1 + 4*delta/180`` with delta in [0, 90]."""
    d = abs(as_angle(a) - as_angle(b)) % 180.0
    d = min(d, 180.0 - d)
    return -1.0 + 4.0 * d / 180.0


def bell_ansatz_expectation(model: LocalModel, a: AnalyzerSetting | float, b: AnalyzerSetting | float,
                            quadrature: Quadrature | None = None) -> float:
    """Integral of rho(lam) A(a, lam) B(b, lam) over lam.

    Discrete densities are summed exactly over their support. Uniform
    densities use the midpoint rule (``Grid``, default 3600 nodes); passing
    ``TWO_POINT`` with a continuous density is an error.
    """
    a_deg, b_deg = as_angle(a), as_angle(b)
    support = model.rho.support
    if support is not None:
        lam = np.asarray(support, dtype=np.float64)
        w = np.full(lam.shape, 1.0 / lam.size)
    else:
        if quadrature == TWO_POINT:
            raise UsageError("two-point quadrature needs a two-point density")
        grid = quadrature if isinstance(quadrature, Grid) else Grid()
        lam = grid.nodes()
        w = np.full(lam.shape, 1.0 / grid.n)
    prod = np.asarray(model.outcome_a(a_deg, lam)) * np.asarray(model.outcome_b(b_deg, lam))
    return float(np.clip(np.dot(w, prod), -1.0, 1.0))


def chsh(e_ab: float, e_ab2: float, e_a2b: float, e_a2b2: float) -> float:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    for e in (e_ab, e_ab2, e_a2b, e_a2b2):
        if not -1.0 <= e <= 1.0:
            raise UsageError(f"correlations must lie in [-1, 1], got {e}")
    return e_ab - e_ab2 + e_a2b + e_a2b2


@dataclass(frozen=True)
class ChshResult:
    angles: tuple[float, float, float, float]
    correlations: tuple[CorrelationEstimate, ...]
    s: float
    std_err: float
    qm_s: float

    def to_dict(self) -> dict[str, Any]:
        a, a2, b, b2 = self.angles
        labels = [("a", "b", a, b), ("a", "b'", a, b2), ("a'", "b", a2, b), ("a'", "b'", a2, b2)]
        return report(
            "chsh",
            angles={"a": a, "a'": a2, "b": b, "b'": b2},
            correlations=[
                {"pair": f"{x},{y}", "a_deg": av, "b_deg": bv, **e.to_dict()}
                for (x, y, av, bv), e in zip(labels, self.correlations)
            ],
            S=self.s,
            abs_S=abs(self.s),
            std_err=self.std_err,
            qm_polarization_S=self.qm_s,
            classical_bound=2.0,
        )


def chsh_from_log(log: TrialLog, a: float, a2: float, b: float, b2: float) -> ChshResult:
    angles = tuple(as_angle(x) for x in (a, a2, b, b2))
    a, a2, b, b2 = angles
    es = tuple(correlation(log, x, y) for x, y in ((a, b), (a, b2), (a2, b), (a2, b2)))
    s = chsh(*(e.value for e in es))
    se = math.sqrt(sum(e.std_err ** 2 for e in es))
    qm = chsh(*(qm_prediction(QMKind.POLARIZATION, x, y) for x, y in ((a, b), (a, b2), (a2, b), (a2, b2))))
    return ChshResult(angles, es, s, se, qm)


BAYES_INTERPRETATION = (
    "Conditional frequency computed from records already in the log. It states "
    "how detections at the two stations are correlated; it does not indicate "
    "that either setting influences the other station."
)


@dataclass(frozen=True)
class BayesJoint:
    """Counts and exact rationals for P(a, b) = P(a | b) P(b)."""

    n: int
    n_b: int
    n_both: int
    n_a: int
    p_joint: Fraction
    p_cond: Fraction
    p_b: Fraction
    p_a: Fraction
    event: str = "PLUS"

    @property
    def identity_holds(self) -> bool:
        return self.p_joint == self.p_cond * self.p_b

    def as_floats(self) -> tuple[float, float, float]:
        return float(self.p_joint), float(self.p_cond), float(self.p_b)

    def to_dict(self) -> dict[str, Any]:
        def frac(f: Fraction) -> dict[str, Any]:
            return {"num": f.numerator, "den": f.denominator, "value": float(f)}

        return {
            "event": self.event,
            "n": self.n,
            "n_b_hit": self.n_b,
            "n_a_hit": self.n_a,
            "n_both": self.n_both,
            "p_joint": frac(self.p_joint),
            "p_cond": frac(self.p_cond),
            "p_b": frac(self.p_b),
            "p_a": frac(self.p_a),
            "identity_exact": self.identity_holds,
            "interpretation": BAYES_INTERPRETATION,
        }


def bayes_counts(n: int, n_b: int, n_both: int, n_a: int = 0, event: str = "PLUS") -> BayesJoint:
    if n <= 0:
        raise EmptyCellError("no records at the requested settings")
    if n_b == 0:
        raise ConditioningOnNullError("no b-hits: cannot condition on an event that never occurred")
    return BayesJoint(
        n=n, n_b=n_b, n_both=n_both, n_a=n_a,
        p_joint=Fraction(n_both, n),
        p_cond=Fraction(n_both, n_b),
        p_b=Fraction(n_b, n),
        p_a=Fraction(n_a, n),
        event=event,
    )


def bayes_joint(log: TrialLog, a: AnalyzerSetting | float, b: AnalyzerSetting | float,
                event: ChannelOutcome | str = ChannelOutcome.PLUS) -> BayesJoint:
    """Joint, conditional and marginal hit frequencies at settings (a, b).

    A hit is the ``event`` channel firing (PLUS by default; MINUS gives the
    mirror analysis). All frequencies share the denominator N = number of
    records taken at (a, b).
    """
    code = _event_code(event)
    mask = log.at_settings(a, b)
    hit_a = log.out_a[mask] == code
    hit_b = log.out_b[mask] == code
    return bayes_counts(
        n=int(mask.sum()),
        n_b=int(hit_b.sum()),
        n_both=int((hit_a & hit_b).sum()),
        n_a=int(hit_a.sum()),
        event=ChannelOutcome(code).name,
    )


@dataclass(frozen=True)
class ScreeningRow:
    label: str
    lo: float | None
    hi: float | None
    n: int
    p_both: float
    p_a: float
    p_b: float
    deviation: float
    std_err: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "bin": self.label, "lo": self.lo, "hi": self.hi, "n": self.n,
            "p_both": self.p_both, "p_a": self.p_a, "p_b": self.p_b,
            "deviation": self.deviation, "std_err": self.std_err,
        }


@dataclass(frozen=True)
class ScreeningReport:
    a: float
    b: float
    rows: tuple[ScreeningRow, ...]
    pooled: ScreeningRow
    binning: str = field(default="edges")

    def to_dict(self) -> dict[str, Any]:
        return report(
            "screening",
            a_deg=self.a, b_deg=self.b, binning=self.binning,
            bins=[r.to_dict() for r in self.rows],
            pooled=self.pooled.to_dict(),
        )


def _screen_row(label: str, lo, hi, hit_a: np.ndarray, hit_b: np.ndarray) -> ScreeningRow:
    n = int(hit_a.size)
    if n == 0:
        return ScreeningRow(label, lo, hi, 0, math.nan, math.nan, math.nan, math.nan, math.nan)
    p11 = float(np.count_nonzero(hit_a & hit_b)) / n
    pa = float(np.count_nonzero(hit_a)) / n
    pb = float(np.count_nonzero(hit_b)) / n
    dev = abs(p11 - pa * pb)
    # delta method on the 2x2 multinomial for f = p11 - pA*pB
    p10, p01 = pa - p11, pb - p11
    g11, g10, g01 = 1.0 - pa - pb, -pb, -pa
    mean = g11 * p11 + g10 * p10 + g01 * p01
    var = (g11 ** 2 * p11 + g10 ** 2 * p10 + g01 ** 2 * p01 - mean ** 2) / n
    return ScreeningRow(label, lo, hi, n, p11, pa, pb, dev, math.sqrt(max(var, 0.0)))


def default_bins(log: TrialLog) -> str | list[float]:
    """Exact support for a fixed-axis source, 18 ten-degree bins otherwise."""
    src = log.meta.get("config", {}).get("source", {})
    if src.get("kind") == SourceKind.FIXED_AXIS.value:
        return "support"
    return [10.0 * i for i in range(19)]


def screening_off_report(log: TrialLog, a: AnalyzerSetting | float, b: AnalyzerSetting | float,
                         bins: str | Sequence[float] | None = None,
                         event: ChannelOutcome | str = ChannelOutcome.PLUS) -> ScreeningReport:
    """Joint vs product-of-marginal hit rates within lambda bins and pooled.

    ``bins`` is ``"support"`` (one bin per distinct lambda value) or a list of
    increasing edges from 0 to 180. Requires a log taken in Zeus mode.
    """
    if log.zeus_lambda is None:
        raise ReportError("log has no lambda column; rerun the simulation with Zeus mode (--zeus) enabled")
    if bins is None:
        bins = default_bins(log)
    code = _event_code(event)
    mask = log.at_settings(a, b)
    if not mask.any():
        raise EmptyCellError(f"no records at (a, b) = ({as_angle(a)}, {as_angle(b)})")
    lam = log.zeus_lambda[mask]
    hit_a = log.out_a[mask] == code
    hit_b = log.out_b[mask] == code

    rows = []
    if isinstance(bins, str):
        if bins != "support":
            raise UsageError(f"unknown binning {bins!r}")
        for v in np.unique(lam):
            sel = lam == v
            rows.append(_screen_row(f"lambda={v:g}", float(v), float(v), hit_a[sel], hit_b[sel]))
        binning = "support"
    else:
        edges = np.asarray(bins, dtype=np.float64)
        if edges.size < 2 or edges[0] != 0.0 or edges[-1] != 180.0 or np.any(np.diff(edges) <= 0):
            raise UsageError("bin edges must increase from 0 to 180")
        idx = np.searchsorted(edges, lam, side="right") - 1
        for i in range(edges.size - 1):
            sel = idx == i
            lo, hi = float(edges[i]), float(edges[i + 1])
            rows.append(_screen_row(f"[{lo:g},{hi:g})", lo, hi, hit_a[sel], hit_b[sel]))
        binning = "edges"
    pooled = _screen_row("pooled", None, None, hit_a, hit_b)
    return ScreeningReport(as_angle(a), as_angle(b), tuple(rows), pooled, binning)


def correlation_table(log: TrialLog) -> list[dict[str, Any]]:
    rows = []
    for a, b in setting_pairs(log):
        try:
            e = correlation(log, a, b)
        except EmptyCellError:
            continue
        rows.append({"a_deg": a, "b_deg": b, **e.to_dict(),
                     "qm_polarization": qm_prediction(QMKind.POLARIZATION, a, b)})
    return rows


def random_sign_model(rng: np.random.Generator) -> LocalModel:
    """A randomly parameterized deterministic local model.

    Each station thresholds a harmonic of its own relative angle:
    ``s * sign(cos(k * 2(lam - x) + phi) + c)``.
    """
    kind = SourceKind.UNIFORM if rng.random() < 0.5 else SourceKind.FIXED_AXIS
    rho = LambdaDistribution(kind, float(rng.uniform(0.0, 180.0)))

    def station() -> OutcomeFn:
        k = int(rng.integers(1, 4))
        phi = float(rng.uniform(0.0, 2.0 * math.pi))
        c = float(rng.uniform(-0.9, 0.9))
        s = 1 if rng.random() < 0.5 else -1

        def outcome(x: float, lam: np.ndarray) -> np.ndarray:
            return s * _sign(np.cos(2.0 * k * np.radians(lam - x) + phi) + c)

        return outcome

    return LocalModel(station(), station(), rho)


__all__ = [
    "BayesJoint", "ChshResult", "CorrelationEstimate", "Estimate", "Grid", "LocalModel",
    "QMKind", "RateEstimate", "ScreeningReport", "ScreeningRow", "Side", "TWO_POINT",
    "bayes_counts", "bayes_joint", "bell_ansatz_expectation", "chsh", "chsh_from_log",
    "correlation", "correlation_table", "default_bins", "qm_prediction", "random_sign_model",
    "report", "screening_off_report", "setting_pairs", "sign_model", "sign_model_closed_form",
    "single_rate",
]
