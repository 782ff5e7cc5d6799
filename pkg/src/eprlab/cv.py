"""Continuous-variable EPR variance criterion with a classical generator.

The generator is an ordinary joint distribution over four real variables.
Positions are anticorrelated and momenta correlated up to Gaussian noise,
and the product Var(x_o + x_e) * Var(p_o - p_e) is compared against 1/4
(dimensionless units, hbar = 1).
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .estimators import report
from .streams import SeededStream

LATENT_SCALE = 10.0
QUARTER = 0.25
CHUNK = 1 << 16


@dataclass(frozen=True)
class CVNoise:
    sigma_x: float = 0.0
    sigma_p: float = 0.0

    def __post_init__(self) -> None:
        for name in ("sigma_x", "sigma_p"):
            v = float(getattr(self, name))
            if not (v >= 0.0 and np.isfinite(v)):
                raise ConfigError(f"{name} must be a finite non-negative number, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class CVSample:
    """Columns of one or many samples (scalars or equal-length arrays)."""

    x_o: Any
    x_e: Any
    p_o: Any
    p_e: Any

    def __len__(self) -> int:
        return int(np.size(self.x_o))


def sample_cv_pair(noise: CVNoise, rng: np.random.Generator, size: int | None = None) -> CVSample:
    """Draw pairs with x_o + x_e = eps_x and p_o - p_e = -eps_p."""
    n = 1 if size is None else size
    z = rng.standard_normal((4, n))
    x = LATENT_SCALE * z[0]
    p = LATENT_SCALE * z[1]
    x_e = -x + noise.sigma_x * z[2]
    p_e = p + noise.sigma_p * z[3]
    if size is None:
        return CVSample(float(x[0]), float(x_e[0]), float(p[0]), float(p_e[0]))
    return CVSample(x, x_e, p, p_e)


@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations; merges pairwise."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(np.sum((values - mean) ** 2)))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        """Unbiased (n - 1) variance."""
        return self.m2 / (self.n - 1)


def merge_all(parts: Iterable[Moments]) -> Moments:
    """Pairwise (tree) reduction; the result depends only on the partition."""
    items = list(parts)
    if not items:
        return Moments()
    while len(items) > 1:
        nxt = [items[i].merge(items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


class Verdict(str, enum.Enum):
    BELOW_QUARTER = "BELOW_QUARTER"
    AT_OR_ABOVE = "AT_OR_ABOVE"


@dataclass(frozen=True)
class VarianceProduct:
    v_sum_x: float
    v_diff_p: float
    product: float
    verdict: Verdict
    n: int

    def to_dict(self) -> dict[str, Any]:
        return report(
            "cv",
            n=self.n,
            var_sum_x=self.v_sum_x,
            var_diff_p=self.v_diff_p,
            product=self.product,
            bound=QUARTER,
            verdict=self.verdict.value,
            units="dimensionless, hbar = 1",
        )


def _columns(samples: CVSample | Sequence[CVSample]):
    if isinstance(samples, CVSample):
        cols = [np.atleast_1d(np.asarray(getattr(samples, f), dtype=np.float64))
                for f in ("x_o", "x_e", "p_o", "p_e")]
    else:
        samples = list(samples)
        cols = [np.concatenate([np.atleast_1d(np.asarray(getattr(s, f), dtype=np.float64)) for s in samples])
                if samples else np.empty(0) for f in ("x_o", "x_e", "p_o", "p_e")]
    return cols


def epr_variance_product(samples: CVSample | Sequence[CVSample], chunk: int = CHUNK) -> VarianceProduct:
    """Var(x_o + x_e), Var(p_o - p_e), their product and the verdict vs 1/4."""
    x_o, x_e, p_o, p_e = _columns(samples)
    n = x_o.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    s = x_o + x_e
    d = p_o - p_e
    vs = merge_all(Moments.of(s[i:i + chunk]) for i in range(0, n, chunk)).variance
    vd = merge_all(Moments.of(d[i:i + chunk]) for i in range(0, n, chunk)).variance
    return _finish(vs, vd, n)


def _finish(vs: float, vd: float, n: int) -> VarianceProduct:
    prod = vs * vd
    verdict = Verdict.BELOW_QUARTER if prod < QUARTER else Verdict.AT_OR_ABOVE
    return VarianceProduct(vs, vd, prod, verdict, n)


def cv_variance_product(noise: CVNoise, samples: int, seed: int, workers: int = 1) -> VarianceProduct:
    """Chunked CV run: chunk k draws from stream (seed, k); merged pairwise."""
    if samples < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {samples}")
    starts = list(range(0, samples, CHUNK))

    def job(k: int) -> tuple[Moments, Moments]:
        size = min(CHUNK, samples - starts[k])
        s = sample_cv_pair(noise, SeededStream(seed, (k,)).generator(), size)
        return Moments.of(s.x_o + s.x_e), Moments.of(s.p_o - s.p_e)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(starts))))
    else:
        parts = [job(k) for k in range(len(starts))]
    vs = merge_all(p[0] for p in parts).variance
    vd = merge_all(p[1] for p in parts).variance
    return _finish(vs, vd, samples)
