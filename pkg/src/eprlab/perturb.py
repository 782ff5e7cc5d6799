"""Degenerate perturbation theory on a 1D two-particle toy system.

Two particles occupy orbitals u1 and u2 on a uniform grid and interact
through a softened Coulomb kernel ``strength / (|r1 - r2| + softening)``.
The degenerate pair |u1 u2>, |u2 u1> is split by the Coulomb integral J
and the exchange integral K into eigenvalues J +- K with symmetric and
antisymmetric eigenvectors. With no interaction J = K = 0, nothing is
split, and the product states are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

from .errors import ConfigError, PreconditionError
from .estimators import report

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Grid1D:
    n: int
    length: float = 1.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError(f"grid needs at least 8 points, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ConfigError(f"grid length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n)


@dataclass(frozen=True)
class Orbital:
    values: np.ndarray
    label: str = ""

    def norm(self, grid: Grid1D) -> float:
        return float(np.sum(self.values ** 2) * grid.h)


def sine_mode(grid: Grid1D, k: int) -> Orbital:
    """k-th particle-in-a-box mode, normalized on the grid."""
    if k < 1:
        raise ConfigError("mode index starts at 1")
    u = np.sin(k * math.pi * grid.points / grid.length)
    u = u / math.sqrt(np.sum(u * u) * grid.h)
    return Orbital(u, f"sin{k}")


class Kernel(Protocol):
    def matrix(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Interaction:
    strength: float = 1.0
    softening: float = 0.1

    def __post_init__(self) -> None:
        if not self.softening > 0:
            raise ConfigError(f"softening must be > 0, got {self.softening}")

    def matrix(self, points: np.ndarray) -> np.ndarray:
        r = np.asarray(points, dtype=np.float64)
        return self.strength / (np.abs(r[:, None] - r[None, :]) + self.softening)


@dataclass(frozen=True)
class ConstantInteraction:
    """V(r1, r2) = value everywhere."""

    value: float

    def matrix(self, points: np.ndarray) -> np.ndarray:
        return np.full((len(points), len(points)), float(self.value))


def _check(u: Orbital, grid: Grid1D) -> np.ndarray:
    values = np.asarray(u.values, dtype=np.float64)
    if values.shape != (grid.n,):
        raise PreconditionError(f"orbital {u.label!r} has {values.size} values, grid has {grid.n}")
    if abs(np.sum(values ** 2) * grid.h - 1.0) > NORM_TOL:
        raise PreconditionError(f"orbital {u.label!r} is not normalized on the grid")
    return values


def coulomb_integral(u1: Orbital, u2: Orbital, v: Kernel, grid: Grid1D) -> float:
    """J = sum_{i,j} u1(r_i)^2 V(r_i, r_j) u2(r_j)^2 h^2."""
    a, b = _check(u1, grid), _check(u2, grid)
    return float((a * a) @ v.matrix(grid.points) @ (b * b) * grid.h ** 2)


def exchange_integral(u1: Orbital, u2: Orbital, v: Kernel, grid: Grid1D) -> float:
    """K = sum_{i,j} u1(r_i) u2(r_i) V(r_i, r_j) u2(r_j) u1(r_j) h^2."""
    a, b = _check(u1, grid), _check(u2, grid)
    overlap = a * b
    return float(overlap @ v.matrix(grid.points) @ overlap * grid.h ** 2)


@dataclass(frozen=True)
class Eigensystem:
    """Eigenpairs of [[j, k], [k, j]] in the basis (|u1 u2>, |u2 u1>).

    ``eigenvectors[:, i]`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degenerate: bool

    @property
    def product_states(self) -> bool:
        return self.degenerate

    def to_dict(self) -> dict[str, Any]:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.T.tolist(),
            "degenerate": self.degenerate,
            "basis": ["|u1 u2>", "|u2 u1>"],
        }


def degenerate_eigensystem(j: float, k: float) -> Eigensystem:
    """Diagonalize the perturbation in the degenerate two-state subspace.

    For k != 0 the eigenvalues are (j + k, j - k) with eigenvectors
    (1, 1)/sqrt2 and (1, -1)/sqrt2. For k == 0 the level stays degenerate and
    the product basis is returned.
    """
    j, k = float(j), float(k)
    if k == 0.0:
        return Eigensystem(np.array([j, j]), np.eye(2), True)
    s = 1.0 / math.sqrt(2.0)
    vecs = np.array([[s, s], [s, -s]])
    return Eigensystem(np.array([j + k, j - k]), vecs, False)


def perturbation_report(n: int = 64, length: float = 1.0, softening: float | None = None,
                        strength: float = 1.0, modes: tuple[int, int] = (1, 2)) -> dict[str, Any]:
    grid = Grid1D(n, length)
    delta = 0.1 * length if softening is None else softening
    v = Interaction(strength, delta)
    u1, u2 = sine_mode(grid, modes[0]), sine_mode(grid, modes[1])
    j = coulomb_integral(u1, u2, v, grid)
    k = exchange_integral(u1, u2, v, grid)
    eig = degenerate_eigensystem(j, k)
    return report(
        "perturb",
        grid={"n": grid.n, "length": grid.length, "h": grid.h},
        interaction={"strength": strength, "softening": delta},
        modes=list(modes),
        J=j,
        K=k,
        splitting=2.0 * abs(k),
        **eig.to_dict(),
    )
