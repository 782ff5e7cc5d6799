from __future__ import annotations

import math

import numpy as np
import pytest

from eprlab.acquisition import ExperimentConfig, SettingPair, run_experiment
from eprlab.source import SINGLET, LambdaDistribution, SourceKind


def born_joint(a_deg: float, b_deg: float) -> dict[tuple[int, int], float]:
    """|<x_a, y_b | psi>|^2 for psi = (|vh> - |hv>)/sqrt2, built from vectors."""
    v, h = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    psi = (np.kron(v, h) - np.kron(h, v)) / math.sqrt(2.0)

    def ket(theta_deg: float, outcome: int) -> np.ndarray:
        t = math.radians(theta_deg + (0.0 if outcome == 1 else 90.0))
        return math.cos(t) * v + math.sin(t) * h

    return {
        (x, y): float(np.dot(np.kron(ket(a_deg, x), ket(b_deg, y)), psi) ** 2)
        for x in (1, -1) for y in (1, -1)
    }


def within(value: float, expected: float, sigma: float, k: float = 3.0) -> bool:
    return abs(value - expected) <= k * sigma + 1e-12


def experiment(source, pairs, trials, seed=12345, **kw):
    schedule = tuple(SettingPair(a, b, trials) for a, b in pairs)
    return run_experiment(ExperimentConfig(source, schedule, seed, **kw))


FIXED = LambdaDistribution(SourceKind.FIXED_AXIS, 0.0)
UNIFORM = LambdaDistribution(SourceKind.UNIFORM, 0.0)


@pytest.fixture(scope="session")
def fixed_zeus_log():
    return experiment(FIXED, [(22.5, 22.5), (0.0, 0.0)], 100_000, seed=7, zeus=True)


@pytest.fixture(scope="session")
def singlet_log():
    return experiment(SINGLET, [(0.0, 0.0), (0.0, 22.5), (45.0, 45.0), (30.0, 0.0)], 100_000, seed=11)
