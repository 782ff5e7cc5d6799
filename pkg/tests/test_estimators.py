import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import FIXED, UNIFORM, experiment, within
from eprlab.errors import ConditioningOnNullError, EmptyCellError, ReportError, UsageError
from eprlab.estimators import (
    TWO_POINT,
    Grid,
    QMKind,
    Side,
    bayes_counts,
    bayes_joint,
    bell_ansatz_expectation,
    chsh,
    chsh_from_log,
    correlation,
    qm_prediction,
    screening_off_report,
    sign_model,
    sign_model_closed_form,
    single_rate,
)
from eprlab.model import TrialLog
from eprlab.optics import DetectorParams
from eprlab.source import SINGLET

N = 100_000
HALF = math.sqrt(0.25 / N)


@pytest.mark.parametrize("source", [FIXED, UNIFORM])
@pytest.mark.parametrize("a", [0.0, 33.0])
def test_single_rate_is_half(source, a):
    log = experiment(source, [(a, 0.0)], N, seed=int(a) + 3)
    r = single_rate(log, Side.A, a)
    assert r.n_used == N and within(r.value, 0.5, HALF)


def test_single_rate_with_efficiency():
    log = experiment(FIXED, [(0.0, 0.0)], N, detector=DetectorParams(0.8))
    r = single_rate(log, "A", 0.0)
    assert within(r.value, 0.4, math.sqrt(0.24 / N))


def test_single_rate_empty_cell():
    log = experiment(FIXED, [(0.0, 0.0)], 10)
    with pytest.raises(EmptyCellError):
        single_rate(log, Side.B, 45.0)


def test_singlet_correlation_examples(singlet_log):
    e = correlation(singlet_log, 0.0, 0.0)
    assert e.value == -1.0 and e.std_err == 0.0
    e = correlation(singlet_log, 0.0, 22.5)
    assert within(e.value, -math.sqrt(0.5), e.std_err)
    assert e.std_err == pytest.approx(math.sqrt((1 - e.value ** 2) / e.n_used))


def test_fixed_axis_correlation(fixed_zeus_log):
    e = correlation(fixed_zeus_log, 22.5, 22.5)
    assert within(e.value, -0.5, e.std_err)


def test_correlation_skips_non_coincident():
    log = experiment(UNIFORM, [(0.0, 10.0)], 20_000, detector=DetectorParams(0.6, 0.05))
    from eprlab.acquisition import apply_coincidence_filter

    assert correlation(log, 0, 10) == correlation(apply_coincidence_filter(log), 0, 10)
    with pytest.raises(EmptyCellError):
        correlation(log, 1, 1)


@pytest.mark.parametrize("kind, a, b, expected", [
    (QMKind.SPIN, 0.0, 0.0, -1.0),
    (QMKind.SPIN, 0.0, 90.0, 0.0),
    (QMKind.SPIN, (0, 0, 1), (0, 0, 1), -1.0),
    (QMKind.SPIN, (0, 0, 1), (1, 0, 0), 0.0),
    (QMKind.POLARIZATION, 30.0, 0.0, -0.5),
    (QMKind.POLARIZATION, 0.0, 45.0, 0.0),
])
def test_qm_prediction(kind, a, b, expected):
    assert qm_prediction(kind, a, b) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("d, expected", [(0.0, -1.0), (22.5, -0.5), (45.0, 0.0)])
def test_sign_model_examples(d, expected):
    model = sign_model(UNIFORM)
    got = bell_ansatz_expectation(model, 10.0, 10.0 + d)
    assert got == pytest.approx(expected, abs=1e-12)


@given(st.floats(0, 180), st.floats(0, 180))
def test_sign_model_dense_grid_crosscheck(a, b):
    model = sign_model(UNIFORM)
    dense = bell_ansatz_expectation(model, a, b, Grid(36_000))
    assert abs(dense - sign_model_closed_form(a, b)) <= 2.0 / 36_000 * 2 + 1e-12
    assert abs(bell_ansatz_expectation(model, a, b) - sign_model_closed_form(a, b)) <= 1e-2


def test_two_point_quadrature_needs_discrete_rho():
    with pytest.raises(UsageError):
        bell_ansatz_expectation(sign_model(UNIFORM), 0, 0, TWO_POINT)
    assert bell_ansatz_expectation(sign_model(FIXED), 0, 0, TWO_POINT) == -1.0


def test_chsh_qm_value():
    es = [qm_prediction("polarization", x, y) for x, y in [(0, 22.5), (0, 67.5), (45, 22.5), (45, 67.5)]]
    assert chsh(*es) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)


def test_chsh_factorizable_bound_brute_force():
    best = max(abs(chsh(fa * gb, fa * gb2, fa2 * gb, fa2 * gb2))
               for fa, fa2, gb, gb2 in itertools.product((-1, 1), repeat=4))
    assert best == 2


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_chsh_factorizable_bound_property(v):
    fa, fa2, gb, gb2 = v
    assert abs(chsh(fa * gb, fa * gb2, fa2 * gb, fa2 * gb2)) <= 2 + 1e-12


def test_chsh_null_and_range():
    assert chsh(0, 0, 0, 0) == 0
    with pytest.raises(UsageError):
        chsh(1.5, 0, 0, 0)


def test_chsh_from_log():
    log = experiment(SINGLET, [(0, 22.5), (0, 67.5), (45, 22.5), (45, 67.5)], 50_000, seed=4)
    res = chsh_from_log(log, 0, 45, 22.5, 67.5)
    assert res.qm_s == pytest.approx(-2 * math.sqrt(2))
    assert within(res.s, res.qm_s, res.std_err)
    assert res.to_dict()["schema"] == 1


def test_bayes_counts_example():
    bj = bayes_counts(100, 40, 10)
    assert (bj.p_joint, bj.p_cond, bj.p_b) == (Fraction(1, 10), Fraction(1, 4), Fraction(2, 5))
    assert bj.identity_holds and bj.as_floats() == (0.1, 0.25, 0.4)


@given(st.integers(1, 10 ** 6).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(1, n)).flatmap(
        lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[1])))))
def test_bayes_identity_exact(t):
    assert bayes_counts(*t).identity_holds


def test_bayes_errors():
    with pytest.raises(ConditioningOnNullError):
        bayes_counts(10, 0, 0)
    with pytest.raises(EmptyCellError):
        bayes_counts(0, 0, 0)


def test_bayes_independent_coins():
    rng = np.random.default_rng(5)
    n = N
    x, y = rng.choice([1, -1], n), rng.choice([1, -1], n)
    log = TrialLog(np.arange(1, n + 1), np.zeros(n), np.zeros(n), x, y)
    bj = bayes_joint(log, 0, 0)
    sigma = math.sqrt(0.25 / bj.n_b)
    assert within(float(bj.p_cond), float(bj.p_a), sigma)


def test_bayes_singlet_equal_settings(singlet_log):
    bj = bayes_joint(singlet_log, 0.0, 0.0)
    assert bj.p_cond == 0 and bj.identity_holds
    assert bayes_joint(singlet_log, 0.0, 0.0, "MINUS").p_cond == 0
    d = bj.to_dict()
    assert d["identity_exact"] is True and "does not indicate" in d["interpretation"]


def test_screening_fixed_axis(fixed_zeus_log):
    rep = screening_off_report(fixed_zeus_log, 22.5, 22.5)
    assert rep.binning == "support" and len(rep.rows) == 2
    for row in rep.rows:
        assert row.n > 0 and within(row.deviation, 0.0, row.std_err)
        assert within(row.p_both, 0.125, math.sqrt(0.125 * 0.875 / row.n))
    assert within(rep.pooled.deviation, 0.125, rep.pooled.std_err)


def test_screening_single_bin(fixed_zeus_log):
    sub = fixed_zeus_log.select(fixed_zeus_log.zeus_lambda == 0.0)
    rep = screening_off_report(sub, 22.5, 22.5, bins="support")
    assert len(rep.rows) == 1
    row = rep.rows[0]
    assert row.deviation == rep.pooled.deviation and within(row.deviation, 0.0, row.std_err)


def _bin_residual(lo, hi, a, b, m=20_000):
    # within a finite bin lambda still varies: deviation -> |Cov(T_A, T_B)| over the bin
    lam = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    ta = np.cos(np.radians(lam - a)) ** 2
    tb = np.cos(np.radians(lam + 90.0 - b)) ** 2
    return abs(np.mean(ta * tb) - ta.mean() * tb.mean())


def test_screening_uniform_ten_degree_bins():
    log = experiment(UNIFORM, [(22.5, 22.5)], N, zeus=True, seed=8)
    rep = screening_off_report(log, 22.5, 22.5)
    assert rep.binning == "edges" and len(rep.rows) == 18
    for r in rep.rows:
        assert within(r.deviation, _bin_residual(r.lo, r.hi, 22.5, 22.5), r.std_err)
        assert _bin_residual(r.lo, r.hi, 22.5, 22.5) < 0.003
    # pooled: P(++) = E[cos^2 sin^2] = 1/8, marginals 1/2
    assert within(rep.pooled.deviation, 0.125, rep.pooled.std_err)


def test_screening_needs_zeus(singlet_log):
    with pytest.raises(ReportError, match="--zeus"):
        screening_off_report(singlet_log, 0, 0)


def test_screening_bad_edges(fixed_zeus_log):
    with pytest.raises(UsageError):
        screening_off_report(fixed_zeus_log, 22.5, 22.5, bins=[0, 90])
