import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mprsurv import inference, model
from mprsurv.data import design_from_arrays
from mprsurv.exceptions import ConvergenceError, DataError, NumericalError

from conftest import fake_fit, simulate_design


def test_wald_single_zero_estimate():
    f = fake_fit([0.0, 0.0, 0.0, 0.0], np.eye(4))
    r = inference.wald_single(f, "scale:c")
    assert r.statistic == 0 and r.p_value == 1 and r.df == 1 and r.kind == "wald_single"


def test_wald_single_at_196_se():
    f = fake_fit([0.0, 1.96 * 0.3, 0.0, 0.0], np.diag([1, 0.09, 1, 1]))
    assert inference.wald_single(f, "scale:c").p_value == pytest.approx(0.05, abs=1e-3)


def test_wald_single_chemo_scale_effect():
    f = fake_fit([0.0, -0.37, 0.0, 0.0], np.diag([1, 0.17 ** 2, 1, 1]))
    r = inference.wald_single(f, "scale:c")
    assert r.statistic == pytest.approx(4.737, abs=1e-3)
    assert r.p_value == pytest.approx(0.029, abs=1e-3)


def test_wald_single_unknown_label():
    with pytest.raises(KeyError):
        inference.wald_single(fake_fit([0, 0, 0, 0], np.eye(4)), "scale:zz")


def test_wald_joint_examples():
    r = inference.wald_joint(fake_fit([0, 0, 0, 0], np.eye(4)), "c")
    assert r.statistic == 0 and r.p_value == 1 and r.df == 2
    r = inference.wald_joint(fake_fit([0, 1, 0, 1], np.eye(4)), "c")
    assert r.statistic == pytest.approx(2.0)
    assert r.p_value == pytest.approx(math.exp(-1), abs=1e-12)


def test_wald_joint_absent_component():
    X = np.column_stack([np.ones(5), np.arange(5) % 2])
    d = design_from_arrays(np.arange(1.0, 6), np.ones(5), X, None)
    f = model.FittedModel(model.Theta.split(np.zeros(3), d), 0.0, np.eye(3), 5, 1, 0, True, 1, d)
    with pytest.raises(DataError, match="shape"):
        inference.wald_joint(f, "x1")


def test_wald_joint_singular():
    cov = np.eye(4)
    cov[1, 3] = cov[3, 1] = 1.0
    with pytest.raises(NumericalError):
        inference.wald_joint(fake_fit([0, 1, 0, 1], cov), "c")


def test_wald_joint_rescaling_invariance():
    d1 = simulate_design(400, [-1.0, 0.6], [0.0, 0.3], seed=3, censor_rate=0.2)
    X2 = np.array(d1.X)
    X2[:, 1] *= 2
    d2 = design_from_arrays(d1.time, d1.status, X2, X2)
    r1 = inference.wald_joint(model.fit(d1), "x1")
    r2 = inference.wald_joint(model.fit(d2), "x1")
    assert r1.statistic == pytest.approx(r2.statistic, rel=1e-6)


def test_ellipse_identity_circle():
    e = inference.confidence_ellipse(fake_fit([0, 0.5, 0, -0.2], np.eye(4)), "c", 0.95, 100)
    r = np.hypot(*(e.boundary - [0.5, -0.2]).T)
    np.testing.assert_allclose(r, math.sqrt(-2 * math.log(0.05)), rtol=1e-12)
    assert math.sqrt(e.radius2) == pytest.approx(2.4477, abs=1e-4)
    assert e.boundary.shape == (100, 2)


@pytest.mark.parametrize("level", [0.9, 0.95, 0.99])
def test_ellipse_points_satisfy_quadratic_form(level):
    cov = np.array([[0.04, 0, -0.015, 0], [0, 1, 0, 0], [-0.015, 0, 0.01, 0], [0, 0, 0, 1]])
    cov = cov[[1, 0, 3, 2]][:, [1, 0, 3, 2]]  # put the c columns at positions 1 and 3
    f = fake_fit([0, -0.3, 0, 0.1], cov)
    e = inference.confidence_ellipse(f, "c", level, 60)
    q = e.quadratic_form(e.boundary)
    np.testing.assert_allclose(q, inference.chi_square_quantile(level, 2), atol=1e-8)


def test_ellipse_rejects_bad_level():
    with pytest.raises(ValueError):
        inference.confidence_ellipse(fake_fit([0, 0, 0, 0], np.eye(4)), "c", 1.5)


@pytest.mark.parametrize("level", [0.9, 0.95, 0.99])
@pytest.mark.parametrize("seed", range(8))
def test_ellipse_test_duality(level, seed):
    d = simulate_design(150, [-1.0, 0.25], [0.0, 0.12], seed=seed, censor_rate=0.3)
    f = model.fit(d)
    outside = not inference.confidence_ellipse(f, "x1", level, 400).contains((0.0, 0.0))
    p = inference.wald_joint(f, "x1").p_value
    assert outside == (p < 1 - level)


def test_information_criteria_reference_values():
    aic, bic = inference.information_criteria(-1938.1, 10, 855)
    assert aic == pytest.approx(3896.2, abs=0.1) and bic == pytest.approx(3943.8, abs=0.1)
    aic, bic = inference.information_criteria(-1960.8, 6, 855)
    assert aic == pytest.approx(3933.5, abs=0.1) and bic == pytest.approx(3962.0, abs=0.15)


def test_information_criteria_needs_parameters():
    with pytest.raises(DataError):
        inference.information_criteria(0.0, 0, 10)


def test_lrt_examples():
    full = fake_fit([0, 0, 0, 0], np.eye(4), loglik=-1938.1)
    red = fake_fit([0, 0, 0, 0], np.eye(4), loglik=-1938.1)
    r = inference.likelihood_ratio_test(full, red)
    assert r.statistic == 0 and r.p_value == 1 and r.df == 0


def test_lrt_mpr_vs_ph_structure():
    d = simulate_design(300, [-1.0, 0.5], [0.0, 0.4], seed=21, censor_rate=0.2)
    full = model.fit(d)
    red = model.fit(design_from_arrays(d.time, d.status, d.X, None))
    r = inference.likelihood_ratio_test(full, red)
    assert r.df == (full.p + full.q) - (red.p + red.q) == 1
    assert r.statistic == pytest.approx(2 * (full.loglik - red.loglik))
    assert r.statistic >= 0
    with pytest.raises(DataError):
        inference.likelihood_ratio_test(red, full)


def test_lrt_requires_convergence():
    a = fake_fit([0, 0, 0, 0], np.eye(4), converged=False)
    with pytest.raises(ConvergenceError):
        inference.likelihood_ratio_test(a, a)


def test_lrt_negative_statistic():
    full = fake_fit([0, 0, 0, 0], np.eye(4), loglik=-10.0)
    red = fake_fit([0, 0, 0, 0], np.eye(4), loglik=-9.0)
    with pytest.raises(NumericalError):
        inference.likelihood_ratio_test(full, red)
    red = fake_fit([0, 0, 0, 0], np.eye(4), loglik=-10.0 + 1e-9)
    assert inference.likelihood_ratio_test(full, red).statistic == 0.0


def test_chi_square_closed_forms():
    assert inference.chi_square_sf(0.0, 3) == 1.0
    assert inference.chi_square_sf(5.991, 2) == pytest.approx(math.exp(-5.991 / 2), abs=1e-14)
    assert inference.chi_square_sf(5.991, 2) == pytest.approx(0.05, abs=1e-4)
    tail = 2 * (1 - NormalDist().cdf(math.sqrt(3.841)))
    assert inference.chi_square_sf(3.841, 1) == pytest.approx(tail, abs=1e-12)
    assert inference.chi_square_sf(3.841, 1) == pytest.approx(0.05, abs=1e-4)


def test_chi_square_negative_x():
    with pytest.raises(ValueError):
        inference.chi_square_sf(-1.0, 2)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0, 400), df=st.integers(1, 60))
def test_chi_square_matches_scipy(x, df):
    assert abs(inference.chi_square_sf(x, df) - stats.chi2.sf(x, df)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0, 100), dx=st.floats(1e-3, 10), df=st.integers(1, 20))
def test_chi_square_monotone(x, dx, df):
    assert inference.chi_square_sf(x + dx, df) <= inference.chi_square_sf(x, df)


@pytest.mark.parametrize("df", [1, 2, 5, 8])
def test_chi_square_quantile_inverts_sf(df):
    for p in (0.9, 0.95, 0.99):
        assert inference.chi_square_sf(inference.chi_square_quantile(p, df), df) == pytest.approx(1 - p, abs=1e-10)


def test_wald_joint_size_calibration():
    rejections = 0
    reps = 500
    for r in range(reps):
        d = simulate_design(500, [-1.0, 0.0], [0.0, 0.0], seed=10_000 + r, censor_rate=0.25)
        if inference.wald_joint(model.fit(d), "x1").p_value < 0.05:
            rejections += 1
    assert 0.03 <= rejections / reps <= 0.08
