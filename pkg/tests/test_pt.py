import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpaudit import Dataset, RngStream, SynthSpec, generate, split_dataset
from cpaudit.conformal import (CalibratedPredictor, VCPMethod, calibrate, empirical_quantile,
                               vcp_predict, vcp_predict_batch, vcp_threshold)
from cpaudit.core import Interval, LabelSet
from cpaudit.errors import ConfigError, InvalidKeepProbability
from cpaudit.models import LinearMean, Logistic, fit_linear_mean
from cpaudit.pt import (PTConfig, PTMethod, PTPredictor, adjusted_alpha, localize,
                        localized_pt_equivalence, localized_pt_pairs, pt_predict,
                        pt_predict_batch, second_level)
from cpaudit.scores import ABS_RESIDUAL, SOFTMAX


@pytest.fixture
def cp37():
    return CalibratedPredictor(LinearMean(np.zeros(1), 0.0), ABS_RESIDUAL,
                               np.arange(1.0, 38.0))


def test_adjusted_alpha_examples():
    assert adjusted_alpha(0.1, 0.95) == pytest.approx(0.0526316, abs=1e-7)
    assert adjusted_alpha(0.1, 1.0) == 0.1
    with pytest.raises(InvalidKeepProbability):
        adjusted_alpha(0.1, 0.9)
    with pytest.raises(InvalidKeepProbability):
        adjusted_alpha(0.1, 1.01)
    with pytest.raises(ConfigError):
        adjusted_alpha(1.5, 0.99)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0, 1))
def test_coverage_identity(alpha, frac):
    p = 1.0 - alpha + frac * alpha
    if not 1.0 - alpha < p <= 1.0:
        return
    assert p * (1.0 - adjusted_alpha(alpha, p)) == pytest.approx(1.0 - alpha, rel=1e-15,
                                                                 abs=1e-15)


@given(st.floats(0.01, 0.5), st.floats(0.01, 0.99), st.floats(0.5, 0.999))
def test_two_level_constraint(alpha, frac, alpha1):
    p = 1.0 - alpha + frac * alpha
    a2 = second_level(alpha, p, alpha1)
    assert (1 - p) * alpha1 + p * a2 == pytest.approx(alpha, abs=1e-15)


def test_two_level_config():
    cfg = PTConfig(0.96, 0.1, "two_level", 0.99)
    assert 0 < cfg.alpha2 < cfg.target_alpha
    with pytest.raises(ConfigError):
        PTConfig(0.96, 0.1, "two_level", None)
    with pytest.raises(ConfigError):
        PTConfig(0.91, 0.1, "two_level", 0.01 + 0.1 / 0.09)  # alpha1 out of range
    with pytest.raises(ConfigError):
        PTConfig(0.95, 0.1, "sometimes")


def test_p_one_matches_vcp(cp37):
    pt = PTPredictor(cp37, PTConfig(1.0, 0.1))
    rng = RngStream(3)
    for x in np.linspace(-2, 2, 7):
        assert pt_predict(pt, np.array([x]), rng) == vcp_predict(cp37, np.array([x]), 0.1)
    b = pt_predict_batch(pt, np.zeros((5, 1)), RngStream(4))
    v = vcp_predict_batch(cp37, np.zeros((5, 1)), 0.1)
    assert np.array_equal(b.lo, v.lo) and b.kept.all()


def test_null_fraction(cp37):
    pt = PTPredictor(cp37, PTConfig(0.95, 0.1))
    sets = pt_predict_batch(pt, np.zeros((10**5, 1)), RngStream(5))
    null = sets.measure() == 0
    assert abs(null.mean() - 0.05) < 0.004
    assert np.array_equal(null, ~sets.kept)


def test_scalar_null_is_singleton_at_prediction(cp37):
    pt = PTPredictor(cp37, PTConfig(0.5, 0.6))
    seen = {pt_predict(pt, np.zeros(1), RngStream(s)) for s in range(40)}
    assert Interval(0.0, 0.0) in seen


def test_kept_branch_uses_adjusted_quantile(cp37):
    a_prime = adjusted_alpha(0.1, 0.95)
    k = math.ceil(38 * (1 - (1 - a_prime) * (1 + 1 / 37)))
    oracle = sorted(cp37.calib_scores, reverse=True)[k - 1] if k >= 1 else math.inf
    pt = PTPredictor(cp37, PTConfig(0.95, 0.1))
    sets = pt_predict_batch(pt, np.zeros((50, 1)), RngStream(6))
    assert np.all(sets.hi[sets.kept] == oracle)
    assert vcp_threshold(cp37, a_prime) == oracle


def test_classification_null_is_empty():
    m = Logistic(np.zeros((1, 3)), np.zeros(3))
    cp = CalibratedPredictor(m, SOFTMAX, np.linspace(0.5, 0.7, 30))
    pt = PTPredictor(cp, PTConfig(0.92, 0.1))
    assert pt.classification
    out = pt_predict_batch(pt, np.zeros((2000, 1)), RngStream(7))
    assert np.all(out.measure()[~out.kept] == 0)
    assert LabelSet(frozenset()) in {pt_predict(pt, np.zeros(1), RngStream(s)) for s in range(60)}


def test_branch_disagreement_rate(cp37):
    pt = PTPredictor(cp37, PTConfig(0.9, 0.15))
    X = np.zeros((20_000, 1))
    a = pt_predict_batch(pt, X, RngStream(8)).kept
    b = pt_predict_batch(pt, X, RngStream(9)).kept
    assert abs((a != b).mean() - 2 * 0.9 * 0.1) < 0.01


def _mixture_cp(seed, n=3000):
    d = generate(SynthSpec("gaussian", n=n, seed=seed))
    train, calib, test = split_dataset(d, (1 / 3, 1 / 3, 1 / 3), RngStream(seed))
    return calibrate(fit_linear_mean(train), ABS_RESIDUAL, calib), test


def test_pt_marginal_coverage():
    covs = []
    for t in range(200):
        cp, test = _mixture_cp(t, 600)
        covs.append(PTMethod(cp, 0.95).predict(test.X, 0.1, RngStream(t)).contains(test.y).mean())
    covs = np.array(covs)
    se = covs.std(ddof=1) / np.sqrt(len(covs))
    assert 0.9 - 3 * se <= covs.mean() <= 0.92


def test_localized_zero_scale_collapses(cp37):
    x = np.zeros(1)
    seen = []
    loc = localize(cp37, 0.95, RngStream(10))
    for s in range(200):
        ls, ps = localized_pt_equivalence(cp37, 0.95, x, RngStream(s), localized=loc)
        if ps.measure == 0:
            assert ls == ps == Interval(0.0, 0.0)
            seen.append(s)
    assert seen


def test_localized_infinite_calibration_scores(cp37):
    loc = localize(cp37, 0.8, RngStream(11))
    s = loc.cp.calib_scores
    assert np.isinf(s).any() and np.all(np.isin(s[np.isfinite(s)], cp37.calib_scores))


def test_localized_matches_pt_in_mean_measure():
    cp, _ = _mixture_cp(12, 30_000)
    X = np.zeros((10_000, 2))
    loc, pt = localized_pt_pairs(cp, 0.95, X, RngStream(13), alpha=0.1)
    assert np.array_equal(loc.measure() == 0, ~pt.kept)
    a, b = loc.measure().mean(), pt.measure().mean()
    assert abs(a - b) / b < 0.03


def test_pt_method_handle(cp37):
    m = PTMethod(cp37, 0.95, name="pt")
    assert m.randomized and m.predictor(0.1).config.alpha_prime == adjusted_alpha(0.1, 0.95)
    assert m.center(np.zeros((2, 1))).tolist() == [0.0, 0.0]
