import numpy as np
import pytest
from scipy import stats

from icejam.bootstrap import (
    BootstrapEnsemble,
    ensemble_from_frame,
    ensemble_to_frame,
    parametric_bootstrap,
    percentile_ci,
    sample_models,
)
from icejam.firth import DesignMatrix, fit_firth, logistic


@pytest.fixture(scope="module")
def small_fit():
    rng = np.random.default_rng(3)
    x1, x2 = rng.normal(size=(2, 55))
    y = (rng.random(55) < logistic(-2 + 1.5 * x1 - 1.2 * x2)).astype(float)
    d = DesignMatrix.from_columns(y, {"precip": x1, "ddf": x2})
    return fit_firth(d), d


def test_single_replicate_interval_collapses(small_fit):
    m, d = small_fit
    e = parametric_bootstrap(m, d, B=1, seed=99)
    assert e.B == 1
    if e.converged_mask[0]:
        ci = percentile_ci(BootstrapEnsemble(np.vstack([e.betas, e.betas]), np.array([True, True]),
                                             e.seed, e.names))
        assert np.array_equal(ci["lower"], e.betas[0])
        assert np.array_equal(ci["upper"], e.betas[0])
    with pytest.raises(ValueError):
        percentile_ci(e)


def test_reproducible_and_worker_independent(small_fit):
    m, d = small_fit
    a = parametric_bootstrap(m, d, B=40, seed=7)
    b = parametric_bootstrap(m, d, B=40, seed=7)
    c = parametric_bootstrap(m, d, B=40, seed=7, workers=2)
    assert np.array_equal(a.betas, b.betas, equal_nan=True)
    assert np.array_equal(a.betas, c.betas, equal_nan=True)
    assert np.array_equal(a.converged_mask, c.converged_mask)
    other = parametric_bootstrap(m, d, B=40, seed=8)
    assert not np.array_equal(a.betas, other.betas, equal_nan=True)


def test_prefix_stability(small_fit):
    # replicate b depends only on (seed, b)
    m, d = small_fit
    a = parametric_bootstrap(m, d, B=10, seed=5)
    b = parametric_bootstrap(m, d, B=25, seed=5)
    assert np.array_equal(a.betas, b.betas[:10], equal_nan=True)


def test_degenerate_replicates_flagged():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    y = np.zeros(30)
    y[0] = 1
    m = fit_firth(DesignMatrix.from_columns(y, {"x": x}))
    e = parametric_bootstrap(m, DesignMatrix.from_columns(y, {"x": x}), B=50, seed=1)
    assert e.n_failed > 0
    assert np.all(np.isnan(e.betas[~e.converged_mask]))
    assert "excluded" in e.diagnostics()


def test_large_sample_recovers_truth():
    rng = np.random.default_rng(21)
    n = 500
    x = rng.normal(size=n)
    y = (rng.random(n) < logistic(-1 + x)).astype(float)
    d = DesignMatrix.from_columns(y, {"x": x})
    m = fit_firth(d, compute_p=False)
    e = parametric_bootstrap(m, d, B=1000, seed=2021)
    good = e.converged
    mean = good.mean(axis=0)
    sd = good.std(axis=0, ddof=1)
    assert np.all(np.abs(mean - np.array([-1.0, 1.0])) < 3 * sd)
    assert e.n_failed == 0


def test_percentile_rule_on_integers():
    betas = np.arange(1, 1001, dtype=float)[:, None]
    e = BootstrapEnsemble(betas, np.ones(1000, bool), 0, ("b",))
    ci = percentile_ci(e, 0.95)
    # position q (n - 1): 0.025 * 999 = 24.975 -> 25 + 0.975; 0.975 * 999 = 974.025 -> 975.025
    assert ci["lower"][0] == pytest.approx(25.975, abs=1e-12)
    assert ci["upper"][0] == pytest.approx(975.025, abs=1e-12)


def test_interval_nesting():
    rng = np.random.default_rng(1)
    e = BootstrapEnsemble(rng.normal(size=(300, 3)), np.ones(300, bool), 0, ("a", "b", "c"))
    wide, narrow = percentile_ci(e, 0.95), percentile_ci(e, 0.50)
    assert np.all(wide["lower"] <= narrow["lower"]) and np.all(wide["upper"] >= narrow["upper"])


def test_sample_models_identity_and_determinism():
    rng = np.random.default_rng(2)
    e = BootstrapEnsemble(rng.normal(size=(50, 3)), np.ones(50, bool), 0, ("a", "b", "c"))
    assert np.array_equal(sample_models(e, 50, seed=1, replace=False), e.betas)
    assert np.array_equal(sample_models(e, 200, seed=4), sample_models(e, 200, seed=4))
    assert not np.array_equal(sample_models(e, 200, seed=4), sample_models(e, 200, seed=5))


def test_sample_models_skips_failed_rows():
    betas = np.array([[1.0], [np.nan], [3.0]])
    e = BootstrapEnsemble(betas, np.array([True, False, True]), 0, ("a",))
    draws = sample_models(e, 1000, seed=3)
    assert set(np.unique(draws)) == {1.0, 3.0}


def test_sample_models_uniform():
    B = 100
    e = BootstrapEnsemble(np.arange(B, dtype=float)[:, None], np.ones(B, bool), 0, ("a",))
    draws = sample_models(e, 10**6, seed=11)[:, 0].astype(int)
    counts = np.bincount(draws, minlength=B)
    expected = 10**6 / B
    sigma = np.sqrt(10**6 * (1 / B) * (1 - 1 / B))
    assert np.all(np.abs(counts - expected) < 4 * sigma)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_frame_round_trip(small_fit):
    m, d = small_fit
    e = parametric_bootstrap(m, d, B=12, seed=3)
    back = ensemble_from_frame(ensemble_to_frame(e), names=e.names, seed=e.seed)
    assert np.array_equal(back.betas, e.betas, equal_nan=True)
    assert np.array_equal(back.converged_mask, e.converged_mask)
