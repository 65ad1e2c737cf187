import numpy as np
import pytest
from scipy import stats

from icejam.firth import (
    CollinearityError,
    DesignMatrix,
    aicc,
    aicc_value,
    fit_firth,
    logistic,
    logit,
    p_values,
    predict_prob,
)

from oracles import grid_search_firth, penalized_loglik_batch


def random_dataset(rng, n, k_cov):
    x = rng.normal(size=(n, k_cov))
    beta = rng.normal(0, 1.2, k_cov + 1)
    y = (rng.random(n) < logistic(beta[0] + x @ beta[1:])).astype(float)
    y[0], y[1] = 0.0, 1.0
    return DesignMatrix.from_columns(y, {f"x{j}": x[:, j] for j in range(k_cov)})


def test_logistic_examples():
    assert logistic(0.0) == 0.5
    assert logistic(logit(0.135)) == pytest.approx(0.135, abs=1e-15)
    assert logistic(-4.84) == pytest.approx(1.0 / (1.0 + np.exp(4.84)), rel=1e-14)
    assert round(logistic(-4.84), 5) == 0.00785


def test_logistic_extremes_stay_inside_unit_interval():
    p = logistic(np.array([-1e4, -800.0, 0.0, 40.0, 800.0, 1e4]))
    assert np.all((p > 0) & (p < 1))
    assert np.all(np.diff(p) >= 0)


def test_intercept_only_closed_form():
    y = np.r_[np.ones(7), np.zeros(48)]
    m = fit_firth(DesignMatrix.from_columns(y))
    assert m.beta[0] == pytest.approx(np.log(7.5 / 48.5), abs=1e-8)
    assert m.converged
    assert m.score_max < 1e-8


@pytest.mark.parametrize("s,n", [(1, 10), (3, 30), (0, 12), (12, 12)])
def test_intercept_only_closed_form_extremes(s, n):
    # with no events (or only events) the unpenalized MLE diverges; Firth does not
    y = np.r_[np.ones(s), np.zeros(n - s)]
    m = fit_firth(DesignMatrix.from_columns(y))
    assert m.beta[0] == pytest.approx(logit((s + 0.5) / (n + 1)), abs=1e-8)


def test_separated_toy_matches_grid_search():
    d = DesignMatrix.from_columns([0, 0, 1, 1], {"x": [-2, -1, 1, 2]})
    m = fit_firth(d)
    assert m.converged and np.all(np.isfinite(m.beta))
    ref = grid_search_firth(d.X, d.y)
    assert np.max(np.abs(m.beta - ref)) < 1e-3


def test_random_datasets_match_grid_search():
    rng = np.random.default_rng(2024)
    for _ in range(5):
        d = random_dataset(rng, int(rng.integers(15, 41)), 2)
        m = fit_firth(d, compute_p=False)
        ref = grid_search_firth(d.X, d.y)
        assert m.converged
        assert np.max(np.abs(m.beta - ref)) < 1e-3


def test_penalized_loglik_matches_independent_evaluation():
    rng = np.random.default_rng(3)
    d = random_dataset(rng, 30, 2)
    m = fit_firth(d, compute_p=False)
    ref = penalized_loglik_batch(m.beta[None, :], d.X, d.y)[0]
    assert m.penalized_loglik == pytest.approx(ref, abs=1e-10)


def test_cov_is_inverse_information_and_pd():
    rng = np.random.default_rng(8)
    d = random_dataset(rng, 40, 2)
    m = fit_firth(d, compute_p=False)
    p = logistic(d.X @ m.beta)
    info = d.X.T @ (d.X * (p * (1 - p))[:, None])
    assert np.allclose(m.cov, m.cov.T, atol=0)
    np.linalg.cholesky(m.cov)
    assert np.allclose(m.cov @ info, np.eye(3), atol=1e-9)


def test_collinear_columns_named():
    x = np.arange(10.0)
    d = DesignMatrix.from_columns([0, 1] * 5, {"a": x, "b": 2 * x + 1})
    with pytest.raises(CollinearityError) as exc:
        fit_firth(d)
    assert exc.value.columns == ["b"]


def test_nonconvergence_flagged():
    rng = np.random.default_rng(1)
    d = random_dataset(rng, 30, 2)
    m = fit_firth(d, max_iter=1, compute_p=False)
    assert not m.converged
    assert m.iterations == 1


def test_design_matrix_validation():
    with pytest.raises(ValueError):
        DesignMatrix.from_columns([0, 1, 2, 1], {"x": [1, 2, 3, 4]})
    with pytest.raises(ValueError):
        DesignMatrix.from_columns([0, 1], {"x": [1, 2]})
    with pytest.raises(ValueError):
        DesignMatrix(np.column_stack([np.full(4, 2.0), np.arange(4.0)]), np.array([0, 1, 0, 1.0]), ("c", "x"))


def test_aicc_formula():
    assert aicc_value(-20.0, 1, 55) == pytest.approx(42.0 + 4.0 / 53.0, abs=1e-12)
    with pytest.raises(ValueError):
        aicc_value(-1.0, 3, 4)


def test_aicc_switch_uses_requested_loglik():
    y = np.r_[np.ones(7), np.zeros(48)]
    m = fit_firth(DesignMatrix.from_columns(y))
    assert aicc(m) == pytest.approx(aicc_value(m.penalized_loglik, 1, 55))
    assert aicc(m, penalized=False) == pytest.approx(aicc_value(m.loglik, 1, 55))
    assert m.aicc == aicc(m)


def test_predict_prob_examples():
    beta = np.array([-4.84, 2.37, -1.68])
    assert predict_prob(beta, [0.0, 0.0]) == pytest.approx(logistic(-4.84))
    assert predict_prob(beta, [1.0, -1.0]) == pytest.approx(logistic(-0.79), abs=1e-15)
    assert round(predict_prob(beta, [1.0, -1.0]), 3) == 0.312
    assert predict_prob(beta, [1.5, 0.0]) > predict_prob(beta, [1.0, 0.0])
    with pytest.raises(ValueError):
        predict_prob(beta, [1.0])


def test_shift_and_scale_invariance():
    rng = np.random.default_rng(77)
    x1, x2 = rng.normal(size=(2, 40))
    y = (rng.random(40) < logistic(-1 + x1 - 0.5 * x2)).astype(float)
    base = fit_firth(DesignMatrix.from_columns(y, {"a": x1, "b": x2}), compute_p=False)
    c, s = 3.7, 2.5
    shifted = fit_firth(DesignMatrix.from_columns(y, {"a": x1 + c, "b": x2}), compute_p=False)
    scaled = fit_firth(DesignMatrix.from_columns(y, {"a": x1, "b": x2 * s}), compute_p=False)
    assert shifted.beta[0] == pytest.approx(base.beta[0] - c * base.beta[1], abs=1e-6)
    assert np.allclose(shifted.beta[1:], base.beta[1:], atol=1e-6)
    assert scaled.beta[2] == pytest.approx(base.beta[2] / s, abs=1e-6)
    p0 = predict_prob(base, np.column_stack([x1, x2]))
    assert np.allclose(predict_prob(shifted, np.column_stack([x1 + c, x2])), p0, atol=1e-10)
    assert np.allclose(predict_prob(scaled, np.column_stack([x1, x2 * s])), p0, atol=1e-10)


def test_p_values_in_unit_interval_and_lr_matches_restricted_fit():
    rng = np.random.default_rng(12)
    d = random_dataset(rng, 60, 2)
    m = fit_firth(d)
    assert np.all((m.p_values >= 0) & (m.p_values <= 1))
    assert np.all((m.wald_p_values >= 0) & (m.wald_p_values <= 1))
    # restricted maximum by derivative-free search over the free coordinates
    j = 2
    restricted = restricted_max(d, j)
    stat = 2 * (m.penalized_loglik - restricted)
    assert m.p_values[j] == pytest.approx(stats.chi2.sf(stat, 1), abs=1e-6)


def restricted_max(d, j):
    keep = [i for i in range(d.k) if i != j]
    from scipy.optimize import minimize

    def neg(b):
        full = np.zeros(d.k)
        full[keep] = b
        return -penalized_loglik_batch(full[None, :], d.X, d.y)[0]

    res = minimize(neg, np.zeros(len(keep)), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
    return -res.fun


def test_noise_covariate_p_values_are_uniform():
    rng = np.random.default_rng(31)
    ps = []
    for _ in range(300):
        x = rng.normal(size=200)
        noise = rng.normal(size=200)
        y = (rng.random(200) < logistic(-1.0 + x)).astype(float)
        m = fit_firth(DesignMatrix.from_columns(y, {"x": x, "noise": noise}))
        ps.append(m.p_values[2])
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_p_values_function_equals_fit_field():
    rng = np.random.default_rng(5)
    d = random_dataset(rng, 35, 2)
    m = fit_firth(d)
    assert np.array_equal(p_values(m, d), m.p_values)
