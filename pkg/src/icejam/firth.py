"""Firth bias-reduced logistic regression.

Maximizes the Jeffreys-penalized log-likelihood

    l*(beta) = l(beta) + 0.5 * log det(X' W X),   W = diag(p (1 - p))

by Newton iteration on the modified score

    U*_j = sum_i (y_i - p_i + h_i (0.5 - p_i)) x_ij

where h is the diagonal of the weighted hat matrix.  The estimates stay
finite under complete separation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotri
from scipy.special import chdtrc, expit, ndtr

__all__ = [
    "CollinearityError",
    "DesignMatrix",
    "FittedModel",
    "logistic",
    "logit",
    "fit_firth",
    "aicc",
    "aicc_value",
    "predict_prob",
    "p_values",
    "wald_p_values",
]

_P_LO = np.finfo(float).tiny
_P_HI = 1.0 - np.finfo(float).epsneg


class CollinearityError(ValueError):
    """The information matrix X' W X is singular."""

    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; collinear column(s): "
            + ", ".join(self.columns)
        )


def logistic(eta):
    """Logistic function, overflow-safe and kept strictly inside (0, 1)."""
    p = np.clip(expit(eta), _P_LO, _P_HI)
    return float(p) if np.ndim(p) == 0 else p


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Response vector and design with a leading intercept column.

    ``names`` labels every column of ``X``, the intercept first.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
            raise ValueError("X must be n x k and y length n")
        if len(self.names) != X.shape[1]:
            raise ValueError("one name per design column required")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("first column must be the intercept (all ones)")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix has non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("responses must be 0 or 1")
        if X.shape[0] <= X.shape[1]:
            raise ValueError(f"need n > k (n={X.shape[0]}, k={X.shape[1]})")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_columns(cls, y, columns: Mapping[str, Sequence[float]] | None = None,
                     intercept_name: str = "const") -> "DesignMatrix":
        columns = dict(columns or {})
        y = np.asarray(y, dtype=float)
        X = np.column_stack([np.ones(y.size)] + [np.asarray(v, float) for v in columns.values()])
        return cls(X, y, (intercept_name, *columns))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def with_response(self, y) -> "DesignMatrix":
        return DesignMatrix(self.X, y, self.names)


@dataclass(frozen=True, eq=False)
class FittedModel:
    names: tuple[str, ...]
    beta: np.ndarray
    cov: np.ndarray
    loglik: float
    penalized_loglik: float
    n: int
    converged: bool
    iterations: int
    score_max: float
    p_values: np.ndarray = field(default=None)
    wald_p_values: np.ndarray = field(default=None)

    @property
    def k(self) -> int:
        return self.beta.size

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def aicc(self) -> float:
        return aicc(self, self.n)

    def coef(self) -> dict[str, float]:
        return dict(zip(self.names, self.beta.tolist()))


def _rank_deficient_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    bad, keep = [], []
    for j in range(X.shape[1]):
        cols = keep + [j]
        if np.linalg.matrix_rank(X[:, cols]) < len(cols):
            bad.append(names[j])
        else:
            keep.append(j)
    return bad


class _State:
    """Quantities of the penalized likelihood at one coefficient vector."""

    __slots__ = ("beta", "p", "info", "info_inv", "loglik", "pen", "score")

    def __init__(self, X, y, beta, names):
        eta = X @ beta
        p = np.minimum(np.maximum(expit(eta), _P_LO), _P_HI)
        w = p * (1.0 - p)
        info = (X * w[:, None]).T @ X
        # LAPACK directly: for k <= 5 the np.linalg wrappers cost more than the work
        chol, bad = dpotrf(info, lower=1, clean=1)
        if bad:
            raise CollinearityError(_rank_deficient_columns(X, names) or list(names))
        inv, bad = dpotri(chol, lower=1)
        if bad:
            raise CollinearityError(_rank_deficient_columns(X, names) or list(names))
        # dpotri fills the lower triangle only; the factor was cleaned so the rest is zero
        inv = inv + inv.T
        inv.flat[::inv.shape[0] + 1] *= 0.5
        self.beta = beta
        self.p = p
        self.info = info
        self.info_inv = inv
        self.loglik = float(y @ eta - np.logaddexp(0.0, eta).sum())
        self.pen = self.loglik + sum(math.log(v) for v in chol.diagonal().tolist())
        # h_i = w_i x_i' (X'WX)^{-1} x_i
        h = w * np.einsum("ij,ij->i", X @ inv, X)
        self.score = X.T @ (y - p + h * (0.5 - p))


def fit_firth(d: DesignMatrix, *, tol: float = 1e-8, max_iter: int = 100,
              max_halvings: int = 20, fixed: Optional[Mapping[int, float]] = None,
              start: Optional[np.ndarray] = None, compute_p: bool = True) -> FittedModel:
    """Fit a Firth-penalized logistic regression.

    Parameters
    ----------
    d : DesignMatrix
    tol : float
        Convergence when the largest absolute modified score falls below this.
    max_iter, max_halvings : int
        Newton iteration cap and step-halving cap per iteration.
    fixed : mapping, optional
        Column index -> value for coefficients held fixed.  The penalty still
        uses the full information matrix, as the profile penalized likelihood
        requires.
    compute_p : bool
        Also compute penalized likelihood-ratio p-values (one constrained refit
        per coefficient).

    Returns
    -------
    FittedModel
        ``converged`` is False when the iteration cap was hit; the last
        iterate is still returned.

    Raises
    ------
    CollinearityError
        If X' W X is singular.
    """
    X, y = d.X, d.y
    k = d.k
    if not fixed and np.linalg.matrix_rank(X) < k:
        raise CollinearityError(_rank_deficient_columns(X, d.names))
    fixed = dict(fixed or {})
    free = np.array([j for j in range(k) if j not in fixed], dtype=int)
    beta = np.zeros(k) if start is None else np.array(start, dtype=float)
    for j, v in fixed.items():
        beta[j] = v

    def newton_step(state):
        score = state.score[free]
        if free.size == k:
            return state.info_inv @ score
        step = np.zeros(k)
        step[free] = np.linalg.solve(state.info[np.ix_(free, free)], score)
        return step

    state = _State(X, y, beta, d.names)
    converged = False
    it = 0
    while True:
        if free.size == 0 or np.max(np.abs(state.score[free])) < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        step = newton_step(state)
        for _ in range(max_halvings + 1):
            trial = _State(X, y, state.beta + step, d.names)
            if trial.pen >= state.pen:
                break
            step = step / 2.0
        state = trial
    if converged and free.size:
        # Fisher scoring converges linearly, so the estimate at the stopping
        # rule still carries ~tol-sized error.  Keep stepping (not counted as
        # iterations) while the score at least halves.
        current = np.max(np.abs(state.score[free]))
        for _ in range(25):
            polished = _State(X, y, state.beta + newton_step(state), d.names)
            new = np.max(np.abs(polished.score[free]))
            if not new < 0.5 * current:
                break
            state, current = polished, new

    cov = state.info_inv
    score_max = float(np.max(np.abs(state.score[free]))) if free.size else 0.0
    model = FittedModel(
        names=d.names,
        beta=state.beta.copy(),
        cov=cov,
        loglik=state.loglik,
        penalized_loglik=state.pen,
        n=d.n,
        converged=converged,
        iterations=it,
        score_max=score_max,
    )
    wald = wald_p_values(model)
    lr = p_values(model, d, tol=tol, max_iter=max_iter) if (compute_p and not fixed) else np.full(k, np.nan)
    object.__setattr__(model, "wald_p_values", wald)
    object.__setattr__(model, "p_values", lr)
    return model


def aicc_value(loglik: float, k: int, n: int) -> float:
    """Small-sample corrected AIC: ``-2 l + 2k + 2k(k+1)/(n-k-1)``."""
    if n <= k + 1:
        raise ValueError(f"AICc undefined for n={n}, k={k} (need n > k + 1)")
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)


def aicc(m: FittedModel, n: Optional[int] = None, *, penalized: bool = True) -> float:
    """AICc of a fitted model, ``k`` counting the intercept.

    By default the penalized log-likelihood is used; with it the
    intercept-only fit to 7 events in 55 years gives AICc 42.17, whereas the
    plain log-likelihood gives 44.03.  Pass ``penalized=False`` for the
    conventional variant.
    """
    n = m.n if n is None else n
    ll = m.penalized_loglik if penalized else m.loglik
    return aicc_value(ll, m.k, n)


def predict_prob(m, x) -> float | np.ndarray:
    """Event probability for covariates ``x`` (intercept implicit).

    ``m`` is a FittedModel or a bare coefficient vector.  ``x`` may be a
    single covariate vector or a 2-D array with one row per case.
    """
    beta = np.asarray(m.beta if isinstance(m, FittedModel) else m, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != beta.size - 1:
        raise ValueError(f"expected {beta.size - 1} covariates, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    return logistic(beta[0] + x @ beta[1:])


def wald_p_values(m: FittedModel) -> np.ndarray:
    z = m.beta / m.se
    return 2.0 * ndtr(-np.abs(z))


def p_values(m: FittedModel, d: DesignMatrix, *, tol: float = 1e-8,
             max_iter: int = 100) -> np.ndarray:
    """Penalized likelihood-ratio p-values, one per coefficient.

    Each coefficient is fixed at zero, the remaining ones are refitted, and
    ``2 (l*_full - l*_restricted)`` is referred to chi-square(1).  Entries
    whose restricted fit fails to converge are NaN.
    """
    out = np.full(m.k, np.nan)
    for j in range(m.k):
        start = m.beta.copy()
        start[j] = 0.0
        try:
            r = fit_firth(d, tol=tol, max_iter=max_iter, fixed={j: 0.0},
                          start=start, compute_p=False)
        except CollinearityError:
            continue
        if not r.converged:
            continue
        stat = max(2.0 * (m.penalized_loglik - r.penalized_loglik), 0.0)
        out[j] = chdtrc(1, stat)
    return out
