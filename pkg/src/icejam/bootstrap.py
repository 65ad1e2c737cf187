"""Parametric bootstrap of a fitted Firth logistic model."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from . import rng
from .firth import CollinearityError, DesignMatrix, FittedModel, fit_firth, predict_prob

__all__ = [
    "BootstrapEnsemble",
    "parametric_bootstrap",
    "percentile_ci",
    "sample_models",
    "ensemble_to_frame",
    "ensemble_from_frame",
]


@dataclass(frozen=True, eq=False)
class BootstrapEnsemble:
    """Refitted coefficient vectors, one row per replicate.

    Rows whose ``converged_mask`` is False (non-convergence, or a simulated
    history with no events or only events) are kept for the record but
    excluded from every summary.
    """

    betas: np.ndarray
    converged_mask: np.ndarray
    seed: int
    names: tuple[str, ...]
    source_model: Optional[FittedModel] = None
    scaling: Optional[str] = None

    @property
    def B(self) -> int:
        return self.betas.shape[0]

    @property
    def converged(self) -> np.ndarray:
        return self.betas[self.converged_mask]

    @property
    def n_failed(self) -> int:
        return int((~self.converged_mask).sum())

    def diagnostics(self) -> str:
        return (f"bootstrap: {self.B} replicates, {self.n_failed} excluded "
                f"({100.0 * self.n_failed / self.B:.2f}%) as degenerate or non-converged")


def _replicate(args):
    X, names, p, seed, b = args
    y = (rng.substream(seed, rng.BOOTSTRAP, b).random(p.size) < p).astype(float)
    k = X.shape[1]
    if y.min() == y.max():
        return b, np.full(k, np.nan), False
    try:
        m = fit_firth(DesignMatrix(X, y, names), compute_p=False)
    except CollinearityError:
        return b, np.full(k, np.nan), False
    return b, m.beta, bool(m.converged)


def parametric_bootstrap(m: FittedModel, d: DesignMatrix, B: int = 1000, seed: int = 0,
                         *, workers: int = 1, scaling: Optional[str] = None) -> BootstrapEnsemble:
    """Simulate B flood histories from ``m`` on the fixed design and refit each.

    Replicate ``b`` draws its responses from the substream keyed by
    ``(seed, b)``, so the ensemble is identical for any ``workers`` count.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if not m.converged:
        raise ValueError("source model did not converge")
    seed = rng.check_seed(seed)
    p = np.asarray(predict_prob(m, d.X[:, 1:]), dtype=float).reshape(-1)
    jobs = [(d.X, d.names, p, seed, b) for b in range(B)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate, jobs, chunksize=max(1, B // (4 * workers))))
    else:
        results = [_replicate(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    betas = np.vstack([r[1] for r in results])
    mask = np.array([r[2] for r in results], dtype=bool)
    return BootstrapEnsemble(betas, mask, seed, d.names, m, scaling)


def percentile_ci(e: BootstrapEnsemble, level: float = 0.95) -> pd.DataFrame:
    """Equal-tailed percentile intervals from the converged replicates.

    Quantiles interpolate linearly between order statistics: for sorted
    values ``x_(0..n-1)`` the q-quantile sits at position ``q (n - 1)``.
    """
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    good = e.converged
    if good.shape[0] < 2:
        raise ValueError(f"need at least 2 converged replicates, have {good.shape[0]}")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(good, [alpha, 1.0 - alpha], axis=0, method="linear")
    return pd.DataFrame({"parameter": list(e.names), "lower": lo, "upper": hi})


def sample_models(e: BootstrapEnsemble, count: int, seed: int, *,
                  replace: bool = True) -> np.ndarray:
    """Draw ``count`` coefficient vectors uniformly from the converged replicates.

    With ``replace=False`` and ``count`` equal to the number of converged
    rows the ensemble is returned unchanged, in order.
    """
    good = e.converged
    if good.shape[0] == 0:
        raise ValueError("ensemble has no converged replicates")
    if not replace:
        if count > good.shape[0]:
            raise ValueError("count exceeds converged replicates")
        return good[:count].copy()
    idx = rng.substream(seed, rng.SAMPLE_MODELS).integers(0, good.shape[0], size=count)
    return good[idx]


def ensemble_to_frame(e: BootstrapEnsemble) -> pd.DataFrame:
    df = pd.DataFrame(e.betas, columns=[f"beta_{i}" for i in range(e.betas.shape[1])])
    df.insert(0, "replicate", np.arange(e.B))
    df["converged"] = e.converged_mask.astype(int)
    df.attrs["names"] = list(e.names)
    return df


def ensemble_from_frame(df: pd.DataFrame, names=None, seed: int = 0,
                        scaling: Optional[str] = None) -> BootstrapEnsemble:
    beta_cols = sorted((c for c in df.columns if c.startswith("beta_")),
                       key=lambda c: int(c.split("_")[1]))
    df = df.sort_values("replicate")
    betas = df[beta_cols].to_numpy(float)
    mask = df["converged"].to_numpy().astype(bool)
    names = tuple(names) if names is not None else tuple(df.attrs.get("names", beta_cols))
    return BootstrapEnsemble(betas, mask, seed, names, None, scaling)
