"""Scenario projection: probability fans, corridors, simulated flood
sequences, wait times and Kaplan-Meier medians."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from . import rng
from .firth import logistic

__all__ = [
    "ScenarioForcing",
    "ProbabilityFan",
    "Corridor",
    "FloodSequenceEnsemble",
    "WaitTimeSummary",
    "WaitMedian",
    "SimulationSummary",
    "project_probabilities",
    "moving_average_corridor",
    "instantaneous_return_period",
    "simulate_sequences",
    "simulate_summary",
    "wait_times",
    "kaplan_meier",
    "km_median",
]


@dataclass(frozen=True, eq=False)
class ScenarioForcing:
    """Annual covariates for one GCM x RCP run, in the fitted model's scaling."""

    gcm: str
    rcp: str
    years: np.ndarray
    covariates: pd.DataFrame
    scaling: Optional[str] = None

    def __post_init__(self):
        years = np.asarray(self.years, dtype=int)
        if years.size == 0 or np.any(np.diff(years) != 1):
            raise ValueError(f"{self.gcm}/{self.rcp}: years must be contiguous and ascending")
        if len(self.covariates) != years.size:
            raise ValueError("one covariate row per year required")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "covariates", self.covariates.reset_index(drop=True))

    @property
    def label(self) -> str:
        return f"{self.gcm}_{self.rcp}"

    def prepend(self, years, covariates: pd.DataFrame) -> "ScenarioForcing":
        """Forcing with earlier (e.g. observed) years placed in front."""
        cov = pd.concat([covariates[list(self.covariates.columns)], self.covariates],
                        ignore_index=True)
        return ScenarioForcing(self.gcm, self.rcp, np.concatenate([years, self.years]),
                               cov, self.scaling)


@dataclass(frozen=True, eq=False)
class ProbabilityFan:
    """Event probability per sampled model (rows) and year (columns)."""

    years: np.ndarray
    p: np.ndarray
    label: str = ""

    @property
    def n_models(self) -> int:
        return self.p.shape[0]

    def quantiles(self, levels: Sequence[float]) -> np.ndarray:
        return np.quantile(self.p, levels, axis=0, method="linear")


def project_probabilities(models, forcing: ScenarioForcing, *,
                          covariates: Optional[Sequence[str]] = None,
                          scaling: Optional[str] = None) -> ProbabilityFan:
    """Annual event probability for every sampled coefficient vector.

    ``covariates`` names the model's covariate order (intercept excluded);
    by default the forcing's column order is used.  When both ``scaling``
    and ``forcing.scaling`` are given they must agree.
    """
    betas = np.atleast_2d(np.asarray(models, dtype=float))
    if scaling is not None and forcing.scaling is not None and scaling != forcing.scaling:
        raise ValueError(
            f"scaling mismatch: model uses {scaling!r}, forcing {forcing.label} is {forcing.scaling!r}"
        )
    cols = list(forcing.covariates.columns) if covariates is None else list(covariates)
    missing = [c for c in cols if c not in forcing.covariates.columns]
    if missing:
        raise KeyError(f"forcing {forcing.label} lacks covariate(s): {', '.join(missing)}")
    x = forcing.covariates[cols].to_numpy(float)
    if betas.shape[1] != x.shape[1] + 1:
        raise ValueError(
            f"model has {betas.shape[1]} coefficients, forcing supplies {x.shape[1]} covariates"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError(f"forcing {forcing.label} has non-finite covariates")
    eta = betas[:, :1] + betas[:, 1:] @ x.T
    return ProbabilityFan(forcing.years.copy(), logistic(eta), forcing.label)


def instantaneous_return_period(p):
    """Return period ``1/p`` (years) for an annual probability in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValueError("probabilities must lie strictly between 0 and 1")
    out = 1.0 / arr
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Corridor:
    """Cross-model quantiles of a (smoothed) probability fan.

    ``values[i, t]`` is the ``levels[i]`` quantile in year ``years[t]``.
    Return-period quantiles reflect the level: the q-quantile of ``1/p`` is
    ``1 / (1 - q quantile of p)``.
    """

    years: np.ndarray
    levels: np.ndarray
    values: np.ndarray
    smoothed: np.ndarray
    label: str = ""

    def quantile(self, q) -> np.ndarray:
        return np.quantile(self.smoothed, q, axis=0, method="linear")

    def return_periods(self) -> np.ndarray:
        return instantaneous_return_period(self.quantile(1.0 - self.levels))

    def to_frame(self) -> pd.DataFrame:
        rp = self.return_periods()
        nl, nt = self.values.shape
        return pd.DataFrame({
            "year": np.tile(self.years, nl),
            "level": np.repeat(self.levels, nt),
            "p": self.values.reshape(-1),
            "return_period": rp.reshape(-1),
        })


def moving_average_corridor(fan: ProbabilityFan, window: int = 20,
                            levels: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975)) -> Corridor:
    """Trailing moving average per model, then per-year quantiles across models.

    The average is taken in probability space; the first output year is the
    first input year plus ``window - 1``.
    """
    if window < 1:
        raise ValueError("window must be positive")
    T = fan.years.size
    if T < window:
        raise ValueError(f"series of {T} years is shorter than the {window}-year window")
    c = np.cumsum(np.pad(fan.p, ((0, 0), (1, 0))), axis=1)
    smoothed = (c[:, window:] - c[:, :-window]) / window
    levels = np.asarray(levels, dtype=float)
    values = np.quantile(smoothed, levels, axis=0, method="linear")
    return Corridor(fan.years[window - 1:].copy(), levels, values, smoothed, fan.label)


# ---------------------------------------------------------------------------
# Monte Carlo


def _model_block(p_row: np.ndarray, R: int, seed: int, m: int) -> np.ndarray:
    """R simulated flood sequences for model ``m``.

    Replicate r of model m uses row r of the uniform block drawn from the
    substream keyed by (seed, m).
    """
    u = rng.substream(seed, rng.SIMULATE, m).random((R, p_row.size))
    return u < p_row


@dataclass(frozen=True, eq=False)
class FloodSequenceEnsemble:
    """Simulated annual flood indicators, model-major row order."""

    years: np.ndarray
    sequences: np.ndarray
    replicates_per_model: int
    seed: int
    label: str = ""

    @property
    def R(self) -> int:
        return self.sequences.shape[0]


def simulate_sequences(fan: ProbabilityFan, replicates_per_model: int, seed: int) -> FloodSequenceEnsemble:
    """Materialize every simulated sequence (models x replicates rows).

    For large runs use :func:`simulate_summary`, which draws the same
    sequences without holding them all in memory.
    """
    if replicates_per_model < 1:
        raise ValueError("replicates_per_model must be at least 1")
    seed = rng.check_seed(seed)
    blocks = [_model_block(fan.p[m], replicates_per_model, seed, m) for m in range(fan.n_models)]
    seqs = np.vstack(blocks).astype(np.uint8)
    return FloodSequenceEnsemble(fan.years.copy(), seqs, replicates_per_model, seed, fan.label)


@dataclass(frozen=True, eq=False)
class WaitTimeSummary:
    reference_year: int
    horizon: int
    waits: np.ndarray
    censored: np.ndarray

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())


def _waits(seqs: np.ndarray, years: np.ndarray, reference_year: int):
    idx = int(np.searchsorted(years, reference_year))
    if idx >= years.size or years[idx] != reference_year:
        raise ValueError(f"reference year {reference_year} outside {years[0]}-{years[-1]}")
    after = seqs[:, idx + 1:].astype(bool)
    any_flood = after.any(axis=1)
    first = np.argmax(after, axis=1) + 1
    limit = int(years[-1] - reference_year)
    waits = np.where(any_flood, first, limit).astype(np.int32)
    return waits, ~any_flood


def wait_times(e: FloodSequenceEnsemble, reference_year: int) -> WaitTimeSummary:
    """Years from ``reference_year`` to the next flood strictly after it.

    Sequences with no later flood are right-censored at the horizon.
    """
    waits, censored = _waits(e.sequences, e.years, reference_year)
    return WaitTimeSummary(int(reference_year), int(e.years[-1]), waits, censored)


def kaplan_meier(waits, censored) -> tuple[np.ndarray, np.ndarray]:
    """Product-limit survival curve at each distinct event time."""
    t = np.asarray(waits, dtype=float)
    event = ~np.asarray(censored, dtype=bool)
    times, inv = np.unique(t, return_inverse=True)
    deaths = np.bincount(inv, weights=event, minlength=times.size)
    leaving = np.bincount(inv, minlength=times.size)
    at_risk = t.size - np.concatenate(([0], np.cumsum(leaving)[:-1]))
    keep = deaths > 0
    surv = np.cumprod(1.0 - deaths[keep] / at_risk[keep])
    return times[keep], surv


@dataclass(frozen=True)
class WaitMedian:
    """Median wait; when ``beyond_horizon`` is set, ``years`` is the horizon
    and the true median is larger."""

    years: float
    beyond_horizon: bool = False

    def __str__(self):
        return f">{self.years:g}" if self.beyond_horizon else f"{self.years:g}"


def km_median(w: WaitTimeSummary, *, atol: float = 1e-12) -> WaitMedian:
    """Smallest wait with Kaplan-Meier survival at or below one half.

    Without censoring this is the lower sample median.  ``atol`` absorbs
    rounding in the running product.
    """
    if w.waits.size == 0:
        raise ValueError("no replicates")
    times, surv = kaplan_meier(w.waits, w.censored)
    hit = np.flatnonzero(surv <= 0.5 + atol)
    if hit.size == 0:
        return WaitMedian(float(w.horizon - w.reference_year), True)
    return WaitMedian(float(times[hit[0]]))


def _wait_quantiles(w: WaitTimeSummary, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict:
    times, surv = kaplan_meier(w.waits, w.censored)
    out = {}
    for q in qs:
        hit = np.flatnonzero(surv <= 1.0 - q + 1e-12)
        out[f"{q:g}"] = float(times[hit[0]]) if hit.size else None
    return out


@dataclass(frozen=True, eq=False)
class SimulationSummary:
    """Streamed reduction of a simulation run."""

    years: np.ndarray
    flood_counts: np.ndarray
    n_sequences: int
    waits: dict[int, WaitTimeSummary] = field(default_factory=dict)
    label: str = ""

    @property
    def frequency(self) -> np.ndarray:
        return self.flood_counts / self.n_sequences

    @property
    def pooled_frequency(self) -> float:
        return float(self.flood_counts.sum() / (self.n_sequences * self.years.size))

    def wait_report(self, reference_year: int, gcm: str = "", rcp: str = "") -> dict:
        w = self.waits[reference_year]
        med = km_median(w)
        return {
            "gcm": gcm,
            "rcp": rcp,
            "reference_year": int(reference_year),
            "median": med.years,
            "median_beyond_horizon": med.beyond_horizon,
            "censored_fraction": w.censored_fraction,
            "quantiles": _wait_quantiles(w),
        }


def _simulate_models(args):
    p, R, seed, models, years, refs = args
    counts = np.zeros(years.size, dtype=np.int64)
    waits = {r: [] for r in refs}
    cens = {r: [] for r in refs}
    for m in models:
        block = _model_block(p[m], R, seed, m)
        counts += block.sum(axis=0)
        for r in refs:
            w, c = _waits(block, years, r)
            waits[r].append(w)
            cens[r].append(c)
    return counts, waits, cens


def simulate_summary(fan: ProbabilityFan, replicates_per_model: int, seed: int,
                     reference_years: Iterable[int] = (), *, workers: int = 1) -> SimulationSummary:
    """Simulate like :func:`simulate_sequences` but keep only per-year flood
    counts and the wait times for ``reference_years``.

    Results do not depend on ``workers``: each model's block comes from its
    own keyed substream and blocks are reassembled in model order.
    """
    if replicates_per_model < 1:
        raise ValueError("replicates_per_model must be at least 1")
    seed = rng.check_seed(seed)
    refs = [int(r) for r in reference_years]
    M = fan.n_models
    n_chunks = max(1, workers) * 4 if workers > 1 else 1
    chunks = [c.tolist() for c in np.array_split(np.arange(M), n_chunks) if c.size]
    jobs = [(fan.p, replicates_per_model, seed, c, fan.years, refs) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_simulate_models, jobs))
    else:
        parts = [_simulate_models(j) for j in jobs]
    counts = sum(p[0] for p in parts)
    horizon = int(fan.years[-1])
    waits = {}
    for r in refs:
        w = np.concatenate([x for p in parts for x in p[1][r]])
        c = np.concatenate([x for p in parts for x in p[2][r]])
        waits[r] = WaitTimeSummary(r, horizon, w, c)
    return SimulationSummary(fan.years.copy(), counts, M * replicates_per_model, waits, fan.label)
