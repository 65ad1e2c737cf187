"""Covariate construction from daily station weather.

Station records are held as parallel numpy arrays (dates, mean temperature,
precipitation) with NaN marking a missing value.  Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "DailyRecord",
    "StationSeries",
    "SeasonWindow",
    "SeasonFeatures",
    "FEATURE_COLUMNS",
    "MissingDataError",
    "GapFillError",
    "fill_gaps_temperature",
    "fill_gaps_precip",
    "winter_precip",
    "degree_days_freezing",
    "melt_test",
    "standardize",
    "percent_of_average",
    "PrincipalComponent",
    "first_pc",
]

MELT_LOW = 40.0
MELT_HIGH = 150.0


class MissingDataError(ValueError):
    """Raised when a computation window contains missing daily values."""

    def __init__(self, message: str, dates: Sequence[dt.date]):
        self.dates = list(dates)
        shown = ", ".join(d.isoformat() for d in self.dates[:10])
        more = f" (+{len(self.dates) - 10} more)" if len(self.dates) > 10 else ""
        super().__init__(f"{message}: {shown}{more}")


class GapFillError(ValueError):
    """Raised when a donor station cannot supply a calendar-month offset."""

    def __init__(self, month: int, station_id: str):
        self.month = month
        super().__init__(
            f"no coincident target/donor days in calendar month {month} "
            f"for station {station_id!r}"
        )


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    tmean: Optional[float] = None
    precip: Optional[float] = None

    def __post_init__(self):
        if self.precip is not None and self.precip < 0:
            raise ValueError(f"negative precipitation on {self.date}")


@dataclass(frozen=True, eq=False)
class StationSeries:
    """Daily observations for one station.

    ``dates`` is a ``datetime64[D]`` array, strictly increasing.  ``tmean``
    (deg C) and ``precip`` (mm) are float arrays with NaN for missing.
    """

    station_id: str
    dates: np.ndarray
    tmean: np.ndarray
    precip: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        tmean = np.asarray(self.tmean, dtype=float)
        precip = np.asarray(self.precip, dtype=float)
        if not (dates.shape == tmean.shape == precip.shape) or dates.ndim != 1:
            raise ValueError("dates, tmean and precip must be 1-D and equal length")
        if dates.size > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            diffs = np.diff(dates) <= np.timedelta64(0, "D")
            bad = dates[1:][diffs]
            raise ValueError(
                f"dates not strictly increasing for {self.station_id!r} at {bad[0]}"
            )
        if np.any(precip < 0):
            raise ValueError(f"negative precipitation in {self.station_id!r}")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tmean", tmean)
        object.__setattr__(self, "precip", precip)

    @classmethod
    def from_records(cls, station_id: str, records: Iterable[DailyRecord]) -> "StationSeries":
        records = list(records)
        dates = np.array([r.date for r in records], dtype="datetime64[D]")
        tmean = np.array([np.nan if r.tmean is None else r.tmean for r in records], float)
        precip = np.array([np.nan if r.precip is None else r.precip for r in records], float)
        return cls(station_id, dates, tmean, precip)

    @property
    def records(self) -> list[DailyRecord]:
        out = []
        for d, t, p in zip(self.dates.tolist(), self.tmean, self.precip):
            out.append(DailyRecord(d, None if np.isnan(t) else float(t),
                                   None if np.isnan(p) else float(p)))
        return out

    def __len__(self):
        return self.dates.size

    def __eq__(self, other):
        if not isinstance(other, StationSeries):
            return NotImplemented
        return (
            self.station_id == other.station_id
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.tmean, other.tmean, equal_nan=True)
            and np.array_equal(self.precip, other.precip, equal_nan=True)
        )

    def missing_dates(self, field_name: str = "tmean") -> list[dt.date]:
        values = getattr(self, field_name)
        return self.dates[np.isnan(values)].tolist()

    def window_values(self, field_name: str, start: dt.date, end: dt.date) -> np.ndarray:
        """Values of one field on every calendar day in ``[start, end]``.

        Dates absent from the series count as missing.
        """
        days = np.arange(np.datetime64(start, "D"), np.datetime64(end, "D") + 1)
        idx = np.searchsorted(self.dates, days)
        idx_c = np.minimum(idx, max(self.dates.size - 1, 0))
        present = (idx < self.dates.size) & (self.dates[idx_c] == days) if self.dates.size else np.zeros(days.size, bool)
        values = np.full(days.size, np.nan)
        values[present] = getattr(self, field_name)[idx_c[present]]
        missing = np.isnan(values)
        if missing.any():
            raise MissingDataError(
                f"missing {field_name} for station {self.station_id!r}",
                days[missing].tolist(),
            )
        return values


@dataclass(frozen=True)
class SeasonWindow:
    """Winter accumulation window for one breakup year (default Nov 1 - Apr 30)."""

    breakup_year: int
    start: dt.date = None
    end: dt.date = None

    def __post_init__(self):
        if self.start is None:
            object.__setattr__(self, "start", dt.date(self.breakup_year - 1, 11, 1))
        if self.end is None:
            object.__setattr__(self, "end", dt.date(self.breakup_year, 4, 30))
        if self.end < self.start:
            raise ValueError("window start must not follow its end")
        if (self.end - self.start).days > 366:
            raise ValueError("window must span a single winter")

    @classmethod
    def from_month_days(cls, breakup_year: int, start: tuple[int, int] = (11, 1),
                        end: tuple[int, int] = (4, 30)) -> "SeasonWindow":
        """Window from (month, day) pairs; a start month after the end month
        falls in the previous calendar year."""
        start_year = breakup_year - 1 if start > end else breakup_year
        return cls(breakup_year, dt.date(start_year, *start), dt.date(breakup_year, *end))

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1


FEATURE_COLUMNS = (
    "breakup_year",
    "gp_precip_pct",
    "fv_ddf",
    "fc_ddf",
    "melt_test",
    "freezeup_elev",
    "flood",
)


@dataclass
class SeasonFeatures:
    breakup_year: int
    gp_precip_pct: float
    fv_ddf: float
    fc_ddf: float
    melt_test: Optional[float]
    flood: int
    freezeup_elev: Optional[float] = None
    flows: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.flood not in (0, 1):
            raise ValueError(f"flood indicator must be 0 or 1, got {self.flood!r}")
        if self.melt_test is not None and self.melt_test < 0:
            raise ValueError("melt_test must be non-negative")

    def as_row(self) -> dict:
        row = {
            "breakup_year": self.breakup_year,
            "gp_precip_pct": self.gp_precip_pct,
            "fv_ddf": self.fv_ddf,
            "fc_ddf": self.fc_ddf,
            "melt_test": np.nan if self.melt_test is None else self.melt_test,
            "freezeup_elev": np.nan if self.freezeup_elev is None else self.freezeup_elev,
            "flood": self.flood,
        }
        row.update(self.flows)
        return row


# ---------------------------------------------------------------------------
# gap filling


def _aligned(target: StationSeries, donor: StationSeries, field_name: str):
    """Donor values at each target date (NaN where the donor has no record)."""
    idx = np.searchsorted(donor.dates, target.dates)
    idx_c = np.minimum(idx, max(donor.dates.size - 1, 0))
    out = np.full(target.dates.size, np.nan)
    if donor.dates.size:
        hit = (idx < donor.dates.size) & (donor.dates[idx_c] == target.dates)
        out[hit] = getattr(donor, field_name)[idx_c[hit]]
    return out


def _months(dates: np.ndarray) -> np.ndarray:
    return dates.astype("datetime64[M]").astype(int) % 12 + 1


def monthly_offsets(target: StationSeries, donor: StationSeries) -> dict[int, float]:
    """Mean (target - donor) temperature per calendar month over coincident days."""
    donor_t = _aligned(target, donor, "tmean")
    both = ~np.isnan(target.tmean) & ~np.isnan(donor_t)
    months = _months(target.dates)
    diff = target.tmean - donor_t
    return {
        int(m): float(diff[both & (months == m)].mean())
        for m in np.unique(months[both])
    }


def fill_gaps_temperature(target: StationSeries, donor: StationSeries) -> StationSeries:
    """Fill missing target temperatures from a donor plus a monthly offset.

    The offset for each calendar month is the mean target-minus-donor
    difference over all coincident days of that month in the full record.
    Dates where the donor is also missing stay missing.

    Raises
    ------
    GapFillError
        If a month needing a fill has no coincident days to form an offset.
    """
    offsets = monthly_offsets(target, donor)
    donor_t = _aligned(target, donor, "tmean")
    fillable = np.isnan(target.tmean) & ~np.isnan(donor_t)
    months = _months(target.dates)
    for m in np.unique(months[fillable]):
        if int(m) not in offsets:
            raise GapFillError(int(m), target.station_id)
    tmean = target.tmean.copy()
    if fillable.any():
        off = np.array([offsets[int(m)] for m in months[fillable]])
        tmean[fillable] = donor_t[fillable] + off
    return StationSeries(target.station_id, target.dates, tmean, target.precip)


def fill_gaps_precip(target: StationSeries, donor: StationSeries) -> StationSeries:
    """Substitute donor precipitation on dates where the target has none."""
    donor_p = _aligned(target, donor, "precip")
    precip = target.precip.copy()
    fillable = np.isnan(precip) & ~np.isnan(donor_p)
    precip[fillable] = donor_p[fillable]
    return StationSeries(target.station_id, target.dates, target.tmean, precip)


# ---------------------------------------------------------------------------
# seasonal statistics


def winter_precip(series: StationSeries, window: SeasonWindow,
                  tracker_start: Optional[dt.date] = None) -> float:
    """Winter precipitation (mm) with the freeze-reset rule.

    A signed running sum of freezing degree-days, ``S = sum(-tmean)``, is
    tracked from ``tracker_start`` (default: the window start).  Snow is
    counted from the last day on which ``S`` turns positive; anything that
    fell before ``S`` last dropped back to zero or below is treated as
    melted.  Warm spells that leave ``S`` positive do not reset.
    """
    start = window.start if tracker_start is None else tracker_start
    if start > window.start:
        raise ValueError("tracker_start must not be after the window start")
    tmean = series.window_values("tmean", start, window.end)
    precip = series.window_values("precip", window.start, window.end)
    s = np.cumsum(-tmean)
    prev = np.concatenate(([0.0], s[:-1]))
    onsets = np.flatnonzero((s > 0) & (prev <= 0))
    lead = (window.start - start).days
    if onsets.size == 0:
        return 0.0
    first = max(int(onsets[-1]) - lead, 0)
    return float(precip[first:].sum())


def degree_days_freezing(series: StationSeries, window: SeasonWindow) -> float:
    """Sum of daily freezing degree-days ``max(0, -tmean)`` over the window."""
    tmean = series.window_values("tmean", window.start, window.end)
    return float(np.maximum(0.0, -tmean).sum())


def melt_test(series: StationSeries, breakup_year: int, low: float = MELT_LOW,
              high: float = MELT_HIGH) -> Optional[float]:
    """Days for cumulative thaw degree-days to climb from ``low`` to ``high``.

    Thaw accumulates as ``max(0, tmean)`` from Jan 1 through Jun 30 of the
    breakup year; a threshold met exactly counts as crossed that day.
    Returns None when ``high`` is never reached.
    """
    tmean = series.window_values("tmean", dt.date(breakup_year, 1, 1),
                                 dt.date(breakup_year, 6, 30))
    cum = np.cumsum(np.maximum(0.0, tmean))
    if cum[-1] < high:
        return None
    i_low = int(np.argmax(cum >= low))
    i_high = int(np.argmax(cum >= high))
    return float(i_high - i_low)


def standardize(values, baseline) -> np.ndarray:
    """Z-score ``values`` against the mean and sample sd (ddof=1) of ``baseline``."""
    baseline = np.asarray(baseline, dtype=float)
    sd = baseline.std(ddof=1) if baseline.size >= 2 else 0.0
    if not sd > 0:
        raise ValueError("baseline has zero variance")
    return (np.asarray(values, dtype=float) - baseline.mean()) / sd


def percent_of_average(values, baseline) -> np.ndarray:
    """Ratio of ``values`` to the baseline mean (1.5 means 150 % of average)."""
    mean = np.asarray(baseline, dtype=float).mean()
    if mean == 0:
        raise ValueError("baseline mean is zero")
    return np.asarray(values, dtype=float) / mean


@dataclass(frozen=True)
class PrincipalComponent:
    scores: np.ndarray
    loading: np.ndarray
    variance_share: float
    eigenvalues: tuple[float, float]
    r: float


def first_pc(x1, x2, favorable: tuple[int, int] = (1, -1)) -> PrincipalComponent:
    """Leading principal component of two standardized covariates.

    The correlation matrix ``[[1, r], [r, 1]]`` has eigenvalues ``1 +/- |r|``
    with eigenvectors ``(1, +/-1) / sqrt(2)``, so the decomposition is taken
    in closed form.  ``favorable`` gives the direction of each input that
    favours a flood (default: wetter, and colder under the negative-DDF
    convention); the loading is oriented so that direction scores positive.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError(f"length mismatch: {x1.size} vs {x2.size}")
    if x1.size < 3:
        raise ValueError("need at least 3 observations")
    r = float(np.corrcoef(x1, x2)[0, 1])
    sign = 1.0 if r >= 0 else -1.0
    loading = np.array([1.0, sign]) / np.sqrt(2.0)
    orient = float(loading @ np.asarray(favorable, dtype=float))
    if orient < 0 or (orient == 0 and loading[0] < 0):
        loading = -loading
    scores = np.column_stack([x1, x2]) @ loading
    lam = (1.0 + abs(r), 1.0 - abs(r))
    return PrincipalComponent(scores, loading, lam[0] / 2.0, lam, r)
