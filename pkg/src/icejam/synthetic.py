"""Synthetic stations, flood records and scenario forcings.

Used by the demos and the test-suite in place of the archived observations.
The climate is a sinusoidal annual temperature cycle with AR(1) daily
anomalies and a per-winter offset; precipitation is a wet-day gamma process.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .features import StationSeries
from .firth import logistic

__all__ = ["station_pair", "make_dataset", "make_scenarios"]


def _daily_climate(years, rng, mean_c=-1.0, amp_c=17.0, winter_sd=2.5, warming=0.0):
    start = np.datetime64(f"{years[0] - 1}-10-01")
    end = np.datetime64(f"{years[-1]}-07-01")
    dates = np.arange(start, end)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int)
    seasonal = mean_c - amp_c * np.cos(2 * np.pi * (doy - 15) / 365.25)
    anom = np.empty(dates.size)
    a = 0.0
    for i, e in enumerate(rng.normal(0.0, 3.0, dates.size)):
        a = 0.8 * a + e
        anom[i] = a
    # winter-scale offsets so seasonal totals actually vary between years
    season_year = dates.astype("datetime64[Y]").astype(int) + 1970
    season_year = season_year + ((dates.astype("datetime64[M]").astype(int) % 12) >= 9)
    offsets = {y: rng.normal(0.0, winter_sd) for y in np.unique(season_year)}
    off = np.array([offsets[y] for y in season_year])
    trend = warming * (season_year - years[0])
    tmean = seasonal + anom + off + trend
    wet = rng.random(dates.size) < 0.35
    wet_scale = {y: rng.lognormal(0.0, 0.3) for y in np.unique(season_year)}
    scale = np.array([wet_scale[y] for y in season_year])
    precip = np.where(wet, rng.gamma(0.8, 3.0, dates.size) * scale, 0.0)
    return dates, np.round(tmean, 1), np.round(precip, 1)


def station_pair(station_id: str, donor_id: str, years, rng, gap_fraction=0.02,
                 offset_c=(1.0, -0.5, 0.0, 0.5, 1.5, 0.0, 0.0, 0.0, 0.0, -0.5, 0.5, 1.0),
                 **climate):
    """Target and donor series; the donor reads colder/warmer by a fixed
    per-month offset and the target has random gaps."""
    dates, tmean, precip = _daily_climate(years, rng, **climate)
    months = dates.astype("datetime64[M]").astype(int) % 12
    donor_t = np.round(tmean - np.asarray(offset_c)[months] + rng.normal(0, 0.3, dates.size), 1)
    donor_p = np.round(precip * rng.uniform(0.8, 1.2, dates.size), 1)
    gaps = rng.random(dates.size) < gap_fraction
    t_gap = gaps & (rng.random(dates.size) < 0.5)
    p_gap = gaps & ~t_gap
    target = StationSeries(station_id, dates, np.where(t_gap, np.nan, tmean),
                           np.where(p_gap, np.nan, precip))
    donor = StationSeries(donor_id, dates, donor_t, donor_p)
    return target, donor


def make_dataset(directory, first_year=1962, last_year=2020, seed=6,
                 beta=(-2.5, 1.6, -1.2)) -> dict:
    """Write station CSVs and a flood file to ``directory``.

    Floods are drawn from a logistic model in the z-scored winter
    precipitation and negative-signed freezing degree-days at the upstream
    station, computed straight from the generated temperatures.
    """
    from .features import SeasonWindow, degree_days_freezing, fill_gaps_precip
    from .features import fill_gaps_temperature, winter_precip
    from .io import write_station_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    years = list(range(first_year, last_year + 1))
    gp, bl = station_pair("GP", "BL", years, rng)
    fv, hl = station_pair("FV", "HL", years, rng, mean_c=-3.0, amp_c=19.0)
    fc, fs = station_pair("FC", "FS", years, rng, mean_c=-3.5, amp_c=20.0)
    paths = {}
    for s in (gp, bl, fv, hl, fc, fs):
        p = directory / f"{s.station_id.lower()}.csv"
        write_station_csv(s, p)
        paths[s.station_id] = str(p)

    gpf = fill_gaps_precip(fill_gaps_temperature(gp, bl), bl)
    fvf = fill_gaps_temperature(fv, hl)
    wp, dd = [], []
    for y in years:
        w = SeasonWindow(y)
        wp.append(winter_precip(gpf, w))
        dd.append(-degree_days_freezing(fvf, w))
    zp = (np.array(wp) - np.mean(wp)) / np.std(wp, ddof=1)
    zd = (np.array(dd) - np.mean(dd)) / np.std(dd, ddof=1)
    prob = logistic(beta[0] + beta[1] * zp + beta[2] * zd)
    flood = (rng.random(len(years)) < prob).astype(int)
    fpath = directory / "floods.csv"
    pd.DataFrame({"year": years, "flood": flood}).to_csv(fpath, index=False, lineterminator="\n")
    paths["floods"] = str(fpath)
    return paths


def make_scenarios(path, gcms=("GCM-A", "GCM-B"), rcps=("rcp45", "rcp85"),
                   first_year=2020, last_year=2100, seed=2,
                   precip_mm=(180.0, 60.0), ddf=(2900.0, 300.0)) -> str:
    """Raw-unit scenario forcing file: winter precipitation (mm) and
    freezing degree-days (positive deg C day) that warm over the century."""
    rng = np.random.default_rng(seed)
    years = np.arange(first_year, last_year + 1)
    rows = []
    for g_i, g in enumerate(gcms):
        for r_i, r in enumerate(rcps):
            frac = (years - first_year) / (last_year - first_year)
            warm = (0.25 + 0.2 * r_i + 0.1 * g_i) * frac
            p = precip_mm[0] * (1.0 + 0.1 * frac) + rng.normal(0, precip_mm[1], years.size)
            d = ddf[0] * (1.0 - warm) + rng.normal(0, ddf[1], years.size)
            for y, pv, dv in zip(years, p, d):
                rows.append({"gcm": g, "rcp": r, "year": int(y),
                             "gp_precip_pct": round(max(pv, 0.0), 3),
                             "fv_ddf": round(max(dv, 0.0), 3)})
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")
    return str(path)
