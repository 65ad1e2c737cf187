"""CSV readers and writers for station data, feature tables, flood
indicators, scenario forcings and bootstrap ensembles."""

from __future__ import annotations

import csv
import datetime as dt
import math
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .bootstrap import BootstrapEnsemble, ensemble_from_frame, ensemble_to_frame
from .features import FEATURE_COLUMNS, StationSeries
from .projection import ScenarioForcing

__all__ = [
    "CSVFormatError",
    "STATION_HEADER",
    "load_station_csv",
    "write_station_csv",
    "load_feature_table",
    "write_feature_table",
    "load_flood_file",
    "load_scenarios",
    "write_ensemble",
    "load_ensemble",
    "fmt6",
]

STATION_HEADER = ["station_id", "date", "tmean_c", "precip_mm"]
SCENARIO_KEYS = ["gcm", "rcp", "year"]


class CSVFormatError(ValueError):
    def __init__(self, path, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def fmt6(x) -> float:
    """Round to 6 significant digits for report output."""
    if x is None or not math.isfinite(x):
        return x
    return float(f"{x:.6g}")


def _opt_float(text: str, path, line, name):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise CSVFormatError(path, line, f"bad {name} value {text!r}") from None


def load_station_csv(path) -> StationSeries:
    """Read one station's daily series.

    Empty fields are kept as missing.  Rows must share one ``station_id``
    and have strictly increasing ISO dates.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != STATION_HEADER:
            raise CSVFormatError(path, 1, f"expected header {','.join(STATION_HEADER)}, got {header}")
        station = None
        dates, tmean, precip = [], [], []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CSVFormatError(path, lineno, f"expected 4 fields, got {len(row)}")
            sid = row[0].strip()
            if station is None:
                station = sid
            elif sid != station:
                raise CSVFormatError(path, lineno, f"mixed station ids {station!r} and {sid!r}")
            try:
                d = dt.date.fromisoformat(row[1].strip())
            except ValueError:
                raise CSVFormatError(path, lineno, f"bad date {row[1]!r}") from None
            if d in seen:
                raise CSVFormatError(path, lineno, f"duplicate date {d} (first on line {seen[d]})")
            if dates and d < dates[-1]:
                raise CSVFormatError(path, lineno, f"date {d} out of order")
            seen[d] = lineno
            t = _opt_float(row[2], path, lineno, "tmean_c")
            p = _opt_float(row[3], path, lineno, "precip_mm")
            if p < 0:
                raise CSVFormatError(path, lineno, f"negative precipitation {p}")
            dates.append(d)
            tmean.append(t)
            precip.append(p)
    return StationSeries(station or path.stem, np.array(dates, dtype="datetime64[D]"),
                         np.array(tmean, float), np.array(precip, float))


def write_station_csv(series: StationSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for d, t, p in zip(series.dates.tolist(), series.tmean, series.precip):
            w.writerow([series.station_id, d.isoformat(),
                        "" if np.isnan(t) else repr(float(t)),
                        "" if np.isnan(p) else repr(float(p))])


def write_feature_table(table: pd.DataFrame, path) -> None:
    """Write a feature table at full precision so that reading it back is exact."""
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def load_feature_table(path) -> pd.DataFrame:
    table = pd.read_csv(path, float_precision="round_trip")
    for col in ("breakup_year", "flood"):
        if col not in table.columns:
            raise CSVFormatError(path, 1, f"feature table lacks {col!r}")
    bad = ~table["flood"].isin([0, 1])
    if bad.any():
        raise CSVFormatError(path, int(np.flatnonzero(bad)[0]) + 2, "flood must be 0 or 1")
    table["breakup_year"] = table["breakup_year"].astype(int)
    table["flood"] = table["flood"].astype(int)
    return table


def load_flood_file(path) -> pd.Series:
    """``year,flood`` file -> integer Series indexed by year."""
    df = pd.read_csv(path)
    if list(df.columns[:2]) != ["year", "flood"]:
        raise CSVFormatError(path, 1, "expected header year,flood")
    if df["year"].duplicated().any():
        raise CSVFormatError(path, None, "duplicate years in flood file")
    bad = ~df["flood"].isin([0, 1])
    if bad.any():
        raise CSVFormatError(path, int(np.flatnonzero(bad)[0]) + 2, "flood must be 0 or 1")
    return df.set_index("year")["flood"].astype(int).sort_index()


def load_scenarios(path, scaling: Optional[str] = None) -> list[ScenarioForcing]:
    """Read ``gcm,rcp,year,<covariates>`` blocks, one ScenarioForcing each."""
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns[:3]) != SCENARIO_KEYS:
        raise CSVFormatError(path, 1, "expected header to start with gcm,rcp,year")
    cov_cols = list(df.columns[3:])
    out = []
    for (gcm, rcp), block in df.groupby(["gcm", "rcp"], sort=False):
        block = block.sort_values("year")
        out.append(ScenarioForcing(str(gcm), str(rcp), block["year"].to_numpy(int),
                                   block[cov_cols].reset_index(drop=True), scaling))
    return out


def write_ensemble(e: BootstrapEnsemble, path) -> None:
    ensemble_to_frame(e).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def load_ensemble(path, names=None, seed: int = 0, scaling: Optional[str] = None) -> BootstrapEnsemble:
    df = pd.read_csv(path, float_precision="round_trip")
    if "replicate" not in df.columns or "converged" not in df.columns:
        raise CSVFormatError(path, 1, "expected replicate,beta_0,...,converged")
    return ensemble_from_frame(df, names=names, seed=seed, scaling=scaling)


