# %% [markdown]
# Winter features from daily station records
#
# Builds a small synthetic station pair, fills the gaps from the donor and
# derives the covariates for one breakup year.

# %%
import datetime as dt
import tempfile
from pathlib import Path

import numpy as np

from icejam.features import (
    SeasonWindow,
    StationSeries,
    degree_days_freezing,
    fill_gaps_precip,
    fill_gaps_temperature,
    first_pc,
    melt_test,
    standardize,
    winter_precip,
)
from icejam.io import load_station_csv
from icejam.synthetic import make_dataset

work = Path(tempfile.mkdtemp())
paths = make_dataset(work / "data")
gp = load_station_csv(paths["GP"])
bl = load_station_csv(paths["BL"])
print(gp.station_id, gp.dates[0], "to", gp.dates[-1])
print("missing tmean days:", len(gp.missing_dates("tmean")),
      " missing precip days:", len(gp.missing_dates("precip")))

# %%
# temperature gaps get donor + monthly offset, precipitation gaps the donor value
filled = fill_gaps_precip(fill_gaps_temperature(gp, bl), bl)
print("after filling:", len(filled.missing_dates("tmean")), len(filled.missing_dates("precip")))

# %%
w = SeasonWindow(1997)
print(w.start, "->", w.end, f"({w.n_days} days)")
print("winter precipitation (mm):", round(winter_precip(filled, w), 1))
print("freezing degree-days:", round(degree_days_freezing(filled, w), 1))
print("melt test (days from 40 to 150 DDT):", melt_test(filled, 1997))

# %%
# a hand-sized case of the precipitation reset: early snow, a thaw, then winter proper
start = dt.date(2000, 11, 1)
n = SeasonWindow(2001).n_days
t = np.full(n, -10.0)
p = np.zeros(n)
p[:5] = 2.0
t[5:10] = 10.0
p[20:70] = 1.0
toy = StationSeries("toy", np.datetime64(start) + np.arange(n), t, p)
print("early 10 mm discarded, total kept:", winter_precip(toy, SeasonWindow(2001)))

# %%
# the first principal component of two standardized covariates
years = range(1962, 2021)
wp = np.array([winter_precip(filled, SeasonWindow(y)) for y in years])
fv = fill_gaps_temperature(load_station_csv(paths["FV"]), load_station_csv(paths["HL"]))
ddf = -np.array([degree_days_freezing(fv, SeasonWindow(y)) for y in years])
pc = first_pc(standardize(wp, wp), standardize(ddf, ddf))
print(f"r = {pc.r:.3f}, PC1 share = {pc.variance_share:.3f}, loading = {np.round(pc.loading, 3)}")
