# %% [markdown]
# From sampled models to flood sequences and wait times
#
# A fan of probabilities per scenario year, its smoothed corridors, and the
# simulated waits until the next event.

# %%
import numpy as np
import pandas as pd

from icejam.projection import (
    ProbabilityFan,
    ScenarioForcing,
    km_median,
    moving_average_corridor,
    project_probabilities,
    simulate_summary,
)

rng = np.random.default_rng(7)
years = np.arange(2020, 2101)
trend = (years - 2020) / 80
# signed DDF: warming shrinks the freezing total, so the covariate rises
forcing = ScenarioForcing(
    "demo-gcm", "rcp85", years,
    pd.DataFrame({"precip": 0.3 * trend + rng.normal(0, 0.5, years.size),
                  "ddf": 1.5 * trend + rng.normal(0, 0.5, years.size)}),
    scaling="zscore",
)
models = np.column_stack([rng.normal(-3.0, 0.4, 1000), rng.normal(1.8, 0.3, 1000),
                          rng.normal(-1.2, 0.3, 1000)])
fan = project_probabilities(models, forcing, scaling="zscore")
print(fan.p.shape, "mean p first/last decade:",
      fan.p[:, :10].mean().round(4), fan.p[:, -10:].mean().round(4))

# %%
corridor = moving_average_corridor(fan, 20)
frame = corridor.to_frame()
print(frame[frame["year"].isin([2039, 2070, 2100])].round(4).to_string(index=False))

# %%
summary = simulate_summary(fan, 1000, seed=11, reference_years=[2030, 2050])
print(f"{summary.n_sequences} sequences, pooled frequency {summary.pooled_frequency:.4f}")
for ref in (2030, 2050):
    rep = summary.wait_report(ref, forcing.gcm, forcing.rcp)
    print(ref, "median wait:", km_median(summary.waits[ref]),
          " censored:", round(rep["censored_fraction"], 3))

# %%
# a constant fan recovers the geometric median ceil(ln .5 / ln(1 - p))
p = 0.0909
flat = ProbabilityFan(years, np.full((100, years.size), p))
s = simulate_summary(flat, 1000, seed=3, reference_years=[2020])
print("simulated:", km_median(s.waits[2020]), " analytic:", int(np.ceil(np.log(0.5) / np.log(1 - p))))
