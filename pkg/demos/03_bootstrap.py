# %% [markdown]
# Parametric bootstrap of a fitted model
#
# Responses are redrawn from the fitted probabilities and the model is refit
# B times; percentiles of the refits give the intervals.

# %%
import numpy as np

from icejam.bootstrap import parametric_bootstrap, percentile_ci, sample_models
from icejam.firth import DesignMatrix, fit_firth, logistic

rng = np.random.default_rng(55)
precip, ddf = rng.normal(size=(2, 55))
y = (rng.random(55) < logistic(-3.0 + 1.8 * precip + 1.2 * ddf)).astype(float)
d = DesignMatrix.from_columns(y, {"precip": precip, "ddf": ddf})
m = fit_firth(d)
print("fit:", m.coef())

# %%
e = parametric_bootstrap(m, d, B=1000, seed=20210128)
print(e.diagnostics())
print(percentile_ci(e, 0.95).round(3).to_string(index=False))

# %%
# the same seed reproduces the ensemble exactly, with or without workers
again = parametric_bootstrap(m, d, B=1000, seed=20210128, workers=2)
print("identical:", np.array_equal(e.betas, again.betas, equal_nan=True))

# %%
# models drawn for projection, uniformly from the converged replicates
models = sample_models(e, 5, seed=1)
print(np.round(models, 3))
