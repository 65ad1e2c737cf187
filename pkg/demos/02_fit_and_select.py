# %% [markdown]
# Firth logistic regression and forward selection
#
# Small samples with few events are where the penalty matters; this walks
# through the fit, the stepwise search and the combination models.

# %%
import numpy as np

from icejam.firth import DesignMatrix, aicc, fit_firth, logistic, predict_prob

# 7 events in 55 years, no covariates: the estimate has a closed form
y = np.r_[np.ones(7), np.zeros(48)]
m = fit_firth(DesignMatrix.from_columns(y))
print(f"b0 = {m.beta[0]:.4f}   log(7.5/48.5) = {np.log(7.5 / 48.5):.4f}")
print(f"AICc (penalized loglik) = {aicc(m):.2f}, plain = {aicc(m, penalized=False):.2f}")

# %%
# complete separation: ordinary ML diverges, the penalized fit stays finite
sep = fit_firth(DesignMatrix.from_columns([0, 0, 1, 1], {"x": [-2, -1, 1, 2]}))
print("separated data:", np.round(sep.beta, 4), "converged:", sep.converged)

# %%
import tempfile
from pathlib import Path

from icejam.pipeline import load_config, compute_features
from icejam.selection import compare_combinations, forward_stepwise
from icejam.synthetic import make_dataset

work = Path(tempfile.mkdtemp())
make_dataset(work / "data")
(work / "run.yaml").write_text(
    "stations:\n"
    "  precip: {target: data/gp.csv, donor: data/bl.csv}\n"
    "  upstream: {target: data/fv.csv, donor: data/hl.csv}\n"
    "  downstream: {target: data/fc.csv, donor: data/fs.csv}\n"
    "flood_file: data/floods.csv\n"
)
cfg = load_config(work / "run.yaml")
table = compute_features(cfg).table
print(len(table), "analysis years,", int(table["flood"].sum()), "floods")

# %%
path = forward_stepwise(table, cfg.candidates)
print(path.summary().to_string(index=False))
print("stopped:", path.stop_reason)

# %%
final = path.final.model
print(final.coef())
print("LR p-values:", np.round(final.p_values, 4))
# DDF enters with a negative sign, so a cold winter is -1 on that axis
print("wet, cold winter  p =", round(float(predict_prob(final, [1.0, -1.0])), 3))
print("dry, mild winter  p =", round(float(predict_prob(final, [-1.0, 1.0])), 3))

# %%
combos = compare_combinations(table)
print(combos.drop(columns="fit").to_string(index=False))
print("PC1 share:", round(combos.attrs["pc_variance_share"], 3))
