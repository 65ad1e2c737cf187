"""Forward stepwise covariate selection by AICc."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .features import first_pc, standardize
from .firth import CollinearityError, DesignMatrix, FittedModel, aicc, fit_firth

__all__ = ["Step", "SelectionPath", "forward_stepwise", "compare_combinations", "design_for"]

log = logging.getLogger(__name__)


def design_for(features: pd.DataFrame, covariates: Sequence[str],
               response: str = "flood") -> tuple[DesignMatrix, pd.Index]:
    """Design matrix on the rows where the response and every covariate exist."""
    cols = [response, *covariates]
    missing = [c for c in cols if c not in features.columns]
    if missing:
        raise KeyError(f"feature table lacks column(s): {', '.join(missing)}")
    rows = features[cols].dropna()
    d = DesignMatrix.from_columns(
        rows[response].to_numpy(float), {c: rows[c].to_numpy(float) for c in covariates}
    )
    return d, rows.index


@dataclass
class Step:
    added: Optional[str]
    covariates: tuple[str, ...]
    model: FittedModel
    aicc: float


@dataclass
class SelectionPath:
    """Accepted steps plus every candidate model evaluated along the way.

    ``candidate_table`` has one row per evaluated candidate with columns
    ``step, variable, covariates, n, comparable, aicc, p_value, status`` and
    one ``b_<name>`` column per coefficient.
    """

    steps: list[Step]
    candidate_table: pd.DataFrame
    candidates: tuple[str, ...]
    stop_reason: str = ""
    rejected: Optional[dict] = field(default=None)

    @property
    def chosen(self) -> int:
        return len(self.steps) - 1

    @property
    def final(self) -> Step:
        return self.steps[-1]

    def summary(self) -> pd.DataFrame:
        """Best model at each accepted step, shaped like a model-comparison table."""
        rows = []
        for i, s in enumerate(self.steps):
            rows.append({
                "n_variables": i,
                "variables": " + ".join(("const", *s.covariates)),
                "coefficients": " ".join(f"{b:.6g}" for b in s.model.beta),
                "p_values": " ".join(f"{p:.6g}" for p in s.model.p_values),
                "aicc": s.aicc,
            })
        return pd.DataFrame(rows)


def _fit(features, covariates, response, penalized_aicc):
    d, idx = design_for(features, covariates, response)
    m = fit_firth(d)
    return m, aicc(m, penalized=penalized_aicc), len(idx)


def forward_stepwise(features: pd.DataFrame, candidates: Sequence[str],
                     max_steps: Optional[int] = None, *, response: str = "flood",
                     min_improvement: float = 0.1, max_p: float = 0.10,
                     penalized_aicc: bool = True) -> SelectionPath:
    """Greedy forward selection starting from the intercept-only model.

    At each step every remaining candidate is added in turn; the lowest-AICc
    extension is accepted only if it lowers AICc by more than
    ``min_improvement`` and its new coefficient has penalized-LR p-value below
    ``max_p``.  Exact AICc ties go to the earlier candidate in ``candidates``.
    Candidates with missing values are fitted on fewer rows, tabulated with
    ``comparable=False``, and never accepted.  Candidates that are collinear
    with the incumbent set are skipped and logged.
    """
    candidates = tuple(candidates)
    if len(set(candidates)) != len(candidates):
        raise ValueError("duplicate candidate names")
    base_rows = features[response].notna()
    n_base = int(base_rows.sum())
    m0, a0, _ = _fit(features, (), response, penalized_aicc)
    steps = [Step(None, (), m0, a0)]
    table = [_row(0, None, (), m0, a0, n_base, True, np.nan, "ok")]
    remaining = list(candidates)
    limit = len(candidates) if max_steps is None else max_steps
    stop = "no candidates" if not candidates else ""
    rejected = None

    while remaining and len(steps) - 1 < limit:
        inc = steps[-1]
        s = len(steps)
        best = None
        for pos, name in enumerate(remaining):
            covs = (*inc.covariates, name)
            try:
                m, a, n = _fit(features, covs, response, penalized_aicc)
            except CollinearityError as exc:
                log.warning("step %d: skipping %s (%s)", s, name, exc)
                table.append(_row(s, name, covs, None, np.nan, np.nan, False, np.nan, "collinear"))
                continue
            comparable = n == n_base
            status = "ok" if m.converged else "not converged"
            p_new = float(m.p_values[-1])
            table.append(_row(s, name, covs, m, a, n, comparable, p_new, status))
            if not (comparable and m.converged):
                continue
            if best is None or a < best[1]:
                best = (name, a, m, p_new, covs)
        if best is None:
            stop = "no fittable candidate"
            break
        name, a, m, p_new, covs = best
        if not inc.aicc - a > min_improvement:
            stop = f"AICc improvement {inc.aicc - a:.4g} not above {min_improvement}"
            rejected = {"variable": name, "aicc": a, "p_value": p_new, "reason": stop}
            break
        if not p_new < max_p:
            stop = f"p-value {p_new:.4g} of {name} not below {max_p}"
            rejected = {"variable": name, "aicc": a, "p_value": p_new, "reason": stop}
            break
        steps.append(Step(name, covs, m, a))
        remaining.remove(name)
    if not stop:
        stop = "max_steps reached" if remaining else "all candidates entered"
    return SelectionPath(steps, pd.DataFrame(table), candidates, stop, rejected)


def _row(step, name, covs, m, a, n, comparable, p_new, status):
    row = {
        "step": step,
        "variable": name if name is not None else "const",
        "covariates": " + ".join(covs),
        "n": n,
        "comparable": comparable,
        "aicc": a,
        "p_value": p_new,
        "status": status,
    }
    if m is not None:
        for label, b in zip(m.names, m.beta):
            row[f"b_{label}"] = b
    return row


def compare_combinations(features: pd.DataFrame, precip: str = "gp_precip_pct",
                         ddf: str = "fv_ddf", *, response: str = "flood",
                         penalized_aicc: bool = True,
                         favorable: tuple[int, int] = (1, -1)) -> pd.DataFrame:
    """Fit the precipitation/temperature combination models side by side.

    Rows: constant; precip + DDF; precip + DDF + interaction; interaction only;
    first principal component only.  The interaction is ``precip * ddf`` and
    the component comes from :func:`first_pc` on the z-scored pair.
    """
    rows = features[[response, precip, ddf]].dropna()
    zp = standardize(rows[precip], rows[precip])
    zd = standardize(rows[ddf], rows[ddf])
    pc = first_pc(zp, zd, favorable=favorable)
    table = rows.assign(interaction=rows[precip] * rows[ddf], first_pc=pc.scores)
    specs = [
        ("constant", ()),
        ("precip + ddf", (precip, ddf)),
        ("precip + ddf + interaction", (precip, ddf, "interaction")),
        ("interaction", ("interaction",)),
        ("first_pc", ("first_pc",)),
    ]
    out = []
    for label, covs in specs:
        try:
            m, a, n = _fit(table, covs, response, penalized_aicc)
        except CollinearityError as exc:
            out.append({"model": label, "variables": " + ".join(("const", *covs)),
                        "aicc": np.nan, "status": str(exc), "fit": None})
            continue
        out.append({
            "model": label,
            "variables": " + ".join(m.names),
            "coefficients": " ".join(f"{b:.6g}" for b in m.beta),
            "p_values": " ".join(f"{p:.6g}" for p in m.p_values),
            "aicc": a,
            "n": n,
            "status": "ok" if m.converged else "not converged",
            "fit": m,
        })
    result = pd.DataFrame(out)
    result.attrs["pc_variance_share"] = pc.variance_share
    result.attrs["pc_loading"] = pc.loading.tolist()
    result.attrs["pc_r"] = pc.r
    return result
