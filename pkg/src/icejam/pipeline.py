"""Run configuration and stage orchestration.

Stages run in the order features -> select -> fit -> bootstrap -> project ->
report.  A stage whose inputs were not produced in the same run reads them
from the output directory (or from paths named in the config).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
import pandas as pd
import scipy
import yaml

from . import __version__
from .bootstrap import BootstrapEnsemble, parametric_bootstrap, percentile_ci, sample_models
from .features import (
    MissingDataError,
    SeasonWindow,
    StationSeries,
    degree_days_freezing,
    fill_gaps_precip,
    fill_gaps_temperature,
    melt_test,
    winter_precip,
)
from .firth import FittedModel, aicc, fit_firth
from .io import (
    fmt6,
    load_ensemble,
    load_feature_table,
    load_flood_file,
    load_scenarios,
    load_station_csv,
    write_ensemble,
    write_feature_table,
)
from .projection import (
    ScenarioForcing,
    moving_average_corridor,
    project_probabilities,
    simulate_summary,
)
from .selection import compare_combinations, design_for, forward_stepwise

__all__ = [
    "STAGES",
    "RunConfig",
    "StageError",
    "load_config",
    "compute_features",
    "build_feature_table",
    "run_pipeline",
]

log = logging.getLogger(__name__)

STAGES = ("features", "select", "fit", "bootstrap", "project", "report")
STOCHASTIC = {"bootstrap", "project"}
SCALINGS = ("zscore", "percent")
DEFAULT_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class RunConfig:
    """Everything a run depends on.  Relative paths resolve against the
    directory of the config file."""

    # inputs
    stations: dict[str, dict[str, str]] = field(default_factory=dict)
    flood_file: Optional[str] = None
    covariates_file: Optional[str] = None
    feature_table: Optional[str] = None
    scenario_files: list[str] = field(default_factory=list)
    ensemble_file: Optional[str] = None
    # features
    window_start: str = "11-01"
    window_end: str = "04-30"
    tracker_start: Optional[str] = None
    scaling: str = "zscore"
    ddf_sign: str = "negative"
    excluded_years: list[int] = field(default_factory=lambda: [1968, 1969, 1970, 1971])
    # selection / fit
    candidates: list[str] = field(default_factory=lambda: ["gp_precip_pct", "fv_ddf", "fc_ddf", "melt_test"])
    max_steps: Optional[int] = None
    min_aicc_improvement: float = 0.1
    max_p_value: float = 0.10
    aicc_loglik: str = "penalized"
    model_covariates: Optional[list[str]] = None
    # stochastic stages
    seed: Optional[int] = None
    B: int = 1000
    models: int = 1000
    replicates_per_model: int = 1000
    scenario_scaling: str = "raw"
    moving_window: int = 20
    levels: list[float] = field(default_factory=lambda: list(DEFAULT_LEVELS))
    reference_years: list[int] = field(default_factory=lambda: [2030, 2050])
    history_prefix: bool = True
    workers: int = 1
    base_dir: str = "."

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}")
        if self.ddf_sign not in ("negative", "positive"):
            raise ValueError("ddf_sign must be 'negative' or 'positive'")
        if self.aicc_loglik not in ("penalized", "unpenalized"):
            raise ValueError("aicc_loglik must be 'penalized' or 'unpenalized'")

    def path(self, p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d.pop("workers")
        return d

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    data = yaml.safe_load(path.read_text()) or {}
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    data.setdefault("base_dir", str(path.parent))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


# ---------------------------------------------------------------------------
# features


def _month_day(text: str) -> tuple[int, int]:
    m, d = text.split("-")
    return int(m), int(d)


def _window(cfg: RunConfig, year: int) -> SeasonWindow:
    return SeasonWindow.from_month_days(year, _month_day(cfg.window_start), _month_day(cfg.window_end))


def _tracker(cfg: RunConfig, window: SeasonWindow) -> Optional[dt.date]:
    if cfg.tracker_start is None:
        return None
    m, d = _month_day(cfg.tracker_start)
    y = window.start.year if (m, d) <= (window.start.month, window.start.day) else window.start.year - 1
    return dt.date(y, m, d)


def _filled(cfg: RunConfig, role: str, precip: bool):
    spec = cfg.stations.get(role)
    if spec is None:
        raise KeyError(f"config.stations lacks {role!r}")
    target = load_station_csv(cfg.path(spec["target"]))
    donor = load_station_csv(cfg.path(spec["donor"])) if spec.get("donor") else None
    out = target
    prov = []
    if donor is not None:
        out = fill_gaps_temperature(out, donor)
        if precip:
            out = fill_gaps_precip(out, donor)
        for name in ("tmean", "precip") if precip else ("tmean",):
            before = np.isnan(getattr(target, name))
            after = np.isnan(getattr(out, name))
            for i in np.flatnonzero(before & ~after):
                prov.append({
                    "station_id": target.station_id,
                    "date": str(target.dates[i]),
                    "field": name,
                    "value": float(getattr(out, name)[i]),
                    "donor": donor.station_id,
                })
    return out, prov


@dataclass
class FeatureResult:
    """Unscaled-and-scaled features for every year, plus bookkeeping."""

    all_years: pd.DataFrame
    table: pd.DataFrame
    provenance: pd.DataFrame
    incomplete: pd.DataFrame
    scaling: dict


def _scale_params(cfg: RunConfig, raw: pd.DataFrame, baseline_mask) -> dict:
    base = raw[baseline_mask]
    sign = -1.0 if cfg.ddf_sign == "negative" else 1.0
    params = {"mode": cfg.scaling, "ddf_sign": cfg.ddf_sign, "columns": {}}
    p = base["gp_precip_pct"].dropna()
    if cfg.scaling == "zscore":
        params["columns"]["gp_precip_pct"] = {"kind": "zscore", "sign": 1.0,
                                              "center": float(p.mean()), "scale": float(p.std(ddof=1))}
    else:
        params["columns"]["gp_precip_pct"] = {"kind": "percent", "sign": 1.0,
                                              "center": float(p.mean()), "scale": 1.0}
    for col in ("fv_ddf", "fc_ddf"):
        v = sign * base[col].dropna()
        params["columns"][col] = {"kind": "zscore", "sign": sign,
                                  "center": float(v.mean()), "scale": float(v.std(ddof=1))}
    return params


def apply_scaling(values: pd.DataFrame, params: dict) -> pd.DataFrame:
    """Map raw-unit covariates (mm, deg C day) onto the fitted model's scale."""
    out = values.copy()
    for col, spec in params["columns"].items():
        if col not in out.columns:
            continue
        v = spec["sign"] * out[col].astype(float)
        if spec["kind"] == "zscore":
            if not spec["scale"] > 0:
                raise ValueError(f"zero baseline variance for {col}")
            out[col] = (v - spec["center"]) / spec["scale"]
        else:
            out[col] = v / spec["center"]
    return out


def compute_features(cfg: RunConfig) -> FeatureResult:
    """Gap-fill the stations and derive every year's covariates.

    ``all_years`` keeps excluded years (needed for the historical part of a
    projection); ``table`` is the analysis table without them.  Scaling
    baselines are the analysis years.
    """
    floods = load_flood_file(cfg.path(cfg.flood_file))
    gp, prov_gp = _filled(cfg, "precip", precip=True)
    fv, prov_fv = _filled(cfg, "upstream", precip=False)
    fc, prov_fc = _filled(cfg, "downstream", precip=False)
    rows, incomplete = [], []

    def attempt(year, name, fn, *args):
        try:
            return fn(*args)
        except MissingDataError as exc:
            incomplete.append({"breakup_year": year, "covariate": name,
                               "missing_dates": " ".join(d.isoformat() for d in exc.dates)})
            return np.nan

    for year, flood in floods.items():
        w = _window(cfg, int(year))
        mt = attempt(year, "melt_test", melt_test, gp, int(year))
        rows.append({
            "breakup_year": int(year),
            "gp_precip_pct": attempt(year, "gp_precip_pct", winter_precip, gp, w, _tracker(cfg, w)),
            "fv_ddf": attempt(year, "fv_ddf", degree_days_freezing, fv, w),
            "fc_ddf": attempt(year, "fc_ddf", degree_days_freezing, fc, w),
            "melt_test": np.nan if mt is None else mt,
            "flood": int(flood),
        })
    raw = pd.DataFrame(rows)
    if cfg.covariates_file:
        extra = pd.read_csv(cfg.path(cfg.covariates_file), float_precision="round_trip")
        extra = extra.rename(columns={"year": "breakup_year"})
        raw = raw.merge(extra, on="breakup_year", how="left")
    analysis = ~raw["breakup_year"].isin(cfg.excluded_years)
    params = _scale_params(cfg, raw, analysis)
    scaled = apply_scaling(raw, params)
    cols = ["breakup_year", "gp_precip_pct", "fv_ddf", "fc_ddf", "melt_test"]
    cols += [c for c in scaled.columns if c not in cols and c != "flood"] + ["flood"]
    scaled = scaled[cols]
    table = scaled[analysis].reset_index(drop=True)
    prov = pd.DataFrame(prov_gp + prov_fv + prov_fc,
                        columns=["station_id", "date", "field", "value", "donor"])
    inc = pd.DataFrame(incomplete, columns=["breakup_year", "covariate", "missing_dates"])
    return FeatureResult(scaled, table, prov, inc, params)


def build_feature_table(cfg: RunConfig) -> pd.DataFrame:
    """One scaled covariate row per analysis year (excluded years dropped)."""
    return compute_features(cfg).table


# ---------------------------------------------------------------------------
# orchestration


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format="%.6g", lineterminator="\n")


class _Run:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.features: Optional[FeatureResult] = None
        self.table: Optional[pd.DataFrame] = None
        self.scaling: Optional[dict] = None
        self.covariates: Optional[list[str]] = None
        self.model: Optional[FittedModel] = None
        self.ensemble: Optional[BootstrapEnsemble] = None
        self.design = None
        self.results: dict[str, Any] = {}

    # -- inputs that may come from an earlier run ---------------------------

    def need_table(self) -> pd.DataFrame:
        if self.table is None:
            for p in (self.out / "features.csv", self.cfg.path(self.cfg.feature_table)):
                if p is not None and p.exists():
                    self.table = load_feature_table(p)
                    break
            else:
                raise FileNotFoundError("no feature table: run the features stage or set feature_table")
        return self.table

    def need_scaling(self) -> Optional[dict]:
        if self.scaling is None and (self.out / "scaling.json").exists():
            self.scaling = json.loads((self.out / "scaling.json").read_text())
        return self.scaling

    def need_covariates(self) -> list[str]:
        if self.covariates is None:
            if self.cfg.model_covariates is not None:
                self.covariates = list(self.cfg.model_covariates)
            elif (self.out / "selection.json").exists():
                self.covariates = json.loads((self.out / "selection.json").read_text())["chosen"]
            else:
                raise FileNotFoundError("no model covariates: run select or set model_covariates")
        return self.covariates

    def need_model(self):
        if self.model is None:
            self.stage_fit(write=False)
        return self.model

    def need_ensemble(self) -> BootstrapEnsemble:
        if self.ensemble is not None:
            return self.ensemble
        for p in (self.cfg.path(self.cfg.ensemble_file), self.out / "ensemble.csv"):
            if p is not None and p.exists():
                meta_path = p.with_suffix(".json")
                meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
                names = meta.get("names")
                if names is None:
                    names = ["const", *self.need_covariates()]
                self.ensemble = load_ensemble(p, names=names, seed=meta.get("seed", 0),
                                              scaling=meta.get("scaling", self.cfg.scaling))
                return self.ensemble
        raise FileNotFoundError("no bootstrap ensemble: run bootstrap or set ensemble_file")

    # -- stages ---------------------------------------------------------------

    def stage_features(self):
        fr = compute_features(self.cfg)
        self.features, self.table, self.scaling = fr, fr.table, fr.scaling
        write_feature_table(fr.table, self.out / "features.csv")
        write_feature_table(fr.all_years, self.out / "features_all_years.csv")
        fr.provenance.to_csv(self.out / "features_provenance.csv", index=False,
                             float_format="%.17g", lineterminator="\n")
        fr.incomplete.to_csv(self.out / "features_incomplete.csv", index=False, lineterminator="\n")
        _write_json(fr.scaling, self.out / "scaling.json")

    def stage_select(self):
        table = self.need_table()
        cfg = self.cfg
        pen = cfg.aicc_loglik == "penalized"
        path = forward_stepwise(table, cfg.candidates, cfg.max_steps,
                                min_improvement=cfg.min_aicc_improvement,
                                max_p=cfg.max_p_value, penalized_aicc=pen)
        self.covariates = list(path.final.covariates)
        _write_csv(path.summary(), self.out / "selection_path.csv")
        _write_csv(path.candidate_table, self.out / "selection_candidates.csv")
        _write_json({
            "candidates": list(path.candidates),
            "tie_break": "candidate list order",
            "chosen": self.covariates,
            "aicc_path": [fmt6(s.aicc) for s in path.steps],
            "stop_reason": path.stop_reason,
            "rejected": None if path.rejected is None else {
                k: (fmt6(v) if isinstance(v, float) else v) for k, v in path.rejected.items()},
        }, self.out / "selection.json")
        if {"gp_precip_pct", "fv_ddf"} <= set(table.columns):
            combos = compare_combinations(table, penalized_aicc=pen)
            _write_csv(combos.drop(columns="fit"), self.out / "combinations.csv")
        self.results["selection"] = path

    def stage_fit(self, write: bool = True):
        table = self.need_table()
        covs = self.need_covariates()
        d, _ = design_for(table, covs)
        m = fit_firth(d)
        self.model, self.design = m, d
        if not write:
            return
        pen = self.cfg.aicc_loglik == "penalized"
        coef = pd.DataFrame({
            "parameter": list(m.names), "beta": m.beta, "se": m.se,
            "p_value_lr": m.p_values, "p_value_wald": m.wald_p_values,
        })
        _write_csv(coef, self.out / "fit.csv")
        _write_json({
            "covariates": covs, "n": m.n, "converged": m.converged, "iterations": m.iterations,
            "loglik": fmt6(m.loglik), "penalized_loglik": fmt6(m.penalized_loglik),
            "aicc": fmt6(aicc(m, penalized=pen)), "aicc_loglik": self.cfg.aicc_loglik,
        }, self.out / "fit.json")

    def stage_bootstrap(self):
        m = self.need_model()
        e = parametric_bootstrap(m, self.design, self.cfg.B, self.cfg.seed,
                                 workers=self.cfg.workers, scaling=self.cfg.scaling)
        self.ensemble = e
        write_ensemble(e, self.out / "ensemble.csv")
        _write_json({"names": list(e.names), "seed": e.seed, "scaling": e.scaling},
                    self.out / "ensemble.json")
        ci = percentile_ci(e, 0.95)
        ci.insert(1, "beta_hat", m.beta)
        _write_csv(ci, self.out / "bootstrap_ci.csv")
        _write_json({"B": e.B, "excluded": e.n_failed, "diagnostics": e.diagnostics()},
                    self.out / "bootstrap.json")

    def _forcings(self, names: list[str]) -> list[ScenarioForcing]:
        cfg = self.cfg
        covs = names[1:]
        out = []
        for f in cfg.scenario_files:
            for sc in load_scenarios(cfg.path(f), scaling=cfg.scenario_scaling):
                if cfg.scenario_scaling == "raw":
                    params = self.need_scaling()
                    if params is None:
                        raise ValueError("raw scenario files need scaling.json from the features stage")
                    cov = apply_scaling(sc.covariates[covs], params)
                    sc = ScenarioForcing(sc.gcm, sc.rcp, sc.years, cov, params["mode"])
                out.append(sc)
        return out

    def _history(self, start_year: int, covs: list[str]) -> Optional[pd.DataFrame]:
        p = self.out / "features_all_years.csv"
        hist = self.features.all_years if self.features is not None else (
            load_feature_table(p) if p.exists() else None)
        if hist is None:
            return None
        h = hist[hist["breakup_year"] < start_year][["breakup_year", *covs]].dropna()
        h = h.sort_values("breakup_year")
        years = h["breakup_year"].to_numpy()
        if years.size == 0 or years[-1] != start_year - 1:
            return None
        breaks = np.flatnonzero(np.diff(years) != 1)
        first = breaks[-1] + 1 if breaks.size else 0
        return h.iloc[first:]

    def stage_project(self):
        cfg = self.cfg
        e = self.need_ensemble()
        names = list(e.names)
        covs = names[1:]
        models = sample_models(e, cfg.models, cfg.seed)
        corridors, waits, medians, freq = [], [], [], []
        for sc in self._forcings(names):
            sim_fan = project_probabilities(models, sc, covariates=covs, scaling=e.scaling)
            plot_sc = sc
            if cfg.history_prefix:
                h = self._history(int(sc.years[0]), covs)
                if h is not None:
                    plot_sc = sc.prepend(h["breakup_year"].to_numpy(), h[covs])
            plot_fan = project_probabilities(models, plot_sc, covariates=covs, scaling=e.scaling)
            window = min(cfg.moving_window, plot_fan.years.size)
            cor = moving_average_corridor(plot_fan, window, cfg.levels).to_frame()
            cor.insert(0, "rcp", sc.rcp)
            cor.insert(0, "gcm", sc.gcm)
            corridors.append(cor)
            refs = [r for r in cfg.reference_years if sc.years[0] <= r <= sc.years[-1]]
            summ = simulate_summary(sim_fan, cfg.replicates_per_model, cfg.seed, refs,
                                    workers=cfg.workers)
            freq.append(pd.DataFrame({"gcm": sc.gcm, "rcp": sc.rcp, "year": summ.years,
                                      "simulated_frequency": summ.frequency,
                                      "mean_p": sim_fan.p.mean(axis=0)}))
            for r in refs:
                rep = summ.wait_report(r, sc.gcm, sc.rcp)
                rep = {k: (fmt6(v) if isinstance(v, float) else v) for k, v in rep.items()}
                rep["quantiles"] = {q: fmt6(v) if v is not None else None
                                    for q, v in rep["quantiles"].items()}
                waits.append(rep)
                medians.append({"rcp": sc.rcp, "gcm": sc.gcm, "reference_year": r,
                                "median_wait": rep["median"],
                                "beyond_horizon": rep["median_beyond_horizon"]})
        if corridors:
            _write_csv(pd.concat(corridors, ignore_index=True), self.out / "corridors.csv")
            _write_csv(pd.concat(freq, ignore_index=True), self.out / "frequency.csv")
        _write_csv(pd.DataFrame(medians, columns=["rcp", "gcm", "reference_year", "median_wait",
                                                  "beyond_horizon"]),
                   self.out / "wait_medians.csv")
        _write_json(waits, self.out / "wait_times.json")

    def stage_report(self):
        lines = ["# Run report", ""]
        for name, title in [("selection_path.csv", "Stepwise selection"),
                            ("combinations.csv", "Precipitation/temperature combinations"),
                            ("fit.csv", "Fitted model"),
                            ("bootstrap_ci.csv", "Bootstrap 95% intervals"),
                            ("wait_medians.csv", "Median wait times")]:
            p = self.out / name
            if p.exists():
                lines += [f"## {title}", "", "```", p.read_text().rstrip(), "```", ""]
        for name in ("bootstrap.json", "selection.json"):
            p = self.out / name
            if p.exists():
                lines += [f"## {name}", "", "```", p.read_text().rstrip(), "```", ""]
        (self.out / "report.md").write_text("\n".join(lines) + "\n")


def _versions() -> dict:
    return {"icejam": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}


def run_pipeline(cfg: RunConfig, stages: Iterable[str], out) -> dict:
    """Execute ``stages`` in dependency order and write the bundle to ``out``.

    Returns a dict with the output directory, stages run and the manifest.
    Any failure is re-raised as :class:`StageError` naming the stage.
    """
    stages = set(stages)
    unknown = stages - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stage(s): {', '.join(sorted(unknown))}")
    ordered = [s for s in STAGES if s in stages]
    if STOCHASTIC & stages and cfg.seed is None:
        raise StageError(sorted(STOCHASTIC & stages)[0], "a seed is required for stochastic stages")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    for stage in ordered:
        log.info("running stage %s", stage)
        try:
            getattr(run, f"stage_{stage}")()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
    files = {p.name: _sha256(p) for p in sorted(out.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.canonical(),
        "seed": cfg.seed,
        "stages": ordered,
        "versions": _versions(),
        "files": files,
    }
    _write_json(manifest, out / "manifest.json")
    return {"out": str(out), "stages": ordered, "manifest": manifest, "results": run.results}
