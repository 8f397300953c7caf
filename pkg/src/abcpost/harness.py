"""Batch front-end machinery: configs, seeding, replication, aggregation.

A study runs R independent chains whose seeds derive from one base seed via
a 64-bit mixer, so parallel and serial execution produce identical output.
Each replicate yields one result row per (tolerance, estimator, estimand);
aggregation reduces rows to coverage / RMSE / acceptance tables against the
configured or oracle ground truth.
"""

import configparser
import math
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .adapt import (CovarianceAdapter, StepSchedule, run_adaptive_burnin,
                    DELTA_BOUNDS, PROPOSAL_SCALE)
from .chain import run_chain
from .cutoffs import get_cutoff
from .models import get_model
from .postprocess import (AllZeroWeightsError, CaptureDisabledError,
                          ConstantSeriesError, SingularDesignError, Z_95,
                          confidence_interval, correction_weights, iact,
                          regression_correct, tolerance_sweep,
                          waste_recycled_mean)

__all__ = [
    "RunConfig",
    "ResultRow",
    "ReplicateOutput",
    "StudyResult",
    "mix_seed",
    "load_config",
    "run_replicate",
    "run_study",
    "aggregate",
    "sweep_table",
    "ROW_FIELDS",
    "AGGREGATE_FIELDS",
]

_MASK64 = (1 << 64) - 1

ESTIMATOR_KINDS = ("post", "regression", "waste")

ROW_FIELDS = ("replicate", "seed", "delta_final", "epsilon", "estimator",
              "func", "e", "s", "tau", "ci_low", "ci_high", "support_count",
              "acceptance_rate")

AGGREGATE_FIELDS = ("epsilon", "estimator", "func", "n_used", "n_excluded",
                    "truth", "coverage", "rmse", "mean_estimate",
                    "mean_acceptance")


def mix_seed(base_seed, index):
    """Derive the seed of replicate `index` from the base seed.

    SplitMix64 finalizer over base + (index + 1) * golden-ratio increment;
    collision-free across indices for any fixed base.
    """
    z = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass
class RunConfig:
    """Everything needed to reproduce a study."""

    model: str = "gaussian"
    model_params: dict = field(default_factory=dict)
    cutoff: str = "simple"
    correction_cutoff: str = ""
    mode: str = "fixed"
    delta: float = math.nan
    n_burn: int = 1000
    n_keep: int = 10_000
    epsilons: object = "sweep"
    functions: tuple = ("x",)
    estimators: tuple = ("post",)
    z_quantile: float = Z_95
    capture_proposals: bool = False
    capture_summaries: bool = False
    seed: int = 1
    replications: int = 1
    workers: int = 1
    adapt_cov: bool = True
    cov_step_exponent: float = 1.0
    target_rate: float = 0.1
    ta_step_exponent: float = 2.0 / 3.0
    ta_step_scale: float = 1.0
    delta_min: float = DELTA_BOUNDS[0]
    delta_max: float = DELTA_BOUNDS[1]
    truth: dict = field(default_factory=dict)

    def needs_proposals(self):
        return self.capture_proposals or "waste" in self.estimators

    def needs_summaries(self):
        return self.capture_summaries or "regression" in self.estimators

    def eps_list(self):
        return None if self.epsilons == "sweep" else list(self.epsilons)

    def validate(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"mode must be fixed or adaptive, got {self.mode!r}")
        if self.n_keep < 1 or self.replications < 1 or self.workers < 1:
            raise ValueError("n_keep, replications and workers must be >= 1")
        if self.n_burn < 0:
            raise ValueError("n_burn must be >= 0")
        unknown = set(self.estimators) - set(ESTIMATOR_KINDS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        eps = self.eps_list()
        if self.mode == "fixed":
            if not self.delta > 0:
                raise ValueError("fixed mode needs a positive delta")
            if eps is not None:
                bad = [e for e in eps if not 0 < e <= self.delta]
                if bad:
                    raise ValueError(
                        f"tolerances must satisfy 0 < eps <= delta: {bad}")
        else:
            if self.n_burn < 1:
                raise ValueError("adaptive mode needs n_burn >= 1")
            if not 0 < self.target_rate < 1:
                raise ValueError("target rate must be in (0, 1)")
            if not 0 < self.delta_min <= self.delta_max:
                raise ValueError("need 0 < delta_min <= delta_max")
            if eps is None:
                raise ValueError("adaptive mode needs an explicit eps list")
        if eps is not None and not eps:
            raise ValueError("eps list is empty")
        model = get_model(self.model, **self.model_params)
        for name in self.functions:
            resolve_estimand(model, name)
        get_cutoff(self.cutoff)
        if self.correction_cutoff:
            get_cutoff(self.correction_cutoff)
        if self.epsilons == "sweep":
            sim = self.cutoff
            corr = self.correction_cutoff or sim
            if corr != "simple" or sim != "simple":
                raise ValueError(
                    "sweep output is defined for the simple cut-off only")
        return self


_COMPONENT_RE = re.compile(r"^(abs_)?c(\d+)$")


def resolve_estimand(model, name):
    """Map an estimand name to a vectorized function of the sample array.

    Model-specific names take priority; generic selectors `c<i>` and
    `abs_c<i>` pick (the absolute value of) parameter component i.
    """
    registry = model.estimands()
    if name in registry:
        return registry[name]
    m = _COMPONENT_RE.match(name)
    if m:
        i = int(m.group(2))
        if i >= model.dim:
            raise ValueError(f"component {i} out of range for {model.dim}-D model")
        if m.group(1):
            return lambda th: np.abs(th[:, i])
        return lambda th: th[:, i]
    raise ValueError(f"unknown estimand {name!r} "
                     f"(model offers {sorted(registry)})")


@dataclass
class ResultRow:
    """One estimate: (replicate, tolerance, estimator, estimand) cell."""

    replicate: int
    seed: int
    delta_final: float
    epsilon: float
    estimator: str
    func: str
    e: float
    s: float
    tau: float
    ci_low: float
    ci_high: float
    support_count: int
    acceptance_rate: float

    def astuple(self):
        return tuple(getattr(self, k) for k in ROW_FIELDS)


@dataclass
class ReplicateOutput:
    index: int
    seed: int
    delta_final: float
    acceptance_rate: float
    rows: list
    delta_trace: np.ndarray = None
    trace: object = None


def _build_sampler_pieces(config):
    model = get_model(config.model, **config.model_params)
    sim_cutoff = get_cutoff(config.cutoff)
    corr_cutoff = get_cutoff(config.correction_cutoff) \
        if config.correction_cutoff else sim_cutoff
    return model, sim_cutoff, corr_cutoff


def _tau_for(fv, context):
    try:
        return iact(fv)
    except ConstantSeriesError:
        warnings.warn(
            f"constant estimand series in {context}; using tau = 1")
        return 1.0


def _nan_row(index, seed, delta_final, eps, est, fname, acc):
    return ResultRow(index, seed, delta_final, eps, est, fname,
                     math.nan, math.nan, math.nan, math.nan, math.nan,
                     0, acc)


def run_replicate(config, index, keep_trace=False):
    """Run one replicate chain and post-process it into result rows."""
    model, sim_cutoff, corr_cutoff = _build_sampler_pieces(config)
    seed = mix_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    capture_props = config.needs_proposals()
    capture_summ = config.needs_summaries()

    delta_trace = None
    if config.mode == "adaptive":
        theta0 = model.sample_prior(rng)
        schedule = StepSchedule(config.ta_step_exponent, config.ta_step_scale)
        ares = run_adaptive_burnin(
            model, sim_cutoff, config.n_burn, config.target_rate, schedule,
            theta0, rng=rng, bounds=(config.delta_min, config.delta_max))
        delta_trace = ares.delta_trace
        delta = ares.delta
        if config.adapt_cov:
            trace = run_chain(model, sim_cutoff, delta, ares.theta, 0,
                              config.n_keep, cov_adapter=ares.adapter,
                              rng=rng, capture_proposals=capture_props,
                              capture_summaries=capture_summ,
                              initial_distance=ares.final_distance)
        else:
            trace = run_chain(model, sim_cutoff, delta, ares.theta, 0,
                              config.n_keep,
                              proposal_covariance=ares.adapter.proposal_cov(),
                              rng=rng, capture_proposals=capture_props,
                              capture_summaries=capture_summ,
                              initial_distance=ares.final_distance)
    else:
        delta = config.delta
        theta0 = model.default_start()
        if config.adapt_cov:
            adapter = CovarianceAdapter(
                model.dim, StepSchedule(config.cov_step_exponent))
            adapter.set_start(theta0)
            trace = run_chain(model, sim_cutoff, delta, theta0,
                              config.n_burn, config.n_keep,
                              cov_adapter=adapter, rng=rng,
                              capture_proposals=capture_props,
                              capture_summaries=capture_summ)
        else:
            cov = (PROPOSAL_SCALE / model.dim) * np.eye(model.dim)
            trace = run_chain(model, sim_cutoff, delta, theta0,
                              config.n_burn, config.n_keep,
                              proposal_covariance=cov, rng=rng,
                              capture_proposals=capture_props,
                              capture_summaries=capture_summ)

    acc = trace.acceptance_rate
    # With a dedicated correction cut-off, the weights divide by the
    # simulation kernel; in the common case both kernels coincide.
    mixed_sim = sim_cutoff if corr_cutoff is not sim_cutoff else None
    fvals = {}
    taus = {}
    for fname in config.functions:
        fvals[fname] = np.asarray(
            resolve_estimand(model, fname)(trace.thetas), dtype=float)
        taus[fname] = max(_tau_for(fvals[fname],
                                   f"replicate {index} f={fname}"), 0.0)

    rows = []
    for eps in (config.eps_list() or []):
        if eps > delta * (1.0 + 1e-12):
            # Final tolerance fell below the requested one (adaptive runs);
            # flag and skip, mirroring the exclusion rule of the studies.
            for fname in config.functions:
                for est in config.estimators:
                    rows.append(_nan_row(index, seed, delta, eps, est,
                                         fname, acc))
            continue
        eps = min(eps, delta)
        try:
            wt = correction_weights(trace.distances, delta, eps,
                                    corr_cutoff, sim_cutoff=mixed_sim)
        except AllZeroWeightsError:
            for fname in config.functions:
                for est in config.estimators:
                    rows.append(_nan_row(index, seed, delta, eps, est,
                                         fname, acc))
            continue
        for fname in config.functions:
            fv = fvals[fname]
            tau = taus[fname]
            for est in config.estimators:
                if est == "post":
                    e = float(wt.w @ fv)
                    s = float(np.sum(wt.w**2 * (fv - e) ** 2))
                    lo, hi = confidence_interval(e, s, tau, config.z_quantile)
                    rows.append(ResultRow(index, seed, delta, eps, est, fname,
                                          e, s, tau, lo, hi,
                                          wt.support_count, acc))
                elif est == "regression":
                    try:
                        reg = regression_correct(
                            trace, resolve_estimand(model, fname), delta,
                            eps, corr_cutoff, config.z_quantile,
                            sim_cutoff=mixed_sim)
                        rows.append(ResultRow(
                            index, seed, delta, eps, est, fname, reg.a_hat,
                            reg.var_term, reg.iact_reg, reg.ci_low,
                            reg.ci_high, reg.support_count, acc))
                    except (SingularDesignError, CaptureDisabledError):
                        rows.append(_nan_row(index, seed, delta, eps, est,
                                             fname, acc))
                elif est == "waste":
                    e = waste_recycled_mean(
                        trace, resolve_estimand(model, fname), delta, eps,
                        corr_cutoff, sim_cutoff=mixed_sim)
                    rows.append(ResultRow(index, seed, delta, eps, est, fname,
                                          e, math.nan, math.nan, math.nan,
                                          math.nan, wt.support_count, acc))

    return ReplicateOutput(index=index, seed=seed, delta_final=delta,
                           acceptance_rate=acc, rows=rows,
                           delta_trace=delta_trace,
                           trace=trace if keep_trace else None)


def _replicate_task(args):
    config, index = args
    return run_replicate(config, index)


@dataclass
class StudyResult:
    outputs: list
    wall_time: float

    @property
    def rows(self):
        return [row for out in self.outputs for row in out.rows]


def run_study(config, resume_from=0, progress=None):
    """Run replicates [resume_from, R) on a bounded worker pool.

    Results are merged in replicate order, so the output is identical for
    any worker count.
    """
    config.validate()
    indices = list(range(resume_from, config.replications))
    t0 = time.monotonic()
    outputs = []
    if config.workers > 1 and len(indices) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for out in pool.map(_replicate_task,
                                [(config, i) for i in indices]):
                outputs.append(out)
                if progress:
                    progress(out)
    else:
        for i in indices:
            out = run_replicate(config, i)
            outputs.append(out)
            if progress:
                progress(out)
    return StudyResult(outputs=outputs, wall_time=time.monotonic() - t0)


def make_truth_fn(config, model=None, cutoff=None):
    """Ground-truth lookup (func, eps) -> float or nan.

    Exact per-eps entries `func@eps` in the config win, then constant
    per-func entries, then the model's oracle (the Gaussian toy knows its
    posterior means by quadrature).
    """
    if model is None:
        model = get_model(config.model, **config.model_params)
    if cutoff is None:
        cutoff = get_cutoff(config.correction_cutoff or config.cutoff)
    cache = {}

    def lookup(func, eps):
        key = (func, round(float(eps), 12))
        if key in cache:
            return cache[key]
        val = config.truth.get(f"{func}@{eps:g}")
        if val is None:
            val = config.truth.get(func)
        if val is None:
            val = model.oracle_truth(func, eps, cutoff)
        val = math.nan if val is None else float(val)
        cache[key] = val
        return val

    return lookup


def aggregate(rows, truth_fn):
    """Reduce result rows to per-(eps, estimator, func) study tables."""
    groups = {}
    for row in rows:
        groups.setdefault((row.epsilon, row.estimator, row.func),
                          []).append(row)
    tables = []
    for (eps, est, func), members in sorted(groups.items()):
        used = [r for r in members if math.isfinite(r.e)]
        n_excluded = len(members) - len(used)
        truth = truth_fn(func, eps)
        coverage = math.nan
        rmse = math.nan
        if used and math.isfinite(truth):
            est_vals = np.array([r.e for r in used])
            rmse = float(np.sqrt(np.mean((est_vals - truth) ** 2)))
            with_ci = [r for r in used if math.isfinite(r.ci_low)]
            if with_ci:
                hits = sum(1 for r in with_ci
                           if r.ci_low <= truth <= r.ci_high)
                coverage = hits / len(with_ci)
        mean_est = float(np.mean([r.e for r in used])) if used else math.nan
        mean_acc = float(np.mean([r.acceptance_rate for r in used])) \
            if used else math.nan
        tables.append({
            "epsilon": eps, "estimator": est, "func": func,
            "n_used": len(used), "n_excluded": n_excluded, "truth": truth,
            "coverage": coverage, "rmse": rmse, "mean_estimate": mean_est,
            "mean_acceptance": mean_acc,
        })
    return tables


def sweep_table(trace, model, config):
    """All-tolerances estimate table for one chain (simple cut-off)."""
    out = []
    for fname in config.functions:
        f = resolve_estimand(model, fname)
        fv = np.asarray(f(trace.thetas), dtype=float)
        tau = max(_tau_for(fv, f"sweep f={fname}"), 0.0)
        curve = tolerance_sweep(trace, f)
        for eps, e, s, m in zip(curve.epsilons, curve.means,
                                curve.var_terms, curve.counts):
            lo, hi = confidence_interval(float(e), float(s), tau,
                                         config.z_quantile)
            out.append({"func": fname, "epsilon": float(eps),
                        "support_count": int(m), "e": float(e),
                        "s": float(s), "tau": tau,
                        "ci_low": lo, "ci_high": hi})
    return out


# Config file handling ------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(text):
    text = text.strip()
    low = text.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    parts = text.split()
    if len(parts) > 1:
        try:
            return [float(p) for p in parts]
        except ValueError:
            pass
    return text


def load_config(path):
    """Read a RunConfig from an INI-style key = value file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path}")
    cfg = RunConfig()
    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key == "model":
            cfg.model = run[key].strip()
        elif key == "cutoff":
            cfg.cutoff = run[key].strip()
        elif key == "correction_cutoff":
            cfg.correction_cutoff = run[key].strip()
        elif key == "mode":
            cfg.mode = run[key].strip()
        elif key == "delta":
            cfg.delta = float(run[key])
        elif key == "n_burn":
            cfg.n_burn = int(run[key])
        elif key == "n_keep":
            cfg.n_keep = int(run[key])
        elif key == "epsilons":
            text = run[key].strip()
            cfg.epsilons = "sweep" if text == "sweep" \
                else [float(p) for p in text.split()]
        elif key == "functions":
            cfg.functions = tuple(run[key].split())
        elif key == "estimators":
            cfg.estimators = tuple(run[key].split())
        elif key == "z_quantile":
            cfg.z_quantile = float(run[key])
        elif key == "capture_proposals":
            cfg.capture_proposals = _coerce(run[key]) is True
        elif key == "capture_summaries":
            cfg.capture_summaries = _coerce(run[key]) is True
        elif key == "seed":
            cfg.seed = int(run[key])
        elif key == "replications":
            cfg.replications = int(run[key])
        elif key == "workers":
            cfg.workers = int(run[key])
        elif key == "adapt_cov":
            cfg.adapt_cov = _coerce(run[key]) is True
        elif key == "cov_step_exponent":
            cfg.cov_step_exponent = float(run[key])
        else:
            raise ValueError(f"unknown [run] key {key!r}")
    if parser.has_section("adaptive"):
        ad = parser["adaptive"]
        for key in ad:
            if key == "target_rate":
                cfg.target_rate = float(ad[key])
            elif key == "step_exponent":
                cfg.ta_step_exponent = float(ad[key])
            elif key == "step_scale":
                cfg.ta_step_scale = float(ad[key])
            elif key == "delta_min":
                cfg.delta_min = float(ad[key])
            elif key == "delta_max":
                cfg.delta_max = float(ad[key])
            else:
                raise ValueError(f"unknown [adaptive] key {key!r}")
    if parser.has_section("model"):
        cfg.model_params = {k: _coerce(v)
                            for k, v in parser["model"].items()}
    if parser.has_section("truth"):
        cfg.truth = {k: float(v) for k, v in parser["truth"].items()}
    return cfg


def config_as_dict(config):
    d = asdict(config)
    d["version"] = __version__
    return d
