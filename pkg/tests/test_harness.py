import math

import numpy as np
import pytest

from abcpost.harness import (RunConfig, aggregate, load_config, make_truth_fn,
                             mix_seed, resolve_estimand, run_replicate,
                             run_study)
from abcpost.models import GaussianToy


def small_config(**overrides):
    base = dict(model="gaussian", cutoff="simple", mode="fixed", delta=3.0,
                n_burn=50, n_keep=400, epsilons=[1.0, 3.0],
                functions=("x",), estimators=("post",), seed=99,
                replications=4, workers=1)
    base.update(overrides)
    return RunConfig(**base)


# seed mixing -----------------------------------------------------------------

def test_mix_seed_no_collisions_in_a_million():
    seen = {mix_seed(12345, i) for i in range(1_000_000)}
    assert len(seen) == 1_000_000


def test_mix_seed_depends_on_base_and_index():
    assert mix_seed(1, 0) != mix_seed(2, 0)
    assert mix_seed(1, 0) != mix_seed(1, 1)
    assert mix_seed(1, 5) == mix_seed(1, 5)
    assert 0 <= mix_seed(2**63, 2**40) < 2**64


# config validation -----------------------------------------------------------

def test_validate_rejects_eps_above_delta():
    with pytest.raises(ValueError):
        small_config(epsilons=[0.5, 3.5]).validate()


def test_validate_rejects_bad_counts():
    with pytest.raises(ValueError):
        small_config(n_keep=0).validate()
    with pytest.raises(ValueError):
        small_config(replications=0).validate()


def test_validate_rejects_unknown_estimator():
    with pytest.raises(ValueError):
        small_config(estimators=("post", "jackknife")).validate()


def test_validate_rejects_unknown_function():
    with pytest.raises(ValueError):
        small_config(functions=("x", "entropy")).validate()


def test_validate_adaptive_needs_eps_list():
    with pytest.raises(ValueError):
        small_config(mode="adaptive", epsilons="sweep", n_burn=10).validate()


def test_validate_sweep_requires_simple():
    with pytest.raises(ValueError):
        small_config(cutoff="gaussian", epsilons="sweep").validate()
    small_config(epsilons="sweep").validate()


def test_validate_adaptive_bounds():
    with pytest.raises(ValueError):
        small_config(mode="adaptive", delta_min=2.0, delta_max=1.0).validate()
    with pytest.raises(ValueError):
        small_config(mode="adaptive", target_rate=1.5).validate()


# estimand resolution ----------------------------------------------------------

def test_resolve_generic_components():
    m = GaussianToy()
    th = np.array([[1.0], [-2.0]])
    assert resolve_estimand(m, "c0")(th)[1] == -2.0
    assert resolve_estimand(m, "abs_c0")(th)[1] == 2.0
    with pytest.raises(ValueError):
        resolve_estimand(m, "c3")
    with pytest.raises(ValueError):
        resolve_estimand(m, "skewness")


def test_model_estimands_win_over_generic():
    m = GaussianToy()
    th = np.array([[-1.5]])
    assert resolve_estimand(m, "abs_x")(th)[0] == 1.5


# replication -------------------------------------------------------------------

def test_run_replicate_row_schema():
    out = run_replicate(small_config(), 0)
    assert len(out.rows) == 2  # one per eps
    row = out.rows[0]
    assert row.replicate == 0
    assert row.seed == mix_seed(99, 0)
    assert row.epsilon == 1.0
    assert row.estimator == "post" and row.func == "x"
    assert math.isfinite(row.e)
    assert row.ci_low <= row.e <= row.ci_high
    assert 0 < row.support_count <= 400


def test_replicates_differ_and_are_reproducible():
    cfg = small_config()
    a0 = run_replicate(cfg, 0)
    a1 = run_replicate(cfg, 1)
    b0 = run_replicate(cfg, 0)
    assert a0.rows[0].e != a1.rows[0].e
    assert a0.rows[0].e == b0.rows[0].e


def test_serial_equals_parallel():
    cfg_serial = small_config(replications=6, workers=1)
    cfg_parallel = small_config(replications=6, workers=2)
    rows_s = [r.astuple() for r in run_study(cfg_serial).rows]
    rows_p = [r.astuple() for r in run_study(cfg_parallel).rows]
    assert rows_s == rows_p


def test_run_study_resume_skips_prefix():
    cfg = small_config(replications=5)
    full = run_study(cfg)
    tail = run_study(cfg, resume_from=3)
    assert [o.index for o in tail.outputs] == [3, 4]
    full_tail = [r.astuple() for o in full.outputs[3:] for r in o.rows]
    resumed = [r.astuple() for o in tail.outputs for r in o.rows]
    assert full_tail == resumed


def test_adaptive_replicate_emits_delta_trace():
    cfg = small_config(mode="adaptive", n_burn=100, n_keep=200,
                       epsilons=[0.5], delta=math.nan)
    out = run_replicate(cfg, 0)
    assert out.delta_trace.shape == (100,)
    assert out.delta_final == pytest.approx(out.delta_trace[-1])


def test_waste_and_regression_rows():
    cfg = small_config(cutoff="gaussian", delta=2.0, epsilons=[1.0],
                       estimators=("post", "regression", "waste"),
                       n_keep=600)
    out = run_replicate(cfg, 0)
    kinds = {(r.estimator, math.isfinite(r.e)) for r in out.rows}
    assert ("post", True) in kinds
    assert ("regression", True) in kinds
    assert ("waste", True) in kinds
    waste_row = next(r for r in out.rows if r.estimator == "waste")
    assert math.isnan(waste_row.ci_low)


# aggregation --------------------------------------------------------------------

def test_aggregate_coverage_and_rmse():
    cfg = small_config(replications=8, functions=("x",))
    result = run_study(cfg)
    truth_fn = make_truth_fn(cfg)
    tables = aggregate(result.rows, truth_fn)
    cell = next(t for t in tables if t["epsilon"] == 1.0)
    assert cell["truth"] == 0.0
    assert 0.0 <= cell["coverage"] <= 1.0
    assert cell["rmse"] > 0
    assert cell["n_used"] == 8 and cell["n_excluded"] == 0
    direct_rmse = math.sqrt(np.mean(
        [r.e**2 for r in result.rows if r.epsilon == 1.0]))
    assert cell["rmse"] == pytest.approx(direct_rmse, rel=1e-12)


def test_aggregate_is_pure_function_of_rows():
    cfg = small_config(replications=5)
    rows = run_study(cfg).rows
    t1 = aggregate(rows, make_truth_fn(cfg))
    t2 = aggregate(list(rows), make_truth_fn(cfg))
    assert t1 == t2


def test_aggregate_counts_excluded_rows():
    cfg = small_config()
    rows = run_study(cfg).rows
    rows[0].e = math.nan
    tables = aggregate(rows, make_truth_fn(cfg))
    cell = next(t for t in tables if t["epsilon"] == rows[0].epsilon)
    assert cell["n_excluded"] == 1


def test_truth_lookup_precedence():
    cfg = small_config(functions=("x", "abs_x"),
                       truth={"x": 0.25, "abs_x@1": 0.5})
    fn = make_truth_fn(cfg)
    assert fn("x", 1.0) == 0.25          # constant entry wins
    assert fn("abs_x", 1.0) == 0.5       # per-eps entry wins
    oracle_val = fn("abs_x", 3.0)        # falls back to the quadrature oracle
    assert 1.0 < oracle_val < 3.0


def test_truth_lookup_unknown_is_nan():
    cfg = RunConfig(model="lotka_volterra", mode="fixed", delta=200.0,
                    epsilons=[200.0], functions=("theta1",))
    fn = make_truth_fn(cfg)
    assert math.isnan(fn("theta1", 200.0))


# config files --------------------------------------------------------------------

def test_load_config_roundtrip(tmp_path):
    text = """
[run]
model = gaussian
cutoff = simple
mode = fixed
delta = 3.0
n_burn = 100
n_keep = 1000
epsilons = 0.1 1.55 3.0
functions = x abs_x
estimators = post waste
seed = 7
replications = 12
workers = 2
adapt_cov = true
cov_step_exponent = 1.0

[adaptive]
target_rate = 0.1
step_exponent = 0.6666666666666667
delta_min = 1e-6
delta_max = 1e6

[model]
prior_sd = 30
obs_sd = 1

[truth]
x = 0.0
abs_x@0.1 = 0.7987685904
"""
    path = tmp_path / "study.ini"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.model == "gaussian"
    assert cfg.delta == 3.0
    assert cfg.epsilons == [0.1, 1.55, 3.0]
    assert cfg.functions == ("x", "abs_x")
    assert cfg.estimators == ("post", "waste")
    assert cfg.replications == 12
    assert cfg.delta_min == 1e-6
    assert cfg.model_params == {"prior_sd": 30, "obs_sd": 1}
    assert cfg.truth["abs_x@0.1"] == pytest.approx(0.7987685904)
    cfg.validate()


def test_load_config_sweep_and_unknown_key(tmp_path):
    path = tmp_path / "a.ini"
    path.write_text("[run]\nepsilons = sweep\ndelta = 2.0\n")
    assert load_config(path).epsilons == "sweep"
    bad = tmp_path / "b.ini"
    bad.write_text("[run]\nmodle = gaussian\n")
    with pytest.raises(ValueError):
        load_config(bad)
    with pytest.raises(ValueError):
        load_config(tmp_path / "missing.ini")
