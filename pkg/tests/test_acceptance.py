"""Acceptance suite: one test per criterion, printed as one line each.

These run the studies at the reduced desk scale (hundreds of replicates
instead of the published ten thousand) and take several minutes total; the
statistical bands account for the extra Monte Carlo noise.
"""

import math

import numpy as np
import pytest
from scipy import signal

from abcpost import (SIMPLE, GaussianToy, LotkaVolterraModel,
                     corrected_mean, corrected_var_term, correction_weights,
                     estimate, gaussian_posterior_oracle, iact,
                     regression_correct, run_chain, tolerance_sweep)
from abcpost.adapt import CovarianceAdapter, StepSchedule
from abcpost.harness import (RunConfig, aggregate, make_truth_fn,
                             run_replicate, run_study)

from conftest import absval, ident, make_trace

WORKERS = 2


def check(name, passed, detail):
    print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}", flush=True)
    assert passed, f"{name}: {detail}"


def gaussian_study(delta, epsilons, functions=("x",), reps=500, seed=20_250_811,
                   n_burn=1000, n_keep=10_000, mode="fixed", **kw):
    return RunConfig(model="gaussian", cutoff="simple", mode=mode,
                     delta=delta, n_burn=n_burn, n_keep=n_keep,
                     epsilons=list(epsilons), functions=functions,
                     estimators=("post",), seed=seed, replications=reps,
                     workers=WORKERS, **kw)


def test_a1_ci_coverage_gaussian():
    cfg = gaussian_study(3.0, [0.1, 1.55, 3.0], reps=500)
    result = run_study(cfg)
    tables = aggregate(result.rows, make_truth_fn(cfg))
    cov = {t["epsilon"]: t["coverage"] for t in tables}
    ok = all(0.90 <= cov[e] <= 1.00 for e in (0.1, 1.55, 3.0)) \
        and 0.92 <= cov[3.0] <= 0.98
    check("A1 CI coverage (Gaussian, delta=3)", ok,
          f"coverage eps 0.1/1.55/3.0 = {cov[0.1]:.3f}/{cov[1.55]:.3f}/"
          f"{cov[3.0]:.3f} (bands [0.90,1.00], eps=3 [0.92,0.98])")


def test_a2_post_correction_rmse_vs_direct():
    cfg_post = gaussian_study(0.825, [0.1], reps=500, seed=90_001)
    cfg_direct = gaussian_study(0.1, [0.1], reps=500, seed=90_002)
    rows_post = run_study(cfg_post).rows
    rows_direct = run_study(cfg_direct).rows
    rmse_post = math.sqrt(np.mean([r.e**2 for r in rows_post]))
    rmse_direct = math.sqrt(np.mean([r.e**2 for r in rows_direct]))
    ok = rmse_post <= 1.15 * rmse_direct
    check("A2 post-correction RMSE vs direct chain", ok,
          f"rmse(delta=0.825 -> eps=0.1) = {rmse_post:.4f} vs "
          f"rmse(delta=0.1) = {rmse_direct:.4f}, ratio "
          f"{rmse_post / rmse_direct:.3f} <= 1.15")


def test_a3_quadrature_oracle_consistency():
    truth = gaussian_posterior_oracle("abs", 0.5, SIMPLE)
    cfg = gaussian_study(3.0, [0.5], functions=("abs_x",), reps=100,
                         seed=90_003, n_burn=1000, n_keep=200_000)
    rows = run_study(cfg).rows
    hits = sum(1 for r in rows
               if abs(r.e - truth) <= 4.0 * math.sqrt(r.s * r.tau))
    ok = hits >= 95
    check("A3 quadrature-oracle consistency", ok,
          f"{hits}/100 runs within 4 standard errors of truth {truth:.6f}")


def test_a3b_consistency_invariant_eps1():
    # Companion invariant at eps = 1 from shorter chains, tighter hit rate.
    truth = gaussian_posterior_oracle("abs", 1.0, SIMPLE)
    cfg = gaussian_study(3.0, [1.0], functions=("abs_x",), reps=100,
                         seed=90_004, n_burn=1000, n_keep=100_000)
    rows = run_study(cfg).rows
    hits = sum(1 for r in rows
               if abs(r.e - truth) <= 4.0 * math.sqrt(r.s * r.tau))
    ok = hits >= 99
    check("A3b consistency at eps=1", ok,
          f"{hits}/100 runs within 4 standard errors of truth {truth:.6f}")


def test_a4_sweep_matches_direct_definition():
    rng = np.random.default_rng(90_005)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 1001))
        thetas = rng.standard_normal(n)
        if rng.random() < 0.25:
            distances = rng.choice([0.2, 0.5, 1.0, 1.5], size=n)
        else:
            distances = rng.uniform(0.001, 2.0, n)
        delta = float(distances.max())
        tr = (thetas, distances)
        curve = tolerance_sweep(tr, ident, delta)
        for eps, e, s in zip(curve.epsilons, curve.means, curve.var_terms):
            de = corrected_mean(tr, ident, delta, eps, SIMPLE)
            ds = corrected_var_term(tr, ident, delta, eps, SIMPLE)
            worst = max(worst, abs(e - de), abs(s - ds))
    ok = worst <= 1e-10
    check("A4 sweep equals direct evaluation", ok,
          f"max abs diff {worst:.2e} <= 1e-10 over 200 random traces")


def test_a5_iact_sanity():
    rng = np.random.default_rng(90_006)
    tau_iid = iact(rng.standard_normal(100_000))
    noise = rng.standard_normal(1_000_000)
    ar1 = signal.lfilter([1.0], [1.0, -0.5], noise)
    tau_ar1 = iact(ar1)
    ok = 0.9 <= tau_iid <= 1.1 and 2.7 <= tau_ar1 <= 3.3
    check("A5 autocorrelation-time sanity", ok,
          f"iid tau = {tau_iid:.3f} in [0.9,1.1]; AR(1) tau = {tau_ar1:.3f} "
          f"in [2.7,3.3] (analytic 3)")


def test_a6_adaptive_acceptance_rate():
    cfg = gaussian_study(math.nan, [0.1], reps=100, seed=90_007,
                         mode="adaptive", n_burn=1000, n_keep=10_000)
    result = run_study(cfg)
    rates = [out.acceptance_rate for out in result.outputs]
    mean_rate = float(np.mean(rates))
    ok = 0.10 <= mean_rate <= 0.25 and mean_rate <= 2.2 * 0.1
    check("A6 adaptive acceptance rate", ok,
          f"mean realized acceptance {mean_rate:.3f} in [0.10, 0.25] "
          f"(and within [target, 2.2 x target])")


def test_a7_fixed_tolerance_acceptance_cells():
    m = GaussianToy()
    cells = [(0.1, 0.03), (0.825, 0.22), (1.55, 0.33), (2.275, 0.40),
             (3.0, 0.43)]
    got = {}
    ok = True
    for delta, want in cells:
        adapter = CovarianceAdapter(1, StepSchedule(1.0))
        adapter.set_start(m.default_start())
        trace = run_chain(m, SIMPLE, delta, m.default_start(), 0, 100_000,
                          cov_adapter=adapter, seed=90_008)
        got[delta] = trace.acceptance_rate
        ok = ok and abs(got[delta] - want) <= 0.03
    detail = ", ".join(f"delta={d}: {got[d]:.3f} (want {w}±0.03)"
                       for d, w in cells)
    check("A7 acceptance-rate cells", ok, detail)


@pytest.fixture(scope="module")
def lv_chain():
    lv = LotkaVolterraModel()
    adapter = CovarianceAdapter(3, StepSchedule(1.0))
    adapter.set_start(lv.default_start())
    return lv, run_chain(lv, SIMPLE, 200.0, lv.default_start(),
                         10_000, 10_000, cov_adapter=adapter, seed=90_009,
                         capture_summaries=True)


def test_a8a_lotka_volterra_chain_completes(lv_chain):
    _, trace = lv_chain
    rate = trace.acceptance_rate
    ok = len(trace) == 10_000 and 0.10 <= rate <= 0.25
    check("A8a LV 20k-iteration chain", ok,
          f"kept 10000 samples after 10000 burn-in, acceptance "
          f"{rate:.3f} in [0.10, 0.25]")


def test_a8b_lotka_volterra_regression_estimates(lv_chain):
    lv, trace = lv_chain
    ok = True
    details = []
    support80 = correction_weights(trace.distances, 200.0, 80.0,
                                   SIMPLE).support_count
    ok = ok and support80 > 50
    for eps in (80.0, 140.0, 200.0):
        for name, f in sorted(lv.estimands().items()):
            reg = regression_correct(trace, f, 200.0, eps, SIMPLE)
            ok = ok and math.isfinite(reg.a_hat) \
                and math.isfinite(reg.ci_low) and math.isfinite(reg.ci_high)
            if eps == 80.0:
                details.append(f"{name}@80={reg.a_hat:.4f}")
    check("A8b LV regression correction", ok,
          f"support at eps=80: {support80} (> 50); finite estimates at "
          f"eps 80/140/200; " + ", ".join(details))


def test_a8c_lotka_volterra_mini_coverage():
    lv = LotkaVolterraModel()
    adapter = CovarianceAdapter(3, StepSchedule(1.0))
    adapter.set_start(lv.default_start())
    reference = run_chain(lv, SIMPLE, 200.0, lv.default_start(),
                          5_000, 100_000, cov_adapter=adapter, seed=777)
    f1 = lv.estimands()["theta1"]
    truth = estimate(reference, f1, 200.0).mean_e

    cfg = RunConfig(model="lotka_volterra", cutoff="simple", mode="fixed",
                    delta=200.0, n_burn=10_000, n_keep=10_000,
                    epsilons=[200.0], functions=("theta1",),
                    estimators=("post",), seed=90_010, replications=50,
                    workers=WORKERS)
    rows = run_study(cfg).rows
    hits = sum(1 for r in rows if r.ci_low <= truth <= r.ci_high)
    coverage = hits / len(rows)
    ok = 0.85 <= coverage <= 1.00
    check("A8c LV mini-study CI coverage", ok,
          f"coverage {coverage:.2f} in [0.85, 1.00] against reference "
          f"theta1 = {truth:.4f} (50 replicates)")


def test_a9_property_suite():
    rng = np.random.default_rng(90_011)
    msgs = []

    # weight normalization
    worst = 0.0
    for _ in range(100):
        t = rng.uniform(0, 3, int(rng.integers(1, 200)))
        wt = correction_weights(t, 3.0, float(rng.uniform(0.5, 3.0)), SIMPLE) \
            if np.any(t <= 0.5) else None
        if wt is not None:
            worst = max(worst, abs(wt.w.sum() - 1.0))
    ok_norm = worst <= 1e-12
    msgs.append(f"weight normalization worst |sum-1| = {worst:.1e}")

    # eps = delta identities
    thetas = rng.standard_normal(500)
    distances = rng.uniform(0, 2.9, 500)
    tr = (thetas, distances)
    e = corrected_mean(tr, ident, 3.0, 3.0, SIMPLE)
    s = corrected_var_term(tr, ident, 3.0, 3.0, SIMPLE)
    ok_ident = (abs(e - thetas.mean()) <= 1e-12
                and abs(s - np.sum((thetas - thetas.mean())**2) / 500**2)
                <= 1e-15)
    msgs.append("eps=delta identity exact")

    # support monotonicity (simple cut-off)
    counts = [correction_weights(distances, 3.0, eps, SIMPLE).support_count
              for eps in np.linspace(0.1, 3.0, 20)]
    ok_mono = bool(np.all(np.diff(counts) >= 0))
    msgs.append("support counts monotone")

    # determinism: serial == parallel
    cfg = gaussian_study(3.0, [1.0, 3.0], reps=6, seed=90_012,
                         n_burn=50, n_keep=400)
    cfg.workers = 1
    rows_s = [r.astuple() for r in run_study(cfg).rows]
    cfg.workers = 2
    rows_p = [r.astuple() for r in run_study(cfg).rows]
    ok_det = rows_s == rows_p
    msgs.append("serial == parallel rows")

    # WLS exact-fit reduction
    summ = rng.standard_normal((300, 1))
    tr2 = make_trace(rng.standard_normal(300), rng.uniform(0.05, 1.9, 300),
                     2.0, SIMPLE, summaries=summ)
    reg = regression_correct(tr2, lambda th: 2.0 + 3.0 * summ[:, 0],
                             2.0, 1.0, SIMPLE)
    ok_wls = (abs(reg.a_hat - 2.0) <= 1e-9 and abs(reg.b_hat[0] - 3.0) <= 1e-9
              and reg.var_term <= 1e-18)
    msgs.append("WLS exact fit recovered")

    ok = ok_norm and ok_ident and ok_mono and ok_det and ok_wls
    check("A9 property suite", ok, "; ".join(msgs))
