"""Post-correction of a chain run at tolerance delta to finer tolerances.

Given retained states (theta_k, T_k), each finer tolerance eps <= delta gets
self-normalized weights

    U_k = phi(T_k / eps) / phi(T_k / delta),      W_k = U_k / sum_j U_j,

a corrected mean E = sum W_k f(theta_k), a variance term
S = sum W_k^2 (f(theta_k) - E)^2, and the confidence interval
E +/- z * sqrt(S * tau), where tau is the integrated autocorrelation time of
the raw f-series (one shared estimate for all eps).  For the hard-threshold
cut-off the whole curve over all achievable eps comes out of one sort.
Regression adjustment and waste recycling refine the basic estimator.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

__all__ = [
    "AllZeroWeightsError",
    "ConstantSeriesError",
    "SingularDesignError",
    "CaptureDisabledError",
    "WeightedTrace",
    "PostEstimate",
    "ToleranceCurve",
    "RegressionEstimate",
    "correction_weights",
    "corrected_mean",
    "corrected_var_term",
    "tolerance_sweep",
    "iact",
    "confidence_interval",
    "estimate",
    "regression_correct",
    "waste_recycled_mean",
    "Z_95",
]

# Default normal quantile for 95% intervals.
Z_95 = 1.959964

IACT_WINDOW_CAP = 10_000
SINGULAR_RTOL = 1e-10


class AllZeroWeightsError(ValueError):
    """Every correction weight vanished: eps is below all achieved distances."""


class ConstantSeriesError(ValueError):
    """Autocorrelation of a constant series is undefined."""


class SingularDesignError(ValueError):
    """Weighted regression design is singular (collinear summaries or too
    few support points)."""


class CaptureDisabledError(ValueError):
    """The trace lacks records that were not captured during the run."""


@dataclass
class WeightedTrace:
    """Unnormalized and normalized correction weights for one eps."""

    u: np.ndarray
    w: np.ndarray
    epsilon: float
    delta: float
    support_count: int


@dataclass
class PostEstimate:
    """Corrected mean with its variance term and confidence interval."""

    epsilon: float
    mean_e: float
    var_term_s: float
    iact: float
    ci_low: float
    ci_high: float
    support_count: int


@dataclass
class ToleranceCurve:
    """Corrected means/variance terms at every achievable eps (one sort).

    The grid is the sorted unique distances; between grid points the curve is
    a right-continuous step (the value at the largest grid point <= eps).
    """

    epsilons: np.ndarray
    means: np.ndarray
    var_terms: np.ndarray
    counts: np.ndarray

    def value_at(self, eps):
        """(mean, var_term, count) at tolerance eps."""
        i = int(np.searchsorted(self.epsilons, eps, side="right")) - 1
        if i < 0:
            raise AllZeroWeightsError(
                f"no samples with distance <= {eps}")
        return float(self.means[i]), float(self.var_terms[i]), int(self.counts[i])


@dataclass
class RegressionEstimate:
    """Weighted-least-squares adjusted estimate and its interval."""

    a_hat: float
    b_hat: np.ndarray
    var_term: float
    iact_reg: float
    ci_low: float
    ci_high: float
    epsilon: float = math.nan
    support_count: int = 0


def _trace_arrays(trace):
    if hasattr(trace, "thetas"):
        return trace.thetas, trace.distances
    thetas, distances = trace
    return np.asarray(thetas, dtype=float), np.asarray(distances, dtype=float)


def _apply_f(f, thetas):
    out = np.asarray(f(thetas), dtype=float)
    if out.shape != (thetas.shape[0],):
        raise ValueError("f must map the (n, d) sample array to n values")
    return out


def _log_weights(distances, delta, epsilon, cutoff, sim_cutoff):
    if not 0.0 < epsilon <= delta:
        raise ValueError("requires 0 < eps <= delta")
    distances = np.asarray(distances, dtype=float)
    sim = cutoff if sim_cutoff is None else sim_cutoff
    log_den = np.asarray(sim.log(distances / delta), dtype=float)
    if np.any(log_den == -np.inf):
        raise ValueError(
            "trace contains a state with zero kernel weight at delta; "
            "not a valid sampler output")
    log_num = np.asarray(cutoff.log(distances / epsilon), dtype=float)
    return log_num - log_den


def correction_weights(distances, delta, epsilon, cutoff, sim_cutoff=None):
    """Correction weights U_k = phi(T_k/eps) / phi_s(T_k/delta), normalized.

    `sim_cutoff` lets the simulation phase use a different cut-off than the
    correction; by default both use `cutoff`.  The normalized weights are
    formed on log scale, so they stay usable even when every unnormalized
    weight underflows.  Raises AllZeroWeightsError when no sample has
    positive weight at eps.
    """
    log_u = _log_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    finite = log_u > -np.inf
    support = int(np.count_nonzero(finite))
    if support == 0:
        raise AllZeroWeightsError(
            f"no sample has positive kernel weight at eps={epsilon}")
    shifted = np.exp(log_u - log_u[finite].max())
    w = shifted / shifted.sum()
    with np.errstate(over="ignore"):
        u = np.exp(log_u)
    return WeightedTrace(u=u, w=w, epsilon=float(epsilon), delta=float(delta),
                         support_count=support)


def corrected_mean(trace, f, delta, epsilon, cutoff, sim_cutoff=None):
    """Self-normalized corrected mean sum_k W_k f(theta_k) at tolerance eps."""
    thetas, distances = _trace_arrays(trace)
    wt = correction_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    return float(wt.w @ _apply_f(f, thetas))


def corrected_var_term(trace, f, delta, epsilon, cutoff, sim_cutoff=None):
    """Variance term sum_k W_k^2 (f(theta_k) - E)^2 at tolerance eps."""
    thetas, distances = _trace_arrays(trace)
    wt = correction_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    fv = _apply_f(f, thetas)
    e = float(wt.w @ fv)
    return float(np.sum(wt.w**2 * (fv - e) ** 2))


def tolerance_sweep(trace, f, delta=None):
    """Corrected mean and variance term at every achievable eps at once.

    Valid for hard-threshold post-correction, where the weights at eps reduce
    to the indicator T_k <= eps: after sorting by distance, cumulative sums
    give every grid value in O(n log n) total.
    """
    thetas, distances = _trace_arrays(trace)
    n = distances.shape[0]
    if n == 0:
        raise ValueError("cannot sweep an empty trace")
    if np.any(~np.isfinite(distances)):
        raise ValueError("trace contains non-finite distances")
    fv = _apply_f(f, thetas)
    order = np.argsort(distances, kind="stable")
    ds = distances[order]
    fs = fv[order]
    cs1 = np.cumsum(fs)
    cs2 = np.cumsum(fs * fs)
    last = np.empty(n, dtype=bool)
    last[:-1] = ds[1:] != ds[:-1]
    last[-1] = True
    idx = np.nonzero(last)[0]
    m = (idx + 1).astype(np.int64)
    e = cs1[idx] / m
    s = np.maximum(cs2[idx] - m * e * e, 0.0) / (m.astype(float) ** 2)
    return ToleranceCurve(epsilons=ds[idx].copy(), means=e, var_terms=s,
                          counts=m)


def _autocorrelations(x, max_lag):
    x = x - x.mean()
    n = x.shape[0]
    nfft = _fft.next_fast_len(2 * n)
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    if acov[0] <= 0.0:
        raise ConstantSeriesError("series has zero variance")
    return acov / acov[0]


def iact(series):
    """Integrated autocorrelation time with the self-consistent window.

    tau_hat = 1 + 2 sum_{k=1}^{M} rho_hat_k, with rho_hat the biased sample
    autocorrelation (lag sums divided by n) and M the smallest integer with
    M >= 5 * tau_hat(M), capped at min(n - 1, 10^4).  Raises
    ConstantSeriesError on a zero-variance series (callers decide the
    fallback); the raw value can fall below 1 for antithetic series.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("need a 1-D series of length >= 2")
    cap = min(x.shape[0] - 1, IACT_WINDOW_CAP)
    rho = _autocorrelations(x, cap)
    tau_at = 1.0 + 2.0 * np.cumsum(rho[1:])
    windows = np.arange(1, cap + 1, dtype=float)
    hits = np.nonzero(windows >= 5.0 * tau_at)[0]
    pick = int(hits[0]) if hits.size else cap - 1
    return float(tau_at[pick])


def confidence_interval(mean_e, var_term_s, iact_tau, quantile_z):
    """Interval mean_e -/+ quantile_z * sqrt(var_term_s * iact_tau)."""
    if var_term_s < 0 or iact_tau < 0:
        raise ValueError("variance term and autocorrelation must be >= 0")
    half = quantile_z * math.sqrt(var_term_s * iact_tau)
    return mean_e - half, mean_e + half


def estimate(trace, f, epsilon, delta=None, cutoff=None, quantile_z=Z_95,
             tau=None, sim_cutoff=None):
    """Corrected mean, variance term and confidence interval at one eps.

    `tau` may pass in a precomputed autocorrelation time of the f-series
    (the same estimate serves every eps of the same trace); negative raw
    values are floored at zero for the interval.
    """
    thetas, distances = _trace_arrays(trace)
    if delta is None:
        delta = trace.delta
    if cutoff is None:
        cutoff = trace.cutoff
    fv = _apply_f(f, thetas)
    wt = correction_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    e = float(wt.w @ fv)
    s = float(np.sum(wt.w**2 * (fv - e) ** 2))
    if tau is None:
        tau = iact(fv)
    tau = max(float(tau), 0.0)
    lo, hi = confidence_interval(e, s, tau, quantile_z)
    return PostEstimate(epsilon=float(epsilon), mean_e=e, var_term_s=s,
                        iact=tau, ci_low=lo, ci_high=hi,
                        support_count=wt.support_count)


def _wls(design, values, weights):
    """Solve min sum w_k (v_k - M_k beta)^2 via SVD of sqrt(w) M.

    Returns (beta, gram_inv_11), with gram_inv_11 the (1, 1) entry of
    (M^T W M)^{-1}.  Raises SingularDesignError when the scaled design is
    rank-deficient beyond SINGULAR_RTOL.
    """
    sw = np.sqrt(weights)
    a = design * sw[:, None]
    b = values * sw
    u_mat, sing, vt = np.linalg.svd(a, full_matrices=False)
    if sing[0] == 0.0 or sing[-1] < SINGULAR_RTOL * sing[0]:
        raise SingularDesignError(
            "weighted design is singular: collinear summaries or too few "
            "support points")
    beta = vt.T @ ((u_mat.T @ b) / sing)
    gram_inv_11 = float(np.sum((vt[:, 0] / sing) ** 2))
    return beta, gram_inv_11


def regression_correct(trace, f, delta, epsilon, cutoff, quantile_z=Z_95,
                       sim_cutoff=None):
    """Linear regression adjustment on the centered summaries.

    Fits f(theta_k) ~ a + summaries_k . b by least squares weighted with the
    correction weights at eps; the intercept a_hat estimates the adjusted
    posterior mean.  Its variance term multiplies the weighted residual
    spread by the (1, 1) entry of the inverse weighted Gram matrix, and the
    autocorrelation time comes from the residual series of the fit at
    eps = delta.
    """
    thetas, distances = _trace_arrays(trace)
    summaries = getattr(trace, "summaries", None)
    if summaries is None:
        raise CaptureDisabledError(
            "regression correction needs captured summaries")
    summaries = np.asarray(summaries, dtype=float)
    if np.any(~np.isfinite(summaries)):
        raise CaptureDisabledError("summaries contain non-finite entries")
    n, d = summaries.shape

    wt = correction_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    if wt.support_count < d + 2:
        raise SingularDesignError(
            f"only {wt.support_count} samples carry weight at eps={epsilon}; "
            f"need at least {d + 2}")
    fv = _apply_f(f, thetas)
    design = np.hstack([np.ones((n, 1)), summaries])

    beta, gram_inv_11 = _wls(design, fv, wt.w)
    a_hat = float(beta[0])
    b_hat = beta[1:]
    resid = fv - summaries @ b_hat
    var_term = gram_inv_11 * float(np.sum(wt.w**2 * (resid - a_hat) ** 2))

    if epsilon == delta:
        beta_delta = beta
    else:
        w_delta = np.full(n, 1.0 / n)
        beta_delta, _ = _wls(design, fv, w_delta)
    resid_delta = fv - summaries @ beta_delta[1:]
    try:
        tau = max(iact(resid_delta), 0.0)
    except ConstantSeriesError:
        # Exact linear fit: zero residual spread, interval is degenerate.
        tau = 1.0
    lo, hi = confidence_interval(a_hat, var_term, tau, quantile_z)
    return RegressionEstimate(a_hat=a_hat, b_hat=b_hat, var_term=var_term,
                              iact_reg=tau, ci_low=lo, ci_high=hi,
                              epsilon=float(epsilon),
                              support_count=wt.support_count)


def waste_recycled_mean(trace, f, delta, epsilon, cutoff, sim_cutoff=None):
    """Corrected mean that also counts rejected proposals.

    Each retained state contributes the acceptance-probability mixture
    alpha_k f(proposal out of k) + (1 - alpha_k) f(theta_k), weighted by the
    same normalized correction weights as the plain corrected mean.  The
    last retained state has no recorded outgoing proposal and is dropped
    from the mixture sum.
    """
    if getattr(trace, "prop_alphas", None) is None:
        raise CaptureDisabledError(
            "waste recycling needs captured proposal records")
    thetas, distances = _trace_arrays(trace)
    wt = correction_weights(distances, delta, epsilon, cutoff, sim_cutoff)
    fv = _apply_f(f, thetas)
    fp = _apply_f(f, trace.prop_thetas)
    alpha = trace.prop_alphas
    w = wt.w[:-1]
    # Proposals with alpha = 0 may sit far outside the support where f can
    # overflow; keep them out of the product.
    live = alpha > 0.0
    mix = (1.0 - alpha) * fv[:-1]
    mix[live] += alpha[live] * fp[live]
    return float(np.sum(w * mix))
