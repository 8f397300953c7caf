"""Distance-thresholded MCMC: single transitions and the fixed-tolerance runner.

The sampler targets the pseudo-posterior prior(theta) * E[phi(d(Y, y*) / delta)]
using a symmetric Gaussian random-walk proposal.  Only the parameter vector and
the realized distance T = d(Y, y*) are kept per state; the acceptance ratio is
evaluated in log space so zero kernel weights and zero priors never divide.
"""

import math
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "PseudoObservation",
    "ChainSample",
    "ChainTrace",
    "ChainStateError",
    "ChainInitError",
    "acceptance_probability",
    "mcmc_step",
    "run_chain",
]

INIT_ATTEMPT_CAP = 10_000


class ChainStateError(RuntimeError):
    """The current chain state violates the sampler invariant (corrupt chain)."""


class ChainInitError(RuntimeError):
    """No valid initial pseudo-observation found within the attempt cap."""


class PseudoObservation(NamedTuple):
    """One simulator draw, reduced to its distance from the data.

    distance is d(y, y*) >= 0, or inf for failed / capped simulations.
    summaries holds the centered summary vector s(y) - s(y*) when the model
    provides one (needed for regression correction), else None.
    """

    distance: float
    summaries: Optional[np.ndarray] = None


class ChainSample(NamedTuple):
    """One retained MCMC state.

    proposal_record is the (proposed theta, proposed distance, acceptance
    probability) triple for the transition attempted *out of* this state,
    captured only when waste recycling is requested.
    """

    theta: np.ndarray
    distance: float
    proposal_record: Optional[tuple] = None
    summaries: Optional[np.ndarray] = None


class ChainTrace:
    """Columnar storage of the retained samples plus run metadata.

    Arrays `thetas` (n, d) and `distances` (n,) are the primary access path;
    indexing and iteration yield `ChainSample` views.  `prop_thetas`,
    `prop_distances` and `prop_alphas` (all length n-1, present only when
    proposals were captured) describe the transition out of sample k into
    sample k+1.
    """

    def __init__(self, thetas, distances, delta, cutoff, seed, n_burn,
                 accept_count, summaries=None, prop_thetas=None,
                 prop_distances=None, prop_alphas=None):
        self.thetas = thetas
        self.distances = distances
        self.delta = delta
        self.cutoff = cutoff
        self.seed = seed
        self.n_burn = n_burn
        self.accept_count = accept_count
        self.summaries = summaries
        self.prop_thetas = prop_thetas
        self.prop_distances = prop_distances
        self.prop_alphas = prop_alphas

    @property
    def n_keep(self):
        return self.thetas.shape[0]

    @property
    def dim(self):
        return self.thetas.shape[1]

    @property
    def acceptance_rate(self):
        return self.accept_count / self.n_keep if self.n_keep else 0.0

    @property
    def has_proposals(self):
        return self.prop_alphas is not None

    def __len__(self):
        return self.n_keep

    def __getitem__(self, k):
        record = None
        if self.has_proposals and 0 <= k < self.n_keep - 1:
            record = (self.prop_thetas[k], float(self.prop_distances[k]),
                      float(self.prop_alphas[k]))
        summ = self.summaries[k] if self.summaries is not None else None
        return ChainSample(self.thetas[k], float(self.distances[k]),
                           record, summ)

    def __iter__(self):
        for k in range(self.n_keep):
            yield self[k]

    @property
    def samples(self):
        return list(self)

    def validate(self):
        """Check the retained-state invariant phi(T_k / delta) > 0."""
        if self.n_keep == 0:
            return
        logw = self.cutoff.log(self.distances / self.delta)
        if not np.all(np.asarray(logw) > -np.inf):
            raise ChainStateError("trace contains a state with zero kernel weight")


def acceptance_probability(current, proposed, delta, cutoff, model,
                           proposal_log_density_ratio=0.0):
    """Acceptance probability of `proposed` from `current` at tolerance delta.

    Both states are (theta, distance) pairs.  The ratio

        prior(theta') * q(theta', theta) * phi(T'/delta)
        ------------------------------------------------
        prior(theta)  * q(theta, theta') * phi(T/delta)

    is evaluated in log space; the q-ratio enters through
    `proposal_log_density_ratio` (zero for symmetric proposals).  The current
    state must have positive prior and kernel weight, otherwise the chain is
    corrupt and a ChainStateError is raised.
    """
    theta, dist = current
    theta_prop, dist_prop = proposed
    lp_cur = model.prior_log_density(theta)
    lw_cur = cutoff._log_scalar(dist / delta)
    if not math.isfinite(lp_cur) or lw_cur == -math.inf:
        raise ChainStateError(
            "current state has zero prior density or zero kernel weight"
        )
    lp_prop = model.prior_log_density(theta_prop)
    if lp_prop == -math.inf:
        return 0.0
    lw_prop = cutoff._log_scalar(dist_prop / delta)
    if lw_prop == -math.inf:
        return 0.0
    log_ratio = (lp_prop - lp_cur) + proposal_log_density_ratio + (lw_prop - lw_cur)
    return math.exp(min(0.0, log_ratio))


def _propose(theta, chol, rng):
    # chol is the lower Cholesky factor of the proposal covariance; for 1-D
    # chains it is passed as a plain float (standard deviation).
    if isinstance(chol, float):
        return theta + chol * rng.standard_normal()
    return theta + chol @ rng.standard_normal(theta.shape[0])


def _transition(theta, lp_cur, lw_cur, delta, cutoff, model, chol, rng):
    """One proposal/accept step given precomputed log densities.

    Returns (accepted, theta, distance_or_None, lp, lw, summaries, alpha,
    theta_prop, dist_prop).  The proposed simulation is skipped when the
    prior already rejects (keeps out-of-support parameters away from the
    simulator); dist_prop is then inf.
    """
    theta_prop = _propose(theta, chol, rng)
    lp_prop = model.prior_log_density(theta_prop)
    if lp_prop == -math.inf:
        alpha = 0.0
        dist_prop = math.inf
        summ_prop = None
        lw_prop = -math.inf
    else:
        obs = model.simulate(theta_prop, rng)
        dist_prop = obs.distance
        summ_prop = obs.summaries
        lw_prop = cutoff._log_scalar(dist_prop / delta)
        if lw_prop == -math.inf:
            alpha = 0.0
        else:
            log_ratio = (lp_prop - lp_cur) + (lw_prop - lw_cur)
            alpha = math.exp(min(0.0, log_ratio))
    if rng.random() < alpha:
        return True, theta_prop, dist_prop, lp_prop, lw_prop, summ_prop, \
            alpha, theta_prop, dist_prop
    return False, theta, None, lp_cur, lw_cur, None, alpha, theta_prop, dist_prop


def mcmc_step(state, delta, cutoff, model, proposal_covariance, rng,
              capture=False):
    """One transition of the fixed-tolerance sampler.

    `state` is a ChainSample; the proposal is a Gaussian random walk with the
    given covariance matrix.  Returns (new_state, accepted, alpha).  Simulator
    failures (infinite distance) are certain rejections, not errors.
    """
    lp_cur = model.prior_log_density(state.theta)
    lw_cur = cutoff._log_scalar(state.distance / delta)
    if not math.isfinite(lp_cur) or lw_cur == -math.inf:
        raise ChainStateError(
            "current state has zero prior density or zero kernel weight"
        )
    cov = np.asarray(proposal_covariance, dtype=float)
    if cov.ndim == 0:
        chol = float(math.sqrt(cov))
    elif cov.shape == (1, 1):
        chol = float(math.sqrt(cov[0, 0]))
    else:
        chol = np.linalg.cholesky(cov)
    accepted, theta, dist, _, _, summ, alpha, theta_prop, dist_prop = \
        _transition(state.theta, lp_cur, lw_cur, delta, cutoff, model, chol, rng)
    if not accepted:
        dist = state.distance
        summ = state.summaries
    record = (theta_prop, dist_prop, alpha) if capture else None
    return ChainSample(theta, dist, record, summ), accepted, alpha


def init_state(model, cutoff, delta, theta0, rng, attempt_cap=INIT_ATTEMPT_CAP):
    """Draw pseudo-observations at theta0 until one has positive kernel weight."""
    theta0 = np.asarray(theta0, dtype=float)
    lp = model.prior_log_density(theta0)
    if not math.isfinite(lp):
        raise ValueError("initial parameter is outside the prior support")
    for _ in range(attempt_cap):
        obs = model.simulate(theta0, rng)
        lw = cutoff._log_scalar(obs.distance / delta)
        if lw > -math.inf:
            return theta0, obs.distance, obs.summaries, lp, lw
    raise ChainInitError(
        f"no valid initial observation in {attempt_cap} attempts; "
        f"delta={delta} is likely too small for the starting point"
    )


def run_chain(model, cutoff, delta, theta0, n_burn, n_keep,
              proposal_covariance=None, cov_adapter=None, seed=None, rng=None,
              capture_proposals=False, capture_summaries=False,
              initial_distance=None, init_attempt_cap=INIT_ATTEMPT_CAP):
    """Run the fixed-tolerance sampler and return the retained trace.

    Either `proposal_covariance` (a fixed (d, d) matrix) or `cov_adapter`
    (an object with `proposal_chol()` and `observe(theta)`, see
    `adapt.CovarianceAdapter`) must be given.  `initial_distance` may carry
    over a realized distance from a previous phase; it is used only when its
    kernel weight is positive, otherwise the initial observation is redrawn.
    The run is a pure function of (config, seed / rng state).
    """
    if n_burn < 0 or n_keep < 0:
        raise ValueError("n_burn and n_keep must be nonnegative")
    if (proposal_covariance is None) == (cov_adapter is None):
        raise ValueError("exactly one of proposal_covariance / cov_adapter "
                         "must be given")
    if rng is None:
        rng = np.random.default_rng(seed)

    theta0 = np.asarray(theta0, dtype=float)
    dim = theta0.shape[0]
    # A carried-over distance has no summaries attached, so capture runs
    # redraw the initial observation instead.
    if initial_distance is not None and not capture_summaries and \
            cutoff._log_scalar(initial_distance / delta) > -math.inf:
        lp = model.prior_log_density(theta0)
        if not math.isfinite(lp):
            raise ValueError("initial parameter is outside the prior support")
        theta, dist, summ = theta0, initial_distance, None
        lw = cutoff._log_scalar(dist / delta)
    else:
        theta, dist, summ, lp, lw = init_state(
            model, cutoff, delta, theta0, rng, init_attempt_cap)

    if cov_adapter is None:
        cov = np.asarray(proposal_covariance, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(dim)
        fixed_chol = float(math.sqrt(cov[0, 0])) if dim == 1 \
            else np.linalg.cholesky(cov)

    thetas = np.empty((n_keep, dim))
    distances = np.empty(n_keep)
    summaries = np.full((n_keep, model.summary_dim), np.nan) \
        if capture_summaries else None
    if capture_proposals and n_keep > 1:
        prop_thetas = np.empty((n_keep - 1, dim))
        prop_distances = np.empty(n_keep - 1)
        prop_alphas = np.empty(n_keep - 1)
    else:
        prop_thetas = prop_distances = prop_alphas = None

    accept_count = 0
    for i in range(n_burn + n_keep):
        chol = fixed_chol if cov_adapter is None else cov_adapter.proposal_chol()
        accepted, theta, new_dist, lp, lw, new_summ, alpha, th_prop, d_prop = \
            _transition(theta, lp, lw, delta, cutoff, model, chol, rng)
        if accepted:
            dist = new_dist
            summ = new_summ
        if cov_adapter is not None:
            cov_adapter.observe(theta)
        k = i - n_burn
        if k >= 0:
            thetas[k] = theta
            distances[k] = dist
            if accepted:
                accept_count += 1
            if summaries is not None:
                if summ is None:
                    raise ValueError(
                        "capture_summaries requires a model that emits them")
                summaries[k] = summ
            if prop_alphas is not None and k >= 1:
                prop_thetas[k - 1] = th_prop
                prop_distances[k - 1] = d_prop
                prop_alphas[k - 1] = alpha

    return ChainTrace(thetas, distances, delta, cutoff, seed, n_burn,
                      accept_count, summaries, prop_thetas, prop_distances,
                      prop_alphas)
