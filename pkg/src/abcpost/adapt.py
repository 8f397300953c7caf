"""Burn-in tuning: tolerance adaptation and covariance adaptation.

The tolerance follows a Robbins-Monro recursion on log delta that targets a
user-chosen acceptance rate; the proposal covariance follows the classic
adaptive-Metropolis running mean/covariance recursions scaled by 2.38^2 / dim.
Both can run together during burn-in (the combined scheme), after which the
tolerance is frozen and the covariance optionally keeps adapting.
"""

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainInitError, _transition

__all__ = [
    "StepSchedule",
    "AdaptState",
    "AdaptResult",
    "CovarianceAdapter",
    "step_size",
    "tolerance_update",
    "am_update",
    "run_adaptive_burnin",
]

PROPOSAL_SCALE = 2.38**2
DELTA_BOUNDS = (1e-8, 1e8)
T0_RETRY_CAP = 100
# Relative jitter added to a numerically non-PD proposal covariance.
CHOL_JITTER = 1e-10


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes gamma_k = scale * k**(-exponent), exponent in (1/2, 1]."""

    exponent: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError("step-size exponent must lie in (1/2, 1]")
        if self.scale <= 0:
            raise ValueError("step-size scale must be positive")


def step_size(schedule, k):
    """gamma_k = scale * k**(-exponent) for iteration k >= 1."""
    if k < 1:
        raise ValueError("step-size index must be >= 1")
    return schedule.scale * k ** (-schedule.exponent)


def tolerance_update(log_delta, gamma_k, target, realized, bounds):
    """One Robbins-Monro move of log delta, clamped into [log a, log b].

    `realized` is the acceptance probability of the attempted move; the drift
    gamma_k * (target - realized) pushes the tolerance down when acceptance
    runs hot and up when it runs cold.
    """
    if not 0.0 <= realized <= 1.0:
        raise ValueError("realized acceptance probability must be in [0, 1]")
    lo, hi = bounds
    new = log_delta + gamma_k * (target - realized)
    return min(max(new, math.log(lo)), math.log(hi))


def am_update(mu, gamma_mat, theta_new, gamma_k):
    """One adaptive-Metropolis update of the running mean and covariance.

    mu'    = mu + gamma_k (theta - mu)
    Gamma' = Gamma + gamma_k ((theta - mu)(theta - mu)^T - Gamma)

    The outer product uses the old mean.  Returns (mu', Gamma').
    """
    mu = np.asarray(mu, dtype=float)
    gamma_mat = np.asarray(gamma_mat, dtype=float)
    diff = np.asarray(theta_new, dtype=float) - mu
    new_gamma = gamma_mat + gamma_k * (np.outer(diff, diff) - gamma_mat)
    new_mu = mu + gamma_k * diff
    return new_mu, new_gamma


class CovarianceAdapter:
    """Running mean/covariance feeding a scaled random-walk proposal.

    The covariance starts at the identity, which is treated as one prior
    observation: the j-th update uses gamma evaluated at j + 1, so the first
    update blends rather than replaces.  (With the literal index the first
    step size is scale * 1; at the default scale an initial rejection would
    zero the covariance and permanently collapse the proposal.)  With
    exponent 1 the recursion is then exactly the running covariance of the
    history with the identity as one extra data point.
    """

    def __init__(self, dim, schedule, mu0=None, gamma0=None, n_updates=0):
        self.dim = dim
        self.schedule = schedule
        self.mu = np.zeros(dim) if mu0 is None else np.asarray(mu0, float).copy()
        self.gamma = np.eye(dim) if gamma0 is None \
            else np.asarray(gamma0, float).copy()
        self.n_updates = n_updates
        self._scale = PROPOSAL_SCALE / dim

    def set_start(self, theta0):
        self.mu = np.asarray(theta0, dtype=float).copy()

    def observe(self, theta):
        self.n_updates += 1
        g = step_size(self.schedule, self.n_updates + 1)
        self.mu, self.gamma = am_update(self.mu, self.gamma, theta, g)

    def proposal_cov(self):
        return self._scale * self.gamma

    def proposal_chol(self):
        """Lower Cholesky factor of the proposal covariance.

        Returned as a plain float (standard deviation) for 1-D chains.  A
        failed factorization gets one retry with a small trace-relative
        diagonal jitter.
        """
        if self.dim == 1:
            v = self._scale * self.gamma[0, 0]
            if v > 0:
                return math.sqrt(v)
            return math.sqrt(self._scale * CHOL_JITTER * 1e-12)
        cov = self._scale * self.gamma
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            bump = CHOL_JITTER * (np.trace(self.gamma) / self.dim + 1e-12)
            return np.linalg.cholesky(cov + self._scale * bump * np.eye(self.dim))


@dataclass
class AdaptState:
    """State of the combined tolerance + covariance tuner."""

    log_delta: float
    mu: np.ndarray
    gamma_mat: np.ndarray
    k: int
    target_rate: float
    bounds: tuple = DELTA_BOUNDS

    @property
    def delta(self):
        return math.exp(self.log_delta)


@dataclass
class AdaptResult:
    """Output of the adaptive burn-in, ready to seed an estimation run.

    `adapter` is the live covariance adapter; passing it to the follow-up
    run continues the recursion (counter included) instead of restarting it.
    """

    theta: np.ndarray
    delta: float
    gamma_mat: np.ndarray
    mu: np.ndarray
    final_distance: float
    delta_trace: np.ndarray
    thetas: np.ndarray
    alphas: np.ndarray
    accept_count: int
    adapter: CovarianceAdapter
    target_rate: float
    bounds: tuple

    @property
    def n_b(self):
        return self.delta_trace.shape[0]

    @property
    def acceptance_rate(self):
        return self.accept_count / self.n_b if self.n_b else 0.0

    @property
    def state(self):
        """Final tuner state as an AdaptState snapshot."""
        return AdaptState(log_delta=math.log(self.delta), mu=self.mu,
                          gamma_mat=self.gamma_mat, k=self.adapter.n_updates,
                          target_rate=self.target_rate, bounds=self.bounds)


def _draw_initial_tolerance(model, theta0, rng, retry_cap):
    for _ in range(retry_cap):
        t0 = model.simulate(theta0, rng).distance
        if 0.0 < t0 < math.inf:
            return t0
    raise ChainInitError(
        f"initial distance was zero or infinite in {retry_cap} attempts"
    )


def run_adaptive_burnin(model, cutoff, n_b, target_rate, schedule,
                        theta0, seed=None, rng=None, bounds=DELTA_BOUNDS,
                        t0_retry_cap=T0_RETRY_CAP):
    """Combined tolerance + covariance adaptation over n_b burn-in iterations.

    The tolerance starts at the first simulated distance at theta0 (redrawn
    while zero or infinite) and moves each iteration by the Robbins-Monro
    drift with the realized acceptance probability; the proposal covariance
    starts at the identity and follows the adaptive-Metropolis recursion with
    the same step-size schedule.  While the shrinking tolerance can strand
    the current state at zero kernel weight, a proposal with positive weight
    is then accepted with probability one, so the chain recovers on its own.

    Returns an AdaptResult; its (theta, delta, final_distance, adapter) seed
    the subsequent fixed-tolerance estimation run.
    """
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target rate must be in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(seed)

    theta = np.asarray(theta0, dtype=float)
    lp = model.prior_log_density(theta)
    if not math.isfinite(lp):
        raise ValueError("initial parameter is outside the prior support")
    dim = theta.shape[0]

    dist = _draw_initial_tolerance(model, theta, rng, t0_retry_cap)
    lo, hi = bounds
    log_delta = min(max(math.log(dist), math.log(lo)), math.log(hi))

    adapter = CovarianceAdapter(dim, schedule)
    adapter.set_start(theta)

    delta_trace = np.empty(n_b)
    thetas = np.empty((n_b, dim))
    alphas = np.empty(n_b)
    accept_count = 0

    for k in range(n_b):
        delta = math.exp(log_delta)
        lw = cutoff._log_scalar(dist / delta)
        chol = adapter.proposal_chol()
        accepted, theta, new_dist, lp, _, _, alpha, _, _ = _transition(
            theta, lp, lw, delta, cutoff, model, chol, rng)
        if accepted:
            dist = new_dist
            accept_count += 1
        log_delta = tolerance_update(
            log_delta, step_size(schedule, k + 1), target_rate, alpha, bounds)
        adapter.observe(theta)
        delta_trace[k] = math.exp(log_delta)
        thetas[k] = theta
        alphas[k] = alpha

    return AdaptResult(theta=theta, delta=math.exp(log_delta),
                       gamma_mat=adapter.gamma.copy(), mu=adapter.mu.copy(),
                       final_distance=dist, delta_trace=delta_trace,
                       thetas=thetas, alphas=alphas,
                       accept_count=accept_count, adapter=adapter,
                       target_rate=target_rate, bounds=bounds)
