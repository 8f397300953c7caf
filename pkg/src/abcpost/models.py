"""Benchmark models: a 1-D Gaussian toy and a Lotka-Volterra jump process.

Models expose the simulator interface consumed by the chain runner:
`prior_log_density(theta)`, `simulate(theta, rng) -> PseudoObservation`,
`dim`, `summary_dim`, plus `default_start()` and `sample_prior(rng)` used by
the batch harness, and `estimands()` mapping estimand names to vectorized
functions of the sample array.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate

from .chain import PseudoObservation

__all__ = [
    "GaussianToy",
    "LotkaVolterraModel",
    "Trajectory",
    "gaussian_simulate",
    "gaussian_posterior_oracle",
    "gillespie_simulate",
    "lv_summaries",
    "lv_distance",
    "get_model",
]

_LOG_2PI = math.log(2.0 * math.pi)


class GaussianToy:
    """Normal(0, prior_sd^2) prior, Normal(theta, obs_sd^2) observation,
    distance |y|.

    The observed data point is implicitly zero, so the pseudo-posterior has
    zero mean for every tolerance by symmetry.
    """

    dim = 1
    summary_dim = 1

    def __init__(self, prior_sd=30.0, obs_sd=1.0):
        self.prior_sd = float(prior_sd)
        self.obs_sd = float(obs_sd)
        self._lp_const = -math.log(self.prior_sd) - 0.5 * _LOG_2PI

    def prior_log_density(self, theta):
        z = theta[0] / self.prior_sd
        return -0.5 * z * z + self._lp_const

    def simulate(self, theta, rng):
        y = theta[0] + self.obs_sd * rng.standard_normal()
        return PseudoObservation(abs(y), np.array([y]))

    def default_start(self):
        return np.zeros(1)

    def sample_prior(self, rng):
        return rng.normal(0.0, self.prior_sd, size=1)

    def estimands(self):
        return {
            "x": lambda th: th[:, 0],
            "abs_x": lambda th: np.abs(th[:, 0]),
        }

    def oracle_truth(self, name, epsilon, cutoff):
        """Quadrature ground truth for the named estimand, or None."""
        if name == "x":
            return 0.0
        if name == "abs_x":
            return gaussian_posterior_oracle("abs", epsilon, cutoff,
                                             self.prior_sd, self.obs_sd)
        return None


def gaussian_simulate(theta, model, rng):
    """One pseudo-observation of the Gaussian toy model."""
    return model.simulate(theta, rng)


def _smoothed_likelihood(cutoff, epsilon, obs_sd):
    """L_eps(theta) = E[phi(|Y|/eps)] with Y ~ Normal(theta, obs_sd^2)."""
    inv = 1.0 / obs_sd
    if cutoff.name == "simple":
        def lik(t):
            return 0.5 * (math.erf((epsilon - t) * inv / math.sqrt(2.0))
                          - math.erf((-epsilon - t) * inv / math.sqrt(2.0)))
        return lik
    if cutoff.name == "gaussian":
        # Gaussian kernel convolved with the observation noise.
        s2 = epsilon * epsilon + obs_sd * obs_sd
        c = epsilon / math.sqrt(s2)

        def lik(t):
            return c * math.exp(-0.5 * t * t / s2)
        return lik

    def lik(t):
        val, _ = integrate.quad(
            lambda y: cutoff(abs(y) / epsilon)
            * math.exp(-0.5 * ((y - t) * inv) ** 2) * inv
            / math.sqrt(2.0 * math.pi),
            -epsilon * 1.0e3, epsilon * 1.0e3, limit=200)
        return val
    return lik


def gaussian_posterior_oracle(f, epsilon, cutoff, prior_sd=30.0, obs_sd=1.0):
    """Posterior-mean ground truth for the Gaussian toy by 1-D quadrature.

    `f` is "identity" or "abs" (aliases "x"/"abs_x" accepted).  Integrates
    prior * smoothed likelihood (* f) over the real line to absolute
    tolerance 1e-8 and returns the ratio.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if f in ("identity", "x"):
        fn = lambda t: t  # noqa: E731
    elif f in ("abs", "abs_x"):
        fn = abs
    elif callable(f):
        fn = f
    else:
        raise ValueError(f"unknown oracle estimand {f!r}")

    lik = _smoothed_likelihood(cutoff, epsilon, obs_sd)
    inv_prior = 1.0 / prior_sd

    def prior_pdf(t):
        z = t * inv_prior
        return math.exp(-0.5 * z * z) * inv_prior / math.sqrt(2.0 * math.pi)

    opts = dict(epsabs=1e-12, epsrel=1e-11, limit=400)
    den, den_err = integrate.quad(lambda t: prior_pdf(t) * lik(t),
                                  -np.inf, np.inf, **opts)
    num, num_err = integrate.quad(lambda t: prior_pdf(t) * lik(t) * fn(t),
                                  -np.inf, np.inf, **opts)
    if den <= 0 or den_err > 1e-8 * den or num_err > 1e-8 * max(abs(num), den):
        raise RuntimeError(
            f"quadrature did not converge for eps={epsilon} ({cutoff.name})")
    return num / den


# Gillespie simulation of the three-reaction predator-prey network:
# prey birth X -> 2X (rate r1 X), predation X + Y -> 2Y (rate r2 X Y),
# predator death Y -> 0 (rate r3 Y).  Returns counts sampled on the
# observation grid; status 1 flags an aborted (capped) run.
@njit(cache=True)
def _ssa_predator_prey(r1, r2, r3, x0, y0, obs_interval, n_obs,
                       event_cap, pop_cap, rng):
    xs = np.empty(n_obs, dtype=np.int64)
    ys = np.empty(n_obs, dtype=np.int64)
    x = x0
    y = y0
    t = 0.0
    next_obs = 0
    events = 0
    while True:
        a1 = r1 * x
        a2 = r2 * x * y
        a3 = r3 * y
        total = a1 + a2 + a3
        if total == 0.0:
            # Absorbing state: counts stay constant to the horizon.
            while next_obs < n_obs:
                xs[next_obs] = x
                ys[next_obs] = y
                next_obs += 1
            return 0, xs, ys
        t_next = t + rng.exponential(1.0 / total)
        while next_obs < n_obs and next_obs * obs_interval < t_next:
            xs[next_obs] = x
            ys[next_obs] = y
            next_obs += 1
        if next_obs == n_obs:
            return 0, xs, ys
        t = t_next
        u = rng.random() * total
        if u < a1:
            x += 1
        elif u < a1 + a2:
            x -= 1
            y += 1
        else:
            y -= 1
        events += 1
        if events >= event_cap or x > pop_cap or y > pop_cap:
            return 1, xs, ys


@dataclass
class Trajectory:
    """Counts on the observation grid t = 0, 5, ..., 40 (9 points)."""

    prey: np.ndarray
    predator: np.ndarray


def _lag_autocorr(series, lag):
    x = np.asarray(series, dtype=float)
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        # Zero-variance series: define the term as 0 so degenerate
        # trajectories still yield a finite (far-away) summary vector.
        return 0.0
    return float(centered[:-lag] @ centered[lag:]) / denom


def _nearest_rank_quantile(series, p):
    s = np.sort(np.asarray(series, dtype=float))
    n = s.shape[0]
    idx = max(int(math.ceil(p * n)), 1) - 1
    return float(s[min(idx, n - 1)])


def lv_summaries(traj):
    """Five summaries: 100 x lag-2 autocorrelation of the prey series, and
    the 10%/90% nearest-rank quantiles of the prey and predator series."""
    prey = np.asarray(traj.prey, dtype=float)
    pred = np.asarray(traj.predator, dtype=float)
    return np.array([
        100.0 * _lag_autocorr(prey, 2),
        _nearest_rank_quantile(prey, 0.1),
        _nearest_rank_quantile(prey, 0.9),
        _nearest_rank_quantile(pred, 0.1),
        _nearest_rank_quantile(pred, 0.9),
    ])


class LotkaVolterraModel:
    """Predator-prey reaction network with uniform prior on log rates.

    Chain parameters are the log reaction rates on the box
    [log_rate_min, log_rate_max]^3.  The distance is the Euclidean norm
    between the simulated five-summary vector and `observed_summaries`;
    simulations that exceed the event or population caps count as infinitely
    distant.  The published summary data fixes the inference problem; the
    initial counts only shape the simulator and are recorded in metadata.
    """

    dim = 3
    summary_dim = 5

    def __init__(self, initial_prey=50, initial_predator=100, horizon=40.0,
                 obs_interval=5.0, observed_summaries=None,
                 log_rate_min=-6.0, log_rate_max=0.0,
                 event_cap=10_000_000, population_cap=1_000_000):
        self.initial_prey = int(initial_prey)
        self.initial_predator = int(initial_predator)
        self.horizon = float(horizon)
        self.obs_interval = float(obs_interval)
        self.n_obs = int(round(horizon / obs_interval)) + 1
        if observed_summaries is None:
            observed_summaries = np.array([-51.07, 29.0, 304.0, 65.0, 404.0])
        self.observed_summaries = np.asarray(observed_summaries, dtype=float)
        self.log_rate_min = float(log_rate_min)
        self.log_rate_max = float(log_rate_max)
        self.event_cap = int(event_cap)
        self.population_cap = int(population_cap)
        width = self.log_rate_max - self.log_rate_min
        self._lp_inside = -3.0 * math.log(width)

    def prior_log_density(self, theta):
        for i in range(3):
            if not self.log_rate_min <= theta[i] <= self.log_rate_max:
                return -math.inf
        return self._lp_inside

    def simulate(self, theta, rng):
        rates = np.exp(np.asarray(theta, dtype=float))
        traj = gillespie_simulate(rates, self, rng)
        if traj is None:
            return PseudoObservation(math.inf, None)
        sbar = lv_summaries(traj) - self.observed_summaries
        return PseudoObservation(float(np.linalg.norm(sbar)), sbar)

    def default_start(self):
        return np.array([-0.55, -5.77, -1.09])

    def sample_prior(self, rng):
        return rng.uniform(self.log_rate_min, self.log_rate_max, size=3)

    def estimands(self):
        return {
            "theta1": lambda th: np.exp(th[:, 0]),
            "theta2": lambda th: np.exp(th[:, 1]),
            "theta3": lambda th: np.exp(th[:, 2]),
        }

    def oracle_truth(self, name, epsilon, cutoff):
        return None


def gillespie_simulate(rates, model, rng):
    """Exact stochastic simulation of the reaction network.

    `rates` are the three positive reaction rates.  Returns a Trajectory of
    grid counts, or None when the event or population cap was hit.
    """
    r1, r2, r3 = float(rates[0]), float(rates[1]), float(rates[2])
    if min(r1, r2, r3) <= 0:
        raise ValueError("reaction rates must be positive")
    status, xs, ys = _ssa_predator_prey(
        r1, r2, r3, model.initial_prey, model.initial_predator,
        model.obs_interval, model.n_obs, model.event_cap,
        model.population_cap, rng)
    if status != 0:
        return None
    return Trajectory(prey=xs, predator=ys)


def lv_distance(theta, model, rng):
    """Simulate at log-rates theta and reduce to summary distance."""
    return model.simulate(theta, rng)


def get_model(name, **params):
    """Instantiate a benchmark model by config name."""
    if name == "gaussian":
        return GaussianToy(**params)
    if name in ("lotka_volterra", "lv"):
        return LotkaVolterraModel(**params)
    raise ValueError(f"unknown model {name!r}")
