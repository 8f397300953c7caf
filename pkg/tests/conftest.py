import math

import numpy as np

from abcpost.chain import ChainTrace, PseudoObservation


def make_trace(thetas, distances, delta, cutoff, **kwargs):
    """Assemble a ChainTrace from plain arrays for estimator tests."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    distances = np.asarray(distances, dtype=float)
    kwargs.setdefault("seed", 0)
    kwargs.setdefault("n_burn", 0)
    kwargs.setdefault("accept_count", 0)
    return ChainTrace(thetas, distances, delta, cutoff, **kwargs)


class FlatPriorModel:
    """Improper flat prior; the simulator is injected per test."""

    dim = 1
    summary_dim = 1

    def __init__(self, draw):
        self._draw = draw

    def prior_log_density(self, theta):
        return 0.0

    def simulate(self, theta, rng):
        d = self._draw(theta, rng)
        return PseudoObservation(float(d), np.array([d]))


class BoxPriorModel(FlatPriorModel):
    """Uniform prior on [-half, half]^dim."""

    def __init__(self, draw, half=1.0):
        super().__init__(draw)
        self.half = half

    def prior_log_density(self, theta):
        if np.all(np.abs(theta) <= self.half):
            return 0.0
        return -math.inf


def ident(th):
    th = np.asarray(th)
    return th if th.ndim == 1 else th[:, 0]


def absval(th):
    th = np.asarray(th)
    return np.abs(th if th.ndim == 1 else th[:, 0])
