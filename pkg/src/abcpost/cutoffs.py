"""Cut-off kernels: non-increasing weight functions on scaled distances.

A cut-off maps t = distance / tolerance to a weight in [0, 1].  The same
function is used both inside the sampler's acceptance ratio and in the
post-correction weights, so each kernel exposes values on both linear and
log scale (log scale avoids underflow in ratios).
"""

import math

import numpy as np

__all__ = [
    "CutoffKernel",
    "SIMPLE",
    "GAUSSIAN",
    "EPANECHNIKOV",
    "cutoff_eval",
    "get_cutoff",
]


class CutoffKernel:
    """A non-increasing function phi: [0, inf) -> [0, 1] with phi(0) = 1.

    Parameters
    ----------
    name : str
        Identifier used in configs and output metadata.
    fn : callable
        Vectorized map from nonnegative t to weights in [0, 1].
    log_fn : callable, optional
        Vectorized log-weight; derived as log(fn(t)) when omitted.
        Supplying it directly avoids underflow for light-tailed kernels.

    User-supplied kernels must be non-increasing with values in [0, 1];
    this is assumed, not checked.
    """

    def __init__(self, name, fn, log_fn=None):
        self.name = name
        self._fn = fn
        self._log_fn = log_fn

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cut-off argument must be nonnegative")
        out = self._fn(t)
        return float(out) if np.ndim(out) == 0 else out

    def log(self, t):
        """log phi(t); -inf where phi(t) = 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cut-off argument must be nonnegative")
        if self._log_fn is not None:
            out = self._log_fn(t)
        else:
            with np.errstate(divide="ignore"):
                out = np.log(self._fn(t))
        return float(out) if np.ndim(out) == 0 else out

    def _log_scalar(self, t):
        # Fast scalar path for the samplers' inner loops; t >= 0 assumed.
        # Built-ins override this; user kernels fall back to the array path.
        return float(self.log(t))

    def __repr__(self):
        return f"CutoffKernel({self.name!r})"


class _Simple(CutoffKernel):
    def __init__(self):
        super().__init__(
            "simple",
            lambda t: np.where(t <= 1.0, 1.0, 0.0),
            lambda t: np.where(t <= 1.0, 0.0, -np.inf),
        )

    def _log_scalar(self, t):
        return 0.0 if t <= 1.0 else -math.inf


class _Gaussian(CutoffKernel):
    def __init__(self):
        super().__init__(
            "gaussian",
            lambda t: np.exp(-0.5 * t * t),
            lambda t: np.where(np.isinf(t), -np.inf, -0.5 * t * t),
        )

    def _log_scalar(self, t):
        return -math.inf if math.isinf(t) else -0.5 * t * t


class _Epanechnikov(CutoffKernel):
    def __init__(self):
        def fn(t):
            return np.maximum(0.0, 1.0 - t * t)

        def log_fn(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.log(np.maximum(0.0, 1.0 - t * t))
            return np.where(t >= 1.0, -np.inf, out)

        super().__init__("epanechnikov", fn, log_fn)

    def _log_scalar(self, t):
        if t >= 1.0:
            return -math.inf
        return math.log(1.0 - t * t)


SIMPLE = _Simple()
GAUSSIAN = _Gaussian()
EPANECHNIKOV = _Epanechnikov()

_REGISTRY = {k.name: k for k in (SIMPLE, GAUSSIAN, EPANECHNIKOV)}


def cutoff_eval(cutoff, t):
    """Evaluate the cut-off weight phi(t) for nonnegative t."""
    return cutoff(t)


def get_cutoff(name):
    """Look up a built-in cut-off kernel by name."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown cut-off {name!r}; expected one of {sorted(_REGISTRY)}"
        ) from None
