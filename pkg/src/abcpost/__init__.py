"""Likelihood-free MCMC at an inflated tolerance, post-corrected downward.

Run the sampler once at a tolerance loose enough to mix, then reweight the
output to a whole range of finer tolerances, with confidence intervals,
optional regression adjustment and waste recycling, and automatic tolerance
tuning during burn-in.
"""

__version__ = "0.1.0"

from .cutoffs import (CutoffKernel, SIMPLE, GAUSSIAN, EPANECHNIKOV,
                      cutoff_eval, get_cutoff)
from .chain import (PseudoObservation, ChainSample, ChainTrace,
                    ChainStateError, ChainInitError, acceptance_probability,
                    mcmc_step, run_chain)
from .adapt import (StepSchedule, AdaptState, AdaptResult, CovarianceAdapter,
                    step_size, tolerance_update, am_update,
                    run_adaptive_burnin)
from .postprocess import (AllZeroWeightsError, ConstantSeriesError,
                          SingularDesignError, CaptureDisabledError,
                          WeightedTrace, PostEstimate, ToleranceCurve,
                          RegressionEstimate, correction_weights,
                          corrected_mean, corrected_var_term,
                          tolerance_sweep, iact, confidence_interval,
                          estimate, regression_correct, waste_recycled_mean,
                          Z_95)
from .models import (GaussianToy, LotkaVolterraModel, Trajectory,
                     gaussian_simulate, gaussian_posterior_oracle,
                     gillespie_simulate, lv_summaries, lv_distance, get_model)

__all__ = [
    "CutoffKernel", "SIMPLE", "GAUSSIAN", "EPANECHNIKOV", "cutoff_eval",
    "get_cutoff",
    "PseudoObservation", "ChainSample", "ChainTrace", "ChainStateError",
    "ChainInitError", "acceptance_probability", "mcmc_step", "run_chain",
    "StepSchedule", "AdaptState", "AdaptResult", "CovarianceAdapter",
    "step_size", "tolerance_update", "am_update", "run_adaptive_burnin",
    "AllZeroWeightsError", "ConstantSeriesError", "SingularDesignError",
    "CaptureDisabledError", "WeightedTrace", "PostEstimate",
    "ToleranceCurve", "RegressionEstimate", "correction_weights",
    "corrected_mean", "corrected_var_term", "tolerance_sweep", "iact",
    "confidence_interval", "estimate", "regression_correct",
    "waste_recycled_mean", "Z_95",
    "GaussianToy", "LotkaVolterraModel", "Trajectory", "gaussian_simulate",
    "gaussian_posterior_oracle", "gillespie_simulate", "lv_summaries",
    "lv_distance", "get_model",
]
