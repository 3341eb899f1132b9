"""Bayesian engine: heteroscedastic MVGP likelihood with a pointwise-factorized
correlation, Log-GP variance priors, mixture GP mean priors, prior calibration,
Metropolis-within-Gibbs sampling, and posterior equivalence summaries."""

from .kernels import MaternKernel, matern_corr
from .model import PriorSpec, GPBandPrior, log_gp_prior_logdensity, simplified_corr
from .mvnprob import RectangleProb, mvn_rectangle_prob, calibrate_prior_scale, prior_equivalence_prob
from .posterior import PosteriorDraws, posterior_equivalence_prob, simultaneous_bands, SimultaneousBand
from .sampler import run_mwg, MwgOptions

__all__ = [
    "MaternKernel",
    "matern_corr",
    "PriorSpec",
    "GPBandPrior",
    "log_gp_prior_logdensity",
    "simplified_corr",
    "RectangleProb",
    "mvn_rectangle_prob",
    "calibrate_prior_scale",
    "prior_equivalence_prob",
    "PosteriorDraws",
    "posterior_equivalence_prob",
    "simultaneous_bands",
    "SimultaneousBand",
    "run_mwg",
    "MwgOptions",
]
