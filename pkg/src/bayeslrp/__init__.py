"""Robustness of LRP explanations for deterministic and Bayesian MLPs under adversarial attack."""

from . import attacks, bayes, lrp, manifold, metrics, nn
from .errors import BayesLRPError

__version__ = "0.1.0"

__all__ = ["attacks", "bayes", "lrp", "manifold", "metrics", "nn", "BayesLRPError", "__version__"]
