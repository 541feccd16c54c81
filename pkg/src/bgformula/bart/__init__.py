"""Bayesian additive regression trees."""
from .model import (BartHyper, BartPosterior, MCMCConfig, bin_features, fit_binary,
                    fit_continuous, make_grid, sample_prior)

__all__ = ["BartHyper", "BartPosterior", "MCMCConfig", "bin_features", "fit_binary",
           "fit_continuous", "make_grid", "sample_prior"]
