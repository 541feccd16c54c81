"""Bayesian survival g-formula with tree-ensemble component models."""

__version__ = "0.1.0"

from .core import (BINARY, CONTINUOUS, Covariate, DeterministicDynamic, DeterministicStatic,
                   HistoryFeaturizer, LongitudinalDataset, RandomRegime, Schema, always_treat,
                   load_dataset, never_treat, parse_regime, point_mass, threshold_rule,
                   write_dataset)
from .gformula import (MonteCarloConfig, RiskDraws, baseline_pool, contrast, estimate,
                       estimate_deterministic, estimate_random, fit_component_models, summarize)
from .oracle import empirical_cuminc, plugin_gformula
from .parametric import estimate_parametric, fit_linear, fit_logistic
from .scores import (BalancingScoreSpec, Variant, build_balancing_series, compute_scores,
                     fit_assignment_models)
from .simulator import (MixedDgpConfig, Sim51Config, ToyDgpConfig, generate_mixed,
                        generate_sim51, generate_toy, simulate, true_risk, true_risk_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
