"""Inverse link functions shared by the tree ensembles and the GLMs."""
import numpy as np
from scipy.special import expit, ndtr

P_CLIP = 1e-15

IDENTITY = "identity"
PROBIT = "probit"
LOGISTIC = "logistic"
LINKS = (IDENTITY, PROBIT, LOGISTIC)


def inverse_link(eta: np.ndarray, link: str) -> np.ndarray:
    if link == IDENTITY:
        return eta
    if link == PROBIT:
        p = ndtr(eta)
    elif link == LOGISTIC:
        p = expit(eta)
    else:
        raise ValueError(f"unknown link {link!r}")
    return np.clip(p, P_CLIP, 1.0 - P_CLIP)
