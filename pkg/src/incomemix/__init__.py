"""Lognormal-mixture income distributions from grouped data by reversible-jump MCMC."""
from .distributions import (DegenerateIntervalError, DomainError, Gb2Params, InvariantError,
                            LognormalParams)
from .model import GroupedData, LatentState, MixtureParams
from .rjmcmc import ChainState, PriorConfig, run_chain

__all__ = [
    "ChainState", "DegenerateIntervalError", "DomainError", "Gb2Params", "GroupedData",
    "InvariantError", "LatentState", "LognormalParams", "MixtureParams", "PriorConfig", "run_chain",
]
