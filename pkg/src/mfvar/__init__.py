"""Mixed-frequency Bayesian VAR with common stochastic volatility."""

from .calendar import IngestError, MixedPanel, SeriesSpec, WeekStamp, assemble_panel, ingest_manifest
from .dgp import DgpSpec, simulate
from .diagnostics import chain_diagnostics, effective_sample_size, split_rhat
from .priors import CsvPrior, MinnesotaHyper, Priors
from .sampler import Chain, ChainConfig, PosteriorDraw, gibbs_run
from .statespace import build_companion, build_observation_map, kalman_filter, simulation_smoother
from .structural import counterfactual, historical_decomposition, identify, irf

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ChainConfig",
    "CsvPrior",
    "DgpSpec",
    "IngestError",
    "MinnesotaHyper",
    "MixedPanel",
    "PosteriorDraw",
    "Priors",
    "SeriesSpec",
    "WeekStamp",
    "assemble_panel",
    "build_companion",
    "build_observation_map",
    "chain_diagnostics",
    "counterfactual",
    "effective_sample_size",
    "gibbs_run",
    "historical_decomposition",
    "identify",
    "ingest_manifest",
    "irf",
    "kalman_filter",
    "simulate",
    "simulation_smoother",
    "split_rhat",
]
