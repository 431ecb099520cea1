"""Gaussian-process emulation of time-series dynamics with Bayesian inverse
regression, forecasting and multiple-testing model selection."""
from ._accel import backend_name
from .errors import ClimGPError, InputError
from .gp import (
    DesignGrid,
    GpParams,
    LookupTable,
    PriorConfig,
    build_design_grid,
    derive_prior_config,
    one_step_conditional,
    path_log_likelihood,
    simulate_from_prior,
)
from .ingest import AlignedDataset, LogTempSeries, RawTemperatureSeries, build_aligned_dataset
from .mcmc import ChainOutput, DataSegment, run_chain
from .posteriors import (
    goodness_of_fit,
    sample_forward_posterior,
    sample_inverse_posterior,
    summarize_paths,
)
from .selection import SelectionConfig, run_selection

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset",
    "ChainOutput",
    "ClimGPError",
    "DataSegment",
    "DesignGrid",
    "GpParams",
    "InputError",
    "LogTempSeries",
    "LookupTable",
    "PriorConfig",
    "RawTemperatureSeries",
    "SelectionConfig",
    "backend_name",
    "build_aligned_dataset",
    "build_design_grid",
    "derive_prior_config",
    "goodness_of_fit",
    "one_step_conditional",
    "path_log_likelihood",
    "run_chain",
    "run_selection",
    "sample_forward_posterior",
    "sample_inverse_posterior",
    "simulate_from_prior",
    "summarize_paths",
]
