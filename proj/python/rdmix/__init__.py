"""Bayesian three-component mixture analysis for regression-discontinuity designs.

Thin wrapper over the compiled ``_rdmix`` extension. Dict arguments (priors,
sampler, window) use the same keys as the JSON run configuration.
"""

from ._rdmix import (
    ConfigError,
    DataError,
    Dataset,
    NumericError,
    RdmixError,
    __version__,
    balance_report,
    effective_sample_size,
    fixed_window,
    generate,
    ingest,
    inverse_transform_forcing,
    local_polynomial_rd,
    log_sd_ratio,
    mahalanobis_balance,
    normalized_difference,
    parameter_names,
    rubin_combine,
    run,
    sample,
    scenarios,
    split_rhat,
    summarize_series,
    transform_forcing,
)


def rr_draws(result):
    """RR column of a ``sample`` result as a 1-d array."""
    return result["draws"][:, result["columns"].index("rr")]


__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "NumericError",
    "RdmixError",
    "__version__",
    "balance_report",
    "effective_sample_size",
    "fixed_window",
    "generate",
    "ingest",
    "inverse_transform_forcing",
    "local_polynomial_rd",
    "log_sd_ratio",
    "mahalanobis_balance",
    "normalized_difference",
    "parameter_names",
    "rr_draws",
    "rubin_combine",
    "run",
    "sample",
    "scenarios",
    "split_rhat",
    "summarize_series",
    "transform_forcing",
]
