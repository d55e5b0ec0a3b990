"""Mixed-effects functional-coefficient autoregression for multichannel panels."""

from ._core import (
    MxfarError,
    Panel,
    bar_f,
    coefficient_bands,
    default_omega_grid,
    edge_significance,
    fit,
    fpdc,
    mean_fpdc,
    nonlinearity_test,
    read_panel_csv,
    select_model,
    simulate,
    validate_panel_file,
    write_panel_csv,
)

__all__ = [
    "MxfarError",
    "Panel",
    "bar_f",
    "coefficient_bands",
    "default_omega_grid",
    "edge_significance",
    "fit",
    "fpdc",
    "mean_fpdc",
    "nonlinearity_test",
    "read_panel_csv",
    "select_model",
    "simulate",
    "validate_panel_file",
    "write_panel_csv",
]
