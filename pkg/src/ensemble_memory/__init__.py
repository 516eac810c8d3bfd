"""Linearized quantum-noise model of squeezing transfer between light and an atomic ensemble in a cavity."""

__version__ = "0.1.0"

from .analytic import (
    epr_transfer,
    memory_efficiency,
    readout_correlation,
    readout_variance,
    repeater_variances,
    transfer_efficiency,
    transfer_efficiency_curve,
    write_variance,
)
from .errors import (
    ConfigurationError,
    EnsembleMemoryError,
    NumericalError,
    StepSizeError,
    UndefinedQuantityError,
)
from .linear import (
    CovarianceMatrix,
    LinearSystem,
    OutputQuadrature,
    ProtocolTimeline,
    SpinQuadrature,
    build_epr_system,
    build_linear_system,
    cascade_systems,
    evolve_covariance,
    matched_filter_variance,
    noise_spectrum,
    output_autocorrelation,
    steady_covariance,
)
from .model import (
    DerivedRates,
    InputFieldSpec,
    InteractionMode,
    SystemParams,
    derive_rates,
    min_spin_variance,
    validate_regime,
)
from .protocols import ScenarioReport, run_epr, run_repeater, run_store_readout, run_write

__all__ = [
    "ScenarioReport",
    "run_epr",
    "run_repeater",
    "run_store_readout",
    "run_write",
    "__version__",
    "epr_transfer",
    "memory_efficiency",
    "readout_correlation",
    "readout_variance",
    "repeater_variances",
    "transfer_efficiency",
    "transfer_efficiency_curve",
    "write_variance",
    "ConfigurationError",
    "EnsembleMemoryError",
    "NumericalError",
    "StepSizeError",
    "UndefinedQuantityError",
    "CovarianceMatrix",
    "LinearSystem",
    "OutputQuadrature",
    "ProtocolTimeline",
    "SpinQuadrature",
    "build_epr_system",
    "build_linear_system",
    "cascade_systems",
    "evolve_covariance",
    "matched_filter_variance",
    "noise_spectrum",
    "output_autocorrelation",
    "steady_covariance",
    "DerivedRates",
    "InputFieldSpec",
    "InteractionMode",
    "SystemParams",
    "derive_rates",
    "min_spin_variance",
    "validate_regime",
]
