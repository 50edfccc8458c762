"""Simulator and design toolkit for atomic-frequency-comb memories and
spectral hole burning in rare-earth-doped crystals."""

from afcsim.errors import (
    AfcSimError,
    ConfigurationError,
    DomainError,
    FitError,
    ResolutionError,
    ShapeError,
    StabilityError,
)
from afcsim.spectrum import (
    AbsorptionProfile,
    FieldModel,
    FrequencyGrid,
    IsotopeLine,
    build_absorption,
    natural_nd_lines,
    zeeman_center,
)
from afcsim.pump import (
    LevelScheme,
    PopulationState,
    PumpSequence,
    evolve_populations,
    hole_decay_trace,
    hole_feature_offsets,
    pump_rate,
    relax,
    relax_profile,
    relaxation_factor,
    spectral_features,
    spin_polarization,
    tailored_profile,
)
from afcsim.comb import (
    CombSpec,
    analytic_efficiency,
    comb_profile,
    comb_pump_sequence,
    efficiency_law,
    estimate_comb_period,
    optimal_fineness,
)
from afcsim.prop import (
    EchoResult,
    Pulse,
    detect_echo,
    efficiency_vs_storage_time,
    impulse_response,
    propagate,
    transfer_function,
)
from afcsim.analysis import (
    DecayTrace,
    fit_double_exp,
    fit_lines,
    fit_single_exp,
)

__version__ = "0.1.0"

__all__ = [
    "AfcSimError",
    "ConfigurationError",
    "DomainError",
    "FitError",
    "ResolutionError",
    "ShapeError",
    "StabilityError",
    "AbsorptionProfile",
    "FieldModel",
    "FrequencyGrid",
    "IsotopeLine",
    "build_absorption",
    "natural_nd_lines",
    "zeeman_center",
    "LevelScheme",
    "PopulationState",
    "PumpSequence",
    "evolve_populations",
    "hole_decay_trace",
    "hole_feature_offsets",
    "pump_rate",
    "relax",
    "relax_profile",
    "relaxation_factor",
    "spectral_features",
    "spin_polarization",
    "tailored_profile",
    "CombSpec",
    "analytic_efficiency",
    "comb_profile",
    "comb_pump_sequence",
    "efficiency_law",
    "estimate_comb_period",
    "optimal_fineness",
    "EchoResult",
    "Pulse",
    "detect_echo",
    "efficiency_vs_storage_time",
    "impulse_response",
    "propagate",
    "transfer_function",
    "DecayTrace",
    "fit_double_exp",
    "fit_lines",
    "fit_single_exp",
]
