"""Classical and quantum momentum diffusion of a double-pulse kicked atom."""

from .model import (
    DOUBLE,
    SINGLE,
    DimensionlessParams,
    LabParameters,
    PulseTrain,
    dimensionless_from_lab,
    fourier_coefficient,
    kam_boundaries,
    pulse_envelope,
)
from .classical import (
    ClassicalEnsemble,
    ClassicalState,
    FluxEstimate,
    PoincareSection,
    cantorus_flux,
    equilibrium_flux,
    evolve_ensemble,
    init_thermal_ensemble,
    one_period_map,
    poincare_section,
)
from .quantum import (
    EmissionModel,
    LadderState,
    ThermalMixture,
    TruncationError,
    apply_emission,
    density_matrix_crosscheck,
    evolve_period,
    init_quantum_mixture,
    simulate_quantum,
)
from .observables import (
    DiffusionCurve,
    MomentumDistribution,
    break_time,
    detector_blur,
    fit_localization_length,
    fraction_outside,
    kinetic_energy,
)

__version__ = "0.1.0"
