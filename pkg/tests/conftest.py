"""Shared fixtures.

The expensive ensemble/mixture evolutions are computed once per session
and shared between the unit tests and the acceptance suite through
cached factory fixtures.
"""

from __future__ import annotations

import numpy as np
import pytest

from cantori import (
    DOUBLE,
    SINGLE,
    DimensionlessParams,
    evolve_ensemble,
    init_quantum_mixture,
    init_thermal_ensemble,
    simulate_quantum,
)

SIGMA_RHO = 9.2
KBAR = 2.6

# Desk-scale acceptance parameters, backed by the convergence checks in
# the unit suites (doubling substeps or n_max moves the fraction-outside
# observable by well under 0.2 points).
CLASSICAL_SIZE = 40000
CLASSICAL_SUBSTEPS = 20
QUANTUM_MEMBERS = 256
QUANTUM_N_MAX = 127
QUANTUM_SUBSTEPS = 100
SEED = 7

_TRAINS = {"double": DOUBLE, "single": SINGLE}


@pytest.fixture(scope="session")
def classical_run():
    """Factory: classical distribution series for (k, num_kicks)."""
    cache: dict[tuple, list] = {}

    def factory(k: float, num_kicks: int = 70, train_name: str = "double"):
        key = (k, num_kicks, train_name)
        if key not in cache:
            ensemble = init_thermal_ensemble(SIGMA_RHO, CLASSICAL_SIZE, SEED)
            cache[key] = evolve_ensemble(
                ensemble, k, _TRAINS[train_name], num_kicks, CLASSICAL_SUBSTEPS
            )
        return cache[key]

    return factory


@pytest.fixture(scope="session")
def quantum_run():
    """Factory: quantum distribution series for (k, eta, train)."""
    cache: dict[tuple, list] = {}

    def factory(
        k: float,
        eta: float = 0.0,
        train_name: str = "double",
        num_kicks: int = 70,
        n_max: int = QUANTUM_N_MAX,
    ):
        key = (k, eta, train_name, num_kicks, n_max)
        if key not in cache:
            mixture = init_quantum_mixture(
                SIGMA_RHO, KBAR, QUANTUM_MEMBERS, n_max=n_max, seed=SEED
            )
            params = DimensionlessParams(k=k, kbar=KBAR, eta=eta, num_kicks=num_kicks)
            cache[key] = simulate_quantum(
                params,
                _TRAINS[train_name],
                mixture,
                substeps_per_pulse=QUANTUM_SUBSTEPS,
                threads=4,
            )
        return cache[key]

    return factory
