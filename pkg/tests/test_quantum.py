"""Unit tests for the quantum ladder engine, emission, and the crosscheck."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from cantori.model import DOUBLE, SINGLE, DimensionlessParams
from cantori.quantum import (
    EmissionModel,
    LadderState,
    ThermalMixture,
    TruncationError,
    apply_emission,
    density_matrix_crosscheck,
    evolve_period,
    init_quantum_mixture,
    member_rng,
    shift_momentum,
    simulate_quantum,
)
from cantori.observables import TEN_PI, fraction_outside

KBAR = 2.6


def exact_period_propagator(k: float, kbar: float, beta: float, n_max: int, train) -> np.ndarray:
    """Matrix-exponential oracle on the full ladder.

    The Hamiltonian is piecewise constant in time: kinetic-only across
    gaps, kinetic plus the cos(phi) hopping term inside pulses.  The
    one-period propagator is the ordered product of segment exponentials.
    """
    n = np.arange(-n_max, n_max + 1)
    kinetic = np.diag(0.5 * (kbar * (n + beta)) ** 2)
    hop = np.zeros((n.size, n.size))
    for i in range(n.size - 1):
        hop[i, i + 1] = hop[i + 1, i] = 1.0
    pulsed = kinetic - 0.5 * k * hop
    U = np.eye(n.size, dtype=complex)
    t = 0.0
    for e in train.leading_edges:
        U = expm(-1j * kinetic * (e - t) / kbar) @ U
        U = expm(-1j * pulsed * train.pulse_width / kbar) @ U
        t = e + train.pulse_width
    U = expm(-1j * kinetic * (1.0 - t) / kbar) @ U
    return U


class TestLadderState:
    def test_concentrated(self):
        state = LadderState.concentrated(3, 0.25, KBAR, 8)
        assert state.norm == pytest.approx(1.0)
        assert state.momentum_mean() == pytest.approx(KBAR * 3.25)

    def test_validation(self):
        with pytest.raises(ValueError):
            LadderState(beta=1.5, amplitudes=np.zeros(5, complex), kbar=KBAR)
        with pytest.raises(ValueError):
            LadderState(beta=0.0, amplitudes=np.zeros(4, complex), kbar=KBAR)


class TestEvolvePeriod:
    def test_kinetic_limit_preserves_populations(self):
        state = LadderState.concentrated(2, 0.3, KBAR, 16)
        state.amplitudes[10] = 0.5
        state.amplitudes /= math.sqrt(state.norm)
        out = evolve_period(state, 0.0, DOUBLE, 10)
        assert np.allclose(np.abs(out.amplitudes), np.abs(state.amplitudes), atol=1e-13)
        assert out.beta == state.beta

    def test_unitarity_over_70_periods(self):
        state = LadderState.concentrated(0, 0.37, KBAR, 127)
        for _ in range(70):
            state = evolve_period(state, 310.0, DOUBLE, 100)
        assert abs(state.norm - 1.0) < 1e-10

    def test_matrix_exponential_oracle(self):
        for train in (DOUBLE, SINGLE):
            for beta in (0.0, 0.41):
                state = LadderState.concentrated(0, beta, KBAR, 8)
                out = evolve_period(state, 5.0, train, 400)
                U = exact_period_propagator(5.0, KBAR, beta, 8, train)
                exact = U @ state.amplitudes
                fidelity = abs(np.vdot(out.amplitudes, exact))
                assert fidelity > 1.0 - 1e-8

    def test_substep_convergence(self):
        state = LadderState.concentrated(1, 0.2, KBAR, 32)
        a = evolve_period(state, 40.0, DOUBLE, 100)
        b = evolve_period(state, 40.0, DOUBLE, 200)
        overlap = abs(np.vdot(a.amplitudes, b.amplitudes))
        assert overlap > 1.0 - 1e-8

    def test_edge_guard_raises(self):
        state = LadderState.concentrated(0, 0.0, KBAR, 8)
        with pytest.raises(TruncationError):
            evolve_period(state, 310.0, DOUBLE, 50)


class TestEmission:
    def test_eta_zero_identity(self):
        state = LadderState.concentrated(1, 0.3, KBAR, 8)
        out = apply_emission(state, EmissionModel(eta=0.0), np.random.default_rng(0))
        assert out is state

    def test_integer_carry_shift(self):
        state = LadderState.concentrated(1, 0.3, KBAR, 8)
        out = shift_momentum(state, 1.0)
        assert out.beta == pytest.approx(0.3)
        assert abs(out.amplitudes[2 + 8]) == pytest.approx(1.0)

    def test_shift_moments(self):
        rng = np.random.default_rng(12)
        state = LadderState.concentrated(0, 0.5, KBAR, 8)
        model = EmissionModel(eta=1.0)
        shifts = np.empty(100000)
        for i in range(shifts.size):
            out = apply_emission(state, model, rng)
            shifts[i] = out.momentum_mean() - state.momentum_mean()
        assert abs(shifts.mean()) < 0.01 * KBAR
        assert shifts.var() == pytest.approx(KBAR**2 / 3.0, rel=0.02)

    def test_shift_off_the_edge_raises(self):
        state = LadderState.concentrated(8, 0.0, KBAR, 8)
        with pytest.raises(TruncationError):
            shift_momentum(state, 1.5)


class TestMixture:
    def test_moments_and_tail(self):
        mix = init_quantum_mixture(9.2, KBAR, 2000, n_max=64, seed=4)
        rho0 = mix.rho0
        w = mix.weights
        mean = float(np.sum(w * rho0))
        std = math.sqrt(float(np.sum(w * (rho0 - mean) ** 2)))
        assert abs(mean) < 0.3
        assert std == pytest.approx(9.2, abs=0.2)
        outside = float(np.sum(w[np.abs(rho0) > TEN_PI]))
        assert outside == pytest.approx(6.4e-4, abs=1e-3)

    def test_exact_decomposition_and_norm(self):
        mix = init_quantum_mixture(9.2, KBAR, 64, n_max=64, seed=4)
        for state, rho0 in zip(mix.states, mix.rho0):
            assert state.norm == 1.0
            n0 = state.sites[np.argmax(np.abs(state.amplitudes))]
            assert KBAR * (n0 + state.beta) == pytest.approx(rho0, abs=1e-9)

    def test_rejects_small_ladder(self):
        with pytest.raises(ValueError):
            init_quantum_mixture(9.2, KBAR, 8, n_max=16, seed=0)

    def test_member_rng_substreams(self):
        a = member_rng(3, 17).random(4)
        b = member_rng(3, 17).random(4)
        c = member_rng(3, 18).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSimulateQuantum:
    def test_k_zero_distribution_static(self):
        mix = init_quantum_mixture(9.2, KBAR, 32, n_max=64, seed=2)
        params = DimensionlessParams(k=0.0, kbar=KBAR, eta=0.0, num_kicks=4)
        series = simulate_quantum(params, DOUBLE, mix, substeps_per_pulse=10)
        for dist in series[1:]:
            assert np.allclose(dist.probabilities, series[0].probabilities, atol=1e-14)

    def test_thread_count_invariance(self):
        mix = init_quantum_mixture(9.2, KBAR, 96, n_max=64, seed=2)
        params = DimensionlessParams(k=40.0, kbar=KBAR, eta=0.3, num_kicks=3)
        one = simulate_quantum(params, DOUBLE, mix, substeps_per_pulse=20, threads=1)
        four = simulate_quantum(params, DOUBLE, mix, substeps_per_pulse=20, threads=4)
        for a, b in zip(one, four):
            assert np.array_equal(a.probabilities, b.probabilities)

    def test_truncation_reports_member(self):
        mix = init_quantum_mixture(9.2, KBAR, 8, n_max=60, seed=2)
        # One kick at this strength spreads far past the 60-site half-ladder.
        params = DimensionlessParams(k=3000.0, kbar=KBAR, eta=0.0, num_kicks=10)
        with pytest.raises(TruncationError) as err:
            simulate_quantum(params, DOUBLE, mix, substeps_per_pulse=20)
        assert err.value.member_index is not None

    def test_kbar_mismatch_rejected(self):
        mix = init_quantum_mixture(9.2, KBAR, 8, n_max=60, seed=2)
        params = DimensionlessParams(k=1.0, kbar=2.0, eta=0.0, num_kicks=1)
        with pytest.raises(ValueError):
            simulate_quantum(params, DOUBLE, mix)


class TestCrosscheck:
    def test_eta_zero_exact(self):
        report = density_matrix_crosscheck(
            40.0, KBAR, 0.0, DOUBLE, n_max=12, num_kicks=3,
            quadrature_nodes=4, mc_samples=2000, seed=0,
        )
        assert report.max_discrepancy < 1e-10
        assert report.within_3se

    def test_eta_half_agrees(self):
        report = density_matrix_crosscheck(
            40.0, KBAR, 0.5, DOUBLE, n_max=12, num_kicks=4,
            quadrature_nodes=12, mc_samples=20000, seed=0,
        )
        assert report.within_3se

    def test_eta_one_worst_case(self):
        report = density_matrix_crosscheck(
            40.0, KBAR, 1.0, DOUBLE, n_max=12, num_kicks=2,
            quadrature_nodes=24, mc_samples=20000, seed=0,
        )
        assert report.within_3se
        assert report.max_discrepancy < 5e-3
