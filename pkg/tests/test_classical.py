"""Unit tests for the classical integrator, sections, ensembles, and flux."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.special import erfc

from cantori.classical import (
    ClassicalState,
    cantorus_flux,
    equilibrium_flux,
    evolve_ensemble,
    init_thermal_ensemble,
    one_period_map,
    one_period_map_inverse,
    poincare_section,
    seed_grid,
)
from cantori.model import DOUBLE, SINGLE
from cantori.observables import TEN_PI, fraction_outside

TWO_PI = 2.0 * math.pi


def reference_period_map(phi0: float, rho0: float, k: float, train) -> tuple[float, float]:
    """High-order adaptive oracle: integrate segment by segment with DOP853.

    Gaps are exact drifts; each rectangular pulse is integrated with tight
    tolerances, so the only approximation is the ODE solver's 1e-12 bands.
    """
    phi, rho = float(phi0), float(rho0)
    t = 0.0
    for e in train.leading_edges:
        phi += rho * (e - t)
        sol = solve_ivp(
            lambda _, y: [y[1], -k * math.sin(y[0])],
            (0.0, train.pulse_width),
            [phi, rho],
            method="DOP853",
            rtol=1e-12,
            atol=1e-12,
        )
        phi, rho = sol.y[0, -1], sol.y[1, -1]
        t = e + train.pulse_width
    phi += rho * (1.0 - t)
    return phi % TWO_PI, rho


class TestOnePeriodMap:
    def test_free_particle(self):
        out = one_period_map(ClassicalState(phi=1.0, rho=2.0), 0.0, DOUBLE, 50)
        assert out.phi == pytest.approx(3.0, abs=1e-12)
        assert out.rho == pytest.approx(2.0, abs=1e-12)

    def test_against_adaptive_oracle(self):
        for phi0, rho0 in [(1.0, 2.0), (2.0, 15.0), (4.5, -31.0)]:
            ref_phi, ref_rho = reference_period_map(phi0, rho0, 300.0, DOUBLE)
            out = one_period_map(ClassicalState(phi=phi0, rho=rho0), 300.0, DOUBLE, 50)
            assert abs(out.phi - ref_phi) < 1e-6
            assert abs(out.rho - ref_rho) < 1e-6

    def test_jacobian_determinant(self):
        eps = 1e-6
        rng = np.random.default_rng(1)
        points = [(2.0, 15.0)] + [
            (rng.uniform(0, TWO_PI), rng.uniform(-30, 30)) for _ in range(20)
        ]
        for k in (70.0, 300.0):
            for phi0, rho0 in points:
                vals = {}
                for dphi, drho in [(eps, 0), (-eps, 0), (0, eps), (0, -eps)]:
                    out = one_period_map(
                        ClassicalState(phi=phi0 + dphi, rho=rho0 + drho), k, DOUBLE, 50
                    )
                    vals[(dphi, drho)] = (out.phi, out.rho)
                # Unwrap the angle differences across the 2 pi seam.
                def diff(a, b):
                    d = a - b
                    return (d + math.pi) % TWO_PI - math.pi

                dphi_dphi = diff(vals[(eps, 0)][0], vals[(-eps, 0)][0]) / (2 * eps)
                drho_dphi = (vals[(eps, 0)][1] - vals[(-eps, 0)][1]) / (2 * eps)
                dphi_drho = diff(vals[(0, eps)][0], vals[(0, -eps)][0]) / (2 * eps)
                drho_drho = (vals[(0, eps)][1] - vals[(0, -eps)][1]) / (2 * eps)
                det = dphi_dphi * drho_drho - dphi_drho * drho_dphi
                assert det == pytest.approx(1.0, abs=1e-6)

    def test_reversibility(self):
        state = ClassicalState(phi=2.0, rho=15.0)
        for k in (70.0, 300.0):
            fwd = one_period_map(state, k, DOUBLE, 50)
            back = one_period_map_inverse(fwd, k, DOUBLE, 50)
            assert back.phi == pytest.approx(state.phi, abs=1e-8)
            assert back.rho == pytest.approx(state.rho, abs=1e-8)

    def test_substep_convergence_at_default(self):
        state = ClassicalState(phi=2.0, rho=15.0)
        a = one_period_map(state, 300.0, DOUBLE, 100)
        b = one_period_map(state, 300.0, DOUBLE, 200)
        assert abs(a.phi - b.phi) < 1e-6
        assert abs(a.rho - b.rho) < 1e-6

    def test_rejects_bad_substeps(self):
        with pytest.raises(ValueError):
            one_period_map(ClassicalState(phi=0.0, rho=0.0), 1.0, DOUBLE, 0)


class TestPoincareSection:
    def test_integrable_limit(self):
        phi0, rho0 = seed_grid(5, 5, 20.0)
        section = poincare_section(phi0, rho0, 0.0, DOUBLE, 10, 20)
        assert np.allclose(section.rho, section.rho[:, :1])

    def test_phi_reduced(self):
        phi0, rho0 = seed_grid(4, 4, 9.0 * math.pi)
        section = poincare_section(phi0, rho0, 70.0, DOUBLE, 20, 20)
        assert np.all(section.phi >= 0.0)
        assert np.all(section.phi < TWO_PI)

    def test_confinement_inside_30pi(self):
        # The outermost barrier holds at every experimental kick strength.
        phi0, rho0 = seed_grid(8, 8, 28.0 * math.pi)
        for k in (70.0, 310.0):
            section = poincare_section(phi0, rho0, k, DOUBLE, 200, 20)
            assert np.max(np.abs(section.rho)) <= 30.0 * math.pi + 1.0


class TestThermalEnsemble:
    def test_moments_and_tail(self):
        ens = init_thermal_ensemble(9.2, 100000, 3)
        assert ens.rho.std() == pytest.approx(9.2, abs=0.1)
        assert ens.rho.mean() == pytest.approx(0.0, abs=0.15)
        outside = np.mean(np.abs(ens.rho) > TEN_PI)
        assert outside == pytest.approx(6.4e-4, abs=5e-4)

    def test_tail_against_erfc_oracle(self):
        ens = init_thermal_ensemble(9.2, 1000000, 5)
        expected = erfc(TEN_PI / 9.2 / math.sqrt(2.0))
        outside = np.mean(np.abs(ens.rho) > TEN_PI)
        assert expected == pytest.approx(6.4e-4, rel=0.02)
        assert outside == pytest.approx(expected, rel=0.25)

    def test_determinism(self):
        a = init_thermal_ensemble(9.2, 1000, 11)
        b = init_thermal_ensemble(9.2, 1000, 11)
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.rho, b.rho)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            init_thermal_ensemble(0.0, 10, 0)
        with pytest.raises(ValueError):
            init_thermal_ensemble(9.2, 0, 0)


class TestEvolveEnsemble:
    def test_k_zero_is_static(self):
        ens = init_thermal_ensemble(9.2, 2000, 1)
        series = evolve_ensemble(ens, 0.0, DOUBLE, 5, 20)
        for dist in series[1:]:
            assert np.array_equal(dist.probabilities, series[0].probabilities)

    def test_broken_barrier_leaks_at_k50(self):
        # Transport through the barely-broken barrier is slow but nonzero.
        ens = init_thermal_ensemble(9.2, 20000, 1)
        series = evolve_ensemble(ens, 50.0, DOUBLE, 200, 20)
        assert fraction_outside(series[-1], TEN_PI) > fraction_outside(series[0], TEN_PI)

    def test_monotone_equilibration(self):
        # Fraction outside is non-decreasing up to binomial noise.
        ens = init_thermal_ensemble(9.2, 20000, 2)
        series = evolve_ensemble(ens, 240.0, DOUBLE, 40, 20)
        pct = np.array([fraction_outside(d, TEN_PI) for d in series])
        sigma = 100.0 * np.sqrt(0.5 * 0.5 / 20000)
        assert np.all(np.diff(pct) > -3.0 * 100 * sigma / 100)


class TestFlux:
    def test_zero_kick_zero_flux(self):
        est = cantorus_flux(0.0, DOUBLE, TEN_PI, 2000, 20)
        assert est.flux_area == 0.0
        assert est.flux_in_kbar == 0.0

    def test_error_scaling(self):
        # Statistical error falls like 1/sqrt(samples).
        small = cantorus_flux(120.0, DOUBLE, TEN_PI, 2000, 20)
        large = cantorus_flux(120.0, DOUBLE, TEN_PI, 32000, 20)
        ratio = small.statistical_error / large.statistical_error
        assert ratio == pytest.approx(4.0, rel=0.3)

    def test_nonnegative_and_counts(self):
        est = cantorus_flux(120.0, DOUBLE, TEN_PI, 5000, 20)
        assert est.flux_in_kbar >= 0.0
        assert est.sample_count == 5000

    def test_rejects_small_samples(self):
        with pytest.raises(ValueError):
            cantorus_flux(120.0, DOUBLE, TEN_PI, 10, 20)
        with pytest.raises(ValueError):
            equilibrium_flux(120.0, DOUBLE, TEN_PI, 10)

    def test_equilibrium_flux_reproducible(self):
        a = equilibrium_flux(120.0, DOUBLE, TEN_PI, 2000, seed=9)
        b = equilibrium_flux(120.0, DOUBLE, TEN_PI, 2000, seed=9)
        assert a.flux_area == b.flux_area
