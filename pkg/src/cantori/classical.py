"""Classical dynamics of the pulsed standing-wave Hamiltonian.

Equations of motion: dphi/dt = rho, drho/dt = -k sin(phi) f(t).  The
rectangular envelope makes the period exactly piecewise integrable: free
drift across gaps, constant-potential pendulum dynamics inside pulses.
The pulse interior is advanced with a fixed-step fourth-order Yoshida
composition of velocity-leapfrog (kick-drift-kick) stages, so the
one-period map is symplectic to round-off.

All stepping routines are vectorised over numpy arrays of phase-space
points; momentum is never wrapped, only phi is periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import PulseTrain
from .observables import MomentumDistribution, default_grid

TWO_PI = 2.0 * math.pi

DEFAULT_SUBSTEPS = 100

# Fourth-order Yoshida composition coefficients: each substep is three
# velocity-leapfrog stages with these fractional time steps.
_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1
_YOSHIDA = (_YOSHIDA_W1, _YOSHIDA_W0, _YOSHIDA_W1)


@dataclass(frozen=True)
class ClassicalState:
    """Single phase-space point (phi in [0, 2 pi), rho unbounded)."""

    phi: float
    rho: float


@dataclass
class ClassicalEnsemble:
    """Weighted collection of phase-space points with a reproducing seed."""

    phi: np.ndarray
    rho: np.ndarray
    weights: np.ndarray
    rng_seed: int

    def __post_init__(self) -> None:
        if self.phi.shape != self.rho.shape or self.phi.shape != self.weights.shape:
            raise ValueError("phi, rho and weights must have identical shapes")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total}")

    @property
    def size(self) -> int:
        return self.phi.size


@dataclass
class PoincareSection:
    """Stroboscopic samples (phi, rho) at integer periods, per orbit.

    phi and rho have shape (n_orbits, n_samples); orbit_ids tags rows by
    seed-point index.
    """

    phi: np.ndarray
    rho: np.ndarray
    orbit_ids: np.ndarray


@dataclass(frozen=True)
class FluxEstimate:
    """Phase-space area crossing a momentum line per period, upward."""

    k: float
    flux_area: float
    flux_in_kbar: float
    sample_count: int
    statistical_error: float


def _advance_period(
    phi: np.ndarray,
    rho: np.ndarray,
    k,
    train: PulseTrain,
    substeps: int,
    reverse: bool = False,
) -> None:
    """Advance (phi, rho) arrays in place by one drive period.

    k may be a scalar or an array matching phi (per-particle kick
    strengths).  reverse=True applies the exact inverse map: the segment
    schedule is traversed backwards with negated time steps.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    w = train.pulse_width
    dt = w / substeps
    segs = []
    t = 0.0
    for e in train.leading_edges:
        segs.append((e - t, True))
        t = e + w
    segs.append((1.0 - t, False))

    if reverse:
        # Each forward (gap, pulse) pair becomes (pulse, gap) with negated
        # steps, starting from the trailing gap.
        dt = -dt
        schedule = [(-segs[-1][0], False)]
        for gap, _ in reversed(segs[:-1]):
            schedule.append((0.0, True))
            schedule.append((-gap, False))
    else:
        schedule = []
        for gap, pulsed in segs:
            schedule.append((gap, False))
            if pulsed:
                schedule.append((0.0, True))

    for gap, pulsed in schedule:
        if gap != 0.0:
            phi += rho * gap
        if pulsed:
            for _ in range(substeps):
                for c in _YOSHIDA:
                    h = c * dt
                    half = 0.5 * h * k
                    rho -= half * np.sin(phi)
                    phi += h * rho
                    rho -= half * np.sin(phi)
    np.mod(phi, TWO_PI, out=phi)


def one_period_map(
    state: ClassicalState,
    k: float,
    train: PulseTrain,
    substeps_per_pulse: int = DEFAULT_SUBSTEPS,
) -> ClassicalState:
    """Map a single phase-space point across one drive period."""
    phi = np.array([state.phi], dtype=float)
    rho = np.array([state.rho], dtype=float)
    _advance_period(phi, rho, k, train, substeps_per_pulse)
    return ClassicalState(phi=float(phi[0]), rho=float(rho[0]))


def one_period_map_inverse(
    state: ClassicalState,
    k: float,
    train: PulseTrain,
    substeps_per_pulse: int = DEFAULT_SUBSTEPS,
) -> ClassicalState:
    """Exact inverse of one_period_map (negated step schedule)."""
    phi = np.array([state.phi], dtype=float)
    rho = np.array([state.rho], dtype=float)
    _advance_period(phi, rho, k, train, substeps_per_pulse, reverse=True)
    return ClassicalState(phi=float(phi[0]), rho=float(rho[0]))


def seed_grid(n_phi: int, n_rho: int, rho_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid of seed points covering [0, 2 pi) x [-rho_max, rho_max]."""
    phi = np.linspace(0.0, TWO_PI, n_phi, endpoint=False)
    rho = np.linspace(-rho_max, rho_max, n_rho)
    P, R = np.meshgrid(phi, rho)
    return P.ravel().copy(), R.ravel().copy()


def poincare_section(
    phi0: np.ndarray,
    rho0: np.ndarray,
    k: float,
    train: PulseTrain,
    periods: int,
    substeps_per_pulse: int = DEFAULT_SUBSTEPS,
) -> PoincareSection:
    """Stroboscopic section from the given seed points.

    Records (phi, rho) for every orbit after each of `periods`
    applications of the one-period map; the initial points are included
    as sample 0.
    """
    if periods < 1:
        raise ValueError(f"periods must be >= 1, got {periods}")
    phi = np.array(phi0, dtype=float).ravel().copy()
    rho = np.array(rho0, dtype=float).ravel().copy()
    n = phi.size
    out_phi = np.empty((n, periods + 1))
    out_rho = np.empty((n, periods + 1))
    out_phi[:, 0] = np.mod(phi, TWO_PI)
    out_rho[:, 0] = rho
    for j in range(1, periods + 1):
        _advance_period(phi, rho, k, train, substeps_per_pulse)
        out_phi[:, j] = phi
        out_rho[:, j] = rho
    return PoincareSection(phi=out_phi, rho=out_rho, orbit_ids=np.arange(n))


def init_thermal_ensemble(
    sigma_rho: float, size: int, seed: int
) -> ClassicalEnsemble:
    """Thermal ensemble: phi uniform, rho Gaussian, equal weights."""
    if sigma_rho <= 0:
        raise ValueError(f"sigma_rho must be > 0, got {sigma_rho}")
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, TWO_PI, size)
    rho = rng.normal(0.0, sigma_rho, size)
    weights = np.full(size, 1.0 / size)
    return ClassicalEnsemble(phi=phi, rho=rho, weights=weights, rng_seed=seed)


def evolve_ensemble(
    ensemble: ClassicalEnsemble,
    k,
    train: PulseTrain,
    num_kicks: int,
    substeps_per_pulse: int = DEFAULT_SUBSTEPS,
    grid: np.ndarray | None = None,
    bin_width: float = 0.5,
) -> list[MomentumDistribution]:
    """Evolve every member and bin rho after each period.

    Returns num_kicks + 1 distributions; entry 0 is the initial state.
    k may be an array of per-member kick strengths (beam-profile spread).
    """
    if num_kicks < 1:
        raise ValueError(f"num_kicks must be >= 1, got {num_kicks}")
    if grid is None:
        grid = default_grid(bin_width=bin_width)
    phi = ensemble.phi.copy()
    rho = ensemble.rho.copy()
    series = [MomentumDistribution.from_samples(rho, ensemble.weights, grid)]
    for _ in range(num_kicks):
        _advance_period(phi, rho, k, train, substeps_per_pulse)
        series.append(MomentumDistribution.from_samples(rho, ensemble.weights, grid))
    return series


def cantorus_flux(
    k: float,
    train: PulseTrain,
    rho_c: float,
    samples: int,
    substeps_per_pulse: int = DEFAULT_SUBSTEPS,
    kbar: float = 2.6,
) -> FluxEstimate:
    """Phase-space flux across rho = rho_c per period, toward larger momenta.

    Launches particles on the line rho = rho_c with phi stratified over
    [0, 2 pi), applies one period, and integrates the positive momentum
    transfer: flux = (2 pi / M) * sum max(rho1 - rho_c, 0).
    """
    if samples < 1000:
        raise ValueError(f"samples must be >= 1000, got {samples}")
    phi = TWO_PI * (np.arange(samples) + 0.5) / samples
    rho = np.full(samples, float(rho_c))
    _advance_period(phi, rho, k, train, substeps_per_pulse)
    gain = np.maximum(rho - rho_c, 0.0)
    flux = TWO_PI * gain.mean()
    err = TWO_PI * gain.std(ddof=1) / math.sqrt(samples)
    return FluxEstimate(
        k=k,
        flux_area=flux,
        flux_in_kbar=flux / kbar,
        sample_count=samples,
        statistical_error=err,
    )


def equilibrium_flux(
    k: float,
    train: PulseTrain,
    rho_c: float,
    samples: int,
    substeps_per_pulse: int = 20,
    kbar: float = 2.6,
    outer_bound: float | None = None,
    burn_in: int = 20,
    measure: int = 10,
    seed: int = 0,
) -> FluxEstimate:
    """Steady-state phase-space flux across rho = rho_c per period.

    Fills the chaotic region between the outer confining barriers with a
    uniform ensemble, lets it mix for burn_in periods, then counts the
    area crossing rho_c upward on each of the next measure periods:
    flux = area * P(rho < rho_c before, rho > rho_c after).

    This equilibrium crossing rate is insensitive to the wiggles of the
    surrogate dividing line and is the estimator that reproduces the
    turnstile area of a broken barrier; the one-shot line-launched
    cantorus_flux overestimates it once the barrier is strongly broken.
    """
    if samples < 1000:
        raise ValueError(f"samples must be >= 1000, got {samples}")
    if outer_bound is None:
        outer_bound = 3.0 * rho_c
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, TWO_PI, samples)
    rho = rng.uniform(-outer_bound, outer_bound, samples)
    for _ in range(burn_in):
        _advance_period(phi, rho, k, train, substeps_per_pulse)
    area = TWO_PI * 2.0 * outer_bound
    fractions = np.empty(measure)
    for j in range(measure):
        below = rho < rho_c
        _advance_period(phi, rho, k, train, substeps_per_pulse)
        fractions[j] = np.mean(below & (rho > rho_c))
    flux = area * fractions.mean()
    # Treat per-period crossing fractions as roughly independent.
    err = area * fractions.std(ddof=1) / math.sqrt(measure)
    return FluxEstimate(
        k=k,
        flux_area=flux,
        flux_in_kbar=flux / kbar,
        sample_count=samples,
        statistical_error=err,
    )
