"""Pulse trains, their Fourier content, and lab-to-dimensionless conversion.

The system is a particle in a pulsed standing wave,

    H = rho**2 / 2 - k * cos(phi) * f(t),

where f(t) is a periodic train of rectangular sub-pulses with unit period.
Expanding the drive as a sum of travelling-wave resonances,

    H = rho**2 / 2 - k * sum_r a_r * cos(phi - 2*pi*r*t),

places fundamental resonances at rho = 2*pi*r.  Momentum values 2*pi*r at
which a_r vanishes carry no resonant drive and act as KAM boundaries; when a
boundary is broken by neighbouring resonances it leaves a leaky cantorus.
Everything in this module is a pure function of immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# |a_r| below this is treated as an exact zero of the closed form.
ZERO_TOL = 1e-12

# Cs recoil frequency at 852 nm, rad/s.
CS_RECOIL_OMEGA = 2.0 * math.pi * 2066.3

# Cs 6P_{3/2} hyperfine intervals (F'=5 <- F'=4, F'=4 <- F'=3), rad/s.
CS_SPLITTING_54 = 2.0 * math.pi * 251.0916e6
CS_SPLITTING_43 = 2.0 * math.pi * 201.2871e6


@dataclass(frozen=True)
class PulseTrain:
    """Periodic train of equal-width rectangular pulses, period 1.

    pulse_width and leading_edges are in units of the drive period.
    Sub-pulses must not overlap, cyclically: each pulse ends before the
    next leading edge, and the last before the first edge plus one period.
    """

    pulse_width: float
    leading_edges: tuple[float, ...]

    def __post_init__(self) -> None:
        w = self.pulse_width
        edges = tuple(float(e) for e in self.leading_edges)
        if not 0.0 < w < 1.0:
            raise ValueError(f"pulse_width must be in (0, 1), got {w}")
        if len(edges) == 0:
            raise ValueError("at least one leading edge is required")
        if any(not 0.0 <= e < 1.0 for e in edges):
            raise ValueError(f"leading edges must lie in [0, 1): {edges}")
        if tuple(sorted(edges)) != edges:
            raise ValueError(f"leading edges must be ascending: {edges}")
        for a, b in zip(edges, edges[1:]):
            if a + w > b:
                raise ValueError(f"pulses overlap: edge {a} + width {w} > edge {b}")
        if edges[-1] + w > edges[0] + 1.0:
            raise ValueError("last pulse overlaps the first, cyclically")
        object.__setattr__(self, "leading_edges", edges)

    @property
    def total_area(self) -> float:
        """Integral of the envelope over one period (the r=0 coefficient)."""
        return len(self.leading_edges) * self.pulse_width

    @property
    def center(self) -> float:
        """Midpoint of the train's support, used as the Fourier time origin."""
        return 0.5 * (self.leading_edges[0] + self.leading_edges[-1] + self.pulse_width)

    def segments(self) -> list[tuple[float, float]]:
        """(gap_before, pulse_width) pairs covering one period in order.

        The trailing gap after the last pulse is 1 - (last edge + width)
        and is returned as a final (gap, 0.0) entry.
        """
        segs = []
        t = 0.0
        for e in self.leading_edges:
            segs.append((e - t, self.pulse_width))
            t = e + self.pulse_width
        segs.append((1.0 - t, 0.0))
        return segs


# Canonical trains.  The double train is two 1/20-period pulses whose leading
# edges are 1/10 of a period apart; the single train has the same total area
# in one pulse.
DOUBLE = PulseTrain(pulse_width=1.0 / 20.0, leading_edges=(0.0, 1.0 / 10.0))
SINGLE = PulseTrain(pulse_width=1.0 / 10.0, leading_edges=(0.0,))


@dataclass(frozen=True)
class DimensionlessParams:
    """Scaled drive parameters: kick strength k, effective Planck constant
    kbar, spontaneous-emission probability eta per kick cycle, kick count."""

    k: float
    kbar: float
    eta: float = 0.0
    num_kicks: int = 1

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.kbar <= 0:
            raise ValueError(f"kbar must be > 0, got {self.kbar}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.num_kicks < 1:
            raise ValueError(f"num_kicks must be >= 1, got {self.num_kicks}")


@dataclass(frozen=True)
class LabParameters:
    """Laboratory drive parameters for Cs in a pulsed standing wave.

    rabi_frequency is the two-beam Rabi frequency Omega (rad/s); the
    detunings are to the F'=5,4,3 excited hyperfine levels and the s_4j
    line strengths assume equal Zeeman populations.  Times in seconds.
    pulse_separation is the leading-edge spacing of the double pulse;
    None selects a single pulse per period.
    """

    rabi_frequency: float
    detuning_45: float
    detuning_44: float
    detuning_43: float
    kick_period: float
    pulse_width: float
    pulse_separation: float | None = None
    recoil_frequency: float = CS_RECOIL_OMEGA
    line_strength_45: float = 11.0 / 27.0
    line_strength_44: float = 7.0 / 36.0
    line_strength_43: float = 7.0 / 108.0
    kick_strength_rms_spread: float = 0.06

    def __post_init__(self) -> None:
        if self.kick_period <= 0 or self.recoil_frequency <= 0:
            raise ValueError("kick_period and recoil_frequency must be positive")
        if self.pulse_width <= 0:
            raise ValueError("pulse_width must be positive")
        for name in ("detuning_45", "detuning_44", "detuning_43"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rabi_frequency < 0:
            raise ValueError("rabi_frequency must be >= 0")
        # Both sub-pulses must fit inside one period.
        last_end = self.pulse_width
        if self.pulse_separation is not None:
            if self.pulse_separation <= 0:
                raise ValueError("pulse_separation must be positive")
            last_end = self.pulse_separation + self.pulse_width
        if last_end > self.kick_period:
            raise ValueError("pulses do not fit within one kick period")

    @property
    def effective_rabi(self) -> float:
        """Omega_eff = Omega^2 (s45/d45 + s44/d44 + s43/d43)."""
        return self.rabi_frequency**2 * (
            self.line_strength_45 / self.detuning_45
            + self.line_strength_44 / self.detuning_44
            + self.line_strength_43 / self.detuning_43
        )


def pulse_envelope(t, train: PulseTrain):
    """Envelope f(t) of the train: 1 inside a sub-pulse, 0 otherwise.

    Accepts scalars or arrays; t is reduced modulo the unit period.
    Leading edges are inclusive, trailing edges exclusive.
    """
    tm = np.mod(t, 1.0)
    out = np.zeros_like(tm, dtype=int)
    for e in train.leading_edges:
        inside = (tm >= e) & (tm < e + train.pulse_width)
        # A pulse that wraps past t=1 also covers [0, e+w-1).
        if e + train.pulse_width > 1.0:
            inside |= tm < e + train.pulse_width - 1.0
        out |= inside.astype(int)
    if np.isscalar(t):
        return int(out)
    return out


def fourier_coefficient(r: int, train: PulseTrain) -> float:
    """Coefficient a_r of the resonance expansion of the envelope.

    Computed analytically for rectangular sub-pulses with the time origin
    at the train's support midpoint (which makes a_r real and even in r
    for symmetric trains).  For the canonical double train this reduces to
    a_0 = 1/10 and a_r = [sin(3 r pi / 20) - sin(r pi / 20)] / (r pi).
    """
    if r == 0:
        return train.total_area
    tc = train.center
    w = train.pulse_width
    s = 0.0
    for e in train.leading_edges:
        a = e - tc
        s += math.sin(2.0 * math.pi * r * (a + w)) - math.sin(2.0 * math.pi * r * a)
    return s / (2.0 * math.pi * r)


def kam_boundaries(train: PulseTrain, r_max: int = 15) -> list[float]:
    """Momenta rho = 2 pi r, 1 <= r <= r_max, where a_r vanishes.

    These carry no resonant drive and bound chaotic transport.  The
    default r_max = 15 covers momenta up to rho = 30 pi, the outermost
    barrier relevant to the canonical trains.
    """
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    return [
        2.0 * math.pi * r
        for r in range(1, r_max + 1)
        if abs(fourier_coefficient(r, train)) < ZERO_TOL
    ]


def dimensionless_from_lab(
    lab: LabParameters, eta: float = 0.0, num_kicks: int = 1
) -> tuple[DimensionlessParams, PulseTrain]:
    """Convert lab drive parameters to scaled units plus the derived train.

    k = Omega_eff * omega_R * T**2 and kbar = 8 * omega_R * T.  eta is an
    input here: the emission probability per kick cycle is quoted per
    drive setting rather than derived from scattering rates.
    """
    T = lab.kick_period
    k = lab.effective_rabi * lab.recoil_frequency * T**2
    kbar = 8.0 * lab.recoil_frequency * T
    if lab.pulse_separation is None:
        edges: tuple[float, ...] = (0.0,)
    else:
        edges = (0.0, lab.pulse_separation / T)
    train = PulseTrain(pulse_width=lab.pulse_width / T, leading_edges=edges)
    return DimensionlessParams(k=k, kbar=kbar, eta=eta, num_kicks=num_kicks), train


def rabi_frequency_for_kick_strength(k: float, lab: LabParameters) -> float:
    """Rabi frequency Omega that yields kick strength k at lab's detunings."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    per_omega_sq = (
        lab.line_strength_45 / lab.detuning_45
        + lab.line_strength_44 / lab.detuning_44
        + lab.line_strength_43 / lab.detuning_43
    ) * lab.recoil_frequency * lab.kick_period**2
    return math.sqrt(k / per_omega_sq)


def sample_kick_strengths(
    k_mean: float, size: int, rng: np.random.Generator, rms_spread: float = 0.06
) -> np.ndarray:
    """Per-particle kick strengths modelling the finite kicking-beam waist.

    Gaussian multiplier with the given rms spread about k_mean (itself
    ~0.94 of the on-axis value).  Off by default in the engines, which
    take a scalar k unless handed an array from here.
    """
    return k_mean * (1.0 + rms_spread * rng.standard_normal(size))


def dkr_stochasticity(k: float, train: PulseTrain) -> float:
    """Kicked-rotor stochasticity parameter kappa = k * total pulse area."""
    return k * train.total_area
