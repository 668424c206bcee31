"""Observables over binned momentum distributions.

The common currency of the classical and quantum engines is a probability
distribution on a uniform momentum grid symmetric about rho = 0.  This
module turns such distributions into the reported quantities:
barrier-crossing fractions, kinetic energies, localization-length fits,
break times, and detector-blurred lineshapes.  Everything here is a pure
function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TEN_PI = 10.0 * math.pi

DEFAULT_BIN_WIDTH = 0.5
DEFAULT_HALF_WIDTH = 40.0 * math.pi


def default_grid(
    half_width: float = DEFAULT_HALF_WIDTH, bin_width: float = DEFAULT_BIN_WIDTH
) -> np.ndarray:
    """Uniform grid of bin centers symmetric about 0, covering +-half_width."""
    n_half = int(math.ceil(half_width / bin_width))
    return bin_width * np.arange(-n_half, n_half + 1)


@dataclass(frozen=True)
class MomentumDistribution:
    """Binned probability density over dimensionless momentum rho."""

    bin_centers: np.ndarray
    probabilities: np.ndarray
    bin_width: float

    def __post_init__(self) -> None:
        c = np.asarray(self.bin_centers, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if c.shape != p.shape:
            raise ValueError("bin_centers and probabilities must match in shape")
        if np.any(p < -1e-15):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
        if abs(c[0] + c[-1]) > 1e-9 * self.bin_width:
            raise ValueError("grid must be symmetric about rho = 0")
        object.__setattr__(self, "bin_centers", c)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_samples(
        cls, rho: np.ndarray, weights: np.ndarray, grid: np.ndarray
    ) -> "MomentumDistribution":
        """Deposit weighted samples onto the grid by nearest bin.

        Samples beyond the grid are clipped into the end bins so that
        total probability is preserved exactly.
        """
        w = float(grid[1] - grid[0])
        idx = np.rint((np.asarray(rho) - grid[0]) / w).astype(np.intp)
        np.clip(idx, 0, grid.size - 1, out=idx)
        p = np.bincount(idx, weights=weights, minlength=grid.size)
        total = p.sum()
        if total <= 0:
            raise ValueError("total weight must be positive")
        return cls(bin_centers=grid, probabilities=p / total, bin_width=w)

    def mirrored(self) -> "MomentumDistribution":
        """The distribution under rho -> -rho."""
        return MomentumDistribution(
            bin_centers=self.bin_centers,
            probabilities=self.probabilities[::-1].copy(),
            bin_width=self.bin_width,
        )


@dataclass
class DiffusionCurve:
    """Fraction outside the barrier (percent) versus kick number."""

    kicks: np.ndarray
    fraction_pct: np.ndarray
    k: float = 0.0
    eta: float = 0.0
    engine: str = ""

    def __post_init__(self) -> None:
        if len(self.kicks) != len(self.fraction_pct):
            raise ValueError("kicks and fraction_pct must have equal length")
        f = np.asarray(self.fraction_pct, dtype=float)
        if np.any(f < -1e-9) or np.any(f > 100.0 + 1e-9):
            raise ValueError("fractions must lie in [0, 100]")


def fraction_outside(dist: MomentumDistribution, rho_c: float) -> float:
    """Percent of probability at |rho| > rho_c, splitting straddled bins.

    A bin whose extent straddles +-rho_c contributes the linear fraction
    of its width lying outside.
    """
    if rho_c <= 0:
        raise ValueError(f"rho_c must be > 0, got {rho_c}")
    c = dist.bin_centers
    w = dist.bin_width
    frac = np.clip((np.abs(c) + 0.5 * w - rho_c) / w, 0.0, 1.0)
    return 100.0 * float(np.sum(dist.probabilities * frac))


def kinetic_energy(dist: MomentumDistribution) -> float:
    """Mean kinetic energy sum p(rho) rho^2 / 2 of the binned distribution."""
    return 0.5 * float(np.sum(dist.probabilities * dist.bin_centers**2))


@dataclass(frozen=True)
class LocalizationFit:
    """Result of an exponential-wing fit ~exp(-2 |rho| / l_rho)."""

    l_rho: float
    residual_rms: float
    flagged: bool


def fit_localization_length(
    dist: MomentumDistribution,
    fit_window: tuple[float, float] = (20.0, 60.0),
    residual_threshold: float = 0.5,
) -> LocalizationFit:
    """Localization length from the exponential wings of a lineshape.

    Fits ln p against |rho| by least squares over fit_window on each
    wing, averages l_rho = -2 / slope over the wings, and flags the fit
    when the rms ln-residual exceeds residual_threshold (value is still
    returned).
    """
    lo, hi = fit_window
    if not 0.0 < lo < hi:
        raise ValueError(f"invalid fit window {fit_window}")
    c = dist.bin_centers
    p = dist.probabilities
    lengths = []
    residuals = []
    for wing in (c > 0, c < 0):
        sel = wing & (np.abs(c) > lo) & (np.abs(c) < hi) & (p > 0)
        if sel.sum() < 3:
            raise ValueError("fit window contains fewer than 3 populated bins")
        x = np.abs(c[sel])
        y = np.log(p[sel])
        slope, intercept = np.polyfit(x, y, 1)
        if slope >= 0:
            raise ValueError("wing is not decaying over the fit window")
        lengths.append(-2.0 / slope)
        residuals.append(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    res = float(np.mean(residuals))
    return LocalizationFit(
        l_rho=float(np.mean(lengths)),
        residual_rms=res,
        flagged=res > residual_threshold,
    )


def break_time(
    curve: DiffusionCurve,
    tolerance_points: float,
    late_window: tuple[int, int] = (40, 70),
    slope_threshold: float = 0.05,
) -> int | None:
    """Kick count at which the curve settles onto its saturation level.

    The saturation reference is a straight-line fit over late_window
    (kick indices); a nonzero but small slope accommodates the slow
    drift toward the classical equilibrium that spontaneous emission
    produces after saturation.  Returns the smallest N at which the
    curve enters and thereafter stays within tolerance_points of the
    reference line, or None when the curve does not saturate (late-time
    slope above slope_threshold points/kick).
    """
    kicks = np.asarray(curve.kicks)
    f = np.asarray(curve.fraction_pct, dtype=float)
    lo, hi = late_window
    late = (kicks >= lo) & (kicks <= hi)
    if late.sum() < 2:
        raise ValueError("curve does not cover the late-time window")
    slope, intercept = np.polyfit(kicks[late], f[late], 1)
    if abs(slope) > slope_threshold:
        return None
    inside = np.abs(f - (slope * kicks + intercept)) <= tolerance_points
    if not inside[-1]:
        return None
    # Walk back to the first sample from which the curve stays inside.
    i = len(f) - 1
    while i > 0 and inside[i - 1]:
        i -= 1
    return int(kicks[i])


def detector_blur(dist: MomentumDistribution, resolution: float) -> MomentumDistribution:
    """Convolve with a box kernel of the given half-width.

    Emulates finite detector resolution.  Mass pushed past the grid ends
    is folded into the end bins, so total probability is preserved.
    """
    if resolution < 0:
        raise ValueError(f"resolution must be >= 0, got {resolution}")
    if resolution == 0:
        return dist
    w = dist.bin_width
    half_bins = int(math.ceil((resolution + 0.5 * w) / w))
    offsets = w * np.arange(-half_bins, half_bins + 1)
    # Overlap of each offset bin [o - w/2, o + w/2] with [-res, res].
    overlap = np.clip(
        np.minimum(offsets + 0.5 * w, resolution) - np.maximum(offsets - 0.5 * w, -resolution),
        0.0,
        None,
    )
    kernel = overlap / overlap.sum()
    full = np.convolve(dist.probabilities, kernel, mode="full")
    n = dist.bin_centers.size
    pad = half_bins
    p = full[pad : pad + n].copy()
    p[0] += full[:pad].sum()
    p[-1] += full[pad + n :].sum()
    return MomentumDistribution(
        bin_centers=dist.bin_centers, probabilities=p, bin_width=w
    )
