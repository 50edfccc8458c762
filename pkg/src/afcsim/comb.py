"""Atomic frequency comb profiles, the analytic echo-efficiency law, and
comb design: optimal fineness and the pump mask that carves a comb."""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks

from afcsim.errors import DomainError, ResolutionError
from afcsim.spectrum import AbsorptionProfile, gaussian

TOOTH_SHAPES = ("gaussian", "square")
# integral of a unit-height Gaussian in units of its FWHM
GAUSSIAN_AREA_PER_FWHM = math.sqrt(math.pi / (4 * math.log(2)))

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


@dataclass(frozen=True)
class CombSpec:
    """Comb of teeth spaced ``delta`` with FWHM ``delta / fineness``.

    Teeth sit at ``center + n * delta`` inside ``center ± band_span/2`` and
    rise from ``background_depth`` to ``peak_depth``.
    """

    delta: float
    fineness: float
    peak_depth: float
    background_depth: float = 0.0
    tooth_shape: str = "gaussian"
    band_span: float = 60e6
    center: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if not self.fineness > 1:
            raise DomainError("fineness must exceed 1")
        if not self.peak_depth >= self.background_depth >= 0:
            raise DomainError("need peak_depth >= background_depth >= 0")
        if self.tooth_shape not in TOOTH_SHAPES:
            raise DomainError(f"tooth_shape must be one of {TOOTH_SHAPES}")
        if self.band_span < 2 * self.delta * (1 - 1e-12):
            raise DomainError("band_span must hold at least two periods")

    @property
    def tooth_width(self):
        return self.delta / self.fineness

    @property
    def storage_time(self):
        return 1.0 / self.delta

    def tooth_area(self):
        """Closed-form area of one unit-height tooth (Hz)."""
        if self.tooth_shape == "gaussian":
            return GAUSSIAN_AREA_PER_FWHM * self.tooth_width
        return self.tooth_width


def _periodic_teeth(x, spec, step):
    """Unit-height periodic teeth evaluated at offsets ``x`` from ``spec.center``."""
    delta = spec.delta
    gamma = spec.tooth_width
    phase = x / delta - np.rint(x / delta)  # in [-1/2, 1/2]
    if spec.tooth_shape == "gaussian":
        ks = np.arange(-3, 4)
        total = gaussian((phase[:, None] + ks[None, :]) * delta, 0.0, gamma).sum(axis=1)
        norm = gaussian(ks * delta, 0.0, gamma).sum()
        return total / norm
    # square teeth as cell averages so the sampled area matches the closed form
    y = phase * delta
    lo = np.clip(y - step / 2, -gamma / 2, gamma / 2)
    hi = np.clip(y + step / 2, -gamma / 2, gamma / 2)
    return np.clip(hi - lo, 0.0, None) / step


def comb_profile(spec, grid, baseline=0.0):
    """Sample a comb on ``grid``.

    ``baseline`` (a scalar or an :class:`AbsorptionProfile` on the same grid)
    gives the depth outside the comb band.
    """
    gamma = spec.tooth_width
    if grid.step > gamma / 6 * (1 + 1e-9):
        raise ResolutionError(
            f"grid step {grid.step:.6g} Hz gives fewer than 6 samples per tooth width {gamma:.6g} Hz"
        )
    x = grid.points - spec.center
    inside = np.abs(x) <= spec.band_span / 2 * (1 + 1e-12)
    teeth = _periodic_teeth(x, spec, grid.step)
    comb = spec.background_depth + (spec.peak_depth - spec.background_depth) * teeth
    if isinstance(baseline, AbsorptionProfile):
        outside = baseline.depth
    else:
        outside = np.full(grid.n_points, float(baseline))
    return AbsorptionProfile(grid, np.where(inside, comb, outside))


def efficiency_law(d, d0, F):
    """Forward echo efficiency ``exp(-d/F) (d/F)^2 exp(-7/F^2) exp(-d0)``."""
    if not np.all(np.asarray(F) > 0):
        raise DomainError("fineness must be positive")
    x = np.asarray(d) / np.asarray(F)
    return np.exp(-x) * x ** 2 * np.exp(-7.0 / np.asarray(F) ** 2) * np.exp(-np.asarray(d0))


def analytic_efficiency(spec):
    return float(efficiency_law(spec.peak_depth, spec.background_depth, spec.fineness))


def golden_section_max(f, a, b, tol=1e-8):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns the bracket midpoint."""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(n - 1):
        h *= INV_PHI
        if fc > fd:
            b, d, fd = d, c, fc
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * h
            fd = f(d)
    return 0.5 * (a + d) if fc > fd else 0.5 * (c + b)


def optimal_fineness(d, d0=0.0, bounds=(1.01, 100.0), tol=1e-7):
    """Fineness maximizing the efficiency law at fixed ``d`` and ``d0``.

    Returns ``(F_star, eta_star)``.
    """
    if not d > 0:
        raise DomainError("peak depth must be positive")
    F = golden_section_max(lambda F: float(efficiency_law(d, d0, F)), *bounds, tol=tol)
    return F, float(efficiency_law(d, d0, F))


def comb_pump_sequence(spec, seq_template):
    """Copy of ``seq_template`` whose mask pumps the troughs and spares the teeth.

    A step is left dark when its frequency lies in ``[-γ/2, γ/2)`` around a
    tooth center, with ``γ = delta / fineness``.
    """
    gamma = spec.tooth_width
    if seq_template.step_resolution > gamma / 2 * (1 + 1e-9):
        raise ResolutionError(
            f"step {seq_template.step_resolution:.6g} Hz cannot resolve teeth of width {gamma:.6g} Hz"
        )
    x = seq_template.step_frequencies - spec.center
    y = (x / spec.delta - np.floor(x / spec.delta + 0.5)) * spec.delta
    on_tooth = (y >= -gamma / 2 * (1 + 1e-12)) & (y < gamma / 2 * (1 - 1e-12))
    mask = np.where(on_tooth, 0.0, 1.0)
    return replace(seq_template, amplitude_mask=mask)


def estimate_comb_period(profile, window=None, min_prominence=0.2):
    """Comb period from a straight-line fit of tooth position against tooth index.

    Teeth are local maxima inside ``window = (low, high)`` (default: the whole
    grid) whose prominence exceeds ``min_prominence`` times the depth range
    there; each position is refined by a parabola through the maximum and
    its neighbours.
    """
    y = profile.depth
    f = profile.frequencies
    inside = np.ones(y.size, bool) if window is None else (f >= window[0]) & (f <= window[1])
    scale = np.ptp(y[inside])
    if not scale > 0:
        raise DomainError("profile is flat inside the window")
    # flatten rounding ripple so plateau tops register as one peak
    levels = np.round(y / scale * 1e9)
    peaks, _ = find_peaks(levels, prominence=min_prominence * 1e9)
    peaks = peaks[(peaks > 0) & (peaks < y.size - 1) & inside[peaks]]
    if peaks.size < 3:
        raise DomainError("fewer than three teeth found in the profile")
    y0, y1, y2 = y[peaks - 1], y[peaks], y[peaks + 1]
    denom = y0 - 2 * y1 + y2
    frac = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1), 0.0)
    pos = f[peaks] + frac * profile.grid.step
    gaps = np.diff(pos)
    index = np.concatenate([[0], np.cumsum(np.rint(gaps / np.median(gaps)))])
    slope, _ = np.polyfit(index, pos, 1)
    return float(slope)
