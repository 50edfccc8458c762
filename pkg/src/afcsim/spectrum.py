"""Inhomogeneous absorption line of Nd:YLiF4 as a mixture of isotope lines.

All frequencies are detunings in Hz from the zero-field 142Nd line center.
"""

from dataclasses import dataclass, field

import numpy as np

from afcsim import io as _io
from afcsim.errors import DomainError, ResolutionError, ShapeError

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

# natural abundances in percent
EVEN_ABUNDANCES = {142: 27.1, 144: 23.9, 146: 17.8, 148: 5.7, 150: 5.6}
ODD_ABUNDANCES = {143: 12.2, 145: 8.3}
REFERENCE_MASS = 142


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform detuning axis centred on ``center_offset``."""

    center_offset: float
    span: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise DomainError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.span > 0:
            raise DomainError(f"span must be positive, got {self.span}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "span", float(self.span))
        object.__setattr__(self, "center_offset", float(self.center_offset))

    @classmethod
    def from_step(cls, center_offset, step, half_width):
        """Grid with spacing ``step`` covering at least ``center ± half_width``."""
        n_half = int(np.ceil(half_width / step - 1e-9))
        return cls(center_offset, 2 * n_half * step, 2 * n_half + 1)

    @property
    def step(self):
        return self.span / (self.n_points - 1)

    @property
    def start(self):
        return self.center_offset - self.span / 2

    @property
    def stop(self):
        return self.center_offset + self.span / 2

    @property
    def points(self):
        return self.start + self.step * np.arange(self.n_points)

    def index_of(self, freq):
        """Nearest sample index to ``freq`` (clipped to the grid)."""
        i = np.rint((np.asarray(freq, dtype=float) - self.start) / self.step).astype(int)
        return np.clip(i, 0, self.n_points - 1)

    def same_as(self, other, rtol=1e-12):
        return (
            self.n_points == other.n_points
            and np.isclose(self.span, other.span, rtol=rtol, atol=0)
            and np.isclose(self.center_offset, other.center_offset, rtol=0, atol=rtol * self.span)
        )


@dataclass(frozen=True)
class IsotopeLine:
    mass_number: int
    center_shift: float
    abundance_weight: float
    inhomogeneous_fwhm: float

    def __post_init__(self):
        if not 0.0 <= self.abundance_weight <= 1.0:
            raise DomainError(f"abundance_weight must lie in [0, 1], got {self.abundance_weight}")
        if not self.inhomogeneous_fwhm > 0:
            raise DomainError(f"inhomogeneous_fwhm must be positive, got {self.inhomogeneous_fwhm}")


@dataclass(frozen=True)
class FieldModel:
    """Field dependence of the optical line.

    The inhomogeneous width narrows with field as
    ``width(B) = width_at_zero * (1 - narrowing * B / (B + narrowing_field))``.
    ``narrowing < 1`` keeps every width positive.
    """

    zeeman_slope: float = 16.45e9
    width_at_zero: float = 180e6
    narrowing: float = 0.5
    narrowing_field: float = 2.0

    def __post_init__(self):
        if not self.width_at_zero > 0:
            raise DomainError("width_at_zero must be positive")
        if not 0.0 <= self.narrowing < 1.0:
            raise DomainError("narrowing must lie in [0, 1) to keep widths positive")
        if not self.narrowing_field > 0:
            raise DomainError("narrowing_field must be positive")

    def width_factor(self, B):
        _check_field(B)
        return 1.0 - self.narrowing * B / (B + self.narrowing_field)

    def width(self, B):
        return self.width_at_zero * self.width_factor(B)


@dataclass(frozen=True)
class AbsorptionProfile:
    """Optical depth sampled on a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    depth: np.ndarray = field(repr=False)

    def __post_init__(self):
        depth = _frozen(self.depth)
        if depth.shape != (self.grid.n_points,):
            raise ShapeError(
                f"depth has shape {depth.shape}, grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(depth)):
            raise DomainError("depth contains non-finite values")
        if np.any(depth < 0):
            raise DomainError("optical depth must be nonnegative")
        object.__setattr__(self, "depth", depth)

    @property
    def frequencies(self):
        return self.grid.points

    def transmission(self):
        """Intensity transmission ``exp(-d)``."""
        return np.exp(-self.depth)

    def to_csv(self, path):
        _io.write_csv(path, ["frequency_hz", "optical_depth"], [self.frequencies, self.depth])

    @classmethod
    def from_csv(cls, path):
        cols = _io.read_csv(path, ["frequency_hz", "optical_depth"])
        freq = cols["frequency_hz"]
        if len(freq) < 2:
            raise ShapeError(f"{path}: need at least two samples")
        steps = np.diff(freq)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-6 * abs(steps.mean()):
            raise ShapeError(f"{path}: frequencies are not uniformly increasing")
        grid = FrequencyGrid(0.5 * (freq[0] + freq[-1]), freq[-1] - freq[0], len(freq))
        return cls(grid, cols["optical_depth"])


def _check_field(B):
    if not B >= 0:
        raise DomainError(f"magnetic field must be nonnegative, got {B}")


def gaussian(x, center, fwhm):
    """Unit-height Gaussian."""
    sigma = fwhm * FWHM_TO_SIGMA
    return np.exp(-0.5 * ((x - center) / sigma) ** 2)


def zeeman_center(B, model=FieldModel()):
    """Shift of the optical transition center at field ``B`` (tesla)."""
    _check_field(B)
    return model.zeeman_slope * B


def natural_nd_lines(shift_per_amu=110e6, widths=None, include_odd=False):
    """Even-isotope Nd lines with natural-abundance weights.

    Parameters
    ----------
    shift_per_amu : float
        Isotope shift per unit mass (Hz), measured from 142Nd.
    widths : float or sequence of float, optional
        Zero-field inhomogeneous FWHM of each line. Defaults to the
        :class:`FieldModel` zero-field width.
    include_odd : bool
        Add the unresolved 143Nd/145Nd hyperfine manifold as one broad
        pedestal line. Weights are then renormalized over all seven isotopes.
    """
    if shift_per_amu == 0:
        raise DomainError("shift_per_amu must be nonzero")
    masses = sorted(EVEN_ABUNDANCES)
    if widths is None:
        widths = FieldModel().width_at_zero
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (len(masses),))
    total = sum(EVEN_ABUNDANCES.values())
    if include_odd:
        total += sum(ODD_ABUNDANCES.values())
    lines = [
        IsotopeLine(m, (m - REFERENCE_MASS) * shift_per_amu, EVEN_ABUNDANCES[m] / total, float(w))
        for m, w in zip(masses, widths)
    ]
    if include_odd:
        # hyperfine components spread over several hundred MHz around mass 144
        lines.append(
            IsotopeLine(
                144,
                2 * shift_per_amu,
                sum(ODD_ABUNDANCES.values()) / total,
                float(3.0 * widths.max()),
            )
        )
    return lines


def line_shapes(lines, B, model, freqs):
    """Unnormalized per-line Gaussian contributions, shape (n_lines, n_freq)."""
    shift = zeeman_center(B, model)
    factor = model.width_factor(B)
    out = np.empty((len(lines), len(freqs)))
    for i, line in enumerate(lines):
        fwhm = line.inhomogeneous_fwhm * factor
        # weight is the line's share of ions, i.e. its integrated absorption
        out[i] = line.abundance_weight / fwhm * gaussian(freqs, line.center_shift + shift, fwhm)
    return out


def build_absorption(lines, B, peak_depth, model=FieldModel(), grid=None):
    """Sum of Gaussian isotope lines scaled so the sampled maximum is ``peak_depth``.

    Line centers move by :func:`zeeman_center`; every line's zero-field FWHM is
    scaled by the field model's narrowing factor at ``B``.
    """
    if not peak_depth > 0:
        raise DomainError(f"peak_depth must be positive, got {peak_depth}")
    if not lines:
        raise DomainError("at least one line is required")
    if grid is None:
        raise DomainError("a FrequencyGrid is required")
    narrowest = min(l.inhomogeneous_fwhm for l in lines) * model.width_factor(B)
    if grid.step > narrowest / 4:
        raise ResolutionError(
            f"grid step {grid.step:.6g} Hz exceeds a quarter of the narrowest FWHM {narrowest:.6g} Hz"
        )
    total = line_shapes(lines, B, model, grid.points).sum(axis=0)
    peak = total.max()
    if not peak > 0:
        raise ResolutionError("no line has appreciable weight on the grid")
    return AbsorptionProfile(grid, peak_depth * total / peak)
