"""Linear pulse propagation through an absorption profile and echo detection.

Conventions: a field spectrum is ``fft(samples)`` (kernel ``exp(-2πiνt)``)
and the envelope frequency ``ν`` equals the detuning on the profile grid.
"""

from dataclasses import dataclass, field

import numpy as np

from afcsim import io as _io
from afcsim.comb import analytic_efficiency, comb_profile
from afcsim.errors import ConfigurationError, DomainError, ShapeError
from afcsim.pump import relax_profile
from afcsim.spectrum import AbsorptionProfile, FrequencyGrid

# intensity-spectrum FWHM times intensity FWHM for a Gaussian pulse
GAUSSIAN_TBP = 2 * np.log(2) / np.pi


@dataclass(frozen=True)
class Pulse:
    """Sampled complex envelope; sample ``j`` is at time ``j * sample_period``."""

    samples: np.ndarray = field(repr=False)
    sample_period: float
    center_time: float
    fwhm: float
    shape: str = "gaussian"

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex).ravel()
        if not self.sample_period > 0:
            raise DomainError("sample_period must be positive")
        energy = np.sum(np.abs(s) ** 2)
        if not (np.isfinite(energy) and energy > 0):
            raise DomainError("pulse energy must be finite and positive")
        if self.shape != "gaussian":
            raise DomainError("only gaussian pulses are supported")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def gaussian(cls, fwhm, sample_period=None, n_samples=None, center_time=None, min_window=0.0):
        """Gaussian pulse with intensity FWHM ``fwhm``.

        By default the step is ``fwhm/16`` and the window is the next power of
        two covering ``max(64 fwhm, min_window)``.
        """
        if not fwhm > 0:
            raise DomainError("fwhm must be positive")
        dt = fwhm / 16 if sample_period is None else float(sample_period)
        if n_samples is None:
            window = max(64 * fwhm, float(min_window))
            n_samples = 1 << int(np.ceil(np.log2(window / dt)))
        if center_time is None:
            center_time = np.round(max(8 * fwhm, 0.125 * min_window) / dt) * dt
        t = dt * np.arange(n_samples)
        amp = np.exp(-2 * np.log(2) * ((t - center_time) / fwhm) ** 2)
        return cls(amp.astype(complex), dt, float(center_time), float(fwhm))

    @property
    def n_samples(self):
        return self.samples.size

    @property
    def times(self):
        return self.sample_period * np.arange(self.n_samples)

    @property
    def duration(self):
        return self.sample_period * self.n_samples

    @property
    def bandwidth(self):
        """Intensity-spectrum FWHM (Hz)."""
        return GAUSSIAN_TBP / self.fwhm

    def energy(self):
        return energy(self.samples, self.sample_period)

    def shifted(self, n):
        """Circularly delay the pulse by ``n`` samples."""
        return Pulse(np.roll(self.samples, n), self.sample_period,
                     self.center_time + n * self.sample_period, self.fwhm, self.shape)


@dataclass(frozen=True)
class EchoResult:
    output_trace: np.ndarray = field(repr=False)
    echo_time: float
    echo_efficiency: float
    transmitted_fraction: float
    sample_period: float = 0.0

    def summary(self):
        return {
            "echo_time_s": self.echo_time,
            "efficiency": self.echo_efficiency,
            "transmitted_fraction": self.transmitted_fraction,
        }

    def to_json(self, path, **extra):
        _io.write_json(path, {**self.summary(), **extra})


def energy(trace, sample_period):
    return float(np.sum(np.abs(trace) ** 2) * sample_period)


def _padded_log_amplitude(depth, pad_factor):
    n = depth.size
    pad = int(pad_factor) * n
    total = 1 << int(np.ceil(np.log2(n + 2 * pad)))
    right = (total - n) // 2
    left = total - n - right
    # edge extension: a flat profile has no dispersion. The padding is
    # circularly contiguous, so its middle half ramps smoothly from the last
    # value to the first to avoid a jump at the wrap point.
    gap = left + right
    j = np.arange(gap)
    ramp = np.clip((j - gap / 4) / (gap / 2), 0.0, 1.0)
    ramp = 0.5 - 0.5 * np.cos(np.pi * ramp)
    fill = depth[-1] + (depth[0] - depth[-1]) * ramp
    padded = np.concatenate([fill[right:], depth, fill[:right]])
    return padded * -0.5, left


def _causal_log_response(log_amp):
    """Complex log-response whose real part is ``log_amp`` and whose inverse
    transform vanishes at negative times (the Kramers-Kronig phase)."""
    m = log_amp.size
    ell = np.fft.ifft(log_amp)
    fold = np.zeros(m)
    fold[0] = 1.0
    fold[1:m // 2] = 2.0
    fold[m // 2] = 1.0
    return np.fft.fft(ell * fold)


def transfer_function(profile, pad_factor=4):
    """Complex amplitude response ``exp(-d/2 + iφ)`` on the profile grid.

    ``φ`` is the Hilbert transform of ``-d/2``, computed with the profile
    extended by its edge values over ``pad_factor`` times its span on each side.
    """
    log_amp, left = _padded_log_amplitude(profile.depth, pad_factor)
    L = _causal_log_response(log_amp)[left:left + profile.grid.n_points]
    return np.exp(L.real + 1j * L.imag)


def impulse_response(profile, pad_factor=4):
    """Time samples and impulse response of the padded transfer function."""
    log_amp, _ = _padded_log_amplitude(profile.depth, pad_factor)
    H = np.exp(_causal_log_response(log_amp))
    h = np.fft.ifft(H)
    m = H.size
    times = np.fft.fftfreq(m, d=profile.grid.step)
    return times, h


def _interp_response(H, grid, freqs):
    f = grid.points
    amp = np.interp(freqs, f, np.abs(H))
    phase = np.interp(freqs, f, np.unwrap(np.angle(H)))
    return amp * np.exp(1j * phase)


def propagate(pulse, profile, pad_factor=4, margin=4.0):
    """Output envelope after the medium: ``ifft(fft(pulse) * H)``.

    Outside the profile grid the response keeps its edge value, matching the
    edge extension used for the phase.
    """
    bw = margin * pulse.bandwidth
    if bw > profile.grid.span:
        raise ConfigurationError(
            f"pulse bandwidth x{margin:g} ({bw:.4g} Hz) exceeds the profile span {profile.grid.span:.4g} Hz"
        )
    nyquist = 0.5 / pulse.sample_period
    if bw / 2 > nyquist:
        raise ConfigurationError("sample period too long for the pulse bandwidth (aliasing)")
    edge = 3 * pulse.fwhm
    if pulse.center_time < edge or pulse.center_time > pulse.duration - edge:
        raise ConfigurationError("pulse is truncated by the time window")
    H = transfer_function(profile, pad_factor)
    freqs = np.fft.fftfreq(pulse.n_samples, d=pulse.sample_period)
    response = _interp_response(H, profile.grid, freqs)
    return np.fft.ifft(np.fft.fft(pulse.samples) * response)


def detect_echo(trace, input_pulse, delta):
    """First-echo timing and efficiency.

    The echo window is ``[0.5/delta, 1.5/delta]`` after the input center and the
    input window is ``±0.5/delta`` around it. ``echo_time`` is the
    intensity-weighted centroid of the echo window, measured from the input
    center.
    """
    trace = np.asarray(trace, dtype=complex)
    if trace.shape != input_pulse.samples.shape:
        raise ShapeError("trace and input pulse lengths differ")
    if not delta > 0:
        raise DomainError("delta must be positive")
    dt = input_pulse.sample_period
    t = input_pulse.times - input_pulse.center_time
    if t[-1] <= 1.5 / delta:
        raise DomainError("trace ends before the echo window closes")
    intensity = np.abs(trace) ** 2
    e_in = input_pulse.energy()
    echo = (t >= 0.5 / delta) & (t <= 1.5 / delta)
    inside = np.abs(t) < 0.5 / delta
    if not echo.any():
        raise DomainError("echo window contains no samples")
    e_echo = intensity[echo].sum() * dt
    if e_echo > 0:
        echo_time = float(np.sum(t[echo] * intensity[echo]) / intensity[echo].sum())
    else:
        echo_time = float("nan")
    return EchoResult(trace, echo_time, float(e_echo / e_in),
                      float(intensity[inside].sum() * dt / e_in), dt)


def comb_grid(spec, pulse=None, samples_per_tooth=8, band_margin=1.2):
    """Frequency grid resolving the comb teeth and covering the band and pulse."""
    half = band_margin * spec.band_span / 2
    if pulse is not None:
        half = max(half, 2.5 * pulse.bandwidth)
    step = spec.tooth_width / samples_per_tooth
    return FrequencyGrid.from_step(spec.center, step, half)


def efficiency_vs_storage_time(pulse, specs, baseline=0.0, scheme=None, T_d=0.0, initial_depth=None):
    """Echo efficiency for each comb, with storage time ``1/delta``.

    With ``T_d > 0`` each comb first relaxes toward a flat ``initial_depth``
    profile for a pump-probe delay ``T_d`` under ``scheme``.

    Returns an array with columns ``(storage_time, efficiency, analytic_efficiency)``.
    """
    rows = []
    for spec in specs:
        grid = comb_grid(spec, pulse)
        profile = comb_profile(spec, grid, baseline)
        if T_d > 0:
            if scheme is None or initial_depth is None:
                raise DomainError("relaxation needs a LevelScheme and an initial depth")
            reference = AbsorptionProfile(grid, np.full(grid.n_points, float(initial_depth)))
            profile = relax_profile(profile, reference, scheme, T_d)
        result = detect_echo(propagate(pulse, profile), pulse, spec.delta)
        rows.append((1.0 / spec.delta, result.echo_efficiency, analytic_efficiency(spec)))
    return np.array(rows, dtype=float).reshape(-1, 3)


def trace_to_csv(path, trace, sample_period):
    trace = np.asarray(trace, dtype=complex)
    t = sample_period * np.arange(trace.size)
    _io.write_csv(path, ["time_s", "re", "im", "intensity"],
                  [t, trace.real, trace.imag, np.abs(trace) ** 2])
