"""Rate-equation model of frequency-swept optical pumping.

Each spectral class is an ion group with two ground Zeeman levels ``a``/``b``
and an excited doublet. The four optical transitions of a class sit at fixed
offsets from the class center; a swept, amplitude-masked pump moves population
out of the resonant ground level, through the excited state, into the other
ground level. After pumping the spin population difference relaxes back to
equilibrium with two time constants.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from afcsim import io as _io
from afcsim.analysis import DecayTrace
from afcsim.errors import DomainError, ShapeError, StabilityError
from afcsim.spectrum import AbsorptionProfile, FrequencyGrid

# transition order used everywhere: (ground level, excited level)
TRANSITIONS = (("a", "-"), ("a", "+"), ("b", "-"), ("b", "+"))
_GROUND_INDEX = np.array([0, 0, 1, 1])


@dataclass(frozen=True)
class LevelScheme:
    """Zeeman level structure and relaxation constants.

    Splittings are in Hz/T. ``branching_ratio`` is the probability that an
    excited ion decays into the ground level it did *not* come from.
    ``relax_constants`` follow the ``exp(-2 T_d / tau)`` convention.
    """

    ground_splitting_per_tesla: float = 25e6
    excited_splitting_per_tesla: float = 10e6
    branching_ratio: float = 0.5
    excited_lifetime: float = 100e-6
    relax_weights: tuple = (0.5, 0.5)
    relax_constants: tuple = (4.9e-3, 34.7e-3)
    transition_strengths: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.ground_splitting_per_tesla < 0 or self.excited_splitting_per_tesla < 0:
            raise DomainError("Zeeman splittings must be nonnegative")
        if not 0 < self.branching_ratio < 1:
            raise DomainError("branching_ratio must lie in (0, 1)")
        if not self.excited_lifetime > 0:
            raise DomainError("excited_lifetime must be positive")
        w1, w2 = (float(w) for w in self.relax_weights)
        t1, t2 = (float(t) for t in self.relax_constants)
        if w1 < 0 or w2 < 0 or abs(w1 + w2 - 1) > 1e-9:
            raise DomainError("relax_weights must be nonnegative and sum to 1")
        if not 0 < t1 < t2:
            raise DomainError("relax_constants must satisfy 0 < tau1 < tau2")
        s = tuple(float(x) for x in self.transition_strengths)
        if len(s) != 4 or min(s) < 0 or sum(s) <= 0:
            raise DomainError("transition_strengths needs four nonnegative values, not all zero")
        object.__setattr__(self, "relax_weights", (w1, w2))
        object.__setattr__(self, "relax_constants", (t1, t2))
        object.__setattr__(self, "transition_strengths", s)

    def transition_offsets(self, B):
        """Optical transition frequencies relative to the class center, in Hz.

        Ground levels sit at ``∓g B/2`` and excited levels at ``∓e B/2``, so
        ``a-`` is at ``(g-e)B/2``, ``a+`` at ``(g+e)B/2``, ``b-`` at
        ``-(g+e)B/2`` and ``b+`` at ``(e-g)B/2``.
        """
        if not B >= 0:
            raise DomainError(f"magnetic field must be nonnegative, got {B}")
        g = self.ground_splitting_per_tesla * B
        e = self.excited_splitting_per_tesla * B
        return np.array([(g - e) / 2, (g + e) / 2, -(g + e) / 2, (e - g) / 2])


@dataclass(frozen=True)
class PumpSequence:
    """Stepped frequency sweep with one amplitude per step, repeated back to back.

    Step ``k`` drives the pump at ``center - sweep_span/2 + (k + 1/2) * step_resolution``
    for ``sweep_duration / n_steps`` seconds.
    """

    sweep_span: float
    sweep_duration: float
    step_resolution: float
    amplitude_mask: np.ndarray = field(repr=False)
    total_duration: float
    peak_rate: float
    homogeneous_fwhm: float
    center: float = 0.0

    def __post_init__(self):
        mask = np.array(self.amplitude_mask, dtype=float).ravel()
        if mask.size == 0 or np.any(mask < 0) or np.any(mask > 1):
            raise DomainError("amplitude_mask needs values in [0, 1]")
        if not (self.sweep_span > 0 and self.step_resolution > 0):
            raise DomainError("sweep_span and step_resolution must be positive")
        n = self.sweep_span / self.step_resolution
        if abs(n - mask.size) > 1e-6 * max(n, 1.0):
            raise ShapeError(
                f"sweep_span/step_resolution = {n:.6g} but the mask has {mask.size} entries"
            )
        if not self.sweep_duration > 0:
            raise DomainError("sweep_duration must be positive")
        if self.total_duration < self.sweep_duration * (1 - 1e-12):
            raise DomainError("total_duration must be at least one sweep")
        if self.peak_rate < 0 or not self.homogeneous_fwhm > 0:
            raise DomainError("peak_rate must be >= 0 and homogeneous_fwhm > 0")
        mask.setflags(write=False)
        object.__setattr__(self, "amplitude_mask", mask)

    @classmethod
    def single_frequency(cls, duration, peak_rate, homogeneous_fwhm, center=0.0, resolution=0.5e6):
        """Unswept pump parked at ``center`` for ``duration``."""
        return cls(resolution, duration, resolution, np.ones(1), duration,
                   peak_rate, homogeneous_fwhm, center)

    @property
    def n_steps(self):
        return self.amplitude_mask.size

    @property
    def dwell(self):
        return self.sweep_duration / self.n_steps

    @property
    def step_frequencies(self):
        k = np.arange(self.n_steps)
        return self.center - self.sweep_span / 2 + (k + 0.5) * self.step_resolution

    def step_index(self, t):
        t_cycle = np.mod(t, self.sweep_duration)
        return np.minimum((t_cycle / self.dwell).astype(int), self.n_steps - 1)


def lorentzian(x, fwhm):
    """Unit-height Lorentzian."""
    return 1.0 / (1.0 + (2.0 * x / fwhm) ** 2)


def pump_rate(detuning, seq, t):
    """Instantaneous optical pumping rate (1/s) of a transition at ``detuning``."""
    t = float(t)
    if not 0 <= t < seq.total_duration:
        raise DomainError(f"t={t} outside [0, {seq.total_duration})")
    k = int(seq.step_index(np.array(t)))
    f = seq.step_frequencies[k]
    return seq.peak_rate * seq.amplitude_mask[k] * lorentzian(np.asarray(detuning, dtype=float) - f,
                                                               seq.homogeneous_fwhm)


@dataclass(frozen=True)
class PopulationState:
    """Per-class level populations on a class-center grid.

    ``excited`` holds excited-state population tagged by the ground level it
    was pumped from, shape ``(2, n)``. ``pool_tags`` (shape ``(n, 2)``) is
    the share of each class's spin imbalance held by the fast and slow
    relaxation pools. ``offsets`` and ``strengths`` describe the transitions
    at the field the state was prepared in.
    """

    grid: FrequencyGrid
    n_a: np.ndarray = field(repr=False)
    n_b: np.ndarray = field(repr=False)
    pool_tags: np.ndarray = field(repr=False)
    excited: np.ndarray = field(default=None, repr=False)
    offsets: np.ndarray = field(default=None, repr=False)
    strengths: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.grid.n_points
        n_a = np.array(self.n_a, dtype=float)
        n_b = np.array(self.n_b, dtype=float)
        excited = np.zeros((2, n)) if self.excited is None else np.array(self.excited, dtype=float)
        tags = np.array(self.pool_tags, dtype=float)
        if tags.ndim == 1:
            tags = np.broadcast_to(tags, (n, 2)).copy()
        if n_a.shape != (n,) or n_b.shape != (n,) or excited.shape != (2, n) or tags.shape != (n, 2):
            raise ShapeError("population arrays do not match the grid")
        tol = 1e-9
        if (np.any(n_a < -tol) or np.any(n_b < -tol) or np.any(n_a > 1 + tol)
                or np.any(n_b > 1 + tol) or np.any(n_a + n_b > 1 + tol)):
            raise DomainError("ground populations must satisfy 0 <= n_a, n_b and n_a + n_b <= 1")
        offsets = np.zeros(4) if self.offsets is None else np.array(self.offsets, dtype=float)
        strengths = np.ones(4) if self.strengths is None else np.array(self.strengths, dtype=float)
        for name, arr in (("n_a", n_a), ("n_b", n_b), ("excited", excited), ("pool_tags", tags),
                          ("offsets", offsets), ("strengths", strengths)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def equilibrium(cls, grid, scheme=None, B=0.0):
        scheme = scheme or LevelScheme()
        n = grid.n_points
        return cls(grid, np.full(n, 0.5), np.full(n, 0.5), np.array(scheme.relax_weights),
                   offsets=scheme.transition_offsets(B), strengths=scheme.transition_strengths)

    def total(self):
        return self.n_a + self.n_b + self.excited.sum(axis=0)

    def probed_population(self, freqs):
        """Strength-weighted ground population seen by a probe at ``freqs``.

        Equals 0.5 at equilibrium. Classes off the grid count as unpumped.
        """
        freqs = np.asarray(freqs, dtype=float)
        pts = self.grid.points
        ground = (self.n_a, self.n_b)
        acc = np.zeros_like(freqs)
        for off, s, g in zip(self.offsets, self.strengths, _GROUND_INDEX):
            if s == 0:
                continue
            acc += s * np.interp(freqs - off, pts, ground[g], left=0.5, right=0.5)
        return acc / self.strengths.sum()

    def to_csv(self, path):
        _io.write_csv(path, ["frequency_hz", "n_a", "n_b"], [self.grid.points, self.n_a, self.n_b])


def hole_feature_offsets(scheme, B):
    """Positions of side holes and anti-holes around a hole burnt at zero detuning.

    Side holes come from the second transition sharing the pumped ground
    level; anti-holes from transitions of the other ground level.
    """
    if not B >= 0:
        raise DomainError(f"magnetic field must be nonnegative, got {B}")
    g = scheme.ground_splitting_per_tesla * B
    e = scheme.excited_splitting_per_tesla * B

    def symmetric(values):
        vals = {round(s * v, 6) for v in values for s in (1, -1) if abs(v) > 0}
        return sorted(vals)

    return symmetric([e]), symmetric([g, g + e, g - e])


def _class_grid(profile_grid, offsets):
    step = profile_grid.step
    n_ext = int(np.ceil(np.max(np.abs(offsets)) / step - 1e-9)) if np.any(offsets) else 0
    return FrequencyGrid(profile_grid.center_offset, profile_grid.span + 2 * n_ext * step,
                         profile_grid.n_points + 2 * n_ext)


def _generator(ra, rb, scheme):
    """Rate matrices, shape (n, 4, 4), acting on [n_a, n_b, e_a, e_b]."""
    n = ra.shape[0]
    g = 1.0 / scheme.excited_lifetime
    beta = scheme.branching_ratio
    A = np.zeros((n, 4, 4))
    A[:, 0, 0] = -ra
    A[:, 0, 2] = ra + (1 - beta) * g
    A[:, 0, 3] = beta * g
    A[:, 1, 1] = -rb
    A[:, 1, 3] = rb + (1 - beta) * g
    A[:, 1, 2] = beta * g
    A[:, 2, 0] = ra
    A[:, 2, 2] = -ra - g
    A[:, 3, 1] = rb
    A[:, 3, 3] = -rb - g
    return A


def _rk4_propagator(A, h):
    """One classical RK4 step for x' = A x with constant A, as a matrix."""
    eye = np.eye(4)
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    return eye + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24


def integration_step(scheme, seq):
    """Default fixed step: a twentieth of the shortest of lifetime, dwell and 1/rate."""
    scales = [scheme.excited_lifetime, seq.dwell]
    rate = seq.peak_rate * max(scheme.transition_strengths) * 2
    if rate > 0:
        scales.append(1.0 / rate)
    return min(scales) / 20


def evolve_populations(profile, scheme, seq, B, dt=None):
    """Integrate the pumping rate equations for every spectral class.

    The class grid extends the profile grid by the largest transition offset
    so that every class with a transition inside the profile is simulated.
    Rates are constant within a pump step, so the RK4 update over a step is
    a fixed matrix; full sweeps are applied as matrix powers.
    """
    grid = profile.grid
    if grid.span < seq.sweep_span * (1 - 1e-9):
        raise DomainError("profile grid must span at least the pump sweep")
    if dt is None:
        dt = integration_step(scheme, seq)
    if not dt > 0:
        raise DomainError("integration step must be positive")
    if dt > scheme.excited_lifetime / 10:
        raise StabilityError(
            f"step {dt:.3g} s exceeds a tenth of the excited lifetime {scheme.excited_lifetime:.3g} s"
        )
    rate_bound = seq.peak_rate * sum(scheme.transition_strengths) + 1 / scheme.excited_lifetime
    if dt * rate_bound > 2.5:
        raise StabilityError(f"step {dt:.3g} s is unstable for pump rate {seq.peak_rate:.3g} 1/s")

    offsets = scheme.transition_offsets(B)
    strengths = np.array(scheme.transition_strengths)
    cgrid = _class_grid(grid, offsets)
    centers = cgrid.points
    n = cgrid.n_points

    substeps = max(1, int(np.ceil(seq.dwell / dt - 1e-9)))
    h = seq.dwell / substeps
    transition_freqs = centers[:, None] + offsets[None, :]

    def dwell_propagator(k, m):
        rates = (seq.peak_rate * seq.amplitude_mask[k] * strengths
                 * lorentzian(transition_freqs - seq.step_frequencies[k], seq.homogeneous_fwhm))
        A = _generator(rates[:, :2].sum(axis=1), rates[:, 2:].sum(axis=1), scheme)
        return np.linalg.matrix_power(_rk4_propagator(A, h), m)

    identity = np.broadcast_to(np.eye(4), (n, 4, 4))
    sweep = identity.copy()
    # dark steps still let the excited state decay, so every step is applied
    cache = {}
    for k in range(seq.n_steps):
        cache[k] = dwell_propagator(k, substeps)
        sweep = cache[k] @ sweep

    n_sweeps = int(np.floor(seq.total_duration / seq.sweep_duration + 1e-9))
    total = np.linalg.matrix_power(sweep, n_sweeps) if n_sweeps > 0 else identity.copy()
    remainder = seq.total_duration - n_sweeps * seq.sweep_duration
    n_sub = int(round(remainder / h))
    k = 0
    while n_sub > 0:
        m = min(substeps, n_sub)
        P = cache[k] if m == substeps else dwell_propagator(k, m)
        total = P @ total
        n_sub -= m
        k += 1

    x0 = np.array([0.5, 0.5, 0.0, 0.0])
    x = total @ x0
    x = np.clip(x, 0.0, None)
    return PopulationState(cgrid, x[:, 0], x[:, 1], np.array(scheme.relax_weights),
                           excited=x[:, 2:].T, offsets=offsets, strengths=strengths)


def relaxation_factor(scheme, T_d, weights=None):
    """Fraction of the spin imbalance left after a delay ``T_d``."""
    if not T_d >= 0:
        raise DomainError(f"delay must be nonnegative, got {T_d}")
    w = np.asarray(scheme.relax_weights if weights is None else weights, dtype=float)
    decay = np.exp(-2.0 * T_d / np.asarray(scheme.relax_constants))
    return w @ decay


def relax(state, scheme, T_d):
    """Let the excited residue decay and the spin imbalance relax for ``T_d``.

    The imbalance of each class decays as ``w1 exp(-2T/tau1) + w2 exp(-2T/tau2)``
    with the class's pool shares; the shares are updated so that successive
    calls compose exactly.
    """
    if not T_d >= 0:
        raise DomainError(f"delay must be nonnegative, got {T_d}")
    if T_d == 0:
        return state
    beta = scheme.branching_ratio
    e_a, e_b = state.excited
    keep = np.exp(-T_d / scheme.excited_lifetime)
    da, db = e_a * (1 - keep), e_b * (1 - keep)
    n_a = state.n_a + (1 - beta) * da + beta * db
    n_b = state.n_b + (1 - beta) * db + beta * da

    decay = np.exp(-2.0 * T_d / np.asarray(scheme.relax_constants))
    weighted = state.pool_tags * decay[None, :]
    f = weighted.sum(axis=1)
    tags = np.where(f[:, None] > 0, weighted / np.where(f > 0, f, 1)[:, None], state.pool_tags)
    mean = 0.5 * (n_a + n_b)
    half_diff = 0.5 * (n_a - n_b) * f
    return PopulationState(state.grid, mean + half_diff, mean - half_diff, tags,
                           excited=np.stack([e_a * keep, e_b * keep]),
                           offsets=state.offsets, strengths=state.strengths)


def _check_compatible(state, base_grid):
    sg = state.grid
    if not np.isclose(sg.step, base_grid.step, rtol=1e-9, atol=0):
        raise ShapeError("state and base profile grids have different steps")
    shift = (base_grid.start - sg.start) / sg.step
    if abs(shift - round(shift)) > 1e-6 or shift < -1e-6 or base_grid.stop > sg.stop + 1e-6 * sg.step:
        raise ShapeError("base profile grid is not a sub-grid of the population grid")


def tailored_profile(state, base, scheme=None, B=None):
    """Absorption after pumping.

    Each transition probed at ``ν`` contributes in proportion to the
    population of its ground level in the resonant class, relative to the
    equilibrium value 0.5, times the unpumped depth ``base(ν)``. The base line
    is taken as locally flat across one class's transition offsets.
    """
    _check_compatible(state, base.grid)
    if scheme is not None and B is not None:
        expected = scheme.transition_offsets(B)
        if not np.allclose(expected, state.offsets, rtol=1e-9, atol=1e-6):
            raise ShapeError("state was prepared with different transition offsets")
    probed = state.probed_population(base.frequencies)
    return AbsorptionProfile(base.grid, base.depth * 2.0 * probed)


def relax_profile(profile, reference, scheme, T_d):
    """Relax a tailored profile toward ``reference`` with uniform pool weights.

    Depth is linear in the populations, so this equals re-probing a relaxed
    state whose excited residue has already decayed.
    """
    if not profile.grid.same_as(reference.grid):
        raise ShapeError("profile and reference grids differ")
    f = relaxation_factor(scheme, T_d)
    depth = reference.depth + (profile.depth - reference.depth) * f
    return AbsorptionProfile(profile.grid, np.clip(depth, 0.0, None))


def spin_polarization(state, window):
    """Fraction of probed population moved out of the pumped ground level.

    ``window`` is a ``(low, high)`` probe-frequency range. Within it the
    residual population is the probed ground population of each sample
    (0.5 at equilibrium); the result is one minus its mean.
    """
    lo, hi = float(window[0]), float(window[1])
    pts = state.grid.points
    if not hi >= lo:
        raise DomainError("window bounds are reversed")
    if lo < pts[0] - 1e-9 or hi > pts[-1] + 1e-9:
        raise DomainError("window extends beyond the population grid")
    sel = pts[(pts >= lo - 1e-9 * state.grid.step) & (pts <= hi + 1e-9 * state.grid.step)]
    if sel.size == 0:
        raise DomainError("window contains no grid samples")
    residual = state.probed_population(sel).mean()
    return float(np.clip(1.0 - residual, 0.0, 1.0))


def hole_decay_trace(state, base, scheme, delays, probe_frequency=0.0, signal="contrast"):
    """Hole signal at ``probe_frequency`` versus pump-probe delay.

    ``signal="contrast"`` returns ``1 - d(T_d)/d_unpumped``, which is linear in
    the populations and decays exactly as the relaxation law.
    ``signal="transmission"`` returns ``exp(-d(T_d))``.
    """
    delays = np.asarray(delays, dtype=float)
    i = base.grid.index_of(probe_frequency)
    d0 = base.depth[i]
    values = []
    for T in delays:
        d = tailored_profile(relax(state, scheme, T), base).depth[i]
        if signal == "contrast":
            values.append(1.0 - d / d0)
        elif signal == "transmission":
            values.append(np.exp(-d))
        else:
            raise DomainError(f"unknown signal {signal!r}")
    return DecayTrace(delays, np.clip(values, 0.0, 1.0))


def spectral_features(tailored, base, rel_threshold=0.01):
    """Positions of holes and anti-holes in a pumped profile.

    Holes are local transmission maxima (depth minima) and anti-holes local
    transmission minima where the depth change from ``base`` exceeds
    ``rel_threshold`` of the largest change. Returns ``(holes, anti_holes)``
    as arrays of frequencies.
    """
    if not tailored.grid.same_as(base.grid):
        raise ShapeError("profile and base grids differ")
    change = tailored.depth - base.depth
    scale = np.abs(change).max()
    f = tailored.frequencies
    if scale == 0:
        return np.array([]), np.array([])
    strong = np.abs(change) > rel_threshold * scale
    holes, _ = find_peaks(-tailored.depth)
    anti, _ = find_peaks(tailored.depth)
    holes = holes[strong[holes] & (change[holes] < 0)]
    anti = anti[strong[anti] & (change[anti] > 0)]
    return f[holes], f[anti]
