"""Least-squares estimation of hole decay constants and isotope lines.

Decay models use the ``exp(-2 T_d / tau)`` convention. Fits are parametrized
by the rate ``k = 2 / tau`` so that a flat trace (``k -> 0``) stays inside the
feasible region.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from afcsim import io as _io
from afcsim.errors import DomainError, FitError, ShapeError
from afcsim.spectrum import gaussian

MULTI_START = 8


@dataclass(frozen=True)
class DecayTrace:
    """Hole signal versus pump-probe delay.

    Values are nominally in [0, 1]; measured or noisy data may stray
    slightly outside, so only finiteness is enforced.
    """

    delays: np.ndarray = field(repr=False)
    transmissions: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.delays, dtype=float).ravel()
        y = np.array(self.transmissions, dtype=float).ravel()
        if d.shape != y.shape:
            raise ShapeError("delays and transmissions differ in length")
        if d.size >= 2 and np.any(np.diff(d) <= 0):
            raise DomainError("delays must be strictly increasing")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(y))):
            raise DomainError("trace contains non-finite values")
        d.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "transmissions", y)

    def __len__(self):
        return self.delays.size

    def to_csv(self, path):
        _io.write_csv(path, ["delay_s", "transmission"], [self.delays, self.transmissions])

    @classmethod
    def from_csv(cls, path):
        cols = _io.read_csv(path, ["delay_s", "transmission"])
        return cls(cols["delay_s"], cols["transmission"])


@dataclass
class FitReport:
    """Best parameters, 1-sigma uncertainties from the Jacobian, residual norm."""

    model: str
    params: dict
    uncertainties: dict
    residual_norm: float
    flags: dict = field(default_factory=dict)
    nfev: int = 0

    def __getitem__(self, key):
        return self.params[key]

    def to_record(self):
        return {
            "model": self.model,
            "params": dict(self.params),
            "uncertainties": dict(self.uncertainties),
            "residual_norm": self.residual_norm,
            "flags": dict(self.flags),
        }


def _covariance(res, n_params):
    J = res.jac
    dof = max(J.shape[0] - n_params, 1)
    s2 = 2 * res.cost / dof
    cov = np.linalg.pinv(J.T @ J) * s2
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def _solve(fun, x0, bounds, x_scale):
    res = least_squares(fun, x0, bounds=bounds, x_scale=x_scale, method="trf",
                        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=5000)
    return res


def _tau(k):
    return 2.0 / k if k > 0 else float("inf")


def _tau_sigma(k, sk):
    return 2.0 * sk / k ** 2 if k > 0 else float("inf")


def single_exp_model(t, a, tau, c):
    return a * np.exp(-2.0 * t / tau) + c


def double_exp_model(t, w1, tau1, w2, tau2, c):
    return w1 * np.exp(-2.0 * t / tau1) + w2 * np.exp(-2.0 * t / tau2) + c


def fit_single_exp(trace):
    """Fit ``a exp(-2 T_d / tau) + c``.

    A flat trace yields ``tau = inf`` with ``flags["tau_unbounded"]`` set.
    """
    t, y = trace.delays, trace.transmissions
    if len(trace) < 4:
        raise DomainError("single-exponential fit needs at least 4 points")
    span = t[-1] - t[0]
    scale = max(np.ptp(y), 1e-12)

    def resid(p):
        a, k, c = p
        return a * np.exp(-k * (t - t[0])) + c - y

    best = None
    for tau0 in np.geomspace(span / 50, 2 * span, 4):
        x0 = [y[0] - y[-1], 2.0 / tau0, np.clip(y[-1], 0, 1)]
        res = _solve(resid, x0, ([-np.inf, 0, 0], [np.inf, np.inf, 1]), [scale, 2 / span, 1])
        if res.status > 0 and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise FitError("single-exponential fit did not converge", {"message": res.message, "nfev": res.nfev})
    a, k, c = best.x
    sa, sk, sc = _covariance(best, 3)
    # amplitude is reported at T_d = 0
    a0 = a * np.exp(k * t[0])
    flat = k * span < 1e-6 or abs(a0) < 1e-9 * max(np.abs(y).max(), 1e-300)
    params = {"amplitude": a0, "tau": _tau(k) if not flat else float("inf"), "baseline": c}
    if flat:
        params["amplitude"] = 0.0 if abs(a0) < 1e-9 * max(np.abs(y).max(), 1e-300) else a0
    return FitReport(
        "single_exp",
        params,
        {"amplitude": sa * np.exp(k * t[0]), "tau": _tau_sigma(k, sk), "baseline": sc},
        float(np.linalg.norm(best.fun)),
        {"tau_unbounded": bool(flat)},
        int(best.nfev),
    )


def _double_starts(t, y, initial):
    span = t[-1] - t[0]
    amp = max(y[0] - y[-1], 1e-3)
    c0 = float(np.clip(y[-1], 0, 1))
    if initial is not None:
        w1, tau1, w2, tau2 = initial
        return [(w1, 2 / tau1, w2, 2 / tau2, c0)]
    starts = []
    for tau_fast in np.geomspace(span / 200, span / 5, MULTI_START):
        starts.append((amp / 2, 2 / tau_fast, amp / 2, 2 / (10 * tau_fast), c0))
    return starts


def fit_double_exp(trace, initial=None, degeneracy_tol=0.05):
    """Fit ``w1 exp(-2T/tau1) + w2 exp(-2T/tau2) + c`` with ``tau1 < tau2``.

    Weights are constrained nonnegative and the baseline to [0, 1]. Eight
    log-spaced starts are tried unless ``initial = (w1, tau1, w2, tau2)`` is
    given. When the two components cannot be told apart (a weight below
    ``degeneracy_tol`` of the total, or taus within ``degeneracy_tol``
    relative) the single-exponential result is returned with
    ``flags["degenerate"]`` set.
    """
    t, y = trace.delays, trace.transmissions
    if len(trace) < 6:
        raise DomainError("double-exponential fit needs at least 6 points")
    span = t[-1] - t[0]
    scale = max(np.ptp(y), 1e-12)

    def resid(p):
        w1, k1, w2, k2, c = p
        return w1 * np.exp(-k1 * t) + w2 * np.exp(-k2 * t) + c - y

    lower = [0, 0, 0, 0, 0]
    upper = [np.inf, np.inf, np.inf, np.inf, 1]
    best, last = None, None
    for x0 in _double_starts(t, y, initial):
        x0 = np.clip(np.array(x0, dtype=float), lower, [1e300, 1e300, 1e300, 1e300, 1])
        last = _solve(resid, x0, (lower, upper), [scale, 2 / span, scale, 2 / span, 1])
        if last.status > 0 and (best is None or last.cost < best.cost - 1e-15 * max(best.cost, 1e-300)):
            best = last
    if best is None:
        raise FitError("double-exponential fit did not converge",
                       {"message": last.message, "nfev": last.nfev})

    w1, k1, w2, k2, c = best.x
    s = _covariance(best, 5)
    sw1, sk1, sw2, sk2, sc = s
    # fast component first
    if k1 < k2:
        w1, k1, w2, k2 = w2, k2, w1, k1
        sw1, sk1, sw2, sk2 = sw2, sk2, sw1, sk1
    wsum = w1 + w2
    degenerate = (
        wsum <= 0
        or min(w1, w2) < degeneracy_tol * wsum
        or k2 <= 0
        or abs(k1 - k2) < degeneracy_tol * max(k1, k2)
    )
    if degenerate:
        single = fit_single_exp(trace)
        return FitReport(
            "double_exp",
            {"w1": single["amplitude"], "tau1": single["tau"], "w2": 0.0,
             "tau2": single["tau"], "baseline": single["baseline"]},
            {"w1": single.uncertainties["amplitude"], "tau1": single.uncertainties["tau"],
             "w2": float("nan"), "tau2": float("nan"), "baseline": single.uncertainties["baseline"]},
            single.residual_norm,
            {"degenerate": True, "tau_unbounded": single.flags["tau_unbounded"]},
            single.nfev,
        )
    return FitReport(
        "double_exp",
        {"w1": w1, "tau1": _tau(k1), "w2": w2, "tau2": _tau(k2), "baseline": c},
        {"w1": sw1, "tau1": _tau_sigma(k1, sk1), "w2": sw2, "tau2": _tau_sigma(k2, sk2),
         "baseline": sc},
        float(np.linalg.norm(best.fun)),
        {"degenerate": False},
        int(best.nfev),
    )


@dataclass(frozen=True)
class LineFit:
    center: float
    fwhm: float
    weight: float


def _initial_peaks(x, y, n_lines):
    peaks, props = find_peaks(y, prominence=1e-3 * y.max())
    if peaks.size >= n_lines:
        order = np.argsort(props["prominences"])[::-1][:n_lines]
        return np.sort(peaks[order])
    # overlapping lines: fall back to maxima of the negative curvature
    curv = -np.gradient(np.gradient(y, x), x)
    cpeaks, cprops = find_peaks(curv, prominence=1e-3 * curv.max())
    cpeaks = cpeaks[y[cpeaks] > 1e-3 * y.max()]
    if cpeaks.size < n_lines:
        raise FitError(f"requested {n_lines} lines but only {max(peaks.size, cpeaks.size)} are resolvable",
                       {"peaks": peaks.tolist(), "curvature_peaks": cpeaks.tolist()})
    order = np.argsort(curv[cpeaks])[::-1][:n_lines]
    return np.sort(cpeaks[order])


def _half_width_guess(x, y, i):
    half = y[i] / 2
    j = i
    while j < len(y) - 1 and y[j] > half:
        j += 1
    k = i
    while k > 0 and y[k] > half:
        k -= 1
    return max(x[j] - x[k], 4 * (x[1] - x[0]))


def fit_lines(profile, n_lines):
    """Fit a sum of ``n_lines`` Gaussians to an absorption profile.

    Returns :class:`LineFit` items sorted by center; ``weight`` is each line's
    share of the total integrated depth.
    """
    if n_lines < 1:
        raise DomainError("n_lines must be at least 1")
    x = profile.frequencies
    y = profile.depth
    if not y.max() > 0:
        raise FitError("profile has no absorption to fit")
    idx = _initial_peaks(x, y, n_lines)
    x0_off, xs = profile.grid.center_offset, profile.grid.span
    u = (x - x0_off) / xs
    ys = y.max()
    p0 = []
    for i in idx:
        w = _half_width_guess(x, y, i)
        p0 += [y[i] / ys, u[i], min(w, xs) / xs]
    p0 = np.array(p0)
    step = profile.grid.step / xs
    lower = np.tile([0.0, u[0], step], n_lines)
    upper = np.tile([np.inf, u[-1], 1.0], n_lines)
    p0 = np.clip(p0, lower + 1e-12, np.minimum(upper, 1e300) - 1e-12)

    def model(p):
        p = p.reshape(n_lines, 3)
        return sum(a * gaussian(u, c, w) for a, c, w in p)

    res = least_squares(lambda p: model(p) - y / ys, p0, bounds=(lower, upper),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    if res.status <= 0:
        raise FitError("line fit did not converge", {"message": res.message, "nfev": res.nfev})
    p = res.x.reshape(n_lines, 3)
    areas = p[:, 0] * p[:, 2]
    lines = [LineFit(float(x0_off + c * xs), float(w * xs), float(ar / areas.sum()))
             for (a, c, w), ar in zip(p, areas)]
    return sorted(lines, key=lambda l: l.center)
