"""Ramsey read-out of a single output port and the resulting phase sensitivity.

The two pi/2 pulses plus free precession act on the input as the rotation
``exp(-i theta Jy)``.  In the Heisenberg picture the measured output number is

    n_a,out(theta) = n/2 + cos(theta) Jz - sin(theta) Jx

which reproduces ``<n_a> cos^2(theta/2) + <n_b> sin^2(theta/2)
- <a^dag b + b^dag a> sin(theta) / 2``.  The phase error follows from
error propagation of the mean of ``m`` repeated counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .observables import MomentSet, moments
from .states import AtomState

DEFAULT_WINDOW = (-math.pi / 2, math.pi)
DEFAULT_GRID = 2001
# relative thresholds for 0/0 detection; see _sensitivity_arrays
_SLOPE_RTOL = 1e-10
_VAR_RTOL = 1e-18
_PLATEAU_RTOL = 1e-9


class NoMinimumError(ArithmeticError):
    """Every phase in the scanned window gives a divergent sensitivity."""


def _as_moments(state_or_moments) -> MomentSet:
    if isinstance(state_or_moments, MomentSet):
        return state_or_moments
    return moments(state_or_moments)


@dataclass(frozen=True)
class SensitivityPoint:
    theta: float
    delta_theta: float  # math.inf marks an uninformative operating point
    mean_out: float
    var_out: float
    slope: float
    m: int

    @property
    def divergent(self) -> bool:
        return math.isinf(self.delta_theta)


@dataclass(frozen=True)
class SensitivityCurve:
    points: tuple[SensitivityPoint, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.points])

    @property
    def delta_thetas(self) -> np.ndarray:
        return np.array([p.delta_theta for p in self.points])


def output_number_moments(moms: MomentSet, theta):
    """Mean, variance and theta-derivative of the output mode-a count."""
    th = np.asarray(theta, dtype=float)
    c, s = np.cos(th), np.sin(th)
    mean = moms.n_mean / 2 + c * moms.jz - s * moms.jx
    var = moms.linear_variance(0.5, c, -s)
    slope = -s * moms.jz - c * moms.jx
    if th.ndim == 0:
        return float(mean), float(var), float(slope)
    return mean, var, slope


def _sensitivity_arrays(moms: MomentSet, theta, m: int):
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    mean, var, slope = output_number_moments(moms, th)
    scale = max(moms.n_mean, 1.0)
    slope_tol = _SLOPE_RTOL * scale
    var_tol = _VAR_RTOL * scale * scale
    aslope = np.abs(slope)
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.sqrt(var) / (math.sqrt(m) * aslope)
    flat = aslope <= slope_tol
    dt[flat | (aslope < 1e-14 * np.sqrt(var))] = math.inf
    # Output count sharp and signal stationary at the same phase: take the
    # ratio of the next non-vanishing orders (L'Hopital).
    zero_over_zero = flat & (var <= var_tol)
    if np.any(zero_over_zero):
        t = th[zero_over_zero]
        c, s = np.cos(t), np.sin(t)
        var1 = moms.linear_variance(0.0, -s, -c)
        curv = np.abs(-c * moms.jz + s * moms.jx)
        with np.errstate(divide="ignore"):
            lim = np.where(curv > slope_tol, np.sqrt(var1) / (math.sqrt(m) * curv), math.inf)
        dt[zero_over_zero] = lim
    return th, mean, var, slope, dt


def delta_theta(state_or_moments, theta: float, m: int = 1) -> SensitivityPoint:
    """Error-propagation phase sensitivity at ``theta`` for ``m`` repetitions.

    Divergent operating points (signal slope zero while the output count
    still fluctuates) give ``delta_theta = inf``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    moms = _as_moments(state_or_moments)
    th, mean, var, slope, dt = _sensitivity_arrays(moms, theta, m)
    return SensitivityPoint(float(th[0]), float(dt[0]), float(mean[0]), float(var[0]),
                            float(slope[0]), int(m))


def small_angle_delta_theta(moms: MomentSet, m: int = 1) -> float:
    """``2 Delta n_a / (sqrt(m) |<a^dag b + b^dag a>|)`` for symmetric inputs."""
    moms = _as_moments(moms)
    nb_mean = moms.n_mean - moms.na_mean
    if abs(moms.na_mean - nb_mean) > 1e-6 * max(moms.n_mean, 1.0):
        raise ValueError(
            f"populations not symmetric: <n_a>={moms.na_mean:.6g}, <n_b>={nb_mean:.6g}")
    if abs(moms.coherence) <= 1e-14 * max(moms.n_mean, 1.0):
        return math.inf
    return 2.0 * math.sqrt(moms.na_var) / (math.sqrt(m) * abs(moms.coherence))


def sql_limit(n_mean: float, m: int = 1) -> float:
    return 1.0 / math.sqrt(m * n_mean)


def heisenberg_limit(n_mean: float, m: int = 1) -> float:
    return math.sqrt(2.0) / (n_mean * math.sqrt(m))


def eq6_sensitivity(n_mean: float, sigma2: float, theta, m: int = 1):
    """Closed-form sensitivity of the unsqueezed prepared clock state.

    ``sqrt(1/n + sigma2/n^2 * (1 - sin)^2 / cos^2) / sqrt(m)``, with the
    ratio written as ``tan(pi/4 - theta/2)`` so theta = pi/2 is regular.
    Raises ``ValueError`` at the genuine poles theta = -pi/2 (mod 2 pi)
    when ``sigma2 > 0``.
    """
    th = np.asarray(theta, dtype=float)
    half = np.pi / 4 - th / 2
    if sigma2 > 0 and np.any(np.abs(np.cos(half)) < 1e-12):
        raise ValueError("theta = -pi/2 (mod 2pi) is a pole of the closed form")
    r = np.tan(half)
    out = np.sqrt(1.0 / n_mean + sigma2 / n_mean ** 2 * r * r) / math.sqrt(m)
    return float(out) if th.ndim == 0 else out


def eq8_sensitivity(n_mean: float, sigma2: float, gamma, m: int = 1):
    """Small-angle sensitivity after QND squeezing of strength ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    v = sigma2 + n_mean
    out = np.sqrt(v / (1.0 + g * v)) / (n_mean * math.sqrt(m))
    return float(out) if g.ndim == 0 else out


def sensitivity_curve(state_or_moments, theta_grid, m: int = 1,
                      provenance: dict | None = None) -> SensitivityCurve:
    th = np.asarray(theta_grid, dtype=float)
    if th.ndim != 1 or th.size == 0 or np.any(np.diff(th) <= 0):
        raise ValueError("theta grid must be a non-empty, strictly increasing vector")
    moms = _as_moments(state_or_moments)
    th, mean, var, slope, dt = _sensitivity_arrays(moms, th, m)
    pts = tuple(SensitivityPoint(float(a), float(b), float(c), float(d), float(e), int(m))
                for a, b, c, d, e in zip(th, dt, mean, var, slope))
    prov = {"n_mean": moms.n_mean, "sigma2": moms.n_var}
    prov.update(provenance or {})
    return SensitivityCurve(pts, prov)


def optimal_theta(state_or_moments, m: int = 1, theta_window=DEFAULT_WINDOW,
                  grid: int = DEFAULT_GRID, xtol: float = 1e-7) -> tuple[float, float]:
    """Global minimum of the sensitivity over ``theta_window``.

    Grid scan followed by a bounded scalar refinement between the grid
    neighbours of the best point.  Returns ``(theta_opt, delta_theta_opt)``.
    """
    lo, hi = theta_window
    if not hi > lo:
        raise ValueError("empty theta window")
    moms = _as_moments(state_or_moments)
    th = np.linspace(lo, hi, grid)
    dt = _sensitivity_arrays(moms, th, m)[-1]
    finite = np.isfinite(dt)
    if not finite.any():
        raise NoMinimumError("sensitivity diverges on the whole window")
    best = float(np.min(dt[finite]))
    plateau = finite & (dt <= best * (1.0 + _PLATEAU_RTOL))
    if np.count_nonzero(plateau) > 1:
        # Flat curve (e.g. fixed total number without squeezing): every
        # phase is optimal, so prefer the quietest output port away from
        # the window edges.
        var = output_number_moments(moms, th)[1]
        inner = plateau.copy()
        inner[[0, -1]] = False
        i = int(np.argmin(np.where(inner if inner.any() else plateau, var, np.inf)))
    else:
        i = int(np.argmin(np.where(finite, dt, np.inf)))
    a, b = th[max(i - 1, 0)], th[min(i + 1, grid - 1)]

    def f(t):
        return float(_sensitivity_arrays(moms, t, m)[-1][0])

    if np.count_nonzero(plateau) > 1:
        res = minimize_scalar(lambda t: output_number_moments(moms, t)[1], bounds=(a, b),
                              method="bounded", options={"xatol": xtol})
        if res.success and f(res.x) <= best * (1.0 + _PLATEAU_RTOL):
            return float(res.x), f(res.x)
        return float(th[i]), float(dt[i])
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": xtol})
    if res.success and np.isfinite(res.fun) and res.fun <= dt[i]:
        return float(res.x), float(res.fun)
    return float(th[i]), float(dt[i])
