"""Closed-form random-matrix predictions for the QFI and related scales."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .rmt import lorentzian


@dataclass(frozen=True)
class RmtPredictionInputs:
    """``level_density`` is omega for the RMT model and 1/D(E0) for a spin chain."""

    gamma: float
    level_density: float
    m2: float
    var: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.level_density > 0:
            raise ValueError("level_density must be positive")
        if self.var < 0:
            raise ValueError("var must be nonnegative")
        if self.m2 - self.var < -1e-12 * max(1.0, abs(self.m2)):
            raise ValueError("m2 must be at least var")


def decay_shape(x):
    """(exp(-2x) - 1 + 2x) / (2 x^2); tends to 1 as x -> 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    exact = (np.expm1(-2.0 * xs) + 2.0 * xs) / (2.0 * xs * xs)
    series = 1.0 - 2.0 * x / 3.0 + x * x / 3.0 - 2.0 * x**3 / 15.0 + 2.0 * x**4 / 45.0
    return np.where(small, series, exact)


def qfi_rmt(inputs: RmtPredictionInputs, t):
    """4 t^2 [ (level_density / (pi Gamma)) m2 + var * decay_shape(Gamma t) ]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    g = inputs.gamma
    out = 4.0 * t_arr**2 * (inputs.level_density / (np.pi * g) * inputs.m2 + inputs.var * decay_shape(g * t_arr))
    return out if out.ndim else float(out)


def qfi_rmt_terms(inputs: RmtPredictionInputs, t) -> tuple[np.ndarray, np.ndarray]:
    """The plateau (final quadratic) and decay parts of :func:`qfi_rmt` separately."""
    t = np.asarray(t, dtype=float)
    g = inputs.gamma
    return (4.0 * t**2 * inputs.level_density / (np.pi * g) * inputs.m2,
            4.0 * t**2 * inputs.var * decay_shape(g * t))


def microcanonical_average(values, energies, center: float, gamma: float, omega: float) -> float:
    """Lorentzian-weighted average of diagonal elements around ``center``.

    The weights are normalized over the supplied levels, so a constant input is
    returned exactly and the Gamma -> 0 limit picks out the nearest level.
    """
    values = np.asarray(values, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if values.size == 0 or energies.size == 0:
        raise ValueError("empty input")
    if values.shape != energies.shape:
        raise ValueError("values and energies must have the same shape")
    if gamma / omega < 3:
        warnings.warn(f"Gamma/omega = {gamma / omega:.3g} < 3; Lorentzian averaging is unreliable",
                      RuntimeWarning, stacklevel=2)
    w = lorentzian(center, energies, gamma, omega)
    return float(np.sum(w * values) / np.sum(w))


def relaxation_law(t, gamma: float, o_free, o_bar: float):
    """<O(t)> = <O>_0 exp(-2 Gamma t) + <O_bar> (1 - exp(-2 Gamma t))."""
    e = np.exp(-2.0 * gamma * np.asarray(t, dtype=float))
    return o_free * e + o_bar * (1.0 - e)


@dataclass(frozen=True)
class GammaFit:
    gamma_hat: float
    obar: float
    residual: float
    window: tuple[float, float]
    converged: bool
    gamma_grid: float


def fit_gamma(times, series, o_free, o_bar: float, *, grid=(1e-3, 10.0), n_grid: int = 241) -> GammaFit:
    """Least-squares decay rate with ``o_free`` and ``o_bar`` held fixed.

    A log-spaced grid scan picks a starting value; the fit window is then
    [0, min(5 / Gamma_grid, t_max)] and a bounded scalar minimizer refines it.
    ``residual`` is the RMS misfit divided by |o_free - o_bar|.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    o_free = np.broadcast_to(np.asarray(o_free, dtype=float), t.shape)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and series must be 1-d arrays of equal length")
    if t.size < 20:
        raise ValueError("fit_gamma needs at least 20 samples")
    amp = float(np.max(np.abs(o_free - o_bar)))
    scale = max(amp, float(np.max(np.abs(y))), 1e-300)
    if amp <= 1e-12 * scale or np.ptp(y) <= 1e-12 * scale:
        raise ValueError("series carries no decay information (o_free == o_bar or constant data)")

    def rms(g, mask):
        r = y[mask] - relaxation_law(t[mask], g, o_free[mask], o_bar)
        return float(np.sqrt(np.mean(r * r)))

    everything = np.ones(t.size, dtype=bool)
    gammas = np.geomspace(grid[0], grid[1], n_grid)
    scan = np.array([rms(g, everything) for g in gammas])
    g_grid = float(gammas[int(np.argmin(scan))])
    t_hi = min(5.0 / g_grid, float(t.max()))
    mask = (t >= 0) & (t <= t_hi)
    if mask.sum() < 5:
        mask = everything
        t_hi = float(t.max())
    lo = np.log(grid[0])
    hi = np.log(grid[1])
    res = minimize_scalar(lambda lg: rms(np.exp(lg), mask), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    converged = bool(res.success)
    g_hat = float(np.exp(res.x)) if converged else g_grid
    return GammaFit(gamma_hat=g_hat, obar=float(o_bar), residual=rms(g_hat, mask) / amp,
                    window=(0.0, t_hi), converged=converged, gamma_grid=g_grid)


def heisenberg_time(D_E0: float, var: float, m2: float) -> float:
    """pi D(E0) var / m2: where the linear and final quadratic terms are equal."""
    if m2 == 0:
        raise ValueError("m2 must be nonzero")
    return float(np.pi * D_E0 * var / m2)


def deff_rmt_estimate(D_E0: float, gamma: float) -> float:
    """(2 pi / 3) D(E0) Gamma."""
    return float(2.0 * np.pi / 3.0 * D_E0 * gamma)


def two_spin_prediction(f_sql, zz_mc: float, gamma: float, D_E0: float, t):
    """QFI of two system spins, given the uncorrelated value ``f_sql``.

    The correlation term is 4 t^2 zz_mc {2/(pi D Gamma) + 2 decay_shape(Gamma t)}.
    """
    if abs(zz_mc) > 1 + 1e-12:
        raise ValueError("|zz_mc| must not exceed 1")
    t = np.asarray(t, dtype=float)
    bracket = 2.0 / (np.pi * D_E0 * gamma) + 2.0 * decay_shape(gamma * t)
    out = np.asarray(f_sql, dtype=float) + 4.0 * t**2 * zz_mc * bracket
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    prefactor: float
    n_points: int
    window: tuple[float, float]


def loglog_fit(times, values, t_min: float = 0.0, t_max: float = np.inf) -> PowerLawFit:
    """Least-squares fit of log(values) = log(prefactor) + slope * log(t) on a window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    m = (t >= t_min) & (t <= t_max) & (t > 0) & (v > 0)
    if m.sum() < 2:
        raise ValueError(f"fewer than 2 usable points in [{t_min}, {t_max}]")
    slope, icpt = np.polyfit(np.log(t[m]), np.log(v[m]), 1)
    return PowerLawFit(slope=float(slope), prefactor=float(np.exp(icpt)), n_points=int(m.sum()),
                       window=(float(t[m].min()), float(t[m].max())))


def quadratic_prefactor(times, values, t_min: float = 0.0, t_max: float = np.inf) -> float:
    """Median of values / t^2 on a window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    m = (t >= t_min) & (t <= t_max) & (t > 0)
    if not m.any():
        raise ValueError("no points in window")
    return float(np.median(v[m] / t[m] ** 2))


@dataclass(frozen=True)
class RegimeReport:
    """Power-law fits of the three growth regimes of an exact QFI series."""

    early: PowerLawFit | None
    linear: PowerLawFit | None
    late: PowerLawFit | None
    gamma: float
    tau: float


def regime_report(times, qfi, gamma: float, tau: float) -> RegimeReport:
    """Fit slopes on t <= 0.05/Gamma, [2/Gamma, 0.3 tau] and t >= 3 tau."""

    def fit(lo, hi):
        try:
            return loglog_fit(times, qfi, lo, hi)
        except ValueError:
            return None

    return RegimeReport(early=fit(0.0, 0.1 / (2.0 * gamma)), linear=fit(2.0 / gamma, 0.3 * tau),
                        late=fit(3.0 * tau, np.inf), gamma=gamma, tau=tau)
