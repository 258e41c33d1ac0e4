"""Analytic dispersive-regime solution with adiabatically eliminated spin coherence.

In the dispersive limit the cavity obeys a linear equation whose kernel is

    A(t) = exp(-κt/2 + i (g_s² N/Δs) ∫₀ᵗ (1 - 2p) dt')

so that ``α(t) = √κc1 β ∫₀ᵗ A(t')/A(t) dt'`` (empty cavity, drive on cavity
resonance). The population relaxes thermally and is pushed towards 1/2 by the
probe at the rate ``γ_meas = 2 g_s² |α|² Γ / (Δs² + Γ²/4)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .model import DegenerateDetuningError


class ConvergenceError(RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"self-consistent iteration did not converge after {iterations} iterations "
            f"(last relative change {residual:.3e}); outside the dispersive regime?")


@dataclass(frozen=True)
class PopulationPath:
    times: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p", p)
        if times.shape != p.shape or times.ndim != 1 or len(times) < 1:
            raise ValueError("times and p must be 1-D arrays of equal length")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("population must lie in [0, 1]")

    @classmethod
    def constant(cls, p, t_end, n=2):
        times = np.linspace(0.0, t_end, n)
        return cls(times, np.full(n, float(p)))

    def refined(self):
        """Twice as many intervals, p linearly interpolated."""
        t = self.times
        mid = 0.5 * (t[:-1] + t[1:])
        times = np.empty(2 * len(t) - 1)
        times[0::2] = t
        times[1::2] = mid
        return PopulationPath(times, np.interp(times, t, self.p))


def _check_detuning(params):
    if params.delta_s == 0:
        raise DegenerateDetuningError("dispersive solution needs Δs != 0")


def dispersive_phase(path, params, t):
    """(g_s² N/Δs) ∫₀ᵗ (1 - 2p) dt' by trapezoid, including a final partial interval."""
    _check_detuning(params)
    times, p = path.times, path.p
    if not 0.0 <= t <= times[-1] * (1 + 1e-12):
        raise ValueError(f"t = {t!r} outside path range")
    w = 1.0 - 2.0 * p
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(k, len(times) - 1)
    full = np.sum(0.5 * (w[1:k + 1] + w[:k]) * np.diff(times[:k + 1])) if k > 0 else 0.0
    if t > times[k]:
        w_t = np.interp(t, times, w)
        full += 0.5 * (w[k] + w_t) * (t - times[k])
    return params.g_s**2 * params.n_spins / params.delta_s * full


def kernel_A(path, params, t):
    """Integral kernel ``A(t)``; ``|A(t)| = exp(-κt/2)`` for any population path."""
    phase = dispersive_phase(path, params, t)
    return np.exp(-0.5 * params.kappa * t) * np.exp(1j * phase)


@numba.njit(cache=True, nogil=True)
def _alpha_recursion(times, w, half_kappa, chi, drive):
    # exact exponential integration with the trapezoid-averaged inversion on
    # each interval: α' = -(κ/2 - iχ w̄) α + √κc1 β
    n = times.shape[0]
    alpha = np.empty(n, dtype=np.complex128)
    alpha[0] = 0.0
    for k in range(n - 1):
        h = times[k + 1] - times[k]
        rho = half_kappa - 1j * chi * 0.5 * (w[k] + w[k + 1])
        decay = np.exp(-rho * h)
        alpha[k + 1] = alpha[k] * decay + drive * (1.0 - decay) / rho
    return alpha


def alpha_on_path(path, params, drive):
    """Cavity amplitude at every node of ``path`` (empty cavity at t = 0)."""
    _check_detuning(params)
    chi = params.g_s**2 * params.n_spins / params.delta_s
    return _alpha_recursion(path.times, 1.0 - 2.0 * path.p, 0.5 * params.kappa, chi,
                            complex(np.sqrt(params.kappa_c1) * drive.beta))


def _alpha_at(path, params, drive, t):
    times = path.times
    k = int(np.searchsorted(times, t, side="right"))
    grid = np.append(times[:k], t) if t > times[k - 1] else times[:k]
    sub = PopulationPath(grid, np.interp(grid, times, path.p))
    return alpha_on_path(sub, params, drive)[-1]


def alpha_dispersive(path, params, drive, t, rtol=1e-6, max_refinements=12):
    """α(t) = √κc1 β ∫₀ᵗ A(t')/A(t) dt', refined until successive grids agree to ``rtol``."""
    _check_detuning(params)
    if t == 0:
        return 0j
    current = _alpha_at(path, params, drive, t)
    for _ in range(max_refinements):
        path = path.refined()
        refined = _alpha_at(path, params, drive, t)
        if abs(refined - current) <= rtol * max(abs(refined), 1e-300):
            return refined
        current = refined
    return current


def measurement_rate(alpha, params):
    """Probe-induced depolarisation rate γ_meas for cavity amplitude ``alpha``."""
    return (2.0 * params.g_s**2 * np.abs(alpha) ** 2 * params.gamma
            / (params.delta_s**2 + 0.25 * params.gamma**2))


@numba.njit(cache=True, nogil=True)
def _population_recursion(times, gamma_meas, p0, gamma_th, p_eq):
    # dp/dt = -γ_th (p - p_eq) - γ_meas (p - 1/2), exact for interval-averaged γ_meas
    n = times.shape[0]
    p = np.empty(n)
    p[0] = p0
    for k in range(n - 1):
        h = times[k + 1] - times[k]
        g_m = 0.5 * (gamma_meas[k] + gamma_meas[k + 1])
        rate = gamma_th + g_m
        target = (gamma_th * p_eq + 0.5 * g_m) / rate
        p[k + 1] = target + (p[k] - target) * np.exp(-rate * h)
    return p


def p_path_dispersive(p0, params, drive, t_end, alpha_path):
    """Slow population dynamics driven by a given cavity amplitude.

    ``alpha_path`` is a ``(times, alpha)`` pair covering ``[0, t_end]``.
    """
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")
    times, alpha = (np.asarray(a) for a in alpha_path)
    keep = times <= t_end * (1 + 1e-12)
    times, alpha = times[keep], alpha[keep]
    p = _population_recursion(times, measurement_rate(alpha, params), float(p0),
                              params.gamma_th, params.p_eq)
    return PopulationPath(times, np.clip(p, 0.0, 1.0))


@numba.njit(cache=True, nogil=True)
def _march(times, p0, half_kappa, chi, drive, g2_rate, gamma_th, p_eq):
    # interval-by-interval solution of the coupled (α, p) recursions above;
    # yields the fixed point of the alternating scheme on this grid
    n = times.shape[0]
    alpha = np.empty(n, dtype=np.complex128)
    p = np.empty(n)
    alpha[0] = 0.0
    p[0] = p0
    for k in range(n - 1):
        h = times[k + 1] - times[k]
        gm0 = g2_rate * (alpha[k].real ** 2 + alpha[k].imag ** 2)
        p_next = p[k]
        a_next = alpha[k]
        for _ in range(50):
            rho = half_kappa - 1j * chi * 0.5 * ((1.0 - 2.0 * p[k]) + (1.0 - 2.0 * p_next))
            decay = np.exp(-rho * h)
            a_new = alpha[k] * decay + drive * (1.0 - decay) / rho
            g_m = 0.5 * (gm0 + g2_rate * (a_new.real ** 2 + a_new.imag ** 2))
            rate = gamma_th + g_m
            target = (gamma_th * p_eq + 0.5 * g_m) / rate
            p_new = target + (p[k] - target) * np.exp(-rate * h)
            done = abs(p_new - p_next) <= 1e-15 and abs(a_new - a_next) <= 1e-15 * abs(a_new)
            p_next = p_new
            a_next = a_new
            if done:
                break
        alpha[k + 1] = a_next
        p[k + 1] = p_next
    return alpha, p


def solve_self_consistent(p0, params, drive, t_end, grid_dt, tol=1e-8, max_iter=100,
                          initial_guess="march"):
    """Jointly consistent population path and cavity amplitude.

    Alternates :func:`alpha_on_path` and :func:`p_path_dispersive` until the
    relative L2 change of α drops below ``tol``. The default initial guess is
    an interval-by-interval march of the coupled equations, which normally
    converges in one pass; ``initial_guess="relaxation"`` starts instead from
    thermal relaxation of ``p0`` towards ``p_eq``.

    Returns
    -------
    path : PopulationPath
    alpha : ndarray of complex
    iterations : int
    """
    _check_detuning(params)
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")
    n = int(np.ceil(t_end / grid_dt - 1e-9))
    times = np.linspace(0.0, t_end, n + 1)
    chi = params.g_s**2 * params.n_spins / params.delta_s
    drive_term = complex(np.sqrt(params.kappa_c1) * drive.beta)
    if initial_guess == "march":
        g2_rate = float(measurement_rate(1.0, params))
        alpha, p = _march(times, float(p0), 0.5 * params.kappa, chi, drive_term, g2_rate,
                          params.gamma_th, params.p_eq)
        path = PopulationPath(times, np.clip(p, 0.0, 1.0))
    elif initial_guess == "relaxation":
        p = params.p_eq + (p0 - params.p_eq) * np.exp(-params.gamma_th * times)
        path = PopulationPath(times, p)
        alpha = alpha_on_path(path, params, drive)
    else:
        raise ValueError(f"unknown initial_guess {initial_guess!r}")

    residual = np.inf
    for iteration in range(1, max_iter + 1):
        path = p_path_dispersive(p0, params, drive, t_end, (times, alpha))
        new_alpha = alpha_on_path(path, params, drive)
        norm = np.linalg.norm(new_alpha)
        residual = np.linalg.norm(new_alpha - alpha) / norm if norm > 0 else 0.0
        alpha = new_alpha
        if residual < tol:
            return path, alpha, iteration
    raise ConvergenceError(max_iter, residual)
