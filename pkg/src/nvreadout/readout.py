"""Readout signal, inverse readout fidelity, sensitivity and drive optimisation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .dispersive import solve_self_consistent
from .integrate import IntegratorConfig, integrate
from .model import COUPLING_SIGN, HBAR, TWO_PI, DriveParams, FullState, mb_system
from .noise import noise_total

GAMMA_E = TWO_PI * 28.024e9  # electron gyromagnetic ratio, rad/(s·T)
DEFAULT_GAMMA = TWO_PI * 330e3

# "auto" uses the dispersive solver once Δs exceeds this multiple of
# max(Γ, g/2); below it the full equations are integrated. At the default
# operating point the bound is 10Γ, and the g/2 term keeps the same
# Δs/g ratio when the collective coupling grows.
DISPERSIVE_CROSSOVER = 10.0


def dispersive_threshold(params, crossover=DISPERSIVE_CROSSOVER):
    """Smallest |Δs| (rad/s) treated as dispersive by ``mode="auto"``."""
    return crossover * max(params.gamma, 0.5 * params.g_collective)


def auto_mode(crossover=DISPERSIVE_CROSSOVER):
    """Mode string selecting automatically at a non-default crossover ratio."""
    return "auto" if crossover == DISPERSIVE_CROSSOVER else f"auto:{float(crossover)!r}"


class DegenerateDiscriminationError(ValueError):
    """The two populations to discriminate are identical."""


class ZeroSignalError(RuntimeError):
    """The readout signal vanishes over the whole window."""


@dataclass(frozen=True)
class ProtocolParams:
    p0: float = 0.2
    p0_prime: float = 0.3
    t_read: float = 1e-3
    t_init: float = 1e-3
    t_sense: float | None = None
    protocol: str = "ramsey"
    # T2* = 2/Γ and T2 = 10 T2*; not given with the reported figures
    t2_star: float = 2.0 / DEFAULT_GAMMA
    t2: float = 20.0 / DEFAULT_GAMMA
    gamma_e: float = GAMMA_E

    def __post_init__(self):
        for name in ("p0", "p0_prime"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.p0 == self.p0_prime:
            raise DegenerateDiscriminationError("p0 and p0_prime must differ")
        for name in ("t_read", "t_init", "t2_star", "t2", "gamma_e"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.t_sense is not None and not self.t_sense > 0:
            raise ValueError("t_sense must be > 0")
        if self.protocol not in ("ramsey", "echo"):
            raise ValueError(f"protocol must be 'ramsey' or 'echo', got {self.protocol!r}")
        if self.t2_star > self.t2:
            raise ValueError("t2_star must not exceed t2")

    @property
    def sensing_time(self):
        if self.t_sense is not None:
            return self.t_sense
        return self.t2_star if self.protocol == "ramsey" else self.t2

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


class ReadoutTraces(NamedTuple):
    times: np.ndarray
    alpha: np.ndarray        # shape (2, n): trajectories for p0 and p0_prime
    p: np.ndarray            # shape (2, n)
    mode: str
    s: np.ndarray = None     # spin coherence, adiabatic in dispersive mode


class FidelityCurve(NamedTuple):
    times: np.ndarray
    signal: np.ndarray
    noise: np.ndarray        # 𝓛(t), joules
    sigma_e: np.ndarray
    sigma_e_final: float
    converged: bool


@dataclass
class ReadoutResult:
    signal: float
    sigma_e: float
    eta: float
    budget: object
    mode: str
    curve: FidelityCurve = field(repr=False, default=None)


def resolve_mode(mode, params):
    """Map ``"auto"`` or ``"auto:<ratio>"`` to ``"full_ode"`` or ``"dispersive"``."""
    if mode in ("full_ode", "dispersive"):
        return mode
    if isinstance(mode, str) and (mode == "auto" or mode.startswith("auto:")):
        crossover = DISPERSIVE_CROSSOVER
        if mode != "auto":
            try:
                crossover = float(mode[5:])
            except ValueError:
                raise ValueError(f"unknown mode {mode!r}") from None
            if not crossover > 0:
                raise ValueError(f"crossover ratio must be > 0 in {mode!r}")
        return "dispersive" if abs(params.delta_s) >= dispersive_threshold(params, crossover) else "full_ode"
    raise ValueError(f"unknown mode {mode!r}")


def readout_traces(proto, params, drive, mode="auto", t_end=None, integrator=None):
    """Cavity trajectories for the two initial populations of ``proto``."""
    mode = resolve_mode(mode, params)
    t_end = proto.t_read if t_end is None else t_end
    integrator = integrator or IntegratorConfig()
    alphas, pops, coherences = [], [], []
    for p_init in (proto.p0, proto.p0_prime):
        if mode == "full_ode":
            traj = integrate(mb_system(params, drive), FullState(p=p_init), t_end, integrator)
            times, alpha, p, s = traj.times, traj.alpha, traj.p, traj.s
        else:
            path, alpha, _ = solve_self_consistent(p_init, params, drive, t_end,
                                                   integrator.dense_sample_dt)
            times, p = path.times, path.p
            s = COUPLING_SIGN * 1j * params.g_s * alpha * (1 - 2 * p) / (1j * params.delta_s + params.gamma / 2)
        alphas.append(alpha)
        pops.append(p)
        coherences.append(s)
    return ReadoutTraces(times, np.array(alphas), np.array(pops), mode, np.array(coherences))


def signal_curve(traces, proto, params):
    """S(t) = ħω_c κc1 ∫₀ᵗ (Im²α(p0) - Im²α(p0'))/(p0 - p0') dτ, absolute value."""
    integrand = (traces.alpha[0].imag ** 2 - traces.alpha[1].imag ** 2) / (proto.p0 - proto.p0_prime)
    cumulative = cumulative_trapezoid(integrand, traces.times, initial=0.0)
    return np.abs(HBAR * params.omega_c * params.kappa_c1 * cumulative)


def signal_S(proto, params, drive, mode="auto", integrator=None):
    """Readout signal in joules at ``t_read``."""
    traces = readout_traces(proto, params, drive, mode, integrator=integrator)
    return float(signal_curve(traces, proto, params)[-1])


def _inversion_for_noise(traces, inversion):
    if inversion == "saturated":
        return 0.0
    if inversion == "trajectory":
        # running mean of w over [0, t], averaged over both trajectories
        w = 1.0 - 2.0 * traces.p.mean(axis=0)
        running = cumulative_trapezoid(w, traces.times, initial=0.0)
        out = np.empty_like(w)
        out[0] = w[0]
        out[1:] = running[1:] / traces.times[1:]
        return out
    return float(inversion)


def fidelity_from_traces(traces, proto, params, drive, table, inversion="saturated"):
    times = traces.times
    signal = signal_curve(traces, proto, params)
    if not np.any(signal[1:] > 0):
        raise ZeroSignalError(
            f"signal is zero over [0, {times[-1]:.3e}] s (g_s = {params.g_s}, "
            f"power = {drive.power:.3e} W)")
    w = _inversion_for_noise(traces, inversion)
    noise = np.full_like(times, np.inf)
    t_pos = times[1:]
    w_pos = w[1:] if np.ndim(w) else w
    noise[1:] = noise_total(drive.power, t_pos, table, params, w_pos).total
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.sqrt(params.n_spins * noise / signal)
    sigma[0] = np.inf
    sigma[~np.isfinite(sigma)] = np.inf
    final = float(sigma[-1])
    half = float(np.interp(0.5 * times[-1], times, sigma))
    converged = bool(np.isfinite(final) and abs(final - half) / final < 0.05)
    return FidelityCurve(times, signal, noise, sigma, final, converged)


def inverse_fidelity(proto, params, drive, table, mode="auto", inversion="saturated",
                     integrator=None, t_end=None):
    """σₑ(t) = √(N 𝓛(t) / S(t)) on the dense grid.

    ``inversion`` selects the spin inversion used in the reflection
    coefficient: ``"saturated"`` (w = 0), ``"trajectory"`` (running mean of
    the simulated w) or a fixed number.
    """
    traces = readout_traces(proto, params, drive, mode, t_end=t_end, integrator=integrator)
    return fidelity_from_traces(traces, proto, params, drive, table, inversion)


def sensitivity(proto, sigma_e, params, t_read=None):
    """η = σₑ / (γ_e √(N T)) · √(t_f / T) in T/√Hz, t_f = t_init + T + t_read."""
    sigma_e = np.asarray(sigma_e, dtype=float)
    if np.any(sigma_e <= 0):
        raise ValueError("sigma_e must be > 0")
    t_read = proto.t_read if t_read is None else np.asarray(t_read, dtype=float)
    T = proto.sensing_time
    t_f = proto.t_init + T + t_read
    return sigma_e / (proto.gamma_e * np.sqrt(params.n_spins * T)) * np.sqrt(t_f / T)


def evaluate(proto, params, drive, table, mode="auto", inversion="saturated", integrator=None):
    """σₑ, S, η and the noise budget at ``t_read`` for one drive setting."""
    traces = readout_traces(proto, params, drive, mode, integrator=integrator)
    curve = fidelity_from_traces(traces, proto, params, drive, table, inversion)
    w = _inversion_for_noise(traces, inversion)
    budget = noise_total(drive.power, proto.t_read, table, params, w[-1] if np.ndim(w) else w)
    eta = float(sensitivity(proto, curve.sigma_e_final, params))
    return ReadoutResult(float(curve.signal[-1]), curve.sigma_e_final, eta, budget, traces.mode, curve)


@dataclass
class DriveOptimum:
    best_power_dbm: float
    best_detuning: float
    best_sigma_e: float
    power_grid_dbm: np.ndarray
    detuning_grid: np.ndarray
    scan: np.ndarray          # σₑ on (detuning, power) grid
    on_edge: bool
    evaluations: int


def _log_grid(lo, hi, n):
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, n)


INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(func, a, b, xtol=1e-3, max_iter=200):
    """Minimise ``func`` on ``[a, b]`` by golden-section search.

    Returns the best abscissa seen and its value. Non-finite values count as
    ``+inf`` so failed evaluations steer the search away.
    """
    def f(x):
        v = func(x)
        return v if np.isfinite(v) else np.inf

    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= xtol * max(1.0, abs(c) + abs(d)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (float(c), fc) if fc < fd else (float(d), fd)


def optimize_drive(proto, params, table, power_bounds_dbm=(-30.0, 30.0),
                   detuning_bounds=None, mode="auto", n_power=13, n_detuning=7,
                   inversion="saturated", integrator=None, refine=True, xtol=1e-3):
    """Minimise σₑ(t_read) over drive power and spin detuning.

    A coarse scan (power uniform in dBm, detuning log-spaced) is refined by
    golden-section search along each axis within the neighbouring grid cells. The drive
    stays on cavity resonance; ``detuning_bounds`` are in rad/s and default to
    the detuning already in ``params``.
    """
    if detuning_bounds is None:
        detuning_bounds = (params.delta_s, params.delta_s)
    d_lo, d_hi = detuning_bounds
    p_lo, p_hi = power_bounds_dbm
    if p_lo > p_hi or d_lo > d_hi or d_lo <= 0:
        raise ValueError("invalid optimisation bounds")
    powers = np.array([p_lo]) if p_lo == p_hi else np.linspace(p_lo, p_hi, n_power)
    detunings = _log_grid(d_lo, d_hi, n_detuning)
    evaluations = 0

    def objective(power_dbm, detuning):
        nonlocal evaluations
        evaluations += 1
        local = params.with_detuning(detuning)
        drive = DriveParams.from_dbm(power_dbm, local.omega_d)
        try:
            return inverse_fidelity(proto, local, drive, table, mode, inversion, integrator).sigma_e_final
        except Exception:
            return np.inf

    scan = np.array([[objective(p, d) for p in powers] for d in detunings])
    i, j = np.unravel_index(np.argmin(scan), scan.shape)
    best_d, best_p, best = detunings[i], powers[j], scan[i, j]
    on_edge = ((len(powers) > 1 and j in (0, len(powers) - 1))
               or (len(detunings) > 1 and i in (0, len(detunings) - 1)))

    if refine:
        if len(powers) > 2 and 0 < j < len(powers) - 1:
            x, fx = golden_section(lambda x: objective(x, best_d), powers[j - 1], powers[j + 1], xtol)
            if fx < best:
                best_p, best = x, fx
        if len(detunings) > 2 and 0 < i < len(detunings) - 1:
            lo, hi = np.log(detunings[i - 1]), np.log(detunings[i + 1])
            x, fx = golden_section(lambda x: objective(best_p, np.exp(x)), lo, hi, xtol)
            if fx < best:
                best_d, best = float(np.exp(x)), fx

    if on_edge:
        warnings.warn("drive optimum lies on the edge of the search bounds", RuntimeWarning, stacklevel=2)
    return DriveOptimum(float(best_p), float(best_d), float(best), powers, detunings, scan,
                        bool(on_edge), evaluations)
