"""Fast physics self-checks behind ``nvreadout check``."""
from __future__ import annotations

import numpy as np

from .config import loads
from .dispersive import solve_self_consistent
from .integrate import IntegratorConfig, integrate
from .model import FullState, bare_cavity_alpha, energy_flux_check, mb_system
from .noise import noise_total


def _bare_cavity(params, drive, config):
    bare = params.replace(g_s=0.0)
    t_end = 10.0 / bare.kappa
    traj = integrate(mb_system(bare, drive), FullState(), t_end, config)
    exact = bare_cavity_alpha(traj.times, bare, drive)
    err = float(np.max(np.abs(traj.alpha - exact)) / np.max(np.abs(exact)))
    return err < 1e-8, f"max relative error {err:.2e}"


def _energy_flux(params, drive, config):
    traj = integrate(mb_system(params, drive), FullState(p=0.2), 200e-6, config)
    residual = energy_flux_check(traj, params, drive)
    populations_ok = bool(np.all((traj.p >= 0) & (traj.p <= 1)))
    return residual < 1e-6 and populations_ok, f"flux residual {residual:.2e}, p in [0, 1]: {populations_ok}"


def _dispersive_limit(params, drive, config):
    local = params.with_detuning(100.0 * params.gamma)
    t_end = 200e-6
    traj = integrate(mb_system(local, drive), FullState(p=0.2), t_end, config)
    path, alpha, _ = solve_self_consistent(0.2, local, drive, t_end, config.dense_sample_dt)
    ref = np.interp(path.times, traj.times, traj.alpha.real) + 1j * np.interp(path.times, traj.times, traj.alpha.imag)
    err = float(np.linalg.norm(alpha - ref) / np.linalg.norm(ref))
    return err < 2e-2, f"relative L2 error at 100 Gamma: {err:.2e}"


def _noise_floor(params, drive, config):
    budget = noise_total(drive.power, 1e-3, _builtin_table(), params, 0.0)
    return budget.ratio_R >= 1.0, f"R = {budget.ratio_R:.4f}"


def _builtin_table():
    from .noise import PhaseNoiseTable
    return PhaseNoiseTable.default()


def _round_trip(params, drive, config):
    if config is None:
        return True, "no config"
    again = loads(config.to_toml())
    same = again.values == config.values and again.system == config.system
    return same, "reloaded configuration identical" if same else "values changed on reload"


CHECKS = {
    "bare cavity ring-up": _bare_cavity,
    "energy balance": _energy_flux,
    "dispersive limit": _dispersive_limit,
    "phase noise adds to thermal": _noise_floor,
    "config round-trip": _round_trip,
}


def run_checks(params, drive, config=None):
    """Return ``(name, passed, detail)`` for every check."""
    integrator = config.integrator if config is not None else IntegratorConfig()
    results = []
    for name, check in CHECKS.items():
        try:
            passed, detail = check(params, drive, integrator if name != "config round-trip" else config)
        except Exception as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(passed), detail))
    return results
