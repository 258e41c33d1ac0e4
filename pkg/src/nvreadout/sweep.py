"""Parameter sweeps, scaling fits and enhancement studies.

Grid points are independent and are evaluated on a thread pool (the compiled
solver kernels release the GIL). Results are collected in index order, so a
sweep gives identical output for any worker count.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import TWO_PI, DriveParams, dbm_to_watts
from .noise import noise_total
from .readout import (
    dispersive_threshold,
    evaluate,
    fidelity_from_traces,
    optimize_drive,
    readout_traces,
    sensitivity,
)

METRICS = ("sigma_e", "sensitivity", "signal", "ratio_R")


@dataclass(frozen=True)
class Axis:
    path: str
    min: float
    max: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        if self.path not in PARAMETER_PATHS:
            raise ValueError(f"unknown sweep parameter {self.path!r}; choose from {sorted(PARAMETER_PATHS)}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"axis scale must be 'linear' or 'log', got {self.scale!r}")
        if self.count < 1:
            raise ValueError("axis count must be >= 1")
        if self.count >= 2 and not self.min < self.max:
            raise ValueError(f"axis {self.path}: need min < max")
        if self.scale == "log" and self.min <= 0:
            raise ValueError(f"axis {self.path}: log scale needs positive bounds")

    @property
    def values(self):
        if self.count == 1:
            return np.array([float(self.min)])
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)

    @classmethod
    def parse(cls, text):
        """``path:min:max:count[:log|linear]`` as used on the command line."""
        parts = text.split(":")
        if len(parts) not in (4, 5):
            raise ValueError(f"axis {text!r} must be path:min:max:count[:scale]")
        scale = parts[4] if len(parts) == 5 else "linear"
        return cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]), scale)


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple
    metric: str = "sigma_e"
    mode: str = "auto"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        for key in self.overrides:
            if key not in PARAMETER_PATHS:
                raise ValueError(f"unknown override {key!r}")


class Point:
    """Mutable bundle of the three inputs a grid point can change."""

    def __init__(self, params, proto, power_dbm):
        self.params = params
        self.proto = proto
        self.power_dbm = power_dbm


def _set_system(name, scale=1.0):
    def setter(point, value):
        point.params = point.params.replace(**{name: value * scale})
    return setter


def _set_proto(name):
    def setter(point, value):
        point.proto = point.proto.replace(**{name: value})
    return setter


def _set_power(point, value):
    point.power_dbm = value


def _set_detuning(point, value):
    point.params = point.params.with_detuning(TWO_PI * value)


PARAMETER_PATHS = {
    "power_dbm": _set_power,
    "detuning_hz": _set_detuning,
    "t_read_s": _set_proto("t_read"),
    "t_init_s": _set_proto("t_init"),
    "n_spins": _set_system("n_spins"),
    "g_s_hz": _set_system("g_s", TWO_PI),
    "kappa_c_hz": _set_system("kappa_c", TWO_PI),
    "kappa_c1_hz": _set_system("kappa_c1", TWO_PI),
    "gamma_hz": _set_system("gamma", TWO_PI),
    "gamma_th_hz": _set_system("gamma_th", TWO_PI),
    "temperature_k": _set_system("temperature"),
}


@dataclass
class ResultGrid:
    axis_names: tuple
    axis_values: tuple
    values: np.ndarray
    reasons: np.ndarray
    metric: str

    @property
    def shape(self):
        return self.values.shape

    def rows(self):
        """(axis values..., metric, reason) in axis-major order (first axis slowest)."""
        for index in np.ndindex(self.values.shape):
            coords = [self.axis_values[k][i] for k, i in enumerate(index)]
            yield (*coords, self.values[index], self.reasons[index])


def _apply(point, settings):
    for key, value in settings.items():
        PARAMETER_PATHS[key](point, value)
    return point


def evaluate_point(settings, base, proto, table, power_dbm, metric="sigma_e", mode="auto",
                   inversion="saturated", integrator=None):
    """Metric at a single setting; the same path :func:`run_sweep` uses per cell."""
    point = _apply(Point(base, proto, power_dbm), settings)
    params, proto, drive = point.params, point.proto, DriveParams.from_dbm(point.power_dbm, point.params.omega_d)
    if metric == "ratio_R":
        return noise_total(drive.power, proto.t_read, table, params, 0.0).ratio_R
    result = evaluate(proto, params, drive, table, mode, inversion, integrator)
    if metric == "sigma_e":
        return result.sigma_e
    if metric == "sensitivity":
        return result.eta
    return result.signal


def _safe(func, *args, **kwargs):
    try:
        value = float(func(*args, **kwargs))
        if not np.isfinite(value):
            return np.nan, "non-finite metric"
        return value, ""
    except Exception as exc:  # a failing cell must not abort the sweep
        return np.nan, f"{type(exc).__name__}: {exc}"


def _map(func, items, workers):
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def run_sweep(plan, base, proto, table, power_dbm=-15.0, workers=1, integrator=None,
              inversion="saturated"):
    """Evaluate ``plan.metric`` on the full axis grid."""
    names = tuple(a.path for a in plan.axes)
    values = tuple(a.values for a in plan.axes)
    shape = tuple(len(v) for v in values)
    cells = []
    for index in np.ndindex(shape):
        settings = dict(plan.overrides)
        settings.update({names[k]: values[k][i] for k, i in enumerate(index)})
        cells.append(settings)

    def run(settings):
        return _safe(evaluate_point, settings, base, proto, table, power_dbm, plan.metric,
                     plan.mode, inversion, integrator)

    results = _map(run, cells, workers)
    grid = np.array([r[0] for r in results], dtype=float).reshape(shape)
    reasons = np.array([r[1] for r in results], dtype=object).reshape(shape)
    return ResultGrid(names, values, grid, reasons, plan.metric)


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    x: np.ndarray = field(repr=False, default=None)
    y: np.ndarray = field(repr=False, default=None)


def fit_power_law(x, y):
    """Least-squares fit of log y = exponent · log x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0) & (x > 0)
    x, y = x[ok], y[ok]
    if len(np.unique(x)) < 3:
        raise ValueError("a scaling fit needs at least 3 distinct points")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)),
                      (float(x.min()), float(x.max())), x, y)


@dataclass
class StudyPoint:
    power_dbm: float
    detuning: float
    sigma_e: float
    eta: float
    signal: float
    on_edge: bool
    reason: str = ""


DEFAULT_POWER_BOUNDS = (-40.0, 40.0)
DETUNING_SPAN = 1000.0


def dispersive_band(params, span=DETUNING_SPAN):
    """Detuning search interval (rad/s) starting at the dispersive threshold."""
    lo = dispersive_threshold(params)
    return lo, lo * span


def optimized_point(params, proto, table, power_bounds=DEFAULT_POWER_BOUNDS,
                    detuning_bounds=None, mode="auto", inversion="saturated",
                    integrator=None, n_power=17, n_detuning=13):
    """Re-optimise the drive for ``params`` and report σₑ, η and S there.

    ``detuning_bounds`` defaults to :func:`dispersive_band`, which scales
    with the collective coupling so that enhanced systems are searched in
    the same dispersive regime as the baseline.
    """
    if detuning_bounds is None:
        detuning_bounds = dispersive_band(params)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            opt = optimize_drive(proto, params, table, power_bounds, detuning_bounds, mode,
                                 n_power=n_power, n_detuning=n_detuning, inversion=inversion,
                                 integrator=integrator)
        local = params.with_detuning(opt.best_detuning)
        drive = DriveParams.from_dbm(opt.best_power_dbm, local.omega_d)
        traces = readout_traces(proto, local, drive, mode, integrator=integrator)
        curve = fidelity_from_traces(traces, proto, local, drive, table, inversion)
        eta = float(sensitivity(proto, curve.sigma_e_final, local))
        return StudyPoint(opt.best_power_dbm, opt.best_detuning, curve.sigma_e_final, eta,
                          float(curve.signal[-1]), opt.on_edge)
    except Exception as exc:
        return StudyPoint(np.nan, np.nan, np.nan, np.nan, np.nan, False, f"{type(exc).__name__}: {exc}")


def _study(param_list, proto, table, workers, **kwargs):
    return _map(lambda p: optimized_point(p, proto, table, **kwargs), param_list, workers)


def n_scaling_study(n_values, base, proto, table, metric="sigma_e", workers=1, **kwargs):
    """Fit the power-law exponent of σₑ (or S) against ensemble size with re-optimised drive."""
    n_values = np.asarray(n_values, dtype=float)
    if len(np.unique(n_values)) < 3:
        raise ValueError("a scaling fit needs at least 3 distinct N values")
    points = _study([base.replace(n_spins=float(n)) for n in n_values], proto, table, workers, **kwargs)
    if metric == "sigma_e":
        y = [pt.sigma_e for pt in points]
    elif metric == "signal":
        y = [pt.signal for pt in points]
    elif metric == "sensitivity":
        y = [pt.eta for pt in points]
    else:
        raise ValueError(f"unsupported scaling metric {metric!r}")
    fit = fit_power_law(n_values, y)
    fit.points = points
    return fit


def detuning_study(detunings, base, proto, table, workers=1, **kwargs):
    """Optimise the power separately at each spin detuning (rad/s).

    Returns one :class:`StudyPoint` per detuning, in input order.
    """
    detunings = np.asarray(detunings, dtype=float)
    if np.any(detunings <= 0):
        raise ValueError("detunings must be > 0")
    return _map(lambda d: optimized_point(base.with_detuning(d), proto, table, detuning_bounds=(d, d), **kwargs),
                detunings, workers)


@dataclass
class EnhancementCurve:
    xi: np.ndarray
    sigma_e: np.ndarray
    eta: np.ndarray
    points: list

    def improvement(self):
        """σₑ(ξ_0) / σₑ(ξ) for every ξ."""
        return self.sigma_e[0] / self.sigma_e


def _curve(xi, points):
    return EnhancementCurve(np.asarray(xi, dtype=float),
                            np.array([p.sigma_e for p in points]),
                            np.array([p.eta for p in points]), points)


def coupling_enhancement_study(xi_values, base, proto, table, by_frequency=False, workers=1, **kwargs):
    """σₑ and η with g_s → ξ g_s and the drive re-optimised at each ξ.

    With ``by_frequency`` the carrier follows the coupling, ``f' = f √ξ``
    (from g_s ∝ f²): cavity, spin and drive frequencies are all rescaled.
    """
    xi_values = np.asarray(xi_values, dtype=float)
    if np.any(xi_values <= 0):
        raise ValueError("enhancement ratios must be > 0")
    plist = []
    for xi in xi_values:
        p = base.replace(g_s=base.g_s * xi)
        if by_frequency:
            f_scale = np.sqrt(xi)
            p = p.replace(omega_c=base.omega_c * f_scale, omega_d=base.omega_d * f_scale,
                          omega_s=base.omega_c * f_scale + base.delta_s)
        plist.append(p)
    return _curve(xi_values, _study(plist, proto, table, workers, **kwargs))


def q_enhancement_study(xi_values, base, proto, table, workers=1, **kwargs):
    """σₑ and η with Q → ξQ: κc → κc/ξ and κc1 matched to κc (critical coupling kept)."""
    xi_values = np.asarray(xi_values, dtype=float)
    if np.any(xi_values <= 0):
        raise ValueError("enhancement ratios must be > 0")
    plist = [base.replace(kappa_c=base.kappa_c / xi, kappa_c1=base.kappa_c / xi) for xi in xi_values]
    return _curve(xi_values, _study(plist, proto, table, workers, **kwargs))


@dataclass
class SensitivityCurve:
    times: np.ndarray
    eta: dict             # protocol -> η(t) at the per-time optimal power
    sigma_e: np.ndarray   # per-time optimal σₑ
    best_power_dbm: np.ndarray

    def minimum(self, protocol):
        k = int(np.nanargmin(self.eta[protocol]))
        return self.times[k], self.eta[protocol][k], k


def sensitivity_study(base, proto, table, t_max=10e-3, powers_dbm=None, n_times=60,
                      t_min=10e-6, mode="auto", inversion="saturated", integrator=None, workers=1):
    """η(t) for Ramsey and echo at the per-time optimal power.

    One trajectory pair per power gives σₑ(t) on the whole time grid; the
    per-time optimum is the minimum over powers at each t.
    """
    powers_dbm = np.arange(-30.0, 20.01, 2.5) if powers_dbm is None else np.asarray(powers_dbm, float)
    times = np.geomspace(t_min, t_max, n_times)

    def run(power):
        drive = DriveParams.from_dbm(power, base.omega_d)
        traces = readout_traces(proto, base, drive, mode, t_end=t_max, integrator=integrator)
        curve = fidelity_from_traces(traces, proto, base, drive, table, inversion)
        return np.interp(times, curve.times, curve.sigma_e)

    sigma = np.array(_map(run, powers_dbm, workers))
    best = np.nanargmin(sigma, axis=0)
    sigma_best = sigma[best, np.arange(len(times))]
    eta = {name: sensitivity(proto.replace(protocol=name), sigma_best, base, t_read=times)
           for name in ("ramsey", "echo")}
    return SensitivityCurve(times, eta, sigma_best, powers_dbm[best])


def noise_ratio_curve(powers_dbm, base, proto, table, inversion=0.0):
    """R(P) at the measurement time ``proto.t_read``."""
    power = dbm_to_watts(powers_dbm)
    return noise_total(power, proto.t_read, table, base, inversion).ratio_R
