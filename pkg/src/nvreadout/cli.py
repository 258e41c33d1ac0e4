"""Command-line entry point: ``nvreadout <subcommand> [options]``.

Exit status is 0 on success, 1 for usage or validation errors and 2 for
numerical failures. Every table goes to CSV with a ``#`` provenance block;
figures are SVG byproducts of the same data.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .dispersive import ConvergenceError
from .integrate import IntegrationError
from .model import TWO_PI, DegenerateDetuningError, DriveParams, ParameterError, dbm_to_watts
from .noise import PhaseNoiseTable, noise_total
from .readout import ZeroSignalError, fidelity_from_traces, readout_traces
from .svg import EmptyFigureError, emit_figure, heatmap, line_plot
from .sweep import (
    Axis,
    SweepSpec,
    coupling_enhancement_study,
    n_scaling_study,
    noise_ratio_curve,
    q_enhancement_study,
    run_sweep,
    sensitivity_study,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
OUTPUT_ENV = "NVREADOUT_OUTPUT_DIR"

NUMERICAL_ERRORS = (IntegrationError, ConvergenceError, ZeroSignalError, FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Context:
    """Loaded configuration plus the resolved output directory."""

    def __init__(self, args):
        self.args = args
        self.config = load_config(args.config)
        cfg = self.config
        self.params = cfg.system
        self.proto = cfg.protocol
        if getattr(args, "p0", None) is not None or getattr(args, "p0_prime", None) is not None:
            self.proto = self.proto.replace(
                p0=self.proto.p0 if args.p0 is None else args.p0,
                p0_prime=self.proto.p0_prime if args.p0_prime is None else args.p0_prime)
        if getattr(args, "detuning_hz", None) is not None:
            self.params = self.params.with_detuning(TWO_PI * args.detuning_hz)
        power = cfg.lookup("drive.power_dbm") if getattr(args, "power_dbm", None) is None else args.power_dbm
        self.power_dbm = float(power)
        self.drive = DriveParams.from_dbm(self.power_dbm, self.params.omega_d,
                                          cfg.lookup("drive.phase_rad"))
        self.mode = args.mode or cfg.mode
        if self.mode == "auto" and cfg.mode.startswith("auto"):
            self.mode = cfg.mode  # keep a configured crossover ratio
        self.workers = getattr(args, "workers", None) or cfg.workers
        self.table = cfg.table
        if getattr(args, "no_phase_noise", False):
            self.table = PhaseNoiseTable.silent()
        out = args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir
        self.output_dir = Path(out)

    def path(self, name):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def provenance(self, mode=None):
        lines = [
            f"nvreadout {__version__}",
            f"command: {self.args.command}",
            f"config: {self.config.source}",
            f"config_sha256: {self.config.digest()}",
            f"mode: {mode or self.mode}",
            f"phase_noise: {'off' if getattr(self.args, 'no_phase_noise', False) else self.config.phase_noise}",
        ]
        return lines + ["parameter provenance:"] + ["  " + s for s in self.config.provenance_lines()]

    def write_csv(self, name, header, rows, mode=None):
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            for line in self.provenance(mode):
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return path

    def write_json(self, name, payload):
        path = self.path(name)
        payload = dict(payload, provenance=self.provenance())
        path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
        return path

    def figure(self, name, svg_text):
        return emit_figure(self.path(name), svg_text)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def _try_figure(ctx, name, build):
    try:
        ctx.figure(name, build())
    except EmptyFigureError as exc:
        print(f"warning: figure {name} skipped: {exc}", file=sys.stderr)


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(ctx):
    params, drive = ctx.params, ctx.drive
    traces = readout_traces(ctx.proto, params, drive, ctx.mode, t_end=ctx.args.t_end,
                            integrator=ctx.config.integrator)
    written = []
    for k, label in enumerate(("p0", "p0_prime")):
        alpha, p, s = traces.alpha[k], traces.p[k], traces.s[k]
        rows = zip(traces.times, alpha.real, alpha.imag, s.real, s.imag, p)
        written.append(ctx.write_csv(f"trajectory_{label}.csv",
                                     ["t_s", "alpha_re", "alpha_im", "s_re", "s_im", "p"], rows, traces.mode))
    t_us = traces.times * 1e6
    _try_figure(ctx, "trajectory.svg", lambda: line_plot(
        [(f"p0 = {ctx.proto.p0}", t_us, traces.alpha[0].imag),
         (f"p0' = {ctx.proto.p0_prime}", t_us, traces.alpha[1].imag)],
        "t (us)", "Im alpha", "Cavity field"))
    return written


def cmd_fidelity(ctx):
    t_end = ctx.args.t_end or ctx.proto.t_read
    traces = readout_traces(ctx.proto, ctx.params, ctx.drive, ctx.mode, t_end=t_end,
                            integrator=ctx.config.integrator)
    curve = fidelity_from_traces(traces, ctx.proto, ctx.params, ctx.drive, ctx.table, ctx.config.inversion)
    rows = zip(curve.times, curve.signal, curve.noise, curve.sigma_e)
    path = ctx.write_csv("fidelity.csv", ["t_s", "signal_j", "noise_j", "sigma_e"], rows, traces.mode)
    _try_figure(ctx, "fidelity.svg", lambda: line_plot(
        [("sigma_e", curve.times[1:] * 1e3, curve.sigma_e[1:])], "t (ms)", "sigma_e", "Inverse readout fidelity",
        ylog=True))
    print(f"sigma_e({t_end:g} s) = {curve.sigma_e_final:.6g} (converged: {curve.converged})")
    return [path]


def cmd_noise(ctx):
    a = ctx.args
    powers = np.linspace(a.p_min, a.p_max, a.points)
    budget = noise_total(dbm_to_watts(powers), ctx.proto.t_read, ctx.table, ctx.params, a.inversion)
    ratio = noise_ratio_curve(powers, ctx.params, ctx.proto, ctx.table, a.inversion)
    rows = zip(powers, np.broadcast_to(budget.l_th, powers.shape), budget.l_ph, ratio)
    path = ctx.write_csv("noise_ratio.csv", ["power_dbm", "l_th_j", "l_ph_j", "ratio_R"], rows, "n/a")
    _try_figure(ctx, "noise_ratio.svg", lambda: line_plot(
        [("R", powers, ratio)], "P (dBm)", "R", "Phase noise over thermal noise", ylog=True))
    return [path]


def cmd_map(ctx):
    a = ctx.args
    axes = [Axis.parse(a.x)] + ([Axis.parse(a.y)] if a.y else [])
    plan = SweepSpec(axes, a.metric, ctx.mode)
    grid = run_sweep(plan, ctx.params, ctx.proto, ctx.table, ctx.power_dbm, ctx.workers,
                     ctx.config.integrator, ctx.config.inversion)
    header = list(grid.axis_names) + [a.metric, "reason"]
    path = ctx.write_csv("map.csv", header, grid.rows())
    failed = int(np.isnan(grid.values).sum())
    if failed:
        print(f"warning: {failed} of {grid.values.size} cells failed (see reason column)", file=sys.stderr)
    if len(axes) == 2:
        _try_figure(ctx, "map.svg", lambda: heatmap(
            grid.axis_values[0], grid.axis_values[1], grid.values, axes[0].path, axes[1].path, a.metric,
            axes[0].scale == "log", axes[1].scale == "log", zlog=a.metric != "signal"))
    else:
        _try_figure(ctx, "map.svg", lambda: line_plot(
            [(a.metric, grid.axis_values[0], grid.values)], axes[0].path, a.metric, a.metric,
            axes[0].scale == "log"))
    return [path]


def cmd_sensitivity(ctx):
    a = ctx.args
    curve = sensitivity_study(ctx.params, ctx.proto, ctx.table, t_max=a.t_max, n_times=a.points,
                              t_min=a.t_min, mode=ctx.mode, inversion=ctx.config.inversion,
                              integrator=ctx.config.integrator, workers=ctx.workers)
    rows = zip(curve.times, curve.sigma_e, curve.best_power_dbm, curve.eta["ramsey"], curve.eta["echo"])
    path = ctx.write_csv("sensitivity.csv",
                         ["t_read_s", "sigma_e", "best_power_dbm", "eta_ramsey_t_rthz", "eta_echo_t_rthz"], rows)
    _try_figure(ctx, "sensitivity.svg", lambda: line_plot(
        [("Ramsey", curve.times * 1e3, curve.eta["ramsey"] * 1e15),
         ("echo", curve.times * 1e3, curve.eta["echo"] * 1e15)],
        "t (ms)", "eta (fT/rtHz)", "Sensitivity", xlog=True, ylog=True))
    for name in ("ramsey", "echo"):
        t, eta, _ = curve.minimum(name)
        print(f"{name}: min eta = {eta * 1e15:.4g} fT/rtHz at t = {t * 1e3:.4g} ms")
    return [path]


def cmd_scaling(ctx):
    a = ctx.args
    common = dict(workers=ctx.workers, mode=ctx.mode, inversion=ctx.config.inversion,
                  integrator=ctx.config.integrator)
    if a.study == "n":
        n_values = np.geomspace(a.n_min, a.n_max, a.points)
        fit = n_scaling_study(n_values, ctx.params, ctx.proto, ctx.table, metric=a.metric, **common)
        rows = [(n, pt.power_dbm, pt.detuning / TWO_PI, pt.sigma_e, pt.eta, pt.signal, pt.reason)
                for n, pt in zip(n_values, fit.points)]
        ctx.write_csv("scaling_n.csv", ["n_spins", "power_dbm", "detuning_hz", "sigma_e", "eta_t_rthz",
                                        "signal_j", "reason"], rows)
        path = ctx.write_json("scaling_n.json", {
            "study": "n", "metric": a.metric, "exponent": fit.exponent, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "window": fit.window})
        _try_figure(ctx, "scaling_n.svg", lambda: line_plot(
            [(a.metric, fit.x, fit.y)], "N", a.metric, "Ensemble-size scaling", xlog=True, ylog=True))
        print(f"exponent = {fit.exponent:.4f} (r^2 = {fit.r_squared:.5f})")
        return [path]

    xi = np.geomspace(a.xi_min, a.xi_max, a.points)
    if a.study == "q":
        curve = q_enhancement_study(xi, ctx.params, ctx.proto, ctx.table, **common)
    else:
        curve = coupling_enhancement_study(xi, ctx.params, ctx.proto, ctx.table,
                                           by_frequency=a.study == "frequency", **common)
    rows = [(x, pt.power_dbm, pt.detuning / TWO_PI, pt.sigma_e, pt.eta, pt.reason)
            for x, pt in zip(xi, curve.points)]
    ctx.write_csv(f"scaling_{a.study}.csv",
                  ["xi", "power_dbm", "detuning_hz", "sigma_e", "eta_t_rthz", "reason"], rows)
    path = ctx.write_json(f"scaling_{a.study}.json", {
        "study": a.study, "xi": xi, "sigma_e": curve.sigma_e, "eta": curve.eta,
        "improvement": curve.improvement()})
    _try_figure(ctx, f"scaling_{a.study}.svg", lambda: line_plot(
        [("sigma_e", xi, curve.sigma_e)], "xi", "sigma_e", f"{a.study} enhancement", xlog=True, ylog=True))
    return [path]


def cmd_check(ctx):
    from .checks import run_checks
    results = run_checks(ctx.params, ctx.drive, ctx.config)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    ctx.write_csv("check.csv", ["check", "passed", "detail"], results)
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "simulate": cmd_simulate,
    "fidelity": cmd_fidelity,
    "noise": cmd_noise,
    "map": cmd_map,
    "sensitivity": cmd_sensitivity,
    "scaling": cmd_scaling,
    "check": cmd_check,
}


def build_parser():
    parser = _Parser(prog="nvreadout", description="Dispersive spin-ensemble cavity readout simulator.")
    parser.add_argument("--version", action="version", version=f"nvreadout {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    def common(p, drive=True):
        p.add_argument("--config", help="TOML run configuration (default: shipped defaults)")
        p.add_argument("--output-dir", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
        p.add_argument("--mode", choices=("auto", "full_ode", "dispersive"))
        p.add_argument("--no-phase-noise", action="store_true", help="thermal noise only")
        if drive:
            p.add_argument("--power-dbm", type=float)
            p.add_argument("--detuning-hz", type=float, help="spin detuning (cavity-resonant drive)")
        p.add_argument("--p0", type=float)
        p.add_argument("--p0-prime", type=float)

    p = sub.add_parser("simulate", help="one trajectory pair")
    common(p)
    p.add_argument("--t-end", type=float, help="duration in s (default: t_read)")

    p = sub.add_parser("fidelity", help="sigma_e versus readout time")
    common(p)
    p.add_argument("--t-end", type=float)

    p = sub.add_parser("noise", help="phase-noise to thermal-noise ratio versus power")
    common(p)
    p.add_argument("--p-min", type=float, default=-30.0)
    p.add_argument("--p-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--inversion", type=float, default=0.0, help="spin inversion w in the reflection coefficient")

    p = sub.add_parser("map", help="one- or two-axis parameter sweep")
    common(p)
    p.add_argument("--x", required=True, help="path:min:max:count[:log]")
    p.add_argument("--y", help="path:min:max:count[:log]")
    p.add_argument("--metric", default="sigma_e", choices=("sigma_e", "sensitivity", "signal", "ratio_R"))
    p.add_argument("--workers", type=int)

    p = sub.add_parser("sensitivity", help="Ramsey and echo sensitivity versus readout time")
    common(p)
    p.add_argument("--t-min", type=float, default=10e-6)
    p.add_argument("--t-max", type=float, default=10e-3)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("scaling", help="N scaling or coupling/Q enhancement with re-optimised drive")
    common(p, drive=False)
    p.add_argument("--study", choices=("n", "coupling", "frequency", "q"), default="n")
    p.add_argument("--points", type=int, default=7)
    p.add_argument("--n-min", type=float, default=1e13)
    p.add_argument("--n-max", type=float, default=1e16)
    p.add_argument("--xi-min", type=float, default=1.0)
    p.add_argument("--xi-max", type=float, default=64.0)
    p.add_argument("--metric", default="sigma_e", choices=("sigma_e", "signal", "sensitivity"))
    p.add_argument("--workers", type=int)

    p = sub.add_parser("check", help="run the physics self-checks")
    common(p)
    return parser


def _validate(args):
    for name in ("points",):
        if getattr(args, name, None) is not None and getattr(args, name) < 1:
            raise UsageError(f"--{name} must be >= 1")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        raise UsageError("--workers must be >= 1")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        ctx = Context(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = COMMANDS[args.command](ctx)
    except (ConfigError, ParameterError, DegenerateDetuningError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if isinstance(result, int):
        return result
    for path in result or ():
        print(f"wrote {path}")
    return EXIT_OK


def _entry():
    sys.exit(main())


if __name__ == "__main__":
    _entry()
