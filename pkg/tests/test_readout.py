import warnings

import numpy as np
import pytest

from nvreadout.readout import (
    DegenerateDiscriminationError,
    ProtocolParams,
    ReadoutTraces,
    ZeroSignalError,
    evaluate,
    fidelity_from_traces,
    inverse_fidelity,
    optimize_drive,
    readout_traces,
    auto_mode,
    resolve_mode,
    sensitivity,
    signal_curve,
    signal_S,
)
from nvreadout.sweep import optimized_point

SHORT = ProtocolParams(t_read=200e-6)


def test_protocol_validation():
    with pytest.raises(DegenerateDiscriminationError):
        ProtocolParams(p0=0.3, p0_prime=0.3)
    with pytest.raises(ValueError):
        ProtocolParams(p0=1.2)
    with pytest.raises(ValueError):
        ProtocolParams(protocol="cpmg")
    assert ProtocolParams(protocol="echo").sensing_time == ProtocolParams().t2
    assert ProtocolParams(t_sense=1e-4).sensing_time == 1e-4


def test_mode_selection(base):
    assert resolve_mode("auto", base) == "full_ode"
    assert resolve_mode("auto", base.with_detuning(10.5 * base.gamma)) == "dispersive"
    assert resolve_mode("auto", base.with_detuning(9.5 * base.gamma)) == "full_ode"
    assert resolve_mode("dispersive", base) == "dispersive"
    with pytest.raises(ValueError):
        resolve_mode("fast", base)


def test_blind_cavity_has_no_signal(base, table, drive_at):
    p = base.replace(g_s=0.0)
    assert signal_S(SHORT, p, drive_at(p)) == 0.0
    with pytest.raises(ZeroSignalError, match="signal is zero"):
        inverse_fidelity(SHORT, p, drive_at(p), table)


def test_signal_symmetric_in_population_pair(base, drive_at):
    drive = drive_at(base)
    a = signal_S(SHORT, base, drive)
    b = signal_S(SHORT.replace(p0=0.3, p0_prime=0.2), base, drive)
    assert a > 0
    assert b == pytest.approx(a, rel=1e-12)


def test_signal_grows_and_levels_off(base, proto, drive_at):
    traces = readout_traces(proto.replace(t_read=4e-3), base, drive_at(base, -17.4), "dispersive")
    s = signal_curve(traces, proto, base)
    t = traces.times
    assert np.all(np.diff(s) >= -1e-30)
    rate = lambda a, b: (np.interp(b, t, s) - np.interp(a, t, s)) / (b - a)  # noqa: E731
    assert rate(0.1e-3, 0.2e-3) > 5 * rate(3e-3, 4e-3)


def test_doubling_noise_scales_sigma_by_root_two(base, silent, drive_at):
    drive = drive_at(base)
    a = inverse_fidelity(SHORT, base, drive, silent).sigma_e_final
    b = inverse_fidelity(SHORT, base.replace(temperature=600.0), drive, silent).sigma_e_final
    assert b / a == pytest.approx(np.sqrt(2), rel=1e-12)


def test_drive_phase_rotates_quadrature(base, drive_at):
    phi = np.pi / 2
    far = base.with_detuning(30 * base.gamma)
    ref = readout_traces(SHORT, far, drive_at(far), "dispersive")
    rotated = readout_traces(SHORT, far, drive_at(far, phase=phi), "dispersive")
    back = ReadoutTraces(rotated.times, rotated.alpha * np.exp(-1j * phi), rotated.p, rotated.mode)
    s_ref = signal_curve(ref, SHORT, far)[-1]
    assert signal_curve(back, SHORT, far)[-1] == pytest.approx(s_ref, rel=1e-9)


def test_full_and_dispersive_agree_far_detuned(base, table, drive_at):
    far = base.with_detuning(100 * base.gamma)
    drive = drive_at(far, -10.0)
    a = evaluate(SHORT, far, drive, table, mode="full_ode")
    b = evaluate(SHORT, far, drive, table, mode="dispersive")
    assert b.sigma_e == pytest.approx(a.sigma_e, rel=0.01)
    assert a.mode == "full_ode" and b.mode == "dispersive"


def test_curve_reports_convergence(base, silent, drive_at):
    curve = inverse_fidelity(ProtocolParams(t_read=2e-3), base, drive_at(base), silent)
    assert np.isinf(curve.sigma_e[0])
    half = np.interp(1e-3, curve.times, curve.sigma_e)
    assert curve.converged == (abs(curve.sigma_e_final - half) / curve.sigma_e_final < 0.05)


def test_trajectory_inversion_option(base, table, drive_at):
    drive = drive_at(base, 0.0)
    traces = readout_traces(SHORT, base, drive)
    sat = fidelity_from_traces(traces, SHORT, base, drive, table, "saturated")
    traj = fidelity_from_traces(traces, SHORT, base, drive, table, "trajectory")
    fixed = fidelity_from_traces(traces, SHORT, base, drive, table, 0.0)
    assert np.array_equal(sat.sigma_e, fixed.sigma_e)
    assert np.all(np.isfinite(traj.sigma_e[1:]))


def test_sensitivity_overhead_free_limit(base, proto):
    sigma = 12.0
    tiny = proto.replace(t_init=1e-18, t_sense=1e-3)
    eta = sensitivity(tiny, sigma, base, t_read=1e-18)
    assert eta == pytest.approx(sigma / (proto.gamma_e * np.sqrt(base.n_spins * 1e-3)), rel=1e-12)


def test_sensitivity_overhead_scaling(base, proto):
    p = proto.replace(t_sense=1e-6)
    a = sensitivity(p.replace(t_init=1.0), 5.0, base, t_read=1e-6)
    b = sensitivity(p.replace(t_init=4.0), 5.0, base, t_read=1e-6)
    assert b / a == pytest.approx(2.0, rel=1e-5)


def test_sensitivity_rejects_nonpositive_sigma(base, proto):
    with pytest.raises(ValueError):
        sensitivity(proto, 0.0, base)


def test_zero_width_bounds_evaluate_once(base, silent):
    far = base.with_detuning(30 * base.gamma)
    opt = optimize_drive(SHORT, far, silent, (-10.0, -10.0), (far.delta_s, far.delta_s))
    assert opt.evaluations == 1
    assert opt.best_power_dbm == -10.0 and opt.best_detuning == far.delta_s
    assert not opt.on_edge


def test_edge_optimum_warns(base, silent):
    far = base.with_detuning(30 * base.gamma)
    with pytest.warns(RuntimeWarning, match="edge"):
        opt = optimize_drive(SHORT, far, silent, (-40.0, -30.0), n_power=3)
    assert opt.on_edge and opt.best_power_dbm == -30.0


def test_optimizer_is_deterministic(base, table):
    far = base.with_detuning(30 * base.gamma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = optimize_drive(SHORT, far, table, (-30.0, 10.0), n_power=5)
        b = optimize_drive(SHORT, far, table, (-30.0, 10.0), n_power=5)
    assert a.best_sigma_e == b.best_sigma_e and np.array_equal(a.scan, b.scan)


def test_optimized_sigma_halves_when_n_quadruples(base, proto, silent):
    a = optimized_point(base, proto, silent)
    b = optimized_point(base.replace(n_spins=4 * base.n_spins), proto, silent)
    assert a.sigma_e / b.sigma_e == pytest.approx(2.0, rel=0.05)


def test_auto_mode_crossover_ratio(base):
    near = base.with_detuning(15 * base.gamma)
    assert resolve_mode("auto", near) == "dispersive"
    assert resolve_mode("auto:20", near) == "full_ode"
    assert resolve_mode(auto_mode(5.0), base) == "dispersive"
    assert auto_mode(10.0) == "auto"
    with pytest.raises(ValueError):
        resolve_mode("auto:x", base)
    with pytest.raises(ValueError):
        resolve_mode("auto:-1", base)
