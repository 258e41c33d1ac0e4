import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvreadout.integrate import IntegratorConfig, integrate, sample_at
from nvreadout.model import (
    HBAR,
    K_B,
    TWO_PI,
    DegenerateDetuningError,
    DriveParams,
    FullState,
    ParameterError,
    bare_cavity_alpha,
    dbm_to_watts,
    derived_quantities,
    energy_flux_check,
    mb_rhs,
    mb_system,
    watts_to_dbm,
)


def test_collective_coupling_and_shift(base):
    d = derived_quantities(base)
    assert d.g_collective / TWO_PI == pytest.approx(6.008e5, rel=1e-3)
    assert d.chi(1.0) / TWO_PI == pytest.approx(1.805e5, rel=1e-4)
    assert d.kappa == pytest.approx(TWO_PI * 260e3)
    assert d.cooperativity == pytest.approx(4 * d.g_collective**2 / (d.kappa * base.gamma))


def test_single_spin_coupling_identity(base):
    p = base.replace(n_spins=1.0)
    assert p.g_collective == p.g_s


def test_zero_detuning_has_no_dispersive_shift(base):
    with pytest.raises(DegenerateDetuningError):
        base.with_detuning(0.0).chi(1.0)


@pytest.mark.parametrize("field,value", [("gamma", -1.0), ("kappa_c", 0.0), ("temperature", 0.0),
                                         ("n_spins", 0.5), ("p_eq", 0.6), ("omega_c", np.nan)])
def test_invalid_parameters_are_named(base, field, value):
    with pytest.raises(ParameterError) as info:
        base.replace(**{field: value})
    assert info.value.name == field


def test_decoupled_decaying_cavity(base):
    p = base.replace(g_s=0.0)
    drive = DriveParams(0.0, 0j)
    d = mb_rhs(FullState(alpha=1 + 0j, p=p.p_eq), p, drive)
    assert d.alpha == pytest.approx(-(1j * p.delta_c + p.kappa / 2))
    assert d.s == 0 and d.p == 0


def test_bare_cavity_steady_state_is_stationary(base):
    p = base.replace(g_s=0.0)
    drive = DriveParams.from_dbm(-10.0, p.omega_d)
    alpha = 2 * np.sqrt(p.kappa_c1) * drive.beta / p.kappa
    d = mb_rhs(FullState(alpha=alpha), p, drive)
    assert abs(d.alpha) < 1e-12 * abs(np.sqrt(p.kappa_c1) * drive.beta)


def test_rhs_matches_finite_difference_of_trajectory(base):
    # Dispersive regime, oracle is the numerical slope of an independent trajectory.
    p = base.with_detuning(100 * base.gamma)
    drive = DriveParams.from_dbm(-10.0, p.omega_d)
    cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-16, max_step=1e-8, dense_sample_dt=1e-10)
    traj = integrate(mb_system(p, drive), FullState(p=0.2), 1e-6, cfg)
    h = 1e-10
    for t in (2e-7, 5e-7, 8e-7):
        k = int(round(t / h))
        y = traj.y
        fd = (-y[k + 2] + 8 * y[k + 1] - 8 * y[k - 1] + y[k - 2]) / (12 * h)
        exact = mb_rhs(FullState.from_array(y[k]), p, drive)
        exact = np.array([exact.alpha.real, exact.alpha.imag, exact.s.real, exact.s.imag, exact.p])
        assert np.linalg.norm(fd[:2] - exact[:2]) < 1e-6 * np.linalg.norm(exact[:2])
        assert np.linalg.norm(fd - exact) < 1e-6 * np.linalg.norm(exact)


def test_power_beta_relation():
    omega = TWO_PI * 3e9
    d = DriveParams.from_dbm(0.0, omega, phase=0.7)
    assert d.power == pytest.approx(1e-3, rel=1e-15)
    assert d.check(omega)
    assert abs(d.beta) ** 2 * HBAR * omega == pytest.approx(d.power, rel=1e-12)


@given(st.floats(-80, 40))
def test_dbm_round_trip(dbm):
    assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-9)


@given(p=st.floats(0, 1), s_mag=st.floats(0, 0.5), phase=st.floats(0, 6.28))
def test_state_array_round_trip(p, s_mag, phase):
    state = FullState(alpha=1.5 - 2j, s=s_mag * np.exp(1j * phase), p=p)
    assert FullState.from_array(state.to_array()) == state


def test_state_invariants():
    with pytest.raises(ParameterError):
        FullState(p=1.2)
    with pytest.raises(ParameterError):
        FullState(s=0.6)


def test_flux_balance_bare_cavity_steady_state(base):
    p = base.replace(g_s=0.0)
    drive = DriveParams.from_dbm(-10.0, p.omega_d)
    alpha_ss = bare_cavity_alpha(np.inf, p, drive)
    traj = integrate(mb_system(p, drive), FullState(alpha=complex(alpha_ss)), 50e-6)
    assert energy_flux_check(traj, p, drive) < 1e-8


def test_flux_balance_free_decay(base):
    p = base.replace(g_s=0.0)
    drive = DriveParams(0.0, 0j)
    traj = integrate(mb_system(p, drive), FullState(alpha=3 - 1j), 20e-6,
                     IntegratorConfig(dense_sample_dt=1e-8))
    assert energy_flux_check(traj, p, drive) < 1e-8


def test_flux_balance_full_coupling(base):
    drive = DriveParams.from_dbm(-15.0, base.omega_d)
    traj = integrate(mb_system(base, drive), FullState(p=0.2), 1e-3)
    assert energy_flux_check(traj, base, drive) < 1e-3
    traj.check_physical()


@settings(max_examples=25, deadline=None)
@given(p0=st.floats(0, 1), power=st.floats(-40, 10))
def test_trajectory_stays_physical(base, p0, power):
    drive = DriveParams.from_dbm(power, base.omega_d)
    traj = integrate(mb_system(base, drive), FullState(p=p0), 20e-6)
    traj.check_physical(tol=1e-7)


def test_sample_at_returns_state(base):
    drive = DriveParams.from_dbm(-15.0, base.omega_d)
    traj = integrate(mb_system(base, drive), FullState(p=0.2), 5e-6)
    assert sample_at(traj, 0.0) == FullState(p=0.2)


def test_thermal_energy_constant():
    assert K_B * 300 == pytest.approx(4.1419e-21, rel=1e-4)
