"""Adaptive Dormand-Prince 5(4) integration with dense output on a uniform grid."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .model import CompiledRHS, FullState


class IntegrationError(RuntimeError):
    """Numerical failure inside :func:`integrate`."""


class StepSizeUnderflow(IntegrationError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"step size underflow at t = {t:.6e} s")


class NonFiniteState(IntegrationError):
    COMPONENTS = ("alpha_re", "alpha_im", "s_re", "s_im", "p")

    def __init__(self, t, index, n_components):
        self.t = t
        self.index = index
        name = self.COMPONENTS[index] if n_components == 5 else f"y[{index}]"
        self.component = name
        super().__init__(f"non-finite value in component {name} at t = {t:.6e} s")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 1e-5
    initial_step: float = 1e-10
    dense_sample_dt: float = 1e-7

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.dense_sample_dt <= 0:
            raise ValueError("dense_sample_dt must be positive")
        if not self.max_step >= self.initial_step > 0:
            raise ValueError("need max_step >= initial_step > 0")


class Trajectory:
    """Uniformly sampled solution with exact derivatives at the samples.

    For the Maxwell-Bloch layout ``y = (α_re, α_im, s_re, s_im, p)`` the
    complex views :attr:`alpha`, :attr:`s` and :attr:`p` are available.
    """

    def __init__(self, times, y, ydot, n_steps=0):
        self.times = np.asarray(times, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.ydot = np.asarray(ydot, dtype=float)
        self.n_steps = n_steps
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must start at 0 and increase strictly")

    def __len__(self):
        return len(self.times)

    @property
    def t_end(self):
        return self.times[-1]

    @property
    def alpha(self):
        return self.y[:, 0] + 1j * self.y[:, 1]

    @property
    def s(self):
        return self.y[:, 2] + 1j * self.y[:, 3]

    @property
    def p(self):
        return self.y[:, 4]

    @property
    def states(self):
        return [FullState.from_array(row) for row in self.y]

    def check_physical(self, tol=1e-9):
        """Raise if populations leave [0, 1] or |s| exceeds 1/2."""
        p, s = self.p, np.abs(self.s)
        if p.min() < -tol or p.max() > 1 + tol:
            raise ValueError(f"population left [0, 1]: range [{p.min()}, {p.max()}]")
        if s.max() > 0.5 + tol:
            raise ValueError(f"|s| exceeded 1/2: {s.max()}")


# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# continuous extension (Hairer & Wanner, contd5)
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2


@numba.njit(cache=True, nogil=True)
def _dopri_core(func, y0, t_end, args, rtol, atol, max_step, h0, sample_dt, complex_pairs):
    n = y0.shape[0]
    n_samples = int(np.ceil(t_end / sample_dt - 1e-9)) + 1
    times = np.empty(n_samples)
    for k in range(n_samples - 1):
        times[k] = k * sample_dt
    times[n_samples - 1] = t_end
    ys = np.empty((n_samples, n))
    yds = np.empty((n_samples, n))

    t = 0.0
    y = y0.copy()
    k1 = func(t, y, args)
    ys[0, :] = y
    yds[0, :] = k1
    next_sample = 1
    h = min(h0, max_step, t_end)
    n_steps = 0
    scale = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)

    while next_sample < n_samples:
        if h < 1e-15 * max(abs(t), 1e-12) * 16.0 or h < 1e-300:
            return times[:next_sample], ys[:next_sample], yds[:next_sample], STATUS_UNDERFLOW, t, -1, n_steps
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True

        for i in range(n):
            tmp[i] = y[i] + h * A21 * k1[i]
        k2 = func(t + C2 * h, tmp, args)
        for i in range(n):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        k3 = func(t + C3 * h, tmp, args)
        for i in range(n):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        k4 = func(t + C4 * h, tmp, args)
        for i in range(n):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        k5 = func(t + C5 * h, tmp, args)
        for i in range(n):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        k6 = func(t + h, tmp, args)
        for i in range(n):
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        k7 = func(t + h, ynew, args)

        # complex pairs share one scale so a small real or imaginary part
        # does not tighten the tolerance on a large amplitude
        for i in range(n):
            scale[i] = max(abs(y[i]), abs(ynew[i]))
        for j in range(complex_pairs):
            m = max(np.hypot(y[2 * j], y[2 * j + 1]), np.hypot(ynew[2 * j], ynew[2 * j + 1]))
            scale[2 * j] = m
            scale[2 * j + 1] = m
        err = 0.0
        for i in range(n):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            r = abs(e) / (atol[i] + rtol * scale[i])
            if r > err:
                err = r
        if not np.isfinite(err):
            err = 1e10

        if err <= 1.0:
            t_new = t_end if last else t + h
            for i in range(n):
                if not np.isfinite(ynew[i]):
                    return times[:next_sample], ys[:next_sample], yds[:next_sample], STATUS_NONFINITE, t_new, i, n_steps
            while next_sample < n_samples and times[next_sample] <= t_new:
                ts = times[next_sample]
                if ts == t_new:
                    for i in range(n):
                        ys[next_sample, i] = ynew[i]
                else:
                    theta = (ts - t) / h
                    theta1 = 1.0 - theta
                    for i in range(n):
                        ydiff = ynew[i] - y[i]
                        bspl = h * k1[i] - ydiff
                        r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                        ys[next_sample, i] = y[i] + theta * (
                            ydiff + theta1 * (bspl + theta * (ydiff - h * k7[i] - bspl + theta1 * r5)))
                if ts == t_new:
                    yds[next_sample, :] = k7
                else:
                    yds[next_sample, :] = func(ts, ys[next_sample], args)
                next_sample += 1
            t = t_new
            y[:] = ynew
            k1 = k7
            n_steps += 1
            fac = 0.9 * err ** -0.2 if err > 1e-10 else 10.0
            h = min(h * min(10.0, max(0.2, fac)), max_step)
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)

    return times, ys, yds, STATUS_OK, t, -1, n_steps


def _as_compiled(rhs):
    if isinstance(rhs, CompiledRHS):
        return rhs
    raise TypeError("compiled path requires a CompiledRHS")


def integrate(rhs, y0, t_end, config=None):
    """Integrate ``rhs`` from ``t = 0`` to ``t_end`` and sample on a uniform grid.

    Parameters
    ----------
    rhs : CompiledRHS or callable
        Either a compiled system (see :func:`nvreadout.model.mb_system`) or a
        plain Python callable ``f(t, y) -> dy/dt`` on real arrays.
    y0 : FullState or array_like
        Initial state.
    t_end : float
        Final time in seconds.
    config : IntegratorConfig, optional

    Returns
    -------
    Trajectory
        Samples at ``k * dense_sample_dt`` plus ``t_end``.

    Raises
    ------
    StepSizeUnderflow
        The step size collapsed (problem too stiff for the explicit scheme).
    NonFiniteState
        NaN or Inf appeared in the state.
    """
    config = config or IntegratorConfig()
    if not t_end > 0:
        raise ValueError(f"t_end must be > 0, got {t_end!r}")
    y0 = y0.to_array() if isinstance(y0, FullState) else np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    atol = np.full(y0.shape[0], config.abs_tol)
    sample_dt = min(config.dense_sample_dt, t_end)

    if isinstance(rhs, CompiledRHS):
        core = _dopri_core
        func, args, pairs = rhs.func, np.asarray(rhs.args, dtype=float), rhs.complex_pairs
    else:
        core = _dopri_core.py_func
        user = rhs

        def func(t, y, args):
            return np.asarray(user(t, y), dtype=float).reshape(-1)

        args, pairs = np.zeros(0), 0

    times, ys, yds, status, t_stop, index, n_steps = core(
        func, y0, float(t_end), args, config.rel_tol, atol, config.max_step,
        config.initial_step, sample_dt, pairs)
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflow(t_stop)
    if status == STATUS_NONFINITE:
        raise NonFiniteState(t_stop, index, y0.shape[0])
    return Trajectory(times, ys, yds, n_steps)


def sample_at(traj, t):
    """State at time ``t`` by cubic Hermite interpolation between samples.

    Exact at sample nodes. Returns a :class:`FullState` for Maxwell-Bloch
    trajectories and a raw array otherwise.
    """
    times = traj.times
    if not 0.0 <= t <= times[-1]:
        raise ValueError(f"t = {t!r} outside trajectory range [0, {times[-1]!r}]")
    k = int(np.searchsorted(times, t, side="right")) - 1
    if times[k] == t or k == len(times) - 1:
        y = traj.y[k].copy()
    else:
        h = times[k + 1] - times[k]
        u = (t - times[k]) / h
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        y = (h00 * traj.y[k] + h10 * h * traj.ydot[k]
             + h01 * traj.y[k + 1] + h11 * h * traj.ydot[k + 1])
    if traj.y.shape[1] == 5:
        y[4] = min(max(y[4], 0.0), 1.0)
        return FullState.from_array(y)
    return y
