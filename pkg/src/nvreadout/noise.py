"""Thermal and drive phase-noise contributions to the readout noise."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from .model import K_B, ParameterError


@dataclass(frozen=True)
class PhaseNoiseTable:
    """Single-sideband phase noise L(f) of the drive source in dBc/Hz.

    Interpolation is linear in (log10 f, dBc); queries outside the table clamp
    to the nearest endpoint. ``calibration_db`` is added to every entry.
    """

    offsets: np.ndarray
    ssb_dbc: np.ndarray
    calibration_db: float = 0.0

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float)
        ssb = np.asarray(self.ssb_dbc, dtype=float)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "ssb_dbc", ssb)
        if offsets.ndim != 1 or offsets.shape != ssb.shape:
            raise ValueError("offsets and ssb_dbc must be 1-D arrays of equal length")
        if len(offsets) < 2:
            raise ValueError("phase-noise table needs at least 2 points")
        if np.any(offsets <= 0) or np.any(np.diff(offsets) <= 0):
            raise ValueError("offsets must be positive and strictly increasing")

    @classmethod
    def from_csv(cls, path, calibration_db=0.0):
        """Read ``offset_hz, ssb_dbc_per_hz`` rows; ``#`` starts a comment."""
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = [x.strip() for x in line.split(",")]
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns, got {line!r}")
                try:
                    rows.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    if rows:
                        raise ValueError(f"{path}:{lineno}: non-numeric row {line!r}") from None
                    # header row
        data = np.array(rows, dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], calibration_db)

    @classmethod
    def default(cls, calibration_db=None):
        """Shipped table (approximate SMA100B curve at a 3 GHz carrier)."""
        ref = resources.files("nvreadout") / "data" / "sma100b_3ghz.csv"
        with resources.as_file(ref) as path:
            table = cls.from_csv(path)
        if calibration_db is None:
            calibration_db = DEFAULT_CALIBRATION_DB
        return table.with_calibration(calibration_db)

    @classmethod
    def silent(cls):
        """A table that contributes no phase noise."""
        return cls(np.array([1.0, 1e12]), np.array([-np.inf, -np.inf]))

    def with_calibration(self, calibration_db):
        return PhaseNoiseTable(self.offsets, self.ssb_dbc, float(calibration_db))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# single-sideband phase noise\n")
            fh.write("offset_hz,ssb_dbc_per_hz\n")
            for f, l in zip(self.offsets, self.ssb_dbc):
                fh.write(f"{float(f)!r},{float(l)!r}\n")

    def ssb(self, f):
        """Interpolated L(f) in dBc/Hz, calibration included."""
        logf = np.log10(np.clip(np.asarray(f, dtype=float), self.offsets[0], self.offsets[-1]))
        return np.interp(logf, np.log10(self.offsets), self.ssb_dbc) + self.calibration_db

    def spectral_density(self, f):
        """Double-sideband phase spectral density S_φ(f) = 2·10^(L/10) in rad²/Hz."""
        return 2.0 * 10.0 ** (self.ssb(f) / 10.0)


# Offset in dB added to the shipped curve. The uncalibrated table already puts
# the phase-noise knee near 0 dBm at the default operating point.
DEFAULT_CALIBRATION_DB = 0.0


class NoiseBudget(NamedTuple):
    l_th: float
    l_ph: float
    ratio_R: float

    @property
    def total(self):
        return self.l_th + self.l_ph


def thermal_noise(params):
    """k_B T in joules."""
    if not params.temperature > 0:
        raise ParameterError("temperature", "must be > 0")
    return K_B * params.temperature


def reflection_coeff(f, params, inversion_w):
    """One-port reflection of the spin-cavity system for a sideband at offset ``+f``.

    Γ_p(f) = 1 - κc1 / [i2πf + iΔc + κ/2 + g_s² N w / (i2πf + iΔs + Γ/2)]
    """
    jw = 2j * np.pi * np.asarray(f, dtype=float)
    spin = params.g_s**2 * params.n_spins * np.asarray(inversion_w) / (jw + 1j * params.delta_s + 0.5 * params.gamma)
    return 1.0 - params.kappa_c1 / (jw + 1j * params.delta_c + 0.5 * params.kappa + spin)


def phase_noise(power, f, table, params, inversion_w):
    """Phase-noise energy P · S_φ(f) · |Γ_p(f)|² in joules."""
    power = np.asarray(power, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(power < 0):
        raise ValueError("power must be >= 0")
    if np.any(f <= 0):
        raise ValueError("offset frequency must be > 0")
    return power * table.spectral_density(f) * np.abs(reflection_coeff(f, params, inversion_w)) ** 2


def noise_total(power, t_meas, table, params, inversion_w):
    """Noise budget for a measurement of duration ``t_meas`` (offset f = 1/t_meas).

    Scalar inputs give a :class:`NoiseBudget` of floats; array inputs broadcast.
    """
    t_meas = np.asarray(t_meas, dtype=float)
    if np.any(t_meas <= 0):
        raise ValueError("measurement time must be > 0")
    l_th = thermal_noise(params)
    l_ph = phase_noise(power, 1.0 / t_meas, table, params, inversion_w)
    ratio = np.sqrt(l_ph / l_th + 1.0)
    if np.ndim(l_ph) == 0:
        return NoiseBudget(float(l_th), float(l_ph), float(ratio))
    return NoiseBudget(l_th, l_ph, ratio)
