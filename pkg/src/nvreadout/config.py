"""TOML run configuration: loading, unit conversion, validation and round-trip."""
from __future__ import annotations

import copy
import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .integrate import IntegratorConfig
from .model import TWO_PI, DriveParams, ParameterError, SystemParams
from .noise import PhaseNoiseTable
from .readout import GAMMA_E, ProtocolParams, auto_mode

PUBLISHED = "published operating point"
CHOSEN = "chosen default"

# section -> key -> (default, provenance)
DEFAULTS = {
    "system": {
        "cavity_hz": (3.0e9, CHOSEN),
        "spin_hz": (3.002e9, CHOSEN),
        "drive_hz": (3.0e9, CHOSEN),
        "kappa_c_hz": (130e3, PUBLISHED),
        "kappa_c1_hz": (130e3, PUBLISHED),
        "gamma_hz": (330e3, PUBLISHED),
        "gamma_th_hz": (30.0, CHOSEN),
        "g_s_hz": (0.019, PUBLISHED),
        "n_spins": (1e15, PUBLISHED),
        "temperature_k": (300.0, CHOSEN),
        "p_eq": (0.5, CHOSEN),
    },
    "drive": {
        "power_dbm": (-15.0, CHOSEN),
        "phase_rad": (0.0, CHOSEN),
    },
    "protocol": {
        "p0": (0.2, PUBLISHED),
        "p0_prime": (0.3, PUBLISHED),
        "t_read_s": (1e-3, PUBLISHED),
        "t_init_s": (1e-3, CHOSEN),
        "protocol": ("ramsey", CHOSEN),
        "t2_star_s": (2.0 / (TWO_PI * 330e3), CHOSEN),
        "t2_s": (20.0 / (TWO_PI * 330e3), CHOSEN),
        "gamma_e_hz_per_t": (GAMMA_E / TWO_PI, CHOSEN),
    },
    "integrator": {
        "rel_tol": (1e-9, CHOSEN),
        "abs_tol": (1e-12, CHOSEN),
        "max_step_s": (1e-5, CHOSEN),
        "initial_step_s": (1e-10, CHOSEN),
        "dense_sample_dt_s": (1e-7, CHOSEN),
    },
    "noise": {
        "table": ("builtin", CHOSEN),
        "phase_noise": (True, CHOSEN),
        "calibration_db": (0.0, CHOSEN),
        "inversion": ("saturated", CHOSEN),
    },
    "run": {
        "mode": ("auto", CHOSEN),
        "dispersive_crossover": (10.0, CHOSEN),
        "output_dir": ("results", CHOSEN),
        "workers": (1, CHOSEN),
    },
}
OPTIONAL = {"protocol": {"t_sense_s"}}


class ConfigError(ValueError):
    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"{key}{where}: {message}")


@dataclass
class RunConfig:
    system: SystemParams
    drive: DriveParams
    protocol: ProtocolParams
    integrator: IntegratorConfig
    noise_table: PhaseNoiseTable
    noise_table_path: str
    phase_noise: bool
    inversion: object
    mode: str
    output_dir: str
    workers: int
    values: dict
    provenance: dict
    source: str | None = None

    @property
    def table(self):
        """Phase-noise table in effect (silent when phase noise is disabled)."""
        return self.noise_table if self.phase_noise else PhaseNoiseTable.silent()

    def to_toml(self):
        return tomli_w.dumps(self.values)

    def digest(self):
        return hashlib.sha256(self.to_toml().encode()).hexdigest()[:16]

    def provenance_lines(self):
        return [f"{key} = {self.lookup(key)!r} [{origin}]" for key, origin in sorted(self.provenance.items())]

    def lookup(self, dotted):
        section, key = dotted.split(".", 1)
        return self.values[section][key]


def _find_line(text, section, key):
    if text is None:
        return None
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        header = re.match(r"\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return lineno
    return None


def _merge(data, text):
    values, provenance = {}, {}
    for section, value in data.items():
        if section not in DEFAULTS:
            raise ConfigError(section, "unknown section")
        if not isinstance(value, dict):
            raise ConfigError(section, "expected a table")
        for key in value:
            if key not in DEFAULTS[section] and key not in OPTIONAL.get(section, ()):
                raise ConfigError(f"{section}.{key}", "unknown key", _find_line(text, section, key))
    for section, keys in DEFAULTS.items():
        values[section] = {}
        given = data.get(section, {})
        for key, (default, origin) in keys.items():
            if key in given:
                values[section][key] = given[key]
                provenance[f"{section}.{key}"] = origin if given[key] == default else "config file"
            else:
                values[section][key] = default
                provenance[f"{section}.{key}"] = origin
        for key in OPTIONAL.get(section, ()):
            if key in given:
                values[section][key] = given[key]
                provenance[f"{section}.{key}"] = "config file"
    return values, provenance


def _number(values, section, key, text, positive=True, allow_zero=False):
    value = values[section][key]
    name = f"{section}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}", _find_line(text, section, key))
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise ConfigError(name, f"must be {'>= 0' if allow_zero else '> 0'}, got {value!r}",
                          _find_line(text, section, key))
    return float(value)


def build(values, provenance, base_dir=None, text=None, source=None):
    num = lambda sec, key, **kw: _number(values, sec, key, text, **kw)  # noqa: E731
    s = "system"
    try:
        system = SystemParams(
            omega_c=TWO_PI * num(s, "cavity_hz"),
            omega_s=TWO_PI * num(s, "spin_hz"),
            omega_d=TWO_PI * num(s, "drive_hz"),
            kappa_c=TWO_PI * num(s, "kappa_c_hz"),
            kappa_c1=TWO_PI * num(s, "kappa_c1_hz"),
            gamma=TWO_PI * num(s, "gamma_hz"),
            gamma_th=TWO_PI * num(s, "gamma_th_hz"),
            g_s=TWO_PI * num(s, "g_s_hz", allow_zero=True),
            n_spins=num(s, "n_spins"),
            temperature=num(s, "temperature_k"),
            p_eq=num(s, "p_eq", allow_zero=True),
        )
    except ParameterError as exc:
        key = {"n_spins": "n_spins", "p_eq": "p_eq"}.get(exc.name, exc.name)
        raise ConfigError(f"system.{key}", str(exc), _find_line(text, s, key)) from None

    drive = DriveParams.from_dbm(num("drive", "power_dbm", positive=False), system.omega_d,
                                 num("drive", "phase_rad", positive=False))

    p = "protocol"
    try:
        protocol = ProtocolParams(
            p0=num(p, "p0", allow_zero=True),
            p0_prime=num(p, "p0_prime", allow_zero=True),
            t_read=num(p, "t_read_s"),
            t_init=num(p, "t_init_s"),
            t_sense=num(p, "t_sense_s") if "t_sense_s" in values[p] else None,
            protocol=values[p]["protocol"],
            t2_star=num(p, "t2_star_s"),
            t2=num(p, "t2_s"),
            gamma_e=TWO_PI * num(p, "gamma_e_hz_per_t"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(p, str(exc)) from None

    i = "integrator"
    try:
        integrator = IntegratorConfig(
            rel_tol=num(i, "rel_tol"), abs_tol=num(i, "abs_tol"), max_step=num(i, "max_step_s"),
            initial_step=num(i, "initial_step_s"), dense_sample_dt=num(i, "dense_sample_dt_s"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(i, str(exc)) from None

    noise = values["noise"]
    calibration = _number(values, "noise", "calibration_db", text, positive=False)
    table_name = noise["table"]
    if table_name == "builtin":
        table = PhaseNoiseTable.default(calibration)
        table_path = "builtin"
    else:
        path = Path(table_name)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.is_file():
            raise ConfigError("noise.table", f"file not found: {path}", _find_line(text, "noise", "table"))
        table = PhaseNoiseTable.from_csv(path, calibration)
        table_path = str(path)
    if not isinstance(noise["phase_noise"], bool):
        raise ConfigError("noise.phase_noise", "expected true or false", _find_line(text, "noise", "phase_noise"))
    inversion = noise["inversion"]
    if inversion not in ("saturated", "trajectory") and (
            isinstance(inversion, bool) or not isinstance(inversion, (int, float)) or not -1 <= inversion <= 1):
        raise ConfigError("noise.inversion", "expected 'saturated', 'trajectory' or a number in [-1, 1]",
                          _find_line(text, "noise", "inversion"))

    run = values["run"]
    if run["mode"] not in ("auto", "full_ode", "dispersive"):
        raise ConfigError("run.mode", f"unknown mode {run['mode']!r}", _find_line(text, "run", "mode"))
    crossover = _number(values, "run", "dispersive_crossover", text)
    if isinstance(run["workers"], bool) or not isinstance(run["workers"], int) or run["workers"] < 1:
        raise ConfigError("run.workers", "expected a positive integer", _find_line(text, "run", "workers"))

    mode = auto_mode(crossover) if run["mode"] == "auto" else run["mode"]
    return RunConfig(system, drive, protocol, integrator, table, table_path, noise["phase_noise"],
                     inversion, mode, str(run["output_dir"]), run["workers"],
                     values, provenance, source)


def loads(text, base_dir=None, source=None):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from None
    values, provenance = _merge(data, text)
    return build(values, provenance, base_dir, text, source)


def load_config(path=None):
    """Parse, unit-convert and validate a run configuration.

    ``path=None`` loads the shipped default configuration.
    """
    if path is None:
        ref = resources.files("nvreadout") / "data" / "default.toml"
        return loads(ref.read_text(), source="builtin:default.toml")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    return loads(path.read_text(), base_dir=path.parent, source=str(path))


def default_values():
    return {section: {k: copy.copy(v[0]) for k, v in keys.items()} for section, keys in DEFAULTS.items()}
