import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvreadout.config import ConfigError, load_config, loads
from nvreadout.model import TWO_PI


def test_default_loads_with_unit_conversion():
    cfg = load_config()
    assert cfg.system.kappa_c == pytest.approx(TWO_PI * 1.3e5)
    assert cfg.system.g_s == pytest.approx(TWO_PI * 0.019)
    assert cfg.mode == "auto"
    assert cfg.provenance["system.kappa_c_hz"] == "published operating point"
    assert cfg.provenance["system.temperature_k"] == "chosen default"


def test_zero_dbm_is_one_milliwatt():
    cfg = loads("[drive]\npower_dbm = 0.0\n")
    assert cfg.drive.power == pytest.approx(1e-3)


def test_negative_rate_names_key_and_line():
    text = "# header\n[system]\ncavity_hz = 3e9\ngamma_hz = -1.0\n"
    with pytest.raises(ConfigError) as info:
        loads(text)
    assert info.value.key == "system.gamma_hz"
    assert info.value.line == 4
    assert "system.gamma_hz" in str(info.value) and "line 4" in str(info.value)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="system.cavity_ghz"):
        loads("[system]\ncavity_ghz = 3.0\n")


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        loads("[extras]\nx = 1\n")


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


def test_missing_noise_table_is_an_error(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('[noise]\ntable = "nowhere.csv"\n')
    with pytest.raises(ConfigError, match="noise.table"):
        load_config(path)


def test_relative_noise_table_resolves_against_config(tmp_path):
    (tmp_path / "pn.csv").write_text("# offset, dBc\n1e3,-120\n1e5,-140\n")
    path = tmp_path / "run.toml"
    path.write_text('[noise]\ntable = "pn.csv"\n')
    cfg = load_config(path)
    assert cfg.noise_table_path == str(tmp_path / "pn.csv")


def test_overridden_value_reports_config_file():
    cfg = loads("[system]\ntemperature_k = 4.0\n")
    assert cfg.provenance["system.temperature_k"] == "config file"


def test_bad_mode_rejected():
    with pytest.raises(ConfigError, match="run.mode"):
        loads('[run]\nmode = "fast"\n')


@settings(max_examples=25, deadline=None)
@given(temperature=st.floats(1e-3, 1e3), power=st.floats(-60, 30), n=st.floats(1e10, 1e18),
       phase_noise=st.booleans())
def test_round_trip_is_identity(temperature, power, n, phase_noise):
    text = (f"[system]\ntemperature_k = {temperature!r}\nn_spins = {n!r}\n"
            f"[drive]\npower_dbm = {power!r}\n[noise]\nphase_noise = {str(phase_noise).lower()}\n")
    cfg = loads(text)
    again = loads(cfg.to_toml())
    assert again.values == cfg.values
    assert again.system == cfg.system
    assert again.digest() == cfg.digest()
    assert np.isclose(again.drive.power, cfg.drive.power, rtol=0, atol=0)


def test_crossover_ratio_reaches_mode():
    assert load_config().mode == "auto"
    assert loads("[run]\ndispersive_crossover = 20.0\n").mode == "auto:20.0"
    assert loads('[run]\nmode = "full_ode"\ndispersive_crossover = 20.0\n').mode == "full_ode"
    with pytest.raises(ConfigError, match="run.dispersive_crossover"):
        loads("[run]\ndispersive_crossover = 0.0\n")
