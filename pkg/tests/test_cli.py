import csv
import json

import pytest

from nvreadout.cli import EXIT_INVALID, EXIT_OK, OUTPUT_ENV, main


def read_csv(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return comments, rows[0], rows[1:]


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


def test_simulate_writes_trajectory_columns(out):
    code = main(["simulate", "--output-dir", str(out), "--p0", "0.2", "--p0-prime", "0.3",
                 "--t-end", "2e-5"])
    assert code == EXIT_OK
    for name in ("trajectory_p0.csv", "trajectory_p0_prime.csv"):
        comments, header, rows = read_csv(out / name)
        assert header == ["t_s", "alpha_re", "alpha_im", "s_re", "s_im", "p"]
        assert len(rows) > 10
        assert float(rows[0][5]) == pytest.approx(0.2 if name.endswith("p0.csv") else 0.3)
    assert (out / "trajectory.svg").exists()


def test_provenance_block(out):
    main(["noise", "--output-dir", str(out), "--points", "5"])
    comments, header, rows = read_csv(out / "noise_ratio.csv")
    text = "\n".join(comments)
    assert "config_sha256:" in text and "nvreadout " in text and "mode:" in text
    assert "system.kappa_c_hz" in text
    assert header == ["power_dbm", "l_th_j", "l_ph_j", "ratio_R"]
    assert len(rows) == 5
    assert all(float(r[3]) >= 1.0 for r in rows)


def test_map_grid_shape(out):
    code = main(["map", "--output-dir", str(out), "--mode", "dispersive", "--p0-prime", "0.3",
                 "--x", "power_dbm:-30:20:4", "--y", "detuning_hz:1e7:1e8:3:log"])
    assert code == EXIT_OK
    _, header, rows = read_csv(out / "map.csv")
    assert header == ["power_dbm", "detuning_hz", "sigma_e", "reason"]
    assert len(rows) == 12
    assert [float(r[0]) for r in rows[:3]] == [-30.0] * 3
    svg = (out / "map.svg").read_text()
    assert svg.count('class="cell"') == 12


def test_scaling_writes_exponent(out):
    code = main(["scaling", "--output-dir", str(out), "--study", "n", "--points", "3",
                 "--n-min", "1e14", "--n-max", "1e15", "--mode", "dispersive", "--no-phase-noise"])
    assert code == EXIT_OK
    summary = json.loads((out / "scaling_n.json").read_text())
    assert set(summary) >= {"exponent", "r_squared", "window", "provenance"}
    assert -1.0 < summary["exponent"] < 0.0


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["noise", "--points", "3"]) == EXIT_OK
    assert (tmp_path / "env" / "noise_ratio.csv").exists()


def test_flag_beats_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["noise", "--points", "3", "--output-dir", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "noise_ratio.csv").exists()
    assert not (tmp_path / "env").exists()


@pytest.mark.parametrize("argv", [["bogus"], ["simulate", "--frobnicate"], [],
                                  ["map", "--x", "nothing:0:1:2"], ["noise", "--points", "0"]])
def test_invalid_usage_exits_one(argv, out, capsys):
    assert main(argv + ["--output-dir", str(out)] if argv and argv[0] != "bogus" else argv) == EXIT_INVALID


def test_invalid_config_exits_one(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[system]\ngamma_hz = -5\n")
    assert main(["noise", "--config", str(cfg), "--output-dir", str(tmp_path)]) == EXIT_INVALID


def test_check_passes(out, capsys):
    assert main(["check", "--output-dir", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "FAIL" not in text and text.count("PASS") == 5
