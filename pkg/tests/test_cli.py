"""Config parsing, unit conversion, output artifacts, exit codes."""

import json
import math

import numpy as np
import pytest

from spinchannel.cli import (
    EXIT_CAPABILITY,
    EXIT_CONVERGENCE,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_PARSE,
    KHZ_TO_PER_US,
    MHZ_TO_RAD_PER_US,
    RunConfig,
    build_spec,
    emit_config,
    main,
    parse_config,
    solver_settings,
    validate_config,
    _json_safe,
)
from spinchannel.errors import ConfigError, NumericalError


def test_parse_emit_round_trip_exact():
    config = RunConfig(geometry="ladder", n=3, separation_nm=37.5,
                       spacing_nm=None, gamma_nv_khz=0.1, gamma_c_khz=2.5,
                       epsilon_mhz=0.7, missing_mask="010010",
                       solver="tebd", dt_us=0.0125, t_max_us=None,
                       sample_every=4, chi_max=48, cutoff=3e-13,
                       chi_schedule=(16, 32, 48), trotter_order=2, workers=2,
                       experiment="missing", n_list=(2, 5),
                       gamma_c_list_khz=(0.5, 2.0), p_grid=(0.0, 0.25, 1.0),
                       sigma_mhz=(0.1, 0.3), realizations=7, seed=99,
                       output="out.csv")
    assert parse_config(emit_config(config)) == config
    # defaults survive an empty config and an emit of the defaults
    assert parse_config("") == RunConfig()
    assert parse_config(emit_config(RunConfig())) == RunConfig()


def test_parse_errors_name_the_line():
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'bogus_key'"):
        parse_config("[model]\nbogus_key = 1\n")
    with pytest.raises(ConfigError, match=r"unknown section \[turbo\]"):
        parse_config("[turbo]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"line 3: key 'n' expects int"):
        parse_config("[model]\ngeometry = chain\nn = abc\n")
    with pytest.raises(ConfigError, match="comma-separated integers"):
        parse_config("[solver]\nchi_schedule = 4,x\n")
    with pytest.raises(ConfigError, match="comma-separated numbers"):
        parse_config("[experiment]\np_grid = 0.1;0.2\n")
    with pytest.raises(ConfigError, match="config syntax error"):
        parse_config("n = 1\n")                          # key before section


@pytest.mark.parametrize("override, message", [
    (dict(geometry="ring"), "geometry must be one of"),
    (dict(n=0), "n must be >= 1, got 0"),
    (dict(solver="magic"), "solver must be one of"),
    (dict(experiment="teleport"), "experiment must be one of"),
    (dict(chi_max=0), "chi_max must be positive"),
    (dict(realizations=0), "realizations must be positive"),
    (dict(trotter_order=3), "trotter_order must be 1 or 2"),
    (dict(gamma_c_khz=-1.0), "decay rates must be non-negative"),
    (dict(spacing_nm=0.0), "spacing_nm must be positive"),
    (dict(dt_us=0.0), "dt_us must be positive"),
    (dict(t_max_us=-1.0), "t_max_us must be non-negative"),
    (dict(p_grid=(0.5, 1.5)), r"p_grid values must lie in \[0, 1\]"),
    (dict(sigma_mhz=(-0.1,)), "sigma_mhz values must be non-negative"),
    (dict(n_list=(2, 0)), "n_list values must be >= 1"),
    (dict(missing_mask="01x0"), "must be a 0/1 string"),
])
def test_validate_config_rejects(override, message):
    from dataclasses import replace
    with pytest.raises(ConfigError, match=message):
        validate_config(replace(RunConfig(), **override))


def test_build_spec_converts_units_once():
    config = RunConfig(geometry="chain", n=2, separation_nm=40.0,
                       gamma_nv_khz=0.1, gamma_c_khz=2.0, epsilon_mhz=0.9)
    spec = build_spec(config)
    assert spec.nv_noise_rate == pytest.approx(0.1 * KHZ_TO_PER_US)
    assert spec.channel_noise_rate == pytest.approx(2.0 * KHZ_TO_PER_US)
    assert spec.splitting == pytest.approx(0.9 * MHZ_TO_RAD_PER_US)
    assert spec.splitting == pytest.approx(0.9 * 2 * math.pi)

    direct = build_spec(RunConfig(geometry="chain", n=2, spacing_nm=40 / 3))
    assert direct.rail_couplings == spec.rail_couplings


def test_build_spec_decodes_missing_mask():
    config = RunConfig(geometry="ladder", n=3, missing_mask="010010")
    spec = build_spec(config)
    assert spec.missing == frozenset({(1, "T"), (3, "B")})
    with pytest.raises(ConfigError, match="length 4 does not match the 6"):
        build_spec(RunConfig(geometry="ladder", n=3, missing_mask="0100"))


def test_solver_settings_mapping():
    s = solver_settings(RunConfig(solver="tebd", dt_us=0.01, chi_max=32,
                                  chi_schedule=(8, 16), workers=3))
    assert (s.solver, s.dt, s.chi_max, s.chi_schedule, s.workers) == \
        ("tebd", 0.01, 32, (8, 16), 3)
    assert solver_settings(RunConfig()).chi_schedule is None


def test_json_safe():
    value = {"a": np.int64(3), "b": (np.float64(0.5), 1),
             "c": frozenset({(2, "B"), (1, "T")})}
    safe = _json_safe(value)
    assert safe == {"a": 3, "b": [0.5, 1], "c": [[1, "T"], [2, "B"]]}
    json.dumps(safe)


DYN_ARGS = ["--geometry", "chain", "--n", "1", "--spacing-nm", "3.0769",
            "--t-max-us", "0.5", "--dt-us", "0.005"]


def test_main_dynamics_writes_csv_and_meta(tmp_path):
    out = tmp_path / "dyn.csv"
    assert main(DYN_ARGS + ["--output", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "time_us,E,trace,purity_or_discarded_weight"
    assert len(lines) == 102                             # header + 101 samples
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == 0.0                        # separable at t = 0
    assert float(first[2]) == pytest.approx(1.0, abs=1e-12)

    meta = json.loads((tmp_path / "dyn.meta").read_text())
    assert meta["config"]["n"] == 1
    assert meta["config"]["t_max_us"] == 0.5
    assert meta["seed"] == 2024
    assert set(meta["versions"]) == {"spinchannel", "numpy", "scipy", "python"}


def test_main_reruns_byte_identical(tmp_path):
    out = tmp_path / "dyn.csv"
    args = DYN_ARGS + ["--output", str(out)]
    assert main(args) == EXIT_OK
    csv1, meta1 = out.read_bytes(), (tmp_path / "dyn.meta").read_bytes()
    assert main(args) == EXIT_OK
    assert out.read_bytes() == csv1
    assert (tmp_path / "dyn.meta").read_bytes() == meta1


def test_main_zero_window_single_row(tmp_path):
    out = tmp_path / "zero.csv"
    code = main(["--geometry", "chain", "--n", "1", "--t-max-us", "0",
                 "--output", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    assert float(lines[1].split(",")[1]) == 0.0


def test_main_length_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["--experiment", "length_sweep", "--geometry", "chain",
                 "--separation-nm", "8", "--n", "2", "--output", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "geometry,n,gamma_c_khz,e_max,t_at_max_us"
    assert len(lines) == 2                               # --n collapses n_list
    geometry, n, gc, e_max, t_at = lines[1].split(",")
    assert (geometry, n, gc) == ("chain", "2", "2.0")
    assert 0.0 < float(e_max) <= 1.0 and float(t_at) > 0.0


def test_main_missing_experiment(tmp_path):
    out = tmp_path / "miss.csv"
    code = main(["--experiment", "missing", "--geometry", "ladder", "--n", "1",
                 "--spacing-nm", "3.0769", "--t-max-us", "1.0",
                 "--p-grid", "0,0.5,1", "--output", str(out)])
    assert code == EXIT_OK
    blocks = out.read_text().split("\n\n")
    assert len(blocks) == 2
    config_lines = blocks[0].splitlines()
    assert config_lines[0] == "mask,m_c,e_max"
    assert [l.split(",")[0] for l in config_lines[1:]] == \
        ["00", "10", "01", "11"]
    rail_b, rail_t = config_lines[2], config_lines[3]
    assert rail_b.split(",")[2] == rail_t.split(",")[2]  # reflection symmetry
    avg_lines = blocks[1].splitlines()
    assert avg_lines[0] == "p,avg_e_max"
    assert len(avg_lines) == 4
    assert float(avg_lines[-1].split(",")[1]) == 0.0     # all spins gone

    meta = json.loads((tmp_path / "miss.meta").read_text())
    assert meta["run_info"] == {"n_configurations": 4, "n_simulated": 2}


def test_main_disorder_experiment(tmp_path):
    out = tmp_path / "dis.csv"
    code = main(["--experiment", "disorder", "--geometry", "chain", "--n", "2",
                 "--spacing-nm", "3.0769", "--t-max-us", "1.0",
                 "--sigma-mhz", "0.3", "--realizations", "3",
                 "--output", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "sigma_mhz,k,mean_e_max,std_err"
    sigma, k, mean, err = lines[1].split(",")
    assert (sigma, k) == ("0.3", "3")
    assert float(mean) > 0 and float(err) >= 0


def test_main_parse_failures_exit_2(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.ini")]) == EXIT_PARSE
    assert "cannot read config file" in capsys.readouterr().err
    assert main(["--n", "0"]) == EXIT_PARSE
    assert "n must be >= 1" in capsys.readouterr().err
    assert main(["--p-grid", "0.1;0.5"]) == EXIT_PARSE
    bad_mask = tmp_path / "bad.ini"
    bad_mask.write_text("[model]\ngeometry = ladder\nn = 3\n"
                        "missing_mask = 0100\n")
    assert main(["--config", str(bad_mask), "--t-max-us", "0"]) == EXIT_PARSE
    assert "does not match" in capsys.readouterr().err


def test_main_capability_exit_3_cleans_up(tmp_path, capsys):
    out = tmp_path / "cap.csv"
    code = main(["--geometry", "ladder", "--n", "12", "--solver", "dense",
                 "--t-max-us", "0.1", "--output", str(out)])
    assert code == EXIT_CAPABILITY
    assert "capability error" in capsys.readouterr().err
    assert not out.exists() and not (tmp_path / "cap.meta").exists()


def test_main_convergence_exit_4(tmp_path, capsys):
    ini = tmp_path / "conv.ini"
    ini.write_text("[solver]\nsolver = tebd\nchi_schedule = 2,3\n"
                   "t_max_us = 0.1\n")
    out = tmp_path / "conv.csv"
    code = main(["--config", str(ini), "--output", str(out)])
    assert code == EXIT_CONVERGENCE
    assert "convergence error" in capsys.readouterr().err
    assert not out.exists()


def test_main_numerical_exit_5(tmp_path, monkeypatch, capsys):
    def boom(*_a, **_k):
        raise NumericalError("synthetic diagnostics failure")
    monkeypatch.setattr("spinchannel.cli.run_dynamics", boom)
    out = tmp_path / "num.csv"
    code = main(DYN_ARGS + ["--output", str(out)])
    assert code == EXIT_NUMERICAL
    assert "numerical error" in capsys.readouterr().err
    assert not out.exists()
