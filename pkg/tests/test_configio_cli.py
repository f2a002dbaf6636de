import numpy as np
import pytest

from aiekf.cli import main
from aiekf.configio import ConfigError, load_noise, load_scenario


SCENARIO = """
# short trot scenario
gait = trot
terrain = flat
duration = 2.0
seed = 3
gyro_noise = 0.002
slip_event = 0 1.45 0.05 0.1 0 0
slip_event = 2 1.25 0.04 0 -0.08 0
"""

NOISE = """
foot_std = 0.03
vel_kin_std = 0.04, 0.04, 0.06
window = 8
alpha_max = 9
slip_sigma = 7.81
"""


def test_load_scenario(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(SCENARIO)
    cfg = load_scenario(path)
    assert cfg.gait == "trot" and cfg.duration == 2.0 and cfg.seed == 3
    assert len(cfg.slip_events) == 2
    assert cfg.slip_events[0].leg == 0
    assert np.array_equal(cfg.slip_events[1].velocity, [0.0, -0.08, 0.0])


def test_load_noise(tmp_path):
    path = tmp_path / "n.cfg"
    path.write_text(NOISE)
    cfg = load_noise(path)
    assert np.array_equal(cfg.foot_std, np.full(3, 0.03))
    assert np.array_equal(cfg.vel_kin_std, [0.04, 0.04, 0.06])
    assert cfg.window == 8


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("gaits = trot\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_scenario(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("duration = soon\n")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_invalid_scenario_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("duration = 0.2\n")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_noise(tmp_path / "nope.cfg")


# ---------------------------------------------------------------- CLI

@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text("gait = trot\nterrain = flat\nduration = 2.0\nseed = 4\n")
    return path


def test_cli_gen_then_run(tmp_path, scenario_file, capsys):
    out = tmp_path / "out"
    assert main(["gen", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    assert (out / "quick_sensor.csv").exists()
    assert (out / "quick_truth.csv").exists()
    rc = main(["run", "--scenario", str(scenario_file), "--variant",
               "IEKF+SR+FE", "--out", str(out), "--traces"])
    assert rc == 0
    assert (out / "report_IEKF_SR_FE.csv").exists()
    traces = list(out.glob("trace_IEKF_SR_FE_leg*.csv"))
    assert len(traces) == 4


def test_cli_run_without_logs_generates(tmp_path, scenario_file):
    out = tmp_path / "fresh"
    rc = main(["run", "--scenario", str(scenario_file), "--variant", "IEKF",
               "--out", str(out)])
    assert rc == 0
    assert (out / "report_IEKF.csv").exists()


def test_cli_sweep(tmp_path, scenario_file):
    out = tmp_path / "out"
    rc = main(["sweep", "--scenario", str(scenario_file), "--out", str(out),
               "--grid", "0.01,0.02"])
    assert rc == 0
    text = (out / "sweep.csv").read_text()
    assert text.count("\n") == 4  # header comment + columns + two rows


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("duration = -1\n")
    rc = main(["gen", "--scenario", str(bad), "--out", str(tmp_path)])
    assert rc == 1


def test_cli_seed_override(tmp_path, scenario_file):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    main(["gen", "--scenario", str(scenario_file), "--out", str(out1),
          "--seed", "77"])
    main(["gen", "--scenario", str(scenario_file), "--out", str(out2),
          "--seed", "77"])
    assert ((out1 / "quick_sensor.csv").read_bytes()
            == (out2 / "quick_sensor.csv").read_bytes())


def test_cli_divergence_exit_code(tmp_path, scenario_file, monkeypatch):
    from aiekf import cli
    from aiekf.core import FilterFaultError

    def boom(*a, **k):
        raise FilterFaultError("covariance trace 1e12")

    monkeypatch.setattr(cli, "replay", boom)
    rc = main(["run", "--scenario", str(scenario_file), "--variant", "IEKF",
               "--out", str(tmp_path)])
    assert rc == 2
