import json
import math
from pathlib import Path

import numpy as np
import pytest

from modwell.cli import (ConfigurationError, build_config, main,
                         parse_config_text, run)

GOOD = """\
# calibrated default triple
u0 = -146.0
theta_l_deg = 74.0
bx = 107.514
grid_n = 256
seed = 7
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_and_defaults():
    raw = parse_config_text(GOOD)
    cfg = build_config(raw)
    assert cfg.params.u0 == -146.0
    assert cfg.params.f_spin == 4
    assert cfg.experiment == "spectrum"
    assert cfg.seed == 7


def test_unknown_key_rejected_with_line_number():
    with pytest.raises(ConfigurationError) as err:
        parse_config_text(GOOD + "banana = 3\n")
    assert "banana" in str(err.value)
    assert "line 7" in str(err.value)


def test_missing_required_key_named(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "u0 = -146.0\ntheta_l_deg = 74.0\n")
    code = main(["--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "bx" in capsys.readouterr().err


def test_bad_value_rejected():
    with pytest.raises(ConfigurationError):
        build_config(parse_config_text(GOOD.replace("grid_n = 256",
                                                    "grid_n = 100")))
    with pytest.raises(ConfigurationError):
        parse_config_text("u0 : -146\n")


def test_spectrum_run_emits_csv_and_manifest(tmp_path):
    cfg = build_config(parse_config_text(GOOD),
                       {"out_dir": str(tmp_path / "out")})
    manifest_path = run(cfg)
    manifest = json.loads(manifest_path.read_text())
    assert "spectrum.csv" in manifest["files"]
    assert manifest["versions"]["modwell"]
    lines = (tmp_path / "out" / "spectrum.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "zeta"
    assert header[1:10] == [f"V_{i}" for i in range(1, 10)]
    assert header[10] == "Phi_1"
    assert len(lines) == 1 + 256
    # the lowest band is a double well: barrier value within the window
    data = np.loadtxt(lines[1:], delimiter=",")
    v1 = data[:, 1]
    i0 = np.argmin(np.abs(data[:, 0]))
    assert -192.0 <= v1[i0] <= -186.0
    assert v1.min() < v1[i0] - 5.0


def test_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "out"
    cfg = build_config(parse_config_text(GOOD), {"out_dir": str(out)})
    run(cfg)
    first = (out / "spectrum.csv").read_bytes()
    manifest = json.loads(run(cfg).read_text())
    assert (out / "spectrum.csv").read_bytes() == first
    assert manifest["reproduced_previous"] is True


def test_resonances_run(tmp_path):
    cfg = build_config(parse_config_text(GOOD),
                       {"out_dir": str(tmp_path / "o"),
                        "experiment": "resonances"})
    manifest = json.loads(run(cfg).read_text())
    assert "resonances.csv" in manifest["files"]
    lines = (tmp_path / "o" / "resonances.csv").read_text().splitlines()
    assert lines[0] == "variable,value,ratio"
    assert len(lines) >= 2                  # the 4:1 alpha locus exists


def test_cli_main_spectrum(tmp_path, capsys):
    cfg = write_cfg(tmp_path, GOOD)
    code = main(["--config", str(cfg), "--experiment", "spectrum",
                 "--out", str(tmp_path / "m"), "--seed", "3"])
    assert code == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith("manifest.json")
    manifest = json.loads(Path(out).read_text())
    assert manifest["seed"] == 3


def test_cli_missing_config_file(tmp_path, capsys):
    code = main(["--config", str(tmp_path / "nope.cfg")])
    assert code == 2


def test_cli_numerical_error_exit_code(tmp_path, capsys):
    # an energy below the global potential minimum trips a numerical error
    cfg = write_cfg(tmp_path, GOOD + "section_energy = -9999\n"
                                     "tau_max = 1.0\nsection_seeds = 2\n")
    code = main(["--config", str(cfg), "--experiment", "poincare",
                 "--out", str(tmp_path / "p")])
    assert code == 3
    assert "numerical error" in capsys.readouterr().err


def test_calibrate_verify_roundtrip(defaults):
    from modwell.calibrate import verify_triple

    res = verify_triple(defaults)
    assert -192.0 <= res.barrier <= -186.0
    assert res.energy_offset > 0.0
    assert res.splitting_exact < res.splitting_bo_gauge
    assert 1.5 <= res.splitting_bo_gauge / res.splitting_exact <= 3.0


def test_calibrate_collapsed_range_returns_known_triple():
    from modwell.calibrate import calibrate

    res = calibrate(theta_range=(74.0, 74.0), u0_range=(-200.0, -100.0),
                    barrier_targets=(-188.0,), theta_steps=1)
    assert abs(math.degrees(res.params.theta_l) - 74.0) < 1e-9
    assert abs(res.params.u0 - (-146.0)) < 2.0
    assert abs(res.params.bx - 107.514) < 1.0


def test_calibrate_infeasible_reports_failure():
    from modwell.calibrate import calibrate
    from modwell.errors import CalibrationError

    with pytest.raises(CalibrationError):
        calibrate(theta_range=(40.0, 42.0), u0_range=(-30.0, -20.0),
                  barrier_targets=(-1.0,), theta_steps=2)
