import json
import os
import shutil
import subprocess
import sys

import pytest

from nvdac.cli import main
from nvdac.data import read_csv

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIX = os.path.join(ROOT, "fixtures")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_fit_fid_fixture(capsys):
    code, out, _ = run(capsys, "fit", os.path.join(FIX, "fid_0p6gpa.csv"), "--model", "damped_cosine")
    assert code == 0
    res = json.loads(out)
    assert 60e-6 <= res["params"]["decay"] <= 80e-6
    assert res["converged"] and res["seed"] == 0


def test_fit_odmr_fixture_four_centres(capsys):
    code, out, _ = run(capsys, "fit", os.path.join(FIX, "odmr_aligned_460g.csv"), "--model", "lorentzian:4",
                       "--seed", "5")
    assert code == 0
    res = json.loads(out)
    assert len(res["centers"]) == 4 and res["seed"] == 5
    assert res["centers"] == sorted(res["centers"])


def test_fit_errors(capsys, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "fit", str(empty), "--model", "exponential")[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,sigma\n1,1,0.1\n2,oops,0.1\n")
    code, _, err = run(capsys, "fit", str(bad), "--model", "exponential")
    assert code == 2 and "row 3" in err
    code, _, err = run(capsys, "fit", str(tmp_path / "missing.csv"), "--model", "exponential")
    assert code == 2 and "not found" in err
    code, _, err = run(capsys, "fit", os.path.join(FIX, "fid_0p6gpa.csv"), "--model", "gaussian")
    assert code == 2


def test_simulate_preset_writes_csv_and_svg(capsys, tmp_path):
    out = tmp_path / "nmr.csv"
    code, stdout, _ = run(capsys, "simulate", "--preset", "nmr_pulsed_ms0", "--pressure", "0.6",
                          "--out", str(out), "--seed", "4")
    assert code == 0
    assert "seed: 4" in stdout and "line centre" in stdout
    tr = read_csv(out)
    assert tr.mode == "nmr_pulsed_ms0" and len(tr) == 151
    svg = (tmp_path / "nmr.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "Hz" in svg


def test_simulate_rabi_reports_frequency(capsys, tmp_path):
    code, stdout, _ = run(capsys, "simulate", "--preset", "rabi_e", "--out", str(tmp_path / "r.csv"))
    assert code == 0
    line = next(s for s in stdout.splitlines() if s.startswith("Rabi frequency"))
    assert float(line.split("=")[1].split()[0]) == pytest.approx(62.0, rel=0.005)


def test_simulate_sequence_file_and_dsl_error(capsys, tmp_path):
    seq = tmp_path / "scan.seq"
    seq.write_text("laser 3e-6\nrf $f 25e3 pi\nlaser_read 3e-7\nsweep f 5.0e6 5.2e6 31\n")
    code, _, _ = run(capsys, "simulate", "--sequence", str(seq), "--out", str(tmp_path / "s.csv"))
    assert code == 0 and (tmp_path / "s.svg").exists()
    bad = tmp_path / "bad.seq"
    bad.write_text("laser 3e-6\nrf pi\nlaser_read 3e-7\n")
    code, _, err = run(capsys, "simulate", "--sequence", str(bad))
    assert code == 2 and "line 2, column" in err and "bad.seq" in err


def test_missing_config_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--preset", "rabi_e", "--config", str(tmp_path / "none.cfg"))
    assert code == 2 and "config not found" in err


def test_validate_config(capsys, tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text("noise.t1e = 254e-6\nrng_seed = 9\n")
    code, out, _ = run(capsys, "validate-config", str(good))
    assert code == 0 and "seed: 9" in out
    bad = tmp_path / "bad.cfg"
    bad.write_text("noise.t2n_star = -5\n")
    code, _, err = run(capsys, "validate-config", str(bad))
    assert code == 2 and "noise.t2n_star" in err


def test_pressure_series_guards(capsys, tmp_path):
    code, _, err = run(capsys, "pressure-series", "--pressures", "0.6", "--out", str(tmp_path))
    assert code == 2 and "3" in err
    code, _, err = run(capsys, "pressure-series", "--pressures", "0.6,6.9,25", "--out", str(tmp_path))
    assert code == 2 and "25" in err


def test_reproduce_unknown_and_4c(capsys, tmp_path):
    code, _, err = run(capsys, "reproduce", "9x")
    assert code == 2 and "2b" in err and "4c" in err
    code, out, _ = run(capsys, "reproduce", "4c", "--out", str(tmp_path))
    assert code == 0
    assert "PASS" in out and "FAIL" not in out
    assert (tmp_path / "fig4c.svg").exists() and (tmp_path / "fig4c.csv").exists()


@pytest.mark.skipif(shutil.which("nvdac") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["nvdac", "reproduce", "9x"], capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "nvdac.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "reproduce" in r.stdout
