import json
import subprocess
import sys

import numpy as np
import pytest

from cmcflow.cli import UsageError, initial_surface, main, parse_samples
from cmcflow.hypersurface import PeriodicGrid, write_surface_csv
from cmcflow.spacetime import load_model


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_flow_example_converges_to_fixed_point(tmp_path, capsys):
    code, out = run(tmp_path, "flow", "--model", "paper_example.json", "--c", "2", "--u0", "const:1.1",
                    "--auto-barriers", "--grid", "32")
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("Converged")
    rec = json.loads((out / "flow_run.json").read_text())
    assert rec["verdict"] == "Converged" and rec["barrier"]["ok"]
    u = np.loadtxt(out / "surface.csv", delimiter=",", skiprows=1)[:, -1]
    assert np.allclose(u, 1.375, atol=1e-6)
    assert (out / "series.csv").read_text().startswith("step,s,ds,")
    run_rec = json.loads((out / "run_record.json").read_text())
    assert run_rec["command"] == "flow" and run_rec["seed"] == 42 and run_rec["model"]["fibers"]
    assert "wall_time_s" in run_rec


def test_check_energy_example(tmp_path):
    code, out = run(tmp_path, "check-energy", "--model", "paper_example.json", "--lambda", "0", "--t", "0.5:100:200")
    assert code == 0 and json.loads((out / "energy.json").read_text())["passed"]


def test_check_energy_failure_is_verification_exit(tmp_path):
    model = tmp_path / "quad.json"
    model.write_text(json.dumps({"fibers": [{"dim": 3, "period": 1.0, "law": {"type": "power", "p": 2}}]}))
    assert run(tmp_path, "check-energy", "--model", str(model), "--t", "1,2")[0] == 6


def test_boundary_example(tmp_path):
    code, out = run(tmp_path, "boundary", "--model", "all_sub_one.json")
    assert code == 0 and json.loads((out / "boundary.json").read_text())["boundary_shape"] == "point"


def test_ricci_table(tmp_path):
    code, out = run(tmp_path, "ricci", "--model", "paper_example", "--t", "0.5,1,2,10")
    rows = np.loadtxt(out / "ricci.csv", delimiter=",", skiprows=1)
    assert code == 0 and rows.shape == (4, 10)
    assert np.allclose(rows[:, 1], 1 / (16 * rows[:, 0] ** 2), rtol=1e-12)


def test_barrier_and_geodesics(tmp_path, capsys):
    assert run(tmp_path, "barrier", "--model", "paper_example", "--c", "2", "--t-ref", "1")[0] == 0
    printed = json.loads(capsys.readouterr().out.splitlines()[0])
    assert printed["t1"] == 1.0 and printed["bound"] == pytest.approx(1.0)
    code, out = run(tmp_path, "geodesics", "--model", "paper_example", "--start", "10,0,0,0",
                    "--momenta", "0,0,1", "--t-stop", "1", name="geo")
    data = np.loadtxt(out / "geodesic.csv", delimiter=",", skiprows=1)
    assert code == 0 and abs(data[-1, 3]) == pytest.approx(4 * (1 - 10 ** -0.25), abs=1e-9)
    code, out = run(tmp_path, "geodesics", "--model", "paper_example", "--start", "10,0,0,0",
                    "--random", "50", "--t-stop", "1", name="fan")
    assert code == 0 and np.loadtxt(out / "fan.csv", delimiter=",", skiprows=1).shape == (50, 6)


def test_horizon_and_eigen(tmp_path):
    code, out = run(tmp_path, "horizon", "--model", "paper_example", "--t1", "1", "--fan", "1")
    rep = json.loads((out / "horizon.json").read_text())
    assert code == 0 and rep["covers_axis"] == [True, True, False]
    g = PeriodicGrid.for_model(load_model("flrw_linear"), 32)
    surf = tmp_path / "flat.csv"
    write_surface_csv(surf, g, np.full(32, 2.0))
    code, out = run(tmp_path, "eigen", "--model", "flrw_linear", "--surface", str(surf), name="eig")
    assert code == 0
    assert json.loads((out / "eigen.json").read_text())["lambda1"] == pytest.approx(0.75, abs=1e-10)


def test_verify_estimates_roundtrip(tmp_path):
    code, out = run(tmp_path, "flow", "--model", "flrw_linear", "--c", "2", "--u0", "sine:1.2,0.1,2",
                    "--grid", "32", "--ds-max", "0.01", "--snapshot-every", "10", "--s-end", "0.5")
    assert code == 0
    code, ver = run(tmp_path, "verify-estimates", "--run", str(out / "flow_run.json"), name="ver")
    rep = json.loads((ver / "estimates.json").read_text())
    assert code == 0 and rep["ok"] and rep["violations"] == 0 and rep["coefficient_ok"]
    # a run without snapshots is a usage error
    code, out = run(tmp_path, "flow", "--model", "flrw_linear", "--c", "2", "--u0", "const:1.2",
                    "--grid", "8", "--s-end", "0.1", name="bare")
    assert run(tmp_path, "verify-estimates", "--run", str(out / "flow_run.json"), name="ver2")[0] == 1


@pytest.mark.parametrize("argv,code", [
    (["flow", "--model", "nope_not_a_model", "--c", "2", "--u0", "const:1"], 2),
    (["flow", "--model", "paper_example", "--c", "2", "--u0", "cube:1"], 1),
    (["flow", "--model", "paper_example", "--c", "2", "--u0", "sine:1.2,0.05,2", "--grid", "32",
      "--t1", "1.0", "--t2", "1.3"], 3),
    (["flow", "--model", "flrw_linear", "--c", "2", "--u0", "sine:1.2,2,3", "--grid", "64"], 4),  # |u'| > a
    (["flow", "--model", "paper_example", "--c", "2", "--u0", "const:1.2", "--grid", "8", "--max-steps", "3"], 5),
    (["barrier", "--model", "de_sitter", "--c", "3", "--t-ref", "0"], 2),
    (["boundary", "--model", "paper_example", "--bogus"], 1),
    (["frobnicate"], 1),
    ([], 1),
    (["geodesics", "--model", "paper_example", "--start", "10,0", "--momenta", "1,0,0", "--t-stop", "1"], 1),
])
def test_exit_codes(tmp_path, argv, code, capsys):
    assert main([*argv, "--out", str(tmp_path)] if argv and argv[0] != "frobnicate" else argv) == code


def test_malformed_model_names_the_key(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fibers": [{"dim": 1, "period": 1.0, "law": {"type": "power"}}]}))
    assert run(tmp_path, "boundary", "--model", str(bad))[0] == 2
    assert "'p'" in capsys.readouterr().err


def test_env_var_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv("CMCFLOW_OUT", str(target))
    code, out = run(tmp_path, "boundary", "--model", "paper_example")
    assert code == 0 and (target / "boundary.json").exists() and not out.exists()


def _outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "run_record.json"}


@pytest.mark.parametrize("argv", [
    ["flow", "--model", "paper_example", "--c", "2", "--u0", "sine:1.3,0.05,2", "--grid", "32"],
    ["geodesics", "--model", "paper_example", "--start", "10,0,0,0", "--random", "20", "--t-stop", "1"],
])
def test_outputs_are_byte_identical(tmp_path, argv):
    a = run(tmp_path, *argv, name="a")[1]
    b = run(tmp_path, *argv, name="b")[1]
    assert _outputs(a) == _outputs(b) and _outputs(a)


def test_seed_changes_random_fan(tmp_path):
    base = ["geodesics", "--model", "paper_example", "--start", "10,0,0,0", "--random", "5", "--t-stop", "1"]
    a = run(tmp_path, *base, name="a")[1]
    b = run(tmp_path, *base, "--seed", "7", name="b")[1]
    assert (a / "fan.csv").read_bytes() != (b / "fan.csv").read_bytes()


def test_argument_helpers(example):
    assert parse_samples("1:2:3").tolist() == [1.0, 1.5, 2.0]
    assert parse_samples("1,4").tolist() == [1.0, 4.0]
    for bad in ("1:2", "a:b:c", "1:2:0", "x,y"):
        with pytest.raises(UsageError):
            parse_samples(bad)
    S = initial_surface(example, "sine:2,0.5,2", (8,))
    assert S.u.max() == pytest.approx(2.5)
    with pytest.raises(UsageError):
        initial_surface(example, "const:1,2", (8,))


def test_console_script_runs(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cmcflow.cli", "boundary", "--model", "de_sitter",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "T³" in res.stdout
