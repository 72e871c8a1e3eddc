import json
import subprocess
import sys

import numpy as np
import pytest

from moment_forge.cli import main
from moment_forge.state import StateVector


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_derive_json(capsys):
    code, out, _ = run_cli(capsys, "derive", "--model", "HME1D", "-M", "3", "--state", "maxwellian:1,0,1", "--tau", "1")
    assert code == 0
    data = json.loads(out)
    assert np.array(data["B"]).shape == (4, 4)
    assert len(data["A"]) == 1


def test_derive_json_is_byte_identical(capsys, tmp_path):
    argv = ["derive", "--model", "HR13", "-M", "3", "-D", "3", "--state", "sample:3,0.5"]
    assert main(argv + ["-o", str(tmp_path / "a.json")]) == 0
    assert main(argv + ["-o", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_derive_csv_directory(tmp_path):
    assert main(["derive", "--model", "HMEND", "-M", "3", "-D", "2", "--state", "maxwellian:1,0,0,1", "--format", "csv", "-o", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"B.csv", "A1.csv", "A2.csv", "source.csv", "ordering.csv", "metadata.json"} <= names
    B = np.loadtxt(tmp_path / "B.csv", delimiter=",")
    assert B.shape == (10, 10)


def test_derive_from_state_file(tmp_path, capsys):
    path = tmp_path / "state.json"
    path.write_text(StateVector(1.0, [0.2], theta=1.1, f={(3,): 0.05}).to_json())
    code, out, _ = run_cli(capsys, "derive", "--state", f"file:{path}")
    assert code == 0 and json.loads(out)["state"]["rho"] == 1.0


@pytest.mark.parametrize(
    "argv",
    [
        ["derive", "--model", "Nope"],
        ["derive", "--state", "maxwellian:1,0"],
        ["derive", "--state", "maxwellian:1,0,-1"],
        ["derive", "--state", "bogus:1"],
        ["derive", "--format", "csv"],
        ["derive", "-o", "/nonexistent/dir/out.json"],
        ["scan", "--trials", "0"],
        ["spectrum", "--direction", "1,0"],
        ["simulate", "--model", "HMEND"],
        ["simulate", "--output-dir", "/nonexistent/dir"],
        [],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run_cli(capsys, *argv)
    assert code == 2 and "error" in err


def test_bad_thread_variable(monkeypatch, capsys):
    monkeypatch.setenv("MOMENT_FORGE_THREADS", "many")
    assert run_cli(capsys, "validate")[0] == 2


def test_spectrum_verdicts(capsys):
    code, out, _ = run_cli(capsys, "spectrum", "--model", "HME1D", "-M", "3")
    assert code == 0 and json.loads(out)["verdict"] == "hyperbolic"
    code, out, _ = run_cli(capsys, "spectrum", "--model", "Grad1D", "-M", "3", "--state", 'json:{"rho":1,"u":[0],"theta":1,"f":{"3":1.0}}')
    assert code == 1 and json.loads(out)["verdict"] != "hyperbolic"


def test_spectrum_csv(capsys):
    code, out, _ = run_cli(capsys, "spectrum", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "re,im" and len(out.splitlines()) == 5


def test_scan_exit_codes(capsys):
    code, out, _ = run_cli(capsys, "scan", "--model", "QBMEND", "-M", "3", "-D", "2", "--trials", "30")
    assert code == 0 and json.loads(out)["hyperbolic_fraction"] == 1.0
    code, out, _ = run_cli(capsys, "scan", "--model", "Grad1D", "-M", "3", "--trials", "200")
    data = json.loads(out)
    assert code == 1 and data["witnesses"]


def test_invariance(capsys):
    code, out, _ = run_cli(capsys, "invariance", "--model", "HMEND", "-M", "3", "-D", "3")
    assert code == 0 and json.loads(out)["rotation_error"] < 1e-9


def test_validate(capsys):
    code, out, _ = run_cli(capsys, "validate", "--model", "QBMEND", "-M", "3", "-D", "2")
    assert code == 0 and json.loads(out)["passed"] is True


def test_simulate_writes_outputs(tmp_path):
    argv = ["simulate", "--model", "HME1D", "-M", "3", "--ncells", "20", "--t-end", "0.02", "--output-dir", str(tmp_path)]
    assert main(argv) == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["all_hyperbolic"] and not diag["aborted"]
    assert (tmp_path / "snapshots.csv").read_text().startswith("t,x,rho,u,theta,f_3")


def test_simulate_grad_failure(tmp_path, capsys):
    argv = ["simulate", "--model", "Grad1D", "-M", "3", "--ic", "perturbed", "--ncells", "50", "--output-dir", str(tmp_path)]
    code, _, err = run_cli(capsys, *argv)
    assert code == 1 and "aborted" in err
    assert json.loads((tmp_path / "diagnostics.json").read_text())["failed_cell"] is not None


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "moment_forge", "derive", "-M", "2"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["model"] == "HME1D"
