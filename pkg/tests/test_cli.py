import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

import hho_elasticity
from hho_elasticity import cli
from hho_elasticity.mesh import build_initial_mesh, write_mesh
from hho_elasticity.verification import CheckResult

COLUMNS = ["level", "ndof", "eta", "err_sigma", "err_l2", "eff_index", "rate_eta", "rate_err"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_schema(tmp_path, capsys):
    out = tmp_path / "res"
    code = cli.main(["run", "--benchmark", "lshape", "--k", "2", "--mode", "adaptive", "--nu", "0.4999",
                     "--max-ndof", "3000", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "history.csv")
    assert rows[0] == COLUMNS
    assert len(rows) > 2
    for i, row in enumerate(rows[1:]):
        assert int(row[0]) == i and int(row[1]) <= 3000
        assert all(row[c] != "" for c in range(6))
    assert rows[1][6] == "" and rows[2][6] != ""
    payload = json.loads((out / "history.json").read_text())
    assert payload["version"] == hho_elasticity.__version__
    assert payload["config"]["k"] == 2 and payload["config"]["nu"] == 0.4999
    assert [r["ndof"] for r in payload["rows"]] == [int(r[1]) for r in rows[1:]]
    assert float(rows[-1][2]) == pytest.approx(payload["rows"][-1]["eta"], rel=1e-11)
    assert "level" in capsys.readouterr().out


def test_output_is_byte_stable(tmp_path):
    args = ["run", "--benchmark", "cooks", "--mode", "uniform", "--k", "1", "--levels", "3", "--svg", "--quiet"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("history.csv", "history.json", "convergence.svg", "mesh.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    root = ET.parse(tmp_path / "a" / "convergence.svg").getroot()
    assert root.tag.endswith("svg") and root.get("version") == "1.1"
    rows = read_csv(tmp_path / "a" / "history.csv")
    assert rows[1][3] == ""  # no exact solution for the membrane


def test_run_on_mesh_file(tmp_path):
    path = tmp_path / "square.txt"
    write_mesh(build_initial_mesh("unit_square"), path)
    out = tmp_path / "o"
    assert cli.main(["run", f"--benchmark=mesh={path}", "--k", "1", "--levels", "2", "--lambda", "1",
                     "--mu", "1", "--out", str(out), "--quiet", "--save-mesh"]) == 0
    assert (out / "final_mesh.txt").exists()
    assert read_csv(out / "history.csv")[1][3] != ""


@pytest.mark.parametrize("argv", [
    ["run", "--benchmark", "disk"],
    ["run", "--k", "0"],
    ["run", "--variant", "nitsche"],
    ["run", "--lambda", "1"],
    ["run", "--lambda", "1", "--mu", "1", "--nu", "0.3"],
    ["run", "--nu", "0.5"],
    ["run", "--theta", "1.5"],
    ["run", "--unknown-flag"],
    ["verify", "--suite", "everything"],
    ["mesh-info", "--refine", "-1"],
    [],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert cli.main(argv + (["--out", str(tmp_path)] if argv[:1] == ["run"] else [])) == 2


def test_missing_mesh_file_exits_2(tmp_path):
    assert cli.main(["mesh-info", "--benchmark", f"mesh={tmp_path / 'nope.txt'}"]) == 2


def test_unwritable_output_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--levels", "1", "--out", str(blocker / "sub"), "--quiet"]) == 2


def test_verify_passes(capsys):
    assert cli.main(["verify", "--suite", "operators", "--k", "3"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_verify_reports_failures(monkeypatch, capsys):
    import hho_elasticity.verification as ver

    monkeypatch.setattr(ver, "run_suite", lambda name, k: ([CheckResult("broken", 1.0, 0.1, False)], 0.0))
    assert cli.main(["verify"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_mesh_info(capsys):
    assert cli.main(["mesh-info", "--benchmark", "lshape", "--refine", "2"]) == 0
    out = capsys.readouterr().out
    assert "elements         96" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hho_elasticity", "mesh-info", "--benchmark", "cooks"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "neumann_sides" in res.stdout
