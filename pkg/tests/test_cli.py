import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cauchyreg.cli import main


def run(*argv):
    return main(list(argv))


def test_solve_smoke(tmp_path):
    assert run("solve", "--problem", "example2", "--eps", "1e-4", "--seed", "42", "--out", str(tmp_path)) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["errors.csv", "manifest.json", "solution.csv"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [42]
    assert manifest["config"]["eps"] == [1e-4]
    assert manifest["config"]["m"] == 0.99
    for name in ("solution.csv", "errors.csv"):
        first = (tmp_path / name).read_text().splitlines()[0]
        assert first == f"# manifest sha256={manifest['config_sha256']} command=solve"


def test_solution_csv_layout(tmp_path):
    run("solve", "--problem", "example2", "--eps", "1e-3", "--grid-m", "4", "--grid-k", "6", "--out", str(tmp_path))
    header, *rows = csv.reader((tmp_path / "solution.csv").read_text().splitlines()[1:])
    assert len(header) == 8 and float(header[-1]) == np.pi
    assert len(rows) == 5 and all(len(r) == 8 for r in rows)
    assert [float(r[0]) for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", "--problem", "example1", "--eps", "1e-2", "--seed", "7", "--out", str(a)) == 0
    assert run("solve", "--config", str(a / "manifest.json"), "--out", str(b)) == 0
    for name in ("solution.csv", "errors.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_missing_field_names_it(tmp_path, capsys):
    assert run("solve", "--problem", "example2", "--out", str(tmp_path)) == 2
    assert "missing required field 'eps'" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "eps": 1e-3\n}\n')
    assert run("solve", "--config", str(cfg)) == 2
    assert "missing required field 'problem'" in capsys.readouterr().err


def test_invalid_value_is_line_anchored(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "problem": "example2",\n  "eps": 1e-3,\n  "grid_m": -4\n}\n')
    assert run("solve", "--config", str(cfg), "--out", str(tmp_path)) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:4:" in err and "grid_m" in err


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "problem": "example2",\n  "eps": ,\n}\n')
    assert run("solve", "--config", str(cfg)) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"problem": "example2", "eps": 1e-3, "colour": 1}')
    assert run("solve", "--config", str(cfg)) == 2
    assert "colour" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "example2", "eps": 1e-2, "grid_m": 4, "grid_k": 4}))
    out = tmp_path / "o"
    assert run("solve", "--config", str(cfg), "--eps", "1e-3", "--out", str(out)) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["eps"] == [1e-3]


def test_semilinear_problem_rejects_linear_kernel(tmp_path, capsys):
    assert run("solve", "--problem", "example2", "--eps", "1e-2", "--kernel", "truncation", "--out", str(tmp_path)) == 2
    assert "kernel" in capsys.readouterr().err


def test_linear_problem_accepts_kernel(tmp_path):
    assert run("solve", "--problem", "linear3", "--eps", "1e-2", "--kernel", "quasi-boundary", "--out", str(tmp_path)) == 0


def test_picard_mode(tmp_path):
    assert run("solve", "--problem", "example2", "--eps", "1e-2", "--mode", "picard", "--out", str(tmp_path)) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["mode"] == "picard"


def test_study_outputs_and_slopes(tmp_path):
    rc = run(
        "study", "--problem", "example2", "--eps", "1e-2,1e-3,1e-4", "--seeds", "0-2",
        "--grid-m", "10", "--grid-k", "10", "--out", str(tmp_path),
    )
    assert rc == 0
    lines = (tmp_path / "study.csv").read_text().splitlines()
    assert lines[1] == "epsilon,m,seed,t,E,R"
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 3 * 3 * 11
    summary = list(csv.DictReader((tmp_path / "summary.csv").read_text().splitlines()[1:]))
    for s in summary:
        t = float(s["t"])
        if t == 0:
            continue
        meds = []
        for e in (1e-2, 1e-3, 1e-4):
            vals = [float(r["E"]) for r in rows if float(r["epsilon"]) == e and float(r["t"]) == t]
            meds.append(np.median(vals))
        ref = np.polyfit(np.log10([1e-2, 1e-3, 1e-4]), np.log10(meds), 1)[0]
        assert float(s["slope"]) == pytest.approx(ref, abs=1e-9)
        assert float(s["theoretical_slope"]) == pytest.approx(0.99 * (1 - t), abs=1e-12)


def test_study_empty_eps(tmp_path):
    assert run("study", "--problem", "example2", "--eps", "", "--out", str(tmp_path)) == 2


def test_study_deterministic_under_threads(tmp_path, monkeypatch):
    args = ["study", "--problem", "example1", "--eps", "1e-2,1e-4", "--seeds", "0-3"]
    monkeypatch.setenv("CAUCHYREG_THREADS", "1")
    assert run(*args, "--out", str(tmp_path / "a")) == 0
    monkeypatch.setenv("CAUCHYREG_THREADS", "4")
    assert run(*args, "--out", str(tmp_path / "b")) == 0
    assert (tmp_path / "a" / "study.csv").read_bytes() == (tmp_path / "b" / "study.csv").read_bytes()


def test_verify_kernels_green(tmp_path, capsys):
    assert run("verify", "kernels", "--out", str(tmp_path)) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS A/" in out and "PASS D/" in out
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["passed"] and all(c["margin"] >= 0 for c in doc["checks"])


def test_verify_theorem2_case_iii():
    assert run("verify", "theorem2", "--case", "iii") == 0


def test_verify_failure_exit_code(monkeypatch):
    from cauchyreg import cli
    from cauchyreg.verification import CheckResult

    monkeypatch.setattr(cli, "run_suite", lambda s, c: [CheckResult("x", False, -1.0)])
    assert run("verify", "kernels") == 1


def test_unknown_suite_exits_2():
    with pytest.raises(SystemExit) as info:
        run("verify", "nonsense")
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cauchyreg", "solve", "--problem", "example2", "--eps", "1e-2",
         "--grid-m", "4", "--grid-k", "4", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
