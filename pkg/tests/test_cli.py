import csv
import hashlib
import json
from importlib import resources

import pytest

from ricciheat import cli
from ricciheat.heat import read_binary, solve_conjugate_forward
from ricciheat.geometry import FlatEuclidean, build_complex
from ricciheat.suites import Check, SuiteResult

ORACLE = str(resources.files("ricciheat").joinpath("configs", "oracle_flat.toml"))


def _body(path):
    return path.read_text().splitlines()[1:]


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "a"
    assert cli.main(["run", "--config", ORACLE, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "[PASS] (2)" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert list(manifest) == sorted(manifest)
    assert manifest["passed"] is True
    assert set(manifest["versions"]) >= {"numpy", "scipy", "python", "ricciheat"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    with open(out / "oracle.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    floats = [c for r in rows[1:] for c in r if "." in c and "e" not in c]
    assert floats and all(float(c) == float(f"{float(c):.17g}") for c in floats)


def test_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", ORACLE, "--out", str(a)]) == 0
    assert cli.main(["run", "--config", ORACLE, "--out", str(b)]) == 0
    assert _body(a / "oracle.csv") == _body(b / "oracle.csv")
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    for m in (ma, mb):
        m.pop("started"), m.pop("wall_clock_s")
    assert ma == mb


def test_default_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["run", "--config", ORACLE]) == 0
    assert (tmp_path / "oracle_flat" / "manifest.json").exists()


def test_run_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(open(ORACLE).read().replace("resolution", "resolutoin"))
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "line" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_set_and_seed_overrides(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", ORACLE, "--out", str(out), "--seed", "5",
                     "--set", "suite.rel_tol=0.03"]) == 0
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert cfg["seed"] == 5 and cfg["suite"]["rel_tol"] == 0.03


def test_tolerance_failure_exit_status(tmp_path, capsys):
    out = tmp_path / "f"
    code = cli.main(["run", "--config", ORACLE, "--out", str(out), "--tol-scale", "1e-6"])
    assert code == 1
    text = capsys.readouterr().out
    assert "[FAIL]" in text and "measured" in text and "required" in text
    assert json.loads((out / "manifest.json").read_text())["passed"] is False


def test_verify_unknown_suite(capsys):
    assert cli.main(["verify", "nonsense"]) == 2


def test_verify_coarse_green_reports_failures(tmp_path, capsys):
    code = cli.main(["verify", "green", "--out", str(tmp_path), "--set", "geometry.resolution=3"])
    text = capsys.readouterr().out
    assert code == 1
    assert "[FAIL]" in text and "measured" in text and "required" in text
    assert "criterion matrix" in text and "FAILURES" in text
    assert "maxprin" not in text


def test_verify_groups_configs():
    assert cli.SUITES["maxprin"] == ["maxprin_flat", "maxprin_bump", "maxprin_sphere"]
    assert set(cli.SUITES["all"]) == {n for k, v in cli.SUITES.items() if k != "all" for n in v}


def test_report_sorts_tables(tmp_path, capsys):
    d = tmp_path / "r"
    d.mkdir()
    (d / "convergence.csv").write_text("k,d_k,gap_k,mass_err_k\n3,0.1,0.2,0\n1,0.3,0.4,0\n2,0.2,0.3,0\n")
    (d / "manifest.json").write_text(json.dumps({"kind": "green", "files": {"convergence.csv": ""}}))
    assert cli.main(["report", str(d)]) == 0
    lines = [ln.split() for ln in capsys.readouterr().out.splitlines()]
    ks = [ln[0] for ln in lines if ln and ln[0] in {"1", "2", "3"}]
    assert ks == ["1", "2", "3"]
    dat = (d / "convergence.dat").read_text().splitlines()
    assert dat[0].startswith("#") and dat[1].split()[0] == "1"


def test_report_missing_or_corrupt_manifest(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path / "none")]) == 2
    (tmp_path / "manifest.json").write_text("{not json")
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "manifest" in capsys.readouterr().err


def test_failing_fields_are_dumped(tmp_path):
    cx = build_complex(FlatEuclidean(2, 1.0, 4), 1.0, [0.0, 0.5, 1.0])
    fld = solve_conjugate_forward(cx, (0, 0.0))
    res = SuiteResult("x", [Check("c", 4, 1.0, "<= 0", False)], dumps={"seed_3.bin": fld})
    cfg = cli.bundled_config("oracle_flat")
    manifest = cli.write_outputs(cfg, res, tmp_path, 0.1)
    assert "seed_3.bin" in manifest["files"]
    times, values = read_binary(tmp_path / "seed_3.bin")
    assert values.shape == fld.values.shape


def test_module_entry_point():
    import runpy
    with pytest.raises(SystemExit) as exc:
        runpy.run_module("ricciheat", run_name="__main__", alter_sys=True)
    assert exc.value.code == 2
