import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from jumpbvp.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MASSLESS = {"grid": {"L": 32.0, "N": 4096}, "d": 1, "mu": [0.0],
            "experiment": {"t": 1.0, "band": 8.0, "kappas": [16, 64, 256],
                           "packet": {"center": 0.0, "width": 1.0}}}


def _cfg(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


def test_validate(tmp_path, capsys):
    assert main(["validate", str(_cfg(tmp_path, MASSLESS))]) == 0
    bad = dict(MASSLESS, d=2)
    assert main(["validate", str(_cfg(tmp_path, bad, "bad.yaml"))]) == 2
    assert "mu" in capsys.readouterr().err


def test_unknown_suite_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["run", str(_cfg(tmp_path, MASSLESS)), "--suite", "prop9"])
    assert e.value.code == 2


def test_massless_prop3_passes(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(_cfg(tmp_path, MASSLESS)), "--suite", "prop3", "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict_prop3.json").read_text())
    assert verdict["passed"]
    lines = [l for l in (out / "prop3.csv").read_text().splitlines() if not l.startswith("#")][1:]
    assert all(float(l.split(",")[1]) <= 1e-11 for l in lines)


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("JUMPBVP_OUT", str(tmp_path / "envout"))
    assert main(["run", str(_cfg(tmp_path, MASSLESS)), "--suite", "prop3"]) == 0
    assert (tmp_path / "envout" / "prop3.csv").is_file()


def test_numerical_failure_exit_code(tmp_path):
    # the massless projector below Nyquist does not converge to the sharp mask
    doc = dict(MASSLESS, experiment=dict(MASSLESS["experiment"], kappas=[16, 32, 64]))
    doc["experiment"]["t"] = 1.0
    out = tmp_path / "out"
    code = main(["run", str(_cfg(tmp_path, doc)), "--suite", "projector", "--out", str(out)])
    verdict = json.loads((out / "verdict_projector.json").read_text())
    assert code == (0 if verdict["passed"] else 1)


def test_upstream_error_record(tmp_path):
    doc = dict(MASSLESS, experiment=dict(MASSLESS["experiment"], packet={"center": 31.0, "width": 1.0}))
    out = tmp_path / "out"
    assert main(["run", str(_cfg(tmp_path, doc)), "--suite", "prop2", "--out", str(out)]) == 1
    rec = json.loads((out / "error_prop2.json").read_text())
    assert rec["error"] == "SpectralError" and "seam" in rec["message"]


def test_prop1_suite_rows_and_determinism(tmp_path):
    cfg = CONFIGS / "jump_d2.yaml"
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--suite", "prop1", "--out", str(a)]) == 0
    assert main(["run", str(cfg), "--suite", "prop1", "--out", str(b), "--threads", "3"]) == 0
    assert (a / "prop1.csv").read_bytes() == (b / "prop1.csv").read_bytes()
    header = [l for l in (a / "prop1.csv").read_text().splitlines() if not l.startswith("#")][0]
    assert header.startswith("t,mc,stderr,quadrature,field_norm")


def test_plotdata(tmp_path):
    out = tmp_path / "out"
    main(["run", str(_cfg(tmp_path, MASSLESS)), "--suite", "prop3", "--out", str(out)])
    assert main(["plotdata", str(out / "prop3.csv"), "--kind", "error_vs_kappa"]) == 0
    assert (out / "prop3.error_vs_kappa.dat").is_file()
    assert main(["plotdata", str(out / "prop3.csv"), "--kind", "residual_vs_dt"]) == 2
    assert main(["plotdata", str(out / "missing.csv"), "--kind", "error_vs_kappa"]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "jumpbvp", "validate", str(_cfg(tmp_path, MASSLESS))],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("ok:")


def test_example_configs_validate():
    for p in sorted(CONFIGS.glob("*.yaml")):
        assert main(["validate", str(p)]) == 0
