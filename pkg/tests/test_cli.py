import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bistress.cli import main, read_config
from bistress.verify import RunReport, run


def call(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# ------------------------------------------------------------------ list
def test_list_text(capsys):
    code, out, _ = call(capsys, "list")
    assert code == 0
    assert "hypersphere" in out and "clifford_torus" in out
    block = out.split("\nhypersphere\n")[1].split("\n")
    assert any(line.strip().startswith("param a: real in (0,1]") for line in block[:5])


def test_list_json(capsys):
    code, out, _ = call(capsys, "list", "--format", "json")
    data = json.loads(out)
    entries = {e["name"]: e for e in data["entries"]}
    assert "(0,1]" in entries["hypersphere"]["parameters"]["a"]
    assert "proper_biharmonic" in entries["hypersphere"]["expected"]
    assert all(entries[n]["expected"][t] for n in entries for t in entries[n]["expected"])


# ------------------------------------------------------------------ eval
def test_eval_cubic_tension(capsys):
    code, out, _ = call(capsys, "eval", "--entry", "cubic_curve", "--point", "1", "--what", "tau", "--format", "json")
    assert code == 0
    d = json.loads(out)
    np.testing.assert_allclose(d["components"], [6.0, -3.0, 12.0], rtol=1e-14)


def test_eval_circle_s2(capsys):
    code, out, _ = call(capsys, "eval", "--entry", "circle_arclength", "--param", "r=2", "--point", "0.5",
                        "--what", "S2", "--format", "json")
    d = json.loads(out)
    # |tau|^2 = 1/r^2
    assert d["components"][0][0] == pytest.approx(1.5 / 4, rel=1e-12)


def test_eval_biharmonic_sphere(capsys):
    code, out, _ = call(capsys, "eval", "--entry", "hypersphere", "--param", "m=3", "--param", f"a={1 / math.sqrt(2)!r}",
                        "--point", "1.2,1.0,0.5", "--what", "tau2", "--format", "json")
    assert code == 0 and json.loads(out)["norm"] < 1e-8


@pytest.mark.parametrize("what", ["divS2", "nablaS2"])
def test_eval_text_output(capsys, what):
    code, out, _ = call(capsys, "eval", "--entry", "hypersphere", "--point", "1.2,1.0,0.5", "--what", what)
    assert code == 0 and "norm" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["eval", "--entry", "hypersphere", "--point", "9,1,1"],
        ["eval", "--entry", "hypersphere", "--point", "1,1"],
        ["eval", "--entry", "hypersphere", "--point", "a,b,c"],
        ["eval", "--entry", "hypersphere", "--point", "nan,1,1"],
        ["eval", "--entry", "nope", "--point", "1"],
        ["eval", "--entry", "hypersphere", "--param", "a=2", "--point", "1,1,1"],
        ["eval", "--entry", "hypersphere", "--param", "a", "--point", "1,1,1"],
        ["eval", "--point", "1"],
    ],
)
def test_eval_usage_errors(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 2 and "error" in err


def test_conformal_a_outside_domain(capsys):
    code, _, _ = call(capsys, "eval", "--entry", "conformal_identity_a", "--param", "slope=0.5", "--point=-3,0,0")
    assert code == 2


# ---------------------------------------------------------------- verify
def test_verify_divergence_single_entry(capsys):
    code, out, _ = call(capsys, "verify", "--suite", "divergence", "--entry", "cubic_curve")
    assert code == 0 and "4 pass" in out


def test_verify_json_round_trip(capsys):
    code, out, _ = call(capsys, "verify", "--suite", "divergence", "--entry", "warped_projection", "--format", "json")
    d = json.loads(out)
    rep = RunReport.from_dict(d)
    assert rep.to_dict() == d
    assert RunReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep
    assert d["schema_version"] == 1
    assert all(r["citation"] for r in d["records"])
    for r in d["records"]:
        assert (r["verdict"] == "pass") == (r["residual"] < r["tolerance"])


def test_report_schema_version_checked():
    rep = run({"suite": "divergence", "entries": ["cubic_curve"]})
    d = rep.to_dict()
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        RunReport.from_dict(d)


def _strip_time(d):
    d = dict(d)
    d.pop("wall_time")
    return d


def test_verify_is_deterministic_and_worker_independent():
    cfg = {"suite": "classification", "entries": ["hypersphere", "cubic_curve"], "seed": 5}
    a = run(cfg).to_dict()
    b = run(cfg).to_dict()
    c = run(dict(cfg, workers=2)).to_dict()
    assert _strip_time(a) == _strip_time(b)
    c["config"]["workers"] = 1
    assert _strip_time(a) == _strip_time(c)


def test_seed_changes_sample_points():
    a = run({"suite": "divergence", "entries": ["hypersphere"], "seed": 1}).to_dict()
    b = run({"suite": "divergence", "entries": ["hypersphere"], "seed": 2}).to_dict()
    assert [r["residual"] for r in a["records"]] != [r["residual"] for r in b["records"]]


def test_crafted_failure_exit_code(capsys):
    code, out, _ = call(capsys, "verify", "--suite", "divergence", "--entry", "hypersphere", "--param", "a=0.6",
                        "--tol", "identity=1e-30")
    assert code == 1 and "FAIL" in out


def test_crafted_inconclusive_exit_code(capsys):
    code, out, _ = call(capsys, "verify", "--suite", "classification", "--entry", "hypersphere",
                        "--tol", "zero=1e-30")
    assert code == 3 and "INCONCLUSIVE" in out


def test_failure_takes_precedence_over_inconclusive(capsys):
    code, _, _ = call(capsys, "verify", "--suite", "classification", "--entry", "hypersphere",
                      "--tol", "zero=1e-30", "--tol", "band=1e-29")
    assert code == 1


def test_variation_suite_on_small_sphere(capsys):
    code, out, _ = call(capsys, "verify", "--suite", "variation", "--entry", "hypersphere", "--param", "m=2",
                        "--param", "a=0.8", "--omegas", "2", "--resolution", "32")
    assert code == 0
    assert "variation/hypersphere[a=0.8,m=2]/omega1" in out


@pytest.mark.parametrize("m,biharmonic", [(3, False), (4, True), (5, False)])
def test_classification_conformal_b(capsys, m, biharmonic):
    code, out, _ = call(capsys, "verify", "--suite", "classification", "--entry", "conformal_identity_b",
                        "--param", f"m={m}", "--format", "json")
    assert code == 0
    ids = [r["id"] for r in json.loads(out)["records"]]
    name = f"classify/conformal_identity_b[m={m}]/"
    assert (name + "biharmonic" in ids) == biharmonic
    assert (name + "not_biharmonic" in ids) == (not biharmonic)


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--resolution", "4"],
        ["verify", "--tol", "bogus=1"],
        ["verify", "--tol", "divergence=-1"],
        ["verify", "--tol", "divergence=abc"],
        ["verify", "--param", "a=0.5"],
        ["verify", "--entry", "nope"],
        ["verify", "--entry", "hypersphere", "--param", "a=7"],
        ["verify", "--config", "/nonexistent/file.cfg"],
        ["verify", "--seed", "-1"],
    ],
)
def test_verify_usage_errors(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 2 and "error" in err


def test_bad_suite_is_argparse_error():
    with pytest.raises(SystemExit) as info:
        main(["verify", "--suite", "nope"])
    assert info.value.code == 2


# ---------------------------------------------------------------- config
def test_flat_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# divergence check of one map\n"
        "suite = divergence\n"
        "entry = hypersphere\n"
        "param.m = 2\n"
        "param.a = 0.6\n"
        "tol.divergence = 1e-7\n"
        "seed = 3\n"
        "samples = 20\n"
        "format = json\n"
    )
    code, out, _ = call(capsys, "verify", "--config", str(cfg))
    d = json.loads(out)
    assert code == 0
    assert d["config"]["entries"] == [{"name": "hypersphere", "params": {"m": 2, "a": 0.6}}]
    assert d["config"]["samples"] == 20 and d["config"]["seed"] == 3
    # flags override file values
    code, out, _ = call(capsys, "verify", "--config", str(cfg), "--seed", "4")
    assert json.loads(out)["config"]["seed"] == 4


def test_json_config(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "suite": "divergence",
        "entries": [{"name": "cubic_curve", "params": {"n": 2, "a": [1, 2]}}, "circle_arclength"],
        "tolerances": {"identity": 1e-9},
    }))
    code, out, _ = call(capsys, "verify", "--config", str(cfg))
    assert code == 0 and "cubic_curve[a=1:2,n=2]" in out and "circle_arclength" in out


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", "suite divergence\n", "colour = red\n"])
def test_bad_config_files(tmp_path, capsys, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = call(capsys, "verify", "--config", str(cfg))
    assert code == 2


def test_read_config_flat_parsing(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("resolution = 16  # nodes per axis\nentry = cubic_curve\nentry = hypersphere\n")
    assert read_config(str(cfg)) == {"resolution": 16, "entries": ["cubic_curve", "hypersphere"]}


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "bistress.cli", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and "hypersphere" in out.stdout


def test_config_long_key_names(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("mesh_resolution = 12\noutput_format = json\n")
    assert read_config(str(cfg)) == {"resolution": 12, "format": "json"}
    cfg = tmp_path / "b.json"
    cfg.write_text('{"mesh_resolution": 12, "resolution": 10}')
    with pytest.raises(Exception):
        read_config(str(cfg))
