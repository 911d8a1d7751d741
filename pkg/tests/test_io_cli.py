import io
import json
import subprocess
import sys

import numpy as np
import pytest

from bwot import checks
from bwot.checks import Check
from bwot.cli import RunConfig, main, run
from bwot.errors import InputError
from bwot.io import dumps, read_matrix, read_measure, write_measure
from bwot.transport import DiscreteMeasure


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def cli_json(capsys, *argv):
    code, out = cli(capsys, *argv)
    return code, json.loads(out)


def write_cloud(path, points, weights=None):
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    w = np.full(len(pts), 1 / len(pts)) if weights is None else np.asarray(weights)
    write_measure(path, DiscreteMeasure(pts, w))
    return str(path)


# io ----------------------------------------------------------------------------


def test_measure_round_trip_is_exact(tmp_path):
    r = np.random.default_rng(0)
    mu = DiscreteMeasure(r.normal(size=(7, 3)), r.dirichlet(np.ones(7)))
    write_measure(tmp_path / "m.csv", mu)
    back = read_measure(tmp_path / "m.csv")
    assert np.abs(back.points - mu.points).max() <= 1e-15
    assert np.abs(back.weights - mu.weights).max() <= 1e-15


def test_json_measures_and_bad_files(tmp_path):
    (tmp_path / "m.json").write_text('{"points": [[0.0], [1.0]], "weights": [0.25, 0.75]}')
    assert read_measure(tmp_path / "m.json").weights.tolist() == [0.25, 0.75]
    (tmp_path / "bad.csv").write_text("w,y1\n1.0,0.0\n")
    (tmp_path / "sum.csv").write_text("w,x1\n0.5,0.0\n0.4,1.0\n")
    (tmp_path / "short.csv").write_text("a,b\n1.0\n")
    for name in ("bad.csv", "sum.csv", "missing.csv"):
        with pytest.raises(InputError):
            read_measure(tmp_path / name)
    with pytest.raises(InputError):
        read_matrix(tmp_path / "short.csv")


def test_dumps_is_deterministic_and_keeps_float_types():
    text = dumps({"b": 0.0, "a": [1, 2.5, None, True], "c": np.float64(1e-20), "d": np.int64(3)})
    assert text == dumps({"b": 0.0, "a": [1, 2.5, None, True], "c": np.float64(1e-20), "d": np.int64(3)})
    data = json.loads(text)
    assert data == {"b": 0.0, "a": [1, 2.5, None, True], "c": 1e-20, "d": 3}
    assert '"b": 0.0' in text or '"b":0.0' in text


# run configs ------------------------------------------------------------------------


def test_unknown_config_keys_are_rejected(tmp_path):
    with pytest.raises(InputError):
        RunConfig.from_mapping({"command": "divergence", "colour": "red"})
    with pytest.raises(InputError):
        RunConfig.from_mapping({"command": "divergence", "solver": {"speed": 2}})
    with pytest.raises(InputError):
        RunConfig.from_mapping({"command": "jko", "params": {"atoms": 3}})


def test_config_file_is_merged_under_flags(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "divergence", "generator": "logsumexp", "dim": 2, "seed": 3}))
    code, a = cli_json(capsys, "--config", str(cfg), "divergence")
    assert code == 0 and a["generator"] == "logsumexp" and a["seed"] == 3
    code, b = cli_json(capsys, "--config", str(cfg), "--seed", "4", "divergence")
    assert b["seed"] == 4 and b["value"] != a["value"]
    cfg.write_text(json.dumps({"command": "jko"}))
    assert cli(capsys, "--config", str(cfg), "divergence")[0] == 1


# commands --------------------------------------------------------------------------


def test_divergence_exact_and_sinkhorn_agree(capsys):
    base = ("--seed", "7", "divergence", "--generator", "logsumexp", "--dim", "2")
    code, exact = cli_json(capsys, *base)
    assert code == 0 and exact["method"] in ("assignment", "network_simplex")
    code, ent = cli_json(capsys, *base, "--method", "sinkhorn", "--epsilon", "1e-3")
    assert code == 0 and ent["method"] == "sinkhorn" and ent["epsilon"] == 1e-3
    assert abs(ent["value"] - exact["value"]) <= 1e-2


def test_divergence_of_identical_files_is_zero(tmp_path, capsys):
    path = write_cloud(tmp_path / "m.csv", [[0.1, 0.2], [-0.3, 0.5], [1.0, -1.0]])
    code, out = cli_json(capsys, "divergence", "--generator", "sinhcube", "--mu", path, "--nu", path)
    assert code == 0 and out["value"] == 0.0 and out["atoms"] == [3, 3]


def test_byte_identical_output_for_a_fixed_seed(tmp_path, capsys):
    argv = ("--seed", "11", "--out-dir", str(tmp_path / "a"), "barycenter", "--generator", "logsumexp")
    first = cli(capsys, *argv)
    second = cli(capsys, *argv)
    assert first == second
    assert (tmp_path / "a" / "support.csv").read_text().startswith("w,x1")


def test_exit_codes_for_input_and_solver_errors(tmp_path, capsys):
    code, out = cli_json(capsys, "divergence", "--mu", str(tmp_path / "nope.csv"))
    assert code == 1 and out["error"]["code"] == "input"
    bad = tmp_path / "bad.csv"
    bad.write_text("w,x1\n0.5,0.0\n0.2,1.0\n")
    code, out = cli_json(capsys, "divergence", "--dim", "1", "--mu", str(bad))
    assert code == 1 and "sum" in out["error"]["message"]
    code, out = cli_json(capsys, "divergence", "--method", "sinkhorn")
    assert code == 1 and "epsilon" in out["error"]["message"]
    code, out = cli_json(capsys, "divergence", "--method", "sinkhorn", "--epsilon", "1e-6", "--max-iters", "3")
    assert code == 2 and out["error"]["code"] == "convergence" and "violation" in out["error"]
    code, out = cli_json(capsys, "--seed", "-1", "divergence")
    assert code == 1
    code, out = cli_json(capsys, "divergence", "--no-such-flag")
    assert code == 1


def test_interpolate_writes_snapshots(tmp_path, capsys):
    code, out = cli_json(
        capsys, "--out-dir", str(tmp_path), "interpolate", "--generator", "diaglogistic", "--steps", "5"
    )
    assert code == 0
    lines = (tmp_path / "snapshots.csv").read_text().splitlines()
    assert lines[0].startswith("t,w,x1")
    assert len(lines) == 1 + 5 * 6


def test_match_emits_pairs(tmp_path, capsys):
    pairs = tmp_path / "pairs.csv"
    code, out = cli_json(capsys, "--seed", "7", "match", "--n", "6", "--dim", "2", "--emit-pairs", str(pairs))
    assert code == 0
    header, body = read_matrix(pairs)
    assert header == ["i", "j", "divergence"]
    assert sorted(body[:, 1].astype(int)) == list(range(6))
    assert np.all(body[:, 2] >= 0)


def test_match_from_files(tmp_path, capsys):
    (tmp_path / "t.csv").write_text("theta1\n1.0\n-2.0\n")
    (tmp_path / "y.csv").write_text("y1\n-0.9\n0.3\n")
    code, out = cli_json(capsys, "match", "--thetas", str(tmp_path / "t.csv"), "--obs", str(tmp_path / "y.csv"))
    assert code == 0
    assert out["loglik"] == pytest.approx(0.3 - np.log(np.sinh(1.0)) + 1.8 - np.log(np.sinh(2.0) / 2.0), abs=1e-12)


def test_jko_writes_steps_and_final_measure(tmp_path, capsys):
    code, out = cli_json(
        capsys, "--out-dir", str(tmp_path), "jko", "--generator", "quadratic", "--dim", "1",
        "--grid", "24,-3,3", "--steps", "5",
    )
    assert code == 0
    assert out["max_dissipation_gap"] <= 1e-8 and out["unconverged_steps"] == 0
    header, body = read_matrix(tmp_path / "steps.csv")
    assert header == ["k", "F", "kl_to_gibbs"] and body.shape == (6, 3)
    assert np.all(np.diff(body[:, 1]) <= 1e-12)
    assert read_measure(tmp_path / "final.csv").n == 24


def test_csv_format_prints_the_table(capsys):
    code, out = cli(capsys, "--format", "csv", "jko", "--generator", "quadratic", "--dim", "1",
                    "--grid", "16,-2,2", "--steps", "2")
    assert code == 0
    assert out.splitlines()[0] == "k,F,kl_to_gibbs" and len(out.splitlines()) == 4


def test_check_command_passes_and_fails(monkeypatch, capsys):
    code, out = cli_json(capsys, "--seed", "7", "check", "--criterion", "1", "--criterion", "2")
    assert code == 0 and out["passed"] and {r["detail"]["criterion"] for r in out["checks"]} == {1, 2}
    monkeypatch.setitem(checks.CRITERIA, 1, lambda seed: [Check("always.red", 1.0, 0.0, 0.5, False)])
    code, out = cli_json(capsys, "check", "--criterion", "1")
    assert code == 3 and not out["passed"]
    assert cli(capsys, "check", "--criterion", "99")[0] == 1


@pytest.mark.slow
def test_core_suite_via_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "bwot", "--seed", "7", "check", "--suite", "core"],
        capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert json.loads(proc.stdout)["passed"]


def test_run_accepts_a_stream():
    buf = io.StringIO()
    code = run(RunConfig.from_mapping({"command": "divergence", "seed": 1}), buf)
    assert code == 0 and json.loads(buf.getvalue())["command"] == "divergence"
