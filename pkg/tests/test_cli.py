import csv
import json
import subprocess
import sys

import pytest

from berezin_lab.cli import list_builtins, main


def write_config(tmp_path, cfg, name="cfg.json"):
    cfg = dict(cfg)
    cfg.setdefault("output_dir", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def outputs(capsys):
    return [line for line in capsys.readouterr().out.splitlines() if line]


def load_result(path):
    with open(path) as fh:
        return json.load(fh)


FINITE8 = {"kind": "finite_gabor", "N": 8}


def test_parseval_run(tmp_path, capsys):
    path = write_config(tmp_path, {"operation": "parseval_check", "geometry": FINITE8,
                                   "window": {"name": "gaussian"}})
    assert main(["run", path]) == 0
    files = outputs(capsys)
    assert any(f.endswith(".json") for f in files) and any(f.endswith(".csv") for f in files)
    doc = load_result(next(f for f in files if f.endswith(".json")))
    assert doc["result"]["residual"] < 1e-10
    prov = doc["provenance"]
    assert prov["config"]["seed"] == 0
    assert prov["config"]["thresholds"]["parseval_tol"] == 1e-8
    assert prov["params"] == {"trials": 8}


def test_toml_config(tmp_path, capsys):
    path = tmp_path / "cfg.toml"
    path.write_text(f'operation = "moment_check"\noutput_dir = "{tmp_path / "o"}"\n'
                    '[window]\nname = "haar"\nstep = 0.0009765625\nhalf_width = 4.0\n')
    assert main(["run", str(path)]) == 0
    doc = load_result(next(f for f in outputs(capsys) if f.endswith(".json")))
    assert abs(doc["result"]["mean"][0]) < 1e-10
    assert doc["result"]["moment"] == pytest.approx(0.5, abs=1e-3)


def test_unknown_field_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, {"operation": "parseval_check", "geometry": FINITE8,
                                   "windoww": {"name": "gaussian"}})
    assert main(["run", path]) == 2
    assert "windoww" in capsys.readouterr().err


def test_bad_inputs_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "cfg.yaml"
    bad.write_text("operation: x")
    assert main(["run", str(bad)]) == 2
    path = write_config(tmp_path, {"operation": "no_such_op"})
    assert main(["run", path]) == 2
    path = write_config(tmp_path, {"operation": "admissibility_constant", "window": {"name": "gaussian"}})
    assert main(["run", path]) == 2
    assert "mean" in capsys.readouterr().err


def test_resource_exit_3(tmp_path, capsys):
    path = write_config(tmp_path, {
        "operation": "spectrum",
        "geometry": {"kind": "affine", "a_min": 0.5, "a_max": 2.0, "n_scales": 2, "b_half": 1.0, "n_shifts": 2},
        "window": {"name": "mexican_hat", "half_width": 200.0, "admissible": False},
        "set": {"kind": "all"},
    })
    assert main(["run", path]) == 3
    assert "apply_toeplitz" in capsys.readouterr().err


def test_stage_failure_exit_4(tmp_path, capsys):
    path = write_config(tmp_path, {
        "operation": "sup_translates_select",
        "geometry": {"kind": "finite_gabor", "N": 16},
        "window": {"name": "gaussian"},
        "set": {"kind": "balls", "centers": [[0, 0]], "radii": [0.5]},
        "params": {"candidates": [[0, 1], [0, 1], [0, 3]], "K": 3},
    })
    assert main(["run", path]) == 4
    assert "stage 1" in capsys.readouterr().err


def test_ball_union_uncertainty(tmp_path, capsys):
    path = write_config(tmp_path, {
        "operation": "uncertainty_constant",
        "geometry": {"kind": "plane", "t_half": 16, "w_half": 16, "dt": 0.25, "dw": 0.25},
        "window": {"name": "gaussian"},
        "set": {"kind": "balls", "centers": [[n * n, 0] for n in range(1, 11)],
                "radii": [1 / n for n in range(1, 11)]},
    })
    assert main(["run", path]) == 0
    doc = load_result(next(f for f in outputs(capsys) if f.endswith(".json")))
    assert doc["result"]["c_estimate"] > 0


def test_list_is_stable(capsys):
    assert main(["list"]) == 0
    first = capsys.readouterr().out
    assert main(["list"]) == 0
    assert capsys.readouterr().out == first == list_builtins()
    assert "haar" in first and "uncertainty_constant" in first


def test_emit_b1w_and_rerun_identical(tmp_path, capsys):
    cfg = {"operation": "b1w_integral", "window": {"name": "haar", "step": 0.015625},
           "params": {"schedule": [4.0, 16.0, 64.0]}}
    path = write_config(tmp_path, cfg)
    assert main(["emit", path]) == 0
    files = outputs(capsys)
    csvs = [f for f in files if f.endswith(".csv")]
    assert len(csvs) == 1 and len(files) == 2
    rows = list(csv.reader(open(csvs[0])))
    assert rows[0] == ["parameter", "value"]
    A = [float(r[0]) for r in rows[1:]]
    assert A == sorted(A) and len(A) == 3
    before = {f: open(f, "rb").read() for f in files}
    assert main(["emit", path]) == 0
    assert outputs(capsys) == files
    assert {f: open(f, "rb").read() for f in files} == before


def test_emit_errors(tmp_path):
    path = write_config(tmp_path, {"operation": "b1w_integral", "window": {"name": "haar"},
                                   "params": {"schedule": []}})
    assert main(["emit", path]) == 2
    path = write_config(tmp_path, {"operation": "parseval_check", "geometry": FINITE8,
                                   "window": {"name": "gaussian"}}, name="p.json")
    assert main(["emit", path]) == 2


def test_output_name_tracks_config(tmp_path, capsys):
    base = {"operation": "parseval_check", "geometry": FINITE8, "window": {"name": "gaussian"}}
    main(["run", write_config(tmp_path, base, "a.json")])
    a = outputs(capsys)
    main(["run", write_config(tmp_path, {**base, "seed": 1}, "b.json")])
    b = outputs(capsys)
    assert set(a).isdisjoint(b)


def test_threads_env(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"operation": "parseval_check", "geometry": FINITE8,
                                   "window": {"name": "gaussian"}})
    monkeypatch.setenv("BEREZIN_LAB_THREADS", "1")
    assert main(["run", path]) == 0
    monkeypatch.setenv("BEREZIN_LAB_THREADS", "zero")
    assert main(["run", path]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "berezin_lab", "list"], capture_output=True, text=True, check=True)
    assert out.stdout == list_builtins()
