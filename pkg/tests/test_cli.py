import json
import os

import pytest

from tnprep import __version__
from tnprep.cli import main
from tnprep.serialize import spec_from_json, spec_to_json


@pytest.fixture
def workdir(tmp_path, monkeypatch, spec_path3):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("TNPREP_OUT", str(tmp_path / "runs"))
    with open(tmp_path / "spec.json", "w") as fh:
        json.dump(spec_to_json(spec_path3), fh)
    return tmp_path


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_no_command_prints_help(capsys):
    assert main([]) == 1
    assert "spectrum" in capsys.readouterr().err


def test_unknown_command_is_validation_error(capsys):
    assert main(["solve"]) == 1
    assert "error:" in capsys.readouterr().err


def test_spectrum_writes_report(workdir, capsys):
    assert main(["spectrum", "--spec", "spec.json"]) == 0
    out = json.loads((workdir / "runs/spectrum/spectrum.json").read_text())
    assert out["channel"]["unique_fixed_point"] is True
    assert out["liouvillian"]["unique_fixed_point"] is True
    assert out["gamma"] > 0
    assert out["version"] == __version__
    assert "unique_fixed_point=True" in capsys.readouterr().err
    resolved = json.loads(
        (workdir / "runs/spectrum/resolved_config.json").read_text())
    assert resolved["command"] == "spectrum"
    assert resolved["spec"] == "spec.json"


def test_gap_command(workdir, capsys):
    assert main(["gap", "--spec", "spec.json", "--violations"]) == 0
    out = json.loads((workdir / "runs/gap/gap.json").read_text())
    assert out["gap"] > 0
    assert "gap=" in capsys.readouterr().err


def test_bounds_command(workdir, capsys):
    assert main(["bounds", "--spec", "spec.json"]) == 0
    out = json.loads((workdir / "runs/bounds/bounds.json").read_text())
    assert out["all_passed"] is True
    assert "all_passed=True" in capsys.readouterr().err


def test_evolve_requires_t_final(workdir, capsys):
    assert main(["evolve", "--spec", "spec.json"]) == 1
    assert "config key t_final" in capsys.readouterr().err


def test_evolve_writes_series(workdir):
    assert main(["evolve", "--spec", "spec.json", "--t-final", "2",
                 "--dt", "1", "--method", "expm"]) == 0
    lines = (workdir / "runs/evolve/series.csv").read_text().splitlines()
    assert lines[0] == "t,fidelity,energy,violation"
    assert len(lines) == 4  # t = 0, 1, 2
    meta = json.loads((workdir / "runs/evolve/series.csv.meta.json").read_text())
    assert meta["method"] == "expm"


def test_channel_threshold_stops(workdir, capsys):
    assert main(["channel", "--spec", "spec.json", "--steps", "5000",
                 "--threshold", "0.99"]) == 0
    err = capsys.readouterr().err
    assert "tmix=" in err
    meta = json.loads((workdir / "runs/channel/series.csv.meta.json").read_text())
    assert meta["steps_run"] < 5000


def test_channel_over_cap_exits_3(workdir, capsys):
    assert main(["channel", "--spec", "spec.json", "--gamma", "10",
                 "--steps", "5"]) == 3
    err = capsys.readouterr().err
    assert "max_gamma" in err and "edge (0, 1)" in err


def test_capacity_exit_2(workdir, gchain03, capsys):
    from tnprep.mps import blocked_ring_spec
    with open(workdir / "big.json", "w") as fh:
        json.dump(spec_to_json(blocked_ring_spec(gchain03, 8, 2)), fh)
    assert main(["spectrum", "--spec", "big.json"]) == 2
    assert "capacity:" in capsys.readouterr().err


def test_missing_spec_file(workdir, capsys):
    assert main(["gap", "--spec", "nope.json"]) == 1
    assert "config key spec" in capsys.readouterr().err


def test_config_file_with_flag_override(workdir):
    cfg = {"spec": "spec.json", "steps": 40, "mode": "sampled", "seed": 9}
    with open(workdir / "run.json", "w") as fh:
        json.dump(cfg, fh)
    assert main(["channel", "--config", "run.json", "--steps", "25",
                 "--out", str(workdir / "o1")]) == 0
    resolved = json.loads((workdir / "o1/resolved_config.json").read_text())
    assert resolved["steps"] == 25      # flag wins
    assert resolved["mode"] == "sampled"  # file fills the rest
    assert resolved["seed"] == 9
    meta = json.loads((workdir / "o1/series.csv.meta.json").read_text())
    assert meta["mode"] == "sampled" and meta["seed"] == 9


def test_config_file_unknown_key(workdir, capsys):
    with open(workdir / "run.json", "w") as fh:
        json.dump({"spec": "spec.json", "steps": 5, "stepz": 1}, fh)
    assert main(["channel", "--config", "run.json"]) == 1
    assert "'stepz'" in capsys.readouterr().err


def test_channel_reruns_are_byte_identical(workdir):
    argv = ["channel", "--spec", "spec.json", "--steps", "20",
            "--mode", "sampled", "--seed", "3"]
    assert main(argv + ["--out", str(workdir / "d1")]) == 0
    assert main(argv + ["--out", str(workdir / "d2")]) == 0
    assert (workdir / "d1/series.csv").read_bytes() == \
        (workdir / "d2/series.csv").read_bytes()


def test_experiment_with_config_file(workdir):
    with open(workdir / "exp.json", "w") as fh:
        json.dump({"kind": "condition_number", "cond_g_grid": [0.0, 0.5]}, fh)
    assert main(["experiment", "--config", "exp.json"]) == 0
    out = workdir / "runs/experiment-condition_number"
    payload = json.loads((out / "result.json").read_text())
    assert payload["tables"]["condition_number"]["g"] == [0.0, 0.5]
    assert (out / "condition_number.csv").exists()


def test_experiment_requires_kind(workdir, capsys):
    assert main(["experiment"]) == 1
    assert "config key kind" in capsys.readouterr().err


def test_block_produces_loadable_spec(workdir, capsys):
    assert main(["block", "--g", "0.3", "--N", "6", "--l", "2"]) == 0
    err = capsys.readouterr().err
    assert "blocks=3" in err and "delta=0.538462" in err
    obj = json.loads((workdir / "runs/block/blocked_spec.json").read_text())
    spec = spec_from_json(obj)
    assert spec.graph.num_vertices == 3
    assert spec.phys_dims == (4, 4, 4)


def test_block_requires_input(workdir, capsys):
    assert main(["block", "--N", "6", "--l", "2"]) == 1
    assert "config key chain" in capsys.readouterr().err


def test_threads_validation(workdir, capsys):
    assert main(["gap", "--spec", "spec.json", "--threads", "0"]) == 1
    assert "config key threads" in capsys.readouterr().err


def test_threads_sets_blas_env(workdir, monkeypatch):
    # seed the vars so monkeypatch restores them after main() overwrites
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.setenv(var, "sentinel")
    assert main(["gap", "--spec", "spec.json", "--threads", "2"]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"


def test_explicit_out_dir_is_used_verbatim(workdir):
    target = workdir / "elsewhere"
    assert main(["gap", "--spec", "spec.json", "--out", str(target)]) == 0
    assert (target / "gap.json").exists()
