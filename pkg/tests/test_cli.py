import json
import math
from dataclasses import replace

import pytest

from loadplan.cli import main
from loadplan.harness import (
    ScenarioConfig,
    config_from_json_dict,
    config_to_json_dict,
    write_config,
)
from loadplan.heightfield import GridSpec, PileSpec, read_hfld


@pytest.fixture(scope="module")
def tiny_config_path(tmp_path_factory):
    base = ScenarioConfig.default()
    cfg = replace(
        base,
        grid=GridSpec(nx=280, ny=220, cell=0.1, origin=(-14.0, -8.0)),
        pile=PileSpec(noise_amplitude=0.25, noise_frequency=0.5, toe_y=3.0),
        region=(-4.0, 0.0, 0.0, 6.0),
        cycles=2,
        depths=(1,),
        strategies=("greedy",),
        seeds=(0,),
        lut_heading_span=math.radians(30.0),
    )
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    write_config(cfg, path)
    return path


def test_default_config_round_trips(capsys):
    assert main(["default-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    cfg = config_from_json_dict(doc)
    assert config_to_json_dict(cfg) == doc


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_is_usage_error(capsys):
    assert main(["default-config", "--bogus"]) == 1


def test_missing_file_is_runtime_error(tmp_path, capsys):
    code = main(["plan", "--config", str(tmp_path / "nope.json")])
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()


def test_generate_pile_writes_hfld(tmp_path, tiny_config_path, capsys):
    out = tmp_path / "pile.hfld"
    code = main(["generate-pile", "--config", str(tiny_config_path),
                 "--out", str(out)])
    assert code == 0
    field = read_hfld(out)
    assert field.nx == 280 and field.ny == 220
    assert field.heights.max() > 1.0


def test_generate_pile_seed_flag_changes_output(tmp_path, tiny_config_path):
    a = tmp_path / "a.hfld"
    b = tmp_path / "b.hfld"
    assert main(["generate-pile", "--config", str(tiny_config_path),
                 "--out", str(a), "--seed", "1"]) == 0
    assert main(["generate-pile", "--config", str(tiny_config_path),
                 "--out", str(b), "--seed", "2"]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_plan_writes_log_with_horizon_rows(tmp_path, tiny_config_path, capsys):
    out_dir = tmp_path / "out"
    code = main(["plan", "--config", str(tiny_config_path),
                 "--strategy", "greedy", "--out-dir", str(out_dir)])
    assert code == 0
    log = out_dir / "plan_greedy_seed0.csv"
    lines = log.read_text().strip().splitlines()
    assert 1 < len(lines) <= 3  # header plus at most `cycles` rows
    stats = json.loads((out_dir / "stats_greedy_seed0.json").read_text())
    assert stats["predictions_total"] >= 1


def test_precompute_and_reuse_lut(tmp_path, tiny_config_path, capsys):
    lut_path = tmp_path / "turns.vlut"
    assert main(["precompute-vturns", "--config", str(tiny_config_path),
                 "--out", str(lut_path)]) == 0
    assert lut_path.read_bytes()[:4] == b"VLUT"
    out_dir = tmp_path / "exp"
    code = main(["experiment", "--config", str(tiny_config_path),
                 "--jobs", "1", "--lut", str(lut_path),
                 "--out-dir", str(out_dir)])
    assert code == 0
    assert (out_dir / "runs.csv").exists()
    assert (out_dir / "aggregates.csv").exists()


def test_experiment_outputs_deterministic_across_jobs(tmp_path, tiny_config_path):
    lut_path = tmp_path / "turns.vlut"
    assert main(["precompute-vturns", "--config", str(tiny_config_path),
                 "--out", str(lut_path)]) == 0
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["experiment", "--config", str(tiny_config_path), "--jobs", "1",
                 "--lut", str(lut_path), "--out-dir", str(out1)]) == 0
    assert main(["experiment", "--config", str(tiny_config_path), "--jobs", "2",
                 "--lut", str(lut_path), "--out-dir", str(out2)]) == 0
    assert (out1 / "runs.csv").read_bytes() == (out2 / "runs.csv").read_bytes()


def test_profile_reports_budget(tiny_config_path, capsys):
    code = main(["profile", "--config", str(tiny_config_path), "--reps", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "loading_cycle_prediction" in out
    assert "budget ok" in out
