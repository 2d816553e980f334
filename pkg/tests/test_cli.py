import dataclasses
import json
from pathlib import Path

import pytest

from ssm_prune.cli import EXIT_CONFIG_ERROR, EXIT_OK, cli_main
from ssm_prune.model_config import load_config
from ssm_prune.tensor_io import load_tensor, save_weights
from ssm_prune.vim_model import init_weights

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DEFAULT = str(CONFIGS / "default.json")

pytestmark = pytest.mark.usefixtures("isolated_env")


def write_config(tmp_path, **prune):
    data = json.loads(Path(DEFAULT).read_text())
    data["prune"].update(prune)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def run_json(capsys, argv):
    assert cli_main(argv) == EXIT_OK
    return json.loads(capsys.readouterr().out)


def test_verify_default_passes(capsys):
    assert cli_main(["verify"]) == EXIT_OK
    assert "All 7 suites passed" in capsys.readouterr().out


def test_verify_with_threads(capsys):
    assert cli_main(["verify", "--threads", "2"]) == EXIT_OK


def test_flops_keep_rate_one(tmp_path, capsys):
    report = run_json(capsys, ["flops", "--config", write_config(tmp_path, keep_rate=1.0)])
    assert report["reduction_percent"] == 0
    assert report["dense"]["flops"] == 2 * report["dense"]["macs"]


def test_flops_exact(capsys):
    report = run_json(capsys, ["flops", "--config", DEFAULT, "--exact"])
    assert report["pruned_steps_exact"] is True


def test_flops_calibrate(capsys):
    report = run_json(capsys, ["flops", "--config", DEFAULT, "--calibrate", "20"])
    assert 0.0 < report["calibrated_keep_rate"] <= 1.0
    assert report["reduction_percent"] == pytest.approx(20.0, abs=5.0)


def test_prune_sim_single_stage(tmp_path, capsys):
    dump = tmp_path / "dump"
    out = run_json(capsys, ["prune-sim", "--config", DEFAULT, "--dump", str(dump)])
    assert len(out["stages"]) == 1
    stage = out["stages"][0]
    assert stage["layer"] == 1
    assert len(stage["remaining_indices"]) == 8
    assert stage["remaining_indices"] == sorted(stage["remaining_indices"])
    assert out["token_counts"] == [16, 8]
    assert load_tensor(dump / "features.bin").shape == (1, 8, 8)


def test_prune_sim_json_is_a_fixed_point(capsys):
    cli_main(["prune-sim", "--config", DEFAULT])
    text = capsys.readouterr().out
    once = json.loads(text)
    assert json.loads(json.dumps(once)) == once


def test_bench_writes_csv(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    result = run_json(capsys, ["bench", "--config", DEFAULT, "--mode", "dense", "--repeats", "5",
                               "--csv", str(csv_path)])
    assert result["mode"] == "dense"
    assert result["speedup"] == 1.0
    assert csv_path.read_text(encoding="utf-8").startswith("config_digest,mode,median_ms,speedup")


def test_missing_config_exits_two(tmp_path):
    assert cli_main(["flops", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG_ERROR


def test_invalid_config_exits_two(tmp_path):
    assert cli_main(["prune-sim", "--config", write_config(tmp_path, keep_rate=2.0)]) == EXIT_CONFIG_ERROR


def test_too_few_repeats_exits_two():
    assert cli_main(["bench", "--config", DEFAULT, "--repeats", "2"]) == EXIT_CONFIG_ERROR


def test_bad_threads_exits_two():
    assert cli_main(["verify", "--threads", "0"]) == EXIT_CONFIG_ERROR


def test_prune_sim_reloads_dumped_weights(tmp_path, capsys):
    dump = tmp_path / "dump"
    first = run_json(capsys, ["prune-sim", "--config", DEFAULT, "--dump", str(dump)])
    again = run_json(capsys, ["prune-sim", "--config", DEFAULT, "--weights", str(dump / "weights")])
    assert again["stages"] == first["stages"]


def test_prune_sim_uses_given_weights(tmp_path, capsys):
    other = dataclasses.replace(load_config(DEFAULT, apply_env=False), seed=7)
    save_weights(tmp_path / "w", init_weights(other))
    seeded = run_json(capsys, ["prune-sim", "--config", DEFAULT])
    loaded = run_json(capsys, ["prune-sim", "--config", DEFAULT, "--weights", str(tmp_path / "w")])
    assert loaded["stages"][0]["scores"] != seeded["stages"][0]["scores"]


def test_missing_weights_exit_two(tmp_path):
    assert cli_main(["prune-sim", "--config", DEFAULT, "--weights", str(tmp_path / "none")]) == EXIT_CONFIG_ERROR


def test_mismatched_weights_exit_two(tmp_path):
    cfg = load_config(DEFAULT, apply_env=False)
    save_weights(tmp_path / "w", init_weights(dataclasses.replace(cfg, inner_dim=32)))
    assert cli_main(["bench", "--config", DEFAULT, "--weights", str(tmp_path / "w")]) == EXIT_CONFIG_ERROR


def test_bench_with_weights_and_walk(tmp_path, capsys):
    save_weights(tmp_path / "w", init_weights(load_config(DEFAULT, apply_env=False)))
    result = run_json(capsys, ["bench", "--config", DEFAULT, "--mode", "aligned", "--gap-strategy", "walk",
                               "--weights", str(tmp_path / "w")])
    assert result["gap_strategy"] == "walk"
    assert result["op_counts"]["decay_multiplies"] == result["op_counts"]["pruned_steps"]


@pytest.mark.parametrize("gap_strategy", ["walk", "power"])
def test_flops_exact_reports_strategy(capsys, gap_strategy):
    report = run_json(capsys, ["flops", "--config", DEFAULT, "--exact", "--gap-strategy", gap_strategy])
    assert report["gap_strategy"] == gap_strategy
    assert report["pruned_steps_exact"] is True
