import json
import math

import pytest
import yaml

from sarbot import cli
from sarbot import config as configlib
from sarbot.errors import ConfigError


def test_defaults_validate_and_build():
    cfg = configlib.load_config()
    trial_cfg = configlib.to_trial_config(cfg)
    assert trial_cfg.net.hidden == (13, 12, 11, 10, 9, 8, 7, 6, 5, 4)
    assert trial_cfg.net.outputs == 3
    assert trial_cfg.rule.kind == "sar"
    assert trial_cfg.reflex.loop_gain is None  # "auto"
    specs = trial_cfg.net.layer_specs()
    assert [s.size for s in specs] == [240, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3]


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("loop:\n  gainz: 3\n")
    with pytest.raises(ConfigError, match="loop.gainz"):
        configlib.load_config(p)
    p.write_text("nonsense: 1\n")
    with pytest.raises(ConfigError, match="nonsense"):
        configlib.load_config(p)


def test_bad_values_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("rule:\n  kind: adam\n")
    with pytest.raises(ConfigError, match="rule.kind"):
        configlib.load_config(p)
    p.write_text("trial:\n  seed: 1.5\n")
    with pytest.raises(ConfigError, match="trial.seed"):
        configlib.load_config(p)


def test_yaml_parse_error_reports_line(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("loop:\n  k: [1, 2\n")
    with pytest.raises(ConfigError, match=r":\d+"):
        configlib.load_config(p)


def test_config_hash_stability_and_sensitivity():
    a = configlib.load_config()
    b = configlib.load_config()
    assert configlib.config_hash(a) == configlib.config_hash(b)
    b["trial"]["seed"] = 99
    assert configlib.config_hash(a) != configlib.config_hash(b)


def test_batch_seed_expansion():
    cfg = configlib.load_config()
    cfg["trial"]["seed"] = 5
    cfg["batch"]["seeds"] = 3
    assert configlib.batch_seeds(cfg) == [5, 6, 7]
    cfg["batch"]["seeds"] = [2, 9]
    assert configlib.batch_seeds(cfg) == [2, 9]


def fast_config(tmp_path, **trial):
    trial_section = {"max_duration": 20.0, "seed": 1}
    trial_section.update(trial)
    cfg = {
        "rule": {"kind": "none"},
        "loop": {"loop_gain": 5.0e-6},
        "trial": trial_section,
    }
    p = tmp_path / "fast.yaml"
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_cli_trial_no_success_exit_and_artifacts(tmp_path):
    cfg = fast_config(tmp_path)
    out = tmp_path / "runs"
    code = cli.main(["trial", "--config", str(cfg), "--out", str(out)])
    assert code == cli.EXIT_NO_SUCCESS
    run_dirs = list(out.iterdir())
    assert len(run_dirs) == 1
    files = {f.name for f in run_dirs[0].iterdir()}
    assert {"config.yaml", "trace.csv", "distances.csv", "record.json",
            "weights.txt", "heatmap_layer1.pgm"} <= files


def test_cli_trial_abort_exit(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({
        "rule": {"kind": "none"},
        "loop": {"loop_gain": 5.0e-6},
        "track": {"kind": "straight", "params": {"length": 30.0}, "margin": 40.0},
        "trial": {"max_duration": 60.0},
    }))
    code = cli.main(["trial", "--config", str(p), "--out", str(tmp_path / "r")])
    assert code == cli.EXIT_ABORT


def test_cli_invalid_rule_is_config_error(tmp_path):
    code = cli.main(["trial", "--config", str(fast_config(tmp_path)),
                     "--out", str(tmp_path / "r"), "--eta", "-1.0"])
    assert code == cli.EXIT_CONFIG


def test_cli_trace_csvs_are_byte_identical_across_runs(tmp_path):
    cfg = fast_config(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["trial", "--config", str(cfg), "--out", str(out)]) == 2
        run_dir = next(out.iterdir())
        outs.append(run_dir)
    for fname in ("trace.csv", "distances.csv", "weights.txt", "heatmap_layer1.pgm"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_cli_batch_degenerate_single_seed_matches_trial(tmp_path):
    cfg = fast_config(tmp_path)
    out = tmp_path / "batch"
    code = cli.main([
        "batch", "--config", str(cfg), "--out", str(out),
        "--rules", "sar", "--etas", "0.1", "--seeds", "1", "--no-trace",
    ])
    assert code == 0
    run_dir = next(out.iterdir())
    trials = (run_dir / "trials.csv").read_text().splitlines()
    assert len(trials) == 2  # header + one row
    summary = (run_dir / "summary.csv").read_text().splitlines()
    assert len(summary) == 2
    row = dict(zip(trials[0].split(","), trials[1].split(",")))
    assert row["rule"] == "sar" and row["seed"] == "1"


def test_cli_calibrate_writes_derived_config(tmp_path, capsys):
    cfg = fast_config(tmp_path)
    derived = tmp_path / "derived.yaml"
    code = cli.main(["calibrate", "--config", str(cfg), "--write", str(derived)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "dE/dA_P" in printed
    loaded = configlib.load_config(derived)
    assert isinstance(loaded["loop"]["loop_gain"], float)
    assert loaded["loop"]["loop_gain"] > 0  # sign flipped from measured negative


def test_cli_track_preview(tmp_path):
    target = tmp_path / "preview.pgm"
    code = cli.main(["track-preview", "--file", str(target)])
    assert code == 0
    assert target.read_bytes().startswith(b"P5")


def test_cli_out_root_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ROOT_ENV, str(tmp_path / "envroot"))
    monkeypatch.chdir(tmp_path)
    cfg = fast_config(tmp_path)
    code = cli.main(["trial", "--config", str(cfg)])
    assert code == cli.EXIT_NO_SUCCESS
    assert (tmp_path / "envroot").is_dir()


def test_record_json_is_regenerable_from_config_and_seed(tmp_path):
    cfg = fast_config(tmp_path)
    a, b = tmp_path / "ra", tmp_path / "rb"
    cli.main(["trial", "--config", str(cfg), "--out", str(a)])
    stored = next(a.iterdir()) / "config.yaml"
    cli.main(["trial", "--config", str(stored), "--out", str(b)])
    rec_a = json.loads((next(a.iterdir()) / "record.json").read_text())
    rec_b = json.loads((next(b.iterdir()) / "record.json").read_text())
    assert rec_a == rec_b
    assert (next(a.iterdir()) / "trace.csv").read_bytes() == (
        next(b.iterdir()) / "trace.csv"
    ).read_bytes()
