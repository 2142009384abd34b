import json

import numpy as np
import pytest

from ftm.cli import exit_code, main
from ftm.config import RunConfig, parse_config_text, resolve_config
from ftm.errors import ConfigurationError, NumericalError, ParseError, ShapeError
from ftm.graph import load_csv

QUICK = """\
# small model, short run
dataset = data.csv
hidden_dim = 8
time_dim = 4
frame_length = 4
timeline_length = 2
epochs = 2
batch_size = 100
output_dir = run
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FTM_SEED", raising=False)
    assert main(["synth", "--out", "data.csv", "--links", "300", "--feature-dim", "4"]) == 0
    (tmp_path / "quick.cfg").write_text(QUICK)
    return tmp_path


# config

def test_config_parsing_and_comments():
    vals = parse_config_text("epochs = 3  # three\n\n# nothing\nlog_wall_time = yes\nattack_intensities = 0, 0.5\n")
    assert vals == {"epochs": 3, "log_wall_time": True, "attack_intensities": (0.0, 0.5)}


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError, match="wat"):
        parse_config_text("wat = 1\n")


def test_malformed_line_rejected():
    with pytest.raises(ParseError, match="line 2"):
        parse_config_text("epochs = 1\njust words\n")


def test_precedence_flags_env_file_defaults():
    file_vals = {"seed": 1, "epochs": 4}
    assert resolve_config({}, {}, {}).seed == 0
    assert resolve_config(file_vals, {}, {}).seed == 1
    assert resolve_config(file_vals, {}, {"FTM_SEED": "7"}).seed == 7
    cfg = resolve_config(file_vals, {"seed": "9"}, {"FTM_SEED": "7"})
    assert (cfg.seed, cfg.epochs) == (9, 4)


def test_snapshot_round_trip():
    cfg = RunConfig(dataset="x.csv", epochs=3, learning_rate=3e-4, attack_intensities=(0.0, 0.25))
    assert resolve_config(parse_config_text(cfg.dumps()), {}, {}) == cfg


def test_every_field_has_a_default():
    RunConfig()


def test_exit_code_mapping():
    assert exit_code(FileNotFoundError()) == 2
    assert exit_code(ParseError("x")) == 2
    assert exit_code(ConfigurationError("x")) == 3
    assert exit_code(ShapeError("x")) == 3
    assert exit_code(NumericalError("x")) == 4


# synth

def test_synth_round_trip_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "--out", str(a)]) == 0
    assert main(["synth", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_csv(a).num_links == 400


def test_synth_sidecar_with_full_loyalty(tmp_path):
    out = tmp_path / "p1.csv"
    assert main(["synth", "--out", str(out), "--p", "1.0"]) == 0
    truth = json.loads((tmp_path / "p1.csv.truth.json").read_text())
    assert len(truth["preferred"]) == 20
    assert all(isinstance(v, str) for v in truth["preferred"].values())
    g = load_csv(out)
    for s, d in zip(g.src, g.dst):
        assert truth["preferred"][g.node_ids[s]] == g.node_ids[d]


def test_synth_unwritable_output(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "missing" / "x.csv")]) == 2
    assert "cannot write" in capsys.readouterr().err


# train / eval

def test_missing_dataset_exit_code(workdir, capsys):
    assert main(["train", "--config", "quick.cfg", "--dataset", "nowhere.csv"]) == 2
    err = capsys.readouterr().err
    assert "nowhere.csv" in err and len(err.strip().splitlines()) == 1


def test_unknown_config_key_exit_code(workdir):
    (workdir / "bad.cfg").write_text("frobnicate = 2\n")
    assert main(["train", "--config", "bad.cfg"]) == 3


def test_train_outputs_and_reproducibility(workdir):
    assert main(["train", "--config", "quick.cfg", "--output-dir", "a"]) == 0
    assert main(["train", "--config", "quick.cfg", "--output-dir", "b"]) == 0
    for name in ("checkpoint.ftm", "epochs.ndjson", "split.json", "node_ids.json"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    rows = [json.loads(l) for l in (workdir / "a" / "epochs.ndjson").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    snap = (workdir / "a" / "config.resolved").read_text()
    assert "output_dir = a" in snap

    # re-running from the snapshot reproduces the run
    assert main(["train", "--config", "a/config.resolved", "--output-dir", "c"]) == 0
    for name in ("checkpoint.ftm", "epochs.ndjson"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "c" / name).read_bytes()


def test_env_seed_changes_run(workdir, monkeypatch):
    assert main(["train", "--config", "quick.cfg", "--output-dir", "a"]) == 0
    monkeypatch.setenv("FTM_SEED", "5")
    assert main(["train", "--config", "quick.cfg", "--output-dir", "b"]) == 0
    assert "seed = 5" in (workdir / "b" / "config.resolved").read_text()
    assert (workdir / "a" / "checkpoint.ftm").read_bytes() != (workdir / "b" / "checkpoint.ftm").read_bytes()


def test_eval_tasks(workdir, capsys):
    assert main(["train", "--config", "quick.cfg"]) == 0
    assert main(["eval", "--config", "run/config.resolved", "--task", "link"]) == 0
    link = json.loads((workdir / "run" / "report-link.json").read_text())
    assert link["metric"] == "AP" and 0 <= link["value"] <= 1

    assert main(["eval", "--config", "run/config.resolved", "--task", "node"]) == 0
    node = json.loads((workdir / "run" / "report-node.json").read_text())
    assert main(["eval", "--config", "run/config.resolved", "--task", "attack", "--set", "attack_intensities=0"]) == 0
    attack = json.loads((workdir / "run" / "report-attack.json").read_text())
    assert attack["values"] == [node["value"]]

    assert main(["eval", "--config", "run/config.resolved", "--task", "stability"]) == 0
    stab = json.loads((workdir / "run" / "report-stability.json").read_text())
    assert stab["metric"] == "cosine-stability" and -1 <= stab["value"] <= 1

    assert main(["eval", "--config", "run/config.resolved", "--task", "transfer", "--set", "transfer_dataset=data.csv"]) == 0
    transfer = json.loads((workdir / "run" / "report-transfer.json").read_text())
    assert transfer["value"] == link["value"]


def test_eval_dimension_mismatch(workdir, capsys):
    assert main(["train", "--config", "quick.cfg"]) == 0
    capsys.readouterr()
    assert main(["eval", "--config", "run/config.resolved", "--task", "link", "--set", "hidden_dim=4"]) == 3
    err = capsys.readouterr().err
    assert "checkpoint (8,) vs config (4,)" in err


def test_eval_missing_checkpoint(workdir):
    assert main(["eval", "--config", "quick.cfg", "--task", "link"]) == 2


def test_sweep_neighborhood_table(workdir):
    assert main(["eval", "--config", "quick.cfg", "--task", "sweep", "--set", "epochs=1", "--setting", "transductive"]) == 0
    doc = json.loads((workdir / "run" / "report-sweep.json").read_text())
    assert [r["extra"]["grid_point"] for r in doc["rows"]] == ["S", "M", "L", "XL"]
    assert [(r["config"]["layers"], r["config"]["frame_length"]) for r in doc["rows"]] == [(1, 10), (1, 20), (2, 10), (2, 20)]
    table = (workdir / "run" / "report-sweep.txt").read_text().splitlines()
    assert len(table) == 2 + 4


def test_inspect_timeline(workdir, capsys):
    assert main(["inspect-timeline", "--dataset", "data.csv", "--node", "u3", "--time", "1e9", "-k", "4", "-n", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["node"] == "u3" and doc["valid_count"] == 3
    assert all(len(f["entries"]) == 4 for f in doc["frames"])
    assert main(["inspect-timeline", "--dataset", "data.csv", "--node", "nobody", "--time", "1"]) == 3
