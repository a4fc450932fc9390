"""End-to-end command-line flows: index -> train -> search -> eval -> sweep,
plus exit-code mapping."""

import json
import subprocess
import sys

import numpy as np
import pytest

from cogtree.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from cogtree.datasets import save_logic, save_math
from cogtree.synthetic import build_logic_world
from cogtree.trainer import TrainingItem, save_items


@pytest.fixture()
def corpus(tmp_path):
    world = build_logic_world(n_samples=8, seed=0)
    logic_path = tmp_path / "eb.test.jsonl"
    save_logic(world.samples, logic_path)
    return world, logic_path


def _items_files(tmp_path, seed=0):
    rng = np.random.default_rng(seed)
    center = np.zeros(8)
    center[0] = 1.0

    def item(label):
        base = center if label == 0 else -center
        return TrainingItem(anchor=base + 0.1 * rng.standard_normal(8), label=label)

    train_items = [item(0) for _ in range(8)] + [item(2) for _ in range(8)]
    val_items = [item(0) for _ in range(4)] + [item(2) for _ in range(4)]
    train_path = tmp_path / "items.jsonl"
    val_path = tmp_path / "val.jsonl"
    save_items(train_items, train_path)
    save_items(val_items, val_path)
    return train_path, val_path


def test_index_command_builds_jsonl(tmp_path, corpus, capsys):
    _, logic_path = corpus
    out = tmp_path / "index.jsonl"
    code = main(
        ["index", "--train", str(logic_path), "--mode", "logic",
         "--backend", "scripted:0", "--out", str(out)]
    )
    assert code == EXIT_OK
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4  # provable samples only
    row = json.loads(lines[0])
    assert set(row) == {"query", "decomposition", "embedding"}


def test_train_scorer_and_trace(tmp_path, capsys):
    train_path, val_path = _items_files(tmp_path)
    out = tmp_path / "scorer.json"
    trace = tmp_path / "trace.csv"
    code = main(
        ["train-scorer", "--items", str(train_path), "--val", str(val_path),
         "--lambda", "1.0", "--lr", "0.05", "--epochs", "40", "--seed", "1",
         "--hidden", "8", "--out", str(out), "--trace", str(trace)]
    )
    assert code == EXIT_OK
    params = json.loads(out.read_text())
    assert params["d"] == 8 and params["h"] == 8
    assert trace.read_text().startswith("epoch,train_loss,val_loss\n")


def test_train_scorer_from_prm(tmp_path):
    prm = tmp_path / "prm.jsonl"
    prm.write_text(
        json.dumps(
            {
                "question": "What is 1+1?",
                "steps": [
                    {"text": "1+1 = 2", "label": "correct"},
                    {"text": "1+1 = 11", "label": "wrong"},
                ],
            }
        )
        + "\n",
        encoding="utf-8",
    )
    out = tmp_path / "scorer.json"
    code = main(
        ["train-scorer", "--prm", str(prm), "--backend", "scripted:0",
         "--epochs", "2", "--out", str(out)]
    )
    assert code == EXIT_OK and out.exists()


def test_search_command_logic(tmp_path, corpus, capsys):
    world, logic_path = corpus
    index_path = tmp_path / "index.jsonl"
    world.index.save(index_path)
    sample = next(s for s in world.samples if s.provable)
    code = main(
        ["search", "--query", sample.goal, "--mode", "logic",
         *sum ((["--theory", t] for t in sample.theory), []),
         "--index", str(index_path), "--backend", "scripted:0", "--seed", "0"]
    )
    assert code == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["query"] == sample.goal
    assert isinstance(out["provable"], bool)
    assert len(out["rollouts"]) == 5


def test_eval_reports_are_byte_identical_across_runs(tmp_path, corpus, capsys):
    world, logic_path = corpus
    index_path = tmp_path / "index.jsonl"
    world.index.save(index_path)
    script_path = tmp_path / "script.json"
    world.backend.save_script(script_path)
    scorer_path = tmp_path / "scorer.json"
    from cogtree.reflective import ScorerParams
    from cogtree.trainer import TrainConfig, train

    params, _ = train(
        ScorerParams.random(d=world.backend.dim, h=16, seed=0),
        world.training_items(seed=0),
        TrainConfig(lam=0.5, learning_rate=1e-2, epochs=40, batch_size=4, seed=0),
    )
    params.save(scorer_path)

    reports = []
    for name in ("a.json", "b.json"):
        code = main(
            ["eval", "--dataset", str(logic_path), "--mode", "logic",
             "--scorer", str(scorer_path), "--index", str(index_path),
             "--backend", f"script:{script_path}", "--seed", "7",
             "--report", str(tmp_path / name)]
        )
        assert code == EXIT_OK
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    payload = json.loads(reports[0])
    assert payload["accuracy"] == 1.0
    assert payload["seed"] == 7


def test_sweep_lambda_synthetic(tmp_path, capsys):
    report = tmp_path / "sweep.csv"
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"learning_rate": 5e-3, "epochs": 10, "seed": 0}))
    code = main(
        ["sweep-lambda", "--values", "0,0.5,1.0", "--synthetic",
         "--config", str(cfg), "--report", str(report)]
    )
    assert code == EXIT_OK
    lines = report.read_text().splitlines()
    assert lines[0] == "lambda,val_accuracy"
    assert len(lines) == 4


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"no_such_key": 1}))
    code = main(
        ["sweep-lambda", "--values", "0.5", "--synthetic",
         "--config", str(bad), "--report", str(tmp_path / "s.csv")]
    )
    assert code == EXIT_CONFIG


def test_lambda_alias_in_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda": 0.25, "epochs": 2}))
    report = tmp_path / "s.csv"
    code = main(
        ["sweep-lambda", "--values", "0.5", "--synthetic",
         "--config", str(cfg), "--report", str(report)]
    )
    assert code == EXIT_OK


def test_data_error_exit_code(tmp_path):
    code = main(
        ["eval", "--dataset", str(tmp_path / "missing.jsonl"), "--mode", "logic",
         "--index", str(tmp_path / "missing-index.jsonl"),
         "--report", str(tmp_path / "r.json")]
    )
    assert code == EXIT_DATA


def test_backend_error_exit_code(tmp_path, corpus, monkeypatch):
    world, logic_path = corpus
    index_path = tmp_path / "index.jsonl"
    world.index.save(index_path)

    import cogtree.backends as backends_mod

    monkeypatch.setattr(backends_mod.time, "sleep", lambda s: None)

    class DeadSession:
        def post(self, url, json=None, headers=None, timeout=None):
            import requests

            raise requests.ConnectionError("down")

    monkeypatch.setattr(
        backends_mod.requests, "Session", lambda: DeadSession()
    )
    code = main(
        ["search", "--query", "goal", "--mode", "logic", "--theory", "t",
         "--index", str(index_path), "--backend", "http://nowhere.invalid"]
    )
    assert code == EXIT_BACKEND


def test_console_entry_point_runs():
    out = subprocess.run(
        [sys.executable, "-m", "cogtree.cli", "--help"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert "sweep-lambda" in out.stdout
