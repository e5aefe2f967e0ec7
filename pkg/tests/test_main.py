import json
import os

import pytest

from main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, DialPathApp


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("DIALPATH_SEED", raising=False)


def run(*argv):
    return DialPathApp(["--no-color", *argv]).run()


@pytest.fixture
def corpus_dir(tmp_path):
    out_dir = str(tmp_path / "syn")
    assert run("--seed", "5", "gen-corpus", "-o", out_dir, "--n", "10", "--val", "2") == EXIT_OK
    return out_dir


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


@pytest.mark.parametrize("argv", [
    [],
    ["unknown-command"],
    ["evaluate"],
    ["build-graph", "--turn", "five"],
])
def test_usage_errors(argv):
    assert run(*argv) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert run("--help") == EXIT_OK
    assert "gen-corpus" in capsys.readouterr().out


def test_build_graph_on_fixture(capsys):
    assert run("build-graph", "--turn", "5") == EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["dialogue"] == "living_room"
    assert document["adjacency_rows"]["5"] == [2, 4, 5]
    assert document["adjacency_rows"]["3"] == [3]


def test_build_graph_dot(tmp_path):
    output = str(tmp_path / "graph.dot")
    assert run("--direction", "TODirect", "build-graph", "--format", "dot", "-o", output) == EXIT_OK
    assert _read(output).startswith('digraph "living_room_t5"')
    assert "direction = TODirect" in _read(str(tmp_path / "run.conf"))


def test_bad_turn_fails(capsys):
    assert run("build-graph", "--turn", "9") == EXIT_FAILURE
    assert "Failed to build graph" in capsys.readouterr().err


def test_missing_config_fails(tmp_path):
    assert run("-c", str(tmp_path / "absent.conf"), "build-graph") == EXIT_FAILURE


def test_oracle_paths_on_fixture(capsys):
    assert run("oracle-paths") == EXIT_OK
    records = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(records) == 1
    assert records[0]["path"] == [5, 4, 2]
    assert records[0]["score"] == 3
    assert records[0]["candidates"] == 4
    assert records[0]["candidate_paths"] == [[5], [5, 4], [5, 2], [5, 4, 2]]
    assert records[0]["ties"] == [[5, 4, 2]]


def test_gen_corpus_is_reproducible(tmp_path, corpus_dir):
    again = str(tmp_path / "again")
    assert run("--seed", "5", "gen-corpus", "-o", again, "--n", "10", "--val", "2") == EXIT_OK
    for name in ("train.jsonl", "val.jsonl", "gold_paths.jsonl"):
        assert _read(os.path.join(again, name)) == _read(os.path.join(corpus_dir, name))
    assert "seed = 5" in _read(os.path.join(corpus_dir, "run.conf"))


def test_evaluate_baseline_against_planted_paths(tmp_path, corpus_dir):
    report_path = str(tmp_path / "report.json")
    predictions = str(tmp_path / "predictions.jsonl")
    assert run("evaluate", "--corpus", os.path.join(corpus_dir, "val.jsonl"), "--strategy", "last_1",
               "-o", report_path, "--predictions", predictions) == EXIT_OK
    report = json.loads(_read(report_path))
    assert report["strategy"] == "last_1"
    assert report["gold"] == "planted"
    assert report["count"] == 2
    assert 0.0 <= report["edge_f1"] <= 1.0
    rows = [json.loads(line) for line in _read(predictions).splitlines()]
    assert all(row["path"][1] == row["path"][0] - 1 for row in rows)


def test_learned_strategy_needs_model(corpus_dir):
    assert run("evaluate", "--corpus", os.path.join(corpus_dir, "val.jsonl")) == EXIT_FAILURE


@pytest.mark.slow
def test_train_then_evaluate(tmp_path, corpus_dir):
    conf = tmp_path / "small.conf"
    conf.write_text("d = 8\nheads = 2\ndecoder_layers = 1\nbatch_size = 4\nwarmup_epochs = 1\n",
                    encoding="utf-8")
    model = str(tmp_path / "model.dpc")
    train = os.path.join(corpus_dir, "train.jsonl")
    val = os.path.join(corpus_dir, "val.jsonl")
    assert run("-c", str(conf), "train-paths", "--train", train, "--val", val, "-o", model,
               "--epochs", "2") == EXIT_OK
    assert os.path.exists(model)

    report_path = str(tmp_path / "report.json")
    assert run("-c", str(conf), "evaluate", "--corpus", val, "--model", model, "--beam", "3",
               "-o", report_path) == EXIT_OK
    assert json.loads(_read(report_path))["strategy"] == "learned"

    decoded_path = str(tmp_path / "path.json")
    assert run("-c", str(conf), "decode-path", "--model", model, "--corpus", val, "-o", decoded_path) == EXIT_OK
    decoded = json.loads(_read(decoded_path))
    assert {"dialogue", "turn", "path", "score", "candidates", "step_probabilities"} <= set(decoded)
    assert isinstance(decoded["candidates"], int) and decoded["candidates"] >= 1
    assert decoded["path"][0] == decoded["turn"]
    assert decoded["score"] >= 0


def test_inspect_on_fixture(capsys):
    assert run("inspect", "--turn", "5") == EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["gold_path"] == [5, 4, 2]
    assert [c["path"] for c in document["candidates"] if c["tied"]] == [[5, 4, 2]]
    assert document["resolved_turns"]["5"].startswith("is the bag on the cushion")
    assert "generated" not in document


def test_tau_sweep(tmp_path, corpus_dir):
    output = str(tmp_path / "sweep.jsonl")
    assert run("inspect", "--tau-sweep", "--corpus", os.path.join(corpus_dir, "train.jsonl"),
               "-o", output) == EXIT_OK
    records = [json.loads(line) for line in _read(output).splitlines()]
    assert [record["tau"] for record in records] == [0.4, 0.5, 0.6, 0.7, 0.8]
    assert all("oracle_recovery" in record for record in records)
    densities = [record["edge_density"] for record in records]
    assert densities == sorted(densities, reverse=True)


def _tree(root):
    files = {}
    for directory, _, names in os.walk(root):
        for name in names:
            path = os.path.join(directory, name)
            with open(path, "rb") as f:
                files[os.path.relpath(path, root)] = f.read()
    return files


def test_global_options_after_command_are_reproducible(tmp_path):
    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    assert run("gen-corpus", "--seed", "7", "--n", "500", "-o", first) == EXIT_OK
    assert run("gen-corpus", "--seed", "7", "--n", "500", "-o", second) == EXIT_OK
    tree = _tree(first)
    assert {"train.jsonl", "val.jsonl", "gold_paths.jsonl", "grids.dpc", "run.conf"} <= set(tree)
    assert tree == _tree(second)
    assert "seed = 7" in tree["run.conf"].decode("utf-8")


@pytest.mark.parametrize("argv, key, expected", [
    (["--seed", "3", "gen-corpus", "-o", "out"], "seed", 3),
    (["gen-corpus", "--seed", "3", "-o", "out"], "seed", 3),
    (["--seed", "3", "gen-corpus", "--seed", "4", "-o", "out"], "seed", 4),
    (["train-paths", "--config", "run.conf", "--train", "t.jsonl", "-o", "m.dpc"], "config", "run.conf"),
    (["-c", "run.conf", "train-paths", "--train", "t.jsonl", "-o", "m.dpc"], "config", "run.conf"),
    (["build-graph", "--tau", "0.5", "--direction", "TODirect"], "direction", "TODirect"),
    (["--verbose", "oracle-paths"], "verbose", True),
    (["oracle-paths", "-v", "--oracle-mode", "coverage"], "oracle_mode", "coverage"),
])
def test_global_options_on_either_side(argv, key, expected):
    app = DialPathApp(argv)
    assert app.parse_arguments()
    assert getattr(app.args, key) == expected


def test_seed_after_command_reaches_config(tmp_path):
    out_dir = str(tmp_path / "syn")
    assert run("gen-corpus", "--seed", "11", "--n", "4", "--val", "1", "-o", out_dir) == EXIT_OK
    assert "seed = 11" in _read(os.path.join(out_dir, "run.conf"))
