"""
Desk-scale learning checks driven through the command line on a reduced
synthetic corpus. Every test here trains models; deselect with -m "not slow".
"""

import json
import os
import shutil

import pytest

from main import EXIT_OK, DialPathApp

pytestmark = pytest.mark.slow

SMALL_RUN = """\
seed = 7
n_dialogues = 150
val_dialogues = 30
d = 32
heads = 2
dropout = 0.0
decoder_layers = 1
batch_size = 8
peak_lr = 0.005
warmup_epochs = 1
lr_decay = none
epochs = 30
"""

SEMANTICS = ("compositional", "global", "fully_connected")


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("DIALPATH_SEED", raising=False)


def run(*argv):
    return DialPathApp(["--no-color", *argv]).run()


class SmallRun:
    """One reduced corpus plus path generators trained on demand, one per graph variant."""

    def __init__(self, root):
        self.root = str(root)
        self.conf = os.path.join(self.root, "small.conf")
        with open(self.conf, "w", encoding="utf-8") as f:
            f.write(SMALL_RUN)
        self.corpus = os.path.join(self.root, "corpus")
        assert run("-c", self.conf, "gen-corpus", "-o", self.corpus) == EXIT_OK
        self.train = os.path.join(self.corpus, "train.jsonl")
        self.val = os.path.join(self.corpus, "val.jsonl")
        # Without a gold_paths.jsonl sibling, evaluate scores against the oracle paths.
        self.oracle_val = os.path.join(self.root, "oracle_gold", "val.jsonl")
        os.makedirs(os.path.dirname(self.oracle_val))
        shutil.copyfile(self.val, self.oracle_val)
        self.models = {}

    def model(self, semantics):
        if semantics not in self.models:
            path = os.path.join(self.root, f"paths_{semantics}.dpc")
            assert run("-c", self.conf, "--semantics", semantics, "train-paths", "--train", self.train,
                       "--val", self.val, "-o", path) == EXIT_OK
            self.models[semantics] = path
        return self.models[semantics]

    def report(self, semantics, strategy, corpus=None, beam=1):
        corpus = corpus or self.oracle_val
        gold = os.path.basename(os.path.dirname(corpus))
        output = os.path.join(self.root, f"report_{semantics}_{strategy}_beam{beam}_{gold}.json")
        argv = ["-c", self.conf, "--semantics", semantics, "evaluate", "--corpus", corpus,
                "--strategy", strategy, "--beam", str(beam), "-o", output]
        if strategy == "learned":
            argv += ["--model", self.model(semantics)]
        assert run(*argv) == EXIT_OK
        with open(output, encoding="utf-8") as f:
            return json.load(f)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    return SmallRun(tmp_path_factory.mktemp("acceptance"))


def test_learned_paths_match_held_out_oracle(small_run):
    greedy = small_run.report("compositional", "learned")
    beam = small_run.report("compositional", "learned", beam=5)
    assert greedy["count"] == 30
    assert greedy["exact_match"] >= 0.95
    assert abs(greedy["exact_match"] - beam["exact_match"]) <= 0.01


def test_strategy_ordering(small_run):
    # All decreasing paths are candidates here, so a random draw is a real baseline.
    scores = {strategy: small_run.report("fully_connected", strategy)["exact_match"]
              for strategy in ("oracle", "learned", "last_1", "random")}
    assert scores["oracle"] >= scores["learned"] > scores["last_1"] >= scores["random"]
    assert scores["learned"] - scores["random"] >= 0.20


def test_graph_variants_train_and_compare(small_run):
    reports = {semantics: small_run.report(semantics, "learned") for semantics in SEMANTICS}
    for report in reports.values():
        assert report["count"] == 30
        assert {"exact_match", "edge_precision", "edge_recall", "edge_f1"} <= set(report)
    assert reports["compositional"]["exact_match"] >= reports["global"]["exact_match"] - 0.01


def test_last_1_trails_learned_on_planted_paths(small_run):
    last_1 = small_run.report("compositional", "last_1", corpus=small_run.val)
    learned = small_run.report("compositional", "learned", corpus=small_run.val)
    assert last_1["gold"] == learned["gold"] == "planted"
    assert last_1["exact_match"] < learned["exact_match"]
