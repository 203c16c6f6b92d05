import json

import pydot
import pytest

from pathkg.cli import main
from pathkg.config import load_config
from pathkg.kg import load_split
from pathkg.synthetic import make_inductive_kinship

SMALL = """[model]
width = 8
hidden = 8
num_steps = 3
node_ratio = 0.5

[train]
batch_size = 32
num_negatives = 4
eval_batch_size = 16
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    base, _ = make_inductive_kinship(root / "kin", num_families=3, seed=5)
    (root / "small.ini").write_text(SMALL)
    out = root / "run"
    code = main(["train", "--config", str(root / "small.ini"), "--dataset", str(base), "--epochs", "1",
                 "--out", str(out), "--quiet"])
    assert code == 0
    return root, base, out


def test_train_writes_artifacts(workspace):
    root, base, out = workspace
    for name in ("best.ckpt", "last.ckpt", "metrics.log", "config.ini", "summary.json"):
        assert (out / name).is_file(), name
    cfg = load_config(out / "config.ini")
    assert cfg.train.epochs == 1 and cfg.model.width == 8 and cfg.data.dataset == str(base)
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["test"]) >= {"mrr", "hits@1", "hits@3", "hits@10"}
    assert "epoch=0" in (out / "metrics.log").read_text()


def test_resume_continues_epochs(workspace, tmp_path):
    root, base, out = workspace
    code = main(["train", "--config", str(out / "config.ini"), "--epochs", "2", "--resume",
                 str(out / "last.ckpt"), "--out", str(tmp_path), "--quiet"])
    assert code == 0
    log = (tmp_path / "metrics.log").read_text()
    assert "start_epoch=1" in log and "epoch=1" in log
    assert len(json.loads((tmp_path / "summary.json").read_text())["epochs"]) == 1


def test_eval_deterministic_and_filter_helps(workspace, capsys):
    root, base, out = workspace
    ckpt = str(out / "best.ckpt")
    runs = []
    for extra in ([], [], ["--unfiltered"]):
        assert main(["eval", "--checkpoint", ckpt, *extra]) == 0
        runs.append(json.loads(capsys.readouterr().out))
    assert runs[0] == runs[1]
    assert runs[0]["mrr"] >= runs[2]["mrr"] and runs[2]["filtered"] is False


def test_explain_prints_paths_and_dot(workspace, capsys, tmp_path):
    root, base, out = workspace
    bundle = load_split(base, "inductive")
    names = bundle.test_entities.names
    rel_names = bundle.relations.names
    h, r, t = bundle.test[0]
    dot = tmp_path / "x.dot"
    code = main(["explain", "--checkpoint", str(out / "best.ckpt"), "--head", names[h],
                 "--relation", rel_names[r], "--answer", names[t], "--beam", "5", "--dot", str(dot)])
    assert code == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert len(printed) <= 5
    for line in printed:
        score, walk = line.split("\t")
        assert 0 <= float(score) <= 1 and walk.startswith(names[h]) and walk.endswith(names[t])
    (graph,) = pydot.graph_from_dot_data(dot.read_text())
    assert graph.get_name().strip('"') == "explanation"


def test_explain_unknown_entity_is_usage_error(workspace, capsys):
    root, base, out = workspace
    code = main(["explain", "--checkpoint", str(out / "best.ckpt"), "--head", "nobody",
                 "--relation", "0", "--answer", "0"])
    assert code == 2 and "unknown entity" in capsys.readouterr().err


def test_bench_counts(workspace, tmp_path):
    root, base, out = workspace
    code = main(["bench", "--checkpoint", str(out / "best.ckpt"), "--ratios", "0.1,0.5,1", "--max-queries", "20",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = json.loads((tmp_path / "bench.json").read_text())
    assert [r["alpha"] for r in rows] == [0.1, 0.5, 1.0]
    full = rows[-1]
    assert full["messages"] == full["full_messages"]
    msgs = [r["messages"] for r in rows]
    assert msgs == sorted(msgs)


def test_missing_dataset_exits_2(tmp_path, capsys):
    assert main(["train", "--dataset", str(tmp_path / "absent"), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["train", "--out", str(tmp_path / "o")]) == 2


def test_bad_config_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepochs = 2\nlearnin_rate = 0.1\n")
    assert main(["train", "--config", str(bad)]) == 2
    assert f"{bad}:3" in capsys.readouterr().err


def test_oracle_check(capsys):
    assert main(["oracle-check", "--trials", "20", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert "failed=0" in first.splitlines()[-1]
    assert main(["oracle-check", "--trials", "20", "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    assert main(["oracle-check", "--trials", "20", "--seed", "3", "--fault"]) == 1
    assert "failure" in capsys.readouterr().out
