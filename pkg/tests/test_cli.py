import json

import pytest

from semigraph.ablation import RunRecord, VariantSummary
from semigraph.cli import check_study, main
from semigraph.training import Metrics

FAST = ["--set", "epochs=1", "--set", "d_emb=8", "--set", "hidden=6", "--set", "d_node=8",
        "--set", "d_gcn=8", "--set", "d_cls=6", "--set", "batch_size=8"]


@pytest.fixture
def corpus(tmp_path):
    data = tmp_path / "data.jsonl"
    assert main(["synth", "--family", "caption", "--n", "40", "--seed", "1", "--out", str(data)]) == 0
    unl = tmp_path / "unl.jsonl"
    assert main(["synth", "--family", "caption", "--n", "12", "--unlabeled", "--out", str(unl)]) == 0
    return data, unl


def test_extract(tmp_path, capsys):
    html = tmp_path / "page.html"
    html.write_text("<table><caption>c</caption><tr><th>a</th></tr><tr><td>x</td></tr></table>", encoding="utf-8")
    out = tmp_path / "t.jsonl"
    assert main(["extract", "--input", str(html), "--out", str(out), "--json", str(tmp_path / "e.json")]) == 0
    rec = json.loads(out.read_text(encoding="utf-8"))
    assert rec["header"] == ["a"] and rec["rows"] == [["x"]]
    assert "page-0" in capsys.readouterr().out


def test_pretrain_train_eval_score(tmp_path, corpus, capsys):
    data, unl = corpus
    pre = tmp_path / "pre.ckpt"
    assert main(["pretrain", "--data", str(unl), "--epochs", "1", "--vocab-from", str(data), "--out", str(pre)]
                + FAST) == 0
    ckpt = tmp_path / "ft.ckpt"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lr=0.01\n# comment\n", encoding="utf-8")
    rc = main(["train", "--data", str(data), "--init", str(pre), "--out", str(ckpt), "--config", str(cfg),
               "--report", str(tmp_path / "rep"), "--json", str(tmp_path / "train.json")] + FAST)
    assert rc == 0
    assert (tmp_path / "rep" / "history.png").stat().st_size > 0
    doc = json.loads((tmp_path / "train.json").read_text())
    assert set(doc["test"]) >= {"precision", "recall", "f1"}
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data)]) == 0
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--check", "--min-f1", "1.01"]) == 1
    capsys.readouterr()
    assert main(["score", "--ckpt", str(ckpt), "--record", str(data), "--index", "2"]) == 0
    assert "score" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["score", "--ckpt", str(ckpt), "--record", str(data), "--index", "999"])


def test_ablate_outputs(tmp_path, corpus):
    data, unl = corpus
    out = tmp_path / "abl"
    rc = main(["ablate", "--data", str(data), "--seeds", "0", "--only", "full,w/o GCN", "--out-dir", str(out),
               "--check", "--min-f1", "0", "--min-gap", "-1"] + FAST)
    assert rc == 0
    doc = json.loads((out / "components.json").read_text())
    assert [a["variant"] for a in doc["aggregates"]] == ["full", "w/o GCN"]
    assert (out / "components.png").exists()
    assert (out / "components.csv").read_text().splitlines()[0] == "variant,seed,precision,recall,f1"
    rc = main(["ablate", "--study", "pretrain", "--data", str(data), "--unlabeled", str(unl), "--seeds", "0",
               "--only", "none,wcm+npo", "--out-dir", str(out), "--set", "pretrain_epochs=1"] + FAST)
    assert rc == 0
    assert [a["variant"] for a in json.loads((out / "pretrain.json").read_text())["aggregates"]] == ["none", "wcm+npo"]


def summary(name, f1s):
    s = VariantSummary(name)
    for k, f in enumerate(f1s):
        tp = int(round(f * 100))
        s.runs.append(RunRecord(name, k, Metrics(tp, 100 - tp, 100 - tp, 0)))
    return s


def test_check_study_rules():
    good = [summary("full", [0.95, 0.93]), summary("w/o GCN", [0.6, 0.62])]
    assert check_study("components", good, 0.9, 0.1) == []
    bad = [summary("full", [0.85, 0.8]), summary("w/o GCN", [0.8, 0.8])]
    assert len(check_study("components", bad, 0.9, 0.1)) == 2
    pre = [summary("none", [0.7]), summary("wcm", [0.75]), summary("npo", [0.71]), summary("wcm+npo", [0.74])]
    assert check_study("pretrain", pre, 0.9, 0.02) == ["wcm+npo 0.7400 < wcm 0.7500"]


def test_bad_override():
    with pytest.raises(SystemExit):
        main(["train", "--data", "x", "--out", "y", "--set", "novalue"])
