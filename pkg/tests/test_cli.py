import json

import pytest

from gsp_amr import __version__
from gsp_amr.amr import parse_penman
from gsp_amr.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from gsp_amr.corpus import read_alignments


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--n", "8", "--out-dir", str(out)]) == EXIT_OK
    return out


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert capsys.readouterr().out.startswith(f"gsp-amr {__version__} default-config ")


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["eval", "--pred", "x"]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE


def test_missing_file_is_data_error(tmp_path, capsys):
    assert main(["stats", "--amr", str(tmp_path / "missing.amr")]) == EXIT_DATA
    bad = tmp_path / "bad.amr"
    bad.write_text("(a / alpha\n")
    assert main(["stats", "--amr", str(bad)]) == EXIT_DATA
    assert "line" in capsys.readouterr().err


def test_synth_outputs(corpus_dir):
    graphs = parse_penman((corpus_dir / "train.amr").read_text())
    assert len(graphs) == 8
    lines = (corpus_dir / "train.jsonl").read_text().splitlines()
    assert len(lines) == 8 and json.loads(lines[0])["id"] == graphs[0].metadata["id"]
    al = read_alignments(corpus_dir / "alignments.txt")
    # alignment targets are variables as written in the PENMAN file
    for g in graphs:
        ids = {n.id for n in g.nodes}
        assert all(node in ids for _, node in al[g.metadata["id"]])


def test_stats(corpus_dir, capsys):
    assert main(["stats", "--amr", str(corpus_dir / "train.amr"), "--json"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["graphs"] == 8 and rec["root_distance"]["0"] == 8


def test_linearize_is_reproducible(corpus_dir, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        assert main(["linearize", "--amr", str(corpus_dir / "train.amr"), "--output", str(path)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert "<stop>" in a.read_text()


def test_eval_self(corpus_dir, tmp_path, capsys):
    gold = str(corpus_dir / "train.amr")
    jsonl = tmp_path / "scores.jsonl"
    assert main(["eval", "--pred", gold, "--gold", gold, "--jsonl", str(jsonl)]) == EXIT_OK
    table = capsys.readouterr().out
    assert "smatch" in table and "1.0000" in table
    records = [json.loads(line) for line in jsonl.read_text().splitlines()]
    assert [r["type"] for r in records].count("pair") == 8
    corpus = records[-1]
    assert corpus["type"] == "corpus" and corpus["core"]["f1"] == 1.0 and corpus["complete_match"] == 1.0


def test_eval_length_mismatch(corpus_dir, tmp_path):
    one = tmp_path / "one.amr"
    one.write_text("(a / alpha)\n")
    assert main(["eval", "--pred", str(one), "--gold", str(corpus_dir / "train.amr")]) == EXIT_DATA


def test_train_parse_eval(corpus_dir, tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    log = tmp_path / "log.jsonl"
    code = main(["train", "--amr", str(corpus_dir / "train.amr"), "--annotations", str(corpus_dir / "train.jsonl"),
                 "--alignments", str(corpus_dir / "alignments.txt"), "--epochs", "3", "--out", str(ckpt),
                 "--log", str(log), "--quiet"])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["checkpoint"] == str(ckpt)
    assert len(log.read_text().splitlines()) == 3

    pred = tmp_path / "pred.amr"
    assert main(["parse", "--model", str(ckpt), "--input", str(corpus_dir / "train.jsonl"),
                 "--output", str(pred), "--beam", "2"]) == EXIT_OK
    graphs = parse_penman(pred.read_text())
    assert len(graphs) == 8
    assert all("gsp-truncated" in g.metadata or "gsp-error" in g.metadata for g in graphs)

    plain = tmp_path / "plain.txt"
    plain.write_text("the dog sleeps\n\nthe cat runs\n")
    assert main(["parse", "--model", str(ckpt), "--input", str(plain), "--beam", "1"]) == EXIT_OK
    assert len(parse_penman(capsys.readouterr().out)) == 2

    assert main(["eval", "--pred", str(pred), "--gold", str(corpus_dir / "train.amr"),
                 "--metric", "smatch"]) == EXIT_OK


def test_bad_config_key(corpus_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"base": "toy", "bogus": 1}))
    assert main(["train", "--amr", str(corpus_dir / "train.amr"), "--config", str(cfg),
                 "--out", str(tmp_path / "m")]) == EXIT_DATA


@pytest.mark.slow
def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--entries", "3"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["passed"] and rec["max_rel_err"] < 1e-4
