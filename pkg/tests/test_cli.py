import json
import subprocess
import sys

import pytest

from conftest import TOY_KB
from kgqa.cli import DEFAULTS, build_parser, main, resolve_settings

SMALL = ["--latent-dim", "64", "--attention-hidden", "128", "--classifier-hidden", "64,32", "--batch-size", "64"]
STUB = ["--text-embedder", "stub:64:0"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def toy_kb(tmp_path):
    p = tmp_path / "kb.txt"
    p.write_bytes(TOY_KB)
    return p


def test_ingest(capsys, toy_kb):
    code, out, _ = run(capsys, "ingest", "--kb", toy_kb)
    rep = json.loads(out)["report"]
    assert code == 0 and rep["entities"] == 10 and rep["triples"] == 10 and rep["forward_relations"] == 3
    code, out, _ = run(capsys, "ingest", "--kb", toy_kb, "--expect-metaqa")
    assert code == 4 and json.loads(out)["metaqa_check"]["entities"]["ok"] is False


def test_ingest_malformed(capsys, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("a|r|b\nbroken line\n")
    code, _, err = run(capsys, "ingest", "--kb", bad)
    assert code == 1 and "line 2" in err


def test_ask_with_relations(capsys, toy_kb):
    code, out, _ = run(capsys, "ask", "--kb", toy_kb, "what genres are films by the director of [Memento]", "--relations", "directed_by,directed_by_reverse,has_genre")
    res = json.loads(out)
    assert code == 0 and set(res["answers"]) == {"Science Fiction", "Drama", "Thriller"}
    code, out, _ = run(capsys, "ask", "--kb", toy_kb, "[Ridley Scott]", "--relations", "has_genre")
    assert code == 0 and json.loads(out)["answers"] == []


def test_ask_gold_plan_strategy(capsys, toy_kb):
    code, out, _ = run(capsys, "ask", "--kb", toy_kb, "who starred in [Memento]", "--hops", "1", "--strategy", "gold_plan", "--qtype", "movie_to_actor")
    assert code == 0 and json.loads(out)["answers"] == ["Guy Pearce"]


def test_ask_missing_checkpoint(capsys, toy_kb, tmp_path):
    code, _, err = run(capsys, "ask", "--kb", toy_kb, "[Memento]", "--hops", "1", "--strategy", "neural_greedy", "--checkpoint", tmp_path / "nope.bin")
    assert code == 1 and "checkpoint not found" in err


def test_eval_without_questions_is_usage_error(capsys, toy_kb):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--kb", str(toy_kb), "--report", "r.json"])
    assert exc.value.code == 2


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"beam_B": 5, "cap_M": 7}))
    args = build_parser().parse_args(["eval", "--kb", "k", "--questions", "q", "--report", "r", "--config", str(cfg), "--beam-B", "2"])
    s = resolve_settings(args, {"KGQA_CAP_M": "9", "KGQA_JOBS": "4"})
    assert s["beam_B"] == 2 and s["cap_M"] == 7 and s["jobs"] == 4 and s["seed"] == DEFAULTS["seed"]


def test_bad_config_file(capsys, toy_kb, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("[1, 2]")
    code, _, err = run(capsys, "ingest", "--kb", toy_kb, "--config", cfg)
    assert code == 1 and "JSON object" in err


def test_module_entry_point(toy_kb):
    out = subprocess.run([sys.executable, "-m", "kgqa", "ingest", "--kb", str(toy_kb)], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["report"]["entities"] == 10


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert main(["synth", "--out-dir", str(d), "--per-template", "40"]) == 0
    assert main(["train-transe", "--kb", str(d / "kb.txt"), "--out", str(d / "transe.bin"), "--dim", "32", "--epochs", "100"]) == 0
    return d


def test_gen_scorer_data_reproducible(capsys, pipeline_dir):
    d = pipeline_dir
    for name in ("a", "b"):
        code, _, _ = run(capsys, "gen-scorer-data", "--kb", d / "kb.txt", "--questions", d / "questions_train.jsonl", "--val-questions", d / "questions_dev.jsonl", "--hops", "1", "--out", d / f"{name}.bin")
        assert code == 0
    ma = json.loads((d / "a.bin.manifest.json").read_text())
    mb = json.loads((d / "b.bin.manifest.json").read_text())
    for m in (ma, mb):
        m.pop("started_at"), m.pop("finished_at"), m.pop("outputs"), m["config"].pop("out")
    assert ma == mb
    assert (d / "a.bin").read_bytes() == (d / "b.bin").read_bytes()
    assert ma["input_hashes"] and ma["seed"] == 0


def test_train_eval_ask_neural(capsys, pipeline_dir):
    d = pipeline_dir
    assert run(capsys, "gen-scorer-data", "--kb", d / "kb.txt", "--questions", d / "questions_train.jsonl", "--val-questions", d / "questions_dev.jsonl", "--out", d / "data.bin")[0] == 0
    code, out, _ = run(capsys, "train-scorer", "--kb", d / "kb.txt", "--data", d / "data.bin", "--embeddings", d / "transe.bin", *STUB, *SMALL, "--epochs", "5", "--out", d / "scorer.bin")
    assert code == 0 and json.loads(out)["epochs_run"] == 5
    assert (d / "scorer.bin.manifest.json").is_file()
    code, out, _ = run(capsys, "eval", "--kb", d / "kb.txt", "--questions", d / "questions_test.jsonl", "--strategy", "neural_path", "--checkpoint", d / "scorer.bin", "--embeddings", d / "transe.bin", "--report", d / "report.json")
    rows = json.loads(out)["rows"]
    assert code == 0 and [r["hop"] for r in rows] == [1, 2, 3]
    assert (d / "report.csv").is_file() and (d / "report.efficiency.csv").is_file()
    first = lambda: run(capsys, "ask", "--kb", d / "kb.txt", "which movies share the director of [" + json.loads((d / "questions_test.jsonl").read_text().splitlines()[0])["text"].split("[")[1].split("]")[0] + "]", "--hops", "2",
                        "--strategy", "neural_greedy", "--checkpoint", d / "scorer.bin", "--embeddings", d / "transe.bin")
    a, b = first(), first()
    assert a[0] == 0 and json.loads(a[1])["answers"] == json.loads(b[1])["answers"]
    assert len(json.loads(a[1])["best_chain"]) == 2


def test_export_traces_gold(capsys, pipeline_dir):
    d = pipeline_dir
    code, out, _ = run(capsys, "export-traces", "--kb", d / "kb.txt", "--questions", d / "questions_train.jsonl", "--planner", "gold", "--per-hop", "3", "--out", d / "traces.jsonl")
    lines = (d / "traces.jsonl").read_text().splitlines()
    assert code == 0 and json.loads(out)["records"] == len(lines) == 9


def test_ablate_five_rows(capsys, pipeline_dir):
    d = pipeline_dir
    assert run(capsys, "gen-scorer-data", "--kb", d / "kb.txt", "--questions", d / "questions_train.jsonl", "--val-questions", d / "questions_dev.jsonl", "--out", d / "dall.bin")[0] == 0
    code, out, _ = run(capsys, "ablate", "--kb", d / "kb.txt", "--data", d / "dall.bin", "--embeddings", d / "transe.bin", "--questions", d / "questions_test.jsonl", "--hops", "1",
                       *STUB, *SMALL, "--strategy", "neural_path", "--report", d / "ablation.json")
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0].startswith("Configuration,Hop") and len(rows) == 6
    f1 = {r.split(",")[0]: float(r.split(",")[4]) for r in rows[1:]}
    assert list(f1) == ["TE+GE+HC", "TE+HC", "TE", "GE+HC", "GE"]
    assert f1["TE+GE+HC"] >= f1["GE"] and f1["TE+GE+HC"] >= f1["TE"]
