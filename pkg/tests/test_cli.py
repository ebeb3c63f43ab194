"""Command-line pipeline: configs, exit codes, artifacts, determinism."""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import sys

import pytest

from sentbeam.classify import KeywordClassifier
from sentbeam.cli import load_run_config, main
from sentbeam.core import ControlMode
from sentbeam.corpus import load_corpus
from sentbeam.errors import ConfigError
from sentbeam.lm import ToyLM
from sentbeam.protocol import PROTOCOL_VERSION, connect_tcp


def write_config(path, **overrides):
    data = {
        "name": path.stem,
        "corpus": "eval.jsonl",
        "model": "model.json",
        "lexicons": "lexicons.json",
        "output": f"{path.stem}.jsonl",
        "mode": "sentence",
        "runs": 1,
        "workers": 1,
        "params": {"k": 4, "n": 2, "top_p": 0.9, "mix": "beam+nucleus",
                   "seed": 5, "max_sentence_tokens": 24},
    }
    data.update(overrides)
    path.write_text(json.dumps(data), "utf-8")
    return path


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A working directory with corpora, model, lexicons, and run configs."""
    root = tmp_path_factory.mktemp("cliws")
    assert main(["synth", "--preset", "train", "--documents", "250",
                 "--out", str(root / "train.jsonl")]) == 0
    assert main(["synth", "--preset", "reference", "--documents", "6",
                 "--out", str(root / "eval.jsonl"),
                 "--spec-out", str(root / "spec.json"),
                 "--lexicons-out", str(root / "lexicons.json")]) == 0
    assert main(["fit", "--corpus", str(root / "train.jsonl"),
                 "--model-out", str(root / "model.json"),
                 "--order", "3", "--alpha", "0.01"]) == 0
    write_config(root / "guided.json", runs=2, output="guided.jsonl")
    write_config(root / "guided1.json", output="guided1.jsonl")
    write_config(root / "baseline.json", output="baseline.jsonl",
                 params={"beam_width": 4, "max_sentence_tokens": 24})
    return root


# --- synth and fit -----------------------------------------------------------

def test_synth_outputs(ws):
    docs = load_corpus(ws / "eval.jsonl")
    assert len(docs) == 6
    assert [d.id for d in docs] == [f"doc-{i:05d}" for i in range(6)]
    assert (ws / "spec.json").exists()
    KeywordClassifier.load(ws / "lexicons.json")  # loads cleanly


def test_synth_spec_roundtrip(ws, tmp_path):
    out = tmp_path / "again.jsonl"
    assert main(["synth", "--spec", str(ws / "spec.json"), "--out", str(out)]) == 0
    assert out.read_bytes() == (ws / "eval.jsonl").read_bytes()


def test_synth_overrides_change_output(ws, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["synth", "--preset", "reference", "--documents", "4",
                 "--out", str(a)]) == 0
    assert main(["synth", "--preset", "reference", "--documents", "4",
                 "--seed", "99", "--out", str(b)]) == 0
    assert len(load_corpus(a)) == 4
    assert a.read_bytes() != b.read_bytes()


def test_fit_model_covers_corpus(ws):
    model = ToyLM.load(ws / "model.json")
    docs = load_corpus(ws / "train.jsonl")
    surfaces = set(model.vocabulary.surfaces)
    for doc in docs[:20]:
        for sent in doc.target_sentences:
            assert set(sent.split()) <= surfaces


def test_fit_learned_lexicons(ws, tmp_path):
    out = tmp_path / "learned.json"
    assert main(["fit", "--corpus", str(ws / "train.jsonl"),
                 "--model-out", str(tmp_path / "m.json"),
                 "--lexicons-out", str(out)]) == 0
    clf = KeywordClassifier.load(out)
    assert "abstract" in clf.label_set.names


# --- run configs -------------------------------------------------------------

def test_load_run_config_resolves_paths(ws):
    cfg = load_run_config(ws / "guided.json")
    assert cfg.corpus == ws / "eval.jsonl"
    assert cfg.output == ws / "guided.jsonl"
    assert cfg.mode is ControlMode.SENTENCE
    assert cfg.runs == 2 and not cfg.baseline
    assert cfg.params.k == 4 and cfg.params.seed == 5


def test_load_run_config_baseline_forces_single_run(tmp_path, capsys):
    path = write_config(tmp_path / "b.json", runs=3,
                        params={"beam_width": 4})
    cfg = load_run_config(path)
    assert cfg.baseline and cfg.runs == 1
    assert "forcing runs=1" in capsys.readouterr().err


@pytest.mark.parametrize(
    "overrides",
    [
        {"extra_key": 1},
        {"mode": "paragraph"},
        {"runs": 0},
        {"workers": "two"},
        {"params": {"k": 4, "mix": "annealed"}},
        {"params": {"k": 4, "mix": "beam+nucleus", "mystery": 1}},
        {"params": {"k": 0, "mix": "beam+nucleus"}},
        {"params": []},
    ],
)
def test_load_run_config_rejects_bad_values(tmp_path, overrides):
    path = write_config(tmp_path / "bad.json", **overrides)
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_load_run_config_rejects_missing_keys_and_bad_json(tmp_path):
    path = tmp_path / "short.json"
    path.write_text('{"corpus": "c.jsonl"}', "utf-8")
    with pytest.raises(ConfigError, match="lacks keys"):
        load_run_config(path)
    path.write_text("{nope", "utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")


# --- generate ----------------------------------------------------------------

def read_records(path):
    return [json.loads(line) for line in path.read_text("utf-8").splitlines()]


def test_generate_record_schema_and_order(ws):
    assert main(["generate", "--config", str(ws / "guided.json")]) == 0
    records = read_records(ws / "guided.jsonl")
    assert len(records) == 12  # 6 docs x 2 runs, run-major
    assert [r["run"] for r in records] == [0] * 6 + [1] * 6
    ids = [f"doc-{i:05d}" for i in range(6)]
    assert [r["id"] for r in records[:6]] == ids
    assert [r["id"] for r in records[6:]] == ids
    for rec in records:
        assert set(rec) == {
            "id", "run", "mode", "seed", "control", "tokens", "text",
            "labels", "sentences", "norm_loglik", "combined_score", "finished",
        }
        assert rec["mode"] == "sentence"
        assert rec["labels"] == rec["control"]
        assert len(rec["sentences"]) == len(rec["control"])


def test_generate_rerun_is_byte_identical(ws, tmp_path):
    out = tmp_path / "again.jsonl"
    assert main(["generate", "--config", str(ws / "guided.json"),
                 "--out", str(out)]) == 0
    assert out.read_bytes() == (ws / "guided.jsonl").read_bytes()


def test_generate_worker_count_does_not_change_bytes(ws, tmp_path):
    out = tmp_path / "pooled.jsonl"
    assert main(["generate", "--config", str(ws / "guided.json"),
                 "--workers", "2", "--out", str(out)]) == 0
    assert out.read_bytes() == (ws / "guided.jsonl").read_bytes()


def test_generate_seed_override_changes_records(ws, tmp_path):
    out = tmp_path / "reseeded.jsonl"
    assert main(["generate", "--config", str(ws / "guided.json"),
                 "--seed", "99", "--out", str(out)]) == 0
    records = read_records(out)
    assert records[0]["seed"] != read_records(ws / "guided.jsonl")[0]["seed"]


def test_generate_trace_output(ws, tmp_path):
    trace = tmp_path / "trace.jsonl"
    assert main(["generate", "--config", str(ws / "guided1.json"),
                 "--out", str(tmp_path / "r.jsonl"), "--trace", str(trace)]) == 0
    steps = read_records(trace)
    assert steps, "trace file should not be empty"
    first = steps[0]
    assert {"id", "run", "step", "candidates", "survivors"} <= set(first)
    assert first["step"] == 0 and first["candidates"]


def test_generate_baseline_records(ws):
    assert main(["generate", "--config", str(ws / "baseline.json")]) == 0
    records = read_records(ws / "baseline.jsonl")
    assert len(records) == 6 and all(r["run"] == 0 for r in records)
    for rec in records:
        assert rec["norm_loglik"] == rec["combined_score"]
        assert all(s["class_logprob"] == 0.0 for s in rec["sentences"])


# --- evaluate and compare ----------------------------------------------------

def test_evaluate_trusted_labels_are_perfect(ws, tmp_path):
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "rows.csv"
    assert main(["evaluate", "--records", str(ws / "guided.jsonl"),
                 "--corpus", str(ws / "eval.jsonl"),
                 "--out", str(report_path), "--csv", str(csv_path)]) == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["runs"] == 2 and len(report["documents"]) == 12
    assert report["mean_structure_similarity"] == 1.0
    assert report["total_edits"] == 0.0
    rows = csv_path.read_text("utf-8").splitlines()
    assert rows[0] == "id,run,structure_similarity,edit_distance,rouge1,rouge2,rougel"
    assert len(rows) == 13


def test_evaluate_with_tagger(ws, tmp_path):
    report_path = tmp_path / "report.json"
    assert main(["evaluate", "--records", str(ws / "guided.jsonl"),
                 "--corpus", str(ws / "eval.jsonl"),
                 "--lexicons", str(ws / "lexicons.json"),
                 "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert 0.0 <= report["mean_structure_similarity"] <= 1.0
    assert 0.0 <= report["mean_rouge1"] <= 1.0


def test_evaluate_rejects_unknown_record_id(ws, tmp_path):
    bad = tmp_path / "bad.jsonl"
    rec = read_records(ws / "guided.jsonl")[0]
    rec["id"] = "doc-99999"
    bad.write_text(json.dumps(rec) + "\n", "utf-8")
    assert main(["evaluate", "--records", str(bad),
                 "--corpus", str(ws / "eval.jsonl")]) == 4


def test_compare_reports_deltas(ws, tmp_path):
    out = tmp_path / "cmp.json"
    assert main(["compare", str(ws / "baseline.json"), str(ws / "guided.json"),
                 "--out", str(out)]) == 0
    cmp_report = json.loads(out.read_text("utf-8"))
    names = [e["name"] for e in cmp_report["entries"]]
    assert names == ["baseline", "guided"]
    delta = cmp_report["deltas"][0]
    assert delta["vs"] == "baseline"
    assert {"edits_reduction", "similarity_gain"} <= set(delta)


def test_compare_rejects_mixed_corpora(ws, tmp_path):
    other = tmp_path / "other.jsonl"
    assert main(["synth", "--preset", "reference", "--documents", "6",
                 "--seed", "3", "--out", str(other)]) == 0
    stray = write_config(tmp_path / "stray.json", corpus=str(other),
                         model=str(ws / "model.json"),
                         lexicons=str(ws / "lexicons.json"),
                         output=str(ws / "guided.jsonl"))
    assert main(["compare", str(ws / "guided.json"), str(stray)]) == 4


# --- exit codes --------------------------------------------------------------

def test_exit_code_for_config_errors(ws, tmp_path):
    assert main(["generate", "--config", str(tmp_path / "nope.json")]) == 2
    bad = write_config(tmp_path / "bad.json", mode="paragraph")
    assert main(["generate", "--config", str(bad)]) == 2
    assert main(["generate", "--config", str(ws / "guided.json"),
                 "--backend", "remote", "--workers", "2"]) == 2
    assert main(["generate", "--config", str(ws / "guided.json"),
                 "--backend", "remote"]) == 2  # no --remote-cmd/--remote-addr


def test_exit_code_for_missing_data(ws, tmp_path):
    cfg = write_config(tmp_path / "lost.json")  # relative paths resolve to tmp_path
    assert main(["generate", "--config", str(cfg)]) == 4
    assert main(["evaluate", "--records", str(tmp_path / "no.jsonl"),
                 "--corpus", str(ws / "eval.jsonl")]) == 4


def test_exit_code_for_backend_failure(ws, tmp_path):
    cfg = write_config(tmp_path / "r.json", corpus=str(ws / "eval.jsonl"),
                       model=str(ws / "model.json"),
                       lexicons=str(ws / "lexicons.json"),
                       output=str(tmp_path / "r.jsonl"))
    gibberish = f"{sys.executable} -c \"print('not a protocol line')\""
    assert main(["generate", "--config", str(cfg), "--backend", "remote",
                 "--remote-cmd", gibberish, "--timeout", "10"]) == 3


# --- remote backend and serving ----------------------------------------------

def test_generate_remote_stdio_matches_in_process(ws, tmp_path):
    assert main(["generate", "--config", str(ws / "guided1.json")]) == 0
    serve_cmd = (
        f"{shlex.quote(sys.executable)} -m sentbeam serve "
        f"--model {shlex.quote(str(ws / 'model.json'))} "
        f"--lexicons {shlex.quote(str(ws / 'lexicons.json'))}"
    )
    out = tmp_path / "remote.jsonl"
    assert main(["generate", "--config", str(ws / "guided1.json"),
                 "--backend", "remote", "--remote-cmd", serve_cmd,
                 "--out", str(out)]) == 0
    assert out.read_bytes() == (ws / "guided1.jsonl").read_bytes()


def test_serve_tcp_announces_and_answers(ws):
    proc = subprocess.Popen(
        [sys.executable, "-m", "sentbeam", "serve",
         "--model", str(ws / "model.json"),
         "--lexicons", str(ws / "lexicons.json"),
         "--tcp", "127.0.0.1:0"],
        stdout=subprocess.PIPE, text=True,
    )
    try:
        banner = proc.stdout.readline().strip()
        assert banner.startswith("listening on ")
        host, port = banner.removeprefix("listening on ").rsplit(":", 1)
        client = connect_tcp(host, int(port), timeout=10.0)
        assert client.capabilities.version == PROTOCOL_VERSION
        client.shutdown()
        client.close()
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()


def test_serve_rejects_bad_tcp_spec(ws):
    assert main(["serve", "--model", str(ws / "model.json"),
                 "--lexicons", str(ws / "lexicons.json"),
                 "--tcp", "localhost"]) == 2
