"""Command-line interface for the whole pipeline.

Subcommands:
  synth     generate a synthetic labeled corpus (built-in presets or a spec file)
  fit       fit the n-gram model and keyword lexicons from a corpus
  generate  run structure-controlled generation per a run-config file
  evaluate  score generation records against their corpus
  compare   evaluate several finished run configs side by side
  serve     expose a model and classifier over the backend wire protocol

A run config is a JSON object with paths resolved relative to the config file:

  {"name": "guided-k8", "corpus": "eval.jsonl", "model": "toylm.json",
   "lexicons": "lexicons.json", "output": "records.jsonl",
   "mode": "sentence", "runs": 3, "workers": 1,
   "params": {"k": 8, "n": 4, "top_p": 0.9, "mix": "beam+nucleus", "seed": 0}}

A params object without a "mix" key selects the plain sentence-by-sentence
beam baseline (classifier-free, runs forced to 1). Generation records are one
canonical-JSON line per (run, document), written run-major in corpus order;
records are byte-identical across reruns and across worker counts.

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .classify import KeywordClassifier, detok
from .core import ControlMode, GenParams, LabelSet, MixStrategy, Accumulation, parse_control
from .corpus import (
    Document,
    corpus_streams,
    gold_lexicons,
    learned_lexicons,
    load_corpus,
    load_spec,
    save_corpus,
    save_spec,
    synth_corpus,
    vocab_from_docs,
    vocab_from_spec,
)
from .engine import baseline_generate, generate
from .errors import (
    BackendFailure,
    ConfigError,
    CorpusMismatch,
    DataError,
    EmptyCorpus,
    IdMismatch,
    SentBeamError,
)
from .lm import SourceInput, ToyLM, fit_toy_lm
from .metrics import (
    DocReport,
    EvalReport,
    aggregate_report,
    edit_distance,
    predicted_structure,
    rouge_l,
    rouge_n,
    structure_similarity,
)
from .protocol import (
    RemoteClassifier,
    RemoteLM,
    connect_tcp,
    make_server_socket,
    serve_on,
    serve_stdio,
    spawn_stdio,
)
from .testbed import reference_spec, train_spec
from .util import canonical_json, derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4

_CONFIG_KEYS = frozenset(
    {"name", "corpus", "model", "lexicons", "output", "mode", "runs", "workers", "params"}
)
_PARAM_KEYS = frozenset(
    {
        "k",
        "n",
        "top_p",
        "mix",
        "seed",
        "max_sentence_tokens",
        "max_sentences",
        "accumulation",
        "beam_width",
        "use_raw_prob",
    }
)


# --- run configs ------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """A generation job: corpus + artifacts + search parameters."""

    name: str
    corpus: Path
    model: Path
    lexicons: Path
    output: Path
    mode: ControlMode
    runs: int
    workers: int
    baseline: bool
    params: GenParams


def _params_from_dict(raw: dict) -> GenParams:
    unknown = set(raw) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown params keys: {sorted(unknown)}")
    kwargs = dict(raw)
    try:
        if "mix" in kwargs:
            kwargs["mix"] = MixStrategy(kwargs["mix"])
        if "accumulation" in kwargs:
            kwargs["accumulation"] = Accumulation(kwargs["accumulation"])
        return GenParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad params: {exc}") from exc


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"run config {path} must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    missing = {"corpus", "model", "lexicons", "output", "mode"} - set(data)
    if missing:
        raise ConfigError(f"run config {path} lacks keys: {sorted(missing)}")
    try:
        mode = ControlMode(data["mode"])
    except ValueError as exc:
        raise ConfigError(f"bad mode {data['mode']!r}") from exc

    raw_params = data.get("params", {})
    if not isinstance(raw_params, dict):
        raise ConfigError("params must be a JSON object")
    baseline = "mix" not in raw_params
    params = _params_from_dict(raw_params)

    runs = data.get("runs", 1)
    workers = data.get("workers", 1)
    if not isinstance(runs, int) or runs < 1:
        raise ConfigError(f"runs must be a positive integer, got {runs!r}")
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers!r}")
    if baseline and runs != 1:
        print("note: baseline search is deterministic; forcing runs=1", file=sys.stderr)
        runs = 1

    base = path.parent
    return RunConfig(
        name=str(data.get("name", path.stem)),
        corpus=base / data["corpus"],
        model=base / data["model"],
        lexicons=base / data["lexicons"],
        output=base / data["output"],
        mode=mode,
        runs=runs,
        workers=workers,
        baseline=baseline,
        params=params,
    )


# --- artifact loading -------------------------------------------------------

def _load_model(path: Path) -> ToyLM:
    try:
        return ToyLM.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc


def _load_docs(path: Path) -> list[Document]:
    docs = load_corpus(path)
    if not docs:
        raise EmptyCorpus(f"corpus {path} has no documents")
    return docs


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def _write_json(path: Path | None, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n", "utf-8")


# --- generation -------------------------------------------------------------

def _run_one(
    model,
    clf,
    label_set: LabelSet,
    doc: Document,
    mode: ControlMode,
    params: GenParams,
    run: int,
    baseline: bool,
    want_trace: bool,
) -> tuple[str, list[str]]:
    """Generate for one (run, document) task; returns (record line, trace lines)."""
    seed = derive_seed(params.seed, "run", run, "doc", doc.id)
    control = parse_control(doc.control, label_set, mode)
    source = SourceInput(doc.source, doc.control)
    vocab = model.vocabulary
    if baseline:
        hyp = baseline_generate(
            model, source, control, params.beam_width, params.max_sentence_tokens
        )
        traces = ()
    else:
        result = generate(model, clf, source, control, replace(params, seed=seed))
        hyp, traces = result.hypothesis, result.traces
    record = {
        "id": doc.id,
        "run": run,
        "mode": mode.value,
        "seed": seed,
        "control": list(control.names),
        "tokens": list(hyp.tokens),
        "text": detok(hyp.tokens, vocab, strip_eos=True),
        "labels": [span.label.name for span in hyp.sentences],
        "sentences": [
            {
                "text": detok(hyp.tokens[span.start : span.end], vocab, strip_eos=True),
                "label": span.label.name,
                "class_logprob": span.class_logprob,
                "forced_boundary": span.forced_boundary,
            }
            for span in hyp.sentences
        ],
        "norm_loglik": hyp.norm_loglik,
        "combined_score": hyp.combined_score,
        "finished": hyp.finished,
    }
    trace_lines = [
        canonical_json({"id": doc.id, "run": run, **t.to_dict()}) for t in traces
    ] if want_trace else []
    return canonical_json(record), trace_lines


_WORKER: dict = {}


def _init_worker(model_path, lexicons_path, corpus_path, mode, params, baseline, trace):
    _WORKER["model"] = _load_model(model_path)
    _WORKER["clf"] = KeywordClassifier.load(lexicons_path)
    _WORKER["docs"] = load_corpus(corpus_path)
    _WORKER["mode"] = mode
    _WORKER["params"] = params
    _WORKER["baseline"] = baseline
    _WORKER["trace"] = trace


def _worker_task(task: tuple[int, int]) -> tuple[str, list[str]]:
    run, doc_idx = task
    w = _WORKER
    return _run_one(
        w["model"], w["clf"], w["clf"].label_set, w["docs"][doc_idx],
        w["mode"], w["params"], run, w["baseline"], w["trace"],
    )


@contextlib.contextmanager
def _remote_client(args):
    if args.remote_cmd:
        backend = spawn_stdio(shlex.split(args.remote_cmd), timeout=args.timeout)
        try:
            yield backend.client
        finally:
            backend.close()
    elif args.remote_addr:
        host, _, port_text = args.remote_addr.rpartition(":")
        if not host or not port_text.isdigit():
            raise ConfigError(f"--remote-addr must be HOST:PORT, got {args.remote_addr!r}")
        client = connect_tcp(host, int(port_text), timeout=args.timeout)
        try:
            yield client
        finally:
            client.shutdown()
            client.close()
    else:
        raise ConfigError("the remote backend needs --remote-cmd or --remote-addr")


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, params=replace(cfg.params, seed=args.seed))
    workers = args.workers if args.workers is not None else cfg.workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    out_path = Path(args.out) if args.out else cfg.output
    trace_path = Path(args.trace) if args.trace else None
    if args.backend == "remote" and workers != 1:
        raise ConfigError("the remote backend runs single-process; use workers=1")

    docs = _load_docs(cfg.corpus)
    tasks = [(run, i) for run in range(cfg.runs) for i in range(len(docs))]
    want_trace = trace_path is not None

    if args.backend == "remote":
        with _remote_client(args) as client:
            model = RemoteLM(client)
            clf = RemoteClassifier(client)
            results = [
                _run_one(model, clf, clf.label_set, docs[i], cfg.mode, cfg.params,
                         run, cfg.baseline, want_trace)
                for run, i in tasks
            ]
    elif workers == 1:
        model = _load_model(cfg.model)
        clf = KeywordClassifier.load(cfg.lexicons)
        results = [
            _run_one(model, clf, clf.label_set, docs[i], cfg.mode, cfg.params,
                     run, cfg.baseline, want_trace)
            for run, i in tasks
        ]
    else:
        initargs = (
            cfg.model, cfg.lexicons, cfg.corpus, cfg.mode, cfg.params,
            cfg.baseline, want_trace,
        )
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=initargs
        ) as pool:
            results = list(pool.map(_worker_task, tasks, chunksize=4))

    _write_lines(out_path, (line for line, _ in results))
    if trace_path is not None:
        _write_lines(trace_path, (tl for _, tlines in results for tl in tlines))
    print(f"wrote {len(results)} records to {out_path}")
    return EXIT_OK


# --- synthesis and fitting --------------------------------------------------

def cmd_synth(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    elif args.preset == "reference":
        spec = reference_spec()
    else:
        spec = train_spec()
    if args.documents is not None or args.seed is not None:
        spec = replace(
            spec,
            documents=args.documents if args.documents is not None else spec.documents,
            seed=args.seed if args.seed is not None else spec.seed,
        )
    docs = synth_corpus(spec)
    save_corpus(docs, args.out)
    if args.spec_out:
        save_spec(spec, args.spec_out)
    if args.lexicons_out:
        KeywordClassifier(spec.label_set, gold_lexicons(spec)).save(args.lexicons_out)
    print(f"wrote {len(docs)} documents to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    docs = _load_docs(Path(args.corpus))
    vocab = vocab_from_docs(docs)
    model = fit_toy_lm(corpus_streams(docs, vocab), args.order, args.alpha, vocab)
    model.save(args.model_out)
    print(f"fit order-{args.order} model on {len(docs)} documents -> {args.model_out}")
    if args.lexicons_out:
        names = sorted({lab for doc in docs for lab in doc.target_labels})
        label_set = LabelSet(names)
        lex = learned_lexicons(docs, label_set)
        KeywordClassifier(label_set, lex).save(args.lexicons_out)
        print(f"learned lexicons for {len(names)} labels -> {args.lexicons_out}")
    return EXIT_OK


# --- evaluation -------------------------------------------------------------

def _load_records(path: Path) -> list[dict]:
    records = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read records {path}: {exc}") from exc
    if not records:
        raise DataError(f"records file {path} is empty")
    return records


def _evaluate_records(
    records: list[dict],
    docs_by_id: dict[str, Document],
    tagger: KeywordClassifier | None,
) -> EvalReport:
    """Per-record structure and content metrics, aggregated across runs.

    With a tagger, generated structures come from re-classifying the emitted
    sentences (the fair setting: the engine's own labels are not trusted);
    without one the engine-tracked labels are scored directly.
    """
    rows = []
    for rec in records:
        doc = docs_by_id.get(rec["id"])
        if doc is None:
            raise IdMismatch(f"record {rec['id']!r} has no corpus document")
        if tagger is not None:
            texts = [s["text"] for s in rec["sentences"]]
            produced = [lab.name for lab in predicted_structure(texts, tagger)]
        else:
            produced = list(rec["labels"])
        gold = list(doc.target_labels)
        reference_text = " ".join(doc.target_sentences)
        rows.append(
            DocReport(
                id=rec["id"],
                run=int(rec["run"]),
                structure_similarity=structure_similarity(produced, gold),
                edit_distance=edit_distance(produced, gold),
                rouge1=rouge_n(rec["text"], reference_text, 1),
                rouge2=rouge_n(rec["text"], reference_text, 2),
                rougel=rouge_l(rec["text"], reference_text),
            )
        )
    return aggregate_report(rows)


def cmd_evaluate(args) -> int:
    records = _load_records(Path(args.records))
    docs = _load_docs(Path(args.corpus))
    docs_by_id = {doc.id: doc for doc in docs}
    tagger = KeywordClassifier.load(args.lexicons) if args.lexicons else None
    report = _evaluate_records(records, docs_by_id, tagger)
    if args.csv:
        _write_lines(Path(args.csv), report.csv_rows())
    _write_json(Path(args.out) if args.out else None, report.to_dict())
    return EXIT_OK


def cmd_compare(args) -> int:
    configs = [load_run_config(p) for p in args.configs]
    corpus_paths = {cfg.corpus.resolve() for cfg in configs}
    if len(corpus_paths) != 1:
        raise CorpusMismatch(
            f"configs use different corpora: {sorted(str(p) for p in corpus_paths)}"
        )
    docs = _load_docs(configs[0].corpus)
    docs_by_id = {doc.id: doc for doc in docs}
    tagger = KeywordClassifier.load(args.lexicons) if args.lexicons else None

    entries = []
    for cfg in configs:
        report = _evaluate_records(_load_records(cfg.output), docs_by_id, tagger)
        summary = report.to_dict()
        del summary["documents"]  # aggregates only; per-doc rows live in evaluate output
        entries.append({"name": cfg.name, "records": str(cfg.output), **summary})

    first = entries[0]
    deltas = []
    for entry in entries[1:]:
        reduction = (
            (first["total_edits"] - entry["total_edits"]) / first["total_edits"]
            if first["total_edits"] > 0
            else 0.0
        )
        deltas.append(
            {
                "name": entry["name"],
                "vs": first["name"],
                "edits_reduction": reduction,
                "similarity_gain": entry["mean_structure_similarity"]
                - first["mean_structure_similarity"],
            }
        )
    _write_json(
        Path(args.out) if args.out else None,
        {"corpus": str(configs[0].corpus), "entries": entries, "deltas": deltas},
    )
    return EXIT_OK


# --- serving ----------------------------------------------------------------

def cmd_serve(args) -> int:
    model = _load_model(Path(args.model))
    clf = KeywordClassifier.load(args.lexicons)
    if args.tcp:
        host, _, port_text = args.tcp.rpartition(":")
        if not host or not port_text.isdigit():
            raise ConfigError(f"--tcp must be HOST:PORT, got {args.tcp!r}")
        sock = make_server_socket(host, int(port_text))
        # Announce the bound port (useful with port 0) before blocking.
        print(f"listening on {sock.getsockname()[0]}:{sock.getsockname()[1]}", flush=True)
        serve_on(model, clf, sock)
    else:
        serve_stdio(model, clf)
    return EXIT_OK


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentbeam",
        description="Sentence-level guided search for structure-controlled generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--spec", help="corpus spec JSON (overrides --preset)")
    p.add_argument(
        "--preset", choices=("reference", "train"), default="reference",
        help="built-in spec: the evaluation testbed or its training split",
    )
    p.add_argument("--documents", type=int, help="override document count")
    p.add_argument("--seed", type=int, help="override corpus seed")
    p.add_argument("--out", required=True, help="corpus JSONL output path")
    p.add_argument("--spec-out", help="also write the spec actually used")
    p.add_argument("--lexicons-out", help="also write the gold keyword lexicons")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("fit", help="fit the n-gram model (and lexicons) from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--lexicons-out", help="also learn keyword lexicons from the corpus")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.01)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("generate", help="run generation per a run-config file")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument(
        "--backend", choices=("toy", "remote"), default="toy",
        help="in-process model or a wire-protocol backend",
    )
    p.add_argument("--remote-cmd", help="server command to spawn, protocol on stdio")
    p.add_argument("--remote-addr", help="HOST:PORT of a running TCP server")
    p.add_argument("--timeout", type=float, default=60.0, help="remote call timeout")
    p.add_argument("--seed", type=int, help="override the config's base seed")
    p.add_argument("--workers", type=int, help="override the config's worker count")
    p.add_argument("--out", help="override the config's output path")
    p.add_argument("--trace", help="also write per-step search traces (JSONL)")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="score generation records against their corpus")
    p.add_argument("--records", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--lexicons",
        help="tag generated sentences with this keyword classifier instead of "
        "trusting engine-tracked labels",
    )
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--csv", help="also write per-document rows as CSV")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="evaluate several run configs side by side")
    p.add_argument("configs", nargs="+", help="run config JSONs (first is the reference)")
    p.add_argument("--lexicons", help="shared tagger for all entries")
    p.add_argument("--out", help="comparison JSON path (default: stdout)")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("serve", help="serve a model over the backend protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--lexicons", required=True)
    p.add_argument("--tcp", help="serve on HOST:PORT instead of stdio")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendFailure as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SentBeamError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:  # pragma: no cover - stdout closed mid-write
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
