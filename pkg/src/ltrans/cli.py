"""Command line driver.

Subcommands cover the full workflow: build-kb (extract the API
knowledge base), translate (run the pipeline over a sample corpus),
evaluate (aggregate traces into report.json), retriever-eval (ranking
metrics against relevance judgments) and report (render a saved run as
markdown or JSON).

Exit codes: 0 on success, 1 for input or configuration errors, 2 when
the pipeline ran but some samples failed to produce a trace.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

from . import agents, apikb, evalharness, model, provider, retriever

CONFIG_ENV = "LT_CONFIG"

_INPUT_ERRORS = (
    model.CorpusError,
    apikb.KnowledgeBaseError,
    retriever.RetrievalError,
    provider.ProviderError,
    evalharness.HarnessError,
    agents.AgentError,
    ValueError,
    OSError,
)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _require_config(args) -> model.PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if not path:
        raise model.ConfigError(f"no config file given (use --config or ${CONFIG_ENV})")
    return model.load_config(path)


def _http_provider(config: model.PipelineConfig) -> provider.HttpProvider:
    if not config.provider_endpoint:
        raise model.ConfigError("config has no provider_endpoint")
    return provider.HttpProvider(
        endpoint=config.provider_endpoint,
        chat_model_id=config.chat_model_id,
        embed_model_id=config.embed_model_id,
        request_timeout=config.request_timeout,
    )


def _read_architecture(config: model.PipelineConfig) -> str:
    if not config.architecture_description_path:
        raise model.ConfigError("config has no architecture_description_path")
    path = Path(config.architecture_description_path)
    if not path.is_file():
        raise model.MissingFile(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise model.ConfigError(f"architecture description {path} is empty")
    return text


def cmd_build_kb(args) -> int:
    result = apikb.extract_api_entries(args.src)
    for warning in result.warnings:
        _log(f"warning: skipped {warning}")
    if args.describe:
        chat = None if args.offline else _http_provider(_require_config(args))
        apikb.generate_descriptions(result.entries, chat)
    model.write_jsonl_corpus(result.entries, args.out)
    if not result.entries:
        _log("warning: no public API entries found")
    print(f"wrote {len(result.entries)} entries to {args.out}")
    return 0


def cmd_translate(args) -> int:
    if args.workers < 1:
        raise model.ConfigError("--workers must be at least 1")
    config = _require_config(args)
    samples = model.load_jsonl_corpus(args.input, "samples")
    refs = model.load_jsonl_corpus(args.refs, "references")
    kb = model.load_jsonl_corpus(args.kb, "api_entries")
    arch = _read_architecture(config)

    if args.script:
        chat = provider.load_scripted_provider(args.script)
    elif args.offline:
        raise model.ConfigError("offline translation needs --script for chat responses")
    else:
        chat = _http_provider(config)

    if args.offline or not config.provider_endpoint:
        embedder = provider.HashingEmbedder()
    elif isinstance(chat, provider.HttpProvider):
        embedder = chat
    else:
        embedder = _http_provider(config)

    # Embedding the reference corpus up front keeps worker threads from
    # racing on the per-pair cache.
    for pair in refs:
        retriever.ensure_embedding(pair, embedder)

    evaluator = evalharness.make_evaluator(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(sample: model.SampleUnit) -> None:
        sample_chat = chat.scoped(sample.id) if isinstance(chat, provider.ScriptedChatProvider) else chat
        log: list = []
        trace = agents.run_pipeline(
            sample, refs, kb, config, sample_chat, embedder, evaluator, arch, log
        )
        model.write_run_trace(trace, out_dir)
        prompts_path = out_dir / f"{sample.id}.prompts.json"
        prompts_path.write_text(
            json.dumps({"sample_id": sample.id, "records": log}, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        _log(f"{sample.id}: {trace.termination_reason}")

    failures: list[str] = []
    if args.workers == 1:
        for sample in samples:
            try:
                run_one(sample)
            except Exception as exc:
                failures.append(sample.id)
                _log(f"{sample.id}: failed without a trace: {exc}")
    else:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = {pool.submit(run_one, sample): sample.id for sample in samples}
            for future in as_completed(futures):
                sample_id = futures[future]
                try:
                    future.result()
                except Exception as exc:
                    failures.append(sample_id)
                    _log(f"{sample_id}: failed without a trace: {exc}")
    done = len(samples) - len(failures)
    _log(f"translated {done}/{len(samples)} samples into {out_dir}")
    return 2 if failures else 0


def _load_traces(runs_dir: str) -> list[model.RunTrace]:
    runs = Path(runs_dir)
    if not runs.is_dir():
        raise model.MissingFile(runs)
    paths = sorted(runs.glob("*.trace.json"))
    if not paths:
        raise model.CorpusError(f"no trace files found in {runs}")
    return [model.load_run_trace(path) for path in paths]


def cmd_evaluate(args) -> int:
    traces = _load_traces(args.runs)
    report = evalharness.compute_report(traces)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(evalharness.report_json(report), encoding="utf-8")
    print(evalharness.summary_line(report))
    return 0


def cmd_report(args) -> int:
    traces = _load_traces(args.runs)
    report = evalharness.compute_report(traces)
    if args.format == "json":
        sys.stdout.write(evalharness.report_json(report))
    else:
        sys.stdout.write(evalharness.render_report_md(report))
    return 0


def cmd_retriever_eval(args) -> int:
    if args.k < 1:
        raise model.ConfigError("--k must be at least 1")
    refs = model.load_jsonl_corpus(args.refs, "references")
    queries = model.load_jsonl_corpus(args.queries, "samples")
    qrels = retriever.load_qrels(args.qrels)
    if not queries:
        raise model.CorpusError(f"no queries in {args.queries}")
    missing = [q.id for q in queries if q.id not in qrels]
    if missing:
        raise model.CorpusError(f"missing relevance judgments for queries: {missing}")
    embedder = provider.HashingEmbedder() if args.offline else _http_provider(_require_config(args))
    k = args.k
    ndcgs, mrrs, recalls = [], [], []
    for query in queries:
        ranked = [ex.pair.id for ex in retriever.retrieve_top_k(query, refs, k, embedder)]
        judgments = qrels[query.id]
        ndcgs.append(retriever.ndcg_at_k(ranked, judgments, k))
        mrrs.append(retriever.mrr_at_k(ranked, judgments, k))
        recalls.append(retriever.recall_at_k(ranked, judgments, k))
    print(
        f"NDCG@{k} {statistics.fmean(ndcgs):.3f} "
        f"MRR@{k} {statistics.fmean(mrrs):.3f} "
        f"Recall@{k} {statistics.fmean(recalls):.3f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltrans",
        description="API-aware PL/SQL to Java translation pipeline and evaluation tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("build-kb", help="extract an API knowledge base from Java sources")
    kb.add_argument("--src", required=True, help="root directory of Java library sources")
    kb.add_argument("--out", required=True, help="output kb.jsonl path")
    kb.add_argument("--describe", action="store_true", help="fill in method descriptions")
    kb.add_argument("--offline", action="store_true", help="use the deterministic description template")
    kb.add_argument("--config", help="pipeline config JSON (or set $LT_CONFIG)")
    kb.set_defaults(func=cmd_build_kb)

    tr = sub.add_parser("translate", help="translate a sample corpus and write run traces")
    tr.add_argument("--input", required=True, help="samples.jsonl")
    tr.add_argument("--refs", required=True, help="references.jsonl with aligned exemplars")
    tr.add_argument("--kb", required=True, help="kb.jsonl knowledge base")
    tr.add_argument("--out", required=True, help="directory for traces and prompt logs")
    tr.add_argument("--config", help="pipeline config JSON (or set $LT_CONFIG)")
    tr.add_argument("--script", help="JSON file of canned chat responses to replay")
    tr.add_argument("--offline", action="store_true", help="no network: scripted chat, hashing embedder")
    tr.add_argument("--workers", type=int, default=1, help="concurrent samples (default 1)")
    tr.set_defaults(func=cmd_translate)

    ev = sub.add_parser("evaluate", help="aggregate run traces into a report")
    ev.add_argument("--runs", required=True, help="directory containing *.trace.json")
    ev.add_argument("--out", required=True, help="report.json output path")
    ev.set_defaults(func=cmd_evaluate)

    re_ = sub.add_parser("retriever-eval", help="score retrieval against relevance judgments")
    re_.add_argument("--refs", required=True, help="references.jsonl")
    re_.add_argument("--queries", required=True, help="queries as samples.jsonl")
    re_.add_argument("--qrels", required=True, help="graded relevance judgments jsonl")
    re_.add_argument("--k", type=int, default=3, help="cutoff rank (default 3)")
    re_.add_argument("--offline", action="store_true", help="use the deterministic hashing embedder")
    re_.add_argument("--config", help="pipeline config JSON (or set $LT_CONFIG)")
    re_.set_defaults(func=cmd_retriever_eval)

    rp = sub.add_parser("report", help="render a saved run as markdown or JSON")
    rp.add_argument("--runs", required=True, help="directory containing *.trace.json")
    rp.add_argument("--format", choices=("md", "json"), default="md", help="output format")
    rp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
