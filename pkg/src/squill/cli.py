"""Command-line frontend for the engine.

Subcommands: ingest, index-build, train-retriever, retrieve, ask, evaluate,
build-sft, build-dpo, sweep, serve, plus make-fixture for the synthetic
corpus. Wherever randomness exists, --seed pins it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import evaluation, reporting
from .contrastive import TrainerConfig, head_fingerprint, load_trainer_config
from .corpus import (
    convert_bird_descriptions,
    load_corpus,
    save_corpus,
    save_overlay,
    subsample_corpus,
)
from .embeddings import EmbeddingProviderConfig
from .errors import SquillError
from .executor import execution_accuracy
from .fixtures import make_fixture
from .generator import GeneratorConfig
from .index import build_index, read_fingerprint, save_index
from .preferences import build_pairs_for_instance
from .prompts import build_sft_prompt, make_context, pad_schema_to_k, write_dpo_dataset, write_sft_dataset
from .errors import GoldExecutionError
from .runtime import EngineRuntime, RuntimeConfig, discover_databases
from .training import train_head_on_corpus

log = logging.getLogger(__name__)


def _add_provider_args(parser):
    parser.add_argument("--provider", choices=["hash", "remote"], default="hash",
                        help="embedding provider (default: deterministic hashing)")
    parser.add_argument("--dim", type=int, default=64, help="embedding dimension")
    parser.add_argument("--embed-endpoint", help="remote embeddings endpoint URL")
    parser.add_argument("--embed-model", help="remote embedding model name")


def _provider_config(args) -> EmbeddingProviderConfig:
    if args.provider == "remote":
        return EmbeddingProviderConfig(kind="remote", dim=args.dim,
                                       endpoint=args.embed_endpoint,
                                       model_name=args.embed_model)
    return EmbeddingProviderConfig(kind="deterministic-test", dim=args.dim)


def _add_generator_args(parser):
    parser.add_argument("--plan", type=Path,
                        help="scripted plan file: question_id -> response list")
    parser.add_argument("--script", type=Path,
                        help="scripted responses: JSON array used in order")
    parser.add_argument("--gen-endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--gen-model", help="remote generator model name")
    parser.add_argument("--temperature", type=float, default=0.0,
                        help="decoding temperature for single-shot generation")


def _generator_config(args) -> GeneratorConfig | None:
    if args.gen_endpoint and args.gen_model:
        return GeneratorConfig(kind="remote", endpoint=args.gen_endpoint,
                               model=args.gen_model, temperature=args.temperature)
    if args.script:
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        return GeneratorConfig(kind="scripted", script=tuple(script))
    return None


def _add_runtime_args(parser, generator=True):
    parser.add_argument("--databases", type=Path, required=True,
                        help="directory holding the SQLite databases")
    parser.add_argument("--index-dir", type=Path, help="directory for persisted indexes")
    parser.add_argument("--head", type=Path, help="projection head checkpoint")
    parser.add_argument("--k", type=int, default=25, help="retrieved columns per question")
    parser.add_argument("--max-iterations", type=int, default=3,
                        help="self-correction budget")
    parser.add_argument("--timeout", type=float, default=30.0,
                        help="per-query execution timeout in seconds")
    _add_provider_args(parser)
    if generator:
        _add_generator_args(parser)


def _runtime(args, need_generator=False) -> EngineRuntime:
    generator = _generator_config(args) if hasattr(args, "plan") else None
    plan_path = getattr(args, "plan", None)
    if need_generator and generator is None and plan_path is None:
        raise SquillError("a generator is required: pass --plan, --script, "
                          "or --gen-endpoint/--gen-model")
    cfg = RuntimeConfig(
        databases_dir=args.databases,
        index_dir=args.index_dir,
        provider=_provider_config(args),
        generator=generator,
        plan_path=plan_path,
        head_path=args.head,
        k=args.k,
        max_iterations=args.max_iterations,
        timeout=args.timeout,
    )
    return EngineRuntime(cfg)


def _load_corpus_arg(args):
    corpus = load_corpus(args.corpus)
    if getattr(args, "subsample", None):
        corpus = subsample_corpus(corpus, args.subsample, seed=args.seed)
    return corpus


def _schemas_for(runtime, corpus) -> dict:
    return {db_id: runtime.schema(db_id) for db_id in sorted({q.db_id for q in corpus})}


# --- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.corpus:
        records = load_corpus(args.corpus)
        save_corpus(records, args.out)
        print(f"wrote {len(records)} records to {args.out}")
    if args.bird_descriptions:
        entries = convert_bird_descriptions(args.bird_descriptions)
        save_overlay(entries, args.overlay_out)
        print(f"wrote {len(entries)} overlay entries to {args.overlay_out}")
    if not args.corpus and not args.bird_descriptions:
        print("nothing to ingest: pass --corpus and/or --bird-descriptions",
              file=sys.stderr)
        return 1
    return 0


def cmd_index_build(args) -> int:
    runtime = _runtime(args)
    out_dir = args.index_dir or (args.databases / "indexes")
    out_dir.mkdir(parents=True, exist_ok=True)
    expected = runtime.expected_fingerprint()
    for db_id in sorted(runtime.databases):
        path = out_dir / f"{db_id}.idx"
        if path.exists() and read_fingerprint(path) == expected:
            print(f"{db_id}: up-to-date (fingerprint {expected})")
            continue
        index = build_index(runtime.schema(db_id), runtime.provider, runtime.head)
        save_index(index, path)
        print(f"{db_id}: wrote {len(index.entries)} entries to {path}")
    return 0


def cmd_train_retriever(args) -> int:
    runtime = _runtime(args)
    corpus = _load_corpus_arg(args)
    schemas = _schemas_for(runtime, corpus)
    config = load_trainer_config(args.config) if args.config else TrainerConfig()
    overrides = {}
    for name in ("epochs", "learning_rate", "tau", "margin", "batch_size",
                 "negatives_per_query", "weight_decay", "objective"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    overrides["seed"] = args.seed
    config = dataclasses.replace(config, **overrides)
    result = train_head_on_corpus(corpus, schemas, runtime.provider, config)
    result.head.save(args.out)
    print(f"trained head ({config.objective}, epochs={config.epochs}) -> {args.out}")
    print(f"fingerprint: {head_fingerprint(result.head)}")
    for epoch, mean in enumerate(result.epoch_losses, 1):
        print(f"epoch {epoch}: mean loss {mean:.6f}")
    if args.trace_out:
        Path(args.trace_out).write_text(
            "\n".join(result.trace_lines()) + "\n", encoding="utf-8")
        print(f"loss trace -> {args.trace_out}")
    return 0


def cmd_retrieve(args) -> int:
    runtime = _runtime(args)
    if args.question:
        if not args.db:
            raise SquillError("--db is required with --question")
        from .corpus import QuestionRecord
        from .retriever import retrieve_columns

        q = QuestionRecord(question_id="adhoc", db_id=args.db,
                           question=args.question, evidence=args.evidence)
        result = retrieve_columns(q, runtime.index(args.db), runtime.provider,
                                  runtime.head, k=args.k)
        rows = [(ref.table_name, ref.column_name, score)
                for ref, score in result.ranked_columns]
        print(reporting.format_table(["table", "column", "score"], rows))
        return 0
    corpus = _load_corpus_arg(args)
    schemas = _schemas_for(runtime, corpus)
    metrics = evaluation.retrieval_quality(corpus, schemas, runtime.provider,
                                           runtime.head, k=args.k)
    print(reporting.format_table(
        ["tpr", "fpr", "slr", "macro_tpr", "macro_fpr"],
        [(metrics.tpr, metrics.fpr, metrics.slr, metrics.macro_tpr, metrics.macro_fpr)],
    ))
    if args.out:
        Path(args.out).write_text(
            json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        print(f"metrics -> {args.out}")
    return 0


def cmd_ask(args) -> int:
    runtime = _runtime(args, need_generator=True)
    trace = runtime.ask(args.db, args.question, evidence=args.evidence,
                        k=args.k, max_iterations=args.max_iterations)
    for i, attempt in enumerate(trace.attempts):
        status = attempt.outcome.status
        detail = "" if attempt.outcome.ok else f" ({attempt.outcome.error_category})"
        print(f"attempt {i}: {status}{detail}: {attempt.sql}")
    if trace.generation_error:
        print(f"generation error: {trace.generation_error}")
    print(f"final SQL: {trace.final_sql}")
    print(f"executable: {trace.executable}  iterations used: {trace.iterations_used}")
    if trace.executable and trace.attempts[-1].outcome.rows is not None:
        rows = trace.attempts[-1].outcome.rows
        print(f"rows ({len(rows)}):")
        for row in rows[:20]:
            print(f"  {row}")
    return 0


def cmd_evaluate(args) -> int:
    corpus = _load_corpus_arg(args)
    out_dir = Path(args.out)
    if args.predictions:
        predictions = json.loads(Path(args.predictions).read_text(encoding="utf-8"))
        golds = {q.question_id: q.gold_sql for q in corpus if q.gold_sql}
        missing = set(predictions) - set(golds)
        if missing:
            raise SquillError(f"predictions reference unknown questions: {sorted(missing)[:5]}")
        databases = discover_databases(args.databases)
        db_of = {q.question_id: databases[q.db_id] for q in corpus}
        golds = {qid: golds[qid] for qid in predictions}
        ex, details = execution_accuracy(predictions, golds, db_of,
                                         timeout=args.timeout,
                                         set_semantics=args.set_semantics,
                                         float_tol=args.float_tol)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"ex": ex, "per_question": details}
        (out_dir / "predictions_report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"EX: {ex:.4f} over {len(details)} questions -> {out_dir}")
        return 0
    runtime = _runtime(args, need_generator=True)
    traces, summary = runtime.run(corpus, parallelism=args.parallelism,
                                  k=args.k, max_iterations=args.max_iterations,
                                  retrieval_enabled=not args.full_schema)
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_traces(traces, out_dir / "traces.jsonl")
    schemas = _schemas_for(runtime, corpus)
    db_of = {q.question_id: runtime.db_path(q.db_id) for q in corpus}
    report = evaluation.evaluate_traces(traces, corpus, db_of,
                                        timeout=args.timeout, schemas=schemas,
                                        set_semantics=args.set_semantics,
                                        float_tol=args.float_tol)
    written = reporting.write_evaluation_report(report, out_dir,
                                                figures=not args.no_figures)
    print(f"EX: {report.ex_overall:.4f} over {report.n_questions} questions")
    print(f"executable: {summary.n_executable}/{summary.n_questions}")
    for path in written:
        print(f"  {path}")
    return 0


def cmd_build_sft(args) -> int:
    runtime = _runtime(args)
    corpus = _load_corpus_arg(args)
    schemas = _schemas_for(runtime, corpus)
    from .training import gold_columns_for_corpus

    gold_map = gold_columns_for_corpus(corpus, schemas)
    records = []
    for i, q in enumerate(corpus):
        refs = gold_map.get(q.question_id)
        if not refs or not q.gold_sql:
            continue
        schema = schemas[q.db_id]
        gold_cols = [schema.resolve(ref) for ref in sorted(
            refs, key=lambda r: (r.table_name.lower(), r.column_name.lower()))]
        padded = pad_schema_to_k(gold_cols, schema, args.k, seed=args.seed + i)
        ctx = make_context(q.question, padded, schema, args.k, evidence=q.evidence)
        records.append((build_sft_prompt(ctx), q.gold_sql))
    n = write_sft_dataset(records, args.out)
    print(f"wrote {n} prompt/completion records to {args.out}")
    return 0


def cmd_build_dpo(args) -> int:
    runtime = _runtime(args, need_generator=True)
    corpus = _load_corpus_arg(args)
    schemas = _schemas_for(runtime, corpus)
    from .generator import sample_candidates
    from .training import gold_columns_for_corpus

    gold_map = gold_columns_for_corpus(corpus, schemas)
    pairs = []
    skipped = 0
    for i, q in enumerate(corpus):
        refs = gold_map.get(q.question_id)
        if not refs or not q.gold_sql:
            continue
        schema = schemas[q.db_id]
        gold_cols = [schema.resolve(ref) for ref in sorted(
            refs, key=lambda r: (r.table_name.lower(), r.column_name.lower()))]
        padded = pad_schema_to_k(gold_cols, schema, args.k, seed=args.seed + i)
        ctx = make_context(q.question, padded, schema, args.k, evidence=q.evidence)
        prompt = build_sft_prompt(ctx)
        generator = runtime.generator_for(q)
        candidates = sample_candidates(prompt, generator, n=args.n,
                                       temperature=args.sample_temperature)
        try:
            pairs.extend(build_pairs_for_instance(
                candidates, q.gold_sql, prompt, runtime.db_path(q.db_id),
                seed=args.seed + i, timeout=args.timeout))
        except GoldExecutionError as exc:
            skipped += 1
            log.warning("question %s skipped: %s", q.question_id, exc)
    n = write_dpo_dataset(pairs, args.out)
    print(f"wrote {n} preference pairs to {args.out}"
          + (f" ({skipped} instances skipped: gold failed)" if skipped else ""))
    return 0


def cmd_sweep(args) -> int:
    corpora = {}
    runtime = _runtime(args)
    for corpus_path in args.corpus:
        corpus = load_corpus(corpus_path)
        schemas = _schemas_for(runtime, corpus)
        corpora[Path(corpus_path).stem] = (corpus, schemas)
    trainer_cfg = TrainerConfig(
        epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed,
    )
    sweeps = {}
    if "margin" in args.sweeps:
        sweeps["margin"] = evaluation.run_margin_sweep(
            corpora, runtime.provider, trainer_cfg, k=args.k)
    if "k" in args.sweeps or "neg_limit" in args.sweeps:
        k_rows = []
        neg_rows = []
        for name, (corpus, schemas) in corpora.items():
            if "k" in args.sweeps:
                k_rows += evaluation.run_k_sweep(
                    name, corpus, schemas, runtime.provider, None, "identity")
                trained = train_head_on_corpus(corpus, schemas, runtime.provider,
                                               trainer_cfg)
                k_rows += evaluation.run_k_sweep(
                    name, corpus, schemas, runtime.provider, trained.head, "trained")
            if "neg_limit" in args.sweeps:
                neg_rows += evaluation.run_neg_limit_sweep(
                    name, corpus, schemas, runtime.provider, trainer_cfg)
        if k_rows:
            sweeps["k"] = k_rows
        if neg_rows:
            sweeps["neg_limit"] = neg_rows
    written = reporting.write_sweep_report(sweeps, args.out,
                                           figures=not args.no_figures)
    for name, rows in sweeps.items():
        print(f"{name} sweep: {len(rows)} rows")
    for path in written:
        print(f"  {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    if args.config:
        cfg = RuntimeConfig.from_file(args.config)
    else:
        generator = _generator_config(args)
        cfg = RuntimeConfig(
            databases_dir=args.databases,
            index_dir=args.index_dir,
            provider=_provider_config(args),
            generator=generator,
            plan_path=args.plan,
            head_path=args.head,
            k=args.k,
            max_iterations=args.max_iterations,
            timeout=args.timeout,
            host=args.host,
            port=args.port,
            static_dir=args.static_dir,
        )
    serve(cfg)
    return 0


def cmd_make_fixture(args) -> int:
    manifest = make_fixture(args.out, n_databases=args.databases_count,
                            questions_per_db=args.questions_per_db, seed=args.seed)
    print(f"fixture with {len(manifest.db_ids)} databases -> {manifest.root}")
    print(f"corpus: {manifest.corpus_path}")
    for name, path in manifest.plan_paths.items():
        print(f"plan {name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="squill",
                                     description="Text-to-SQL engine CLI")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize corpora and description files")
    p.add_argument("--corpus", type=Path)
    p.add_argument("--out", type=Path, default=Path("corpus.json"))
    p.add_argument("--bird-descriptions", type=Path,
                   help="directory of per-table description CSVs")
    p.add_argument("--overlay-out", type=Path, default=Path("overlay.json"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index-build", help="build or refresh per-database indexes")
    _add_runtime_args(p, generator=False)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("train-retriever", help="train the projection head")
    _add_runtime_args(p, generator=False)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--subsample", type=float, help="per-database question fraction")
    p.add_argument("--out", type=Path, required=True, help="checkpoint output path")
    p.add_argument("--config", type=Path, help="key=value trainer config file")
    p.add_argument("--trace-out", type=Path, help="loss trace output path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--negatives-per-query", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--objective", choices=["hn-supcon", "supcon"])
    p.set_defaults(func=cmd_train_retriever)

    p = sub.add_parser("retrieve", help="rank columns for a question or corpus")
    _add_runtime_args(p, generator=False)
    p.add_argument("--db", help="database id (single-question mode)")
    p.add_argument("--question")
    p.add_argument("--evidence")
    p.add_argument("--corpus", type=Path, help="score retrieval over a corpus")
    p.add_argument("--subsample", type=float)
    p.add_argument("--out", type=Path, help="metrics JSON output")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("ask", help="answer one question end to end")
    _add_runtime_args(p)
    p.add_argument("--db", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--evidence")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("evaluate", help="run a corpus and write the report")
    _add_runtime_args(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--subsample", type=float)
    p.add_argument("--predictions", type=Path,
                   help="score a question_id -> SQL map instead of running the pipeline")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--full-schema", action="store_true",
                   help="disable retrieval; feed the first k schema columns")
    p.add_argument("--set-semantics", action="store_true",
                   help="compare result sets after deduplicating rows "
                        "(default is multiset comparison)")
    p.add_argument("--float-tol", type=float, default=0.0,
                   help="quantize float cells before comparing; exploratory "
                        "use only, default exact")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-sft", help="export prompt/completion training records")
    _add_runtime_args(p, generator=False)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--subsample", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_build_sft)

    p = sub.add_parser("build-dpo", help="export preference pairs from executed candidates")
    _add_runtime_args(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--subsample", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=8, help="candidates per instance")
    p.add_argument("--sample-temperature", type=float, default=0.7)
    p.set_defaults(func=cmd_build_dpo)

    p = sub.add_parser("sweep", help="margin / negative-limit / k sweeps")
    _add_runtime_args(p, generator=False)
    p.add_argument("--corpus", type=Path, action="append", required=True,
                   help="corpus file; repeat for multiple corpora")
    p.add_argument("--sweeps", nargs="+", default=["margin", "k", "neg_limit"],
                   choices=["margin", "k", "neg_limit"])
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--learning-rate", type=float, default=2e-3)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP service")
    _add_runtime_args(p)
    p.add_argument("--config", type=Path, help="JSON service config file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8099)
    p.add_argument("--static-dir", type=Path, help="console bundle to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("make-fixture", help="generate the synthetic mini-benchmark")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--databases-count", type=int, default=20)
    p.add_argument("--questions-per-db", type=int, default=10)
    p.set_defaults(func=cmd_make_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SquillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
