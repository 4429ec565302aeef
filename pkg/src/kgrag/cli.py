"""Command-line entry points.

Subcommands: validate-index, embed-index, ask, bench, report, serve.
Every failure exits nonzero with a single-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .config import load_config
from .embedding import embed_index
from .errors import KgragError
from .index import build_fallback_communities, load_index
from .pipeline import Runtime, answer_question, build_embedding_provider, build_runtime
from .service import QueryService, make_server

logger = logging.getLogger(__name__)


def _load_everything(index_dir: str, config_path: str | None, need_clients: bool = True):
    cfg = load_config(config_path)
    index = load_index(index_dir)
    if not index.communities:
        index = build_fallback_communities(index, cfg.index.fallback_summary_max_chars)
    if need_clients:
        runtime = build_runtime(cfg, index_dir)
    else:
        runtime = Runtime(
            embed_provider=build_embedding_provider(cfg, index_dir),
            chat_client=None,
            judge_client=None,
        )
    store = embed_index(runtime.embed_provider, index)
    runtime.embed_provider.cache.flush()
    return cfg, index, store, runtime


def _cmd_validate_index(args) -> int:
    index = load_index(args.index_dir)
    print(
        f"ok: {len(index.entities)} entities, {len(index.relations)} relations, "
        f"{len(index.text_units)} text units, {len(index.communities)} communities"
        + (
            f" ({index.dropped_duplicate_relations} duplicate relations dropped)"
            if index.dropped_duplicate_relations
            else ""
        )
    )
    return 0


def _cmd_embed_index(args) -> int:
    cfg, index, store, runtime = _load_everything(args.index_dir, args.config, need_clients=False)
    print(
        f"embedded {len(store)} items "
        f"({runtime.embed_provider.compute_calls} computed, rest from cache)"
    )
    return 0


def _cmd_ask(args) -> int:
    cfg, index, store, runtime = _load_everything(args.index_dir, args.config)
    if args.ner is not None:
        cfg.ner.mode = "heuristic" if args.ner == "on" else "off"
    record = answer_question(index, store, cfg, args.question, runtime=runtime)
    print(record.final_answer)
    print(
        f"[accepted={record.accepted} iterations={len(record.traces)} "
        f"solved_at={record.solved_at_iteration}]"
    )
    for name, value in record.final_scores.as_dict().items():
        print(f"  {name}: {value}")
    if args.trace:
        for trace in record.traces:
            s = trace.scores
            print(
                f"-- iteration {trace.iteration}: entities={trace.entities} "
                f"triples={trace.triples} units={trace.text_units} "
                f"faithfulness={s.faithfulness:.3f} completeness={s.completeness:.3f} "
                f"accepted={s.accepted}"
            )
    return 0


def _cmd_bench(args) -> int:
    cfg, index, store, runtime = _load_everything(args.index_dir, args.config)
    questions = harness.load_dataset(args.dataset, limit=args.limit, seed=args.seed)
    report = harness.run_benchmark(
        index,
        store,
        cfg,
        questions,
        parallelism=args.parallel,
        runtime=runtime,
        out_dir=args.out,
    )
    harness.write_report(report, args.out)
    print(
        f"benchmark complete: {report.n_completed}/{report.n_questions} questions, "
        f"{report.n_failed} failed; report written to {args.out}"
    )
    for metric, summary in report.aggregates.items():
        print(f"  {metric}: {summary.mean:.4f} ± {summary.moe_95:.5f}")
    print(f"  solved per iteration: {report.histogram}")
    return 0


def _cmd_report(args) -> int:
    report = harness.read_run_dir(args.run_dir)
    harness.write_report(report, args.run_dir)
    print(f"report rebuilt from traces: {report.n_completed} questions")
    return 0


def _cmd_serve(args) -> int:
    cfg, index, store, runtime = _load_everything(args.index_dir, args.config)
    service = QueryService(index, store, cfg, runtime)
    server = make_server(service, args.port, host=args.host)
    print(f"serving on http://{args.host}:{args.port} (POST /ask, GET /healthz)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrag",
        description="Iterative graph-RAG question answering over a knowledge-graph index.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-index", help="load an index directory and report its shape")
    p.add_argument("index_dir")
    p.set_defaults(func=_cmd_validate_index)

    p = sub.add_parser("embed-index", help="embed all index items into the sidecar cache")
    p.add_argument("index_dir")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_embed_index)

    p = sub.add_parser("ask", help="answer one question")
    p.add_argument("index_dir")
    p.add_argument("question")
    p.add_argument("--ner", choices=["on", "off"], default=None)
    p.add_argument("--trace", action="store_true", help="print per-iteration details")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_ask)

    p = sub.add_parser("bench", help="run the benchmark over a dataset")
    p.add_argument("index_dir")
    p.add_argument("dataset")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="kgrag_run")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="rebuild report files from a run directory's traces")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="start the query service")
    p.add_argument("index_dir")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_serve)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except KgragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
