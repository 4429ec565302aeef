#!/usr/bin/env python3
"""End-to-end offline benchmark demo with scripted model clients.

Builds a toy index, scripts generator and judge transcripts that solve
each question at a seeded iteration (or never), runs the full iterative
loop over the batch, and writes every report artifact. No network, fully
deterministic for a fixed seed:

    python3 scripts/run_mock_benchmark.py --out demo_run --questions 20 --seed 3
"""

import argparse
import json
import random
from pathlib import Path

from kgrag.config import PipelineConfig
from kgrag.embedding import DeterministicEmbeddingProvider, embed_index
from kgrag.generation import ScriptedChatClient
from kgrag.harness import load_dataset, run_benchmark, write_report
from kgrag.index import build_fallback_communities, load_index, save_index
from kgrag.index import Entity, KnowledgeIndex, Relation, TextUnit
from kgrag.pipeline import Runtime


def toy_index(n=10):
    entities = {
        f"e{i}": Entity(id=f"e{i}", name=f"Station {i}", description=f"Station {i} on the line")
        for i in range(n)
    }
    relations = {
        f"r{i}": Relation(
            id=f"r{i}", source=f"e{i}", target=f"e{i+1}",
            description=f"rail segment {i} links Station {i} and Station {i+1}",
        )
        for i in range(n - 1)
    }
    units = {
        f"u{i}": TextUnit(
            id=f"u{i}",
            text=f"The timetable notes Station {i} opened in {1900 + i}.",
            entity_ids=frozenset({f"e{i}"}),
        )
        for i in range(n)
    }
    from kgrag.index import _build_adjacency

    return KnowledgeIndex(
        entities=entities, relations=relations, text_units=units, communities={},
        adjacency=_build_adjacency(entities, relations),
    )


def scripted_transcripts(markers, rng, max_iterations=4):
    """One generator and one judge transcript implementing a random solve schedule."""
    generator, judge, schedule = [], [], {}
    for marker in markers:
        solve_at = rng.choice([1, 1, 1, 2, 2, 3, 4, None])
        schedule[marker] = solve_at
        rounds = max_iterations if solve_at is None else solve_at
        for i in range(rounds):
            passing = solve_at is not None and i == solve_at - 1
            generator.append({"match": marker, "response": f"scripted answer about {marker}"})
            judge += [
                {"match": ["Split the answer", marker], "response": f"CLAIM: [{marker}] claim"},
                {
                    "match": ["Decide for each numbered claim", f"[{marker}] claim"],
                    "response": "VERDICT: supported" if passing else "VERDICT: unsupported",
                },
                {"match": ["List the statements", marker], "response": f"STATEMENT: [{marker}] statement"},
                {
                    "match": ["reflected in the answer", f"[{marker}] statement"],
                    "response": "VERDICT: reflected",
                },
                {"match": ["valid response", marker], "response": f"QUESTION: about {marker}"},
            ]
    return generator, judge, schedule


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_run")
    parser.add_argument("--questions", type=int, default=20)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--parallel", type=int, default=2)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    index_dir = out / "index"
    save_index(toy_index(), index_dir)
    index = build_fallback_communities(load_index(index_dir))

    markers = [f"q{i:02d}" for i in range(args.questions)]
    dataset_path = out / "questions.jsonl"
    with dataset_path.open("w", encoding="utf-8") as fh:
        for marker in markers:
            fh.write(json.dumps({"_id": marker, "question": f"what does {marker} ask about?"}) + "\n")

    generator, judge, schedule = scripted_transcripts(markers, rng)

    cfg = PipelineConfig()
    cfg.retrieval.k_relations = 2
    cfg.retrieval.k_text_units = 1
    cfg.retrieval.k_communities = 1
    provider = DeterministicEmbeddingProvider(cfg.embedding.dimension)
    runtime = Runtime(
        embed_provider=provider,
        chat_client=ScriptedChatClient(generator),
        judge_client=ScriptedChatClient(judge),
    )
    store = embed_index(provider, index)

    questions = load_dataset(dataset_path)
    report = run_benchmark(
        index, store, cfg, questions,
        parallelism=args.parallel, runtime=runtime, out_dir=out,
    )
    write_report(report, out)

    planned = [0] * cfg.max_iterations
    for solve_at in schedule.values():
        planned[(solve_at or cfg.max_iterations) - 1] += 1

    print(f"{report.n_completed}/{report.n_questions} questions completed")
    print(f"planned solve schedule : {planned}")
    print(f"observed histogram     : {report.histogram}")
    for metric, summary in report.aggregates.items():
        print(f"  {metric:18s} {summary.mean:.4f} ± {summary.moe_95:.5f}")
    print(f"report files under {out}")


if __name__ == "__main__":
    main()
