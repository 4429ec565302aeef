"""Batch benchmark runner, statistics, and report artifacts.

A run directory is fully self-describing: ``run_config.json`` snapshots
the configuration, ``traces/<question>.jsonl`` holds one record per
executed iteration, ``failures.jsonl`` (when present) lists questions
that errored, and the five report files are derived purely from those.
Everything written here is byte-stable: rerunning the same configuration
with the same mocks and seed reproduces the directory exactly, and the
``report`` command rebuilds identical report files from the traces alone.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import random
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .embedding import EmbeddingStore
from .errors import EmptyDataset, KgragError, MalformedRecord, MissingFile
from .evaluation import METRIC_NAMES, EvaluationScores
from .index import KnowledgeIndex
from .pipeline import AnswerRecord, IterationTrace, Runtime, answer_question, select_final

logger = logging.getLogger(__name__)

Z_95 = 1.96
DENSITY_BINS = 20

REPORT_JSON = "report.json"
ROWS_CSV = "rows.csv"
HISTOGRAM_CSV = "histogram.csv"
PER_ITERATION_CSV = "per_iteration.csv"
SCORE_DENSITY_CSV = "score_density.csv"
RUN_CONFIG_JSON = "run_config.json"
TRACES_DIR = "traces"
FAILURES_JSONL = "failures.jsonl"


@dataclass
class BenchmarkQuestion:
    id: str
    question: str
    answer: str | None = None
    supporting_facts: object = None  # retained for audit, unused by the pipeline


def load_dataset(
    path: str | Path, limit: int | None = None, seed: int | None = None
) -> list[BenchmarkQuestion]:
    """Parse a newline-delimited {"_id", "question", ...} dataset.

    With ``limit`` set, returns a seeded uniform sample (seed defaults to
    0, so repeated runs see the same subset). A limit larger than the
    dataset is clamped with a warning.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise MissingFile(file_path)
    questions: list[BenchmarkQuestion] = []
    seen_ids: set[str] = set()
    with file_path.open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(file_path, line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "_id" not in obj or "question" not in obj:
                raise MalformedRecord(file_path, line_number, "record needs '_id' and 'question'")
            qid = str(obj["_id"])
            if qid in seen_ids:
                raise MalformedRecord(file_path, line_number, f"duplicate question id {qid!r}")
            if not str(obj["question"]).strip():
                raise MalformedRecord(file_path, line_number, "empty question")
            seen_ids.add(qid)
            questions.append(
                BenchmarkQuestion(
                    id=qid,
                    question=str(obj["question"]),
                    answer=obj.get("answer"),
                    supporting_facts=obj.get("supporting_facts"),
                )
            )
    if not questions:
        raise EmptyDataset(f"no questions in {file_path}")
    if limit is not None:
        if limit >= len(questions):
            if limit > len(questions):
                logger.warning(
                    "limit %d exceeds dataset size %d; using the full dataset",
                    limit, len(questions),
                )
            return questions
        return random.Random(seed if seed is not None else 0).sample(questions, limit)
    return questions


@dataclass
class MetricSummary:
    mean: float
    sd: float
    moe_95: float
    n: int


def margin_of_error(sd: float, n: int) -> float:
    """Half-width of the 95% confidence interval for the mean."""
    if n <= 1:
        return 0.0
    return Z_95 * sd / math.sqrt(n)


def summarize(values: list[float]) -> MetricSummary:
    """Mean, sample standard deviation (n-1), and 95% margin of error.

    A single observation has no defined sample deviation; it is reported
    as 0.0 with a logged flag.
    """
    if not values:
        raise ValueError("cannot summarize an empty sample")
    n = len(values)
    mean = statistics.fmean(values)
    if n == 1:
        logger.warning("single observation: standard deviation undefined, reporting 0.0")
        return MetricSummary(mean=mean, sd=0.0, moe_95=0.0, n=1)
    sd = statistics.stdev(values)
    return MetricSummary(mean=mean, sd=sd, moe_95=margin_of_error(sd, n), n=n)


@dataclass
class ReportRow:
    question_id: str
    status: str  # ok | failed
    accepted: bool = False
    solved_at_iteration: int = 0
    scores: EvaluationScores | None = None
    error: str = ""


@dataclass
class RunReport:
    rows: list[ReportRow]
    aggregates: dict[str, MetricSummary]
    histogram: list[int]  # count solved at iteration 1..max_iterations
    per_iteration: list[dict]  # iteration, n_active, and one mean per metric
    config: dict
    n_questions: int = 0
    n_completed: int = 0
    n_failed: int = 0


def _active_records(records: list[AnswerRecord], iteration: int) -> list[IterationTrace]:
    return [r.traces[iteration - 1] for r in records if len(r.traces) >= iteration]


def aggregate(
    records: list[AnswerRecord], max_iterations: int
) -> tuple[dict[str, MetricSummary], list[int], list[dict]]:
    """Per-metric summaries, the solved-at histogram, and per-iteration means.

    Per-iteration means cover only the questions still active at that
    iteration (solved questions stop producing traces), matching how the
    loop actually behaves.
    """
    if not records:
        raise ValueError("cannot aggregate zero records")
    aggregates = {
        metric: summarize([getattr(r.final_scores, metric) for r in records])
        for metric in METRIC_NAMES
    }
    histogram = [0] * max_iterations
    for record in records:
        histogram[record.solved_at_iteration - 1] += 1
    per_iteration = []
    for iteration in range(1, max_iterations + 1):
        traces = _active_records(records, iteration)
        if not traces:
            continue
        row: dict = {"iteration": iteration, "n_active": len(traces)}
        for metric in METRIC_NAMES:
            row[metric] = statistics.fmean(getattr(t.scores, metric) for t in traces)
        per_iteration.append(row)
    return aggregates, histogram, per_iteration


_SAFE_ID = re.compile(r"[^A-Za-z0-9._-]")


def _trace_filename(question_id: str) -> str:
    return _SAFE_ID.sub("_", question_id) + ".jsonl"


def _trace_record(question_id: str, trace: IterationTrace) -> dict:
    # durations stay in memory only; persisted traces must be byte-stable
    return {
        "question_id": question_id,
        "iteration": trace.iteration,
        "entities": trace.entities,
        "triples": trace.triples,
        "text_units": trace.text_units,
        "community_summaries": trace.community_summaries,
        "prompt": trace.prompt,
        "answer": trace.answer,
        "scores": trace.scores.as_dict(),
    }


def write_traces(record: AnswerRecord, out_dir: str | Path) -> Path:
    traces_dir = Path(out_dir) / TRACES_DIR
    traces_dir.mkdir(parents=True, exist_ok=True)
    path = traces_dir / _trace_filename(record.question_id)
    with path.open("w", encoding="utf-8") as fh:
        for trace in record.traces:
            fh.write(
                json.dumps(_trace_record(record.question_id, trace), ensure_ascii=False, sort_keys=True)
                + "\n"
            )
    return path


def run_benchmark(
    index: KnowledgeIndex,
    store: EmbeddingStore,
    cfg: PipelineConfig,
    questions: list[BenchmarkQuestion],
    parallelism: int = 1,
    runtime: Runtime | None = None,
    out_dir: str | Path | None = None,
) -> RunReport:
    """Answer every question and assemble the report.

    A question that raises is recorded as failed and never aborts the
    batch. Rows are sorted by question id before aggregation, so the
    result is independent of worker scheduling.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def run_one(question: BenchmarkQuestion):
        try:
            record = answer_question(
                index, store, cfg, question.question, runtime=runtime, question_id=question.id
            )
            return question.id, record, None
        except KgragError as exc:
            logger.error("question %s failed: %s", question.id, exc)
            return question.id, None, f"{type(exc).__name__}: {exc}"

    if parallelism == 1:
        outcomes = [run_one(q) for q in questions]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run_one, questions))

    outcomes.sort(key=lambda item: item[0])
    records = [record for _, record, _ in outcomes if record is not None]
    failures = [(qid, error) for qid, record, error in outcomes if record is None]

    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        _write_json(out_path / RUN_CONFIG_JSON, cfg.to_dict())
        for record in records:
            write_traces(record, out_path)
        if failures:
            with (out_path / FAILURES_JSONL).open("w", encoding="utf-8") as fh:
                for qid, error in failures:
                    fh.write(json.dumps({"question_id": qid, "error": error}, sort_keys=True) + "\n")

    return _assemble_report(records, failures, cfg.to_dict(), cfg.max_iterations)


def _assemble_report(
    records: list[AnswerRecord],
    failures: list[tuple[str, str]],
    config: dict,
    max_iterations: int,
) -> RunReport:
    rows = [
        ReportRow(
            question_id=r.question_id,
            status="ok",
            accepted=r.accepted,
            solved_at_iteration=r.solved_at_iteration,
            scores=r.final_scores,
        )
        for r in records
    ] + [
        ReportRow(question_id=qid, status="failed", error=error) for qid, error in failures
    ]
    rows.sort(key=lambda row: row.question_id)
    if records:
        aggregates, histogram, per_iteration = aggregate(records, max_iterations)
    else:
        aggregates, histogram, per_iteration = {}, [0] * max_iterations, []
    return RunReport(
        rows=rows,
        aggregates=aggregates,
        histogram=histogram,
        per_iteration=per_iteration,
        config=config,
        n_questions=len(records) + len(failures),
        n_completed=len(records),
        n_failed=len(failures),
    )


def score_density(report: RunReport) -> list[dict]:
    """Binned frequencies of final scores, 20 uniform bins over [0, 1] per metric.

    Values outside [0, 1] (cosine similarity can be negative) are clamped
    into the range, so the bins of a metric always partition the sample.
    """
    rows = []
    ok_scores = [row.scores for row in report.rows if row.status == "ok"]
    for metric in METRIC_NAMES:
        counts = [0] * DENSITY_BINS
        for scores in ok_scores:
            value = max(0.0, min(1.0, getattr(scores, metric)))
            bin_index = min(int(value * DENSITY_BINS), DENSITY_BINS - 1)
            counts[bin_index] += 1
        for i, count in enumerate(counts):
            rows.append(
                {
                    "metric": metric,
                    "bin_low": i / DENSITY_BINS,
                    "bin_high": (i + 1) / DENSITY_BINS,
                    "count": count,
                }
            )
    return rows


def _report_as_dict(report: RunReport) -> dict:
    return {
        "n_questions": report.n_questions,
        "n_completed": report.n_completed,
        "n_failed": report.n_failed,
        "aggregates": {
            metric: dataclasses.asdict(summary) for metric, summary in report.aggregates.items()
        },
        "histogram": {str(i + 1): count for i, count in enumerate(report.histogram)},
        "per_iteration": report.per_iteration,
        "rows": [
            {
                "question_id": row.question_id,
                "status": row.status,
                "accepted": row.accepted,
                "solved_at_iteration": row.solved_at_iteration,
                "scores": row.scores.as_dict() if row.scores is not None else None,
                "error": row.error,
            }
            for row in report.rows
        ],
        "config": report.config,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def write_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write the five report files; byte-stable for a given report."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out_path / REPORT_JSON
    _write_json(json_path, _report_as_dict(report))
    written.append(json_path)

    rows_path = out_path / ROWS_CSV
    with rows_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["question_id", "status", "accepted", "solved_at_iteration", *METRIC_NAMES,
             "claim_count", "error"]
        )
        for row in report.rows:
            scores = row.scores
            writer.writerow(
                [
                    row.question_id,
                    row.status,
                    row.accepted,
                    row.solved_at_iteration,
                    *(("" if scores is None else repr(getattr(scores, m))) for m in METRIC_NAMES),
                    "" if scores is None else scores.claim_count,
                    row.error,
                ]
            )
    written.append(rows_path)

    histogram_path = out_path / HISTOGRAM_CSV
    with histogram_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "solved"])
        for i, count in enumerate(report.histogram, start=1):
            writer.writerow([i, count])
    written.append(histogram_path)

    per_iteration_path = out_path / PER_ITERATION_CSV
    with per_iteration_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "n_active", *METRIC_NAMES])
        for row in report.per_iteration:
            writer.writerow(
                [row["iteration"], row["n_active"], *(repr(row[m]) for m in METRIC_NAMES)]
            )
    written.append(per_iteration_path)

    density_path = out_path / SCORE_DENSITY_CSV
    with density_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "bin_low", "bin_high", "count"])
        for row in score_density(report):
            writer.writerow([row["metric"], row["bin_low"], row["bin_high"], row["count"]])
    written.append(density_path)

    return written


def _record_from_traces(question_id: str, traces: list[IterationTrace], max_iterations: int) -> AnswerRecord:
    final = select_final(traces)
    accepted = final.scores.accepted
    return AnswerRecord(
        question_id=question_id,
        question="",
        final_answer=final.answer,
        final_scores=final.scores,
        solved_at_iteration=final.iteration if accepted else max_iterations,
        accepted=accepted,
        traces=traces,
    )


def read_run_dir(run_dir: str | Path) -> RunReport:
    """Recompute the report from a run directory's traces and config."""
    base = Path(run_dir)
    config_path = base / RUN_CONFIG_JSON
    if not config_path.is_file():
        raise MissingFile(config_path)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    max_iterations = int(config["max_iterations"])

    traces_dir = base / TRACES_DIR
    records = []
    if traces_dir.is_dir():
        for trace_path in sorted(traces_dir.glob("*.jsonl")):
            traces = []
            question_id = None
            with trace_path.open(encoding="utf-8") as fh:
                for line_number, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise MalformedRecord(trace_path, line_number, f"invalid JSON: {exc.msg}") from exc
                    question_id = obj["question_id"]
                    traces.append(
                        IterationTrace(
                            iteration=obj["iteration"],
                            entities=obj["entities"],
                            triples=obj["triples"],
                            text_units=obj["text_units"],
                            community_summaries=obj["community_summaries"],
                            prompt=obj["prompt"],
                            answer=obj["answer"],
                            scores=EvaluationScores(**obj["scores"]),
                        )
                    )
            if traces:
                records.append(_record_from_traces(question_id, traces, max_iterations))

    failures = []
    failures_path = base / FAILURES_JSONL
    if failures_path.is_file():
        with failures_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    failures.append((obj["question_id"], obj["error"]))

    if not records and not failures:
        raise EmptyDataset(f"no traces found under {traces_dir}")
    return _assemble_report(records, failures, config, max_iterations)
