"""Shared builders and fakes used across the suite."""

import json

import numpy as np

from kgrag.index import (
    Community,
    Entity,
    KnowledgeIndex,
    Relation,
    TextUnit,
    _build_adjacency,
    save_index,
)


def make_index(entity_ids, edges=(), units=(), communities=(), names=None) -> KnowledgeIndex:
    """Build a small validated index from shorthand descriptions.

    edges: (relation_id, source, target[, description]) tuples
    units: (unit_id, text, [entity ids]) tuples
    communities: (community_id, level, [entity ids], summary) tuples
    """
    names = names or {}
    entities = {
        eid: Entity(id=eid, name=names.get(eid, eid.upper()), description=f"description of {eid}")
        for eid in entity_ids
    }
    relations = {}
    for edge in edges:
        rid, source, target = edge[0], edge[1], edge[2]
        description = edge[3] if len(edge) > 3 else f"{source} to {target}"
        relations[rid] = Relation(id=rid, source=source, target=target, description=description)
    text_units = {u[0]: TextUnit(id=u[0], text=u[1], entity_ids=frozenset(u[2])) for u in units}
    comms = {
        c[0]: Community(id=c[0], level=c[1], member_entity_ids=frozenset(c[2]), summary=c[3])
        for c in communities
    }
    return KnowledgeIndex(
        entities=entities,
        relations=relations,
        text_units=text_units,
        communities=comms,
        adjacency=_build_adjacency(entities, relations),
    )


def write_index_dir(index: KnowledgeIndex, path):
    save_index(index, path)
    return path


def random_index(rng, n_entities=20, n_relations=30, n_units=10):
    """Random graph for oracle comparisons."""
    entity_ids = [f"e{i:03d}" for i in range(n_entities)]
    edges = []
    for i in range(n_relations):
        a, b = rng.choice(entity_ids), rng.choice(entity_ids)
        edges.append((f"r{i:03d}", a, b, f"link {i} between {a} and {b}"))
    units = []
    for i in range(n_units):
        tagged = rng.sample(entity_ids, k=min(len(entity_ids), rng.randint(1, 3)))
        units.append((f"u{i:03d}", f"passage {i} mentions {' and '.join(tagged)}", tagged))
    return make_index(entity_ids, edges, units)


class MapEmbedder:
    """Embedding provider stand-in with explicitly chosen vectors."""

    def __init__(self, mapping, dimension=None):
        self.mapping = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}
        self.dimension = dimension or len(next(iter(self.mapping.values())))
        self.compute_calls = 0

    def embed(self, text):
        self.compute_calls += 1
        try:
            return self.mapping[text]
        except KeyError:
            raise AssertionError(f"MapEmbedder has no vector for {text!r}") from None

    def embed_many(self, texts):
        return [self.embed(t) for t in texts]


class FakeChat:
    """Returns canned texts in order; records prompts it saw."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        from kgrag.generation import ChatResult

        self.prompts.append(prompt)
        if not self.replies:
            raise AssertionError("FakeChat ran out of replies")
        return ChatResult(text=self.replies.pop(0), request={"prompt": prompt}, response={})


class ConstantChat:
    """Always returns the same text."""

    def __init__(self, text="a constant answer"):
        self.text = text
        self.calls = 0

    def complete(self, prompt):
        from kgrag.generation import ChatResult

        self.calls += 1
        return ChatResult(text=self.text, request={"prompt": prompt}, response={})


class ScheduleJudge:
    """Judge fake driven by per-iteration verdict schedules.

    faith_schedule / comp_schedule hold one entry per verification round:
    a boolean (all verdicts positive / negative) or a float fraction of
    positive verdicts. Exhausted schedules repeat their last entry. The
    prompt kind is recognized by its instruction line.
    """

    def __init__(self, faith_schedule, comp_schedule=None, n_claims=2, n_statements=2):
        self.faith_schedule = list(faith_schedule)
        self.comp_schedule = list(comp_schedule) if comp_schedule is not None else [True]
        self.n_claims = n_claims
        self.n_statements = n_statements
        self.faith_round = 0
        self.comp_round = 0

    @staticmethod
    def _positives(schedule, i, total):
        entry = schedule[min(i, len(schedule) - 1)]
        if entry is True:
            return total
        if entry is False:
            return 0
        return round(entry * total)

    @staticmethod
    def _verdicts(positive_count, total, yes, no):
        lines = [f"VERDICT: {yes}"] * positive_count + [f"VERDICT: {no}"] * (total - positive_count)
        return "\n".join(lines)

    def complete(self, prompt):
        from kgrag.generation import ChatResult

        def reply(text):
            return ChatResult(text=text, request={"prompt": prompt}, response={})

        if prompt.startswith("Split the answer"):
            return reply("\n".join(f"CLAIM: claim {i}" for i in range(self.n_claims)))
        if prompt.startswith("Decide for each numbered claim"):
            count = self._positives(self.faith_schedule, self.faith_round, self.n_claims)
            self.faith_round += 1
            return reply(self._verdicts(count, self.n_claims, "supported", "unsupported"))
        if prompt.startswith("List the statements"):
            return reply("\n".join(f"STATEMENT: statement {i}" for i in range(self.n_statements)))
        if prompt.startswith("Decide for each numbered statement"):
            count = self._positives(self.comp_schedule, self.comp_round, self.n_statements)
            self.comp_round += 1
            return reply(self._verdicts(count, self.n_statements, "reflected", "missing"))
        if prompt.startswith("Write "):
            return reply("QUESTION: generated question")
        raise AssertionError(f"ScheduleJudge got an unrecognized prompt: {prompt[:60]!r}")


class QuestionEchoChat:
    """Derives the answer from the prompt's question line, so transcripts
    and judges can key on a per-question marker."""

    def complete(self, prompt):
        from kgrag.generation import ChatResult

        question = prompt.split("Question: ", 1)[1].splitlines()[0]
        return ChatResult(
            text=f"answer for [{question}]", request={"prompt": prompt}, response={}
        )


class PerQuestionJudge:
    """ScheduleJudge variant with one schedule per question marker.

    Markers must be unique substrings threaded through question, answer
    and claims, so every judge prompt kind can be routed. Thread-safe.
    """

    def __init__(self, schedules, n_claims=2, n_statements=2):
        import threading

        self.schedules = dict(schedules)
        self.n_claims = n_claims
        self.n_statements = n_statements
        self.faith_rounds = {m: 0 for m in schedules}
        self.comp_rounds = {m: 0 for m in schedules}
        self._lock = threading.Lock()

    def _marker(self, prompt):
        hits = [m for m in self.schedules if m in prompt]
        assert len(hits) == 1, f"expected exactly one marker in prompt, found {hits}"
        return hits[0]

    def complete(self, prompt):
        from kgrag.generation import ChatResult

        def reply(text):
            return ChatResult(text=text, request={"prompt": prompt}, response={})

        marker = self._marker(prompt)
        if prompt.startswith("Split the answer"):
            return reply(
                "\n".join(f"CLAIM: [{marker}] claim {i}" for i in range(self.n_claims))
            )
        if prompt.startswith("Decide for each numbered claim"):
            with self._lock:
                i = self.faith_rounds[marker]
                self.faith_rounds[marker] += 1
            count = ScheduleJudge._positives(self.schedules[marker], i, self.n_claims)
            return reply(ScheduleJudge._verdicts(count, self.n_claims, "supported", "unsupported"))
        if prompt.startswith("List the statements"):
            return reply(
                "\n".join(f"STATEMENT: [{marker}] statement {i}" for i in range(self.n_statements))
            )
        if prompt.startswith("Decide for each numbered statement"):
            with self._lock:
                self.comp_rounds[marker] += 1
            return reply(
                ScheduleJudge._verdicts(self.n_statements, self.n_statements, "reflected", "missing")
            )
        if prompt.startswith("Write "):
            return reply("QUESTION: generated question")
        raise AssertionError(f"PerQuestionJudge got an unrecognized prompt: {prompt[:60]!r}")


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def generator_records(marker, rounds):
    """Transcript records answering one question for `rounds` iterations."""
    return [
        {"match": marker, "response": f"scripted answer about {marker}"}
        for _ in range(rounds)
    ]


def judge_records(marker, solve_at, max_iterations=4):
    """Transcript records scripting one question's gate schedule.

    Faithfulness fails every iteration before `solve_at` and passes there;
    completeness always passes; solve_at=None never passes. Matches pair a
    prompt-kind phrase with the question marker, and repeated matches are
    consumed in order, one block per iteration.
    """
    rounds = max_iterations if solve_at is None else solve_at
    records = []
    for i in range(rounds):
        passing = solve_at is not None and i == solve_at - 1
        records += [
            {
                "match": ["Split the answer", marker],
                "response": f"CLAIM: [{marker}] claim",
            },
            {
                "match": ["Decide for each numbered claim", f"[{marker}] claim"],
                "response": "VERDICT: supported" if passing else "VERDICT: unsupported",
            },
            {
                "match": ["List the statements", marker],
                "response": f"STATEMENT: [{marker}] statement",
            },
            {
                "match": ["reflected in the answer", f"[{marker}] statement"],
                "response": "VERDICT: reflected",
            },
            {
                "match": ["valid response", marker],
                "response": f"QUESTION: a question about {marker}",
            },
        ]
    return records


def scripted_workspace(base_dir, schedule, n_entities=6):
    """Lay out index dir, dataset, transcripts and config for CLI-level runs.

    schedule: {marker: solve_at_iteration or None}. Returns a dict of paths.
    """
    import yaml

    ids = [f"e{i}" for i in range(n_entities)]
    edges = [(f"r{i}", ids[i], ids[i + 1], f"step {i}") for i in range(n_entities - 1)]
    units = [(f"u{i}", f"passage about {ids[i]}", [ids[i]]) for i in range(n_entities)]
    index_dir = base_dir / "index"
    save_index(make_index(ids, edges, units), index_dir)

    dataset = write_jsonl(
        base_dir / "questions.jsonl",
        [
            {"_id": marker, "question": f"what links the items of {marker}?"}
            for marker in schedule
        ],
    )

    gen_records, jdg_records = [], []
    for marker, solve_at in schedule.items():
        rounds = 4 if solve_at is None else solve_at
        gen_records += generator_records(marker, rounds)
        jdg_records += judge_records(marker, solve_at)
    gen_path = write_jsonl(base_dir / "generator.jsonl", gen_records)
    judge_path = write_jsonl(base_dir / "judge.jsonl", jdg_records)

    config = {
        "embedding": {"kind": "mock", "dimension": 16},
        "generator": {"kind": "scripted", "transcript": str(gen_path)},
        "judge": {"kind": "scripted", "transcript": str(judge_path)},
        "retrieval": {"k_relations": 2, "k_text_units": 1, "k_communities": 1},
    }
    config_path = base_dir / "config.yaml"
    config_path.write_text(yaml.safe_dump(config), encoding="utf-8")

    return {
        "index_dir": index_dir,
        "dataset": dataset,
        "config": config_path,
        "generator_transcript": gen_path,
        "judge_transcript": judge_path,
    }
