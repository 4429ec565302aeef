"""Knowledge-graph index: load, validate, save, and query adjacency.

The index is the read-only retrieval substrate: entities, described
relations between them, source text units tagged with the entities they
mention, and community groupings with textual summaries. An index
directory holds four newline-delimited JSON files::

    entities.jsonl    {"id", "name", "description", "community_id"?}
    relations.jsonl   {"id", "source", "target", "description"}
    text_units.jsonl  {"id", "text", "entity_ids": [...]}
    communities.jsonl {"id", "level", "member_entity_ids": [...], "summary"}

Embedding vectors are not stored here; see :mod:`kgrag.embedding`.
Once loaded an index is treated as immutable, so it can be shared by
concurrent readers.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    CommunitiesAlreadyPresent,
    DanglingReference,
    DuplicateId,
    InvalidIndex,
    MalformedRecord,
    MissingFile,
    UnknownEntity,
)

logger = logging.getLogger(__name__)

ENTITIES_FILE = "entities.jsonl"
RELATIONS_FILE = "relations.jsonl"
TEXT_UNITS_FILE = "text_units.jsonl"
COMMUNITIES_FILE = "communities.jsonl"


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    description: str = ""
    community_id: str | None = None


@dataclass(frozen=True)
class Relation:
    id: str
    source: str
    target: str
    description: str = ""


@dataclass(frozen=True)
class TextUnit:
    id: str
    text: str
    entity_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Community:
    id: str
    level: int
    member_entity_ids: frozenset[str]
    summary: str = ""


@dataclass
class KnowledgeIndex:
    """Validated keyed collections plus the entity -> relation incidence map."""

    entities: dict[str, Entity]
    relations: dict[str, Relation]
    text_units: dict[str, TextUnit]
    communities: dict[str, Community]
    adjacency: dict[str, frozenset[str]] = field(default_factory=dict)
    dropped_duplicate_relations: int = 0

    def __eq__(self, other):
        if not isinstance(other, KnowledgeIndex):
            return NotImplemented
        return (
            self.entities == other.entities
            and self.relations == other.relations
            and self.text_units == other.text_units
            and self.communities == other.communities
        )


def _build_adjacency(entities, relations) -> dict[str, frozenset[str]]:
    incident: dict[str, set[str]] = {eid: set() for eid in entities}
    for rel in relations.values():
        incident[rel.source].add(rel.id)
        incident[rel.target].add(rel.id)
    return {eid: frozenset(rids) for eid, rids in incident.items()}


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    if not path.is_file():
        raise MissingFile(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(path, line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise MalformedRecord(path, line_number, "record must be a JSON object")
            records.append((line_number, obj))
    return records


def _require(obj: dict, key: str, kind, path: Path, line_number: int):
    if key not in obj:
        raise MalformedRecord(path, line_number, f"missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise MalformedRecord(path, line_number, f"field {key!r} has wrong type")
    return value


def load_index(path: str | Path) -> KnowledgeIndex:
    """Load and validate an index directory.

    Raises MissingFile, MalformedRecord, DuplicateId, DanglingReference or
    InvalidIndex when the directory does not describe a consistent graph.
    Relations that duplicate an existing (source, target, description)
    triple are dropped with a warning rather than rejected.
    """
    base = Path(path)

    entities: dict[str, Entity] = {}
    for line_number, obj in _read_jsonl(base / ENTITIES_FILE):
        eid = _require(obj, "id", str, base / ENTITIES_FILE, line_number)
        if not eid:
            raise MalformedRecord(base / ENTITIES_FILE, line_number, "empty entity id")
        if eid in entities:
            raise DuplicateId("entity", eid)
        entities[eid] = Entity(
            id=eid,
            name=_require(obj, "name", str, base / ENTITIES_FILE, line_number),
            description=obj.get("description", "") or "",
            community_id=obj.get("community_id"),
        )

    relations: dict[str, Relation] = {}
    seen_triples: set[tuple[str, str, str]] = set()
    dropped = 0
    for line_number, obj in _read_jsonl(base / RELATIONS_FILE):
        rid = _require(obj, "id", str, base / RELATIONS_FILE, line_number)
        if rid in relations:
            raise DuplicateId("relation", rid)
        rel = Relation(
            id=rid,
            source=_require(obj, "source", str, base / RELATIONS_FILE, line_number),
            target=_require(obj, "target", str, base / RELATIONS_FILE, line_number),
            description=obj.get("description", "") or "",
        )
        for endpoint in (rel.source, rel.target):
            if endpoint not in entities:
                raise DanglingReference("entity", endpoint)
        triple = (rel.source, rel.target, rel.description)
        if triple in seen_triples:
            dropped += 1
            continue
        seen_triples.add(triple)
        relations[rid] = rel
    if dropped:
        logger.warning("dropped %d duplicate relation triples while loading %s", dropped, base)

    text_units: dict[str, TextUnit] = {}
    for line_number, obj in _read_jsonl(base / TEXT_UNITS_FILE):
        uid = _require(obj, "id", str, base / TEXT_UNITS_FILE, line_number)
        if uid in text_units:
            raise DuplicateId("text_unit", uid)
        text = _require(obj, "text", str, base / TEXT_UNITS_FILE, line_number)
        if not text:
            raise MalformedRecord(base / TEXT_UNITS_FILE, line_number, "empty text")
        raw_ids = _require(obj, "entity_ids", list, base / TEXT_UNITS_FILE, line_number)
        for eid in raw_ids:
            if eid not in entities:
                raise DanglingReference("entity", eid)
        text_units[uid] = TextUnit(id=uid, text=text, entity_ids=frozenset(raw_ids))

    communities: dict[str, Community] = {}
    members_by_level: dict[int, set[str]] = {}
    for line_number, obj in _read_jsonl(base / COMMUNITIES_FILE):
        cid = _require(obj, "id", str, base / COMMUNITIES_FILE, line_number)
        if cid in communities:
            raise DuplicateId("community", cid)
        level = _require(obj, "level", int, base / COMMUNITIES_FILE, line_number)
        if level < 0:
            raise MalformedRecord(base / COMMUNITIES_FILE, line_number, "negative level")
        raw_members = _require(obj, "member_entity_ids", list, base / COMMUNITIES_FILE, line_number)
        if not raw_members:
            raise MalformedRecord(base / COMMUNITIES_FILE, line_number, "empty member set")
        members = frozenset(raw_members)
        for eid in members:
            if eid not in entities:
                raise DanglingReference("entity", eid)
        taken = members_by_level.setdefault(level, set())
        overlap = taken & members
        if overlap:
            raise InvalidIndex(
                f"communities at level {level} overlap on entities {sorted(overlap)}"
            )
        taken |= members
        communities[cid] = Community(
            id=cid,
            level=level,
            member_entity_ids=members,
            summary=obj.get("summary", "") or "",
        )

    for entity in entities.values():
        if entity.community_id is not None and entity.community_id not in communities:
            raise DanglingReference("community", entity.community_id)

    index = KnowledgeIndex(
        entities=entities,
        relations=relations,
        text_units=text_units,
        communities=communities,
        adjacency=_build_adjacency(entities, relations),
        dropped_duplicate_relations=dropped,
    )
    _check_adjacency(index)
    return index


def _check_adjacency(index: KnowledgeIndex) -> None:
    # incidence must be exactly derivable from the relation set
    rebuilt = _build_adjacency(index.entities, index.relations)
    if rebuilt != index.adjacency:
        raise InvalidIndex("adjacency map is not the incidence map of the relation set")


def save_index(index: KnowledgeIndex, path: str | Path) -> None:
    """Write the four index files; load_index(save_index(x)) == x."""
    base = Path(path)
    base.mkdir(parents=True, exist_ok=True)

    def dump(filename, rows):
        with (base / filename).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    dump(
        ENTITIES_FILE,
        (
            {
                "id": e.id,
                "name": e.name,
                "description": e.description,
                **({"community_id": e.community_id} if e.community_id is not None else {}),
            }
            for e in sorted(index.entities.values(), key=lambda e: e.id)
        ),
    )
    dump(
        RELATIONS_FILE,
        (
            {"id": r.id, "source": r.source, "target": r.target, "description": r.description}
            for r in sorted(index.relations.values(), key=lambda r: r.id)
        ),
    )
    dump(
        TEXT_UNITS_FILE,
        (
            {"id": u.id, "text": u.text, "entity_ids": sorted(u.entity_ids)}
            for u in sorted(index.text_units.values(), key=lambda u: u.id)
        ),
    )
    dump(
        COMMUNITIES_FILE,
        (
            {
                "id": c.id,
                "level": c.level,
                "member_entity_ids": sorted(c.member_entity_ids),
                "summary": c.summary,
            }
            for c in sorted(index.communities.values(), key=lambda c: c.id)
        ),
    )


def _relation_endpoints(index: KnowledgeIndex, entity_id: str):
    for rid in index.adjacency.get(entity_id, ()):
        rel = index.relations[rid]
        yield rel.target if rel.source == entity_id else rel.source


def neighbors(index: KnowledgeIndex, seeds: set[str], hops: int = 1) -> set[str]:
    """Entities reachable from any seed within <= hops edges, seeds excluded.

    Edges are traversed both ways; self-loops contribute nothing.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    for seed in seeds:
        if seed not in index.entities:
            raise UnknownEntity(seed)
    visited = set(seeds)
    frontier = deque((seed, 0) for seed in seeds)
    reached: set[str] = set()
    while frontier:
        entity_id, depth = frontier.popleft()
        if depth == hops:
            continue
        for other in _relation_endpoints(index, entity_id):
            if other in visited:
                continue
            visited.add(other)
            reached.add(other)
            frontier.append((other, depth + 1))
    return reached


def text_units_for(index: KnowledgeIndex, entity_ids: set[str]) -> set[str]:
    """Ids of text units tagged with any of the given entities."""
    for eid in entity_ids:
        if eid not in index.entities:
            raise UnknownEntity(eid)
    query = set(entity_ids)
    return {uid for uid, unit in index.text_units.items() if unit.entity_ids & query}


def relations_incident_to(index: KnowledgeIndex, entity_ids: set[str]) -> set[str]:
    """Ids of relations with at least one endpoint in the given set."""
    out: set[str] = set()
    for eid in entity_ids:
        out |= index.adjacency.get(eid, frozenset())
    return out


def build_fallback_communities(
    index: KnowledgeIndex, max_summary_chars: int = 500
) -> KnowledgeIndex:
    """Derive one level-0 community per connected component.

    A stand-in grouping for indexes that ship without community data, so
    desk-scale runs stay self-contained. Summaries are deterministic
    concatenations of member entity descriptions, truncated to
    ``max_summary_chars``. Returns a new index; the input is unchanged.
    """
    if index.communities:
        raise CommunitiesAlreadyPresent("index already has communities")

    unassigned = set(index.entities)
    components: list[list[str]] = []
    while unassigned:
        start = min(unassigned)  # deterministic component order
        component = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for other in _relation_endpoints(index, current):
                if other not in component:
                    component.add(other)
                    queue.append(other)
        unassigned -= component
        components.append(sorted(component))

    communities: dict[str, Community] = {}
    entities = dict(index.entities)
    for i, member_ids in enumerate(components):
        cid = f"cc-{i}"
        parts = [index.entities[eid].description for eid in member_ids]
        summary = " ".join(p for p in parts if p)[:max_summary_chars]
        if not summary:
            summary = "Entities: " + ", ".join(
                index.entities[eid].name for eid in member_ids
            )[: max_summary_chars - 10]
        communities[cid] = Community(
            id=cid, level=0, member_entity_ids=frozenset(member_ids), summary=summary
        )
        for eid in member_ids:
            entities[eid] = replace(entities[eid], community_id=cid)

    return KnowledgeIndex(
        entities=entities,
        relations=dict(index.relations),
        text_units=dict(index.text_units),
        communities=communities,
        adjacency=dict(index.adjacency),
        dropped_duplicate_relations=index.dropped_duplicate_relations,
    )
