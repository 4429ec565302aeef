#!/usr/bin/env python3
"""Generate a synthetic knowledge-graph index and question set.

Produces a desk-scale index directory (entities, relations, text units;
communities come from the connected-component fallback at load time) and
a matching JSONL question file, all seeded for reproducibility. Useful
for trying the CLI without a real corpus:

    python3 scripts/make_toy_index.py --out toy --entities 40 --seed 1
    kgrag validate-index toy/index
    kgrag embed-index toy/index
"""

import argparse
import json
import random
from pathlib import Path

TOPICS = ["river", "bridge", "museum", "mountain", "harbor", "observatory", "library"]
CITIES = ["Avalon", "Brightwater", "Cinderfall", "Dunmore", "Eastvale", "Farholm"]


def build(out_dir: Path, n_entities: int, seed: int) -> None:
    rng = random.Random(seed)
    index_dir = out_dir / "index"
    index_dir.mkdir(parents=True, exist_ok=True)

    entities = []
    for i in range(n_entities):
        name = f"{rng.choice(CITIES)} {rng.choice(TOPICS).title()} {i}"
        entities.append(
            {
                "id": f"e{i:04d}",
                "name": name,
                "description": f"{name} is a well-known {rng.choice(TOPICS)} landmark.",
            }
        )

    relations = []
    for i in range(n_entities * 2):
        a, b = rng.sample(entities, 2)
        relations.append(
            {
                "id": f"r{i:04d}",
                "source": a["id"],
                "target": b["id"],
                "description": f"{a['name']} is connected to {b['name']} by route {i}",
            }
        )

    units = []
    for i in range(n_entities):
        tagged = rng.sample(entities, k=rng.randint(1, 3))
        names = ", ".join(e["name"] for e in tagged)
        units.append(
            {
                "id": f"u{i:04d}",
                "text": f"Travel records from year {1800 + i} mention {names} in the same journey.",
                "entity_ids": [e["id"] for e in tagged],
            }
        )

    def dump(name, rows):
        with (index_dir / name).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    dump("entities.jsonl", entities)
    dump("relations.jsonl", relations)
    dump("text_units.jsonl", units)
    dump("communities.jsonl", [])

    questions = []
    for i in range(min(20, n_entities)):
        entity = entities[rng.randrange(n_entities)]
        questions.append(
            {"_id": f"toy{i:03d}", "question": f"What is {entity['name']} connected to?"}
        )
    with (out_dir / "questions.jsonl").open("w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps(q, ensure_ascii=False) + "\n")

    print(f"wrote {len(entities)} entities, {len(relations)} relations, "
          f"{len(units)} text units under {index_dir}")
    print(f"wrote {len(questions)} questions to {out_dir / 'questions.jsonl'}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="toy", help="output directory (default: toy)")
    parser.add_argument("--entities", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    build(Path(args.out), args.entities, args.seed)


if __name__ == "__main__":
    main()
