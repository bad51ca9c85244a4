#!/usr/bin/env python3
"""Build a tiny knowledge graph by hand and poke at its structure."""

from exea.explain import neighborhood_entities
from exea.kg import Kg, Side, enumerate_paths, functionality, inverse_functionality

entities = [
    "Gavin Newsom",
    "Jerry Brown",
    "Democratic Party",
    "California",
    "Sacramento",
    "Kamala Harris",
]
relations = ["predecessor", "party", "governor_of", "capital", "senator_of"]
triples = [
    (1, 0, 0),  # Jerry Brown --predecessor--> Gavin Newsom
    (0, 1, 2),
    (1, 1, 2),
    (5, 1, 2),
    (0, 2, 3),
    (1, 2, 3),
    (3, 3, 4),
    (5, 4, 3),
]
kg = Kg(Side.SOURCE, entities, relations, triples)
print(f"graph: {kg.n_entities} entities, {kg.n_relations} relations, {len(kg.triples)} triples")


def fmt_path(path):
    out = path.center.label
    for step in path.steps:
        arrow = "->" if step.direction.value == "out" else "<-"
        out += f" {arrow}[{step.relation.label}] {step.entity.label}"
    return out


print("\n2-hop neighborhood of Gavin Newsom:")
for idx in sorted(neighborhood_entities(kg, 0, h=2)):
    print(f"  {kg.entity(idx).label}")

print("\npaths from Gavin Newsom up to 2 hops:")
for path in enumerate_paths(kg, 0, h=2):
    print(f"  ({path.length} hop) {fmt_path(path)}")

# Functionality is how close the relation is to assigning one object per
# subject; inverse functionality is the same idea seen from the object side.
print("\nrelation        func   ifunc")
for r in range(kg.n_relations):
    f, inv = functionality(kg, r), inverse_functionality(kg, r)
    print(f"{kg.relation(r).label:<15} {f:.3f}  {inv:.3f}")

print("\n'party' has three subjects sharing one object, so its inverse")
print("functionality drops; 'predecessor' is one-to-one here, so both are 1.")
