"""Subgraph explanations for alignment pairs.

An explanation for a pair (e1, e2) is built in two moves: find neighbor pairs
that the current alignment already matches within h hops of both centers, then
match the paths leading from each center to its matched neighbor. Two paths
are matched when each is the other's best choice by cosine over path
embeddings (mutual best). The union of triples along matched paths is the
explanation subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .embedding import EmbeddingStore, path_embedding
from .errors import ZeroVector
from .kg import (
    Direction,
    EntityRef,
    Kg,
    RelationPath,
    Triple,
    neighborhood_entities,
    neighborhood_triples,
)


@dataclass(frozen=True)
class MatchedPathPair:
    source_path: RelationPath
    target_path: RelationPath
    similarity: float


@dataclass
class Explanation:
    pair: tuple[EntityRef, EntityRef]
    matched_neighbor_pairs: list[tuple[EntityRef, EntityRef]]
    path_pairs: list[MatchedPathPair]
    triples: set[Triple]
    no_match: bool


class PathIndex:
    """Caches enumerated paths and their unit path embeddings for one side.

    Paths and embeddings depend only on the graph and the store, so one index
    can serve many explanation calls.
    """

    def __init__(self, kg: Kg, store: EmbeddingStore, h: int, signed: bool = False):
        from .kg import enumerate_paths

        self.kg = kg
        self.store = store
        self.h = h
        self.signed = signed
        self._enumerate = enumerate_paths
        self._by_endpoint: dict[int, dict[int, list[RelationPath]]] = {}
        self._units: dict[tuple[int, tuple], np.ndarray | None] = {}

    def paths_to(self, center: int, endpoint: int) -> list[RelationPath]:
        grouped = self._by_endpoint.get(center)
        if grouped is None:
            grouped = {}
            for p in self._enumerate(self.kg, center, self.h):
                grouped.setdefault(p.endpoint.index, []).append(p)
            self._by_endpoint[center] = grouped
        return grouped.get(endpoint, [])

    def unit_embedding(self, path: RelationPath) -> np.ndarray | None:
        """Unit-norm path embedding, or None when the embedding is all-zero."""
        key = (path.center.index, path.key())
        if key not in self._units:
            vec = path_embedding(self.store, self.kg, path, signed=self.signed)
            norm = float(np.linalg.norm(vec))
            self._units[key] = None if norm == 0.0 else vec / norm
        return self._units[key]


def _as_alignment_map(alignments) -> Mapping[int, int]:
    if isinstance(alignments, Mapping):
        return alignments
    return {int(s): int(t) for s, t in alignments}


def matched_neighbors(
    pair: tuple[int, int],
    kg1: Kg,
    kg2: Kg,
    alignments,
    h: int,
) -> list[tuple[EntityRef, EntityRef]]:
    """Neighbor pairs already matched by ``alignments`` within h hops of both
    centers, excluding the central pair itself; sorted by source index."""
    e1, e2 = int(pair[0]), int(pair[1])
    amap = _as_alignment_map(alignments)
    n2 = set(neighborhood_entities(kg2, e2, h))
    out = []
    for n1 in neighborhood_entities(kg1, e1, h):
        t = amap.get(n1)
        if t is None or t not in n2:
            continue
        if n1 == e1 and t == e2:
            continue
        out.append((kg1.entity(n1), kg2.entity(t)))
    return out


def match_paths(
    pair: tuple[int, int],
    neighbor_pair: tuple[int, int],
    store: EmbeddingStore,
    kg1: Kg,
    kg2: Kg,
    h: int,
    signed: bool = False,
    index1: PathIndex | None = None,
    index2: PathIndex | None = None,
) -> list[MatchedPathPair]:
    """Mutual-best path matching between the two sides of one neighbor pair.

    Ties resolve toward the lexicographically first path (enumeration order).
    Paths whose embedding is all-zero never match. Returns an empty list when
    either side has no path to its neighbor.
    """
    index1 = index1 or PathIndex(kg1, store, h, signed)
    index2 = index2 or PathIndex(kg2, store, h, signed)
    p1 = index1.paths_to(int(pair[0]), int(neighbor_pair[0]))
    p2 = index2.paths_to(int(pair[1]), int(neighbor_pair[1]))
    if not p1 or not p2:
        return []
    u1 = [index1.unit_embedding(p) for p in p1]
    u2 = [index2.unit_embedding(p) for p in p2]
    sims = np.full((len(p1), len(p2)), -2.0, dtype=np.float64)
    for i, a in enumerate(u1):
        if a is None:
            continue
        for j, b in enumerate(u2):
            if b is None:
                continue
            sims[i, j] = float(np.dot(a, b))
    best1 = np.argmax(sims, axis=1)
    best2 = np.argmax(sims, axis=0)
    out = []
    for i, j in enumerate(best1):
        if sims[i, j] <= -2.0:
            continue
        if best2[j] == i:
            out.append(MatchedPathPair(p1[i], p2[int(j)], float(sims[i, j])))
    return out


def path_triples(kg: Kg, path: RelationPath) -> list[Triple]:
    """The triples traversed by a path, in step order."""
    anchor = path.center.index
    out = []
    for step in path.steps:
        if step.direction is Direction.OUTGOING:
            out.append(kg.triple(anchor, step.relation.index, step.entity.index))
        else:
            out.append(kg.triple(step.entity.index, step.relation.index, anchor))
        anchor = step.entity.index
    return out


def candidate_triples(kg1: Kg, kg2: Kg, pair: tuple[int, int], h: int) -> set[Triple]:
    """All triples within h hops of either center: the explanation's search space."""
    cand = set(neighborhood_triples(kg1, int(pair[0]), h))
    cand.update(neighborhood_triples(kg2, int(pair[1]), h))
    return cand


def explanation(
    pair: tuple[int, int],
    kg1: Kg,
    kg2: Kg,
    store: EmbeddingStore,
    alignments,
    h: int,
    signed: bool = False,
    index1: PathIndex | None = None,
    index2: PathIndex | None = None,
    neighbor_pairs: Iterable[tuple[EntityRef, EntityRef]] | None = None,
) -> Explanation:
    """Build the matched subgraph explanation for one pair.

    ``neighbor_pairs`` can inject a pre-filtered neighbor list; by default it
    is computed from ``alignments``. ``no_match`` is set when no triple was
    selected at all.
    """
    e1, e2 = int(pair[0]), int(pair[1])
    index1 = index1 or PathIndex(kg1, store, h, signed)
    index2 = index2 or PathIndex(kg2, store, h, signed)
    if neighbor_pairs is None:
        neighbor_pairs = matched_neighbors((e1, e2), kg1, kg2, alignments, h)
    else:
        neighbor_pairs = list(neighbor_pairs)
    path_pairs: list[MatchedPathPair] = []
    triples: set[Triple] = set()
    for n1, n2 in neighbor_pairs:
        for mp in match_paths(
            (e1, e2), (n1.index, n2.index), store, kg1, kg2, h,
            signed=signed, index1=index1, index2=index2,
        ):
            path_pairs.append(mp)
            triples.update(path_triples(kg1, mp.source_path))
            triples.update(path_triples(kg2, mp.target_path))
    return Explanation(
        pair=(kg1.entity(e1), kg2.entity(e2)),
        matched_neighbor_pairs=list(neighbor_pairs),
        path_pairs=path_pairs,
        triples=triples,
        no_match=not triples,
    )
