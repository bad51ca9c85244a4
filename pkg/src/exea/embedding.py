"""Embedding storage, similarity search, and path encodings.

Vectors are stored as 32-bit floats; every similarity or aggregation is
accumulated in 64-bit. The on-disk format is sectioned: a text section starts
with ``exea-emb v1 <kind> <count> <dim>`` followed by one ``id<TAB>values``
row per vector, and a binary section starts with ``exea-emb v1b ...`` followed
by packed little-endian records (uint32 id + dim float32 values). One file may
concatenate several sections (entity vectors per side, optional relation
vectors, optional relation-name vectors).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    MalformedLine,
    MissingEmbedding,
    NoRelationVectors,
    UnknownRelation,
    ZeroVector,
)
from .kg import Direction, Kg, RelationPath, Side

ENTITY_KIND = {Side.SOURCE: "source", Side.TARGET: "target"}
RELATION_KIND = {Side.SOURCE: "source-rel", Side.TARGET: "target-rel"}
NAME_KIND = {Side.SOURCE: "source-rel-name", Side.TARGET: "target-rel-name"}
_KIND_BY_TOKEN = (
    {v: ("entity", k) for k, v in ENTITY_KIND.items()}
    | {v: ("relation", k) for k, v in RELATION_KIND.items()}
    | {v: ("name", k) for k, v in NAME_KIND.items()}
)

_TEXT_MAGIC = "exea-emb v1"
_BINARY_MAGIC = "exea-emb v1b"


def _as_matrix(arr, what: str) -> np.ndarray:
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{what} must be a 2-d array, got shape {m.shape}")
    # check finiteness after the narrowing cast: values past float32 range
    # would otherwise overflow to inf silently
    with np.errstate(over="ignore"):
        out = np.ascontiguousarray(m, dtype=np.float32)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{what} contains non-finite or out-of-range values")
    return out


class EmbeddingStore:
    """Entity vectors per side plus optional relation and relation-name vectors."""

    def __init__(
        self,
        entity_vecs: Mapping[Side, np.ndarray],
        relation_vecs: Mapping[Side, np.ndarray] | None = None,
        name_relation_vecs: Mapping[Side, np.ndarray] | None = None,
    ):
        if not entity_vecs:
            raise ValueError("entity_vecs must cover at least one side")
        self._entity = {side: _as_matrix(m, f"entity vectors ({side.value})") for side, m in entity_vecs.items()}
        self._relation = {
            side: _as_matrix(m, f"relation vectors ({side.value})")
            for side, m in (relation_vecs or {}).items()
        }
        self._name_relation = {
            side: _as_matrix(m, f"relation-name vectors ({side.value})")
            for side, m in (name_relation_vecs or {}).items()
        }
        dims = {m.shape[1] for m in self._entity.values()}
        dims.update(m.shape[1] for m in self._relation.values())
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self._derived_relation: dict[Side, np.ndarray] = {}

    def sides(self) -> list[Side]:
        return [s for s in (Side.SOURCE, Side.TARGET) if s in self._entity]

    def entity_matrix(self, side: Side) -> np.ndarray:
        if side not in self._entity:
            raise MissingEmbedding(f"no entity vectors for side {side.value}")
        return self._entity[side]

    def n_entities(self, side: Side) -> int:
        return self.entity_matrix(side).shape[0]

    def entity_vec(self, side: Side, index: int) -> np.ndarray:
        mat = self.entity_matrix(side)
        if not 0 <= index < mat.shape[0]:
            raise MissingEmbedding(f"entity {index} has no vector on side {side.value}")
        return mat[index].astype(np.float64)

    def has_relation_vecs(self, side: Side) -> bool:
        return side in self._relation

    def relation_vecs(self, side: Side) -> np.ndarray:
        if side not in self._relation:
            raise NoRelationVectors(f"no model relation vectors for side {side.value}")
        return self._relation[side]

    def has_name_relation_vecs(self, side: Side) -> bool:
        return side in self._name_relation

    def name_relation_vecs(self, side: Side) -> np.ndarray:
        if side not in self._name_relation:
            raise NoRelationVectors(f"no relation-name vectors for side {side.value}")
        return self._name_relation[side]

    def relation_matrix(self, kg: Kg) -> np.ndarray:
        """Relation vectors for ``kg``'s side: model-supplied when present,
        otherwise derived by translation over each relation's triples.
        Relations without triples get zero rows in the derived matrix."""
        side = kg.side
        if side in self._relation:
            return self._relation[side].astype(np.float64)
        cached = self._derived_relation.get(side)
        if cached is not None and cached.shape[0] == kg.n_relations:
            return cached
        ents = self.entity_matrix(side).astype(np.float64)
        mat = np.zeros((kg.n_relations, self.dim), dtype=np.float64)
        for r in range(kg.n_relations):
            trs = kg.relation_triples(r)
            if not trs:
                continue
            s_idx = np.fromiter((t[0] for t in trs), dtype=np.int64)
            o_idx = np.fromiter((t[2] for t in trs), dtype=np.int64)
            if s_idx.max() >= ents.shape[0] or o_idx.max() >= ents.shape[0]:
                raise MissingEmbedding(f"triples of relation {r} reference entities without vectors")
            mat[r] = (ents[s_idx] - ents[o_idx]).mean(axis=0)
        self._derived_relation[side] = mat
        return mat


def derive_relation_embedding(store: EmbeddingStore, kg: Kg, r) -> np.ndarray:
    """Vector for relation ``r``: the mean of (subject - object) entity vectors
    over its triples; when the store already holds model relation vectors for
    that side, those take precedence and no derivation happens."""
    idx = r.index if hasattr(r, "index") else int(r)
    if store.has_relation_vecs(kg.side):
        mat = store.relation_vecs(kg.side)
        if not 0 <= idx < mat.shape[0]:
            raise MissingEmbedding(f"relation {idx} has no vector on side {kg.side.value}")
        return mat[idx].astype(np.float64)
    if not kg.relation_triples(idx):
        raise UnknownRelation(f"relation {idx} has no triples on side {kg.side.value}")
    return store.relation_matrix(kg)[idx].copy()


def path_embedding(store: EmbeddingStore, kg: Kg, path: RelationPath, signed: bool = False) -> np.ndarray:
    """Encode a path as ``concat(entity_part, relation_part)`` of length 2*dim.

    The entity part averages the anchor entity and the intermediate entities
    (the endpoint is excluded); the relation part averages the step relation
    vectors. With ``signed=True`` an INCOMING step contributes its relation
    vector negated.
    """
    n = path.length
    ent = store.entity_vec(kg.side, path.center.index)
    for step in path.steps[:-1]:
        ent = ent + store.entity_vec(kg.side, step.entity.index)
    rel_mat = store.relation_matrix(kg)
    rel = np.zeros(store.dim, dtype=np.float64)
    for step in path.steps:
        if not 0 <= step.relation.index < rel_mat.shape[0]:
            raise MissingEmbedding(f"relation {step.relation.index} has no vector on side {kg.side.value}")
        vec = rel_mat[step.relation.index]
        if signed and step.direction is Direction.INCOMING:
            vec = -vec
        rel = rel + vec
    return np.concatenate([ent / n, rel / n])


def cosine(u, v) -> float:
    """Cosine similarity in 64-bit; zero-norm inputs are an error."""
    a = np.asarray(u, dtype=np.float64).ravel()
    b = np.asarray(v, dtype=np.float64).ravel()
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def _normalized_rows(store: EmbeddingStore, side: Side, indices) -> np.ndarray:
    mat = store.entity_matrix(side).astype(np.float64)
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= mat.shape[0]):
        raise MissingEmbedding(f"entity index outside store on side {side.value}")
    rows = mat[idx]
    norms = np.linalg.norm(rows, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ZeroVector(f"entity {int(idx[zero[0]])} on side {side.value} has a zero vector")
    return rows / norms[:, None]


def similarity_matrix(store: EmbeddingStore, sources: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Dense cosine matrix between source-side rows and target-side rows."""
    a = _normalized_rows(store, Side.SOURCE, sources)
    b = _normalized_rows(store, Side.TARGET, targets)
    return a @ b.T


@dataclass
class SimilarityTopK:
    """Per-source top-k target candidates, scores descending, ties by lower index."""

    k: int
    sources: tuple[int, ...]
    targets: tuple[int, ...]
    target_indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self._row = {s: i for i, s in enumerate(self.sources)}

    def candidates(self, source: int) -> list[tuple[int, float]]:
        row = self._row.get(source)
        if row is None:
            raise MissingEmbedding(f"source {source} was not included in the top-k index")
        return [
            (int(t), float(s))
            for t, s in zip(self.target_indices[row], self.scores[row])
        ]


def similarity_topk(
    store: EmbeddingStore,
    sources: Sequence[int],
    targets: Sequence[int],
    k: int,
    block_size: int = 4096,
) -> SimilarityTopK:
    """Exact top-k by cosine. Sources are processed in blocks; the result does
    not depend on the block partitioning."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sources = [int(s) for s in sources]
    targets = [int(t) for t in targets]
    if not targets:
        raise ValueError("similarity_topk needs at least one target")
    width = min(k, len(targets))
    b = _normalized_rows(store, Side.TARGET, targets)
    tgt_arr = np.asarray(targets, dtype=np.int64)
    out_idx = np.empty((len(sources), width), dtype=np.int64)
    out_scores = np.empty((len(sources), width), dtype=np.float64)
    for start in range(0, len(sources), block_size):
        chunk = sources[start : start + block_size]
        a = _normalized_rows(store, Side.SOURCE, chunk)
        sims = a @ b.T
        order = np.argsort(-sims, axis=1, kind="stable")[:, :width]
        out_idx[start : start + len(chunk)] = tgt_arr[order]
        out_scores[start : start + len(chunk)] = np.take_along_axis(sims, order, axis=1)
    return SimilarityTopK(k, tuple(sources), tuple(targets), out_idx, out_scores)


def greedy_align(
    store: EmbeddingStore, sources: Sequence[int], targets: Sequence[int]
) -> list[tuple[int, int, float]]:
    """Each source takes its nearest target by cosine (ties: lower target index)."""
    sources = [int(s) for s in sources]
    targets = [int(t) for t in targets]
    if not sources:
        return []
    if not targets:
        raise ValueError("greedy_align needs at least one target")
    sims = similarity_matrix(store, sources, targets)
    best = np.argmax(sims, axis=1)
    return [
        (s, targets[int(j)], float(sims[i, int(j)]))
        for i, (s, j) in enumerate(zip(sources, best))
    ]


def _section_payload(kind: str, ids: np.ndarray, mat: np.ndarray, binary: bool) -> bytes:
    count, dim = mat.shape
    if binary:
        head = f"{_BINARY_MAGIC} {kind} {count} {dim}\n".encode("utf-8")
        body = io.BytesIO()
        ids32 = ids.astype("<u4")
        rows = mat.astype("<f4")
        for i in range(count):
            body.write(ids32[i].tobytes())
            body.write(rows[i].tobytes())
        return head + body.getvalue()
    lines = [f"{_TEXT_MAGIC} {kind} {count} {dim}"]
    for i in range(count):
        values = " ".join(f"{float(v):.9e}" for v in mat[i])
        lines.append(f"{int(ids[i])}\t{values}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_embeddings(path: str | Path, store: EmbeddingStore, binary: bool = False) -> None:
    """Write every section the store holds, source side first."""
    chunks = []
    for side in (Side.SOURCE, Side.TARGET):
        for kinds, present, getter in (
            (ENTITY_KIND, side in store._entity, store.entity_matrix),
            (RELATION_KIND, store.has_relation_vecs(side), store.relation_vecs),
            (NAME_KIND, store.has_name_relation_vecs(side), store.name_relation_vecs),
        ):
            if not present:
                continue
            mat = getter(side)
            ids = np.arange(mat.shape[0], dtype=np.int64)
            chunks.append(_section_payload(kinds[side], ids, np.asarray(mat, dtype=np.float64), binary))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _parse_header(path, line_no: int, line: str) -> tuple[str, str, int, int]:
    parts = line.split(" ")
    if len(parts) != 5 or parts[0] != "exea-emb" or parts[1] not in ("v1", "v1b"):
        raise MalformedLine(path, line_no, f"bad section header {line!r}")
    token = parts[2]
    if token not in _KIND_BY_TOKEN:
        raise MalformedLine(path, line_no, f"unknown section kind {token!r}")
    try:
        count, dim = int(parts[3]), int(parts[4])
    except ValueError:
        raise MalformedLine(path, line_no, "non-integer count or dim in header") from None
    if count < 1 or dim < 1:
        raise MalformedLine(path, line_no, "count and dim must be positive")
    return parts[1], token, count, dim


def _fill_section(path, token, rows: dict[int, np.ndarray], count: int, dim: int, sections) -> None:
    if sorted(rows) != list(range(count)):
        raise MalformedLine(path, 0, f"section {token!r} ids must be dense 0..{count - 1}")
    mat = np.vstack([rows[i] for i in range(count)])
    family, side = _KIND_BY_TOKEN[token]
    if (family, side) in sections:
        raise MalformedLine(path, 0, f"duplicate section {token!r}")
    sections[(family, side)] = mat.reshape(count, dim)


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Read a sectioned embedding file (text or binary, detected per section)."""
    sections: dict[tuple[str, Side], np.ndarray] = {}
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    line_no = 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedLine(path, line_no + 1, "truncated header")
        line_no += 1
        header = data[pos:nl].decode("utf-8", errors="replace")
        version, token, count, dim = _parse_header(path, line_no, header)
        pos = nl + 1
        rows: dict[int, np.ndarray] = {}
        if version == "v1b":
            rec = 4 + 4 * dim
            need = rec * count
            if len(data) - pos < need:
                raise MalformedLine(path, line_no, f"binary section {token!r} truncated")
            block = data[pos : pos + need]
            for i in range(count):
                off = i * rec
                idx = int(np.frombuffer(block, dtype="<u4", count=1, offset=off)[0])
                vec = np.frombuffer(block, dtype="<f4", count=dim, offset=off + 4).astype(np.float64)
                if idx in rows:
                    raise MalformedLine(path, line_no, f"duplicate id {idx} in section {token!r}")
                rows[idx] = vec
            pos += need
        else:
            for _ in range(count):
                nl = data.find(b"\n", pos)
                if nl < 0:
                    raise MalformedLine(path, line_no + 1, f"text section {token!r} truncated")
                line_no += 1
                text = data[pos:nl].decode("utf-8")
                pos = nl + 1
                cols = text.split("\t")
                if len(cols) != 2:
                    raise MalformedLine(path, line_no, "expected id<TAB>values")
                try:
                    idx = int(cols[0])
                    vec = np.array([float(x) for x in cols[1].split(" ") if x], dtype=np.float64)
                except ValueError:
                    raise MalformedLine(path, line_no, "non-numeric value") from None
                if vec.shape[0] != dim:
                    raise MalformedLine(path, line_no, f"expected {dim} values, got {vec.shape[0]}")
                if idx in rows:
                    raise MalformedLine(path, line_no, f"duplicate id {idx} in section {token!r}")
                rows[idx] = vec
        _fill_section(path, token, rows, count, dim, sections)
    entity = {side: m for (fam, side), m in sections.items() if fam == "entity"}
    relation = {side: m for (fam, side), m in sections.items() if fam == "relation"}
    names = {side: m for (fam, side), m in sections.items() if fam == "name"}
    if not entity:
        raise MalformedLine(path, 0, "file contains no entity sections")
    return EmbeddingStore(entity, relation or None, names or None)
