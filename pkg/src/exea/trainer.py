"""A small deterministic translational embedding trainer.

Each side's triples are fit with a margin loss on squared translation error
(subject + relation should land on object, corrupted triples should not), and
seed alignment pairs are pulled together by a quadratic penalty so the two
spaces share coordinates. Everything is plain numpy full-batch gradient
descent with seeded negative sampling: the same config always produces the
same store, bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingStore
from .errors import ConfigError, EmptyKg, NoSeedsWarning, TrainerFailure
from .kg import Kg, Side


# Step size for the seed-alignment loss 0.5*sum(|e1 - e2|^2). At 0.5 each
# epoch moves both members of a seed pair to their midpoint, the exact
# minimizer of that epoch's alignment term.
_ALIGN_RATE = 0.5


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 32
    epochs: int = 800
    learning_rate: float = 0.02
    negatives_per_positive: int = 2
    margin: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.negatives_per_positive < 1:
            raise ConfigError(
                f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}"
            )
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")


def _normalize_rows(mat: np.ndarray) -> None:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    np.maximum(norms, 1e-12, out=norms)
    mat /= norms


def _init_side(rng: np.random.Generator, n_ent: int, n_rel: int, dim: int):
    ents = rng.standard_normal((n_ent, dim)) / np.sqrt(dim)
    _normalize_rows(ents)
    rels = rng.standard_normal((max(n_rel, 1), dim)) / np.sqrt(dim)
    return ents, rels[:n_rel] if n_rel else np.zeros((0, dim))


class _SideData:
    def __init__(self, kg: Kg):
        if not kg.triple_keys:
            raise EmptyKg(f"cannot train on an empty graph (side {kg.side.value})")
        self.n_ent = kg.n_entities
        self.n_rel = kg.n_relations
        arr = np.asarray(kg.triple_keys, dtype=np.int64)
        self.s, self.r, self.o = arr[:, 0], arr[:, 1], arr[:, 2]
        self.m = arr.shape[0]
        self.true_keys = np.sort((self.s * self.n_rel + self.r) * self.n_ent + self.o)

    def sample_negatives(self, rng: np.random.Generator, k: int):
        """Corrupt head or tail uniformly; redraw accidental positives."""
        neg = rng.integers(0, self.n_ent, size=(self.m, k))
        corrupt_head = rng.integers(0, 2, size=(self.m, k)).astype(bool)
        s_pos = self.s[:, None]
        o_pos = self.o[:, None]
        r_pos = self.r[:, None]
        for _ in range(4):
            s_neg = np.where(corrupt_head, neg, s_pos)
            o_neg = np.where(corrupt_head, o_pos, neg)
            keys = (s_neg * self.n_rel + r_pos) * self.n_ent + o_neg
            idx = np.searchsorted(self.true_keys, keys)
            idx = np.minimum(idx, self.true_keys.size - 1)
            bad = self.true_keys[idx] == keys
            if not bad.any():
                break
            neg = np.where(bad, rng.integers(0, self.n_ent, size=(self.m, k)), neg)
        s_neg = np.where(corrupt_head, neg, s_pos)
        o_neg = np.where(corrupt_head, o_pos, neg)
        return s_neg, o_neg


def _margin_step(E, R, data: _SideData, s_neg, o_neg, lr: float, margin: float) -> float:
    s, r, o = data.s, data.r, data.o
    pos_d = E[s] + R[r] - E[o]
    pos_sq = np.einsum("ij,ij->i", pos_d, pos_d)
    loss = 0.0
    for j in range(s_neg.shape[1]):
        sj = s_neg[:, j]
        oj = o_neg[:, j]
        neg_d = E[sj] + R[r] - E[oj]
        neg_sq = np.einsum("ij,ij->i", neg_d, neg_d)
        viol = margin + pos_sq - neg_sq
        act = viol > 0
        if not act.any():
            continue
        loss += float(viol[act].sum())
        g_pos = (2.0 * lr) * pos_d[act]
        g_neg = (2.0 * lr) * neg_d[act]
        np.add.at(E, s[act], -g_pos)
        np.add.at(E, o[act], g_pos)
        np.add.at(R, r[act], -g_pos)
        np.add.at(E, sj[act], g_neg)
        np.add.at(E, oj[act], -g_neg)
        np.add.at(R, r[act], g_neg)
        # keep the positive gradient fresh for the next negative column
        pos_d = E[s] + R[r] - E[o]
        pos_sq = np.einsum("ij,ij->i", pos_d, pos_d)
    return loss


def train(
    kg1: Kg,
    kg2: Kg,
    seed_alignment,
    cfg: TrainConfig,
    return_losses: bool = False,
):
    """Fit entity and relation vectors for both sides.

    ``seed_alignment`` is an iterable of (source, target) index pairs; without
    any, a warning is issued and the two spaces are trained independently.
    """
    d1 = _SideData(kg1)
    d2 = _SideData(kg2)
    seeds = [(int(a), int(b)) for a, b in seed_alignment]
    if not seeds:
        warnings.warn(
            "training without seed pairs: the two embedding spaces are not aligned",
            NoSeedsWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(cfg.seed)
    E1, R1 = _init_side(rng, d1.n_ent, d1.n_rel, cfg.dim)
    E2, R2 = _init_side(rng, d2.n_ent, d2.n_rel, cfg.dim)
    if seeds:
        s1 = np.asarray([a for a, _ in seeds], dtype=np.int64)
        s2 = np.asarray([b for _, b in seeds], dtype=np.int64)
        if s1.max() >= d1.n_ent or s2.max() >= d2.n_ent:
            raise ConfigError("seed alignment references entities outside the graphs")

    losses = []
    # divergence shows up as non-finite parameters, checked below, so the
    # intermediate overflow warnings carry no extra information
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.epochs):
            total = 0.0
            for E, R, data in ((E1, R1, d1), (E2, R2, d2)):
                s_neg, o_neg = data.sample_negatives(rng, cfg.negatives_per_positive)
                total += _margin_step(E, R, data, s_neg, o_neg, cfg.learning_rate, cfg.margin)
            if seeds:
                diff = E1[s1] - E2[s2]
                total += float(np.einsum("ij,ij->i", diff, diff).sum())
                step = _ALIGN_RATE * diff
                np.add.at(E1, s1, -step)
                np.add.at(E2, s2, step)
            _normalize_rows(E1)
            _normalize_rows(E2)
            losses.append(total)

    for mat in (E1, E2, R1, R2):
        with np.errstate(over="ignore"):
            narrowed = mat.astype(np.float32)
        if not np.all(np.isfinite(narrowed)):
            raise TrainerFailure("training diverged: non-finite parameters")
    rel_vecs = {}
    if d1.n_rel:
        rel_vecs[Side.SOURCE] = R1
    if d2.n_rel:
        rel_vecs[Side.TARGET] = R2
    store = EmbeddingStore(
        {Side.SOURCE: E1, Side.TARGET: E2},
        relation_vecs=rel_vecs or None,
    )
    return (store, losses) if return_losses else store
