"""Distance, triplet and quadruplet hinge losses, gradients, and tuple mining.

Distances are squared Euclidean throughout. The triplet hinge pulls an
anchor toward a positive of the same identity and pushes it past a margin
from a negative; the quadruplet form adds a second hinge on the distance
between two negatives of distinct identities, weakening pairs of
different-identity samples that sit too close together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientIdentities
from .seeds import rng_for


@dataclass(frozen=True)
class Margins:
    """Hinge margins; m2 applies to the negative-negative hinge."""

    m1: float = 0.2
    m2: float = 0.1

    def __post_init__(self) -> None:
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError("margins must be non-negative")


@dataclass(frozen=True)
class TripletIndex:
    """Batch indices of one (anchor, positive, negative) tuple."""

    anchor: int
    positive: int
    negative: int
    anchor_id: Hashable
    negative_id: Hashable

    def __post_init__(self) -> None:
        if self.anchor == self.positive:
            raise ValueError("anchor and positive must be distinct samples")
        if self.anchor_id == self.negative_id:
            raise ValueError("negative must come from a different identity")


@dataclass(frozen=True)
class QuadrupletIndex:
    """Batch indices of one (anchor, positive, negative1, negative2) tuple."""

    anchor: int
    positive: int
    negative1: int
    negative2: int
    anchor_id: Hashable
    negative1_id: Hashable
    negative2_id: Hashable

    def __post_init__(self) -> None:
        if self.anchor == self.positive:
            raise ValueError("anchor and positive must be distinct samples")
        if self.negative1_id == self.anchor_id:
            raise ValueError("negative1 must come from a different identity")
        if self.negative2_id in (self.anchor_id, self.negative1_id):
            raise ValueError("negative2 must come from a third identity")


def _check_dims(*vectors: np.ndarray) -> None:
    first = vectors[0]
    for v in vectors[1:]:
        if v.shape != first.shape:
            raise DimensionMismatch(f"vector shapes differ: {first.shape} vs {v.shape}")


def sq_l2(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of squared differences between two vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(x, y)
    diff = x - y
    return float(diff @ diff)


def triplet_loss(a: np.ndarray, p: np.ndarray, n: np.ndarray, m1: float) -> float:
    """max(D1^2 - D2^2 + m1, 0) with D1 = |a-p|, D2 = |a-n|."""
    return max(sq_l2(a, p) - sq_l2(a, n) + m1, 0.0)


def quadruplet_loss(
    a: np.ndarray, p: np.ndarray, n1: np.ndarray, n2: np.ndarray, margins: Margins
) -> float:
    """Triplet hinge plus max(D1^2 - D3^2 + m2, 0) with D3 = |n1-n2|."""
    d1 = sq_l2(a, p)
    return max(d1 - sq_l2(a, n1) + margins.m1, 0.0) + max(
        d1 - sq_l2(n1, n2) + margins.m2, 0.0
    )


def triplet_loss_grad(
    a: np.ndarray, p: np.ndarray, n: np.ndarray, m1: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subgradients of the triplet hinge w.r.t. (a, p, n).

    At the hinge kink (argument exactly zero) the zero subgradient is used.
    """
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    _check_dims(a, p, n)
    if sq_l2(a, p) - sq_l2(a, n) + m1 <= 0.0:
        zero = np.zeros_like(a)
        return zero, zero.copy(), zero.copy()
    ap = a - p
    an = a - n
    return 2.0 * ap - 2.0 * an, -2.0 * ap, 2.0 * an


def quadruplet_loss_grad(
    a: np.ndarray, p: np.ndarray, n1: np.ndarray, n2: np.ndarray, margins: Margins
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-hinge subgradients w.r.t. (a, p, n1, n2).

    n2 only receives gradient from the second hinge.
    """
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    _check_dims(a, p, n1, n2)
    ga = np.zeros_like(a)
    gp = np.zeros_like(a)
    gn1 = np.zeros_like(a)
    gn2 = np.zeros_like(a)
    d1 = sq_l2(a, p)
    ap = a - p
    if d1 - sq_l2(a, n1) + margins.m1 > 0.0:
        an1 = a - n1
        ga += 2.0 * ap - 2.0 * an1
        gp += -2.0 * ap
        gn1 += 2.0 * an1
    if d1 - sq_l2(n1, n2) + margins.m2 > 0.0:
        nn = n1 - n2
        ga += 2.0 * ap
        gp += -2.0 * ap
        gn1 += -2.0 * nn
        gn2 += 2.0 * nn
    return ga, gp, gn1, gn2


def mine_batch(
    embeddings: np.ndarray,
    identities: Sequence[Hashable],
    mode: str = "triplet",
    strategy: str = "random",
    seed: int = 0,
    anchor_rows: set[int] | None = None,
) -> list[TripletIndex] | list[QuadrupletIndex]:
    """Mine one tuple per ordered (anchor, positive) pair in a batch.

    ``random`` draws each negative uniformly among valid rows; ``hard``
    picks, per anchor-positive pair, the negative closest to the anchor
    (and for quadruplets a second negative, from a third identity, closest
    to the first). ``anchor_rows`` optionally restricts which rows may act
    as anchors (positives are unrestricted).
    """
    if mode not in ("triplet", "quadruplet"):
        raise ValueError(f"unknown mode {mode!r}")
    if strategy not in ("random", "hard"):
        raise ValueError(f"unknown strategy {strategy!r}")
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = list(identities)
    if emb.ndim != 2 or emb.shape[0] != len(labels):
        raise DimensionMismatch("embeddings and identities disagree on batch size")

    by_id: dict[Hashable, list[int]] = {}
    for i, label in enumerate(labels):
        by_id.setdefault(label, []).append(i)
    n_ids = len(by_id)
    has_pair = any(len(rows) >= 2 for rows in by_id.values())
    need = 2 if mode == "triplet" else 3
    if n_ids < need or not has_pair:
        raise InsufficientIdentities(
            f"{mode} mining needs >= {need} identities and one identity with >= 2 samples"
        )

    rng = rng_for(seed, "mine", mode, strategy)
    sq_dists = _pairwise_sq_dists(emb) if strategy == "hard" else None

    tuples: list = []
    for anchor, anchor_id in enumerate(labels):
        if anchor_rows is not None and anchor not in anchor_rows:
            continue
        positives = [i for i in by_id[anchor_id] if i != anchor]
        if not positives:
            continue
        negatives = [i for i, lab in enumerate(labels) if lab != anchor_id]
        for positive in positives:
            if strategy == "hard":
                negative = min(negatives, key=lambda i: (sq_dists[anchor, i], i))
            else:
                negative = negatives[rng.integers(len(negatives))]
            if mode == "triplet":
                tuples.append(
                    TripletIndex(anchor, positive, negative, anchor_id, labels[negative])
                )
                continue
            second_pool = [
                i
                for i, lab in enumerate(labels)
                if lab not in (anchor_id, labels[negative])
            ]
            if not second_pool:
                continue
            if strategy == "hard":
                negative2 = min(second_pool, key=lambda i: (sq_dists[negative, i], i))
            else:
                negative2 = second_pool[rng.integers(len(second_pool))]
            tuples.append(
                QuadrupletIndex(
                    anchor,
                    positive,
                    negative,
                    negative2,
                    anchor_id,
                    labels[negative],
                    labels[negative2],
                )
            )
    return tuples


def _pairwise_sq_dists(emb: np.ndarray) -> np.ndarray:
    sq = np.sum(emb * emb, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    return np.maximum(d, 0.0)


def batch_loss_and_grad(
    embeddings: np.ndarray,
    tuples: Sequence[TripletIndex] | Sequence[QuadrupletIndex],
    margins: Margins,
) -> tuple[float, float, np.ndarray]:
    """Mean loss over mined tuples and its gradient w.r.t. the embeddings.

    Returns (mean loss, active-tuple fraction, gradient matrix). The mean
    (rather than the sum) keeps the learning rate stable across batch
    sizes.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    grad = np.zeros_like(emb)
    if not tuples:
        return 0.0, 0.0, grad
    total = 0.0
    active = 0
    scale = 1.0 / len(tuples)
    for tup in tuples:
        if isinstance(tup, TripletIndex):
            value = triplet_loss(emb[tup.anchor], emb[tup.positive], emb[tup.negative], margins.m1)
            if value > 0.0:
                ga, gp, gn = triplet_loss_grad(
                    emb[tup.anchor], emb[tup.positive], emb[tup.negative], margins.m1
                )
                grad[tup.anchor] += scale * ga
                grad[tup.positive] += scale * gp
                grad[tup.negative] += scale * gn
                active += 1
            total += value
        else:
            value = quadruplet_loss(
                emb[tup.anchor], emb[tup.positive], emb[tup.negative1], emb[tup.negative2], margins
            )
            if value > 0.0:
                ga, gp, gn1, gn2 = quadruplet_loss_grad(
                    emb[tup.anchor],
                    emb[tup.positive],
                    emb[tup.negative1],
                    emb[tup.negative2],
                    margins,
                )
                grad[tup.anchor] += scale * ga
                grad[tup.positive] += scale * gp
                grad[tup.negative1] += scale * gn1
                grad[tup.negative2] += scale * gn2
                active += 1
            total += value
    return total * scale, active / len(tuples), grad
