"""Probe-to-gallery ranking, average precision, mAP and CMC curves.

Rankings sort the gallery by squared Euclidean distance in head-embedding
space, with ties broken by gallery id so results never depend on input
order. A probe whose identity is absent from the gallery is excluded from
mAP and counted in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyGallery,
    MissingGroundTruth,
    NoQueries,
    NoRelevantInGallery,
)
from .head import HeadParams, head_forward
from .stages import StagePair
from .store import Dataset, FootageEmbedding

DEFAULT_MAX_RANK = 20


@dataclass
class RankedList:
    """Gallery ids ordered by ascending distance to one probe."""

    probe_id: str
    gallery_ids: list[str]
    distances: list[float]


@dataclass
class EvalReport:
    """Per-query APs, mAP and CMC curve for one stage evaluation."""

    stage: StagePair
    per_query_ap: dict[str, float]
    map_value: float
    cmc: list[float]
    num_probes: int
    num_gallery: int
    num_excluded: int = 0
    excluded_ids: list[str] = field(default_factory=list)


def _embed(head: HeadParams | None, matrix: np.ndarray) -> np.ndarray:
    if head is None:
        return np.asarray(matrix, dtype=np.float64)
    out, _ = head_forward(head, matrix, mode="infer")
    return out


def _rank_rows(
    probe_id: str, probe_vec: np.ndarray, gallery_ids: list[str], gallery: np.ndarray
) -> RankedList:
    diffs = gallery - probe_vec
    dists = np.einsum("ij,ij->i", diffs, diffs)
    order = sorted(range(len(gallery_ids)), key=lambda i: (dists[i], gallery_ids[i]))
    return RankedList(
        probe_id=probe_id,
        gallery_ids=[gallery_ids[i] for i in order],
        distances=[float(dists[i]) for i in order],
    )


def rank_gallery(
    probe: FootageEmbedding,
    gallery: list[FootageEmbedding],
    head: HeadParams | None = None,
) -> RankedList:
    """Rank a gallery against one probe in head-embedding space.

    ``head`` is applied in infer mode to probe and gallery alike; None
    ranks the raw vectors.
    """
    if not gallery:
        raise EmptyGallery("gallery must be non-empty")
    for rec in gallery:
        if rec.vector.shape != probe.vector.shape:
            raise DimensionMismatch("probe and gallery dimensions differ")
    ids = [rec.runner_id for rec in gallery]
    if len(set(ids)) != len(ids):
        raise DimensionMismatch("gallery ids must be unique")
    stacked = np.stack([probe.vector] + [rec.vector for rec in gallery])
    embedded = _embed(head, stacked)
    return _rank_rows(probe.runner_id, embedded[0], ids, embedded[1:])


def average_precision(ranking: RankedList, relevant_ids: set[str]) -> float:
    """Mean of precision-at-hit over the relevant gallery entries."""
    relevant_present = [g for g in ranking.gallery_ids if g in relevant_ids]
    if not relevant_present:
        raise NoRelevantInGallery(
            f"probe {ranking.probe_id!r} has no relevant id in the gallery"
        )
    hits = 0
    precision_sum = 0.0
    for rank, gallery_id in enumerate(ranking.gallery_ids, start=1):
        if gallery_id in relevant_ids:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / hits


def mean_ap(per_query_ap: dict[str, float] | list[float]) -> float:
    values = list(per_query_ap.values()) if isinstance(per_query_ap, dict) else list(per_query_ap)
    if not values:
        raise NoQueries("mean average precision needs at least one query")
    return float(np.mean(values))


def cmc_curve(
    rankings: list[RankedList], ground_truth: dict[str, str], max_rank: int
) -> list[float]:
    """Fraction of probes whose true match appears within each rank.

    ``cmc[r]`` counts matches at rank <= r+1; the curve is non-decreasing.
    """
    if not rankings:
        raise NoQueries("CMC over zero probes is undefined")
    counts = np.zeros(max_rank, dtype=np.int64)
    for ranking in rankings:
        truth = ground_truth.get(ranking.probe_id)
        if truth is None or truth not in ranking.gallery_ids:
            raise MissingGroundTruth(
                f"probe {ranking.probe_id!r} has no ground-truth gallery entry"
            )
        position = ranking.gallery_ids.index(truth)
        if position < max_rank:
            counts[position:] += 1
    return [float(c) / len(rankings) for c in counts]


def evaluate_stage(
    head: HeadParams | None,
    dataset: Dataset,
    stage: StagePair,
    probe_ids: set[str] | list[str],
    max_rank: int | None = None,
) -> EvalReport:
    """Evaluate probe identities across one stage.

    Probes are the footage of ``probe_ids`` at the probe recording point;
    the gallery is all footage at the gallery recording point, including
    identities that never appear as probes (distractors).
    """
    gallery_records = dataset.at_recording_point(stage.gallery_rp)
    if not gallery_records:
        raise EmptyGallery(f"no footage at recording point {stage.gallery_rp}")
    gallery_ids = [rec.runner_id for rec in gallery_records]
    gallery_id_set = set(gallery_ids)

    probes: list[FootageEmbedding] = []
    for runner_id in sorted(set(probe_ids)):
        rps = dataset.identity_index.get(runner_id, set())
        if stage.probe_rp not in rps:
            raise MissingGroundTruth(
                f"probe identity {runner_id!r} has no footage at recording point {stage.probe_rp}"
            )
        probes.append(dataset.get(runner_id, stage.probe_rp))

    kept = [p for p in probes if p.runner_id in gallery_id_set]
    excluded = sorted(p.runner_id for p in probes if p.runner_id not in gallery_id_set)
    if not kept:
        raise NoQueries("no probe identity appears in the gallery")

    stacked = np.stack([p.vector for p in kept] + [g.vector for g in gallery_records])
    embedded = _embed(head, stacked)
    probe_mat = embedded[: len(kept)]
    gallery_mat = embedded[len(kept):]

    rankings = [
        _rank_rows(probe.runner_id, probe_mat[i], gallery_ids, gallery_mat)
        for i, probe in enumerate(kept)
    ]
    per_query = {
        r.probe_id: average_precision(r, {r.probe_id}) for r in rankings
    }
    if max_rank is None:
        max_rank = min(DEFAULT_MAX_RANK, len(gallery_ids))
    cmc = cmc_curve(rankings, {r.probe_id: r.probe_id for r in rankings}, max_rank)
    return EvalReport(
        stage=stage,
        per_query_ap=per_query,
        map_value=mean_ap(per_query),
        cmc=cmc,
        num_probes=len(kept),
        num_gallery=len(gallery_ids),
        num_excluded=len(excluded),
        excluded_ids=excluded,
    )
