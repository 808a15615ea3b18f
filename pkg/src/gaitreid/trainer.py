"""Stage-wise training with 10-fold identity splits.

Folds partition the identities present at both recording points of a
stage, so the same runner never appears in a fold's training batches and
its held-out evaluation. Identities present at exactly one of the two
recording points join batches only as negatives.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InsufficientIdentities, NumericFailure, TooFewIdentities
from .evaluate import EvalReport, evaluate_stage
from .head import HeadParams, head_backward, head_forward, head_init, optimizer_init, optimizer_step
from .losses import Margins, batch_loss_and_grad, mine_batch
from .seeds import derive_seed, rng_for
from .stages import StagePair
from .store import Dataset

BatchHook = Callable[[int, tuple[str, ...]], None]


@dataclass
class FoldPlan:
    """Disjoint identity folds of near-equal size."""

    k: int
    folds: list[list[str]]
    seed: int

    def held_out(self, fold_index: int) -> set[str]:
        return set(self.folds[fold_index])


@dataclass
class TrainConfig:
    loss_kind: str = "triplet"
    margins: Margins = field(default_factory=Margins)
    epochs: int = 50
    batch_identities: int = 8
    samples_per_identity: int = 2
    negatives_per_batch: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    mining: str = "random"
    hidden_dim: int = 512
    embed_dim: int = 512
    folds: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.loss_kind not in ("triplet", "quadruplet"):
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.mining not in ("random", "hard"):
            raise ConfigError(f"unknown mining strategy {self.mining!r}")
        minimum = 2 if self.loss_kind == "triplet" else 3
        if self.batch_identities < minimum:
            raise ConfigError(
                f"{self.loss_kind} training needs >= {minimum} identities per batch"
            )
        if self.samples_per_identity < 2:
            raise ConfigError("samples_per_identity must be >= 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class TrainRecord:
    """Per-epoch training trace for one fold."""

    epoch_mean_loss: list[float] = field(default_factory=list)
    active_fraction: list[float] = field(default_factory=list)
    wall_time_s: list[float] = field(default_factory=list)


def eligible_identities(dataset: Dataset, stage: StagePair) -> tuple[list[str], list[str]]:
    """Split identities into stage positives and negative-only ids.

    Positives have footage at both recording points of the stage;
    negative-only identities appear at exactly one of the two. Both lists
    are sorted.
    """
    positives: list[str] = []
    negatives: list[str] = []
    for runner_id in dataset.identities:
        rps = dataset.identity_index[runner_id]
        at_probe = stage.probe_rp in rps
        at_gallery = stage.gallery_rp in rps
        if at_probe and at_gallery:
            positives.append(runner_id)
        elif at_probe or at_gallery:
            negatives.append(runner_id)
    return positives, negatives


def make_folds(ids: set[str] | list[str], k: int, seed: int) -> FoldPlan:
    """Partition identities into k folds with sizes differing by at most 1.

    Identities are sorted before the seeded shuffle, so the plan does not
    depend on input order.
    """
    ordered = sorted(set(ids))
    if len(ordered) < k:
        raise TooFewIdentities(f"{len(ordered)} identities cannot fill {k} folds")
    if k < 1:
        raise ConfigError("k must be >= 1")
    rng = rng_for(seed, "folds")
    shuffled = [ordered[i] for i in rng.permutation(len(ordered))]
    folds = [sorted(shuffled[i::k]) for i in range(k)]
    return FoldPlan(k=k, folds=folds, seed=seed)


def _stage_rows(
    dataset: Dataset, stage: StagePair, train_ids: list[str], negative_ids: list[str]
) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], dict[str, np.ndarray]]:
    pairs = {
        runner_id: (
            dataset.get(runner_id, stage.probe_rp).vector,
            dataset.get(runner_id, stage.gallery_rp).vector,
        )
        for runner_id in train_ids
    }
    single: dict[str, np.ndarray] = {}
    for runner_id in negative_ids:
        rps = dataset.identity_index[runner_id]
        rp = stage.probe_rp if stage.probe_rp in rps else stage.gallery_rp
        single[runner_id] = dataset.get(runner_id, rp).vector
    return pairs, single


def train_fold(
    dataset: Dataset,
    stage: StagePair,
    fold_plan: FoldPlan,
    fold_index: int,
    config: TrainConfig,
    batch_hook: BatchHook | None = None,
) -> tuple[HeadParams, TrainRecord]:
    """Train a head on all identities outside one fold.

    Every batch holds an anchor row (probe recording point) and a positive
    row (gallery recording point) per sampled identity, plus a few
    negative-only rows. Held-out identities never enter a batch; this is
    asserted on every batch, and ``batch_hook`` receives each batch's
    identity tuple for external audits.
    """
    if not 0 <= fold_index < fold_plan.k:
        raise ConfigError(f"fold_index {fold_index} outside [0, {fold_plan.k})")
    positives, negative_only = eligible_identities(dataset, stage)
    held_out = fold_plan.held_out(fold_index)
    train_ids = [i for i in positives if i not in held_out]
    minimum = 2 if config.loss_kind == "triplet" else 3
    if len(train_ids) < minimum:
        raise InsufficientIdentities(
            f"fold {fold_index} leaves only {len(train_ids)} training identities"
        )
    pairs, single = _stage_rows(dataset, stage, train_ids, negative_only)

    params = head_init(
        p=dataset.meta.feature_dim,
        d=config.embed_dim,
        seed=derive_seed(config.seed, "head", stage.tag, f"fold{fold_index}"),
        hidden=config.hidden_dim,
    )
    record = TrainRecord()
    if config.epochs == 0:
        return params, record

    state = optimizer_init(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    rng = rng_for(config.seed, "batches", stage.tag, f"fold{fold_index}")
    neg_ids_sorted = sorted(single)
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = [train_ids[i] for i in rng.permutation(len(train_ids))]
        losses: list[float] = []
        fractions: list[float] = []
        for lo in range(0, len(order), config.batch_identities):
            group = order[lo : lo + config.batch_identities]
            if len(group) < minimum:
                continue
            rows: list[np.ndarray] = []
            labels: list[str] = []
            anchor_rows: set[int] = set()
            for runner_id in group:
                probe_vec, gallery_vec = pairs[runner_id]
                anchor_rows.add(len(rows))
                rows.append(probe_vec)
                labels.append(runner_id)
                rows.append(gallery_vec)
                labels.append(runner_id)
            if neg_ids_sorted and config.negatives_per_batch > 0:
                take = min(config.negatives_per_batch, len(neg_ids_sorted))
                for idx in rng.choice(len(neg_ids_sorted), size=take, replace=False):
                    neg_id = neg_ids_sorted[idx]
                    rows.append(single[neg_id])
                    labels.append(neg_id)

            batch_ids = tuple(dict.fromkeys(labels))
            leaked = held_out.intersection(batch_ids)
            if leaked:
                raise AssertionError(f"held-out identities leaked into a batch: {sorted(leaked)}")
            if batch_hook is not None:
                batch_hook(epoch, batch_ids)

            batch = np.stack(rows)
            embeddings, cache = head_forward(params, batch, mode="train")
            tuples = mine_batch(
                embeddings,
                labels,
                mode=config.loss_kind,
                strategy=config.mining,
                seed=derive_seed(
                    config.seed, "mine", stage.tag, f"fold{fold_index}", f"e{epoch}", f"b{lo}"
                ),
                anchor_rows=anchor_rows,
            )
            loss, active, grad_emb = batch_loss_and_grad(embeddings, tuples, config.margins)
            if not np.isfinite(loss):
                raise NumericFailure(f"non-finite loss at epoch {epoch}")
            grads = head_backward(params, cache, grad_emb)
            optimizer_step(params, grads, state)
            losses.append(loss)
            fractions.append(active)
        record.epoch_mean_loss.append(float(np.mean(losses)) if losses else 0.0)
        record.active_fraction.append(float(np.mean(fractions)) if fractions else 0.0)
        record.wall_time_s.append(time.perf_counter() - started)
    return params, record


def run_cv(
    dataset: Dataset,
    stage: StagePair,
    config: TrainConfig,
    max_rank: int | None = None,
    batch_hook: Callable[[int, int, tuple[str, ...]], None] | None = None,
) -> tuple[FoldPlan, list[tuple[HeadParams, TrainRecord, EvalReport]]]:
    """K-fold cross-validation over the stage positives.

    Each fold trains on the other k-1 folds (negative-only identities as
    negatives) and is evaluated as the held-out probe set against the full
    gallery recording point. ``batch_hook`` receives
    (fold_index, epoch, batch identities) for external audits.
    """
    positives, _ = eligible_identities(dataset, stage)
    plan = make_folds(positives, config.folds, config.seed)
    results = []
    for fold_index in range(plan.k):
        hook: BatchHook | None = None
        if batch_hook is not None:
            hook = lambda epoch, ids, i=fold_index: batch_hook(i, epoch, ids)
        params, record = train_fold(dataset, stage, plan, fold_index, config, hook)
        report = evaluate_stage(
            params, dataset, stage, plan.folds[fold_index], max_rank=max_rank
        )
        results.append((params, record, report))
    return plan, results
