"""Metric-learning re-identification engine for multi-checkpoint runner footage.

The library ingests per-clip feature vectors from pretrained video
backbones, pools them per footage, trains an L2-normalized projection
head with triplet or quadruplet losses, and evaluates probe-to-gallery
re-identification across race checkpoints with mAP and CMC under 10-fold
cross-validation. A synthetic generator provides planted datasets for
testing and calibration.
"""

from .errors import EngineError
from .evaluate import EvalReport, RankedList, average_precision, cmc_curve, evaluate_stage, mean_ap, rank_gallery
from .head import HeadParams, OptimizerState, head_backward, head_forward, head_init, load_head, optimizer_init, optimizer_step, save_head
from .losses import Margins, QuadrupletIndex, TripletIndex, mine_batch, quadruplet_loss, quadruplet_loss_grad, sq_l2, triplet_loss, triplet_loss_grad
from .stages import StagePair, parse_stage
from .store import BackboneMeta, ClipEmbedding, Dataset, FootageEmbedding, clip_schedule, dataset_from_clips, load_clips, load_dataset, pool_clips, save_clips, save_dataset
from .synth import SynthConfig, dropout_for_memberships, generate, generate_dataset, plant_late_stage_consistency
from .trainer import FoldPlan, TrainConfig, TrainRecord, eligible_identities, make_folds, run_cv, train_fold

__version__ = "0.1.0"

__all__ = [
    "BackboneMeta",
    "ClipEmbedding",
    "Dataset",
    "EngineError",
    "EvalReport",
    "FoldPlan",
    "FootageEmbedding",
    "HeadParams",
    "Margins",
    "OptimizerState",
    "QuadrupletIndex",
    "RankedList",
    "StagePair",
    "SynthConfig",
    "TrainConfig",
    "TrainRecord",
    "TripletIndex",
    "average_precision",
    "clip_schedule",
    "cmc_curve",
    "dataset_from_clips",
    "dropout_for_memberships",
    "eligible_identities",
    "evaluate_stage",
    "generate",
    "generate_dataset",
    "head_backward",
    "head_forward",
    "head_init",
    "load_clips",
    "load_dataset",
    "load_head",
    "make_folds",
    "mean_ap",
    "mine_batch",
    "optimizer_init",
    "optimizer_step",
    "parse_stage",
    "plant_late_stage_consistency",
    "pool_clips",
    "quadruplet_loss",
    "quadruplet_loss_grad",
    "rank_gallery",
    "run_cv",
    "save_clips",
    "save_dataset",
    "save_head",
    "sq_l2",
    "train_fold",
    "triplet_loss",
    "triplet_loss_grad",
]
