"""Synthetic multi-checkpoint embedding datasets with planted identity structure.

Each identity gets a random class center on a scaled sphere. Its footage
vector at recording point r is the center plus independent isotropic
noise whose scale is the drift sigma of the transition into r. With equal
sigmas every stage has the same distance structure; lowering the drift
into one point makes the stage ending there more identity-consistent,
which is the knob used to plant a late-stage consistency effect. Clip
vectors add small isotropic noise around the footage vector. Per-point
dropout removes a fixed number of identities from a recording point so
they act as negative-only samples for the stages touching it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig
from .seeds import rng_for
from .store import BackboneMeta, ClipEmbedding, Dataset, dataset_from_clips


def _parse_transition(key: str) -> tuple[int, int]:
    left, sep, right = key.replace(" ", "").partition("->")
    if not sep:
        raise InvalidConfig(f"drift_sigma key {key!r} must look like '1->2'")
    try:
        a, b = int(left), int(right)
    except ValueError as exc:
        raise InvalidConfig(f"drift_sigma key {key!r} must look like '1->2'") from exc
    if b != a + 1:
        raise InvalidConfig(f"drift_sigma key {key!r} must step one recording point forward")
    return a, b


@dataclass
class SynthConfig:
    """Knobs of the generator; all randomness derives from ``seed``.

    ``drift_sigma`` maps transitions ('0->1' for the initial offset from
    the class center, then '1->2', '2->3', ...) to noise scales.
    ``dropout_per_rp`` maps a recording point to the fraction of identities
    removed there (an exact count, round(fraction * num_identities), is
    dropped, drawn independently per point). ``stage_memberships``
    alternatively plants exact (stage 1->2, stage 2->3) membership counts
    on 3 recording points with balanced gallery distractors.
    """

    num_identities: int = 214
    feature_dim: int = 2048
    rp_count: int = 3
    class_center_scale: float = 1.0
    drift_sigma: dict[str, float] = field(
        default_factory=lambda: {"0->1": 0.3, "1->2": 0.3, "2->3": 0.3}
    )
    dropout_per_rp: dict[int, float] = field(default_factory=dict)
    stage_memberships: tuple[int, int] | None = None
    clips_per_footage: int = 7
    clip_noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_identities < 1:
            raise InvalidConfig("num_identities must be >= 1")
        if self.feature_dim < 1:
            raise InvalidConfig("feature_dim must be >= 1")
        if self.rp_count < 2:
            raise InvalidConfig("rp_count must be >= 2")
        if self.class_center_scale <= 0:
            raise InvalidConfig("class_center_scale must be positive")
        if self.clips_per_footage < 1:
            raise InvalidConfig("clips_per_footage must be >= 1")
        if self.clip_noise_sigma < 0:
            raise InvalidConfig("clip_noise_sigma must be >= 0")
        for key, sigma in self.drift_sigma.items():
            _, into = _parse_transition(key)
            if not 1 <= into <= self.rp_count:
                raise InvalidConfig(f"transition {key!r} leaves recording points 1..{self.rp_count}")
            if sigma < 0:
                raise InvalidConfig(f"drift sigma for {key!r} must be >= 0")
        for rp, fraction in self.dropout_per_rp.items():
            if not 1 <= int(rp) <= self.rp_count:
                raise InvalidConfig(f"dropout recording point {rp} out of range")
            if not 0.0 <= fraction < 1.0:
                raise InvalidConfig(f"dropout fraction {fraction} must be in [0, 1)")
        if self.stage_memberships is not None:
            if self.dropout_per_rp:
                raise InvalidConfig("stage_memberships and dropout_per_rp are mutually exclusive")
            if self.rp_count != 3:
                raise InvalidConfig("stage_memberships needs exactly 3 recording points")
            _membership_patterns(self.num_identities, *self.stage_memberships)

    def sigma_into(self, rp: int) -> float:
        return float(self.drift_sigma.get(f"{rp - 1}->{rp}", 0.0))


def _membership_patterns(
    num_identities: int, first_stage_count: int, second_stage_count: int
) -> dict[frozenset[int], int]:
    """Presence-pattern counts planting exact stage memberships with
    near-equal distractor counts in both stage galleries.

    Patterns used: all three points, points {1,2}, points {2,3}, point {3}
    alone. The {2,3} and {3} groups act as the two stages' gallery
    distractors and are sized within one of each other.
    """
    n, s1, s2 = num_identities, first_stage_count, second_stage_count
    if not 0 < s1 <= n or not 0 < s2 <= n:
        raise InvalidConfig("stage membership counts must be in (0, num_identities]")
    rest = n - s1
    c = rest // 2        # present at {2,3}: distractors of stage 1->2
    g = rest - c         # present at {3} only: distractors of stage 2->3
    a = s2 - c           # present everywhere
    b = s1 - a           # present at {1,2}
    if a < 0 or b < 0:
        raise InvalidConfig(
            f"memberships ({s1}, {s2}) of {n} identities cannot be balanced"
        )
    return {
        frozenset({1, 2, 3}): a,
        frozenset({1, 2}): b,
        frozenset({2, 3}): c,
        frozenset({3}): g,
    }


def dropout_for_memberships(
    num_identities: int, first_stage_count: int, second_stage_count: int
) -> dict[int, float]:
    """Dropout fractions planting exact stage memberships on 3 recording points.

    Everyone keeps footage at point 2; enough identities are removed at
    points 1 and 3 that exactly ``first_stage_count`` identities cover the
    1->2 stage and ``second_stage_count`` cover 2->3.
    """
    if not 0 < first_stage_count <= num_identities:
        raise InvalidConfig("first_stage_count out of range")
    if not 0 < second_stage_count <= num_identities:
        raise InvalidConfig("second_stage_count out of range")
    return {
        1: (num_identities - first_stage_count) / num_identities,
        2: 0.0,
        3: (num_identities - second_stage_count) / num_identities,
    }


def plant_late_stage_consistency(config: SynthConfig, ratio: float = 0.5) -> SynthConfig:
    """Scale the final transition's drift down so the last stage is tighter.

    Returns a copy whose drift into the last recording point is ``ratio``
    times the drift of the preceding transition; the downstream effect is
    higher re-identification accuracy on the final stage.
    """
    if config.rp_count < 3:
        raise InvalidConfig("a late-stage effect needs at least 3 recording points")
    if ratio < 0:
        raise InvalidConfig("ratio must be >= 0")
    last = config.rp_count
    sigmas = dict(config.drift_sigma)
    sigmas[f"{last - 1}->{last}"] = ratio * config.sigma_into(last - 1)
    return replace(config, drift_sigma=sigmas)


def _runner_ids(count: int) -> list[str]:
    width = max(3, len(str(count)))
    return [f"r{i:0{width}d}" for i in range(1, count + 1)]


def generate(config: SynthConfig) -> tuple[BackboneMeta, list[ClipEmbedding]]:
    """Generate clip-level embeddings; deterministic given config.seed.

    The underlying footage vectors depend only on (seed, identity), so
    changing dropout alters which rows are emitted but not their values.
    """
    ids = _runner_ids(config.num_identities)
    p = config.feature_dim

    dropped: dict[int, set[str]] = {rp: set() for rp in range(1, config.rp_count + 1)}
    if config.stage_memberships is not None:
        patterns = _membership_patterns(config.num_identities, *config.stage_memberships)
        rng = rng_for(config.seed, "membership")
        order = [ids[i] for i in rng.permutation(len(ids))]
        cursor = 0
        for present, count in patterns.items():
            for runner_id in order[cursor : cursor + count]:
                for rp in range(1, config.rp_count + 1):
                    if rp not in present:
                        dropped[rp].add(runner_id)
            cursor += count
    else:
        for rp in range(1, config.rp_count + 1):
            fraction = float(config.dropout_per_rp.get(rp, 0.0))
            count = round(fraction * config.num_identities)
            if count == 0:
                continue
            rng = rng_for(config.seed, "dropout", f"rp{rp}")
            picks = rng.choice(config.num_identities, size=count, replace=False)
            dropped[rp] = {ids[i] for i in picks}

    clips: list[ClipEmbedding] = []
    for runner_id in ids:
        center_rng = rng_for(config.seed, "center", runner_id)
        center = center_rng.standard_normal(p)
        center *= config.class_center_scale / max(np.linalg.norm(center), 1e-12)
        drift_rng = rng_for(config.seed, "drift", runner_id)
        clip_rng = rng_for(config.seed, "clips", runner_id)
        for rp in range(1, config.rp_count + 1):
            sigma = config.sigma_into(rp)
            footage = center + sigma * drift_rng.standard_normal(p)
            noise = clip_rng.standard_normal((config.clips_per_footage, p))
            if runner_id in dropped[rp]:
                continue
            for clip_index in range(config.clips_per_footage):
                clips.append(
                    ClipEmbedding(
                        runner_id=runner_id,
                        recording_point=rp,
                        clip_index=clip_index,
                        vector=footage + config.clip_noise_sigma * noise[clip_index],
                    )
                )
    meta = BackboneMeta(name="synthetic", frames_per_clip=8, feature_dim=p)
    return meta, clips


def generate_dataset(config: SynthConfig) -> Dataset:
    """Generate and pool into a footage-level dataset."""
    meta, clips = generate(config)
    return dataset_from_clips(meta, clips)
