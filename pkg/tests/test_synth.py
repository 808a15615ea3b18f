"""Synthetic generator: determinism, planted structure, drift behavior."""

import numpy as np
import pytest

from gaitreid import (
    StagePair,
    SynthConfig,
    dropout_for_memberships,
    eligible_identities,
    evaluate_stage,
    generate,
    generate_dataset,
    plant_late_stage_consistency,
    save_clips,
)
from gaitreid.errors import InvalidConfig


def small_config(**overrides):
    base = dict(
        num_identities=12,
        feature_dim=16,
        rp_count=3,
        drift_sigma={"1->2": 0.2, "2->3": 0.2},
        clips_per_footage=3,
        clip_noise_sigma=0.05,
        seed=7,
    )
    base.update(overrides)
    return SynthConfig(**base)


class TestConfigValidation:
    def test_bad_transition_key(self):
        with pytest.raises(InvalidConfig):
            small_config(drift_sigma={"1->3": 0.1})

    def test_negative_sigma(self):
        with pytest.raises(InvalidConfig):
            small_config(drift_sigma={"1->2": -0.1})

    def test_dropout_range(self):
        with pytest.raises(InvalidConfig):
            small_config(dropout_per_rp={1: 1.0})

    def test_transition_outside_rp_range(self):
        with pytest.raises(InvalidConfig):
            small_config(drift_sigma={"3->4": 0.1})


class TestGenerate:
    def test_same_seed_byte_identical(self, tmp_path):
        meta1, clips1 = generate(small_config())
        meta2, clips2 = generate(small_config())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        save_clips(meta1, clips1, a)
        save_clips(meta2, clips2, b)
        assert a.read_bytes() == b.read_bytes()

    def test_zero_drift_zero_clip_noise_identical_across_rps(self):
        cfg = small_config(drift_sigma={}, clip_noise_sigma=0.0)
        ds = generate_dataset(cfg)
        for rid in ds.identities:
            v1 = ds.get(rid, 1).vector
            for rp in (2, 3):
                assert np.array_equal(ds.get(rid, rp).vector, v1)

    def test_zero_drift_gives_perfect_map(self):
        cfg = small_config(drift_sigma={}, clip_noise_sigma=0.0)
        ds = generate_dataset(cfg)
        for stage in (StagePair(1, 2), StagePair(2, 3)):
            report = evaluate_stage(None, ds, stage, set(ds.identities))
            assert report.map_value == 1.0

    def test_generated_dataset_passes_validation_round_trip(self, tmp_path):
        from gaitreid import load_dataset

        cfg = small_config(dropout_per_rp={1: 0.25, 3: 0.4})
        meta, clips = generate(cfg)
        path = tmp_path / "synth.csv"
        save_clips(meta, clips, path)
        loaded = load_dataset(path)
        assert loaded == generate_dataset(cfg)

    def test_dropout_removes_exact_counts(self):
        cfg = small_config(dropout_per_rp={1: 0.25, 3: 0.5})
        ds = generate_dataset(cfg)
        assert sum(1 for r in ds.records if r.recording_point == 1) == 9
        assert sum(1 for r in ds.records if r.recording_point == 2) == 12
        assert sum(1 for r in ds.records if r.recording_point == 3) == 6

    def test_membership_planting_matches_counts(self):
        cfg = SynthConfig(
            num_identities=214,
            feature_dim=8,
            dropout_per_rp=dropout_for_memberships(214, 129, 111),
            clips_per_footage=1,
            clip_noise_sigma=0.0,
            seed=3,
        )
        ds = generate_dataset(cfg)
        first, _ = eligible_identities(ds, StagePair(1, 2))
        second, _ = eligible_identities(ds, StagePair(2, 3))
        assert len(first) == 129
        assert len(second) == 111

    def test_dropout_does_not_change_surviving_vectors(self):
        full = generate_dataset(small_config())
        dropped = generate_dataset(small_config(dropout_per_rp={1: 0.25}))
        for rec in dropped.records:
            assert np.array_equal(rec.vector, full.get(rec.runner_id, rec.recording_point).vector)

    def test_raw_map_decreases_with_drift(self):
        # Statistical monotone trend over 10 seeds: more drift, lower mAP.
        sigmas = [0.1, 0.4, 1.2]
        means = []
        for sigma in sigmas:
            values = []
            for seed in range(10):
                cfg = small_config(
                    num_identities=16,
                    drift_sigma={"1->2": sigma, "2->3": sigma},
                    clip_noise_sigma=0.0,
                    seed=seed,
                )
                ds = generate_dataset(cfg)
                report = evaluate_stage(None, ds, StagePair(1, 2), set(ds.identities))
                values.append(report.map_value)
            means.append(np.mean(values))
        assert means[0] > means[1] > means[2]


class TestLateStageConsistency:
    def test_ratio_applied_to_last_transition(self):
        cfg = plant_late_stage_consistency(small_config())
        assert cfg.sigma_into(3) == pytest.approx(0.5 * cfg.sigma_into(2))

    def test_equal_sigmas_unchanged_as_control(self):
        cfg = small_config()
        assert cfg.sigma_into(2) == cfg.sigma_into(3)

    def test_needs_three_recording_points(self):
        with pytest.raises(InvalidConfig):
            plant_late_stage_consistency(small_config(rp_count=2, drift_sigma={"1->2": 0.2}))

    def test_effect_direction_on_raw_embeddings(self):
        # Planted: second stage beats first. Inverted ratio: first beats second.
        def stage_gap(ratio, seed):
            cfg = plant_late_stage_consistency(
                small_config(
                    num_identities=24,
                    drift_sigma={"0->1": 0.5, "1->2": 0.5, "2->3": 0.5},
                    seed=seed,
                ),
                ratio=ratio,
            )
            ds = generate_dataset(cfg)
            first = evaluate_stage(None, ds, StagePair(1, 2), set(ds.identities)).map_value
            second = evaluate_stage(None, ds, StagePair(2, 3), set(ds.identities)).map_value
            return second - first

        planted = np.mean([stage_gap(0.4, s) for s in range(5)])
        inverted = np.mean([stage_gap(2.5, s) for s in range(5)])
        assert planted > 0.0
        assert inverted < 0.0
