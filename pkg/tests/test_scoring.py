"""Scoring kernels against scalar oracles and their invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apvr import (
    DetectionRecord,
    ExpandedQuery,
    FeatureBundle,
    FrameScoreBoard,
    InvalidInput,
    RelationTriplet,
    RelationType,
    ScoringConfig,
    clip_scores,
    detection_scores,
    fuse_scores,
    temporal_diffusion,
)
from conftest import make_random_bundle, make_random_query, unit_rows
from oracles import oracle_clip_scores, oracle_detection_scores, oracle_softmax


def simple_bundle(rng, n_frames=8, dim=12, detections=None):
    emb = unit_rows(rng, n_frames, dim)
    text = rng.normal(size=dim)
    text /= np.linalg.norm(text)
    return FeatureBundle.from_arrays(emb, text, fps=2.0, detections=detections)


class TestBundleInvariants:
    def test_rejects_non_unit_embeddings(self, rng):
        emb = unit_rows(rng, 4, 8)
        emb[2] *= 1.01
        with pytest.raises(InvalidInput, match="unit-norm"):
            FeatureBundle.from_arrays(emb, np.zeros(8))

    def test_rejects_detection_length_mismatch(self, rng):
        emb = unit_rows(rng, 4, 8)
        with pytest.raises(InvalidInput, match="detections"):
            FeatureBundle.from_arrays(emb, np.zeros(8), detections=[[], []])

    def test_rejects_bad_boxes(self):
        with pytest.raises(InvalidInput):
            DetectionRecord("dog", (0.5, 0.1, 0.2, 0.9), 1.0)
        with pytest.raises(InvalidInput):
            DetectionRecord("dog", (0.0, 0.0, 1.2, 1.0), 1.0)

    def test_config_invariants(self):
        with pytest.raises(InvalidInput):
            ScoringConfig(tau=0.0)
        with pytest.raises(InvalidInput):
            ScoringConfig(fusion_lambda=1.5)
        with pytest.raises(InvalidInput):
            ScoringConfig(relation_weights={RelationType.SPATIAL: -0.1})


class TestClipScores:
    def test_identical_embeddings_give_uniform(self, rng):
        row = unit_rows(rng, 1, 16)[0]
        emb = np.tile(row, (6, 1))
        bundle = FeatureBundle.from_arrays(emb, rng.normal(size=16))
        scores = clip_scores(bundle, range(6))
        np.testing.assert_allclose(scores, 1 / 6, atol=1e-12)

    def test_two_frame_example_matches_scalar_softmax(self):
        # dot products 0.5 and 0.3 at tau=100 -> softmax([50, 30])
        axis = np.zeros(4)
        axis[0] = 1.0
        emb = np.array(
            [
                [0.5, np.sqrt(1 - 0.25), 0.0, 0.0],
                [0.3, 0.0, np.sqrt(1 - 0.09), 0.0],
            ]
        )
        bundle = FeatureBundle.from_arrays(emb, axis)
        scores = clip_scores(bundle, [0, 1], ScoringConfig(tau=100.0))
        expected = oracle_softmax([50.0, 30.0])
        np.testing.assert_allclose(scores, expected, rtol=1e-12)
        assert scores[1] == pytest.approx(2.0611536e-9, rel=1e-4)

    def test_default_temperature_is_100(self):
        assert ScoringConfig().tau == 100.0

    def test_empty_index_set_rejected(self, rng):
        bundle = simple_bundle(rng)
        with pytest.raises(InvalidInput):
            clip_scores(bundle, [])

    def test_out_of_range_index(self, rng):
        bundle = simple_bundle(rng)
        with pytest.raises(IndexError):
            clip_scores(bundle, [0, 99])
        with pytest.raises(IndexError):
            clip_scores(bundle, [-1])

    def test_matches_oracle_on_random_sets(self, rng):
        bundle = make_random_bundle(rng, 40, 16)
        for _ in range(20):
            size = int(rng.integers(1, 12))
            idx = rng.choice(40, size=size, replace=False)
            got = clip_scores(bundle, idx)
            want = oracle_clip_scores(bundle, [int(i) for i in idx], 100.0)
            np.testing.assert_allclose(got, want, atol=1e-9)
            assert got.sum() == pytest.approx(1.0, abs=1e-6)

    def test_permutation_equivariance(self, rng):
        bundle = make_random_bundle(rng, 30, 8)
        idx = rng.choice(30, size=10, replace=False)
        perm = rng.permutation(10)
        base = clip_scores(bundle, idx)
        permuted = clip_scores(bundle, idx[perm])
        np.testing.assert_allclose(permuted, base[perm], rtol=1e-12)

    def test_global_softmax_scope(self, rng):
        bundle = make_random_bundle(rng, 20, 8)
        cfg = ScoringConfig(global_softmax=True)
        got = clip_scores(bundle, [3, 7], cfg)
        full = clip_scores(bundle, range(20))
        np.testing.assert_allclose(got, full[[3, 7]], rtol=1e-12)


def det(phrase, logit, box=(0.1, 0.1, 0.4, 0.4)):
    return DetectionRecord(phrase, box, logit)


class TestDetectionScores:
    def test_no_detections_uniform(self, rng):
        bundle = simple_bundle(rng, n_frames=5)
        scores = detection_scores(bundle, range(5))
        np.testing.assert_allclose(scores, 0.2, atol=1e-12)

    def test_single_detection_dominates(self, rng):
        detections = [[det("dog", 5.0)], [], [], []]
        bundle = simple_bundle(rng, n_frames=4, detections=detections)
        scores = detection_scores(bundle, range(4))
        expected = oracle_softmax([5.0, -20.0, -20.0, -20.0])
        np.testing.assert_allclose(scores, expected, rtol=1e-12)
        assert scores[0] == pytest.approx(1.0, abs=1e-9)

    def test_spatial_bonus_hand_computed(self, rng):
        # person and dog together in frame 1 of a 3-frame set
        detections = [
            [det("person", 2.0)],
            [det("person", 3.0), det("dog", 1.0)],
            [],
        ]
        bundle = simple_bundle(rng, n_frames=3, detections=detections)
        query = ExpandedQuery(
            key_objects=["person", "dog"],
            relations=[RelationTriplet("person", RelationType.SPATIAL, "dog")],
        )
        cfg = ScoringConfig(relation_weights={r: 0.25 for r in RelationType})
        scores = detection_scores(bundle, [0, 1, 2], query, cfg)

        base = oracle_softmax([2.0, 3.0, -20.0])
        c_person = oracle_softmax([2.0, 3.0, -20.0])
        c_dog = oracle_softmax([-20.0, 1.0, -20.0])
        expected = list(base)
        expected[1] += 0.25 * np.sqrt(c_person[1] * c_dog[1])
        np.testing.assert_allclose(scores, expected, atol=1e-12)

    def test_attribute_requires_box_overlap(self, rng):
        apart = (0.6, 0.6, 0.9, 0.9)
        detections = [[det("person", 2.0), det("red clothes", 2.0, box=apart)], []]
        bundle = simple_bundle(rng, n_frames=2, detections=detections)
        query = ExpandedQuery(
            key_objects=["person", "red clothes"],
            relations=[
                RelationTriplet("person", RelationType.ATTRIBUTE, "red clothes")
            ],
        )
        no_overlap = detection_scores(bundle, [0, 1], query)
        base = oracle_softmax([2.0, -20.0])
        np.testing.assert_allclose(no_overlap, base, atol=1e-12)

        overlapping = [[det("person", 2.0), det("red clothes", 2.0)], []]
        bundle2 = simple_bundle(rng, n_frames=2, detections=overlapping)
        with_overlap = detection_scores(bundle2, [0, 1], query)
        assert with_overlap[0] > base[0]

    def test_time_relation_respects_order_and_horizon(self, rng):
        detections = [[det("woman", 4.0)], [], [det("cat", 4.0)], []]
        bundle = simple_bundle(rng, n_frames=4, detections=detections)
        triplet = RelationTriplet("woman", RelationType.TIME, "cat")
        query = ExpandedQuery(key_objects=["woman", "cat"], relations=[triplet])

        scores = detection_scores(bundle, range(4), query)
        base = oracle_softmax([4.0, -20.0, 4.0, -20.0])
        assert scores[2] > base[2]  # cat frame completes the pair
        np.testing.assert_allclose(scores[[0, 1, 3]], np.array(base)[[0, 1, 3]],
                                   atol=1e-12)

        # reversed order never fires
        reverse = ExpandedQuery(
            key_objects=["woman", "cat"],
            relations=[RelationTriplet("cat", RelationType.TIME, "woman")],
        )
        np.testing.assert_allclose(
            detection_scores(bundle, range(4), reverse), base, atol=1e-12
        )

        # horizon too small to connect the pair (gap is 1 second at 2 fps)
        tight = ScoringConfig(time_relation_horizon=0.4)
        np.testing.assert_allclose(
            detection_scores(bundle, range(4), query, tight), base, atol=1e-12
        )

    def test_unknown_endpoint_warns_and_adds_nothing(self, rng, caplog):
        bundle = simple_bundle(rng, n_frames=3)
        query = ExpandedQuery(
            key_objects=["person", "dog"],
            relations=[RelationTriplet("person", RelationType.SPATIAL, "dog")],
        )
        with caplog.at_level("WARNING"):
            scores = detection_scores(bundle, range(3), query)
        assert any("matches no detection" in message for message in caplog.messages)
        np.testing.assert_allclose(scores, 1 / 3, atol=1e-12)

    def test_matches_oracle_on_random_fixtures(self, rng):
        for _ in range(15):
            bundle = make_random_bundle(rng, 24, 8, detection_rate=0.6)
            query = make_random_query(rng)
            idx = rng.choice(24, size=int(rng.integers(2, 16)), replace=False)
            cfg = ScoringConfig()
            got = detection_scores(bundle, idx, query, cfg)
            want = oracle_detection_scores(bundle, [int(i) for i in idx], query, cfg)
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_base_is_distribution_before_bonuses(self, rng):
        bundle = make_random_bundle(rng, 30, 8, detection_rate=0.5)
        scores = detection_scores(bundle, range(30))
        assert (scores >= 0).all()
        assert scores.sum() == pytest.approx(1.0, abs=1e-6)


class TestFuseScores:
    def test_lambda_zero_returns_clip(self):
        clip = np.array([0.2, 0.8])
        gd = np.array([0.5, 0.5])
        np.testing.assert_array_equal(fuse_scores(clip, gd, 0.0), clip)

    def test_lambda_one_returns_detection(self):
        clip = np.array([0.2, 0.8])
        gd = np.array([0.5, 0.5])
        np.testing.assert_array_equal(fuse_scores(clip, gd, 1.0), gd)

    def test_default_lambda_is_half(self):
        assert ScoringConfig().fusion_lambda == 0.5

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            fuse_scores(np.ones(3), np.ones(4), 0.5)

    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=16),
        st.floats(0, 1),
    )
    @settings(max_examples=100, deadline=None)
    def test_linearity_against_scalar_arithmetic(self, values, lam):
        clip = np.array(values)
        gd = np.array(values[::-1])
        fused = fuse_scores(clip, gd, lam)
        for i in range(len(values)):
            assert fused[i] == pytest.approx(
                (1 - lam) * clip[i] + lam * gd[i], abs=1e-12
            )


class TestTemporalDiffusion:
    def test_documented_window_profile(self):
        board = FrameScoreBoard(5)
        temporal_diffusion(board, 2, 1.0, 2)
        np.testing.assert_allclose(
            board.scores, [1 / 3, 1 / 2, 1.0, 1 / 2, 1 / 3], atol=1e-12
        )

    def test_window_zero_touches_only_t(self):
        board = FrameScoreBoard(5)
        temporal_diffusion(board, 3, 0.7, 0)
        np.testing.assert_allclose(board.scores, [0, 0, 0, 0.7, 0], atol=1e-15)

    def test_max_semantics_never_decreases(self):
        board = FrameScoreBoard(5)
        board.scores[:] = 0.9
        temporal_diffusion(board, 2, 0.5, 2)
        np.testing.assert_allclose(board.scores, 0.9, atol=1e-15)

    def test_idempotent(self):
        board = FrameScoreBoard(9)
        temporal_diffusion(board, 4, 1.3, 3)
        snapshot = board.scores.copy()
        temporal_diffusion(board, 4, 1.3, 3)
        np.testing.assert_array_equal(board.scores, snapshot)

    def test_bounds_clipping(self):
        board = FrameScoreBoard(3)
        temporal_diffusion(board, 0, 1.0, 5)
        np.testing.assert_allclose(board.scores, [1.0, 0.5, 1 / 3], atol=1e-12)

    def test_out_of_range_frame(self):
        board = FrameScoreBoard(3)
        with pytest.raises(IndexError):
            temporal_diffusion(board, 3, 1.0, 1)
