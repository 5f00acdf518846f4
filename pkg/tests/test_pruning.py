import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import curvature_brute
from tractlstm.errors import DegenerateFiber
from tractlstm.pruning import (MASK_VALUE, MaskedSequence, curvature_scores, n_kept, preprocess,
                               project, prune_fiber, sequence_mask, to_fixed_length)
from tractlstm.trk_io import Fiber

# hundredths of a millimetre: keeps the oracle's acos away from underflow
coord = st.integers(-10000, 10000).map(lambda v: v / 100)
points_st = st.integers(2, 40).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coord))


class TestProject:
    @pytest.mark.parametrize("plane,expected", [("XY", [1, 2]), ("YZ", [2, 3]), ("ZX", [3, 1])])
    def test_single_point(self, plane, expected):
        np.testing.assert_array_equal(project([(1, 2, 3)], plane), [expected])


class TestCurvature:
    def test_collinear_is_zero(self):
        pts = np.stack([np.arange(10.0), np.zeros(10), np.zeros(10)], axis=1)
        np.testing.assert_array_equal(curvature_scores(pts), 0.0)

    def test_right_angle(self):
        pts = [(0, 0, 0), (1, 0, 0), (1, 1, 0)]
        s = curvature_scores(np.array(pts, dtype=float))
        assert s[0] == 0 and s[2] == 0
        # XY turns by pi/2; in YZ the incoming vector vanishes; in ZX the
        # outgoing one does, so only the XY term survives
        assert s[1] == pytest.approx(math.pi / 2, abs=1e-15)
        assert s[1] == pytest.approx(curvature_brute(pts)[1], abs=1e-15)

    def test_two_points(self):
        np.testing.assert_array_equal(curvature_scores(np.array([[0, 0, 0], [1, 1, 1.0]])), [0, 0])

    def test_one_point_rejected(self):
        with pytest.raises(DegenerateFiber):
            curvature_scores(np.zeros((1, 3)))

    def test_reversal_is_pi(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0.0]])
        # XY: pi; ZX: projected (z, x) vectors (0,1) and (0,-1) -> pi; YZ: both zero
        assert curvature_scores(pts)[1] == pytest.approx(2 * math.pi)

    def test_offset_four_used(self):
        # a kink visible only at offset 4 from the point 4 steps away
        pts = np.array([[i, 0, 0] for i in range(5)] + [[4, i, 0] for i in range(1, 5)], dtype=float)
        s = curvature_scores(pts)
        np.testing.assert_allclose(s, curvature_brute(pts), atol=1e-12)
        assert s[4] > math.pi / 2  # both offsets see the corner

    @given(points_st)
    def test_matches_brute_force(self, pts):
        np.testing.assert_allclose(curvature_scores(pts), curvature_brute(pts), atol=1e-9)

    @given(points_st, arrays(np.float64, 3, elements=st.floats(-50, 50)))
    def test_translation_invariant(self, pts, shift):
        np.testing.assert_allclose(curvature_scores(pts + shift), curvature_scores(pts), atol=1e-6)

    @given(points_st, st.permutations([0, 1, 2]))
    def test_axis_permutation_invariant(self, pts, perm):
        np.testing.assert_allclose(curvature_scores(pts[:, perm]), curvature_scores(pts), atol=1e-9)

    @given(points_st)
    def test_non_negative_and_finite(self, pts):
        s = curvature_scores(pts)
        assert s.shape == (len(pts),)
        assert np.all(np.isfinite(s)) and np.all(s >= 0)
        assert np.all(s <= 6 * math.pi + 1e-12)


class TestPrune:
    def test_eight_points_keep_six(self, rng):
        f = Fiber(rng.normal(size=(8, 3)))
        assert len(prune_fiber(f, 0.75)) == 6

    def test_keep_all_is_identity(self, rng):
        f = Fiber(rng.normal(size=(11, 3)), 4)
        assert prune_fiber(f, 1.0) == f

    def test_collinear_keeps_first(self):
        pts = np.stack([np.arange(8.0), np.zeros(8), np.zeros(8)], axis=1)
        np.testing.assert_array_equal(prune_fiber(Fiber(pts), 0.75).points, pts[:6])

    def test_keeps_highest_scores(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [2, 1, 0], [3, 1, 0], [4, 1, 0.0]])
        out = prune_fiber(Fiber(pts), 0.5)
        # corners at indices 2 and 3, then ties broken towards index 0
        np.testing.assert_array_equal(out.points, pts[[0, 2, 3]])

    def test_label_kept(self, rng):
        assert prune_fiber(Fiber(rng.normal(size=(9, 3)), 7)).label == 7

    @pytest.mark.parametrize("kf", [0.0, -0.1, 1.5])
    def test_bad_fraction(self, kf):
        with pytest.raises(ValueError):
            prune_fiber(Fiber(np.zeros((4, 3)) + 1), kf)

    @pytest.mark.parametrize("n,kf,k", [(8, 0.75, 6), (10, 0.7, 7), (36, 0.75, 27), (2, 0.1, 1),
                                        (120, 0.75, 90), (5, 0.75, 4)])
    def test_n_kept(self, n, kf, k):
        assert n_kept(n, kf) == k

    @given(points_st, st.floats(0.05, 1.0))
    def test_subsequence(self, pts, kf):
        out = prune_fiber(Fiber(pts), kf).points
        assert len(out) == max(1, math.ceil(round(kf * len(pts), 9)))
        # order-preserving subsequence: greedy match walks forward only
        j = 0
        for p in out:
            while not np.array_equal(pts[j], p):
                j += 1
            j += 1

    @given(points_st)
    def test_deterministic(self, pts):
        assert prune_fiber(Fiber(pts)) == prune_fiber(Fiber(pts.copy()))


class TestFixedLength:
    def test_truncate(self, rng):
        pts = rng.normal(size=(120, 3)) + 5
        s = to_fixed_length(pts)
        np.testing.assert_array_equal(s.coords, pts[:100])
        assert s.valid.all()

    def test_exact(self, rng):
        pts = rng.normal(size=(100, 3)) + 5
        s = to_fixed_length(pts)
        np.testing.assert_array_equal(s.coords, pts)
        assert s.valid.all()

    def test_pad(self, rng):
        pts = rng.normal(size=(36, 3)) + 5
        s = to_fixed_length(pts)
        assert s.length == 36 and (~s.valid).sum() == 64
        np.testing.assert_array_equal(s.coords[36:], MASK_VALUE)
        np.testing.assert_array_equal(sequence_mask(s.coords), s.valid)

    def test_origin_point_is_nudged(self):
        pts = np.array([[1.0, 1, 1], [0, 0, 0], [2, 2, 2]])
        s = to_fixed_length(pts, max_len=5)
        assert s.length == 3
        np.testing.assert_array_equal(sequence_mask(s.coords), s.valid)

    def test_invariants_rejected(self):
        with pytest.raises(ValueError):
            MaskedSequence(np.zeros((3, 3)), [True, False, True])
        with pytest.raises(ValueError):
            MaskedSequence(np.zeros((3, 3)), [False] * 3)

    @given(st.integers(1, 150).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coord)),
           st.integers(1, 120))
    def test_prefix_and_mask_value(self, pts, max_len):
        s = to_fixed_length(pts, max_len)
        n = s.length
        assert n == min(len(pts), max_len)
        assert s.valid[:n].all() and not s.valid[n:].any()
        assert np.all(s.coords[~s.valid] == MASK_VALUE)
        np.testing.assert_array_equal(sequence_mask(s.coords), s.valid)


def test_preprocess_prunes_then_pads(rng):
    f = Fiber(rng.normal(size=(120, 3)) * 10 + 50)
    s = preprocess(f, 0.75, 100)
    assert s.length == 90
    np.testing.assert_array_equal(s.coords[:90], prune_fiber(f, 0.75).points)
