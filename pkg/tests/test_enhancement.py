import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from protoseg import TwoChannelMap, enhance, msie, pseudo_mask, qsce, query_prototype
from protoseg.enhancement import self_contrast
from protoseg.ops import minmax_normalize

SCALES = [(60, 60), (30, 30), (15, 15), (8, 8)]
logits = arrays(np.float64, (2, 9, 9), elements=st.floats(-20, 20))


def two(fg, bg):
    return TwoChannelMap(np.asarray(fg, float), np.asarray(bg, float))


class TestMSIE:
    def test_flat_logits_give_minus_one(self, rng):
        x = rng.normal(size=(16, 16))
        for out in msie(two(x, x), [(16, 16), (8, 8), (3, 3)]):
            np.testing.assert_array_equal(out, -1.0)

    def test_default_scales(self, rng):
        g = two(rng.normal(size=(60, 60)), rng.normal(size=(60, 60)))
        assert [m.shape for m in msie(g, SCALES)] == SCALES

    def test_spike(self):
        fg = np.zeros((5, 5))
        fg[2, 3] = 3.0
        out = msie(two(fg, np.zeros((5, 5))), [(5, 5)])[0]
        assert out[2, 3] == pytest.approx(1.0, abs=1e-6)
        assert out.max() == out[2, 3]
        np.testing.assert_array_equal(out[fg == 0], -1.0)

    def test_scale_too_large(self):
        with pytest.raises(ValueError):
            msie(two(np.zeros((4, 4)), np.zeros((4, 4))), [(5, 5)])

    @settings(max_examples=50)
    @given(logits)
    def test_range(self, g):
        for out in msie(two(g[0], g[1]), [(9, 9), (4, 4), (1, 1)]):
            assert out.min() >= -1 and out.max() <= 1


class TestPseudoMask:
    def test_all_fg(self):
        assert pseudo_mask(two(np.ones((2, 2)), np.zeros((2, 2)))).all()

    def test_ties_background(self):
        assert not pseudo_mask(two(np.ones((2, 2)), np.ones((2, 2)))).any()

    def test_elementwise(self, rng):
        fg, bg = rng.normal(size=(2, 4, 4))
        np.testing.assert_array_equal(pseudo_mask(two(fg, bg)), fg > bg)


class TestQueryPrototype:
    def test_full_mask(self, rng):
        q = rng.normal(size=(3, 4, 5))
        np.testing.assert_allclose(query_prototype(q, np.ones((4, 5))), q.mean(axis=(1, 2)), atol=1e-12)

    def test_single_pixel(self, rng):
        q = rng.normal(size=(3, 4, 5))
        m = np.zeros((4, 5))
        m[2, 1] = 1
        np.testing.assert_array_equal(query_prototype(q, m), q[:, 2, 1])

    def test_checkerboard(self):
        a, b = np.array([1.0, 2.0]), np.array([-3.0, 5.0])
        board = (np.add.outer(np.arange(4), np.arange(4)) % 2).astype(bool)
        q = np.where(board, a[:, None, None], b[:, None, None])
        np.testing.assert_allclose(query_prototype(q, board), a)
        np.testing.assert_allclose(query_prototype(q, ~board), b)

    def test_empty_mask_falls_back(self, rng):
        q = rng.normal(size=(3, 4, 5))
        np.testing.assert_allclose(query_prototype(q, np.zeros((4, 5))), q.mean(axis=(1, 2)))

    def test_oracle(self, rng):
        for _ in range(20):
            q = rng.normal(size=(3, 5, 5))
            m = rng.random((5, 5)) < 0.4
            np.testing.assert_allclose(query_prototype(q, m), oracles.masked_mean(q, m), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            query_prototype(np.ones((2, 3, 3)), np.ones((3, 4)))


class TestQSCE:
    def test_endpoints(self):
        # pixel 0 equals the query prototype, pixel 1 points the opposite way
        q = np.zeros((2, 1, 3))
        q[:, 0, 0] = [1, 0]
        q[:, 0, 1] = [1, 0]
        q[:, 0, 2] = [-1, 0]
        g = two([[1.0, 1.0, -1.0]], [[0.0, 0.0, 0.0]])
        p = np.array([[5.0, 1.0, 3.0]])
        term = self_contrast(q, g, p)
        assert term[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert term[0, 2] == pytest.approx(0.0, abs=1e-6)
        out = qsce(q, g, p, [(1, 3)])[0]
        assert out[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert out[0, 2] == pytest.approx(-1.0, abs=1e-6)

    def test_uniform_query(self, rng):
        q = np.tile(rng.normal(size=3)[:, None, None], (1, 6, 6))
        g = two(rng.normal(size=(6, 6)), rng.normal(size=(6, 6)))
        p = rng.normal(size=(6, 6))
        out = qsce(q, g, p, [(6, 6)])[0]
        np.testing.assert_allclose(out, 2 * minmax_normalize(p) - 1, atol=1e-6)

    def test_scales_and_range(self, rng):
        q = rng.normal(size=(4, 60, 60))
        g = two(rng.normal(size=(60, 60)), rng.normal(size=(60, 60)))
        outs = qsce(q, g, rng.normal(size=(60, 60)) * 5, SCALES)
        assert [o.shape for o in outs] == SCALES
        assert all(o.min() >= -1 and o.max() <= 1 for o in outs)

    def test_query_scale_invariance(self, rng):
        q = rng.normal(size=(4, 8, 8))
        g = two(rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))
        p = rng.normal(size=(8, 8))
        a = qsce(q, g, p, [(8, 8), (4, 4)])
        b = qsce(7.5 * q, g, p, [(8, 8), (4, 4)])
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, atol=1e-6)

    def test_shape_mismatch(self, rng):
        g = two(np.zeros((4, 4)), np.zeros((4, 4)))
        with pytest.raises(ValueError):
            qsce(rng.normal(size=(2, 4, 5)), g, np.zeros((4, 4)), [(2, 2)])


class TestEnhance:
    def test_identity(self, rng):
        ps = [rng.normal(size=s) for s in [(4, 4), (2, 2)]]
        zeros = [np.zeros_like(p) for p in ps]
        for a, b in zip(enhance(ps, zeros, zeros), ps):
            assert a.tobytes() == b.tobytes()

    def test_three_terms(self):
        out = enhance([np.zeros((1, 1))], [np.full((1, 1), 0.5)], [np.full((1, 1), -0.25)])
        assert out[0][0, 0] == 0.25

    def test_bounds(self, rng):
        n = 10
        p = rng.uniform(-n, n, (6, 6))
        out = enhance([p], [rng.uniform(-1, 1, (6, 6))], [rng.uniform(-1, 1, (6, 6))])[0]
        assert out.min() >= -n - 2 and out.max() <= n + 2

    def test_mismatch(self):
        with pytest.raises(ValueError):
            enhance([np.zeros((2, 2))], [np.zeros((2, 2))], [])
        with pytest.raises(ValueError):
            enhance([np.zeros((2, 2))], [np.zeros((2, 2))], [np.zeros((3, 2))])
