import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from protoseg.ops import (adaptive_avg_pool, affine_pm1, bilinear_resize, cosine, minmax_normalize,
                          softmax2)
from protoseg.validation import check_feature_map, check_mask

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="NaN"):
            check_feature_map(np.full((1, 2, 2), np.nan))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            check_feature_map(np.zeros((2, 2)))

    def test_mask_values(self):
        with pytest.raises(ValueError, match="0 or 1"):
            check_mask(np.array([[0, 2]]))
        assert check_mask(np.array([[0, 1]])).dtype == np.bool_


class TestAdaptiveAvgPool:
    def test_constant(self):
        np.testing.assert_array_equal(adaptive_avg_pool(np.full((4, 4), 3.0), 2, 2), np.full((2, 2), 3.0))

    def test_global_mean(self):
        assert adaptive_avg_pool(np.array([[1.0, 2], [3, 4]]), 1, 1)[0, 0] == 2.5

    def test_overlapping_windows(self):
        x = np.arange(1.0, 10.0).reshape(3, 3)
        expected = oracles.adaptive_pool(x, 2, 2)
        np.testing.assert_allclose(expected, [[3, 4], [6, 7]])
        np.testing.assert_allclose(adaptive_avg_pool(x, 2, 2), expected, atol=1e-12)

    def test_per_channel(self, rng):
        x = rng.normal(size=(3, 7, 5))
        out = adaptive_avg_pool(x, 3, 2)
        for c in range(3):
            np.testing.assert_allclose(out[c], oracles.adaptive_pool(x[c], 3, 2), atol=1e-12)

    @pytest.mark.parametrize("size", [(0, 2), (2, -1)])
    def test_invalid_size(self, size):
        with pytest.raises(ValueError):
            adaptive_avg_pool(np.ones((4, 4)), *size)

    def test_upsampling_refused(self):
        with pytest.raises(ValueError):
            adaptive_avg_pool(np.ones((4, 4)), 5, 4)

    @given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=finite))
    def test_one_by_one_is_mean(self, x):
        assert adaptive_avg_pool(x, 1, 1)[0, 0] == pytest.approx(x.mean(), rel=1e-12, abs=1e-12)

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.data())
    def test_mean_preserved_on_even_tiling(self, oh, ow, fh, fw, data):
        x = data.draw(arrays(np.float64, (oh * fh, ow * fw), elements=finite))
        out = adaptive_avg_pool(x, oh, ow)
        assert out.mean() == pytest.approx(x.mean(), rel=1e-12, abs=1e-10)


class TestBilinearResize:
    def test_identity_bitwise(self, rng):
        x = rng.normal(size=(5, 7))
        assert bilinear_resize(x, 5, 7).tobytes() == x.tobytes()

    def test_constant(self):
        np.testing.assert_allclose(bilinear_resize(np.full((3, 4), 2.5), 7, 2), 2.5, rtol=1e-15)

    def test_half_pixel_upsample(self):
        np.testing.assert_allclose(bilinear_resize(np.array([[0.0, 1.0]]), 1, 4), [[0, 0.25, 0.75, 1]])

    def test_affine_field_interior(self):
        h, w, oh, ow = 6, 8, 13, 17
        y, x = np.mgrid[0:h, 0:w].astype(float)
        field = 0.3 * x - 1.7 * y + 2.0
        out = bilinear_resize(field, oh, ow)
        sy = (np.arange(oh) + 0.5) * h / oh - 0.5
        sx = (np.arange(ow) + 0.5) * w / ow - 0.5
        inner_y = (sy >= 0) & (sy <= h - 1)
        inner_x = (sx >= 0) & (sx <= w - 1)
        expected = 0.3 * sx[None, :] - 1.7 * sy[:, None] + 2.0
        np.testing.assert_allclose(out[np.ix_(inner_y, inner_x)], expected[np.ix_(inner_y, inner_x)], atol=1e-9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            bilinear_resize(np.ones((2, 2)), 0, 3)


class TestSoftmax2:
    def test_symmetric(self):
        fg, bg = softmax2(np.zeros((2, 3)), np.zeros((2, 3)))
        np.testing.assert_array_equal(fg, 0.5)
        np.testing.assert_array_equal(bg, 0.5)

    def test_log_three(self):
        fg, bg = softmax2(np.array([[math.log(3)]]), np.array([[0.0]]))
        assert fg[0, 0] == pytest.approx(0.75, abs=1e-15)
        assert bg[0, 0] == pytest.approx(0.25, abs=1e-15)

    def test_shift_invariance(self, rng):
        x, y = rng.normal(size=(2, 4, 4))
        a = softmax2(x, y)
        b = softmax2(x + 37.5, y + 37.5)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            softmax2(np.zeros((2, 2)), np.zeros((2, 3)))

    @given(arrays(np.float64, (3, 4), elements=st.floats(-700, 700)),
           arrays(np.float64, (3, 4), elements=st.floats(-700, 700)))
    def test_partition_of_unity(self, x, y):
        fg, bg = softmax2(x, y)
        np.testing.assert_allclose(fg + bg, 1.0, atol=1e-12)
        assert np.all((fg >= 0) & (fg <= 1))


class TestMinmaxAffine:
    def test_ramp(self):
        out = minmax_normalize(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out, [[0, 1 / (2 + 1e-7), 2 / (2 + 1e-7)]], rtol=1e-15)
        np.testing.assert_allclose(out, [[0, 0.5, 1]], atol=1e-6)

    def test_constant_is_zero(self):
        np.testing.assert_array_equal(minmax_normalize(np.full((1, 3), 4.2)), 0.0)

    def test_unit_range(self):
        np.testing.assert_allclose(minmax_normalize(np.array([[0.0, 1.0]])), [[0, 1 / (1 + 1e-7)]], rtol=1e-15)

    @given(arrays(np.float64, (4, 5), elements=finite), st.floats(-1e3, 1e3))
    def test_range_and_shift(self, x, c):
        out = minmax_normalize(x)
        assert out.min() >= 0 and out.max() <= 1
        np.testing.assert_allclose(minmax_normalize(x + c), out, atol=1e-6)

    @pytest.mark.parametrize("x, expected", [(0.0, -1.0), (0.5, 0.0), (1.0, 1.0)])
    def test_affine_constants(self, x, expected):
        assert affine_pm1(np.array([[x]]), 2, 1)[0, 0] == expected


class TestCosine:
    @pytest.mark.parametrize("a, b, expected", [
        ((1, 0), (2, 0), 1.0), ((1, 0), (0, 1), 0.0), ((1, 0), (-1, 0), -1.0)])
    def test_basic(self, a, b, expected):
        assert cosine(a, b) == pytest.approx(expected, abs=1e-6)

    def test_zero_vector(self):
        assert cosine((0, 0, 0), (1, 2, 3)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine((1, 2), (1, 2, 3))

    @settings(max_examples=200)
    @given(arrays(np.float64, 5, elements=st.floats(-10, 10)),
           arrays(np.float64, 5, elements=st.floats(-10, 10)),
           st.floats(0.1, 100))
    def test_scale_invariance(self, a, b, lam):
        # the 1e-7 stabiliser only bites for tiny norms
        if np.linalg.norm(a) < 1 or np.linalg.norm(b) < 1:
            return
        assert cosine(lam * a, b) == pytest.approx(cosine(a, b), abs=1e-6)
        assert -1 <= cosine(a, b) <= 1
