import numpy as np
import pytest

import oracles
from protoseg import (InvariantError, PrototypeSet, Source, allocate, gather_guide_features, guide_map,
                      probability_map, similarity_stack)


def protoset(vectors):
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    return PrototypeSet(vectors, [Source.KMEANS] * len(vectors))


@pytest.fixture
def case(rng):
    query = rng.normal(size=(3, 4, 4))
    protos = protoset(rng.normal(size=(2, 3)))
    return query, protos


class TestSimilarityStack:
    def test_matching_pixel(self, rng):
        q = rng.normal(size=(3, 2, 2))
        p = protoset([q[:, 1, 0], [1, 0, 0]])
        assert similarity_stack(q, p)[0, 1, 0] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal(self):
        q = np.zeros((2, 3, 3))
        q[0] = np.arange(1, 10).reshape(3, 3)
        np.testing.assert_array_equal(similarity_stack(q, protoset([[0, 1]])), 0.0)

    def test_oracle(self, case):
        query, protos = case
        expected = oracles.similarity_stack(query, protos.vectors.tolist())
        np.testing.assert_allclose(similarity_stack(query, protos), expected, atol=1e-6)

    def test_channel_mismatch(self, case):
        with pytest.raises(ValueError):
            similarity_stack(case[0], protoset([[1.0, 2.0]]))


class TestGuideMap:
    def test_strict(self):
        assert guide_map(np.array([[[0.5]], [[0.3]]]))[0, 0] == 0

    def test_tie(self):
        assert guide_map(np.array([[[0.4]], [[0.4]]]))[0, 0] == 0

    def test_single(self, rng):
        np.testing.assert_array_equal(guide_map(rng.uniform(-1, 1, (1, 3, 3))), 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            guide_map(np.zeros((0, 2, 2)))

    def test_scale_invariance(self, rng):
        for _ in range(50):
            q = rng.normal(size=(4, 5, 5))
            v = rng.normal(size=(3, 4))
            g = guide_map(similarity_stack(q, protoset(v)))
            lam = rng.uniform(0.1, 10)
            np.testing.assert_array_equal(guide_map(similarity_stack(lam * q, protoset(v))), g)
            v2 = v.copy()
            v2[rng.integers(3)] *= lam
            np.testing.assert_array_equal(guide_map(similarity_stack(q, protoset(v2))), g)


class TestGather:
    def test_uniform(self, rng):
        protos = protoset(rng.normal(size=(3, 4)))
        out = gather_guide_features(np.full((2, 5), 2), protos)
        assert out.shape == (4, 2, 5)
        np.testing.assert_array_equal(out, np.broadcast_to(protos.vectors[2][:, None, None], (4, 2, 5)))

    def test_two_regions(self):
        protos = protoset([[1.0, 2.0], [3.0, 4.0]])
        guide = np.array([[0, 0, 1, 1]])
        out = gather_guide_features(guide, protos)
        np.testing.assert_array_equal(out[:, 0, :2], [[1, 1], [2, 2]])
        np.testing.assert_array_equal(out[:, 0, 2:], [[3, 3], [4, 4]])

    def test_oracle(self, case):
        query, protos = case
        stack = oracles.similarity_stack(query, protos.vectors.tolist())
        expected = oracles.gather(oracles.argmax_guide(stack), protos.vectors.tolist())
        out = gather_guide_features(guide_map(similarity_stack(query, protos)), protos)
        np.testing.assert_array_equal(out, expected)

    def test_out_of_range(self):
        with pytest.raises(InvariantError):
            gather_guide_features(np.array([[2]]), protoset([[1.0], [2.0]]))

    def test_membership(self, case):
        query, protos = case
        match = allocate(query, protos)
        cols = match.guide_features.reshape(3, -1).T
        rows = {v.tobytes() for v in protos.vectors}
        assert all(c.tobytes() in rows for c in cols)


class TestProbabilityMap:
    def test_two_terms(self):
        assert probability_map(np.array([[[0.5]], [[0.3]]]))[0, 0] == pytest.approx(0.8)

    def test_single_bitwise(self, rng):
        s = rng.uniform(-1, 1, (1, 3, 3))
        assert probability_map(s).tobytes() == s[0].tobytes()

    def test_oracle(self, case):
        query, protos = case
        stack = similarity_stack(query, protos)
        np.testing.assert_allclose(probability_map(stack), oracles.prob_sum(stack), atol=1e-9)

    def test_permutation(self, rng):
        q = rng.normal(size=(3, 4, 4))
        v = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        a = similarity_stack(q, protoset(v))
        b = similarity_stack(q, protoset(v[perm]))
        np.testing.assert_array_equal(b, a[perm])
        np.testing.assert_allclose(probability_map(b), probability_map(a), atol=1e-9)

    def test_empty(self):
        with pytest.raises(ValueError):
            probability_map(np.zeros((0, 1, 1)))
