import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sumtrain.errors import ValidationError
from sumtrain.estimators import (
    EnsembleRule,
    LinearRule,
    MultiAncestryRule,
    custom_fit,
    ensemble_fit,
    marginal_ranking,
    multi_fit,
    ridge_fit,
    ridge_matrix,
    ridge_path,
    threshold_fit,
    threshold_matrix,
    top_k_indices,
)
from sumtrain.summary import LDReference


def panel(rng, n_w=30, p=6):
    return LDReference.from_panel(rng.standard_normal((n_w, p)))


def test_scalar_shrinkage():
    ld = LDReference(7.0 * np.eye(3), 7)
    s = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(ridge_fit(s, ld, 0.5), s / (7 * 1.5), rtol=1e-14)


def test_dominant_penalty(rng):
    ld = panel(rng)
    s = rng.standard_normal(6)
    b = ridge_fit(s, ld, 1e6)
    assert np.linalg.norm(b - s / (1e6 * ld.n_w)) / np.linalg.norm(b) < 1e-3


def test_three_by_three_instance():
    G = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    s = np.array([1.0, 2.0, -1.0])
    ld = LDReference(G, 2)
    # (G + 0.5 * 2 I)^{-1} s by Cramer's rule
    M = G + np.eye(3)
    det = np.linalg.det(M)
    expected = [np.linalg.det(np.column_stack([s if j == i else M[:, j] for j in range(3)])) / det
                for i in range(3)]
    np.testing.assert_allclose(ridge_fit(s, ld, 0.5), expected, rtol=1e-12)


def test_ridge_rejects_nonpositive_theta(rng):
    with pytest.raises(ValidationError):
        ridge_fit(np.ones(6), panel(rng), 0.0)


def test_ridge_path_matches_fits(rng):
    ld = panel(rng, n_w=4)
    s = rng.standard_normal(6)
    thetas = [0.01, 1.0, 10.0]
    path = ridge_path(s, ld, thetas)
    for row, t in zip(path, thetas):
        np.testing.assert_allclose(row, ridge_fit(s, ld, t), rtol=1e-8)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_ridge_norm_decreases_in_theta(t1, t2, seed):
    rng = np.random.default_rng(seed)
    ld = panel(rng, n_w=8, p=5)
    s = rng.standard_normal(5)
    lo, hi = sorted((t1, t2))
    assert np.linalg.norm(ridge_fit(s, ld, hi)) <= np.linalg.norm(ridge_fit(s, ld, lo)) * (1 + 1e-10)


@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_ridge_linear_in_s(c, seed):
    rng = np.random.default_rng(seed)
    ld = panel(rng, n_w=8, p=5)
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    lhs = ridge_fit(c * a + b, ld, 0.7)
    rhs = c * ridge_fit(a, ld, 0.7) + ridge_fit(b, ld, 0.7)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_threshold_examples():
    s = np.array([2.0, 5.0, -1.0])
    np.testing.assert_array_equal(threshold_fit(s, [0, 1, 2]), s)
    np.testing.assert_array_equal(threshold_fit(s, [0]), [2.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        threshold_fit(s, [])
    with pytest.raises(ValidationError):
        threshold_fit(s, [3])


def test_threshold_support_size(rng):
    s = rng.standard_normal(40)
    s[rng.random(40) < 0.3] = 0.0
    idx = rng.choice(40, 15, replace=False)
    assert np.count_nonzero(threshold_fit(s, idx)) == np.count_nonzero(s[idx])


def test_marginal_ranking_standardizes_and_breaks_ties():
    ld = LDReference(np.diag([1.0, 4.0, 1.0]), 1)
    s = np.array([1.0, 3.0, -1.0])  # standardized scores 1, 1.5, 1
    np.testing.assert_array_equal(marginal_ranking(s, ld), [1, 0, 2])
    np.testing.assert_array_equal(top_k_indices(s, 2, ld), [0, 1])
    np.testing.assert_array_equal(marginal_ranking(s), [1, 0, 2])


def test_custom_rule_examples(rng):
    ld = panel(rng)
    s = rng.standard_normal(6)
    np.testing.assert_array_equal(custom_fit(np.eye(6), s), s)
    np.testing.assert_allclose(custom_fit(ridge_matrix(ld, 0.4), s), ridge_fit(s, ld, 0.4), rtol=1e-8)
    idx = [1, 4]
    np.testing.assert_array_equal(custom_fit(threshold_matrix(idx, 6), s), threshold_fit(s, idx))
    with pytest.raises(ValidationError):
        custom_fit(np.eye(5), s)


def test_linear_rule_validation(rng):
    with pytest.raises(ValidationError):
        LinearRule("ridge", theta=1.0)
    with pytest.raises(ValidationError):
        LinearRule("threshold")
    with pytest.raises(ValidationError):
        LinearRule("lasso")
    rule = LinearRule("threshold", top_k=2)
    s = np.array([0.1, -3.0, 2.0, 0.0])
    np.testing.assert_array_equal(rule.fit(s), [0.0, -3.0, 2.0, 0.0])
    np.testing.assert_array_equal(rule.as_matrix(4, s) @ s, rule.fit(s))


def test_ensemble_examples(rng):
    ld = panel(rng, n_w=40, p=30)
    s = rng.standard_normal(30)
    ridge = LinearRule("ridge", theta=1.0, reference=ld)
    thresh = LinearRule("threshold", top_k=10, reference=ld)
    np.testing.assert_array_equal(ensemble_fit(EnsembleRule([(1.0, ridge)]), s), ridge.fit(s))
    np.testing.assert_allclose(ensemble_fit(EnsembleRule([(0.5, ridge), (0.5, ridge)]), s),
                               ridge.fit(s), rtol=1e-14)
    hand = 0.3 * np.linalg.solve(ld.G + ld.n_w * np.eye(30), s)
    keep = np.argsort(-np.abs(s) / np.sqrt(np.diag(ld.G)))[:10]
    hand[keep] += 0.7 * s[keep]
    np.testing.assert_allclose(ensemble_fit(EnsembleRule([(0.3, ridge), (0.7, thresh)]), s),
                               hand, rtol=1e-9)
    with pytest.raises(ValidationError):
        EnsembleRule([])


def test_multi_examples(rng):
    ld1, ld2 = panel(rng), panel(rng)
    s1, s2 = rng.standard_normal(6), rng.standard_normal(6)
    r1 = LinearRule("ridge", theta=0.5, reference=ld1)
    r2 = LinearRule("ridge", theta=2.0, reference=ld2)
    np.testing.assert_array_equal(multi_fit(MultiAncestryRule([(1.0, r1)]), [s1]), r1.fit(s1))
    np.testing.assert_array_equal(multi_fit(MultiAncestryRule([(1.0, r1), (0.0, r2)]), [s1, s2]),
                                  r1.fit(s1))
    hand = (0.6 * np.linalg.solve(ld1.G + 0.5 * ld1.n_w * np.eye(6), s1)
            + 0.4 * np.linalg.solve(ld2.G + 2.0 * ld2.n_w * np.eye(6), s2))
    np.testing.assert_allclose(multi_fit(MultiAncestryRule([(0.6, r1), (0.4, r2)]), [s1, s2]),
                               hand, rtol=1e-9)
    with pytest.raises(ValidationError):
        multi_fit(MultiAncestryRule([(1.0, r1)]), [s1, s2])
