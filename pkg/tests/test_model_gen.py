import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sumtrain.errors import ConfigError, ValidationError
from sumtrain.model_gen import (
    Covariance,
    CovarianceSpec,
    GenConfig,
    MultiAncestryConfig,
    build_covariance,
    calibrate_noise,
    generate_dataset,
    generate_multi_dataset,
    matrix_sqrt_psd,
    sample_effects,
    sample_multi_effects,
    substream,
)


def gen(n=50, p=20, n_w=30, kappa=0.5, s2=1.0, h2=0.5, cov=None, **kw):
    cov = cov or CovarianceSpec("identity", p)
    return GenConfig(n=n, p=p, n_w=n_w, kappa=kappa, sigma_beta2=s2, target_h2=h2, cov=cov, **kw)


# ---------------------------------------------------------------- covariance


def test_ar1_two_by_two():
    S = build_covariance(CovarianceSpec("blockAR1", 2, 1, 0.9))
    np.testing.assert_array_equal(S, [[1, 0.9], [0.9, 1]])


def test_ar1_rho_zero_is_identity():
    np.testing.assert_array_equal(build_covariance(CovarianceSpec("blockAR1", 6, 2, 0.0)), np.eye(6))


def test_block_ar1_structure_and_min_eigenvalue():
    S = build_covariance(CovarianceSpec("blockAR1", 4, 2, 0.5))
    B = np.array([[1, 0.5], [0.5, 1]])
    expected = np.zeros((4, 4))
    expected[:2, :2] = B
    expected[2:, 2:] = B
    np.testing.assert_array_equal(S, expected)
    assert np.linalg.eigvalsh(S)[0] == pytest.approx(0.5)


def test_block_count_must_divide_p():
    with pytest.raises(ConfigError):
        CovarianceSpec("blockAR1", 5, 2, 0.5).validate()


def test_dense_non_psd_rejected():
    M = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        Covariance.from_spec(CovarianceSpec("dense", 2, matrix=M))


def test_covariance_operations_match_dense(rng):
    cov = Covariance.from_spec(CovarianceSpec("blockAR1", 12, 3, 0.7))
    S = cov.dense()
    x = rng.standard_normal(12)
    Z = rng.standard_normal((5, 12))
    np.testing.assert_allclose(cov.matvec(x), S @ x, atol=1e-12)
    np.testing.assert_allclose(cov.quad(x), x @ S @ x, rtol=1e-12)
    R = matrix_sqrt_psd(S)
    np.testing.assert_allclose(cov.sqrt_right(Z), Z @ R, atol=1e-12)
    np.testing.assert_allclose(cov.eigenvalues(), np.linalg.eigvalsh(S), atol=1e-12)
    assert cov.trace() == pytest.approx(12.0)


# ---------------------------------------------------------------- matrix root


def test_sqrt_identity_and_diagonal():
    np.testing.assert_allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


def test_sqrt_random_psd(rng):
    A = rng.standard_normal((5, 5))
    M = A @ A.T
    R = matrix_sqrt_psd(M)
    assert np.max(np.abs(R @ R - M)) < 1e-10
    np.testing.assert_allclose(R, R.T)


def test_sqrt_rejects_asymmetric():
    with pytest.raises(ValidationError, match="symmetric"):
        matrix_sqrt_psd(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_sqrt_clips_rounding_negatives(rng):
    W = rng.standard_normal((3, 8))
    # rank 3; storing at 9 significant digits leaves tiny negative eigenvalues
    G = np.vectorize(lambda x: float(f"{x:.9g}"))(W.T @ W)
    G = (G + G.T) / 2
    assert np.linalg.eigvalsh(G)[0] < 0
    R = matrix_sqrt_psd(G)
    assert np.max(np.abs(R @ R - G)) < 1e-6


@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
def test_sqrt_round_trip_property(A):
    M = A @ A.T
    R = matrix_sqrt_psd(M)
    assert np.max(np.abs(R @ R - M)) <= 1e-8 * max(1.0, np.max(np.abs(M)))
    assert np.linalg.eigvalsh(R)[0] >= -1e-7 * max(1.0, np.max(np.abs(R)))


# ---------------------------------------------------------------- effects and noise


def test_kappa_zero_gives_zero_effects():
    assert not np.any(sample_effects(gen(kappa=0.0, h2=0.0), np.random.default_rng(1)))


def test_dense_effects_second_moment():
    p = 100_000
    beta = sample_effects(gen(p=p, kappa=1.0), np.random.default_rng(2))
    # sum beta^2 = (1/p) sum z^2 has sd sqrt(2/p)
    assert abs(np.sum(beta**2) - 1.0) < 3 * np.sqrt(2.0 / p)


def test_sparse_effect_count():
    p, k = 10_000, 0.1
    counts = [np.count_nonzero(sample_effects(gen(p=p, kappa=k), np.random.default_rng(s)))
              for s in range(10)]
    within = [abs(c - p * k) < 3 * np.sqrt(p * k * (1 - k)) for c in counts]
    assert sum(within) >= 9
    assert abs(np.mean(counts) - p * k) < 3 * np.sqrt(p * k * (1 - k) / len(counts))


def test_rademacher_effects_magnitude():
    beta = sample_effects(gen(p=400, kappa=1.0, s2=4.0, effect_dist="rademacher"),
                          np.random.default_rng(0))
    np.testing.assert_allclose(np.abs(beta), 2.0 / 20.0)


def test_calibrate_noise_examples():
    assert calibrate_noise(0.5, 1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert calibrate_noise(1.0, 0.1, 1.0, 1.0) == 0.0
    assert calibrate_noise(0.8, 0.1, 1.0, CovarianceSpec("identity", 10)) == pytest.approx(0.025)
    with pytest.raises(ConfigError):
        calibrate_noise(0.0, 0.1, 1.0, 1.0)


# ---------------------------------------------------------------- datasets


def test_same_seed_bit_identical():
    a = generate_dataset(gen(seed=9))
    b = generate_dataset(gen(seed=9))
    for field in ("X", "y", "W", "beta", "noise"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_residual_reproduces_noise():
    d = generate_dataset(gen(seed=4))
    assert np.array_equal(d.y - d.X @ d.beta, d.noise)


def test_sample_covariance_concentrates():
    n, p = 5000, 200
    cfg = gen(n=n, p=p, n_w=1, cov=CovarianceSpec("blockAR1", p, 1, 0.9))
    d = generate_dataset(cfg, np.random.default_rng(5))
    S = Covariance.from_spec(cfg.cov).dense()
    # entrywise sd of X'X/n is at most sqrt(2/n) for unit-variance coordinates
    assert np.max(np.abs(d.X.T @ d.X / n - S)) < 5 * np.sqrt(2.0 / n)


def test_realized_heritability():
    vals = []
    for seed in range(20):
        d = generate_dataset(gen(n=10_000, p=500, n_w=1, kappa=0.5, h2=0.5, seed=seed))
        g = d.X @ d.beta
        vals.append(np.var(g) / np.var(d.y))
    assert abs(np.mean(vals) - 0.5) < 0.05


def test_gen_config_collects_problems():
    cfg = gen(n=0, kappa=1.5, h2=2.0)
    problems = cfg.problems()
    assert len(problems) >= 3
    with pytest.raises(ConfigError) as info:
        cfg.validate()
    assert len(info.value.messages) == len(problems)


def test_max_entries_guard():
    with pytest.raises(ConfigError, match="max_entries"):
        gen(max_entries=100).validate()


def test_substreams_independent_of_order():
    a = substream(7, 3, 1).standard_normal(4)
    substream(7, 0, 0).standard_normal(100)
    b = substream(7, 3, 1).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, substream(7, 3, 2).standard_normal(4))


# ---------------------------------------------------------------- multi-ancestry


def mcfg(S, kappas=(0.5, 0.5), p=50, **kw):
    covs = tuple(CovarianceSpec("identity", p) for _ in kappas)
    return MultiAncestryConfig(covs=covs, kappas=kappas, h2s=(0.5,) * len(kappas),
                               sigma_cross=np.asarray(S, dtype=float), p=p, **kw)


def test_single_population_matches_sample_effects():
    cfg = mcfg([[2.0]], kappas=(0.3,), p=500)
    single = gen(p=500, kappa=0.3, s2=2.0)
    a = sample_multi_effects(cfg, np.random.default_rng(11))[0]
    b = sample_effects(single, np.random.default_rng(11))
    np.testing.assert_allclose(a, b, rtol=1e-15, atol=0)


def test_perfect_correlation_gives_equal_effects():
    beta = sample_multi_effects(mcfg([[1, 1], [1, 1]], kappas=(1.0, 1.0)), np.random.default_rng(0))
    np.testing.assert_allclose(beta[0], beta[1], atol=1e-12)


def test_cross_moment():
    p = 100_000
    beta = sample_multi_effects(mcfg([[1, 0.4], [0.4, 1]], p=p), np.random.default_rng(6))
    prod = p * beta[0] * beta[1]
    se = prod.std(ddof=1) / np.sqrt(p)
    assert abs(prod.mean() - 0.25 * 0.4) < 3 * se


def test_non_psd_cross_covariance_rejected():
    with pytest.raises(ConfigError):
        mcfg([[1, 2], [2, 1]]).validate()


def test_multi_dataset_shapes_and_determinism():
    cfg = mcfg([[1, 0.5], [0.5, 1]], n=40, n_w=30, seed=2)
    a = generate_multi_dataset(cfg)
    b = generate_multi_dataset(cfg)
    assert len(a) == 2 and a[0].X.shape == (40, 50) and a[1].W.shape == (30, 50)
    assert np.array_equal(a[1].y, b[1].y)
