"""Population covariances, effect sampling and synthetic data generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError

COVARIANCE_KINDS = ("identity", "blockAR1", "dense")
EFFECT_DISTS = ("gaussian", "rademacher")
NOISE_DISTS = ("gaussian",)
DEFAULT_MAX_ENTRIES = 200_000_000


def substream(master_seed, *keys):
    """Independent generator for a replicate (and optional stream id).

    Uses ``SeedSequence`` hashing of ``(master_seed, *keys)`` so that every
    replicate draws from its own stream regardless of execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def matrix_sqrt_psd(M, clip_tol=1e-10, sym_tol=1e-8):
    """Symmetric square root of a symmetric PSD matrix.

    Parameters
    ----------
    M : array_like, shape (p, p)
    clip_tol : float
        Negative eigenvalues no larger in magnitude than
        ``clip_tol * p * max(1, |lambda|_max)`` are treated as rounding error
        (for instance from a matrix stored at 9 significant digits) and
        clipped to zero. Anything more negative is rejected.
    sym_tol : float
        Maximum tolerated ``|M - M.T|`` entry, relative to ``max(1, |M|)``.

    Returns
    -------
    R : ndarray, shape (p, p)
        Symmetric PSD with ``R @ R == M`` up to rounding.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix has non-finite entries")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    scale = max(1.0, np.max(np.abs(M))) if M.size else 1.0
    if asym > sym_tol * scale:
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    w, V = np.linalg.eigh((M + M.T) / 2)
    if w.size and w[0] < -clip_tol * M.shape[0] * max(1.0, np.max(np.abs(w))):
        raise ValidationError(f"matrix is not PSD (min eigenvalue {w[0]:.3g})")
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return (R + R.T) / 2


def ar1_block(m, rho):
    """``m x m`` AR(1) correlation matrix with entries ``rho**|i-j|``."""
    idx = np.arange(m)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


@dataclass(frozen=True)
class CovarianceSpec:
    """Declarative description of a population covariance.

    ``kind`` is one of ``identity``, ``blockAR1`` (``n_block`` equal blocks
    with AR(1) correlation ``rho``) or ``dense`` (explicit ``matrix``,
    optionally remembering the file it was read from in ``source``).
    """

    kind: str
    p: int
    n_block: int = 1
    rho: float = 0.0
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)
    source: str | None = field(default=None, compare=False)

    def problems(self):
        out = []
        if self.kind not in COVARIANCE_KINDS:
            out.append(f"covariance.kind must be one of {COVARIANCE_KINDS}, got {self.kind!r}")
            return out
        if not isinstance(self.p, (int, np.integer)) or self.p < 1:
            out.append(f"covariance.p must be a positive integer, got {self.p!r}")
            return out
        if self.kind == "blockAR1":
            if not isinstance(self.n_block, (int, np.integer)) or self.n_block < 1:
                out.append(f"covariance.n_block must be a positive integer, got {self.n_block!r}")
            elif self.p % self.n_block:
                out.append(f"covariance.p={self.p} is not divisible by n_block={self.n_block}")
            if not 0.0 <= self.rho < 1.0:
                out.append(f"covariance.rho must lie in [0, 1), got {self.rho!r}")
        if self.kind == "dense":
            if self.matrix is None:
                out.append("covariance.matrix is required for kind 'dense'")
            elif np.shape(self.matrix) != (self.p, self.p):
                out.append(f"covariance.matrix must be {self.p}x{self.p}, got {np.shape(self.matrix)}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


class Covariance:
    """Block-diagonal covariance with cached per-block factorizations.

    Every supported kind is block diagonal with ``n_block`` copies of one
    ``m x m`` block: identity uses ``m = 1``, dense uses ``n_block = 1``.
    Products with ``Sigma`` and ``Sigma^{1/2}`` are done blockwise.
    """

    def __init__(self, block, n_block):
        block = np.asarray(block, dtype=float)
        if block.shape[0] > 1 and np.array_equal(block, np.eye(block.shape[0])):
            n_block *= block.shape[0]
            block = np.ones((1, 1))
        self.block = block
        self.n_block = int(n_block)
        self.m = block.shape[0]
        self.p = self.m * self.n_block
        w, V = np.linalg.eigh(block)
        if w[0] <= 0:
            raise ValidationError(f"covariance is not positive definite (min eigenvalue {w[0]:.3g})")
        self._block_eigs = w
        self.block_sqrt = matrix_sqrt_psd(block)
        self._identity = self.m == 1 and block[0, 0] == 1.0

    @classmethod
    def from_spec(cls, spec):
        spec.validate()
        if spec.kind == "identity":
            return cls(np.ones((1, 1)), spec.p)
        if spec.kind == "blockAR1":
            return cls(ar1_block(spec.p // spec.n_block, spec.rho), spec.n_block)
        M = np.asarray(spec.matrix, dtype=float)
        matrix_sqrt_psd(M)
        return cls((M + M.T) / 2, 1)

    def _blockwise(self, Z, B):
        Z = np.asarray(Z, dtype=float)
        if self._identity:
            return Z.copy()
        vec = Z.ndim == 1
        Z2 = Z[None, :] if vec else Z
        out = (Z2.reshape(Z2.shape[0], self.n_block, self.m) @ B).reshape(Z2.shape[0], self.p)
        return out[0] if vec else out

    def sqrt_right(self, Z):
        """Rows of ``Z`` times ``Sigma^{1/2}`` (equivalently ``Sigma^{1/2} z`` for a vector)."""
        return self._blockwise(Z, self.block_sqrt)

    def matvec(self, x):
        """``Sigma @ x`` for a vector or a ``(p, k)`` matrix."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            return self._blockwise(x.T, self.block).T
        return self._blockwise(x, self.block)

    def quad(self, b):
        """``b.T Sigma b``; columnwise for a ``(p, k)`` input."""
        b = np.asarray(b, dtype=float)
        return np.sum(b * self.matvec(b), axis=0)

    def eigenvalues(self):
        return np.sort(np.tile(self._block_eigs, self.n_block))

    def trace(self):
        return float(np.trace(self.block)) * self.n_block

    def dense(self):
        if self.n_block == 1:
            return self.block.copy()
        out = np.zeros((self.p, self.p))
        for k in range(self.n_block):
            sl = slice(k * self.m, (k + 1) * self.m)
            out[sl, sl] = self.block
        return out


def build_covariance(spec):
    """Dense ``p x p`` covariance described by ``spec``."""
    return Covariance.from_spec(spec).dense()


def as_covariance(sigma):
    """Coerce a spec, dense matrix or :class:`Covariance` to :class:`Covariance`."""
    if isinstance(sigma, Covariance):
        return sigma
    if isinstance(sigma, CovarianceSpec):
        return Covariance.from_spec(sigma)
    M = np.asarray(sigma, dtype=float)
    return Covariance.from_spec(CovarianceSpec("dense", M.shape[0], matrix=M))


def _trace_over_p(sigma):
    if isinstance(sigma, Covariance):
        return sigma.trace() / sigma.p
    if isinstance(sigma, CovarianceSpec):
        return as_covariance(sigma).trace() / sigma.p
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        return float(sigma)
    return float(np.trace(sigma)) / sigma.shape[0]


def calibrate_noise(target_h2, kappa, sigma_beta2, sigma):
    """Noise variance giving heritability ``target_h2``.

    Parameters
    ----------
    target_h2 : float
        Target heritability in ``[0, 1]``.
    kappa, sigma_beta2 : float
        Sparsity and per-effect signal scale.
    sigma : Covariance, CovarianceSpec, ndarray or float
        Population covariance, or directly ``tr(Sigma)/p``.

    Returns
    -------
    float
        ``kappa * sigma_beta2 * tr(Sigma)/p * (1 - h2) / h2``.
    """
    if not 0.0 <= target_h2 <= 1.0:
        raise ConfigError(f"target_h2 must lie in [0, 1], got {target_h2!r}")
    signal = kappa * sigma_beta2 * _trace_over_p(sigma)
    if target_h2 == 0.0:
        if signal > 0:
            raise ConfigError("target_h2 = 0 with positive signal requires infinite noise")
        return 1.0
    if target_h2 == 1.0:
        return 0.0
    return signal * (1.0 - target_h2) / target_h2


@dataclass(frozen=True)
class GenConfig:
    n: int
    p: int
    n_w: int
    kappa: float
    sigma_beta2: float
    target_h2: float
    cov: CovarianceSpec
    effect_dist: str = "gaussian"
    noise_dist: str = "gaussian"
    seed: int = 0
    max_entries: int = DEFAULT_MAX_ENTRIES

    def problems(self):
        out = []
        for name in ("n", "p", "n_w"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                out.append(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.kappa <= 1.0:
            out.append(f"kappa must lie in [0, 1], got {self.kappa!r}")
        if not self.sigma_beta2 > 0:
            out.append(f"sigma_beta2 must be positive, got {self.sigma_beta2!r}")
        if not 0.0 <= self.target_h2 <= 1.0:
            out.append(f"target_h2 must lie in [0, 1], got {self.target_h2!r}")
        elif self.target_h2 > 0 and self.kappa * self.sigma_beta2 <= 0:
            out.append("target_h2 > 0 requires kappa * sigma_beta2 > 0")
        elif self.target_h2 == 0 and self.kappa * self.sigma_beta2 > 0:
            out.append("target_h2 = 0 requires kappa = 0")
        if self.effect_dist not in EFFECT_DISTS:
            out.append(f"effect_dist must be one of {EFFECT_DISTS}, got {self.effect_dist!r}")
        if self.noise_dist not in NOISE_DISTS:
            out.append(f"noise_dist must be one of {NOISE_DISTS}, got {self.noise_dist!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            out.append(f"seed must be a non-negative integer, got {self.seed!r}")
        out.extend(self.cov.problems())
        if not out and self.cov.p != self.p:
            out.append(f"covariance.p={self.cov.p} does not match p={self.p}")
        if not out and (self.n + self.n_w) * self.p > self.max_entries:
            out.append(
                f"(n + n_w) * p = {(self.n + self.n_w) * self.p} exceeds max_entries={self.max_entries}"
            )
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class Dataset:
    """One synthetic cohort plus its reference panel."""

    X: np.ndarray
    y: np.ndarray
    W: np.ndarray
    beta: np.ndarray
    sigma_eps2: float
    noise: np.ndarray
    covariance: Covariance

    @property
    def phenotype_variance(self):
        """Population variance of ``y`` given the signal scale and noise."""
        return float(self.beta @ self.covariance.matvec(self.beta)) + self.sigma_eps2


def _check_rng(rng, seed):
    return np.random.default_rng(seed) if rng is None else rng


def sample_effects(cfg, rng=None):
    """Sparse effect vector with per-coordinate Bernoulli(kappa) support.

    Nonzero entries have mean zero and variance ``sigma_beta2 / p``.
    """
    rng = _check_rng(rng, cfg.seed)
    p = cfg.p
    u = rng.random(p)
    if cfg.effect_dist == "gaussian":
        vals = rng.standard_normal(p) * np.sqrt(cfg.sigma_beta2) / np.sqrt(p)
    elif cfg.effect_dist == "rademacher":
        vals = (2.0 * rng.integers(0, 2, p) - 1.0) * np.sqrt(cfg.sigma_beta2) / np.sqrt(p)
    else:
        raise ConfigError(f"unknown effect_dist {cfg.effect_dist!r}")
    return np.where(u < cfg.kappa, vals, 0.0)


def sample_rows(covariance, n, rng):
    """``n`` i.i.d. rows with covariance ``Sigma``: ``X0 @ Sigma^{1/2}``."""
    return covariance.sqrt_right(rng.standard_normal((n, covariance.p)))


def generate_dataset(cfg, rng=None, covariance=None):
    """Draw ``(X, y, W, beta)`` under the linear model ``y = X beta + eps``.

    Draw order is fixed (effects, X, W, noise) so one seed reproduces the
    whole dataset bit for bit.

    Parameters
    ----------
    cfg : GenConfig
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``cfg.seed``.
    covariance : Covariance, optional
        Prebuilt factorization of ``cfg.cov``; saves repeated eigensolves.
    """
    cfg.validate()
    rng = _check_rng(rng, cfg.seed)
    cov = covariance if covariance is not None else Covariance.from_spec(cfg.cov)
    sigma_eps2 = calibrate_noise(cfg.target_h2, cfg.kappa, cfg.sigma_beta2, cov)
    beta = sample_effects(cfg, rng)
    X = sample_rows(cov, cfg.n, rng)
    W = sample_rows(cov, cfg.n_w, rng)
    y = X @ beta + rng.standard_normal(cfg.n) * np.sqrt(sigma_eps2)
    # store the residual so that y - X @ beta reproduces it bit for bit
    noise = y - X @ beta
    return Dataset(X=X, y=y, W=W, beta=beta, sigma_eps2=sigma_eps2, noise=noise, covariance=cov)


@dataclass(frozen=True)
class MultiAncestryConfig:
    """K populations sharing ``(n, p, n_w)`` with correlated effects.

    ``sigma_cross[i][j]`` is the effect covariance scale between
    populations ``i`` and ``j``; population 0 is the target.
    """

    covs: tuple
    kappas: tuple
    h2s: tuple
    sigma_cross: np.ndarray = field(compare=False)
    n: int = 1000
    p: int = 1000
    n_w: int = 1000
    seed: int = 0
    max_entries: int = DEFAULT_MAX_ENTRIES

    @property
    def K(self):
        return len(self.covs)

    def problems(self):
        out = []
        K = self.K
        if K < 1:
            return ["at least one population is required"]
        if len(self.kappas) != K or len(self.h2s) != K:
            out.append(f"kappas and h2s must have one entry per population (K={K})")
        S = np.asarray(self.sigma_cross, dtype=float)
        if S.shape != (K, K):
            out.append(f"sigma_cross must be {K}x{K}, got {S.shape}")
        else:
            if np.max(np.abs(S - S.T)) > 1e-12:
                out.append("sigma_cross must be symmetric")
            elif np.linalg.eigvalsh(S)[0] < -1e-10 * max(1.0, np.max(np.abs(S))):
                out.append("sigma_cross must be positive semi-definite")
            if np.any(np.diag(S) <= 0):
                out.append("sigma_cross diagonal entries must be positive")
        for j, (k, h2) in enumerate(zip(self.kappas, self.h2s)):
            if not 0.0 <= k <= 1.0:
                out.append(f"populations[{j}].kappa must lie in [0, 1], got {k!r}")
            if not 0.0 < h2 <= 1.0:
                out.append(f"populations[{j}].h2 must lie in (0, 1], got {h2!r}")
            elif k == 0:
                out.append(f"populations[{j}].h2 > 0 requires kappa > 0")
        for j, spec in enumerate(self.covs):
            out.extend(f"populations[{j}].{m}" for m in spec.problems())
            if spec.p != self.p:
                out.append(f"populations[{j}].covariance.p={spec.p} does not match p={self.p}")
        for name in ("n", "p", "n_w"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                out.append(f"{name} must be a positive integer, got {v!r}")
        if not out and K * (self.n + self.n_w) * self.p > self.max_entries:
            out.append(f"K * (n + n_w) * p exceeds max_entries={self.max_entries}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


def sample_multi_effects(cfg, rng=None):
    """Correlated sparse effects for K populations, shape ``(K, p)``.

    Each coordinate draws one latent Gaussian K-vector with covariance
    ``sigma_cross / p``; population ``j`` keeps it with independent
    probability ``kappa_j``. With ``K = 1`` the draws coincide with
    :func:`sample_effects` for the same generator state.
    """
    rng = _check_rng(rng, cfg.seed)
    S = np.asarray(cfg.sigma_cross, dtype=float)
    K, p = cfg.K, cfg.p
    try:
        L = matrix_sqrt_psd(S)
    except ValidationError as exc:
        raise ConfigError(f"sigma_cross: {exc}") from exc
    u = rng.random((p, K))
    latent = (rng.standard_normal((p, K)) @ L) / np.sqrt(p)
    beta = np.where(u < np.asarray(cfg.kappas, dtype=float), latent, 0.0)
    return beta.T.copy()


def generate_multi_dataset(cfg, rng=None, covariances=None):
    """One :class:`Dataset` per population with correlated effects."""
    cfg.validate()
    rng = _check_rng(rng, cfg.seed)
    covs = covariances or [Covariance.from_spec(s) for s in cfg.covs]
    betas = sample_multi_effects(cfg, rng)
    S = np.asarray(cfg.sigma_cross, dtype=float)
    out = []
    for j in range(cfg.K):
        cov = covs[j]
        sigma_eps2 = calibrate_noise(cfg.h2s[j], cfg.kappas[j], S[j, j], cov)
        X = sample_rows(cov, cfg.n, rng)
        W = sample_rows(cov, cfg.n_w, rng)
        y = X @ betas[j] + rng.standard_normal(cfg.n) * np.sqrt(sigma_eps2)
        out.append(Dataset(X=X, y=y, W=W, beta=betas[j], sigma_eps2=sigma_eps2,
                           noise=y - X @ betas[j], covariance=cov))
    return out
