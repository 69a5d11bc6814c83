"""Summary statistics, reference panels and the train/validation resamplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model_gen import as_covariance, matrix_sqrt_psd

SPLIT_NOISE = ("gaussian", "rademacher")


@dataclass
class SummaryStats:
    """Marginal association vector ``s = X.T @ y`` and its metadata."""

    s: np.ndarray
    n: int
    y_norm2: float | None = None
    label: str = ""

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if self.s.ndim != 1 or self.s.size < 1:
            raise ValidationError(f"s must be a non-empty vector, got shape {self.s.shape}")
        if not np.all(np.isfinite(self.s)):
            raise ValidationError("s has non-finite entries")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        self.n = int(self.n)
        if self.y_norm2 is not None:
            self.y_norm2 = float(self.y_norm2)
            if not (np.isfinite(self.y_norm2) and self.y_norm2 > 0):
                raise ValidationError(f"y_norm2 must be positive, got {self.y_norm2!r}")

    @property
    def p(self):
        return self.s.size


def compute_summary(X, y, label=""):
    """``SummaryStats`` with ``s = X.T @ y`` and ``y_norm2 = ||y||^2``.

    A zero phenotype vector carries no information and is rejected.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"X {X.shape} and y {y.shape} do not conform")
    return SummaryStats(s=X.T @ y, n=X.shape[0], y_norm2=float(y @ y), label=label)


class LDReference:
    """Gram matrix ``G = W.T @ W`` of a reference panel with ``n_w`` rows.

    When built from the panel itself, a thin SVD of ``W`` is available and
    ridge solves over many penalties cost ``O(p * min(n_w, p))`` each.
    """

    def __init__(self, G, n_w, panel=None, sym_tol=1e-8):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValidationError(f"G must be square, got shape {G.shape}")
        if int(n_w) != n_w or n_w < 1:
            raise ValidationError(f"n_w must be a positive integer, got {n_w!r}")
        asym = float(np.max(np.abs(G - G.T))) if G.size else 0.0
        if asym > sym_tol * max(1.0, float(np.max(np.abs(G)))):
            raise ValidationError(f"G is not symmetric (max asymmetry {asym:.3g})")
        self.G = (G + G.T) / 2
        self.n_w = int(n_w)
        self._panel = panel
        self._spectral = None

    @classmethod
    def from_panel(cls, W):
        W = np.asarray(W, dtype=float)
        return cls(W.T @ W, W.shape[0], panel=W)

    @property
    def p(self):
        return self.G.shape[0]

    def spectral(self):
        """Cached ``(V, d2)`` with ``G = V.T @ diag(d2) @ V`` and orthonormal rows of ``V``.

        Rows of ``V`` span the range of ``G`` when built from a short panel;
        the complement is handled analytically by the solvers.
        """
        if self._spectral is None:
            if self._panel is not None and self._panel.shape[0] < self.p:
                _, d, Vt = np.linalg.svd(self._panel, full_matrices=False)
                self._spectral = (Vt, d**2)
            else:
                d2, V = np.linalg.eigh(self.G)
                if d2[0] < -1e-8 * max(1.0, d2[-1]):
                    raise ValidationError(f"G is not PSD (min eigenvalue {d2[0]:.3g})")
                self._spectral = (V.T, np.clip(d2, 0.0, None))
        return self._spectral

    def ridge_solve(self, b, theta):
        """``(G + theta * n_w * I)^{-1} b`` through the cached spectral factor."""
        V, d2 = self.spectral()
        lam = theta * self.n_w
        b = np.asarray(b, dtype=float)
        c = V @ b
        scaled = c / (d2 + lam) if b.ndim == 1 else c / (d2 + lam)[:, None]
        out = V.T @ scaled
        if V.shape[0] < self.p:
            out += (b - V.T @ c) / lam
        return out


@dataclass
class XtYCovariance:
    """Covariance of ``X.T @ y`` used to perturb the pseudo training split.

    ``mode`` is one of

    ``oracle``
        rank-one factor ``v = s - n Sigma beta``; realized as ``v * z``.
    ``population``
        exact conditional covariance given ``beta`` for Gaussian rows,
        ``n [(beta' Sigma beta + sigma_eps2) Sigma + Sigma beta beta' Sigma]``.
    ``plugin``
        ``c * M`` for a supplied PSD ``M`` (symmetric root), or
        ``c * W.T W / n_w`` realized through the panel as ``W.T g``.
    """

    mode: str
    v: np.ndarray | None = None
    covariance: object = None
    sigma_beta: np.ndarray | None = None
    y_var: float | None = None
    n: int | None = None
    scale: float | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)
    panel: np.ndarray | None = field(default=None, repr=False)
    _root: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self):
        if self.v is not None:
            return self.v.size
        if self.covariance is not None:
            return self.covariance.p
        if self.matrix is not None:
            return self.matrix.shape[0]
        return self.panel.shape[1]

    def sample(self, rng, noise="gaussian"):
        """One draw of ``Cov^{1/2} h`` with ``h`` standard (or Rademacher)."""
        if noise not in SPLIT_NOISE:
            raise ValidationError(f"noise must be one of {SPLIT_NOISE}, got {noise!r}")

        def draw(size):
            if noise == "gaussian":
                return rng.standard_normal(size)
            return 2.0 * rng.integers(0, 2, size) - 1.0

        if self.mode == "oracle":
            return self.v * draw(None)
        if self.mode == "population":
            h = draw(self.covariance.p)
            z = draw(None)
            return (np.sqrt(self.n * self.y_var) * self.covariance.sqrt_right(h)
                    + np.sqrt(self.n) * z * self.sigma_beta)
        if self.mode == "plugin":
            if self.panel is not None:
                g = draw(self.panel.shape[0])
                return np.sqrt(self.scale / self.panel.shape[0]) * (self.panel.T @ g)
            if self._root is None:
                self._root = matrix_sqrt_psd(self.matrix)
            return np.sqrt(self.scale) * (self._root @ draw(self.matrix.shape[0]))
        raise ValidationError(f"unknown covariance mode {self.mode!r}")


def _check_p(stats, p, what):
    if p != stats.p:
        raise ValidationError(f"{what} has dimension {p}, summary has p={stats.p}")


def oracle_xty_covariance(stats, sigma, beta):
    """Rank-one covariance factor ``v = s - n Sigma beta`` from the true effects."""
    cov = as_covariance(sigma)
    beta = np.asarray(beta, dtype=float)
    _check_p(stats, beta.size, "beta")
    _check_p(stats, cov.p, "Sigma")
    return XtYCovariance(mode="oracle", v=stats.s - stats.n * cov.matvec(beta))


def population_xty_covariance(stats, sigma, beta, sigma_eps2):
    """Exact covariance of ``X.T @ y`` given ``beta`` for Gaussian rows.

    Parameters
    ----------
    stats : SummaryStats
    sigma : Covariance, CovarianceSpec or ndarray
    beta : ndarray
    sigma_eps2 : float
        Residual noise variance.
    """
    cov = as_covariance(sigma)
    beta = np.asarray(beta, dtype=float)
    _check_p(stats, beta.size, "beta")
    _check_p(stats, cov.p, "Sigma")
    sb = cov.matvec(beta)
    return XtYCovariance(mode="population", covariance=cov, sigma_beta=sb,
                         y_var=float(beta @ sb) + float(sigma_eps2), n=stats.n)


def plugin_xty_covariance(stats, scale, matrix=None, panel=None):
    """Covariance ``scale * matrix`` or ``scale * W.T W / n_w`` with ``W = panel``.

    A typical choice without effect estimates approximates
    ``n * var(y) * Sigma`` by ``y_norm2 * G / n_w``: pass ``scale = y_norm2``
    with the panel, or ``scale = y_norm2 / n_w`` with ``matrix = G``.
    """
    if (matrix is None) == (panel is None):
        raise ValidationError("provide exactly one of matrix or panel")
    if not scale >= 0:
        raise ValidationError(f"scale must be non-negative, got {scale!r}")
    if matrix is not None:
        matrix = np.asarray(matrix, dtype=float)
        _check_p(stats, matrix.shape[0], "plugin matrix")
        matrix_sqrt_psd(matrix)
        return XtYCovariance(mode="plugin", scale=float(scale), matrix=matrix)
    panel = np.asarray(panel, dtype=float)
    _check_p(stats, panel.shape[1], "panel")
    return XtYCovariance(mode="plugin", scale=float(scale), panel=panel)


@dataclass
class PseudoSplit:
    s_train: np.ndarray
    s_valid: np.ndarray
    n_train: int
    n_valid: int
    y_norm2_valid: float | None = None


def split_sizes(n, ratio):
    """``(n_train, n_valid)`` with ``n_train = round(ratio * n)`` (ties to even)."""
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"ratio must lie in (0, 1), got {ratio!r}")
    if n < 2:
        raise ValidationError(f"need n >= 2 to split, got {n}")
    n_train = round(ratio * n)
    if not 1 <= n_train <= n - 1:
        raise ValidationError(f"ratio {ratio} leaves an empty side at n={n}")
    return n_train, n - n_train


def pseudo_split(stats, cov, ratio=0.8, rng=None, noise="gaussian"):
    """Resample ``(s_train, s_valid)`` from ``s`` alone.

    ``s_train = (n_tr/n) s + sqrt(n_tr n_v / n^2) Cov^{1/2} h`` and
    ``s_valid = s - s_train``, which matches the first two moments of an
    individual-level split.

    Parameters
    ----------
    stats : SummaryStats
    cov : XtYCovariance
    ratio : float
        Training fraction.
    rng : numpy.random.Generator
    noise : {"gaussian", "rademacher"}

    Returns
    -------
    PseudoSplit
        ``y_norm2_valid`` is the surrogate ``n_valid * y_norm2 / n`` when
        ``stats.y_norm2`` is known.
    """
    n = stats.n
    n_train, n_valid = split_sizes(n, ratio)
    if cov.p != stats.p:
        raise ValidationError(f"covariance has dimension {cov.p}, summary has p={stats.p}")
    rng = np.random.default_rng() if rng is None else rng
    perturb = cov.sample(rng, noise)
    s_train = (n_train / n) * stats.s + np.sqrt(n_train * n_valid / n**2) * perturb
    s_valid = stats.s - s_train
    yv = None if stats.y_norm2 is None else n_valid * stats.y_norm2 / n
    return PseudoSplit(s_train=s_train, s_valid=s_valid, n_train=n_train,
                       n_valid=n_valid, y_norm2_valid=yv)


@dataclass
class IndividualSplit:
    X_train: np.ndarray
    y_train: np.ndarray
    X_valid: np.ndarray
    y_valid: np.ndarray
    mask: np.ndarray

    @property
    def s_train(self):
        return self.X_train.T @ self.y_train

    @property
    def s_valid(self):
        return self.X_valid.T @ self.y_valid

    @property
    def n_train(self):
        return self.y_train.size

    @property
    def n_valid(self):
        return self.y_valid.size

    @property
    def y_norm2_valid(self):
        return float(self.y_valid @ self.y_valid)


def individual_split(X, y, ratio=0.8, rng=None, max_tries=1000):
    """Assign each row to training independently with probability ``ratio``.

    Draws are repeated until both sides are nonempty.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"X {X.shape} and y {y.shape} do not conform")
    n = y.size
    if n < 2:
        raise ValidationError(f"need n >= 2 to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"ratio must lie in (0, 1), got {ratio!r}")
    rng = np.random.default_rng() if rng is None else rng
    for _ in range(max_tries):
        mask = rng.random(n) < ratio
        if 0 < mask.sum() < n:
            break
    else:
        raise ValidationError(f"could not draw a nonempty split in {max_tries} tries")
    return IndividualSplit(X_train=X[mask], y_train=y[mask], X_valid=X[~mask],
                           y_valid=y[~mask], mask=mask)
