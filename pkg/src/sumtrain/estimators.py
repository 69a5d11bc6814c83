"""Linear estimators ``beta_hat = A(G, Theta) s`` built from summary data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError
from .summary import LDReference

RULE_VARIANTS = ("ridge", "threshold", "custom")


def _vector(s, p=None, name="s_train"):
    s = np.asarray(s, dtype=float)
    if s.ndim not in (1, 2):
        raise ValidationError(f"{name} must be a vector or a (p, k) matrix, got shape {s.shape}")
    if p is not None and s.shape[0] != p:
        raise ValidationError(f"{name} has length {s.shape[0]}, expected {p}")
    return s


def _finite(beta, what):
    if not np.all(np.isfinite(beta)):
        raise NumericalError(f"{what} produced non-finite coefficients")
    return beta


def ridge_fit(s_train, ld, theta):
    """Solve ``(G + theta * n_w * I) beta = s_train``.

    Uses a Cholesky factorization; if that fails (``G`` numerically
    indefinite), retries with the penalty raised by ``1e-10 * n_w``.

    Parameters
    ----------
    s_train : ndarray, shape (p,) or (p, k)
    ld : LDReference
    theta : float
        Positive penalty, in units of the panel size.
    """
    if not theta > 0:
        raise ValidationError(f"theta must be positive, got {theta!r}")
    s = _vector(s_train, ld.p)
    lam = theta * ld.n_w
    M = ld.G + lam * np.eye(ld.p)
    try:
        factor = linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError:
        M = ld.G + (lam + 1e-10 * ld.n_w) * np.eye(ld.p)
        try:
            factor = linalg.cho_factor(M, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"ridge system is not positive definite at theta={theta}") from exc
    return _finite(linalg.cho_solve(factor, s, check_finite=False), "ridge solve")


def ridge_path(s_train, ld, thetas):
    """Ridge solutions for every penalty in ``thetas``, shape ``(len(thetas), p)``.

    Shares one spectral factorization of the reference panel across the grid.
    """
    s = _vector(s_train, ld.p)
    out = np.empty((len(thetas), ld.p))
    for i, theta in enumerate(thetas):
        if not theta > 0:
            raise ValidationError(f"theta must be positive, got {theta!r}")
        out[i] = ld.ridge_solve(s, theta)
    return _finite(out, "ridge path")


def ridge_matrix(ld, theta):
    """Explicit ``(G + theta n_w I)^{-1}``; for cross-checks and small ``p`` only."""
    return linalg.inv(ld.G + theta * ld.n_w * np.eye(ld.p))


def _indices(idx, p):
    idx = np.unique(np.asarray(idx, dtype=int))
    if idx.size == 0:
        raise ValidationError("index set is empty")
    if idx[0] < 0 or idx[-1] >= p:
        raise ValidationError(f"index set has entries outside [0, {p})")
    return idx


def threshold_fit(s_train, indices):
    """Keep ``s_train`` on ``indices`` and zero it elsewhere."""
    s = _vector(s_train)
    idx = _indices(indices, s.shape[0])
    beta = np.zeros_like(s)
    beta[idx] = s[idx]
    return beta


def threshold_matrix(indices, p):
    """Diagonal selector with ones on ``indices``."""
    A = np.zeros((p, p))
    idx = _indices(indices, p)
    A[idx, idx] = 1.0
    return A


def marginal_ranking(s_train, ld=None):
    """Coordinates ordered by decreasing standardized marginal association.

    The score is ``|s_i| / sqrt(G_ii)`` when a reference is supplied, else
    ``|s_i|``. Ties keep the lower index first.
    """
    s = np.abs(_vector(s_train))
    if ld is not None:
        diag = np.diag(ld.G)
        s = np.where(diag > 0, s / np.sqrt(np.where(diag > 0, diag, 1.0)), 0.0)
    return np.argsort(-s, kind="stable")


def top_k_indices(s_train, k, ld=None):
    s = _vector(s_train)
    if not 1 <= k <= s.shape[0]:
        raise ValidationError(f"k must lie in [1, {s.shape[0]}], got {k}")
    return np.sort(marginal_ranking(s, ld)[:k])


def custom_fit(A, s_train):
    A = np.asarray(A, dtype=float)
    s = _vector(s_train)
    if A.ndim != 2 or A.shape[1] != s.shape[0]:
        raise ValidationError(f"A {A.shape} does not conform with s_train {s.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("A has non-finite entries")
    return A @ s


@dataclass
class LinearRule:
    """One member of the ``A(G, Theta)`` family.

    Parameters
    ----------
    variant : {"ridge", "threshold", "custom"}
    theta : float, optional
        Ridge penalty.
    indices : array_like, optional
        Fixed threshold set.
    top_k : int, optional
        Threshold set chosen at fit time as the ``top_k`` strongest marginals.
    matrix : ndarray, optional
        Explicit ``A`` for the custom variant.
    reference : LDReference, optional
        Required for ridge; used for ranking in threshold rules.
    """

    variant: str
    theta: float | None = None
    indices: np.ndarray | None = None
    top_k: int | None = None
    matrix: np.ndarray | None = None
    reference: LDReference | None = None

    def __post_init__(self):
        if self.variant not in RULE_VARIANTS:
            raise ValidationError(f"variant must be one of {RULE_VARIANTS}, got {self.variant!r}")
        if self.variant == "ridge":
            if self.reference is None:
                raise ValidationError("ridge rule requires an LD reference")
            if self.theta is None or not self.theta > 0:
                raise ValidationError(f"ridge rule requires theta > 0, got {self.theta!r}")
        elif self.variant == "threshold":
            if (self.indices is None) == (self.top_k is None):
                raise ValidationError("threshold rule takes exactly one of indices or top_k")
        elif self.matrix is None:
            raise ValidationError("custom rule requires a matrix")

    def selected(self, s_train):
        if self.indices is not None:
            return _indices(self.indices, _vector(s_train).shape[0])
        return top_k_indices(s_train, self.top_k, self.reference)

    def fit(self, s_train):
        if self.variant == "ridge":
            return ridge_fit(s_train, self.reference, self.theta)
        if self.variant == "threshold":
            return threshold_fit(s_train, self.selected(s_train))
        return custom_fit(self.matrix, s_train)

    def as_matrix(self, p, s_train=None):
        """Explicit ``A``; a top-k rule needs ``s_train`` to fix its set."""
        if self.variant == "ridge":
            return ridge_matrix(self.reference, self.theta)
        if self.variant == "threshold":
            if self.indices is None and s_train is None:
                raise ValidationError("top-k threshold rule needs s_train to form A")
            idx = self.indices if self.indices is not None else self.selected(s_train)
            return threshold_matrix(idx, p)
        return np.asarray(self.matrix, dtype=float)


@dataclass
class EnsembleRule:
    """Weighted combination ``sum_j w_j A_j`` trained on one shared split."""

    components: list

    def __post_init__(self):
        if not self.components:
            raise ValidationError("ensemble needs at least one component")
        for w, _ in self.components:
            if not np.isfinite(w):
                raise ValidationError(f"ensemble weight {w!r} is not finite")

    @property
    def k(self):
        return len(self.components)


def ensemble_fit(rule, s_train):
    s = _vector(s_train)
    beta = np.zeros_like(s)
    for w, component in rule.components:
        fit = component.fit(s)
        if fit.shape != s.shape:
            raise ValidationError(f"component output {fit.shape} does not match s_train {s.shape}")
        beta = beta + w * fit
    return beta


@dataclass
class MultiAncestryRule:
    """``sum_j w_j A_j s_j`` with one rule (and LD panel) per population."""

    components: list

    def __post_init__(self):
        if not self.components:
            raise ValidationError("multi-ancestry rule needs at least one population")
        for w, _ in self.components:
            if not np.isfinite(w):
                raise ValidationError(f"population weight {w!r} is not finite")

    @property
    def K(self):
        return len(self.components)


def multi_fit(rule, s_trains):
    """Combine per-population fits; ``s_trains[j]`` belongs to population ``j``."""
    if len(s_trains) != rule.K:
        raise ValidationError(f"got {len(s_trains)} training vectors for K={rule.K} populations")
    p = _vector(s_trains[0]).shape[0]
    beta = np.zeros(p)
    for (w, component), s in zip(rule.components, s_trains):
        beta = beta + w * component.fit(_vector(s, p))
    return beta
