"""Prediction-accuracy criteria and hyperparameter selection.

Every R^2 here is a squared correlation between a prediction and the
phenotype. Undefined values (zero prediction variance) are returned as NaN
and rank below every finite value when tuning.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateError, ValidationError
from .estimators import marginal_ranking
from .model_gen import Covariance

DEFAULT_THETA_GRID = tuple(np.logspace(-3, 2, 25))
FLAT_QUANTILE = 0.99


def _quad(sigma, B):
    """Row-wise ``b' Sigma b`` for ``B`` of shape ``(p,)`` or ``(k, p)``."""
    if isinstance(sigma, Covariance):
        return sigma.quad(B.T)
    S = np.asarray(sigma, dtype=float)
    return np.einsum("...i,ij,...j->...", B, S, B)


@dataclass
class R2Inputs:
    """Denominator ingredients: covariance for ``||beta||_Sigma``, validation size, ``||y_v||^2``."""

    sigma: object
    n_valid: int
    y_norm2_valid: float

    def __post_init__(self):
        if not self.y_norm2_valid > 0:
            raise ValidationError(f"y_norm2_valid must be positive, got {self.y_norm2_valid!r}")
        if self.n_valid < 1:
            raise ValidationError(f"n_valid must be positive, got {self.n_valid!r}")


def r2_summary(s_valid, beta, inp):
    """``<s_v, beta>^2 / (||y_v||^2 * n_v * beta' Sigma beta)``.

    ``beta`` may be a single vector or a ``(k, p)`` stack; the result is then
    a length-``k`` curve. Entries with ``beta' Sigma beta = 0`` are NaN.
    """
    B = np.asarray(beta, dtype=float)
    num = (B @ s_valid) ** 2
    den = inp.y_norm2_valid * inp.n_valid * _quad(inp.sigma, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return float(out) if out.ndim == 0 else out


def r2_pseudo(split, beta, inp=None, sigma=None):
    """R^2 of ``beta`` on a pseudo validation vector.

    Without ``inp``, uses ``sigma`` with the split's surrogate ``||y_v||^2``.
    """
    if inp is None:
        if sigma is None or split.y_norm2_valid is None:
            raise ValidationError("r2_pseudo needs R2Inputs, or sigma plus a split with y_norm2")
        inp = R2Inputs(sigma, split.n_valid, split.y_norm2_valid)
    return r2_summary(split.s_valid, beta, inp)


def r2_individual(split, beta, sigma=None, inp=None):
    """R^2 of ``beta`` on the validation rows of an individual-level split."""
    if inp is None:
        inp = R2Inputs(sigma, split.n_valid, split.y_norm2_valid)
    return r2_summary(split.s_valid, beta, inp)


def r2_holdout(X_test, y_test, beta):
    """Squared Pearson correlation between ``X_test @ beta`` and ``y_test``.

    ``beta`` may be a ``(k, p)`` stack. Zero-variance predictions give NaN.
    """
    X = np.asarray(X_test, dtype=float)
    y = np.asarray(y_test, dtype=float)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"test set X {X.shape} and y {y.shape} are empty or mismatched")
    B = np.asarray(beta, dtype=float)
    pred = X @ B.T
    pred = pred - pred.mean(axis=0)
    yc = y - y.mean()
    num = (yc @ pred) ** 2
    den = (yc @ yc) * np.sum(pred**2, axis=0)
    tiny = 1e-14 * (yc @ yc) * np.max(np.sum(pred**2, axis=0), initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > max(tiny, 0.0), num / np.where(den > 0, den, 1.0), np.nan)
    return float(out) if out.ndim == 0 else out


def best_index(curve):
    """Index of the maximum with NaN ranked lowest and ties to the first."""
    c = np.asarray(curve, dtype=float)
    if c.size == 0 or np.all(np.isnan(c)):
        raise DegenerateError("every grid point gave a degenerate R^2")
    return int(np.argmax(np.where(np.isnan(c), -np.inf, c)))


@dataclass
class TuneResult:
    grid: list
    r2_curve: np.ndarray
    best_index: int
    best_value: float
    flat: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def best(self):
        return self.grid[self.best_index]


def _result(grid, curve, n_valid=None, **extra):
    i = best_index(curve)
    best = float(curve[i])
    flat = False
    if n_valid is not None:
        # a signal-free predictor has R^2 ~ chi2_1 / n_valid
        flat = best * n_valid < stats.chi2.ppf(FLAT_QUANTILE, 1)
    return TuneResult(grid=list(grid), r2_curve=np.asarray(curve, dtype=float),
                      best_index=i, best_value=best, flat=bool(flat), extra=extra)


@dataclass
class TuningContext:
    """One shared train/validation pair plus what is needed to score fits.

    ``mode`` records which criterion the context implements (``pseudo`` or
    ``individual``); scoring is identical once ``s_valid`` and the
    denominator inputs are fixed.
    """

    s_train: np.ndarray
    s_valid: np.ndarray
    inputs: R2Inputs
    ld: object = None
    mode: str = "pseudo"

    @classmethod
    def from_pseudo(cls, split, ld, sigma, y_norm2_valid=None):
        yv = split.y_norm2_valid if y_norm2_valid is None else y_norm2_valid
        return cls(split.s_train, split.s_valid, R2Inputs(sigma, split.n_valid, yv), ld, "pseudo")

    @classmethod
    def from_individual(cls, split, ld, sigma):
        return cls(split.s_train, split.s_valid,
                   R2Inputs(sigma, split.n_valid, split.y_norm2_valid), ld, "individual")

    def score(self, betas):
        return r2_summary(self.s_valid, betas, self.inputs)


def tune_theta(grid, context):
    """Select the ridge penalty maximizing R^2 on the context's validation vector."""
    grid = list(grid)
    if not grid:
        raise ValidationError("theta grid is empty")
    if any(not t > 0 for t in grid):
        raise ValidationError("theta grid values must be positive")
    if context.ld is None:
        raise ValidationError("ridge tuning needs an LD reference")
    betas = np.stack([context.ld.ridge_solve(context.s_train, t) for t in grid])
    return _result(grid, context.score(betas), betas=betas)


def nested_threshold_fits(s_train, k_list, ld=None):
    """``(len(k_list), p)`` fits keeping the top-k standardized marginals."""
    s = np.asarray(s_train, dtype=float)
    order = marginal_ranking(s, ld)
    out = np.zeros((len(k_list), s.size))
    for row, k in enumerate(k_list):
        if not 1 <= k <= s.size:
            raise ValidationError(f"k must lie in [1, {s.size}], got {k}")
        idx = order[:k]
        out[row, idx] = s[idx]
    return out


def tune_threshold(k_list, context):
    """Select the top-k set maximizing R^2; flags curves indistinguishable from noise."""
    k_list = list(k_list)
    if not k_list:
        raise ValidationError("candidate list is empty")
    betas = nested_threshold_fits(context.s_train, k_list, context.ld)
    return _result(k_list, context.score(betas), n_valid=context.inputs.n_valid, betas=betas)


def simplex_grid(k, step=0.05):
    """Weight vectors on the unit simplex with spacing ``step``, first weight ascending."""
    m = round(1.0 / step)
    if not np.isclose(m * step, 1.0):
        raise ValidationError(f"step {step} does not divide 1")
    pts = [c for c in itertools.product(range(m + 1), repeat=k) if sum(c) == m]
    return np.array(pts, dtype=float) / m


def tune_ensemble(component_fits, context, step=0.05):
    """Tune each component, then search simplex weights of the tuned fits.

    Parameters
    ----------
    component_fits : list of ndarray
        For component ``j``, a ``(g_j, p)`` stack of fits over its own grid.
    context : TuningContext
    step : float
        Simplex spacing.

    Returns
    -------
    TuneResult
        ``grid`` holds simplex weights on unit-``Sigma``-norm components;
        ``extra`` has the per-component choices, the effective weights on
        the raw fits, and the combined coefficient vector.
    """
    if not component_fits:
        raise ValidationError("ensemble search space is empty")
    chosen, picks = [], []
    for fits in component_fits:
        fits = np.atleast_2d(np.asarray(fits, dtype=float))
        i = best_index(context.score(fits))
        picks.append(i)
        chosen.append(fits[i])
    chosen = np.stack(chosen)
    norms = np.sqrt(_quad(context.inputs.sigma, chosen))
    if np.any(norms <= 0):
        raise DegenerateError("a tuned ensemble component is identically zero")
    unit = chosen / norms[:, None]
    weights = simplex_grid(len(component_fits), step)
    curve = context.score(weights @ unit)
    res = _result([tuple(w) for w in weights], curve)
    w = weights[res.best_index]
    res.extra = dict(component_index=picks, effective_weights=w / norms,
                     beta=w @ unit, components=chosen)
    return res


def tune_weights(w1_grid, beta1, beta2, context):
    """Search ``w1`` for ``w1 * beta1 + (1 - w1) * beta2`` on the context."""
    w1 = np.asarray(list(w1_grid), dtype=float)
    if w1.size == 0:
        raise ValidationError("weight grid is empty")
    betas = w1[:, None] * beta1[None, :] + (1.0 - w1)[:, None] * beta2[None, :]
    return _result(list(w1), context.score(betas))


def optimal_two_pop_weights(N1, N2, D1, D2, D3):
    """Closed-form maximizer of the two-population objective.

    ``w1 = min(1, (D2 N1 - D3 N2) / (D2 N1 - D3 N1 + D1 N2 - D3 N2))`` and
    ``w2 = max(0, 1 - w1)``.
    """
    if not (D1 > 0 and D2 > 0):
        raise ValidationError(f"D1 and D2 must be positive, got {D1!r}, {D2!r}")
    den = D2 * N1 - D3 * N1 + D1 * N2 - D3 * N2
    if den == 0 or not np.isfinite(den):
        raise DegenerateError(
            f"weight denominator is {den!r} (N1={N1}, N2={N2}, D1={D1}, D2={D2}, D3={D3})"
        )
    w1 = min(1.0, (D2 * N1 - D3 * N2) / den)
    return w1, max(0.0, 1.0 - w1)
