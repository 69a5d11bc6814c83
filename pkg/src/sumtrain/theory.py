"""Deterministic equivalents and closed-form asymptotic R^2.

Sample Gram matrices are replaced by deterministic proxies obtained from
the fixed point

    1/tau = 1 + (1/n) sum_i lambda_i / (tau lambda_i + theta),

and every prediction-accuracy formula is a ratio of traces of those proxies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NumericalError, ValidationError
from .model_gen import Covariance, calibrate_noise


def _spectrum(sigma_spectrum):
    lam = np.asarray(sigma_spectrum, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValidationError("spectrum must be a non-empty vector of eigenvalues")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("spectrum must be finite and positive")
    return lam


def _dense(sigma):
    if isinstance(sigma, Covariance):
        return sigma.dense()
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    return S


@dataclass(frozen=True)
class SpectralState:
    tau: float
    rho: float
    theta: float
    aspect_ratio: float
    sigma_spectrum: np.ndarray


def tau_residual(lam, n, theta, tau):
    """Scale-free residual ``tau (1 + (1/n) sum lambda/(tau lambda + theta)) - 1``."""
    return tau * (1.0 + np.sum(lam / (tau * lam + theta)) / n) - 1.0


def solve_tau(sigma_spectrum, n, theta, tol=1e-14, max_iter=10_000):
    """Solve the first-order fixed point for ``tau`` in ``(0, 1]``.

    Plain iteration of ``tau <- 1 / (1 + (1/n) sum lambda/(tau lambda + theta))``
    from ``tau = 1``; the step is halved whenever the residual grows.

    Raises
    ------
    NumericalError
        If the residual is not below ``1e-12`` after ``max_iter`` steps.
    """
    lam = _spectrum(sigma_spectrum)
    if not theta > 0:
        raise ValidationError(f"theta must be positive, got {theta!r}")
    if not n > 0:
        raise ValidationError(f"n must be positive, got {n!r}")
    tau = 1.0
    res = abs(tau_residual(lam, n, theta, tau))
    damping = 1.0
    for _ in range(max_iter):
        if res < tol:
            break
        target = 1.0 / (1.0 + np.sum(lam / (tau * lam + theta)) / n)
        new = tau + damping * (target - tau)
        new_res = abs(tau_residual(lam, n, theta, new))
        if new_res > res:
            damping *= 0.5
        if new == tau:
            break
        tau, res = new, new_res
    if not res < 1e-12:
        raise NumericalError(f"tau fixed point did not converge (residual {res:.3g})")
    return float(tau)


def _t_ratio(lam, n, theta, tau):
    return tau**2 * np.sum(lam**2 / (tau * lam + theta) ** 2) / n


def compute_rho(sigma_spectrum, n, theta, tau):
    """Second-order correction ``rho = T / (1 - T)``.

    ``T = (tau^2 / n) sum lambda^2 / (tau lambda + theta)^2`` must be below 1.
    """
    lam = _spectrum(sigma_spectrum)
    T = _t_ratio(lam, n, theta, tau)
    if not T < 1.0:
        raise NumericalError(f"second-order fixed point is unstable (T = {T:.6g} >= 1)")
    return float(T / (1.0 - T))


def spectral_state(sigma_spectrum, n, theta):
    lam = _spectrum(sigma_spectrum)
    tau = solve_tau(lam, n, theta)
    return SpectralState(tau=tau, rho=compute_rho(lam, n, theta, tau), theta=theta,
                         aspect_ratio=lam.size / n, sigma_spectrum=lam)


def tau_identity(gamma, theta):
    """Closed form of ``tau`` for ``Sigma = I`` and aspect ratio ``gamma = p / n``."""
    b = 1.0 - theta - gamma
    return (b + np.sqrt(b**2 + 4.0 * theta)) / 2.0


def rho_identity(gamma, theta):
    """Closed form of ``rho`` for ``Sigma = I``."""
    root = np.sqrt((1.0 - theta - gamma) ** 2 + 4.0 * theta)
    return (1.0 + gamma + theta - root) / (2.0 * root)


def ridge_r2_identity(h2, p, n_train, n_w, theta):
    """Asymptotic ridge R^2 for ``Sigma = I`` under unit phenotype variance.

    Equals ``h2 * n_train / ((1 + rho) * (p / h2 + n_train))`` with ``rho``
    evaluated at aspect ratio ``p / n_w``.
    """
    rho = rho_identity(p / n_w, theta)
    return h2 * n_train / ((1.0 + rho) * (p / h2 + n_train))


class RuleEquivalents:
    """Deterministic proxies ``D ~ n_w A`` and ``E ~ n_w^2 A' C A``.

    Two representations are supported. If ``sigma`` is a vector of
    eigenvalues, ``D`` and ``E`` are vectors holding their diagonals in the
    eigenbasis of ``Sigma``. Otherwise all three are dense ``p x p`` arrays.
    ``traces`` may be supplied when they were computed more cheaply than
    from the dense products.
    """

    def __init__(self, D, E, sigma, traces=None):
        self.D = np.asarray(D, dtype=float)
        self.E = np.asarray(E, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.spectral = self.sigma.ndim == 1
        if self.spectral != (self.D.ndim == 1) or self.spectral != (self.E.ndim == 1):
            raise ValidationError("D, E and sigma must all be spectral vectors or all dense matrices")
        if self.D.shape != self.sigma.shape or self.E.shape != self.sigma.shape:
            raise ValidationError("D, E and sigma must have matching shapes")
        self._traces = traces

    @property
    def p(self):
        return self.sigma.shape[0]

    def traces(self):
        """``(tr Sigma, tr D Sigma^2, tr E Sigma, tr E Sigma^2)``."""
        if self._traces is None:
            if self.spectral:
                lam = self.sigma
                self._traces = (lam.sum(), np.sum(self.D * lam**2),
                                np.sum(self.E * lam), np.sum(self.E * lam**2))
            else:
                S = self.sigma
                S2 = S @ S
                self._traces = (np.trace(S), np.sum(self.D * S2.T),
                                np.sum(self.E * S.T), np.sum(self.E * S2.T))
        return tuple(float(t) for t in self._traces)


def ridge_equivalents(sigma, n_w, theta, target=None):
    """Proxies for the ridge rule ``A = (G + theta n_w I)^{-1}``.

    ``D = (tau Sigma + theta I)^{-1}`` and
    ``E = (1 + rho) D Sigma D`` when the evaluation covariance equals Sigma.
    For a different target covariance ``C`` (cross-population use),
    ``E = D C D + k_C D Sigma D`` with
    ``k_C = (tau^2 / n_w) tr(Sigma D C D) / (1 - T)``.

    Parameters
    ----------
    sigma : ndarray or Covariance
        Eigenvalue vector (spectral result) or a full covariance (dense result).
    n_w : int
        Reference panel size.
    theta : float
    target : ndarray, optional
        Dense target covariance ``C``; requires dense ``sigma``.
    """
    sig = sigma.dense() if isinstance(sigma, Covariance) else np.asarray(sigma, dtype=float)
    if sig.ndim == 1:
        if target is not None:
            raise ValidationError("a target covariance requires a dense Sigma")
        lam = _spectrum(sig)
        st = spectral_state(lam, n_w, theta)
        d = 1.0 / (st.tau * lam + theta)
        return RuleEquivalents(d, (1.0 + st.rho) * d**2 * lam, lam)
    S = _dense(sig)
    lam, U = np.linalg.eigh((S + S.T) / 2)
    st = spectral_state(lam, n_w, theta)
    d = 1.0 / (st.tau * lam + theta)
    D = (U * d) @ U.T
    if target is None:
        E = (U * ((1.0 + st.rho) * d**2 * lam)) @ U.T
    else:
        C = _dense(target)
        if C.shape != S.shape:
            raise ValidationError(f"target {C.shape} does not match Sigma {S.shape}")
        DSD = (U * (d**2 * lam)) @ U.T
        DCD = D @ C @ D
        T = _t_ratio(lam, n_w, theta, st.tau)
        k_c = st.tau**2 * np.sum(S * DCD.T) / n_w / (1.0 - T)
        E = DCD + k_c * DSD
    return RuleEquivalents(D, (E + E.T) / 2, S)


def threshold_equivalents(indices, sigma, target=None):
    """Proxies for the selector ``A(Theta)``: ``D = A``, ``E = A C A``.

    Traces only touch rows and columns in ``Theta``.
    """
    S = _dense(sigma)
    p = S.shape[0]
    idx = np.unique(np.asarray(indices, dtype=int))
    if idx.size == 0:
        raise ValidationError("index set is empty")
    if idx[0] < 0 or idx[-1] >= p:
        raise ValidationError(f"index set has entries outside [0, {p})")
    C = S if target is None else _dense(target)
    D = np.zeros((p, p))
    D[idx, idx] = 1.0
    E = np.zeros((p, p))
    C_sub = C[np.ix_(idx, idx)]
    E[np.ix_(idx, idx)] = C_sub
    S_rows = S[idx]
    S2_sub = S_rows @ S_rows.T
    traces = (np.trace(S), np.sum(S_rows**2), np.sum(C_sub * S[np.ix_(idx, idx)].T),
              np.sum(C_sub * S2_sub.T))
    return RuleEquivalents(D, E, S, traces=traces)


@dataclass(frozen=True)
class TheoryInputs:
    """Scalars entering the asymptotic R^2.

    ``prefactor = None`` selects unit phenotype variance, i.e.
    ``1 / (kappa sigma_beta2 tr(Sigma)/p + sigma_eps2)``.
    """

    n_train: int
    n_w: int
    p: int
    kappa: float
    sigma_beta2: float
    h2: float
    n_valid: int | None = None
    sigma_spectrum: np.ndarray | None = None
    prefactor: float | None = None

    def __post_init__(self):
        if not 0.0 < self.h2 <= 1.0:
            raise ValidationError(f"h2 must lie in (0, 1], got {self.h2!r}")
        for name in ("n_train", "n_w", "p"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")


def _prefactor(inp, trace_sigma):
    if inp.prefactor is not None:
        return inp.prefactor
    signal = inp.kappa * inp.sigma_beta2 * trace_sigma / inp.p
    return 1.0 / (signal + calibrate_noise(inp.h2, inp.kappa, inp.sigma_beta2, trace_sigma / inp.p))


def theory_r2_general(inp, eq):
    """Asymptotic R^2 of any linear rule with proxies ``eq``.

    ``prefactor * (n_tr/p) kappa sigma_beta2 [tr D Sigma^2]^2 /
    (tr Sigma tr E Sigma / h2 + n_tr tr E Sigma^2)``.
    """
    if eq.p != inp.p:
        raise ValidationError(f"equivalents have p={eq.p}, inputs have p={inp.p}")
    tr_s, tr_ds2, tr_es, tr_es2 = eq.traces()
    den = tr_s * tr_es / inp.h2 + inp.n_train * tr_es2
    if not den > 0:
        raise DegenerateError(f"theory denominator is {den!r}")
    num = inp.n_train / inp.p * inp.kappa * inp.sigma_beta2 * tr_ds2**2
    return float(_prefactor(inp, tr_s) * num / den)


def theory_r2_ridge(inp, theta):
    """Asymptotic R^2 of the reference-panel ridge rule at penalty ``theta``."""
    if inp.sigma_spectrum is None:
        raise ValidationError("sigma_spectrum is required for ridge theory")
    return theory_r2_general(inp, ridge_equivalents(inp.sigma_spectrum, inp.n_w, theta))


def ensemble_equivalents(components):
    """Combine ``[(w_j, eq_j)]`` into proxies for ``sum_j w_j A_j``.

    ``D = sum w_j D_j`` and
    ``E = sum_{i != j} w_i w_j D_i Sigma D_j + sum_j w_j^2 E_j``.
    """
    if not components:
        raise ValidationError("ensemble needs at least one component")
    first = components[0][1]
    for _, eq in components:
        if eq.spectral != first.spectral or eq.sigma.shape != first.sigma.shape:
            raise ValidationError("ensemble components must share Sigma and representation")
    S = first.sigma
    D = sum(w * eq.D for w, eq in components)
    E = sum(w**2 * eq.E for w, eq in components)
    for i, (wi, ei) in enumerate(components):
        for j, (wj, ej) in enumerate(components):
            if i == j:
                continue
            if first.spectral:
                E = E + wi * wj * ei.D * S * ej.D
            else:
                E = E + wi * wj * (ei.D @ S @ ej.D)
    if not first.spectral:
        E = (E + E.T) / 2
    return RuleEquivalents(D, E, S)


def theory_r2_ensemble(inp, components):
    return theory_r2_general(inp, ensemble_equivalents(components))


@dataclass
class PopulationTheory:
    """One population's inputs for the multi-ancestry formula.

    ``eq`` holds proxies of this population's rule, with ``E`` taken
    against the target population's covariance.
    """

    kappa: float
    h2: float
    sigma: np.ndarray
    eq: RuleEquivalents


@dataclass(frozen=True)
class MultiTheory:
    r2: float
    lambda1: float
    lambda2: float


def _tr(*mats):
    out = mats[0]
    for M in mats[1:-1]:
        out = out @ M
    return float(np.sum(out * mats[-1].T))


def theory_r2_multi(pops, sigma_cross, weights, n_train, n_w, prefactor=None):
    """Asymptotic R^2 on population 0 of ``sum_j w_j A_j s_j``.

    Returns the first- and second-order sums alongside the ratio
    ``prefactor * lambda1^2 / lambda2``. Unit phenotype variance of the
    target population is assumed when ``prefactor`` is ``None``.
    """
    K = len(pops)
    S = np.asarray(sigma_cross, dtype=float)
    if S.shape != (K, K) or len(weights) != K:
        raise ValidationError(f"sigma_cross and weights must match K={K}")
    sig = [_dense(pp.sigma) for pp in pops]
    p = sig[0].shape[0]
    S1 = sig[0]
    r = n_train / n_w
    k = [pp.kappa for pp in pops]
    D = [pp.eq.D for pp in pops]
    lam1 = weights[0] * r * k[0] * S[0, 0] / p * _tr(D[0], S1 @ S1)
    for j in range(1, K):
        lam1 += weights[j] * r * k[0] * k[j] * S[0, j] / p * _tr(S1, D[j], sig[j])
    lam2 = 0.0
    for i in range(K):
        for j in range(i + 1, K):
            lam2 += (2 * weights[i] * weights[j] * r**2 * k[i] * k[j] * S[i, j] / p
                     * _tr(sig[i], D[i], S1, D[j], sig[j]))
    for j, pp in enumerate(pops):
        E = pp.eq.E
        c = k[j] * S[j, j] / p
        lam2 += weights[j] ** 2 * (
            n_train / n_w**2 * c / pp.h2 * np.trace(sig[j]) * _tr(E, sig[j])
            + r**2 * c * _tr(E, sig[j] @ sig[j])
        )
    if not lam2 > 0:
        raise DegenerateError(f"second-order term is {lam2!r}")
    if prefactor is None:
        signal = k[0] * S[0, 0] * np.trace(S1) / p
        prefactor = pops[0].h2 / signal
    return MultiTheory(r2=float(prefactor * lam1**2 / lam2), lambda1=float(lam1), lambda2=float(lam2))


def two_pop_terms(pops, sigma_cross, n_train):
    """The five scalars ``(N1, N2, D1, D2, D3)`` of the two-population objective.

    The objective in ``w1`` (with ``w2 = 1 - w1``) is
    ``(w1 N1 + w2 N2)^2 / (w1^2 D1 + w2^2 D2 + 2 w1 w2 D3)``.
    """
    if len(pops) != 2:
        raise ValidationError("two_pop_terms needs exactly two populations")
    S = np.asarray(sigma_cross, dtype=float)
    P1, P2 = pops
    S1, S2 = _dense(P1.sigma), _dense(P2.sigma)
    p = S1.shape[0]
    c1 = P1.kappa * S[0, 0] / p
    c2 = P2.kappa * S[1, 1] / p
    c12 = P1.kappa * P2.kappa * S[0, 1] / p
    N1 = c1 * np.sum(P1.eq.D * (S1 @ S1).T)
    N2 = c12 * np.sum((S1 @ P2.eq.D) * S2.T)
    D1 = (c1 / P1.h2 * np.trace(S1) * np.sum(P1.eq.E * S1.T) / n_train
          + c1 * np.sum(P1.eq.E * (S1 @ S1).T))
    D2 = (c2 / P2.h2 * np.trace(S2) * np.sum(P2.eq.E * S2.T) / n_train
          + c2 * np.sum(P2.eq.E * (S2 @ S2).T))
    D3 = c12 * np.trace(S1 @ P1.eq.D @ S1 @ P2.eq.D @ S2)
    return tuple(float(x) for x in (N1, N2, D1, D2, D3))


def two_pop_objective(w1, N1, N2, D1, D2, D3):
    """Two-population R^2 up to the prefactor, as a function of ``w1``."""
    w1 = np.asarray(w1, dtype=float)
    w2 = 1.0 - w1
    return (w1 * N1 + w2 * N2) ** 2 / (w1**2 * D1 + w2**2 * D2 + 2 * w1 * w2 * D3)


def trace_second_moment_rhs(C, sigma, n, p=None):
    """Deterministic limit of ``(1/p) tr(C Sigma_hat^2)`` for ``Sigma_hat = X'X/n``.

    Returns ``(1/n) tr(Sigma) (1/p) tr(C Sigma) + (1/p) tr(C Sigma^2)``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    S = _dense(sigma)
    if C.shape != S.shape:
        raise ValidationError(f"C {C.shape} and Sigma {S.shape} do not conform")
    p = S.shape[0] if p is None else p
    CS = C @ S
    return float(np.trace(S) / n * np.trace(CS) / p + np.sum(CS * S.T) / p)
