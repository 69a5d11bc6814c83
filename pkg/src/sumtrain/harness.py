"""Replicated simulation experiments comparing resampled, individual-level and theoretical R^2."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, SumtrainError
from .evaluation import (
    DEFAULT_THETA_GRID,
    TuningContext,
    best_index,
    nested_threshold_fits,
    optimal_two_pop_weights,
    r2_holdout,
    tune_ensemble,
    tune_weights,
)
from .model_gen import (
    Covariance,
    GenConfig,
    MultiAncestryConfig,
    generate_dataset,
    generate_multi_dataset,
    sample_rows,
    substream,
)
from .summary import (
    LDReference,
    compute_summary,
    individual_split,
    oracle_xty_covariance,
    plugin_xty_covariance,
    population_xty_covariance,
    pseudo_split,
    split_sizes,
)
from .theory import (
    PopulationTheory,
    TheoryInputs,
    ridge_equivalents,
    theory_r2_ridge,
    two_pop_terms,
)

FAMILIES = ("ridge", "threshold")
MODES = ("pseudo", "individual", "theory", "holdout")
COVARIANCE_MODES = ("population", "oracle", "plugin")
# substream ids within one replicate
DATA, PSEUDO, INDIVIDUAL, TEST = 0, 1, 2, 3


def worker_count(n_tasks):
    """Workers for ``n_tasks`` replicates, capped by ``SUMTRAIN_THREADS``."""
    raw = os.environ.get("SUMTRAIN_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise ConfigError(f"SUMTRAIN_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, n_tasks))


def map_replicates(fn, n, seed):
    """Run ``fn(r)`` for ``r in range(n)``; results come back in replicate order."""

    def guarded(r):
        try:
            return fn(r)
        except SumtrainError as exc:
            raise type(exc)(f"replicate {r} (seed {seed}): {exc}") from exc

    workers = worker_count(n)
    if workers == 1:
        return [guarded(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(n)))


def mean_se(values, axis=0):
    """Mean and standard error along ``axis``, ignoring NaN entries."""
    v = np.asarray(values, dtype=float)
    count = np.sum(~np.isnan(v), axis=axis)
    mean = np.nanmean(v, axis=axis) if v.size else np.nan
    if v.shape[axis] > 1:
        sd = np.nanstd(v, axis=axis, ddof=1)
        se = sd / np.sqrt(np.maximum(count, 1))
    else:
        se = np.zeros_like(mean)
    return mean, np.nan_to_num(se), count


@dataclass
class ExperimentConfig:
    """A replicated single-population experiment.

    ``grid`` holds ridge penalties or top-k sizes depending on ``family``.
    ``covariance_mode`` picks how the pseudo split perturbs ``s``.
    ``n_test`` rows are drawn per replicate for hold-out evaluation.
    """

    gen: GenConfig
    family: str = "ridge"
    grid: tuple = DEFAULT_THETA_GRID
    ratio: float = 0.8
    replicates: int = 50
    modes: tuple = ("pseudo", "individual", "theory")
    seed: int = 0
    covariance_mode: str = "population"
    split_noise: str = "gaussian"
    n_test: int = 0
    setting: str = "default"
    output: str | None = None

    def problems(self):
        out = list(self.gen.problems())
        if self.family not in FAMILIES:
            out.append(f"estimator.family must be one of {FAMILIES}, got {self.family!r}")
        if not self.grid:
            out.append("estimator.grid must be nonempty")
        elif self.family == "ridge" and any(not t > 0 for t in self.grid):
            out.append("estimator.grid values must be positive for ridge")
        elif self.family == "threshold" and any(
            int(k) != k or not 1 <= k <= self.gen.p for k in self.grid
        ):
            out.append(f"estimator.grid values must be integers in [1, p={self.gen.p}] for threshold")
        if not 0.0 < self.ratio < 1.0:
            out.append(f"split.ratio must lie in (0, 1), got {self.ratio!r}")
        if not isinstance(self.replicates, (int, np.integer)) or self.replicates < 1:
            out.append(f"replicates must be a positive integer, got {self.replicates!r}")
        if not self.modes:
            out.append("modes must name at least one evaluator")
        for m in self.modes:
            if m not in MODES:
                out.append(f"modes entry {m!r} is not one of {MODES}")
        if "holdout" in self.modes and self.n_test < 2:
            out.append("holdout mode requires n_test >= 2")
        if self.covariance_mode not in COVARIANCE_MODES:
            out.append(f"split.covariance_mode must be one of {COVARIANCE_MODES}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            out.append(f"seed must be a non-negative integer, got {self.seed!r}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


@dataclass
class SweepResult:
    """Per-grid-point summaries plus the raw per-replicate curves.

    ``curves[mode]`` has shape ``(R, G)``; ``chosen[mode]`` holds the
    per-replicate argmax index; ``holdout[mode]`` the hold-out R^2 of the
    model refit on all data at that replicate's choice.
    """

    setting: str
    grid: list
    seed: int
    records: list
    curves: dict
    chosen: dict
    holdout: dict = field(default_factory=dict)
    theory: np.ndarray | None = None
    optima: dict = field(default_factory=dict)

    def rows(self):
        """Result rows ``(setting, hyperparameter, mode, mean, se, n_replicates, seed)``."""
        out = []
        for j, h in enumerate(self.grid):
            for mode, curve in self.curves.items():
                m, se, cnt = mean_se(curve[:, j])
                out.append((self.setting, h, mode, float(m), float(se), int(cnt), self.seed))
            if self.theory is not None:
                out.append((self.setting, h, "theory", float(self.theory[j]), 0.0, 0, self.seed))
        for mode, vals in self.holdout.items():
            m, se, cnt = mean_se(vals)
            out.append((self.setting, float("nan"), f"holdout_{mode}", float(m), float(se),
                        int(cnt), self.seed))
        return out


def _xty_cov(mode, stats, data):
    if mode == "population":
        return population_xty_covariance(stats, data.covariance, data.beta, data.sigma_eps2)
    if mode == "oracle":
        return oracle_xty_covariance(stats, data.covariance, data.beta)
    return plugin_xty_covariance(stats, stats.y_norm2, panel=data.W)


def _fits(family, grid, s, ld):
    if family == "ridge":
        return np.stack([ld.ridge_solve(s, t) for t in grid])
    return nested_threshold_fits(s, [int(k) for k in grid], ld)


def _replicate(cfg, cov, r):
    data = generate_dataset(cfg.gen, substream(cfg.seed, r, DATA), covariance=cov)
    stats = compute_summary(data.X, data.y)
    ld = LDReference.from_panel(data.W)
    curves, chosen = {}, {}
    if "pseudo" in cfg.modes:
        split = pseudo_split(stats, _xty_cov(cfg.covariance_mode, stats, data),
                             cfg.ratio, substream(cfg.seed, r, PSEUDO), cfg.split_noise)
        ctx = TuningContext.from_pseudo(split, ld, cov)
        curves["pseudo"] = ctx.score(_fits(cfg.family, cfg.grid, ctx.s_train, ld))
    if "individual" in cfg.modes:
        split = individual_split(data.X, data.y, cfg.ratio, substream(cfg.seed, r, INDIVIDUAL))
        ctx = TuningContext.from_individual(split, ld, cov)
        curves["individual"] = ctx.score(_fits(cfg.family, cfg.grid, ctx.s_train, ld))
    for mode, c in curves.items():
        chosen[mode] = best_index(c)
    holdout = {}
    if "holdout" in cfg.modes and curves:
        rng = substream(cfg.seed, r, TEST)
        X_test = sample_rows(cov, cfg.n_test, rng)
        y_test = X_test @ data.beta + rng.standard_normal(cfg.n_test) * np.sqrt(data.sigma_eps2)
        full = _fits(cfg.family, cfg.grid, stats.s, ld)
        for mode, i in chosen.items():
            holdout[mode] = r2_holdout(X_test, y_test, full[i])
    return curves, chosen, holdout


def sweep_theory(cfg, cov):
    if cfg.family != "ridge":
        return None
    n_train, n_valid = split_sizes(cfg.gen.n, cfg.ratio)
    inp = TheoryInputs(n_train=n_train, n_valid=n_valid, n_w=cfg.gen.n_w, p=cfg.gen.p,
                       kappa=cfg.gen.kappa, sigma_beta2=cfg.gen.sigma_beta2,
                       h2=cfg.gen.target_h2, sigma_spectrum=cov.eigenvalues())
    return np.array([theory_r2_ridge(inp, t) for t in cfg.grid])


def run_sweep(cfg):
    """Replicate generate, split, fit and score over the grid; attach theory.

    Each replicate uses independent substreams for data, the pseudo split,
    the individual split and the test set, all derived from ``cfg.seed``.
    """
    cfg.validate()
    cov = Covariance.from_spec(cfg.gen.cov)
    reps = map_replicates(lambda r: _replicate(cfg, cov, r), cfg.replicates, cfg.seed)
    modes = [m for m in ("pseudo", "individual") if m in cfg.modes]
    curves = {m: np.array([rep[0][m] for rep in reps]) for m in modes}
    chosen = {m: np.array([rep[1][m] for rep in reps]) for m in modes}
    holdout = {m: np.array([rep[2][m] for rep in reps]) for m in modes if "holdout" in cfg.modes}
    theory = sweep_theory(cfg, cov) if "theory" in cfg.modes else None
    grid = list(cfg.grid)
    records = []
    for j, h in enumerate(grid):
        rec = {"hyperparameter": h, "n_replicates": cfg.replicates}
        for m in modes:
            mean, se, _ = mean_se(curves[m][:, j])
            rec[f"mean_{m}"] = float(mean)
            rec[f"se_{m}"] = float(se)
        rec["theory"] = float(theory[j]) if theory is not None else float("nan")
        records.append(rec)
    optima = {m: grid[best_index(np.nanmean(curves[m], axis=0))] for m in modes}
    if theory is not None:
        optima["theory"] = grid[best_index(theory)]
    return SweepResult(setting=cfg.setting, grid=grid, seed=cfg.seed, records=records,
                       curves=curves, chosen=chosen, holdout=holdout, theory=theory,
                       optima=optima)


def run_parity(cfg, settings):
    """Hold-out R^2 of pseudo-tuned versus individually tuned models per setting.

    Parameters
    ----------
    cfg : ExperimentConfig
        Base experiment; must request a test set (``n_test >= 2``).
    settings : list of dict
        Overrides of ``target_h2``, ``p`` and ``kappa`` (``p`` also resizes
        the covariance) applied to ``cfg.gen``.

    Returns
    -------
    list of dict
        One row per setting with both hold-out means, the paired difference
        and its standard error.
    """
    rows = []
    for i, over in enumerate(settings):
        unknown = set(over) - {"target_h2", "p", "kappa"}
        if unknown:
            raise ConfigError(f"settings[{i}] has unknown keys {sorted(unknown)}")
        gen = cfg.gen
        if "p" in over:
            gen = replace(gen, p=over["p"], cov=replace(gen.cov, p=over["p"]))
        gen = replace(gen, **{k: v for k, v in over.items() if k != "p"})
        run = replace(cfg, gen=gen, modes=("pseudo", "individual", "holdout"),
                      setting=f"{cfg.setting}-{i}")
        res = run_sweep(run)
        diff = res.holdout["pseudo"] - res.holdout["individual"]
        m_sum, se_sum, _ = mean_se(res.holdout["pseudo"])
        m_ind, se_ind, _ = mean_se(res.holdout["individual"])
        m_d, se_d, cnt = mean_se(diff)
        rows.append({"setting": run.setting, **over, "mean_holdout_pseudo": float(m_sum),
                     "se_holdout_pseudo": float(se_sum), "mean_holdout_individual": float(m_ind),
                     "se_holdout_individual": float(se_ind), "mean_diff": float(m_d),
                     "se_diff": float(se_d), "n_replicates": int(cnt)})
    return rows


def run_ratio_convergence(cfg, n_list):
    """Mean per-replicate ratio of pseudo to individual R^2 as ``n = p`` grows.

    The panel size scales as ``n_w = n * cfg.gen.n_w / cfg.gen.n`` and the
    number of covariance blocks is kept fixed. Replicates where either R^2
    is degenerate or zero are counted rather than averaged.
    """
    rows = []
    base = cfg.gen
    for n in n_list:
        n_w = max(1, round(n * base.n_w / base.n))
        gen = replace(base, n=n, p=n, n_w=n_w, cov=replace(base.cov, p=n))
        run = replace(cfg, gen=gen, modes=("pseudo", "individual"), setting=f"{cfg.setting}-n{n}")
        res = run_sweep(run)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = res.curves["pseudo"] / res.curves["individual"]
        bad = ~np.isfinite(ratio)
        ratio = np.where(bad, np.nan, ratio)
        for j, h in enumerate(res.grid):
            m, se, cnt = mean_se(ratio[:, j])
            rows.append({"n": n, "hyperparameter": h, "mean_ratio": float(m), "se_ratio": float(se),
                         "n_replicates": int(cnt), "degenerate": int(bad[:, j].sum())})
    return rows


@dataclass
class EnsembleExperiment:
    """Ridge plus top-k thresholding, tuned on one shared pseudo split."""

    gen: GenConfig
    theta_grid: tuple = DEFAULT_THETA_GRID
    k_grid: tuple = (10, 20, 50, 100, 200, 500, 1000)
    weight_step: float = 0.05
    ratio: float = 0.8
    replicates: int = 30
    n_test: int = 2000
    seed: int = 0
    covariance_mode: str = "population"


def run_ensemble(cfg):
    """Hold-out R^2 of the tuned ensemble and of each tuned component.

    Components and weights are chosen on the pseudo split, then refit on
    the full summary vector before scoring on an independent test set.
    """
    cov = Covariance.from_spec(cfg.gen.cov)

    def one(r):
        data = generate_dataset(cfg.gen, substream(cfg.seed, r, DATA), covariance=cov)
        stats = compute_summary(data.X, data.y)
        ld = LDReference.from_panel(data.W)
        split = pseudo_split(stats, _xty_cov(cfg.covariance_mode, stats, data),
                             cfg.ratio, substream(cfg.seed, r, PSEUDO))
        ctx = TuningContext.from_pseudo(split, ld, cov)
        ridge = _fits("ridge", cfg.theta_grid, ctx.s_train, ld)
        thresh = _fits("threshold", cfg.k_grid, ctx.s_train, ld)
        res = tune_ensemble([ridge, thresh], ctx, cfg.weight_step)
        i_r, i_t = res.extra["component_index"]
        w = res.extra["effective_weights"]
        b_ridge = ld.ridge_solve(stats.s, cfg.theta_grid[i_r])
        b_thresh = nested_threshold_fits(stats.s, [cfg.k_grid[i_t]], ld)[0]
        rng = substream(cfg.seed, r, TEST)
        X_test = sample_rows(cov, cfg.n_test, rng)
        y_test = X_test @ data.beta + rng.standard_normal(cfg.n_test) * np.sqrt(data.sigma_eps2)
        return (r2_holdout(X_test, y_test, w[0] * b_ridge + w[1] * b_thresh),
                r2_holdout(X_test, y_test, b_ridge), r2_holdout(X_test, y_test, b_thresh),
                res.best_value, w)

    reps = map_replicates(one, cfg.replicates, cfg.seed)
    arr = np.array([rep[:4] for rep in reps], dtype=float)
    out = {}
    for j, name in enumerate(("ensemble", "ridge", "threshold", "pseudo_ensemble")):
        m, se, cnt = mean_se(arr[:, j])
        out[name] = {"mean": float(m), "se": float(se), "n_replicates": int(cnt)}
    out["weights"] = np.array([rep[4] for rep in reps])
    return out


@dataclass
class MultiExperiment:
    """Two-population weight study with a fixed ridge penalty per population."""

    mcfg: MultiAncestryConfig
    thetas: tuple = (1.0, 1.0)
    w1_grid: tuple = tuple(np.round(np.arange(0, 21) * 0.05, 10))
    ratio: float = 0.8
    replicates: int = 50
    seed: int = 0
    covariance_mode: str = "population"

    def validate(self):
        problems = list(self.mcfg.problems())
        if self.mcfg.K != 2:
            problems.append("the weight study supports exactly two populations")
        if len(self.thetas) != self.mcfg.K or any(not t > 0 for t in self.thetas):
            problems.append("thetas must hold one positive penalty per population")
        if not self.w1_grid:
            problems.append("w1_grid must be nonempty")
        if problems:
            raise ConfigError(problems)
        return self


def multi_closed_form(cfg, covs):
    """Closed-form optimal weights and the five objective scalars."""
    m = cfg.mcfg
    n_train, _ = split_sizes(m.n, cfg.ratio)
    S1 = covs[0].dense()
    pops = []
    for j in range(m.K):
        Sj = covs[j].dense()
        eq = ridge_equivalents(Sj, m.n_w, cfg.thetas[j], target=None if j == 0 else S1)
        pops.append(PopulationTheory(kappa=m.kappas[j], h2=m.h2s[j], sigma=Sj, eq=eq))
    terms = two_pop_terms(pops, m.sigma_cross, n_train)
    return optimal_two_pop_weights(*terms), terms


def run_multi_experiment(cfg):
    """Pseudo-tuned ``w1`` curves on the target population versus the closed form.

    Returns
    -------
    dict
        ``curves`` (R x G), per-replicate ``chosen`` weights, the argmax of the
        mean curve, and the closed-form ``(w1, w2)`` with its scalars.
    """
    cfg.validate()
    m = cfg.mcfg
    covs = [Covariance.from_spec(s) for s in m.covs]
    grid = list(cfg.w1_grid)

    def one(r):
        pops = generate_multi_dataset(m, substream(cfg.seed, r, DATA), covariances=covs)
        rng = substream(cfg.seed, r, PSEUDO)
        fits, target = [], None
        for j, data in enumerate(pops):
            stats = compute_summary(data.X, data.y)
            ld = LDReference.from_panel(data.W)
            split = pseudo_split(stats, _xty_cov(cfg.covariance_mode, stats, data),
                                 cfg.ratio, rng)
            fits.append(ld.ridge_solve(split.s_train, cfg.thetas[j]))
            if j == 0:
                target = TuningContext.from_pseudo(split, ld, covs[0])
        res = tune_weights(grid, fits[0], fits[1], target)
        return res.r2_curve, res.best

    reps = map_replicates(one, cfg.replicates, cfg.seed)
    curves = np.array([rep[0] for rep in reps])
    chosen = np.array([rep[1] for rep in reps])
    (w1, w2), terms = multi_closed_form(cfg, covs)
    return {"grid": grid, "curves": curves, "chosen": chosen,
            "mean_argmax": grid[best_index(np.nanmean(curves, axis=0))],
            "closed_form": (w1, w2), "terms": terms}
