"""Command-line entry point: ``sumtrain <subcommand> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .errors import NumericalError, ValidationError
from .estimators import ridge_fit, top_k_indices, threshold_fit
from .evaluation import DEFAULT_THETA_GRID, TuningContext, tune_theta, tune_threshold
from .harness import run_ensemble, run_multi_experiment, run_parity, run_ratio_convergence, run_sweep
from .model_gen import Covariance, generate_dataset
from .summary import (
    LDReference,
    compute_summary,
    oracle_xty_covariance,
    plugin_xty_covariance,
    population_xty_covariance,
    pseudo_split,
)
from .theory import TheoryInputs, ridge_r2_identity, theory_r2_ridge

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
    p.add_argument("--out", type=Path, default=None, help="output file or directory")


def _load(args, need=None):
    if args.config is None:
        raise ValidationError("--config is required for this subcommand")
    cfg = io.parse_config(args.config)
    if need and getattr(cfg, need) is None:
        raise ValidationError(f"{args.config}: config does not describe a {need} experiment")
    return cfg


def _seeded(obj, seed):
    if seed is None:
        return obj
    if hasattr(obj, "gen"):
        return replace(obj, seed=seed, gen=replace(obj.gen, seed=seed))
    return replace(obj, seed=seed, mcfg=replace(obj.mcfg, seed=seed))


def _emit_rows(rows, out):
    if out is None:
        io.write_results(sys.stdout, rows)
    else:
        io.write_results(out, rows)


# ------------------------------------------------------------- subcommands


def cmd_generate(args):
    cfg = _load(args, "experiment").experiment
    gen = cfg.gen if args.seed is None else replace(cfg.gen, seed=args.seed)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(gen)
    stats = compute_summary(data.X, data.y)
    io.write_summary(out / "summary.csv", stats)
    io.write_matrix(out / "ld.csv", data.W.T @ data.W, n_w=gen.n_w)
    io.write_vectors(out / "beta.csv", {"beta": data.beta})
    with open(out / "noise.txt", "w", encoding="utf-8") as fh:
        fh.write(f"sigma_eps2={io.fmt(data.sigma_eps2)}\n")
    if args.individual:
        io.write_table(out / "X.csv", data.X)
        io.write_table(out / "y.csv", data.y[:, None])
    if gen.cov.kind == "dense":
        io.write_matrix(out / "sigma.csv", data.covariance.dense())
    else:
        io.write_spec(out / "sigma.yaml", gen.cov)
    print(f"wrote dataset files to {out}")


def cmd_summarize(args):
    X = io.read_table(args.x)
    y = io.read_table(args.y)
    if y.shape[1] != 1:
        raise ValidationError(f"{args.y}: expected a single column")
    stats = compute_summary(X, y[:, 0])
    if args.out is None:
        raise ValidationError("--out is required")
    io.write_summary(args.out, stats)


def _sigma(path):
    return Covariance.from_spec(io.read_covariance_spec(path))


def cmd_split(args):
    stats, ids = io.read_summary(args.summary)
    rng = np.random.default_rng(args.seed)
    if args.mode == "plugin":
        if args.ld is None or stats.y_norm2 is None:
            raise ValidationError("plugin mode needs --ld and a summary with y_norm2")
        G, n_w = io.read_matrix(args.ld)
        if n_w is None:
            raise ValidationError(f"{args.ld}: LD file lacks #n_w")
        cov = plugin_xty_covariance(stats, stats.y_norm2 / n_w, matrix=G)
    else:
        if args.sigma is None or args.beta is None:
            raise ValidationError(f"{args.mode} mode needs --sigma and --beta")
        sigma = _sigma(args.sigma)
        beta = io.read_vectors(args.beta)[0]["beta"]
        if args.mode == "oracle":
            cov = oracle_xty_covariance(stats, sigma, beta)
        else:
            cov = population_xty_covariance(stats, sigma, beta, args.sigma_eps2)
    split = pseudo_split(stats, cov, args.ratio, rng)
    if args.out is None:
        raise ValidationError("--out is required")
    io.write_split(args.out, split, ids)


def cmd_fit(args):
    split = io.read_split(args.split)
    s = split.s_train
    if args.rule == "ridge":
        if args.ld is None or args.theta is None:
            raise ValidationError("ridge needs --ld and --theta")
        G, n_w = io.read_matrix(args.ld)
        if n_w is None:
            raise ValidationError(f"{args.ld}: LD file lacks #n_w")
        beta = ridge_fit(s, LDReference(G, n_w), args.theta)
    else:
        if args.top_k is None:
            raise ValidationError("threshold needs --top-k")
        ld = None
        if args.ld is not None:
            G, n_w = io.read_matrix(args.ld)
            ld = LDReference(G, n_w or 1)
        beta = threshold_fit(s, top_k_indices(s, args.top_k, ld))
    if args.out is None:
        raise ValidationError("--out is required")
    io.write_vectors(args.out, {"beta_hat": beta})


def cmd_tune(args):
    split = io.read_split(args.split)
    G, n_w = io.read_matrix(args.ld)
    if n_w is None:
        raise ValidationError(f"{args.ld}: LD file lacks #n_w")
    ld = LDReference(G, n_w)
    if args.sigma is None and n_w < G.shape[0]:
        # ridge fits leave a null-space part with zero norm under G / n_w,
        # which makes the R^2 denominator meaningless
        raise ValidationError(f"{args.ld}: n_w={n_w} < p={G.shape[0]}, so G/n_w is singular; "
                              "pass --sigma for the R^2 denominator")
    sigma = _sigma(args.sigma) if args.sigma is not None else G / n_w
    if split.y_norm2_valid is None:
        raise ValidationError(f"{args.split}: split file lacks y_norm2_valid")
    ctx = TuningContext.from_pseudo(split, ld, sigma)
    if args.family == "ridge":
        res = tune_theta(DEFAULT_THETA_GRID, ctx)
    else:
        if not args.k:
            raise ValidationError("threshold tuning needs --k values")
        res = tune_threshold(args.k, ctx)
    seed = 0 if args.seed is None else args.seed
    rows = [("tune", h, "pseudo", v, 0.0, 1, seed) for h, v in zip(res.grid, res.r2_curve)]
    _emit_rows(rows, args.out)
    print(f"best={io.fmt(res.best)} r2={io.fmt(res.best_value)}"
          + (" (flat)" if res.flat else ""), file=sys.stderr)
    if args.sigma is None and res.best_value > 1:
        print("warning: R^2 above 1; the panel estimate G/n_w understates ||beta||_Sigma "
              "at small penalties, pass --sigma if a better covariance is available",
              file=sys.stderr)


def cmd_theory(args):
    if args.preset == "cor1":
        p = args.p
        if args.n_w is None and args.gamma_w is None:
            raise ValidationError("give --n-w or --gamma-w")
        n_w = args.n_w if args.n_w is not None else p / args.gamma_w
        if args.gamma_w is not None and not np.isclose(p / n_w, args.gamma_w):
            raise ValidationError(f"--gamma-w {args.gamma_w} disagrees with p/n_w = {p / n_w}")
        value = ridge_r2_identity(args.h2, p, args.n_train, n_w, args.theta)
    else:
        if args.sigma is None:
            raise ValidationError("the ridge preset needs --sigma")
        sigma = _sigma(args.sigma)
        n_w = args.n_w if args.n_w is not None else round(sigma.p / args.gamma_w)
        inp = TheoryInputs(n_train=args.n_train, n_w=n_w, p=sigma.p, kappa=args.kappa,
                           sigma_beta2=args.sigma_beta2, h2=args.h2,
                           sigma_spectrum=sigma.eigenvalues())
        value = theory_r2_ridge(inp, args.theta)
    print(f"{value:.6f}")


def cmd_sweep(args):
    cfg = _seeded(_load(args, "experiment").experiment, args.seed)
    res = run_sweep(cfg)
    _emit_rows(res.rows(), args.out or cfg.output)


def cmd_parity(args):
    parsed = _load(args, "experiment")
    if not parsed.parity_settings:
        raise ValidationError("config has no parity.settings")
    cfg = _seeded(parsed.experiment, args.seed)
    if cfg.n_test < 2:
        raise ValidationError("parity needs experiment.n_test >= 2")
    rows = []
    for row in run_parity(cfg, parsed.parity_settings):
        n = row["n_replicates"]
        for mode in ("pseudo", "individual"):
            rows.append((row["setting"], float("nan"), f"holdout_{mode}",
                         row[f"mean_holdout_{mode}"], row[f"se_holdout_{mode}"], n, cfg.seed))
        rows.append((row["setting"], float("nan"), "holdout_diff", row["mean_diff"],
                     row["se_diff"], n, cfg.seed))
    _emit_rows(rows, args.out or cfg.output)


def cmd_ratio(args):
    parsed = _load(args, "experiment")
    if not parsed.ratio_n_list:
        raise ValidationError("config has no ratio.n_list")
    cfg = _seeded(parsed.experiment, args.seed)
    rows = [(f"{cfg.setting}-n{r['n']}", r["hyperparameter"], "ratio", r["mean_ratio"],
             r["se_ratio"], r["n_replicates"], cfg.seed)
            for r in run_ratio_convergence(cfg, parsed.ratio_n_list)]
    _emit_rows(rows, args.out or cfg.output)


def cmd_multi(args):
    cfg = _seeded(_load(args, "multi").multi, args.seed)
    res = run_multi_experiment(cfg)
    rows = []
    for j, w in enumerate(res["grid"]):
        col = res["curves"][:, j]
        se = col.std(ddof=1) / np.sqrt(col.size) if col.size > 1 else 0.0
        rows.append(("multi", w, "pseudo", col.mean(), se, col.size, cfg.seed))
    rows.append(("multi", res["mean_argmax"], "argmax_mean_curve", res["mean_argmax"], 0.0,
                 cfg.replicates, cfg.seed))
    rows.append(("multi", res["closed_form"][0], "closed_form_w1", res["closed_form"][0], 0.0, 0,
                 cfg.seed))
    _emit_rows(rows, args.out)


def cmd_ensemble(args):
    parsed = _load(args, "ensemble")
    cfg = _seeded(parsed.ensemble, args.seed)
    res = run_ensemble(cfg)
    rows = [("ensemble", float("nan"), name, res[name]["mean"], res[name]["se"],
             res[name]["n_replicates"], cfg.seed)
            for name in ("ensemble", "ridge", "threshold")]
    _emit_rows(rows, args.out)


def cmd_validate(args):
    _load(args)
    print(f"{args.config}: ok")


def build_parser():
    parser = _Parser(prog="sumtrain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("generate", help="simulate a dataset and write its summary files")
    _common(p)
    p.add_argument("--individual", action="store_true", help="also write X.csv and y.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("summarize", help="compute X'y from individual-level CSVs")
    _common(p)
    p.add_argument("--x", type=Path, required=True)
    p.add_argument("--y", type=Path, required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("split", help="resample a pseudo train/validation pair")
    _common(p)
    p.add_argument("--summary", type=Path, required=True)
    p.add_argument("--mode", choices=("population", "oracle", "plugin"), default="plugin")
    p.add_argument("--ld", type=Path)
    p.add_argument("--sigma", type=Path, help="covariance spec (.yaml) or dense CSV")
    p.add_argument("--beta", type=Path)
    p.add_argument("--sigma-eps2", type=float, default=0.0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="fit a rule on the training side of a split")
    _common(p)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--rule", choices=("ridge", "threshold"), default="ridge")
    p.add_argument("--ld", type=Path)
    p.add_argument("--theta", type=float)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="score a hyperparameter grid on a split")
    _common(p)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--ld", type=Path, required=True)
    p.add_argument("--sigma", type=Path)
    p.add_argument("--family", choices=("ridge", "threshold"), default="ridge")
    p.add_argument("--k", type=int, nargs="+")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("theory", help="evaluate asymptotic ridge R^2")
    _common(p)
    p.add_argument("--preset", choices=("cor1", "ridge"), default="cor1")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--gamma-w", type=float)
    p.add_argument("--h2", type=float, required=True)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-w", type=int)
    p.add_argument("--sigma", type=Path)
    p.add_argument("--kappa", type=float, default=0.1)
    p.add_argument("--sigma-beta2", type=float, default=1.0)
    p.set_defaults(func=cmd_theory)

    for name, func, text in (
        ("sweep", cmd_sweep, "replicated grid sweep with theory"),
        ("parity", cmd_parity, "hold-out parity across settings"),
        ("ratio", cmd_ratio, "pseudo/individual ratio as n grows"),
        ("multi", cmd_multi, "two-population weight study"),
        ("ensemble", cmd_ensemble, "ridge plus threshold ensemble study"),
        ("validate", cmd_validate, "check a configuration file"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args.func(args)
    except ValidationError as exc:
        messages = getattr(exc, "messages", [str(exc)])
        for m in messages:
            print(f"error: {m}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
