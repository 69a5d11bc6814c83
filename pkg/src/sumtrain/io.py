"""Configuration files and the CSV formats for summaries, matrices and results."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ValidationError
from .evaluation import DEFAULT_THETA_GRID
from .harness import (
    COVARIANCE_MODES,
    FAMILIES,
    MODES,
    EnsembleExperiment,
    ExperimentConfig,
    MultiExperiment,
)
from .model_gen import (
    COVARIANCE_KINDS,
    EFFECT_DISTS,
    NOISE_DISTS,
    CovarianceSpec,
    GenConfig,
    MultiAncestryConfig,
    build_covariance,
)
from .summary import SPLIT_NOISE, PseudoSplit, SummaryStats

CONFIG_VERSION = 1
RESULTS_HEADER = ("setting", "hyperparameter", "mode", "mean", "se", "n_replicates", "seed")
SUMMARY_HEADER = ("id", "s", "n")
SYM_TOL = 1e-8


def fmt(x):
    """Decimal text with 9 significant digits."""
    return format(float(x), ".9g")


# ---------------------------------------------------------------- config


class _Reader:
    """Walks a nested mapping, collecting every problem instead of stopping at the first."""

    def __init__(self):
        self.errors = []

    def section(self, doc, key, path, allowed, required=False):
        val = doc.get(key)
        where = f"{path}{key}"
        if val is None:
            if required:
                self.errors.append(f"{where}: missing required section")
            return None
        if not isinstance(val, dict):
            self.errors.append(f"{where}: expected a mapping, got {type(val).__name__}")
            return None
        self.unknown(val, allowed, where + ".")
        return val

    def unknown(self, doc, allowed, path):
        for k in doc:
            if k not in allowed:
                self.errors.append(f"{path}{k}: unknown key")

    def get(self, doc, key, kind, path, default=None, required=False, choices=None, check=None):
        where = f"{path}{key}"
        if doc is None or key not in doc:
            if required:
                self.errors.append(f"{where}: missing required key")
            return default
        val = doc[key]
        if kind is int:
            ok = isinstance(val, int) and not isinstance(val, bool)
        elif kind is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
            if ok:
                val = float(val)
                ok = math.isfinite(val)
        elif kind is str:
            ok = isinstance(val, str)
        elif kind is list:
            ok = isinstance(val, list)
        else:
            ok = True
        if not ok:
            self.errors.append(f"{where}: expected {kind.__name__}, got {val!r}")
            return default
        if choices is not None and val not in choices:
            self.errors.append(f"{where}: must be one of {list(choices)}, got {val!r}")
            return default
        if check is not None:
            msg = check(val)
            if msg:
                self.errors.append(f"{where}: {msg}")
                return default
        return val


def _positive(v):
    return None if v > 0 else f"must be positive, got {v!r}"


def _unit(v):
    return None if 0.0 <= v <= 1.0 else f"must lie in [0, 1], got {v!r}"


def _open_unit(v):
    return None if 0.0 < v < 1.0 else f"must lie in (0, 1), got {v!r}"


def _nonneg(v):
    return None if v >= 0 else f"must be non-negative, got {v!r}"


COV_KEYS = ("kind", "n_block", "rho", "path")


def _covariance(r, doc, path, p, base_dir):
    sec = r.section(doc, "covariance", path, COV_KEYS)
    if sec is None:
        return CovarianceSpec("identity", p)
    where = f"{path}covariance."
    kind = r.get(sec, "kind", str, where, "identity", choices=COVARIANCE_KINDS)
    n_block = r.get(sec, "n_block", int, where, 1, check=_positive)
    rho = r.get(sec, "rho", float, where, 0.0,
                check=lambda v: None if 0.0 <= v < 1.0 else f"must lie in [0, 1), got {v!r}")
    src = r.get(sec, "path", str, where)
    matrix = None
    if kind == "dense":
        if src is None:
            r.errors.append(f"{where}path: required for kind 'dense'")
        else:
            try:
                matrix, _ = read_matrix(Path(base_dir) / src)
            except (OSError, ValidationError) as exc:
                r.errors.append(f"{where}path: {exc}")
    elif kind == "blockAR1" and isinstance(p, int) and p > 0 and n_block and p % n_block:
        r.errors.append(f"{where}n_block: p={p} is not divisible by n_block={n_block}")
    spec = CovarianceSpec(kind, p, n_block, rho, matrix, source=src)
    return spec


def _grid(r, sec, path, family):
    if sec is None or "grid" not in sec:
        return DEFAULT_THETA_GRID if family == "ridge" else None
    val = sec["grid"]
    where = f"{path}grid"
    if isinstance(val, dict):
        r.unknown(val, ("log10_min", "log10_max", "num"), where + ".")
        lo = r.get(val, "log10_min", float, where + ".", required=True)
        hi = r.get(val, "log10_max", float, where + ".", required=True)
        num = r.get(val, "num", int, where + ".", required=True, check=_positive)
        if None in (lo, hi, num):
            return None
        return tuple(float(x) for x in np.logspace(lo, hi, num))
    if isinstance(val, list) and val and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in val
    ):
        return tuple(int(x) if family == "threshold" and float(x).is_integer() else float(x)
                     for x in val)
    r.errors.append(f"{where}: expected a nonempty list of numbers or a log10 range")
    return None


TOP_KEYS = ("version", "experiment", "generator", "estimator", "split", "populations",
            "sigma_cross", "multi", "parity", "ratio", "ensemble")
EXP_KEYS = ("setting", "replicates", "seed", "modes", "n_test", "output")
GEN_KEYS = ("n", "p", "n_w", "kappa", "sigma_beta2", "h2", "effect_dist", "noise_dist",
            "covariance", "max_entries")
EST_KEYS = ("family", "grid")
SPLIT_KEYS = ("ratio", "covariance_mode", "noise")
POP_KEYS = ("kappa", "h2", "covariance")
MULTI_KEYS = ("thetas", "w1_step")
PARITY_KEYS = ("settings",)
RATIO_KEYS = ("n_list",)
ENSEMBLE_KEYS = ("k_grid", "weight_step")


@dataclass
class ParsedConfig:
    """Everything a config file can describe; unused parts are ``None``."""

    experiment: ExperimentConfig | None = None
    multi: MultiExperiment | None = None
    parity_settings: list | None = None
    ratio_n_list: list | None = None
    ensemble: EnsembleExperiment | None = None
    raw: dict = field(default_factory=dict, repr=False)


def parse_config_text(text, base_dir="."):
    """Parse and validate YAML config text; raises :class:`ConfigError` listing all problems."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config_dict(doc, base_dir)


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config_text(text, path.parent)


def parse_config_dict(doc, base_dir="."):
    r = _Reader()
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping at the top level")
    r.unknown(doc, TOP_KEYS, "")
    version = r.get(doc, "version", int, "", required=True)
    if version is not None and version != CONFIG_VERSION:
        r.errors.append(f"version: unsupported version {version}, expected {CONFIG_VERSION}")

    exp = r.section(doc, "experiment", "", EXP_KEYS) or {}
    setting = r.get(exp, "setting", str, "experiment.", "default")
    replicates = r.get(exp, "replicates", int, "experiment.", 50, check=_positive)
    seed = r.get(exp, "seed", int, "experiment.", 0, check=_nonneg)
    modes = r.get(exp, "modes", list, "experiment.", ["pseudo", "individual", "theory"])
    if modes is not None:
        bad = [m for m in modes if m not in MODES]
        if bad or not modes:
            r.errors.append(f"experiment.modes: entries must be a nonempty subset of {list(MODES)}")
    n_test = r.get(exp, "n_test", int, "experiment.", 0, check=_nonneg)
    output = r.get(exp, "output", str, "experiment.")

    gen = r.section(doc, "generator", "", GEN_KEYS, required=True) or {}
    g = "generator."
    n = r.get(gen, "n", int, g, required=True, check=_positive)
    p = r.get(gen, "p", int, g, required=True, check=_positive)
    n_w = r.get(gen, "n_w", int, g, required=True, check=_positive)
    max_entries = r.get(gen, "max_entries", int, g, 200_000_000, check=_positive)

    split = r.section(doc, "split", "", SPLIT_KEYS) or {}
    ratio = r.get(split, "ratio", float, "split.", 0.8, check=_open_unit)
    cov_mode = r.get(split, "covariance_mode", str, "split.", "population", choices=COVARIANCE_MODES)
    split_noise = r.get(split, "noise", str, "split.", "gaussian", choices=SPLIT_NOISE)

    out = ParsedConfig(raw=doc)
    pops = doc.get("populations")
    if pops is not None:
        for key in ("kappa", "h2", "sigma_beta2", "covariance", "effect_dist", "noise_dist"):
            if key in gen:
                r.errors.append(f"generator.{key}: not allowed with populations")
        if not isinstance(pops, list) or not pops:
            r.errors.append("populations: expected a nonempty list")
            pops = []
        covs, kappas, h2s = [], [], []
        for j, pop in enumerate(pops):
            where = f"populations[{j}]."
            if not isinstance(pop, dict):
                r.errors.append(f"populations[{j}]: expected a mapping")
                continue
            r.unknown(pop, POP_KEYS, where)
            kappas.append(r.get(pop, "kappa", float, where, required=True, check=_unit))
            h2s.append(r.get(pop, "h2", float, where, required=True,
                             check=lambda v: None if 0.0 < v <= 1.0 else f"must lie in (0, 1], got {v!r}"))
            covs.append(_covariance(r, pop, where, p, base_dir))
        sc = doc.get("sigma_cross")
        try:
            S = np.asarray(sc, dtype=float)
            if S.shape != (len(pops), len(pops)):
                raise ValueError
        except (TypeError, ValueError):
            r.errors.append(f"sigma_cross: expected a {len(pops)}x{len(pops)} numeric matrix")
            S = None
        mu = r.section(doc, "multi", "", MULTI_KEYS) or {}
        thetas = r.get(mu, "thetas", list, "multi.", [1.0] * len(pops))
        if thetas is not None and (len(thetas) != len(pops) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in thetas
        )):
            r.errors.append("multi.thetas: expected one positive penalty per population")
        step = r.get(mu, "w1_step", float, "multi.", 0.05, check=_positive)
        if not r.errors:
            mcfg = MultiAncestryConfig(covs=tuple(covs), kappas=tuple(kappas), h2s=tuple(h2s),
                                       sigma_cross=S, n=n, p=p, n_w=n_w, seed=seed,
                                       max_entries=max_entries)
            r.errors.extend(mcfg.problems())
            m = round(1.0 / step)
            grid = tuple(float(x) for x in np.round(np.arange(m + 1) / m, 12))
            out.multi = MultiExperiment(mcfg=mcfg, thetas=tuple(float(t) for t in thetas),
                                        w1_grid=grid, ratio=ratio, replicates=replicates,
                                        seed=seed, covariance_mode=cov_mode)
            if len(pops) != 2:
                r.errors.append("populations: the weight study supports exactly two populations")
    else:
        for key in ("sigma_cross", "multi"):
            if key in doc:
                r.errors.append(f"{key}: only allowed together with populations")
        kappa = r.get(gen, "kappa", float, g, required=True, check=_unit)
        sigma_beta2 = r.get(gen, "sigma_beta2", float, g, 1.0, check=_positive)
        h2 = r.get(gen, "h2", float, g, required=True, check=_unit)
        effect = r.get(gen, "effect_dist", str, g, "gaussian", choices=EFFECT_DISTS)
        noise = r.get(gen, "noise_dist", str, g, "gaussian", choices=NOISE_DISTS)
        cov = _covariance(r, gen, g, p, base_dir)
        est = r.section(doc, "estimator", "", EST_KEYS) or {}
        family = r.get(est, "family", str, "estimator.", "ridge", choices=FAMILIES)
        grid = _grid(r, est, "estimator.", family)
        if family == "threshold" and grid is None and "grid" not in est:
            r.errors.append("estimator.grid: required for the threshold family")
        if not r.errors:
            gcfg = GenConfig(n=n, p=p, n_w=n_w, kappa=kappa, sigma_beta2=sigma_beta2,
                             target_h2=h2, cov=cov, effect_dist=effect, noise_dist=noise,
                             seed=seed, max_entries=max_entries)
            ecfg = ExperimentConfig(gen=gcfg, family=family, grid=grid, ratio=ratio,
                                    replicates=replicates, modes=tuple(modes), seed=seed,
                                    covariance_mode=cov_mode, split_noise=split_noise,
                                    n_test=n_test, setting=setting, output=output)
            r.errors.extend(ecfg.problems())
            out.experiment = ecfg
        ens = r.section(doc, "ensemble", "", ENSEMBLE_KEYS)
        if ens is not None and out.experiment is not None:
            k_grid = r.get(ens, "k_grid", list, "ensemble.", [10, 20, 50, 100, 200, 500, 1000])
            w_step = r.get(ens, "weight_step", float, "ensemble.", 0.05, check=_positive)
            if k_grid and all(isinstance(k, int) and 1 <= k <= p for k in k_grid):
                e = out.experiment
                out.ensemble = EnsembleExperiment(
                    gen=e.gen, theta_grid=e.grid if e.family == "ridge" else DEFAULT_THETA_GRID,
                    k_grid=tuple(k_grid), weight_step=w_step, ratio=ratio,
                    replicates=replicates, n_test=max(n_test, 2), seed=seed,
                    covariance_mode=cov_mode)
            else:
                r.errors.append(f"ensemble.k_grid: expected integers in [1, {p}]")

    par = r.section(doc, "parity", "", PARITY_KEYS)
    if par is not None:
        settings = r.get(par, "settings", list, "parity.", required=True)
        clean = []
        for i, s in enumerate(settings or []):
            if not isinstance(s, dict) or not s:
                r.errors.append(f"parity.settings[{i}]: expected a nonempty mapping")
                continue
            r.unknown(s, ("h2", "p", "kappa"), f"parity.settings[{i}].")
            item = {}
            if "h2" in s:
                item["target_h2"] = r.get(s, "h2", float, f"parity.settings[{i}].", check=_unit)
            if "kappa" in s:
                item["kappa"] = r.get(s, "kappa", float, f"parity.settings[{i}].", check=_unit)
            if "p" in s:
                item["p"] = r.get(s, "p", int, f"parity.settings[{i}].", check=_positive)
            clean.append(item)
        out.parity_settings = clean
    rat = r.section(doc, "ratio", "", RATIO_KEYS)
    if rat is not None:
        n_list = r.get(rat, "n_list", list, "ratio.", required=True)
        if n_list is not None and not (n_list and all(
            isinstance(x, int) and not isinstance(x, bool) and x >= 2 for x in n_list
        )):
            r.errors.append("ratio.n_list: expected a nonempty list of integers >= 2")
        out.ratio_n_list = n_list

    if r.errors:
        raise ConfigError(r.errors)
    return out


def _cov_dict(spec):
    d = {"kind": spec.kind}
    if spec.kind == "blockAR1":
        d.update(n_block=spec.n_block, rho=spec.rho)
    if spec.kind == "dense":
        d["path"] = spec.source
    return d


def config_to_dict(cfg):
    """Inverse of :func:`parse_config_dict` for the parts present in ``cfg``."""
    doc = {"version": CONFIG_VERSION}
    if cfg.experiment is not None:
        e = cfg.experiment
        g = e.gen
        doc["experiment"] = {"setting": e.setting, "replicates": e.replicates, "seed": e.seed,
                             "modes": list(e.modes), "n_test": e.n_test}
        if e.output is not None:
            doc["experiment"]["output"] = e.output
        doc["generator"] = {"n": g.n, "p": g.p, "n_w": g.n_w, "kappa": g.kappa,
                            "sigma_beta2": g.sigma_beta2, "h2": g.target_h2,
                            "effect_dist": g.effect_dist, "noise_dist": g.noise_dist,
                            "covariance": _cov_dict(g.cov), "max_entries": g.max_entries}
        doc["estimator"] = {"family": e.family, "grid": [float(x) if e.family == "ridge" else int(x)
                                                         for x in e.grid]}
        doc["split"] = {"ratio": e.ratio, "covariance_mode": e.covariance_mode,
                        "noise": e.split_noise}
    if cfg.multi is not None:
        mu = cfg.multi
        m = mu.mcfg
        doc["experiment"] = {"replicates": mu.replicates, "seed": mu.seed}
        doc["generator"] = {"n": m.n, "p": m.p, "n_w": m.n_w, "max_entries": m.max_entries}
        doc["populations"] = [{"kappa": k, "h2": h, "covariance": _cov_dict(c)}
                              for k, h, c in zip(m.kappas, m.h2s, m.covs)]
        doc["sigma_cross"] = np.asarray(m.sigma_cross, dtype=float).tolist()
        step = mu.w1_grid[1] - mu.w1_grid[0] if len(mu.w1_grid) > 1 else 1.0
        doc["multi"] = {"thetas": list(mu.thetas), "w1_step": float(round(step, 12))}
        doc["split"] = {"ratio": mu.ratio, "covariance_mode": mu.covariance_mode}
    if cfg.ensemble is not None:
        doc["ensemble"] = {"k_grid": list(cfg.ensemble.k_grid),
                           "weight_step": cfg.ensemble.weight_step}
    if cfg.parity_settings is not None:
        doc["parity"] = {"settings": [
            {("h2" if k == "target_h2" else k): v for k, v in s.items()}
            for s in cfg.parity_settings
        ]}
    if cfg.ratio_n_list is not None:
        doc["ratio"] = {"n_list": list(cfg.ratio_n_list)}
    return doc


def serialize_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# ---------------------------------------------------------------- data files


def _numeric_rows(path):
    """Yield ``(line_number, fields)`` for non-comment rows plus a dict of ``#key=value`` trailers."""
    meta, rows = {}, []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, sep, val = text[1:].partition("=")
                if sep:
                    meta[key.strip()] = (lineno, val.strip())
                continue
            rows.append((lineno, next(csv.reader([text]))))
    return rows, meta


def write_summary(path, stats, ids=None):
    ids = ids if ids is not None else [f"v{i + 1}" for i in range(stats.p)]
    if len(ids) != stats.p:
        raise ValidationError(f"got {len(ids)} ids for p={stats.p}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for i, v in zip(ids, stats.s):
            w.writerow((i, fmt(v), stats.n))
        if stats.y_norm2 is not None:
            fh.write(f"#y_norm2={fmt(stats.y_norm2)}\n")


def read_summary(path):
    """Read a summary file; returns ``(SummaryStats, ids)``."""
    rows, meta = _numeric_rows(path)
    if not rows or tuple(c.strip() for c in rows[0][1]) != SUMMARY_HEADER:
        raise ValidationError(f"{path}: header must be {','.join(SUMMARY_HEADER)}")
    ids, s, ns = [], [], set()
    for lineno, fields in rows[1:]:
        if len(fields) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        try:
            val = float(fields[1])
            n = int(fields[2])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed numeric field") from None
        if not math.isfinite(val):
            raise ValidationError(f"{path}:{lineno}: s is not finite")
        ids.append(fields[0])
        s.append(val)
        ns.add(n)
    if not s:
        raise ValidationError(f"{path}: no data rows")
    if len(ns) != 1:
        raise ValidationError(f"{path}: n column must be constant, found {sorted(ns)}")
    y_norm2 = None
    if "y_norm2" in meta:
        lineno, val = meta["y_norm2"]
        try:
            y_norm2 = float(val)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed y_norm2") from None
    return SummaryStats(s=np.array(s), n=ns.pop(), y_norm2=y_norm2), ids


def write_matrix(path, M, n_w=None):
    M = np.asarray(M, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if n_w is not None:
            fh.write(f"#n_w={int(n_w)}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow(fmt(x) for x in row)


def _read_spec_file(path):
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not a valid spec file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: spec file must be a mapping")
    r = _Reader()
    r.unknown(doc, ("kind", "p", "n_block", "rho", "n_w"), "")
    kind = r.get(doc, "kind", str, "", required=True, choices=("identity", "blockAR1"))
    p = r.get(doc, "p", int, "", required=True, check=_positive)
    n_block = r.get(doc, "n_block", int, "", 1, check=_positive)
    rho = r.get(doc, "rho", float, "", 0.0)
    n_w = r.get(doc, "n_w", int, "", None, check=_positive)
    if r.errors:
        raise ValidationError(f"{path}: " + "; ".join(r.errors))
    spec = CovarianceSpec(kind, p, n_block, rho)
    problems = spec.problems()
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return spec, n_w


def is_spec_file(path):
    return Path(path).suffix.lower() in (".yaml", ".yml")


def read_covariance_spec(path):
    """``CovarianceSpec`` from either a spec file or a dense CSV."""
    if is_spec_file(path):
        return _read_spec_file(path)[0]
    M, _ = read_matrix(path)
    return CovarianceSpec("dense", M.shape[0], matrix=M, source=str(path))


def read_matrix(path, sym_tol=SYM_TOL):
    """Dense symmetric matrix and optional ``n_w`` from a CSV or spec file.

    Raises
    ------
    ValidationError
        On malformed rows (with line number) or asymmetry beyond ``sym_tol``.
    """
    if is_spec_file(path):
        spec, n_w = _read_spec_file(path)
        return build_covariance(spec), n_w
    rows, meta = _numeric_rows(path)
    data = []
    for lineno, fields in rows:
        try:
            data.append([float(x) for x in fields])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed numeric field") from None
    if not data:
        raise ValidationError(f"{path}: no data rows")
    p = len(data)
    for (lineno, _), row in zip(rows, data):
        if len(row) != p:
            raise ValidationError(f"{path}:{lineno}: expected {p} columns, got {len(row)}")
    M = np.array(data)
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{path}: matrix has non-finite entries")
    asym = float(np.max(np.abs(M - M.T)))
    if asym > sym_tol * max(1.0, float(np.max(np.abs(M)))):
        raise ValidationError(f"{path}: matrix is not symmetric (max asymmetry {asym:.3g})")
    n_w = None
    if "n_w" in meta:
        lineno, val = meta["n_w"]
        try:
            n_w = int(val)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed n_w") from None
    return M, n_w


def write_vectors(path, columns, ids=None):
    """CSV with an ``id`` column followed by named vector columns."""
    names = list(columns)
    p = len(columns[names[0]])
    ids = ids if ids is not None else [f"v{i + 1}" for i in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names])
        for i in range(p):
            w.writerow([ids[i], *(fmt(columns[c][i]) for c in names)])


def read_vectors(path):
    rows, _ = _numeric_rows(path)
    if not rows or rows[0][1][0] != "id":
        raise ValidationError(f"{path}: first column must be id")
    names = rows[0][1][1:]
    cols = {c: [] for c in names}
    ids = []
    for lineno, fields in rows[1:]:
        if len(fields) != len(names) + 1:
            raise ValidationError(f"{path}:{lineno}: expected {len(names) + 1} fields")
        ids.append(fields[0])
        try:
            for c, v in zip(names, fields[1:]):
                cols[c].append(float(v))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed numeric field") from None
    return {c: np.array(v) for c, v in cols.items()}, ids


def write_results(path_or_file, rows):
    """Write result rows with the fixed schema; decimals at 9 significant digits."""

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for setting, h, mode, mean, se, n_rep, seed in rows:
            hp = h if isinstance(h, str) else fmt(h)
            w.writerow((setting, hp, mode, fmt(mean), fmt(se), int(n_rep), int(seed)))

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def read_results(path):
    rows, _ = _numeric_rows(path)
    if not rows or tuple(rows[0][1]) != RESULTS_HEADER:
        raise ValidationError(f"{path}: header must be {','.join(RESULTS_HEADER)}")
    out = []
    for lineno, f in rows[1:]:
        if len(f) != len(RESULTS_HEADER):
            raise ValidationError(f"{path}:{lineno}: expected {len(RESULTS_HEADER)} fields")
        try:
            out.append((f[0], float(f[1]), f[2], float(f[3]), float(f[4]), int(f[5]), int(f[6])))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed numeric field") from None
    return out


def write_table(path, M):
    """Plain numeric CSV, one matrix row per line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(np.asarray(M, dtype=float)):
            w.writerow(fmt(x) for x in row)


def read_table(path):
    rows, _ = _numeric_rows(path)
    try:
        data = [[float(x) for x in f] for _, f in rows]
    except ValueError:
        raise ValidationError(f"{path}: malformed numeric field") from None
    if not data or len({len(r) for r in data}) != 1:
        raise ValidationError(f"{path}: expected a nonempty rectangular table")
    return np.array(data)


def write_spec(path, spec, n_w=None):
    doc = {"kind": spec.kind, "p": spec.p}
    if spec.kind == "blockAR1":
        doc.update(n_block=spec.n_block, rho=spec.rho)
    if n_w is not None:
        doc["n_w"] = int(n_w)
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")


def write_split(path, split, ids=None):
    """Split vectors plus ``#n_train``, ``#n_valid`` and optional ``#y_norm2_valid`` trailers."""
    write_vectors(path, {"s_train": split.s_train, "s_valid": split.s_valid}, ids)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"#n_train={split.n_train}\n#n_valid={split.n_valid}\n")
        if split.y_norm2_valid is not None:
            fh.write(f"#y_norm2_valid={fmt(split.y_norm2_valid)}\n")


def read_split(path):
    cols, _ = read_vectors(path)
    _, meta = _numeric_rows(path)
    if "s_train" not in cols or "s_valid" not in cols:
        raise ValidationError(f"{path}: needs s_train and s_valid columns")
    try:
        n_train = int(meta["n_train"][1])
        n_valid = int(meta["n_valid"][1])
        yv = float(meta["y_norm2_valid"][1]) if "y_norm2_valid" in meta else None
    except KeyError as exc:
        raise ValidationError(f"{path}: missing #{exc.args[0]} trailer") from None
    except ValueError:
        raise ValidationError(f"{path}: malformed trailer value") from None
    return PseudoSplit(cols["s_train"], cols["s_valid"], n_train, n_valid, yv)
