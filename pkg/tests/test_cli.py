import subprocess
import sys

import numpy as np
import pytest

from sumtrain import io
from sumtrain.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from sumtrain.summary import PseudoSplit

CONFIG = """
version: 1
experiment: {setting: cli, replicates: 3, seed: 3, modes: [pseudo, individual, theory, holdout], n_test: 100}
generator:
  n: 120
  p: 40
  n_w: 60
  kappa: 0.3
  h2: 0.6
  covariance: {kind: blockAR1, n_block: 4, rho: 0.5}
estimator: {grid: {log10_min: -2, log10_max: 1, num: 4}}
parity:
  settings: [{h2: 0.3}, {h2: 0.6}]
ratio: {n_list: [40, 80]}
ensemble: {k_grid: [5, 20], weight_step: 0.25}
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(CONFIG)
    return path


def test_theory_cor1_prints_value(capsys):
    code = main(["theory", "--preset", "cor1", "--theta", "1", "--gamma-w", "1", "--h2", "0.5",
                 "--p", "1000", "--n-train", "800", "--n-w", "1000"])
    assert code == EXIT_OK
    assert capsys.readouterr().out.strip() == "0.122015"


def test_theory_inconsistent_gamma(capsys):
    code = main(["theory", "--theta", "1", "--gamma-w", "2", "--h2", "0.5", "--p", "1000",
                 "--n-train", "800", "--n-w", "1000"])
    assert code == EXIT_INVALID


def test_usage_errors(capsys):
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["theory", "--theta", "1", "--nope"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_validate(cfg, tmp_path, capsys):
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK
    bad = tmp_path / "bad.yaml"
    bad.write_text(CONFIG.replace("kappa: 0.3", "kappa: 1.5").replace("h2: 0.6\n", "h2: 7\n"))
    assert main(["validate", "--config", str(bad)]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "generator.kappa" in err and "generator.h2" in err


def test_sweep_byte_identical(cfg, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["sweep", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rows = io.read_results(a)
    assert len(rows) == 4 * 3 + 2
    c = tmp_path / "c.csv"
    main(["sweep", "--config", str(cfg), "--out", str(c), "--seed", "4"])
    assert c.read_bytes() != a.read_bytes()


def test_data_pipeline(cfg, tmp_path, capsys):
    d = tmp_path / "d"
    assert main(["generate", "--config", str(cfg), "--out", str(d), "--individual"]) == EXIT_OK
    assert main(["summarize", "--x", str(d / "X.csv"), "--y", str(d / "y.csv"),
                 "--out", str(d / "s2.csv")]) == EXIT_OK
    a, _ = io.read_summary(d / "summary.csv")
    b, _ = io.read_summary(d / "s2.csv")
    np.testing.assert_allclose(a.s, b.s, rtol=1e-7, atol=1e-7 * np.abs(a.s).max())
    split = d / "split.csv"
    assert main(["split", "--summary", str(d / "summary.csv"), "--ld", str(d / "ld.csv"),
                 "--seed", "1", "--out", str(split)]) == EXIT_OK
    sp = io.read_split(split)
    np.testing.assert_allclose(sp.s_train + sp.s_valid, a.s, rtol=1e-8, atol=1e-8 * np.abs(a.s).max())
    for mode in ("population", "oracle"):
        assert main(["split", "--summary", str(d / "summary.csv"), "--mode", mode,
                     "--sigma", str(d / "sigma.yaml"), "--beta", str(d / "beta.csv"),
                     "--sigma-eps2", "0.5", "--out", str(d / f"{mode}.csv")]) == EXIT_OK
    assert main(["fit", "--split", str(split), "--ld", str(d / "ld.csv"), "--theta", "1",
                 "--out", str(d / "b.csv")]) == EXIT_OK
    cols, _ = io.read_vectors(d / "b.csv")
    assert cols["beta_hat"].shape == (40,)
    assert main(["fit", "--split", str(split), "--rule", "threshold", "--top-k", "5",
                 "--out", str(d / "t.csv")]) == EXIT_OK
    assert np.count_nonzero(io.read_vectors(d / "t.csv")[0]["beta_hat"]) == 5
    capsys.readouterr()
    assert main(["tune", "--split", str(split), "--ld", str(d / "ld.csv"),
                 "--sigma", str(d / "sigma.yaml")]) == EXIT_OK
    out = capsys.readouterr()
    assert out.out.startswith("setting,hyperparameter,mode")
    assert "best=" in out.err


def test_missing_inputs_exit_invalid(cfg, tmp_path):
    assert main(["fit", "--split", str(tmp_path / "nope.csv"), "--theta", "1"]) == EXIT_INVALID
    assert main(["sweep"]) == EXIT_INVALID


def test_numerical_error_exit(tmp_path):
    split = tmp_path / "z.csv"
    io.write_split(split, PseudoSplit(np.zeros(3), np.ones(3), 8, 2, 1.0))
    io.write_matrix(tmp_path / "ld.csv", np.eye(3) * 5, n_w=5)
    assert main(["tune", "--split", str(split), "--ld", str(tmp_path / "ld.csv")]) == EXIT_NUMERICAL


def test_experiment_subcommands(cfg, tmp_path, capsys):
    for cmd in ("parity", "ratio", "ensemble"):
        out = tmp_path / f"{cmd}.csv"
        assert main([cmd, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert io.read_results(out)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sumtrain", "theory", "--theta", "1", "--h2", "0.5",
                           "--n-train", "800", "--n-w", "1000"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.122015"


def test_tune_rejects_singular_panel_denominator(tmp_path, capsys):
    split = tmp_path / "s.csv"
    io.write_split(split, PseudoSplit(np.ones(4), np.ones(4), 8, 2, 1.0))
    W = np.random.default_rng(0).standard_normal((3, 4))
    io.write_matrix(tmp_path / "ld.csv", W.T @ W, n_w=3)
    assert main(["tune", "--split", str(split), "--ld", str(tmp_path / "ld.csv")]) == EXIT_INVALID
    assert "--sigma" in capsys.readouterr().err
