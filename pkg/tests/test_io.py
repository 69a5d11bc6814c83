import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sumtrain import io
from sumtrain.errors import ConfigError, ValidationError
from sumtrain.evaluation import DEFAULT_THETA_GRID
from sumtrain.model_gen import CovarianceSpec
from sumtrain.summary import PseudoSplit, SummaryStats

finite = st.floats(-1e12, 1e12, allow_nan=False).filter(lambda x: x == 0 or abs(x) > 1e-300)
tmp_ok = settings(suppress_health_check=[HealthCheck.function_scoped_fixture])

MINIMAL = """
version: 1
generator: {n: 100, p: 40, n_w: 50, kappa: 0.1, h2: 0.8}
"""


def close9(a, b):
    np.testing.assert_allclose(a, b, rtol=5e-9, atol=0)


# ---------------------------------------------------------------- config


def test_minimal_config_defaults():
    cfg = io.parse_config_text(MINIMAL).experiment
    assert cfg.ratio == 0.8
    assert cfg.grid == DEFAULT_THETA_GRID
    assert cfg.replicates == 50 and cfg.family == "ridge"
    assert cfg.gen.cov == CovarianceSpec("identity", 40)


def test_bad_kappa_single_error():
    with pytest.raises(ConfigError) as info:
        io.parse_config_text(MINIMAL.replace("kappa: 0.1", "kappa: 1.5"))
    assert len(info.value.messages) == 1
    assert "generator.kappa" in info.value.messages[0] and "[0, 1]" in info.value.messages[0]


def test_all_errors_reported_with_paths():
    text = """
version: 2
generator: {n: -1, p: 40, n_w: 50, kappa: 0.1, h2: 0.8, colour: red}
split: {ratio: 1.5}
extra: 1
"""
    with pytest.raises(ConfigError) as info:
        io.parse_config_text(text)
    msgs = "\n".join(info.value.messages)
    for needle in ("version", "generator.n", "generator.colour", "split.ratio", "extra"):
        assert needle in msgs
    assert len(info.value.messages) >= 5


def test_missing_and_mistyped_keys():
    with pytest.raises(ConfigError) as info:
        io.parse_config_text("version: 1\ngenerator: {n: 10, p: x, kappa: 0.1, h2: 0.5}\n")
    msgs = "\n".join(info.value.messages)
    assert "generator.p" in msgs and "generator.n_w" in msgs


def test_malformed_yaml():
    with pytest.raises(ConfigError):
        io.parse_config_text("version: [1\n")


FULL = """
version: 1
experiment: {setting: s1, replicates: 3, seed: 4, modes: [pseudo, holdout], n_test: 30, output: r.csv}
generator:
  n: 100
  p: 40
  n_w: 50
  kappa: 0.1
  sigma_beta2: 2.0
  h2: 0.8
  effect_dist: rademacher
  covariance: {kind: blockAR1, n_block: 4, rho: 0.9}
estimator: {family: threshold, grid: [1, 5, 10]}
split: {ratio: 0.75, covariance_mode: oracle, noise: rademacher}
parity:
  settings: [{h2: 0.3, p: 20}, {kappa: 0.5}]
ratio: {n_list: [40, 80]}
ensemble: {k_grid: [5, 10], weight_step: 0.1}
"""

MULTI = """
version: 1
experiment: {replicates: 2, seed: 1}
generator: {n: 50, p: 20, n_w: 30}
populations:
  - {kappa: 0.5, h2: 0.5, covariance: {kind: blockAR1, n_block: 2, rho: 0.5}}
  - {kappa: 0.3, h2: 0.7}
sigma_cross: [[1.0, 0.4], [0.4, 2.0]]
multi: {thetas: [1.0, 2.0], w1_step: 0.1}
split: {ratio: 0.8}
"""


@pytest.mark.parametrize("text", [MINIMAL, FULL, MULTI])
def test_config_round_trip(text):
    a = io.parse_config_text(text)
    b = io.parse_config_text(io.serialize_config(a))
    assert io.config_to_dict(a) == io.config_to_dict(b)
    if a.experiment is not None:
        assert a.experiment == b.experiment
    if a.multi is not None:
        assert a.multi.mcfg == b.multi.mcfg
        np.testing.assert_array_equal(a.multi.mcfg.sigma_cross, b.multi.mcfg.sigma_cross)
        np.testing.assert_allclose(a.multi.w1_grid, b.multi.w1_grid)


def test_full_config_fields():
    cfg = io.parse_config_text(FULL)
    e = cfg.experiment
    assert e.family == "threshold" and e.grid == (1, 5, 10)
    assert e.covariance_mode == "oracle" and e.split_noise == "rademacher"
    assert cfg.parity_settings == [{"target_h2": 0.3, "p": 20}, {"kappa": 0.5}]
    assert cfg.ratio_n_list == [40, 80]
    assert list(cfg.ensemble.k_grid) == [5, 10]


def test_dense_covariance_path(tmp_path):
    io.write_matrix(tmp_path / "S.csv", np.array([[1.0, 0.2], [0.2, 1.0]]))
    (tmp_path / "c.yaml").write_text(
        "version: 1\ngenerator: {n: 10, p: 2, n_w: 5, kappa: 0.5, h2: 0.5, "
        "covariance: {kind: dense, path: S.csv}}\n")
    cfg = io.parse_config(tmp_path / "c.yaml").experiment
    np.testing.assert_array_equal(cfg.gen.cov.matrix, [[1.0, 0.2], [0.2, 1.0]])


# ---------------------------------------------------------------- data files


@tmp_ok
@given(st.lists(finite, min_size=1, max_size=20), st.integers(1, 10**6),
       st.one_of(st.none(), st.floats(1e-6, 1e9)))
def test_summary_round_trip(tmp_path, s, n, y2):
    stats = SummaryStats(s=np.array(s), n=n, y_norm2=y2)
    path = tmp_path / "s.csv"
    io.write_summary(path, stats)
    back, ids = io.read_summary(path)
    close9(back.s, stats.s)
    assert back.n == n and len(ids) == len(s)
    if y2 is None:
        assert back.y_norm2 is None
    else:
        close9(back.y_norm2, y2)


def test_summary_header_and_rows(tmp_path):
    path = tmp_path / "s.csv"
    io.write_summary(path, SummaryStats(s=np.array([1.5, -2.0]), n=7, y_norm2=3.0), ids=["a", "b"])
    assert path.read_text().splitlines() == ["id,s,n", "a,1.5,7", "b,-2,7", "#y_norm2=3"]
    path.write_text("id,s,n\na,1,7\nb,oops,7\n")
    with pytest.raises(ValidationError, match=":3:"):
        io.read_summary(path)
    path.write_text("id,s,n\na,1,7\nb,2,8\n")
    with pytest.raises(ValidationError, match="constant"):
        io.read_summary(path)


@tmp_ok
@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(-1e6, 1e6)),
       st.one_of(st.none(), st.integers(1, 10**6)))
def test_matrix_round_trip(tmp_path, A, n_w):
    M = A + A.T
    path = tmp_path / "m.csv"
    io.write_matrix(path, M, n_w=n_w)
    back, nw = io.read_matrix(path)
    np.testing.assert_allclose(back, M, rtol=5e-9, atol=5e-9 * np.abs(M).max())
    assert nw == n_w


def test_asymmetric_matrix_rejected(tmp_path):
    M = np.eye(3)
    M[0, 2] = 1e-3
    io.write_matrix(tmp_path / "m.csv", M)
    with pytest.raises(ValidationError, match="max asymmetry 0.001"):
        io.read_matrix(tmp_path / "m.csv")


def test_spec_file_matrix(tmp_path):
    spec = CovarianceSpec("blockAR1", 4, 2, 0.5)
    io.write_spec(tmp_path / "s.yaml", spec, n_w=9)
    M, n_w = io.read_matrix(tmp_path / "s.yaml")
    assert n_w == 9 and M[0, 1] == 0.5 and M[1, 2] == 0.0
    assert io.read_covariance_spec(tmp_path / "s.yaml") == spec


@tmp_ok
@given(st.lists(finite, min_size=1, max_size=10), st.lists(finite, min_size=1, max_size=10),
       st.integers(1, 1000), st.integers(1, 1000), st.floats(1e-3, 1e6))
def test_split_round_trip(tmp_path, a, b, n_tr, n_v, y2):
    m = min(len(a), len(b))
    split = PseudoSplit(np.array(a[:m]), np.array(b[:m]), n_tr, n_v, y2)
    io.write_split(tmp_path / "sp.csv", split)
    back = io.read_split(tmp_path / "sp.csv")
    close9(back.s_train, split.s_train)
    close9(back.s_valid, split.s_valid)
    assert (back.n_train, back.n_valid) == (n_tr, n_v)
    close9(back.y_norm2_valid, y2)


def test_table_round_trip(tmp_path, rng):
    M = rng.standard_normal((5, 3))
    io.write_table(tmp_path / "t.csv", M)
    close9(io.read_table(tmp_path / "t.csv"), M)
    (tmp_path / "t.csv").write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        io.read_table(tmp_path / "t.csv")


@tmp_ok
@given(st.lists(st.tuples(st.text("abc-", min_size=1, max_size=5), finite,
                          st.sampled_from(["pseudo", "individual"]), finite,
                          st.floats(0, 1e6), st.integers(0, 100), st.integers(0, 2**31)),
                max_size=8))
def test_results_round_trip(tmp_path, rows):
    path = tmp_path / "r.csv"
    io.write_results(path, rows)
    back = io.read_results(path)
    assert len(back) == len(rows)
    for r, b in zip(rows, back):
        assert b[0] == r[0] and b[2] == r[2] and b[5:] == r[5:]
        close9(np.array([b[1], b[3], b[4]]), np.array([r[1], r[3], r[4]]))


def test_results_golden_sweep_file(tmp_path):
    rows = [("fig", t, "pseudo", 0.5, 0.01, 50, 1) for t in DEFAULT_THETA_GRID]
    io.write_results(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "setting,hyperparameter,mode,mean,se,n_replicates,seed"
    assert len(lines) == 26
    assert lines[1] == "fig,0.001,pseudo,0.5,0.01,50,1"
    assert lines[-1] == "fig,100,pseudo,0.5,0.01,50,1"


def test_fmt_nine_digits():
    assert io.fmt(1 / 3) == "0.333333333"
    assert io.fmt(float("nan")) == "nan"
