import numpy as np
import pytest
from hypothesis import given, strategies as st

from noteconsensus.data import NoteRecord, PostRecord, build_its_panel, RatingEvent, QUARTER_MS
from noteconsensus.econometrics import (
    DesignMatrix, RankDeficiencyError, SeparationError, cluster_robust, disappearance_design, fit,
    fit_logistic, fit_ols, fit_poisson, its_design, its_report, percent_effect, write_its_report_tsv,
    REPORT_COLUMNS,
)

from oracles import clustered, dummies, hc1, newton_glm


def _design(X, y, names=None, **kw):
    X = np.asarray(X, float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    return DesignMatrix.build(dict(zip(names, X.T)), y, intercept=False, **kw)


# --- OLS -------------------------------------------------------------------

def test_ols_exact_line():
    x = np.arange(1.0, 7.0)
    r = fit_ols(DesignMatrix.build({"x": x}, 2 * x))
    assert r["x"] == pytest.approx(2.0, abs=1e-12) and r["Intercept"] == pytest.approx(0.0, abs=1e-12)
    assert r.term("x")["se"] == pytest.approx(0.0, abs=1e-12)


def test_ols_six_points_closed_form():
    # slope Sxy/Sxx = 15.5/17.5 = 31/35, intercept 3.5 - 2.5 * 31/35 = 9/7
    x = np.array([0.0, 1, 2, 3, 4, 5])
    y = np.array([1.0, 3, 2, 5, 4, 6])
    r = fit_ols(DesignMatrix.build({"x": x}, y))
    assert abs(r["x"] - 31 / 35) < 1e-10
    assert abs(r["Intercept"] - 9 / 7) < 1e-10


def test_ols_fixed_effects_absorb_group_constant():
    g = np.repeat(["a", "b", "c"], 4)
    y = np.repeat([1.0, 5.0, -2.0], 4)
    rng = np.random.default_rng(0)
    d = DesignMatrix.build({"x": rng.normal(size=12), "z": rng.normal(size=12)}, y,
                           fixed_effects=g, clusters=g)
    r = fit_ols(d)
    assert np.allclose(r.coef, 0.0, atol=1e-12)


def test_ols_within_equals_dummy_regression():
    rng = np.random.default_rng(1)
    g = np.repeat([f"n{i}" for i in range(6)], 5)
    x = rng.normal(size=(30, 2))
    y = x @ [0.7, -1.2] + np.repeat(rng.normal(size=6), 5) + 0.1 * rng.normal(size=30)
    r = fit_ols(_design(x, y, fixed_effects=g, clusters=g))
    full = np.hstack([x, dummies(list(g))])
    beta = np.linalg.lstsq(full, y, rcond=None)[0]
    assert np.allclose(r.coef, beta[:2], atol=1e-10)


def test_ols_rank_deficiency_names_column():
    x = np.arange(5.0)
    with pytest.raises(RankDeficiencyError) as exc:
        fit_ols(DesignMatrix.build({"x": x, "x2": 2 * x}, x ** 2))
    assert exc.value.columns == ("x2",)


@given(st.integers(0, 10_000))
def test_ols_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(5, 30)), int(rng.integers(1, 4))
    X = rng.normal(size=(n, k))
    y = rng.normal(size=n)
    r = fit_ols(DesignMatrix.build(dict(zip("abc", X.T)), y))
    Xf = np.column_stack([np.ones(n), X])
    closed = np.linalg.inv(Xf.T @ Xf) @ Xf.T @ y
    assert np.allclose(r.coef, closed, atol=1e-10)


# --- Poisson and logistic -------------------------------------------------

def test_poisson_constant_outcome():
    r = fit_poisson(DesignMatrix.build({}, np.full(10, 3.0)))
    assert r["Intercept"] == pytest.approx(np.log(3.0), abs=1e-10)


def test_poisson_eight_rows_match_newton():
    X = np.array([[1, 0.5], [1, -1.0], [1, 2.0], [1, 0.0], [1, 1.5], [1, -0.5], [1, 0.3], [1, 1.1]])
    y = np.array([2, 0, 7, 1, 4, 1, 2, 3.0])
    r = fit_poisson(_design(X, y, ["Intercept", "x"]))
    assert np.allclose(r.coef, newton_glm(X, y, "poisson"), atol=1e-6)


def test_poisson_fixed_effects_match_dummy_newton():
    rng = np.random.default_rng(2)
    g = np.repeat([f"n{i}" for i in range(5)], 8)
    x = rng.normal(size=(40, 2))
    y = rng.poisson(np.exp(0.3 * x[:, 0] - 0.2 * x[:, 1] + np.repeat(rng.normal(size=5), 8))).astype(float)
    r = fit_poisson(_design(x, y, fixed_effects=g, clusters=g))
    oracle = newton_glm(np.hstack([x, dummies(list(g))]), y, "poisson")
    assert np.allclose(r.coef, oracle[:2], atol=1e-6)
    assert r.reference_group is not None and set(r.fixed_effects) == set(g)
    assert "incidental" in r.notes[0]


def test_poisson_drops_all_zero_groups():
    g = np.repeat(["a", "b", "c"], 4)
    x = np.tile([0.0, 1, 2, 3], 3)
    y = np.array([1, 2, 2, 4, 0, 0, 0, 0, 2, 1, 3, 5.0])
    r = fit_poisson(_design(x[:, None], y, ["x"], fixed_effects=g, clusters=g))
    assert r.dropped_groups == ("b",) and r.n_obs == 8


def test_poisson_rejects_negative_outcome():
    with pytest.raises(ValueError):
        fit_poisson(DesignMatrix.build({}, [1.0, -1.0]))


def test_logistic_balanced_intercept_zero():
    r = fit_logistic(DesignMatrix.build({}, [0.0, 1.0] * 5))
    assert r["Intercept"] == pytest.approx(0.0, abs=1e-10)


def test_logistic_ten_rows_match_newton():
    X = np.column_stack([np.ones(10), [0.1, -1.2, 0.4, 2.0, -0.3, 1.1, -0.8, 0.6, 1.5, -1.7],
                         [1, 0, 0, 1, 1, 0, 1, 0, 1, 0]])
    y = np.array([1, 0, 1, 1, 0, 1, 0, 0, 1, 1.0])
    r = fit_logistic(_design(X, y, ["Intercept", "x", "flag"]))
    assert np.allclose(r.coef, newton_glm(X, y, "binomial"), atol=1e-6)


def test_logistic_separation_names_column():
    x = np.array([0.0, 1, 2, 3, 4, 5])
    with pytest.raises(SeparationError) as exc:
        fit_logistic(DesignMatrix.build({"x": x}, [0, 0, 0, 1, 1, 1.0]))
    assert exc.value.column == "x"


@given(st.integers(0, 10_000), st.sampled_from(["poisson", "binomial"]))
def test_glm_score_vanishes(seed, family):
    rng = np.random.default_rng(seed)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])
    eta = X @ [0.2, 0.5, -0.4]
    y = rng.poisson(np.exp(eta)) if family == "poisson" else (rng.random(n) < 1 / (1 + np.exp(-eta)))
    y = y.astype(float)
    try:
        r = fit(_design(X, y, ["Intercept", "a", "b"]), family)
    except SeparationError:
        return
    mu = np.exp(X @ r.coef) if family == "poisson" else 1 / (1 + np.exp(-X @ r.coef))
    assert np.linalg.norm(X.T @ (y - mu)) < 1e-6


# --- covariance ------------------------------------------------------------

def test_own_cluster_reduces_to_hc1():
    rng = np.random.default_rng(4)
    x = rng.normal(size=40)
    y = 1 + 0.5 * x + rng.normal(size=40) * (1 + np.abs(x))
    X = np.column_stack([np.ones(40), x])
    r = fit_ols(DesignMatrix.build({"x": x}, y, clusters=np.arange(40)))
    resid = y - X @ r.coef
    assert np.allclose(r.cov, hc1(X, resid, X.T @ X), atol=1e-12)
    unclustered = fit_ols(DesignMatrix.build({"x": x}, y))
    assert np.allclose(unclustered.cov, r.cov)


def test_clustered_matches_oracle_all_families():
    rng = np.random.default_rng(5)
    n = 90
    cl = rng.integers(0, 12, n).astype(str)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    for family, y in (("gaussian", X @ [1, 2] + rng.normal(size=n)),
                      ("poisson", rng.poisson(np.exp(X @ [0.3, 0.4])).astype(float)),
                      ("binomial", (rng.random(n) < 1 / (1 + np.exp(-X @ [0.1, 0.8]))).astype(float))):
        r = fit(_design(X, y, ["Intercept", "x"], clusters=cl), family)
        mu = {"gaussian": X @ r.coef, "poisson": np.exp(X @ r.coef),
              "binomial": 1 / (1 + np.exp(-X @ r.coef))}[family]
        w = {"gaussian": np.ones(n), "poisson": mu, "binomial": mu * (1 - mu)}[family]
        expected = clustered(X, y - mu, (X * w[:, None]).T @ X, list(cl))
        assert np.allclose(r.cov, expected, rtol=1e-8, atol=1e-14)
        assert np.allclose(cluster_robust(r, _design(X, y, ["Intercept", "x"], clusters=cl)), r.cov)


def test_cluster_robust_recomputes_fixed_effect_fits():
    rng = np.random.default_rng(6)
    g = np.repeat([f"n{i}" for i in range(10)], 6)
    x = rng.normal(size=(60, 1))
    y = rng.poisson(np.exp(0.4 * x[:, 0] + np.repeat(rng.normal(size=10), 6))).astype(float)
    d = _design(x, y, ["x"], fixed_effects=g, clusters=g)
    for family in ("gaussian", "poisson"):
        r = fit(d, family)
        assert np.allclose(cluster_robust(r, d), r.cov)


def test_single_cluster_rejected():
    with pytest.raises(ValueError, match="two clusters"):
        fit_ols(DesignMatrix.build({"x": np.arange(5.0)}, np.arange(5.0) ** 2, clusters=["a"] * 5))


def test_iid_clustered_close_to_classical():
    rng = np.random.default_rng(7)
    n = 5000
    x = rng.normal(size=n)
    y = 1 + 0.5 * x + rng.normal(size=n)
    cl = rng.integers(0, 250, n)
    r = fit_ols(DesignMatrix.build({"x": x}, y, clusters=cl))
    X = np.column_stack([np.ones(n), x])
    resid = y - X @ r.coef
    classical = np.sqrt(np.diag(resid @ resid / (n - 2) * np.linalg.inv(X.T @ X)))
    assert np.all(np.abs(r.se / classical - 1) < 0.15)


def test_duplicated_rows_leave_clustered_se_unchanged_up_to_correction():
    rng = np.random.default_rng(8)
    n, G = 40, 8
    cl = np.repeat(np.arange(G), n // G)
    x = rng.normal(size=n)
    y = 2 - x + rng.normal(size=n)
    a = fit_ols(DesignMatrix.build({"x": x}, y, clusters=cl))
    b = fit_ols(DesignMatrix.build({"x": np.tile(x, 2)}, np.tile(y, 2), clusters=np.tile(cl, 2)))
    corr = lambda N: G / (G - 1) * (N - 1) / (N - 2)
    assert np.allclose(a.cov / corr(n), b.cov / corr(2 * n), rtol=1e-10)


@given(st.integers(0, 10_000))
def test_covariance_invariant_to_labels_and_order(seed):
    rng = np.random.default_rng(seed)
    n = 30
    cl = rng.integers(0, 5, n)
    cl[:5] = np.arange(5)
    x = rng.normal(size=n)
    y = x + rng.normal(size=n)
    base = fit_ols(DesignMatrix.build({"x": x}, y, clusters=cl))
    relabel = fit_ols(DesignMatrix.build({"x": x}, y, clusters=np.array(["c%d" % (9 - c) for c in cl])))
    perm = rng.permutation(n)
    shuffled = fit_ols(DesignMatrix.build({"x": x[perm]}, y[perm], clusters=cl[perm]))
    assert np.allclose(base.cov, relabel.cov) and np.allclose(base.cov, shuffled.cov)
    assert np.allclose(base.cov, base.cov.T)
    assert np.all(np.linalg.eigvalsh(base.cov) >= -1e-12)
    assert np.allclose(base.ci_high - base.coef, 1.959963984540054 * base.se)


# --- effects and ITS -------------------------------------------------------

def test_percent_effect():
    assert percent_effect(0.0) == 0.0
    assert percent_effect(0.3314) == pytest.approx(0.393, abs=5e-4)
    assert percent_effect(0.0354) == pytest.approx(0.036, abs=5e-4)
    b = np.linspace(-2, 2, 50)
    assert np.all(np.diff(percent_effect(b)) > 0)


T0 = 1_700_000_000_000


def _toy_panel(n_notes=30, seed=0, jump=1.5):
    rng = np.random.default_rng(seed)
    ev = []
    for i in range(n_notes):
        for q in range(-16, 17):
            lam = 3.0 * (jump if q >= 0 else 1.0) * (1.03 ** max(q, 0))
            for k in range(rng.poisson(lam)):
                ev.append(RatingEvent(f"n{i}", f"u{i}_{q}_{k}", T0 + q * QUARTER_MS + k, float(rng.random() < 0.6)))
    return build_its_panel(ev, {f"n{i}": T0 for i in range(n_notes)})


def test_its_design_columns():
    d = its_design(_toy_panel(5), "count")
    assert d.columns == ("T", "D", "DxT") and d.fixed_effects is not None


def test_its_report_recovers_jump_and_skips_empty():
    p = _toy_panel(60, seed=1)
    rep = its_report(p, "count", {"all": None, "none": []})
    assert "none" in rep.skipped
    eff = rep.percent_effects("all")
    assert 0.3 < eff["D"][0] < 0.7
    with pytest.raises(ValueError):
        its_report(p, "leaning").percent_effects("all")


def test_its_report_tsv(tmp_path):
    p = _toy_panel(10)
    reports = [its_report(p, "count"), its_report({"a": p, "b": p}, "leaning")]
    rows = write_its_report_tsv(reports, tmp_path / "its.tsv")
    lines = (tmp_path / "its.tsv").read_text().splitlines()
    assert tuple(lines[0].split("\t")) == REPORT_COLUMNS
    assert rows == 9 and len(lines) == 10
    assert lines[1].split("\t")[-1] != "nan" and lines[-1].split("\t")[-1] == "nan"


# --- disappearance design --------------------------------------------------

def _post(pid, author, politics):
    return PostRecord(pid, author, politics, False, False, False, 0.1, 0.2, False, True, 100.0, 10, 5, 0.3, 0.1)


def test_disappearance_design_clusters_and_missing_posts():
    notes = {f"n{i}": NoteRecord(f"n{i}", "w", f"p{i}", 1) for i in range(4)}
    posts = {f"p{i}": _post(f"p{i}", f"a{i % 2}", i % 2 == 0) for i in range(3)}
    d = disappearance_design({n: i % 2 == 0 for i, n in enumerate(sorted(notes))}, notes, posts,
                             covariates=("topic_politics", "log_followers"))
    assert d.n_obs == 3 and d.n_dropped == 1
    assert list(d.clusters) == ["a0", "a1", "a0"]
    assert d.columns == ("Intercept", "topic_politics", "log_followers")
    assert d.X[0, 2] == pytest.approx(np.log1p(10))
