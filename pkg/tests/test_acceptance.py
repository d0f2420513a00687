"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the terminal summary (see
``conftest.py``) prints all of them after the run. Run just this file with

    python3 -m pytest tests/test_acceptance.py -v
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from noteconsensus import cli
from noteconsensus import counterfactual as cf
from noteconsensus import econometrics as ec
from noteconsensus import embedder as emb
from noteconsensus import scorer
from noteconsensus.data import RatingMatrix, build_its_panel, latest_rating_matrix
from noteconsensus.simulator import GROUPS, AttackConfig, SimConfig, simulate

from oracles import (cd_oracle, clustered, dummies, flat_gradient, hc1, newton_glm, numeric_gradient,
                     random_matrix, random_model)

RESULTS: dict[int, str] = {}

pytestmark = pytest.mark.acceptance


def verdict(n, ok, detail, started, limit):
    elapsed = time.perf_counter() - started
    ok = bool(ok) and elapsed < limit
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / limit {limit:.0f}s]"
    RESULTS[n] = line
    print(line)
    return ok


def test_criterion_01_scorer_gradient_and_oracle():
    t = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        m = random_matrix(rng, 10, 10)
        model = random_model(rng, m)
        g = flat_gradient(scorer.loss_gradient(model, m))
        fd = numeric_gradient(model, m, scorer.ScorerConfig())
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    from conftest import dense_matrix
    fitted = scorer.fit(dense_matrix(np.array([[1.0, 1.0]])))
    oracle_loss, _, _ = cd_oracle([1.0, 1.0])
    gap = abs(fitted.final_loss - oracle_loss)
    assert verdict(1, worst < 1e-4 and gap < 0.01,
                   f"max grad rel err {worst:.2e} (<1e-4), 2-cell loss gap {gap:.2e} (<0.01)", t, 10)


def test_criterion_02_planted_recovery():
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    nn, nr = 200, 50
    mu = 0.1
    i_n, i_u = rng.normal(0, 0.5, nn), rng.normal(0, 0.5, nr)
    f_n, f_u = rng.normal(0, 1, nn), rng.normal(0, 1, nr)
    planted = mu + i_n[:, None] + i_u[None, :] + np.outer(f_n, f_u)
    ni, ri = np.divmod(np.arange(nn * nr), nr)
    m = RatingMatrix(tuple(f"n{i:03d}" for i in range(nn)), tuple(f"r{j:02d}" for j in range(nr)),
                     ni, ri, planted.ravel(), np.ones(nn * nr, dtype=np.int64))
    model = scorer.fit(m)
    rho = spearmanr(i_n, model.note_intercepts)[0]
    fn = model.note_factors[:, 0]
    cos = abs(fn @ f_n) / (np.linalg.norm(fn) * np.linalg.norm(f_n))
    assert verdict(2, rho >= 0.95 and cos >= 0.9,
                   f"intercept Spearman {rho:.4f} (>=0.95), |factor cosine| {cos:.4f} (>=0.9)", t, 60)


def _oracle_status(intercept, n_raters):
    # written from the threshold rule, independent of the package's status code
    if n_raters < 5:
        return "NEEDS_MORE_RATINGS"
    if intercept >= 0.40:
        return "CURRENTLY_RATED_HELPFUL"
    if intercept <= -0.05:
        return "CURRENTLY_RATED_NOT_HELPFUL"
    return "NEEDS_MORE_RATINGS"


def test_criterion_03_status_reproduction():
    t = time.perf_counter()
    sc = simulate(SimConfig(n_notes=1000, n_raters=1000, seed=3))
    result = scorer.replay(sc.events, scorer.ScorerConfig())
    model = result.final_model
    raters: dict[str, set] = {}
    for e in sc.events:
        raters.setdefault(e.note_id, set()).add(e.rater_id)
    intercept = dict(zip(model.note_ids, model.note_intercepts))
    agree = 0
    for note in (n.note_id for n in sc.notes):
        got = result.timelines[note].final_status.value if note in result.timelines else "NEEDS_MORE_RATINGS"
        want = _oracle_status(intercept.get(note, 0.0), len(raters.get(note, ())))
        agree += got == want
    share = agree / len(sc.notes)
    shown = sum(tl.displayed for tl in result.timelines.values())
    assert verdict(3, share >= 0.99,
                   f"{agree}/{len(sc.notes)} final statuses match ({share:.4f} >= 0.99; {shown} ever displayed)",
                   t, 300)


def test_criterion_04_embedder_fit_quality():
    t = time.perf_counter()
    sc = simulate(SimConfig(n_notes=800, n_raters=1500, seed=4))
    fm, _ = emb.filter_dataset(latest_rating_matrix(sc.events))
    config = emb.EmbedderConfig(epochs=20, seed=4)
    model = emb.fit_embeddings(fm, config)
    f1 = emb.classification_metrics(model, fm)["f1"]
    assert verdict(4, f1 >= 0.95, f"weighted F1 {f1:.4f} (>=0.95) on {fm.n_cells} ratings, 20 epochs", t, 300)


def test_criterion_05_similarity_structure():
    t = time.perf_counter()
    ok = 0
    pooled = None
    for seed in range(50):
        sc = simulate(SimConfig(n_notes=100, n_raters=250, neutral_share=0.0,
                                group_shares=(0.5, 0.0, 0.5), seed=seed))
        fm, _ = emb.filter_dataset(latest_rating_matrix(sc.events))
        st = emb.copair_distributions(fm, emb.fit_embeddings(fm, emb.EmbedderConfig(seed=seed)))
        ok += st.same_mean > 0 > st.opposite_mean
        pooled = st if pooled is None else replace(pooled, hist_counts=pooled.hist_counts + st.hist_counts)
    lo, hi = sorted(pooled.modes())
    assert verdict(5, ok == 50 and lo < 0 < hi,
                   f"same > 0 > opposite in {ok}/50, pooled modes {lo:+.3f} / {hi:+.3f}", t, 120)


def _its_scenario(seed, **kw):
    return simulate(SimConfig(n_notes=200, n_raters=1000, displayed_fraction=1.0, seed=seed, **kw))


def test_criterion_06_its_recovery():
    t = time.perf_counter()
    sc = _its_scenario(0)
    fit = ec.its_report(build_its_panel(sc.events, sc.truth.display_times()), "count").models["all"]
    jump, growth = np.exp(fit["D"]), np.exp(fit["DxT"])
    covered = 0
    for seed in range(50):
        null = _its_scenario(seed, display_jump=1.0)
        term = ec.its_report(build_its_panel(null.events, null.truth.display_times()), "count").models["all"].term("D")
        covered += term["ci_low"] <= 0 <= term["ci_high"]
    ok = 1.3 <= jump <= 1.5 and 1.02 <= growth <= 1.05 and covered >= 45
    assert verdict(6, ok, f"exp(b2) {jump:.3f} in [1.3,1.5], exp(b3) {growth:.4f} in [1.02,1.05], "
                          f"null CI covers 0 in {covered}/50 (>=45)", t, 300)


def test_criterion_07_group_polarization():
    t = time.perf_counter()
    hits = 0
    for seed in range(50):
        sc = _its_scenario(seed)
        shown = sc.truth.display_times()
        panels = {g: build_its_panel([e for e, lab in zip(sc.events, sc.truth.rating_groups) if lab == g], shown)
                  for g in GROUPS}
        rep = ec.its_report(panels, "leaning")
        hits += rep.models["similar"]["D"] > 0 > rep.models["dissimilar"]["D"]
    assert verdict(7, hits >= 45, f"similar b2 > 0 > dissimilar b2 in {hits}/50 (>=45)", t, 600)


def test_criterion_08_counterfactual_ordering():
    t = time.perf_counter()
    sc = simulate(SimConfig(n_notes=500, n_raters=1000, seed=0,
                            attack=AttackConfig(fraction=0.8, attackers_per_wave=100, cohort_size=120)))
    config = scorer.ScorerConfig()
    rep = scorer.replay(sc.events, config)
    fm, _ = emb.filter_dataset(latest_rating_matrix(sc.events))
    relations = emb.relations_for_events(sc.note_map, sc.events, emb.fit_embeddings(fm))
    kept, _ = cf.apply_policy(sc.events, relations, rep.timelines, cf.ExclusionPolicy.parse("Dissimilar"))
    d = cf.rescore_diff(sc.events, kept, config, rep.timelines)
    ds, ds_lo, _ = d.difference_ci("disappeared", "stable")
    sn, sn_lo, _ = d.difference_ci("stable", "never_displayed")
    gone = [n for n, tl in rep.timelines.items() if tl.cohort == "disappeared" and n in sc.truth.attacked]
    flipped = len(d.survived(gone))
    frac = flipped / len(gone) if gone else 0.0
    means = " > ".join(f"{c} {d.cohorts[c].mean_delta:+.3f}" for c in cf.COHORTS)
    ok = ds_lo > 0 and sn_lo > 0 and frac >= 0.5
    assert verdict(8, ok, f"{means}; diff CI lows {ds_lo:+.3f}, {sn_lo:+.3f} (>0); "
                          f"attacked disappeared flipped {flipped}/{len(gone)} (>=50%)", t, 600)


def test_criterion_09_glm_oracles():
    t = time.perf_counter()
    ols_err = glm_err = hc_err = 0.0
    for seed in range(10):
        rng = np.random.default_rng(900 + seed)
        n = int(rng.integers(20, 60))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        names = ["Intercept", "a", "b"]
        y = X @ [0.5, 1.0, -0.5] + rng.normal(size=n)
        r = ec.fit_ols(ec.DesignMatrix.build(dict(zip(names[1:], X[:, 1:].T)), y))
        ols_err = max(ols_err, np.max(np.abs(r.coef - np.linalg.solve(X.T @ X, X.T @ y))))
        # fixed-effect designs are compared against the dummy-variable oracle
        g = np.repeat(np.arange(4), -(-n // 4))[:n].astype(str)
        for family, mean in (("poisson", np.exp), ("binomial", lambda e: 1 / (1 + np.exp(-e)))):
            p = mean(X @ [0.2, 0.4, -0.3])
            yy = (rng.poisson(p) if family == "poisson" else rng.random(n) < p).astype(float)
            plain = ec.fit(ec.DesignMatrix.build(dict(zip(names[1:], X[:, 1:].T)), yy), family)
            glm_err = max(glm_err, np.max(np.abs(plain.coef - newton_glm(X, yy, family))))
            if family == "poisson":
                fe = ec.fit(ec.DesignMatrix.build(dict(zip(names[1:], X[:, 1:].T)), yy, intercept=False,
                                                  fixed_effects=g, clusters=g), family)
                ref = newton_glm(np.hstack([X[:, 1:], dummies(list(g))]), yy, family)
                glm_err = max(glm_err, np.max(np.abs(fe.coef - ref[:2])))
        own = ec.fit_ols(ec.DesignMatrix.build(dict(zip(names[1:], X[:, 1:].T)), y, clusters=np.arange(n)))
        hc = hc1(X, y - X @ own.coef, X.T @ X)
        hc_err = max(hc_err, np.max(np.abs(own.cov - hc)) / np.max(np.abs(hc)))
        cl = rng.integers(0, 6, n)
        grouped = ec.fit_ols(ec.DesignMatrix.build(dict(zip(names[1:], X[:, 1:].T)), y, clusters=cl))
        ref = clustered(X, y - X @ grouped.coef, X.T @ X, list(cl))
        hc_err = max(hc_err, np.max(np.abs(grouped.cov - ref)) / np.max(np.abs(ref)))
    ok = ols_err < 1e-10 and glm_err < 1e-6 and hc_err < 1e-8
    assert verdict(9, ok, f"OLS err {ols_err:.1e} (<1e-10), Poisson/logistic vs Newton {glm_err:.1e} (<1e-6), "
                          f"sandwich vs HC1/cluster oracle rel err {hc_err:.1e}", t, 60)


def test_criterion_10_end_to_end_determinism(tmp_path):
    t = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [cli.main(["all", "--run-dir", str(d)]) for d in (a, b)]
    files = sorted(p.relative_to(a) for p in a.rglob("*.tsv"))
    same = [p for p in files if (a / p).read_bytes() == (b / p).read_bytes()]
    summary_same = (a / "report/summary.txt").read_bytes() == (b / "report/summary.txt").read_bytes()
    ok = codes == [0, 0] and files and len(same) == len(files) and summary_same
    assert verdict(10, ok, f"exit codes {codes}, {len(same)}/{len(files)} TSV outputs byte-identical, "
                           f"summary identical: {summary_same}", t, 900)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
