import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from noteconsensus.data import NoteRecord, RatingEvent, latest_rating_matrix
from noteconsensus.embedder import (
    EmbedderConfig, EmptyDatasetError, RaterClass, UndefinedSimilarityError, classification_metrics,
    classify_cosine, classify_relations, copair_distributions, cosine, filter_dataset, fit_embeddings,
    mse_gradient, mse_loss, project_note_factors, read_embeddings, read_relations_tsv,
    relations_for_events, write_embeddings, write_relations_tsv,
)
from noteconsensus.scorer import ScoringModel
from noteconsensus.simulator import SimConfig, simulate

from conftest import dense_matrix


def _events(pairs, level=1.0):
    return [RatingEvent(n, u, 1 + k, level) for k, (n, u) in enumerate(pairs)]


# --- filter ----------------------------------------------------------------

def test_filter_keeps_dense_data():
    ev = _events([(f"n{i}", f"u{j}") for i in range(5) for j in range(5)])
    m, rep = filter_dataset(ev)
    assert m.n_cells == 25 and rep.notes_removed == rep.raters_removed == 0


def test_filter_drops_sparse_rater_only():
    pairs = [(f"n{i}", f"u{j}") for i in range(5) for j in range(5)] + [("n0", "lone")]
    m, rep = filter_dataset(_events(pairs))
    assert "lone" not in m.rater_ids and "n0" in m.note_ids
    assert int(m.raters_per_note()[m.note_ids.index("n0")]) == 5
    assert rep.raters_removed == 1 and rep.notes_removed == 0


def test_filter_chain_removal():
    # u5 has five ratings only because of n5; n5 has five raters only because of u5
    pairs = [(f"n{i}", f"u{j}") for i in range(5) for j in range(5)]
    pairs += [("n5", "u0"), ("n5", "u1"), ("n5", "u2"), ("n5", "u5")]
    pairs += [("n0", "u5"), ("n1", "u5"), ("n2", "u5"), ("n3", "u5")]
    pairs += [("n5", "v")]
    m, rep = filter_dataset(_events(pairs))
    assert "v" not in m.rater_ids and "n5" not in m.note_ids and "u5" not in m.rater_ids
    assert rep.notes_removed == 1 and rep.raters_removed == 2


def test_filter_everything_removed():
    with pytest.raises(EmptyDatasetError):
        filter_dataset(_events([("n", "u")]))


@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 9)), min_size=1, max_size=80, unique=True),
       st.integers(1, 4))
def test_filter_fixed_point(cells, k):
    ev = _events([(f"n{a}", f"u{b}") for a, b in cells])
    cfg = EmbedderConfig(min_ratings_per_note=k, min_ratings_per_rater=k)
    try:
        m, _ = filter_dataset(ev, cfg)
    except EmptyDatasetError:
        return
    again, rep = filter_dataset(m, cfg)
    assert again.cells() == m.cells() and rep.cells_removed == 0
    assert m.raters_per_note().min() >= k and m.ratings_per_rater().min() >= k


# --- fit -------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_mse_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    vals = rng.choice([0.0, 0.5, 1.0], size=(6, 7))
    m = dense_matrix(vals, rng.random((6, 7)) < 0.7)
    model = ScoringModel(float(rng.normal()), m.rater_ids, m.note_ids, rng.normal(size=7), rng.normal(size=6),
                         rng.normal(size=(7, 3)), rng.normal(size=(6, 3)))
    g = mse_gradient(model, m)
    h = 1e-6
    for block in ("mu", "rater_intercepts", "note_intercepts", "rater_factors", "note_factors"):
        base = np.array(getattr(model, block), dtype=float)
        analytic = np.ravel(g[block])
        numeric = np.zeros(base.size)
        for i in range(base.size):
            vals_p, vals_m = base.ravel().copy(), base.ravel().copy()
            vals_p[i] += h
            vals_m[i] -= h
            mp = _with(model, block, vals_p.reshape(base.shape))
            mm = _with(model, block, vals_m.reshape(base.shape))
            numeric[i] = (mse_loss(mp, m) - mse_loss(mm, m)) / (2 * h)
        assert np.linalg.norm(analytic - numeric) <= 1e-4 * max(np.linalg.norm(numeric), 1e-8)


def _with(model, block, value):
    from dataclasses import replace
    return replace(model, **{block: float(value) if block == "mu" else value})


def test_single_cell_interpolates():
    m = dense_matrix(np.array([[1.0]]))
    model = fit_embeddings(m, EmbedderConfig(factor_dim=4, epochs=50, min_ratings_per_note=1,
                                             min_ratings_per_rater=1))
    assert model.final_loss < 1e-12
    assert len(model.loss_history) == 50


def test_fit_is_deterministic_and_seed_sensitive():
    rng = np.random.default_rng(1)
    m = dense_matrix(rng.choice([0.0, 1.0], size=(20, 20)))
    cfg = EmbedderConfig(factor_dim=8, epochs=3, batch_size=64)
    a, b = fit_embeddings(m, cfg), fit_embeddings(m, cfg)
    assert np.array_equal(a.rater_factors, b.rater_factors)
    c = fit_embeddings(m, EmbedderConfig(factor_dim=8, epochs=3, batch_size=64, seed=9))
    assert not np.array_equal(a.rater_factors, c.rater_factors)


def test_fit_aborts_on_non_finite_loss():
    rng = np.random.default_rng(2)
    m = dense_matrix(rng.choice([0.0, 1.0], size=(10, 10)))
    with pytest.raises(FloatingPointError):
        fit_embeddings(m, EmbedderConfig(factor_dim=4, epochs=20, learning_rate=1e4, init_scale=1.0))


def test_classification_metrics_on_perfect_model():
    vals = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = dense_matrix(vals)
    model = ScoringModel(0.0, m.rater_ids, m.note_ids, np.zeros(2), np.zeros(2), np.eye(2), np.eye(2))
    out = classification_metrics(model, m)
    assert out["f1"] == 1.0 and out["n"] == 4


def test_config_validation():
    with pytest.raises(ValueError):
        EmbedderConfig(similar_threshold=-0.2, dissimilar_threshold=0.1)
    with pytest.raises(ValueError):
        EmbedderConfig(min_corated_notes=0)


# --- cosine and classes ----------------------------------------------------

def test_cosine_examples():
    assert cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 3.0]) == 0.0
    assert cosine([1.0, 0.0], [-1.0, 0.0]) == -1.0
    with pytest.raises(UndefinedSimilarityError):
        cosine([0.0, 0.0], [1.0, 0.0])


vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array)


@given(vec, vec, st.floats(0.01, 100))
def test_cosine_symmetry_and_scale(a, b, k):
    assume(np.linalg.norm(a) > 1e-3 and np.linalg.norm(b) > 1e-3)
    c = cosine(a, b)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine(b, a), abs=1e-12)
    assert c == pytest.approx(cosine(k * a, b), abs=1e-9)


def test_classification_thresholds():
    assert classify_cosine(0.20) is RaterClass.SIMILAR
    assert classify_cosine(0.00) is RaterClass.GENERAL
    assert classify_cosine(-0.097) is RaterClass.GENERAL
    assert classify_cosine(0.136) is RaterClass.GENERAL
    assert classify_cosine(-0.2) is RaterClass.DISSIMILAR


@given(st.floats(-1, 1))
def test_classification_partition(c):
    cls = classify_cosine(c)
    cfg = EmbedderConfig()
    assert (cls is RaterClass.SIMILAR) == (c > cfg.similar_threshold)
    assert (cls is RaterClass.DISSIMILAR) == (c < cfg.dissimilar_threshold)


def _emb(vectors: dict[str, list[float]]) -> ScoringModel:
    ids = tuple(sorted(vectors))
    return ScoringModel(0.0, ids, (), np.zeros(len(ids)), np.zeros(0),
                        np.array([vectors[i] for i in ids], float), np.zeros((0, len(next(iter(vectors.values()))))))


def test_classify_relations_missing_embedding_flagged():
    emb = _emb({"w": [1.0, 0.0], "a": [1.0, 0.1], "b": [-1.0, 0.0], "z": [0.0, 0.0]})
    rels = classify_relations(NoteRecord("n", "w", "p", 1), ["a", "b", "ghost", "z"], emb)
    classes = [r.rater_class for r in rels]
    assert classes == [RaterClass.SIMILAR, RaterClass.DISSIMILAR, RaterClass.GENERAL, RaterClass.GENERAL]
    assert [r.embedding_missing for r in rels] == [False, False, True, True]


def test_relations_for_events_and_tsv(tmp_path):
    emb = _emb({"w": [1.0, 0.0], "a": [1.0, 0.1], "b": [-1.0, 0.0]})
    notes = {"n": NoteRecord("n", "w", "p", 1)}
    ev = [RatingEvent("n", "a", 1, 1.0), RatingEvent("n", "b", 2, 0.0), RatingEvent("n", "a", 3, 0.0)]
    rels = relations_for_events(notes, ev, emb)
    assert set(rels) == {("n", "a"), ("n", "b")}
    write_relations_tsv(rels, tmp_path / "relations.tsv")
    assert read_relations_tsv(tmp_path / "relations.tsv") == {k: v.rater_class for k, v in rels.items()}


# --- copairs ---------------------------------------------------------------

def test_copair_requires_min_corated_notes():
    emb = _emb({"a": [1.0, 0.0], "b": [1.0, 0.0]})
    four = _events([(f"n{i}", u) for i in range(4) for u in "ab"])
    assert copair_distributions(four, emb).n_pooled == 0
    five = _events([(f"n{i}", u) for i in range(5) for u in "ab"])
    stats = copair_distributions(five, emb)
    assert stats.n_pooled == 5 and stats.n_same == 5 and stats.same_mean == pytest.approx(1.0)


def test_copair_splits_same_and_opposite():
    emb = _emb({"a": [1.0, 0.0], "b": [-1.0, 0.0], "c": [1.0, 0.0]})
    ev = []
    for i in range(5):
        ev += [RatingEvent(f"n{i}", "a", 1, 1.0), RatingEvent(f"n{i}", "b", 1, 0.0),
               RatingEvent(f"n{i}", "c", 1, 0.5)]
    s = copair_distributions(ev, emb)
    assert s.n_opposite == 5 and s.opposite_mean == pytest.approx(-1.0)
    assert s.n_same == 0 and s.n_pooled == 15


def _copairs(mix, **kw):
    sc = simulate(SimConfig(n_notes=100, n_raters=250, cluster_mix=mix, neutral_share=0.0, seed=0, **kw))
    fm, _ = filter_dataset(latest_rating_matrix(sc.events))
    return copair_distributions(fm, fit_embeddings(fm))


def test_one_cluster_same_and_opposite_close():
    two = _copairs((0.5, 0.5), group_shares=(0.5, 0.0, 0.5))
    one = _copairs((1.0,))
    gap_two = two.same_mean - two.opposite_mean
    assert gap_two > 0.3
    assert abs(one.same_mean - one.opposite_mean) < 0.1 * gap_two


# --- projection and files --------------------------------------------------

def _note_emb(factors):
    f = np.asarray(factors, float)
    ids = tuple(f"n{i}" for i in range(f.shape[0]))
    return ScoringModel(0.0, (), ids, np.zeros(0), np.zeros(len(ids)), np.zeros((0, f.shape[1])), f)


def test_projection_recovers_single_axis():
    rng = np.random.default_rng(0)
    f = np.zeros((30, 200))
    f[:, 7] = rng.normal(size=30)
    proj = project_note_factors(_note_emb(f))
    target = f[:, 7] - f[:, 7].mean()
    assert np.allclose(np.abs(proj.values), np.abs(target), atol=1e-6)
    assert abs(np.corrcoef(proj.values, target)[0, 1]) == pytest.approx(1.0)


def test_projection_separates_antipodal_clusters_and_follows_reference():
    rng = np.random.default_rng(1)
    axis = rng.normal(size=50)
    axis /= np.linalg.norm(axis)
    f = np.vstack([axis + 0.05 * rng.normal(size=(20, 50)), -axis + 0.05 * rng.normal(size=(20, 50))])
    emb = _note_emb(f)
    ref = {n: (1.0 if i < 20 else -1.0) for i, n in enumerate(emb.note_ids)}
    proj = project_note_factors(emb, ref)
    assert np.all(proj.values[:20] > 0) and np.all(proj.values[20:] < 0)


def test_projection_degenerate():
    proj = project_note_factors(_note_emb(np.ones((5, 4))))
    assert proj.degenerate and np.all(proj.values == 0)
    with pytest.raises(ValueError):
        project_note_factors(_note_emb(np.ones((1, 4))))


def test_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = ScoringModel(0.25, ("rb", "ra"), ("n1",), rng.normal(size=2), rng.normal(size=1),
                     rng.normal(size=(2, 5)), rng.normal(size=(1, 5)))
    write_embeddings(m, tmp_path / "e.bin")
    back = read_embeddings(tmp_path / "e.bin")
    assert back.rater_ids == ("ra", "rb") and back.mu == 0.25
    assert np.array_equal(back.rater_factor_map()["rb"], m.rater_factor_map()["rb"])
    assert np.array_equal(back.note_factors, m.note_factors)
    (tmp_path / "bad.bin").write_bytes(b"XXXX")
    with pytest.raises(ValueError):
        read_embeddings(tmp_path / "bad.bin")
