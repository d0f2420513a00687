"""High-dimensional rater embeddings and viewpoint similarity.

Raters and notes get 200-dimensional factors fitted by unregularised
mean-squared-error factorisation. Cosine similarity between rater factor
vectors then classifies each rater relative to a note's writer as
similar, general or dissimilar.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from sklearn.metrics import precision_recall_fscore_support

from .data import NoteRecord, RatingEvent, RatingMatrix, latest_rating_matrix
from .scorer import ScoringModel

logger = logging.getLogger(__name__)


class EmptyDatasetError(ValueError):
    """Filtering left no ratings."""


class UndefinedSimilarityError(ValueError):
    """Cosine similarity with a zero vector."""


class RaterClass(str, enum.Enum):
    SIMILAR = "Similar"
    GENERAL = "General"
    DISSIMILAR = "Dissimilar"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EmbedderConfig:
    factor_dim: int = 200
    epochs: int = 20
    min_ratings_per_note: int = 5
    min_ratings_per_rater: int = 5
    min_corated_notes: int = 5
    similar_threshold: float = 0.136
    dissimilar_threshold: float = -0.097
    recompute_thresholds: bool = False
    seed: int = 0
    batch_size: int = 1024
    optimizer: str = "sgd"
    learning_rate: float = 0.08
    final_learning_rate: float = 0.0
    momentum: float = 0.0
    init_scale: float = 0.001

    def __post_init__(self):
        if not self.dissimilar_threshold < self.similar_threshold:
            raise ValueError("dissimilar_threshold must be below similar_threshold")
        if min(self.min_ratings_per_note, self.min_ratings_per_rater, self.min_corated_notes) < 1:
            raise ValueError("minimum counts must be >= 1")
        if self.factor_dim < 1 or self.epochs < 1:
            raise ValueError("factor_dim and epochs must be >= 1")


@dataclass(frozen=True)
class RaterRelation:
    writer_id: str
    rater_id: str
    cosine: float
    rater_class: RaterClass
    embedding_missing: bool = False


@dataclass(frozen=True)
class FilterReport:
    notes_removed: int
    raters_removed: int
    cells_removed: int
    rounds: int


# ---------------------------------------------------------------------------
# Dataset filter
# ---------------------------------------------------------------------------

def filter_dataset(data: Iterable[RatingEvent] | RatingMatrix,
                   config: EmbedderConfig = EmbedderConfig()) -> tuple[RatingMatrix, FilterReport]:
    """Drop notes and raters below the minimum rating counts until stable."""
    matrix = data if isinstance(data, RatingMatrix) else latest_rating_matrix(data)
    keep = np.ones(matrix.n_cells, dtype=bool)
    rounds = 0
    while True:
        rounds += 1
        per_note = np.bincount(matrix.note_idx[keep], minlength=len(matrix.note_ids))
        per_rater = np.bincount(matrix.rater_idx[keep], minlength=len(matrix.rater_ids))
        bad = keep & ((per_note[matrix.note_idx] < config.min_ratings_per_note)
                      | (per_rater[matrix.rater_idx] < config.min_ratings_per_rater))
        if not bad.any():
            break
        keep &= ~bad
    if not keep.any():
        raise EmptyDatasetError("every note or rater fell below the minimum rating counts")
    out = matrix.subset(keep)
    report = FilterReport(
        notes_removed=len(matrix.note_ids) - len(out.note_ids),
        raters_removed=len(matrix.rater_ids) - len(out.rater_ids),
        cells_removed=matrix.n_cells - out.n_cells,
        rounds=rounds,
    )
    return out, report


# ---------------------------------------------------------------------------
# Unregularised factorisation
# ---------------------------------------------------------------------------

def mse_loss(model: ScoringModel, matrix: RatingMatrix) -> float:
    res = _residuals(model, matrix.note_idx, matrix.rater_idx, matrix.values)
    return float(res @ res) / max(matrix.n_cells, 1)


def mse_gradient(model: ScoringModel, matrix: RatingMatrix) -> dict[str, np.ndarray | float]:
    """Gradient of :func:`mse_loss`; ids must be aligned with ``matrix``."""
    n_idx, r_idx = matrix.note_idx, matrix.rater_idx
    res = _residuals(model, n_idx, r_idx, matrix.values)
    scale = -2.0 / max(matrix.n_cells, 1)
    return _grads(model, n_idx, r_idx, res, scale)


def _residuals(model, n_idx, r_idx, values):
    return values - (model.mu + model.rater_intercepts[r_idx] + model.note_intercepts[n_idx]
                     + np.einsum("ij,ij->i", model.rater_factors[r_idx], model.note_factors[n_idx]))


def _grads(model, n_idx, r_idx, res, scale):
    m = res.size
    cols = np.arange(m)
    to_r = sparse.csr_matrix((res, (r_idx, cols)), shape=(len(model.rater_ids), m))
    to_n = sparse.csr_matrix((res, (n_idx, cols)), shape=(len(model.note_ids), m))
    g_fu = to_r @ model.note_factors[n_idx]
    g_fn = to_n @ model.rater_factors[r_idx]
    return {
        "mu": scale * float(res.sum()),
        "rater_intercepts": scale * np.bincount(r_idx, res, minlength=len(model.rater_ids)),
        "note_intercepts": scale * np.bincount(n_idx, res, minlength=len(model.note_ids)),
        "rater_factors": scale * g_fu,
        "note_factors": scale * g_fn,
    }


_DENSE_LIMIT = 4000
_BLOCKS = ("mu", "rater_intercepts", "note_intercepts", "rater_factors", "note_factors")


def fit_embeddings(matrix: RatingMatrix, config: EmbedderConfig = EmbedderConfig()) -> ScoringModel:
    """Fit ``mu + i_u + i_n + f_u . f_n`` on the mean squared error.

    Mini-batches come from a seeded permutation each epoch. The default
    optimiser is SGD (optional momentum) in which each parameter's batch
    gradient is averaged over that parameter's occurrences in the batch,
    so ``learning_rate`` acts like a per-rating step; ``optimizer="adam"``
    uses Adam on the batch-mean loss instead.
    The step size follows a cosine schedule down to
    ``final_learning_rate``. ``loss_history`` holds the full-data MSE
    after every epoch.
    """
    if matrix.n_cells == 0:
        raise ValueError("cannot fit an empty rating matrix")
    if config.optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    rng = np.random.default_rng(config.seed)
    n_n, n_r = matrix.shape
    k = config.factor_dim
    s = config.init_scale
    params = {
        "mu": np.array(float(np.mean(matrix.values))),
        "rater_intercepts": np.zeros(n_r),
        "note_intercepts": np.zeros(n_n),
        "rater_factors": rng.normal(0.0, s, (n_r, k)),
        "note_factors": rng.normal(0.0, s, (n_n, k)),
    }
    m1 = {b: np.zeros_like(v) for b, v in params.items()}
    m2 = {b: np.zeros_like(v) for b, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    adam = config.optimizer == "adam"

    def as_model(p, history=()):
        return ScoringModel(float(p["mu"]), matrix.rater_ids, matrix.note_ids, p["rater_intercepts"],
                            p["note_intercepts"], p["rater_factors"], p["note_factors"],
                            history[-1] if history else float("nan"), tuple(history))

    n_batches = max(1, int(np.ceil(matrix.n_cells / config.batch_size)))
    total_steps = config.epochs * n_batches
    t = 0
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(matrix.n_cells)
        for b in range(n_batches):
            sel = order[b * config.batch_size:(b + 1) * config.batch_size]
            n_idx, r_idx = matrix.note_idx[sel], matrix.rater_idx[sel]
            model = as_model(params)
            res = _residuals(model, n_idx, r_idx, matrix.values[sel])
            grads = _grads(model, n_idx, r_idx, res, -2.0 / sel.size if adam else -2.0)
            if not adam:
                # average over each parameter's occurrences in the batch
                occ_r = np.maximum(np.bincount(r_idx, minlength=n_r), 1)
                occ_n = np.maximum(np.bincount(n_idx, minlength=n_n), 1)
                grads["mu"] /= sel.size
                grads["rater_intercepts"] /= occ_r
                grads["note_intercepts"] /= occ_n
                grads["rater_factors"] /= occ_r[:, None]
                grads["note_factors"] /= occ_n[:, None]
            lr = config.final_learning_rate + 0.5 * (config.learning_rate - config.final_learning_rate) \
                * (1.0 + np.cos(np.pi * t / max(total_steps - 1, 1)))
            t += 1
            for name in _BLOCKS:
                g = np.asarray(grads[name])
                if adam:
                    m1[name] = beta1 * m1[name] + (1 - beta1) * g
                    m2[name] = beta2 * m2[name] + (1 - beta2) * g * g
                    mhat = m1[name] / (1 - beta1 ** t)
                    vhat = m2[name] / (1 - beta2 ** t)
                    params[name] = params[name] - lr * mhat / (np.sqrt(vhat) + eps)
                else:
                    m1[name] = config.momentum * m1[name] + g
                    params[name] = params[name] - lr * m1[name]
        epoch_loss = mse_loss(as_model(params), matrix)
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}; lower the learning rate")
        history.append(epoch_loss)
        logger.debug("embedder epoch %d loss %.6f", epoch + 1, epoch_loss)
    return as_model(params, history)


def classification_metrics(model: ScoringModel, matrix: RatingMatrix,
                           threshold: float = 0.5) -> dict[str, float]:
    """Weighted precision/recall/F1 of thresholded predictions.

    Only Helpful and NotHelpful cells are scored; SomewhatHelpful has no
    binary label.
    """
    mask = matrix.values != 0.5
    pred = (matrix.values - _residuals(model, matrix.note_idx, matrix.rater_idx, matrix.values))[mask]
    truth = (matrix.values[mask] >= 0.5).astype(int)
    guess = (pred >= threshold).astype(int)
    p, r, f, _ = precision_recall_fscore_support(truth, guess, average="weighted", zero_division=0)
    return {"precision": float(p), "recall": float(r), "f1": float(f), "n": int(mask.sum())}


# ---------------------------------------------------------------------------
# Similarity
# ---------------------------------------------------------------------------

def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, x / norms, np.nan)


@dataclass(frozen=True)
class CopairStats:
    same_mean: float
    same_std: float
    n_same: int
    opposite_mean: float
    opposite_std: float
    n_opposite: int
    n_pooled: int
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    def modes(self, smooth: int = 3) -> tuple[float, float]:
        """Centres of the two highest local maxima of the smoothed pooled histogram."""
        counts = self.hist_counts.astype(float)
        if smooth > 1:
            counts = np.convolve(counts, np.ones(smooth) / smooth, mode="same")
        centres = 0.5 * (self.hist_edges[:-1] + self.hist_edges[1:])
        padded = np.concatenate([[0.0], counts, [0.0]])
        peaks = [i for i in range(counts.size)
                 if counts[i] > 0 and padded[i + 1] >= padded[i] and padded[i + 1] > padded[i + 2]]
        peaks.sort(key=lambda i: -counts[i])
        if len(peaks) < 2:
            c = float(centres[peaks[0]]) if peaks else float("nan")
            return c, c
        return float(centres[peaks[0]]), float(centres[peaks[1]])


def copair_distributions(data: Iterable[RatingEvent] | RatingMatrix, embeddings: ScoringModel,
                         config: EmbedderConfig = EmbedderConfig(), bins: int = 40) -> CopairStats:
    """Cosine statistics over rater pairs that rated the same note.

    Each (note, rater pair) is one observation; pairs are kept when the two
    raters co-rated at least ``min_corated_notes`` notes. Same-level and
    opposite-level (Helpful vs NotHelpful) pairs are summarised apart; the
    pooled histogram also includes pairs involving SomewhatHelpful.
    """
    matrix = data if isinstance(data, RatingMatrix) else latest_rating_matrix(data)
    rmap = embeddings.rater_index
    emb_idx = np.array([rmap.get(r, -1) for r in matrix.rater_ids], dtype=np.int64)
    has = emb_idx[matrix.rater_idx] >= 0
    n_idx = matrix.note_idx[has]
    r_idx = matrix.rater_idx[has]
    vals = matrix.values[has]
    n_n, n_r = matrix.shape
    B = sparse.csr_matrix((np.ones(n_idx.size), (n_idx, r_idx)), shape=(n_n, n_r))
    co = (B.T @ B).tocsr()
    unit = _unit_rows(embeddings.rater_factors)

    order = np.lexsort((r_idx, n_idx))
    n_idx, r_idx, vals = n_idx[order], r_idx[order], vals[order]
    bounds = np.flatnonzero(np.diff(np.concatenate([[-1], n_idx, [n_n]])))
    left, right, lv, rv = [], [], [], []
    for s, e in zip(bounds[:-1], bounds[1:]):
        m = e - s
        if m < 2:
            continue
        a, b = np.triu_indices(m, k=1)
        left.append(r_idx[s + a]); right.append(r_idx[s + b])
        lv.append(vals[s + a]); rv.append(vals[s + b])
    if left:
        left = np.concatenate(left); right = np.concatenate(right)
        lv = np.concatenate(lv); rv = np.concatenate(rv)
        if n_r <= _DENSE_LIMIT:
            shared = co.toarray()[left, right]
        else:
            shared = np.asarray(co[left, right]).ravel()
        ok = shared >= config.min_corated_notes
        left, right, lv, rv = left[ok], right[ok], lv[ok], rv[ok]
        el, er = emb_idx[left], emb_idx[right]
        if unit.shape[0] <= _DENSE_LIMIT:
            cos = (unit @ unit.T)[el, er]
        else:
            cos = np.concatenate([np.einsum("ij,ij->i", unit[el[i:i + 65536]], unit[er[i:i + 65536]])
                                  for i in range(0, el.size, 65536)] or [np.zeros(0)])
        fine = np.isfinite(cos)
        cos, lv, rv = cos[fine], lv[fine], rv[fine]
    else:
        cos = lv = rv = np.zeros(0)
    same = cos[(lv == rv) & (lv != 0.5)]
    opp = cos[(lv != rv) & (lv != 0.5) & (rv != 0.5)]
    counts, edges = np.histogram(cos, bins=bins, range=(-1.0, 1.0))

    def stats(x):
        return (float(x.mean()), float(x.std())) if x.size else (float("nan"), float("nan"))

    sm, ss = stats(same)
    om, os_ = stats(opp)
    return CopairStats(sm, ss, int(same.size), om, os_, int(opp.size), int(cos.size), counts, edges)


def thresholds_from_copairs(stats: CopairStats) -> tuple[float, float]:
    """(similar, dissimilar) thresholds recomputed as the pair-type means."""
    return stats.same_mean, stats.opposite_mean


def classify_cosine(value: float, config: EmbedderConfig = EmbedderConfig()) -> RaterClass:
    if value > config.similar_threshold:
        return RaterClass.SIMILAR
    if value < config.dissimilar_threshold:
        return RaterClass.DISSIMILAR
    return RaterClass.GENERAL


def classify_relations(note: NoteRecord | str, raters: Iterable[str], embeddings: ScoringModel,
                       config: EmbedderConfig = EmbedderConfig()) -> list[RaterRelation]:
    """Relation of each rater to the note's writer.

    ``note`` may be a :class:`NoteRecord` or a writer id. Raters (or a
    writer) without an embedding, or with a zero vector, are General and
    flagged.
    """
    writer = note.writer_id if isinstance(note, NoteRecord) else note
    rmap = embeddings.rater_index
    w = rmap.get(writer)
    out = []
    for rater in raters:
        r = rmap.get(rater)
        value = float("nan")
        if w is not None and r is not None:
            try:
                value = cosine(embeddings.rater_factors[w], embeddings.rater_factors[r])
            except UndefinedSimilarityError:
                pass
        if np.isnan(value):
            out.append(RaterRelation(writer, rater, value, RaterClass.GENERAL, embedding_missing=True))
        else:
            out.append(RaterRelation(writer, rater, value, classify_cosine(value, config)))
    return out


def relations_for_events(notes: Mapping[str, NoteRecord], events: Iterable[RatingEvent],
                         embeddings: ScoringModel,
                         config: EmbedderConfig = EmbedderConfig()) -> dict[tuple[str, str], RaterRelation]:
    """Relation for every distinct (note, rater) pair in ``events``."""
    raters_by_note: dict[str, dict[str, None]] = {}
    for e in events:
        raters_by_note.setdefault(e.note_id, {})[e.rater_id] = None
    out: dict[tuple[str, str], RaterRelation] = {}
    for note_id in sorted(raters_by_note):
        note = notes.get(note_id)
        if note is None:
            continue
        for rel in classify_relations(note, sorted(raters_by_note[note_id]), embeddings, config):
            out[(note_id, rel.rater_id)] = rel
    return out


# ---------------------------------------------------------------------------
# Note-factor projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection:
    note_ids: tuple[str, ...]
    values: np.ndarray
    component: np.ndarray
    explained_variance: float
    degenerate: bool = False

    def as_map(self) -> dict[str, float]:
        return dict(zip(self.note_ids, self.values.tolist()))


def project_note_factors(embeddings: ScoringModel, reference: Mapping[str, float] | None = None,
                         tol: float = 1e-8, max_iter: int = 10_000) -> Projection:
    """First principal component of the note factors by power iteration.

    When ``reference`` (for instance the 1-dimensional scorer note factor)
    is given, the sign is chosen so the projection correlates positively
    with it over shared notes.
    """
    X = np.asarray(embeddings.note_factors, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two notes to project")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    if not np.any(np.abs(cov) > 1e-15):
        return Projection(embeddings.note_ids, np.zeros(X.shape[0]), np.zeros(X.shape[1]), 0.0, True)
    v = np.ones(X.shape[1]) / np.sqrt(X.shape[1])
    # the all-ones start can be orthogonal to the top component
    if np.linalg.norm(cov @ v) < 1e-12:
        v = np.random.default_rng(0).normal(size=X.shape[1])
        v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        w /= norm
        if w @ v < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    values = Xc @ v
    if reference is not None:
        idx = [i for i, n in enumerate(embeddings.note_ids) if n in reference]
        if len(idx) >= 2:
            ref = np.array([float(np.ravel(reference[embeddings.note_ids[i]])[0]) for i in idx])
            if np.corrcoef(values[idx], ref)[0, 1] < 0:
                values, v = -values, -v
    else:
        # deterministic sign: largest-magnitude loading positive
        if v[np.argmax(np.abs(v))] < 0:
            values, v = -values, -v
    return Projection(embeddings.note_ids, values, v, float(v @ cov @ v))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

EMBEDDING_MAGIC = b"NCEB"
EMBEDDING_VERSION = 1


def write_embeddings(model: ScoringModel, path: str | Path) -> None:
    """Write ``embeddings.bin``.

    Little-endian layout: magic ``NCEB``, uint32 version, uint32 dim,
    uint32 n_raters, uint32 n_notes, float64 mu; then raters and notes,
    each sorted by id, as (uint16 id length, utf-8 id, float64 intercept,
    dim x float64 factor).
    """
    dim = model.factor_dim
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IIIId", EMBEDDING_VERSION, dim, len(model.rater_ids),
                             len(model.note_ids), model.mu))
        for ids, icpt, fac in ((model.rater_ids, model.rater_intercepts, model.rater_factors),
                               (model.note_ids, model.note_intercepts, model.note_factors)):
            for i in sorted(range(len(ids)), key=lambda j: ids[j]):
                raw = ids[i].encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<d", float(icpt[i])))
                fh.write(np.asarray(fac[i], dtype="<f8").tobytes())


def read_embeddings(path: str | Path) -> ScoringModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: not an embeddings file")
    version, dim, n_r, n_n, mu = struct.unpack_from("<IIIId", data, 4)
    if version != EMBEDDING_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos = 4 + struct.calcsize("<IIIId")

    def block(n):
        nonlocal pos
        ids, icpt, fac = [], np.zeros(n), np.zeros((n, dim))
        for i in range(n):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            ids.append(data[pos:pos + ln].decode("utf-8"))
            pos += ln
            (icpt[i],) = struct.unpack_from("<d", data, pos)
            pos += 8
            fac[i] = np.frombuffer(data, dtype="<f8", count=dim, offset=pos)
            pos += 8 * dim
        return tuple(ids), icpt, fac

    r_ids, r_i, r_f = block(n_r)
    n_ids, n_i, n_f = block(n_n)
    return ScoringModel(mu, r_ids, n_ids, r_i, n_i, r_f, n_f)


def write_relations_tsv(relations: Mapping[tuple[str, str], RaterRelation], path: str | Path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("noteId\traterId\tcosine\tclass\n")
        for (note, rater) in sorted(relations):
            rel = relations[(note, rater)]
            fh.write(f"{note}\t{rater}\t{float(rel.cosine)!r}\t{rel.rater_class.value}\n")
    return len(relations)


def read_relations_tsv(path: str | Path) -> dict[tuple[str, str], RaterClass]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            note, rater, _, cls = line.rstrip("\n").split("\t")
            out[(note, rater)] = RaterClass(cls)
    return out
