"""Bridging matrix-factorization note scorer.

Each rating is modelled as ``mu + i_u + i_n + f_u . f_n`` and parameters
minimise the regularised squared error

    sum (r - r_hat)^2 + lambda_i (sum i_u^2 + sum i_n^2 + mu^2)
                      + lambda_f (sum |f_u|^2 + sum |f_n|^2).

A high note intercept ``i_n`` means the note is rated helpful across the
range of rater viewpoints captured by the factors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .data import RatingEvent, RatingMatrix, Status, StatusEntry, latest_rating_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StatusThresholds:
    helpful_min_intercept: float = 0.40
    not_helpful_max_intercept: float = -0.05
    min_raters: int = 5

    def __post_init__(self):
        if not self.helpful_min_intercept > self.not_helpful_max_intercept:
            raise ValueError("helpful threshold must exceed not-helpful threshold")
        if self.min_raters < 1:
            raise ValueError("min_raters must be >= 1")


@dataclass(frozen=True)
class ScorerConfig:
    """Hyper-parameters of the scorer fit.

    ``learning_rate`` scales each block step (1.0 is the exact block
    minimiser); ``lr_decay`` multiplies it after every epoch past
    ``decay_after``. With ``extrapolate`` each epoch also tries a longer
    step along its own displacement and keeps it only if the loss drops.
    """
    lambda_intercept: float = 0.15
    lambda_factor: float = 0.03
    factor_dim: int = 1
    learning_rate: float = 1.0
    lr_decay: float = 1.0
    decay_after: int = 0
    max_epochs: int = 2000
    convergence_tol: float = 1e-9
    seed: int = 0
    init_scale: float = 0.01
    warm_start: bool = False
    extrapolate: bool = True
    thresholds: StatusThresholds = field(default_factory=StatusThresholds)

    def __post_init__(self):
        if self.factor_dim < 1:
            raise ValueError("factor_dim must be >= 1")
        if self.lambda_intercept < 0 or self.lambda_factor < 0:
            raise ValueError("regularisation weights must be non-negative")


@dataclass(frozen=True)
class ScoringModel:
    mu: float
    rater_ids: tuple[str, ...]
    note_ids: tuple[str, ...]
    rater_intercepts: np.ndarray
    note_intercepts: np.ndarray
    rater_factors: np.ndarray
    note_factors: np.ndarray
    final_loss: float = float("nan")
    loss_history: tuple[float, ...] = ()

    @property
    def factor_dim(self) -> int:
        return int(self.note_factors.shape[1])

    @property
    def rater_index(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.rater_ids)}

    @property
    def note_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.note_ids)}

    def note_intercept_map(self) -> dict[str, float]:
        return dict(zip(self.note_ids, self.note_intercepts.tolist()))

    def note_factor_map(self) -> dict[str, np.ndarray]:
        return dict(zip(self.note_ids, self.note_factors))

    def rater_factor_map(self) -> dict[str, np.ndarray]:
        return dict(zip(self.rater_ids, self.rater_factors))

    @classmethod
    def zeros(cls, note_ids, rater_ids, factor_dim: int = 1, mu: float = 0.0) -> "ScoringModel":
        note_ids, rater_ids = tuple(note_ids), tuple(rater_ids)
        return cls(mu, rater_ids, note_ids, np.zeros(len(rater_ids)), np.zeros(len(note_ids)),
                   np.zeros((len(rater_ids), factor_dim)), np.zeros((len(note_ids), factor_dim)))


class Prediction(float):
    """A predicted rating; ``cold_start`` is set when an id was unknown."""

    cold_start: bool

    def __new__(cls, value: float, cold_start: bool = False):
        obj = super().__new__(cls, value)
        obj.cold_start = cold_start
        return obj


def predict(model: ScoringModel, rater_id: str, note_id: str) -> Prediction:
    """Predicted rating; unknown ids contribute nothing and set ``cold_start``."""
    r = model.rater_index.get(rater_id)
    n = model.note_index.get(note_id)
    value = model.mu
    if r is not None:
        value += model.rater_intercepts[r]
    if n is not None:
        value += model.note_intercepts[n]
    if r is not None and n is not None:
        value += float(model.rater_factors[r] @ model.note_factors[n])
    return Prediction(float(value), cold_start=(r is None or n is None))


# ---------------------------------------------------------------------------
# Loss and gradient
# ---------------------------------------------------------------------------

def _aligned_indices(model: ScoringModel, matrix: RatingMatrix) -> tuple[np.ndarray, np.ndarray]:
    if model.note_ids == matrix.note_ids and model.rater_ids == matrix.rater_ids:
        return matrix.note_idx, matrix.rater_idx
    nmap, rmap = model.note_index, model.rater_index
    try:
        n = np.array([nmap[matrix.note_ids[i]] for i in range(len(matrix.note_ids))], dtype=np.int64)
        r = np.array([rmap[matrix.rater_ids[i]] for i in range(len(matrix.rater_ids))], dtype=np.int64)
    except KeyError as exc:
        raise KeyError(f"matrix id {exc} not in model") from None
    if n.size == 0 or r.size == 0:
        return matrix.note_idx, matrix.rater_idx
    return n[matrix.note_idx], r[matrix.rater_idx]


def _residuals(model: ScoringModel, n_idx, r_idx, values) -> np.ndarray:
    pred = (model.mu + model.rater_intercepts[r_idx] + model.note_intercepts[n_idx]
            + np.einsum("ij,ij->i", model.rater_factors[r_idx], model.note_factors[n_idx]))
    return values - pred


def _penalty(model: ScoringModel, lam_i: float, lam_f: float) -> float:
    return (lam_i * (float(model.rater_intercepts @ model.rater_intercepts)
                     + float(model.note_intercepts @ model.note_intercepts) + model.mu ** 2)
            + lam_f * (float(np.sum(model.rater_factors ** 2)) + float(np.sum(model.note_factors ** 2))))


def loss(model: ScoringModel, matrix: RatingMatrix, config: ScorerConfig = ScorerConfig()) -> float:
    """Regularised squared-error loss, summed over cells (not averaged)."""
    n_idx, r_idx = _aligned_indices(model, matrix)
    res = _residuals(model, n_idx, r_idx, matrix.values)
    return float(res @ res) + _penalty(model, config.lambda_intercept, config.lambda_factor)


def loss_gradient(model: ScoringModel, matrix: RatingMatrix,
                  config: ScorerConfig = ScorerConfig()) -> dict[str, np.ndarray | float]:
    """Analytic gradient of :func:`loss` with respect to every parameter block."""
    n_idx, r_idx = _aligned_indices(model, matrix)
    res = _residuals(model, n_idx, r_idx, matrix.values)
    lam_i, lam_f = config.lambda_intercept, config.lambda_factor
    n_r, n_n = len(model.rater_ids), len(model.note_ids)
    g_fu = np.zeros_like(model.rater_factors)
    g_fn = np.zeros_like(model.note_factors)
    np.add.at(g_fu, r_idx, -2.0 * res[:, None] * model.note_factors[n_idx])
    np.add.at(g_fn, n_idx, -2.0 * res[:, None] * model.rater_factors[r_idx])
    return {
        "mu": -2.0 * float(res.sum()) + 2.0 * lam_i * model.mu,
        "rater_intercepts": -2.0 * np.bincount(r_idx, res, minlength=n_r) + 2.0 * lam_i * model.rater_intercepts,
        "note_intercepts": -2.0 * np.bincount(n_idx, res, minlength=n_n) + 2.0 * lam_i * model.note_intercepts,
        "rater_factors": g_fu + 2.0 * lam_f * model.rater_factors,
        "note_factors": g_fn + 2.0 * lam_f * model.note_factors,
    }


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _init_model(matrix: RatingMatrix, config: ScorerConfig) -> ScoringModel:
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    n_n, n_r = matrix.shape
    k = config.factor_dim
    return ScoringModel(
        mu=float(rng.uniform(-s, s)),
        rater_ids=matrix.rater_ids,
        note_ids=matrix.note_ids,
        rater_intercepts=rng.uniform(-s, s, n_r),
        note_intercepts=rng.uniform(-s, s, n_n),
        rater_factors=rng.uniform(-s, s, (n_r, k)),
        note_factors=rng.uniform(-s, s, (n_n, k)),
    )


def _warm_model(matrix: RatingMatrix, config: ScorerConfig, prev: ScoringModel) -> ScoringModel:
    base = _init_model(matrix, config)
    rmap, nmap = prev.rater_index, prev.note_index
    iu, iN = base.rater_intercepts.copy(), base.note_intercepts.copy()
    fu, fn = base.rater_factors.copy(), base.note_factors.copy()
    for i, r in enumerate(matrix.rater_ids):
        j = rmap.get(r)
        if j is not None:
            iu[i], fu[i] = prev.rater_intercepts[j], prev.rater_factors[j]
    for i, n in enumerate(matrix.note_ids):
        j = nmap.get(n)
        if j is not None:
            iN[i], fn[i] = prev.note_intercepts[j], prev.note_factors[j]
    return replace(base, mu=prev.mu, rater_intercepts=iu, note_intercepts=iN,
                   rater_factors=fu, note_factors=fn)


def _factor_block_step(own, other, idx_own, idx_other, res, lam, n_own, lr):
    """Scaled gradient step for one factor block; exact minimiser at lr=1."""
    k = own.shape[1]
    partner = other[idx_other]
    if k == 1:
        grad = np.bincount(idx_own, res * partner[:, 0], minlength=n_own) - lam * own[:, 0]
        curv = np.bincount(idx_own, partner[:, 0] ** 2, minlength=n_own) + lam
        return own + lr * (grad / curv)[:, None]
    grad = np.zeros_like(own)
    np.add.at(grad, idx_own, res[:, None] * partner)
    curv = np.zeros((n_own, k, k))
    np.add.at(curv, idx_own, partner[:, :, None] * partner[:, None, :])
    curv += lam * np.eye(k)
    grad -= lam * own
    return own + lr * np.linalg.solve(curv, grad[:, :, None])[:, :, 0]


def _rebalance(fu: np.ndarray, fn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rescale each factor column pair to equal norms.

    ``(c f_u, f_n / c)`` leaves every prediction unchanged and the factor
    penalty is smallest when both columns have the same norm.
    """
    nu = np.linalg.norm(fu, axis=0)
    nn = np.linalg.norm(fn, axis=0)
    ok = (nu > 0) & (nn > 0)
    c = np.ones_like(nu)
    c[ok] = np.sqrt(nn[ok] / nu[ok])
    return fu * c, fn / c


def fit(matrix: RatingMatrix, config: ScorerConfig = ScorerConfig(),
        init: ScoringModel | None = None) -> ScoringModel:
    """Fit the scorer by block-scaled full-batch gradient descent.

    Each epoch updates mu, rater intercepts, note intercepts, rater factors
    and note factors in turn; every block step is the gradient divided by
    that block's (diagonal) curvature, times the learning rate. The
    sweep order is fixed, so a given seed always yields the same model.
    """
    if matrix.n_cells == 0:
        raise ValueError("cannot fit an empty rating matrix")
    model = _warm_model(matrix, config, init) if init is not None else _init_model(matrix, config)
    n_idx, r_idx, y = matrix.note_idx, matrix.rater_idx, matrix.values
    n_n, n_r = matrix.shape
    lam_i, lam_f = config.lambda_intercept, config.lambda_factor
    mu = model.mu
    iu, iN = model.rater_intercepts.copy(), model.note_intercepts.copy()
    fu, fn = model.rater_factors.copy(), model.note_factors.copy()
    cnt_r = np.bincount(r_idx, minlength=n_r).astype(float)
    cnt_n = np.bincount(n_idx, minlength=n_n).astype(float)
    R = float(y.size)

    def residual(mu, iu, iN, fu, fn):
        return y - (mu + iu[r_idx] + iN[n_idx] + np.einsum("ij,ij->i", fu[r_idx], fn[n_idx]))

    def total_loss(res, mu, iu, iN, fu, fn):
        return (float(res @ res) + lam_i * (float(iu @ iu) + float(iN @ iN) + mu * mu)
                + lam_f * (float(np.sum(fu * fu)) + float(np.sum(fn * fn))))

    res = residual(mu, iu, iN, fu, fn)
    history = [total_loss(res, mu, iu, iN, fu, fn)]
    lr = config.learning_rate
    stretch = 1.0
    for epoch in range(config.max_epochs):
        start = (mu, iu, iN, fu, fn)

        new_mu = mu + lr * (float(res.sum()) - lam_i * mu) / (R + lam_i)
        res -= new_mu - mu
        mu = new_mu

        step = lr * (np.bincount(r_idx, res, minlength=n_r) - lam_i * iu) / (cnt_r + lam_i)
        iu = iu + step
        res -= step[r_idx]

        step = lr * (np.bincount(n_idx, res, minlength=n_n) - lam_i * iN) / (cnt_n + lam_i)
        iN = iN + step
        res -= step[n_idx]

        # exact solve for a common shift of mu, all rater and all note intercepts;
        # this direction is nearly flat and coordinate steps crawl along it
        S = float(res.sum())
        A = np.array([[R + lam_i, R, R], [R, R + lam_i * n_r, R], [R, R, R + lam_i * n_n]])
        rhs = np.array([S - lam_i * mu, S - lam_i * float(iu.sum()), S - lam_i * float(iN.sum())])
        a, b, c = np.linalg.solve(A, rhs)
        mu, iu, iN = mu + a, iu + b, iN + c
        res -= a + b + c

        fu = _factor_block_step(fu, fn, r_idx, n_idx, res, lam_f, n_r, lr)
        res = residual(mu, iu, iN, fu, fn)
        fn = _factor_block_step(fn, fu, n_idx, r_idx, res, lam_f, n_n, lr)
        fu, fn = _rebalance(fu, fn)
        res = residual(mu, iu, iN, fu, fn)
        current = total_loss(res, mu, iu, iN, fu, fn)

        if config.extrapolate:
            # try continuing along this epoch's displacement; keep only if it helps
            trial = tuple(p + stretch * (p - q) for p, q in zip((mu, iu, iN, fu, fn), start))
            trial_res = residual(*trial)
            trial_loss = total_loss(trial_res, *trial)
            if trial_loss < current:
                (mu, iu, iN, fu, fn), res, current = trial, trial_res, trial_loss
                stretch = min(stretch * 2.0, 64.0)
            else:
                stretch = 1.0

        if not np.isfinite(current):
            raise FloatingPointError(
                f"non-finite loss at epoch {epoch}; learning rate {lr} is too high")
        prev = history[-1]
        history.append(current)
        # a rising loss is not convergence: let it run on to the non-finite check
        if abs(prev - current) <= config.convergence_tol * max(abs(prev), 1e-12):
            break
        if epoch >= config.decay_after:
            lr *= config.lr_decay

    return ScoringModel(mu=float(mu), rater_ids=matrix.rater_ids, note_ids=matrix.note_ids,
                        rater_intercepts=iu, note_intercepts=iN, rater_factors=fu,
                        note_factors=fn, final_loss=history[-1], loss_history=tuple(history))


# ---------------------------------------------------------------------------
# Status assignment and replay
# ---------------------------------------------------------------------------

def assign_status(model: ScoringModel, note_id: str, rater_count: int,
                  thresholds: StatusThresholds = StatusThresholds()) -> Status:
    intercept = float(model.note_intercepts[model.note_index[note_id]])
    return status_from_intercept(intercept, rater_count, thresholds)


def status_from_intercept(intercept: float, rater_count: int,
                          thresholds: StatusThresholds = StatusThresholds()) -> Status:
    if rater_count < thresholds.min_raters:
        return Status.NEEDS_MORE_RATINGS
    if intercept >= thresholds.helpful_min_intercept:
        return Status.CURRENTLY_RATED_HELPFUL
    if intercept <= thresholds.not_helpful_max_intercept:
        return Status.CURRENTLY_RATED_NOT_HELPFUL
    return Status.NEEDS_MORE_RATINGS


def model_statuses(model: ScoringModel, matrix: RatingMatrix,
                   thresholds: StatusThresholds = StatusThresholds()) -> dict[str, Status]:
    """Status of every note in ``matrix`` under ``model``."""
    counts = matrix.raters_per_note()
    nmap = model.note_index
    return {n: status_from_intercept(float(model.note_intercepts[nmap[n]]), int(counts[i]), thresholds)
            for i, n in enumerate(matrix.note_ids)}


@dataclass(frozen=True)
class StatusTimeline:
    note_id: str
    entries: tuple[StatusEntry, ...]

    @property
    def displayed(self) -> bool:
        return any(e.status is Status.CURRENTLY_RATED_HELPFUL for e in self.entries)

    @property
    def disappeared(self) -> bool:
        seen = False
        for e in self.entries:
            if e.status is Status.CURRENTLY_RATED_HELPFUL:
                seen = True
            elif seen:
                return True
        return False

    @property
    def final_status(self) -> Status:
        return self.entries[-1].status

    @property
    def display_time(self) -> int | None:
        for e in self.entries:
            if e.status is Status.CURRENTLY_RATED_HELPFUL:
                return e.at
        return None

    @property
    def cohort(self) -> str:
        if self.disappeared:
            return "disappeared"
        return "stable" if self.displayed else "never_displayed"


@dataclass(frozen=True)
class ReplayResult:
    timelines: dict[str, StatusTimeline]
    final_model: ScoringModel
    final_matrix: RatingMatrix
    boundaries: tuple[int, ...]

    def __getitem__(self, note_id: str) -> StatusTimeline:
        return self.timelines[note_id]

    def __iter__(self):
        return iter(self.timelines)

    def __len__(self) -> int:
        return len(self.timelines)

    def entries(self) -> list[StatusEntry]:
        return [e for n in sorted(self.timelines) for e in self.timelines[n].entries]


def replay(events: Iterable[RatingEvent], config: ScorerConfig = ScorerConfig(),
           rescore_interval: int = 3_600_000, start: int | None = None) -> ReplayResult:
    """Re-score periodically over a time-ordered rating stream.

    At every boundary ``start + k * rescore_interval`` the scorer is refit
    on all events strictly before the boundary; the last boundary covers
    every event. A note's timeline opens with NeedsMoreRatings at its
    first rating, and a new entry is appended only on a status change.
    """
    if rescore_interval <= 0:
        raise ValueError("rescore_interval must be positive")
    events = sorted(events, key=lambda e: (e.created_at, e.note_id, e.rater_id))
    if not events:
        raise ValueError("cannot replay an empty rating stream")
    times = np.array([e.created_at for e in events], dtype=np.int64)
    t0 = int(times[0]) if start is None else int(start)
    n_steps = int((times[-1] - t0) // rescore_interval) + 1
    boundaries = [t0 + (k + 1) * rescore_interval for k in range(n_steps)]

    first_seen: dict[str, int] = {}
    for e in events:
        first_seen.setdefault(e.note_id, e.created_at)
    entries: dict[str, list[StatusEntry]] = {}
    model = None
    matrix = None
    prev_model = None
    for b in boundaries:
        cut = int(np.searchsorted(times, b, side="left"))
        if cut == 0:
            continue
        matrix = latest_rating_matrix(events[:cut])
        init = prev_model if (config.warm_start and prev_model is not None) else None
        model = fit(matrix, config, init=init)
        prev_model = model
        for note, status in model_statuses(model, matrix, config.thresholds).items():
            tl = entries.get(note)
            if tl is None:
                tl = entries[note] = [StatusEntry(note, first_seen[note], Status.NEEDS_MORE_RATINGS)]
            if tl[-1].status is not status:
                tl.append(StatusEntry(note, b, status))
    timelines = {n: StatusTimeline(n, tuple(es)) for n, es in sorted(entries.items())}
    return ReplayResult(timelines, model, matrix, tuple(boundaries))


# ---------------------------------------------------------------------------
# Diagnostics and IO
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    intercept_hist: tuple[np.ndarray, np.ndarray]
    factor_hist: tuple[np.ndarray, np.ndarray]
    match_rate: float
    n_compared: int
    n_missing_reference: int
    status_counts: dict[str, int]
    displayed: int
    disappeared: int

    @property
    def disappearance_rate(self) -> float:
        return self.disappeared / self.displayed if self.displayed else float("nan")


def diagnostics(model: ScoringModel, timelines: Mapping[str, StatusTimeline],
                reference: Mapping[str, Status] | None = None, bins: int = 30) -> Diagnostics:
    """Parameter histograms and agreement of final statuses with a reference."""
    if reference is None:
        reference = {n: tl.final_status for n, tl in timelines.items()}
    compared = matched = missing = 0
    for n, tl in timelines.items():
        ref = reference.get(n)
        if ref is None:
            missing += 1
            continue
        compared += 1
        matched += int(Status(ref) is tl.final_status)
    counts: dict[str, int] = {}
    for tl in timelines.values():
        counts[tl.final_status.value] = counts.get(tl.final_status.value, 0) + 1
    return Diagnostics(
        intercept_hist=np.histogram(model.note_intercepts, bins=bins),
        factor_hist=np.histogram(model.note_factors[:, 0], bins=bins),
        match_rate=matched / compared if compared else float("nan"),
        n_compared=compared,
        n_missing_reference=missing,
        status_counts=counts,
        displayed=sum(tl.displayed for tl in timelines.values()),
        disappeared=sum(tl.disappeared for tl in timelines.values()),
    )


def write_scores_tsv(model: ScoringModel, statuses: Mapping[str, Status], path: str | Path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("noteId\tintercept\tfactor\tstatus\n")
        for i, n in enumerate(model.note_ids):
            fh.write(f"{n}\t{float(model.note_intercepts[i])!r}\t{float(model.note_factors[i, 0])!r}\t"
                     f"{statuses.get(n, Status.NEEDS_MORE_RATINGS).value}\n")
    return len(model.note_ids)


def read_scores_tsv(path: str | Path) -> dict[str, tuple[float, float, Status]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            n, i, f, s = line.rstrip("\n").split("\t")
            out[n] = (float(i), float(f), Status(s))
    return out


def write_timelines_tsv(timelines: Mapping[str, StatusTimeline], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("noteId\ttimestampMillis\tstatus\n")
        for note in sorted(timelines):
            for e in timelines[note].entries:
                fh.write(f"{e.note_id}\t{e.at}\t{e.status.value}\n")
                n += 1
    return n


def timelines_from_entries(entries: Iterable[StatusEntry]) -> dict[str, StatusTimeline]:
    grouped: dict[str, list[StatusEntry]] = {}
    for e in entries:
        grouped.setdefault(e.note_id, []).append(e)
    return {n: StatusTimeline(n, tuple(sorted(es, key=lambda e: e.at)))
            for n, es in sorted(grouped.items())}


def scorer_config_from_mapping(values: Mapping[str, str], base: ScorerConfig = ScorerConfig()) -> ScorerConfig:
    """Build a config from flat ``key -> text`` pairs (``scorer.`` prefix optional)."""
    kw: dict = {}
    th: dict = {}
    th_names = {f for f in StatusThresholds.__dataclass_fields__}
    for key, text in values.items():
        name = key.split(".", 1)[1] if key.startswith("scorer.") else key
        if name.startswith("thresholds."):
            name = name.split(".", 1)[1]
        if name in th_names:
            th[name] = _coerce(StatusThresholds.__dataclass_fields__[name].type, text)
        elif name in ScorerConfig.__dataclass_fields__ and name != "thresholds":
            kw[name] = _coerce(ScorerConfig.__dataclass_fields__[name].type, text)
        else:
            raise KeyError(f"unknown scorer setting {key!r}")
    if th:
        kw["thresholds"] = replace(base.thresholds, **th)
    return replace(base, **kw)


def _coerce(type_name, text):
    t = str(type_name)
    if isinstance(text, str):
        text = text.strip()
    if "bool" in t:
        return text if isinstance(text, bool) else str(text).lower() in ("1", "true", "yes")
    if "int" in t:
        return int(text)
    if "float" in t:
        return float(text)
    return text


def read_scorer_config(path: str | Path) -> ScorerConfig:
    """Read a plain ``key = value`` file of scorer settings."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key.startswith(("scorer.", "thresholds.")) or "." not in key:
                values[key] = value.strip()
    return scorer_config_from_mapping(values)
