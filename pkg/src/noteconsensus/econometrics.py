"""Regression engines: OLS, Poisson and logistic fits with optional absorbed
fixed effects, cluster-robust sandwich covariance, and the interrupted time
series and disappearance designs built on top of them."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import special, stats

from .data import Panel, PostRecord, NoteRecord

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian", "poisson", "binomial")
ITS_TERMS = ("T", "D", "DxT")
Z95 = 1.959963984540054

FE_CAVEAT = ("note fixed effects estimated jointly; with few quarters per note the "
             "incidental-parameters bias of nonlinear fixed-effect estimators applies")


class RankDeficiencyError(ValueError):
    """Regressors are collinear after fixed-effect absorption."""

    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(f"design is rank deficient; collinear columns: {', '.join(self.columns)}")


class SeparationError(ValueError):
    """Logistic likelihood has no finite maximum."""

    def __init__(self, column: str, detail: str = ""):
        self.column = column
        super().__init__(f"perfect separation on column {column!r}{': ' + detail if detail else ''}")


class ConvergenceError(RuntimeError):
    """IRLS diverged or failed to converge; ``trace`` holds per-iteration diagnostics."""

    def __init__(self, message: str, trace: Sequence[dict]):
        self.trace = list(trace)
        lines = [f"  iter {t['iter']}: score_norm={t['score_norm']:.3e} objective={t['objective']:.6g}"
                 for t in self.trace[-10:]]
        super().__init__(message + ("\n" + "\n".join(lines) if lines else ""))


# ---------------------------------------------------------------------------
# Design and result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignMatrix:
    """Regressors, outcome, cluster labels and optional fixed-effect labels.

    When ``fixed_effects`` is set the design carries no intercept column; the
    group effects are absorbed (OLS) or estimated as a parameter block
    (Poisson, logistic).
    """
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    clusters: np.ndarray | None = None
    fixed_effects: np.ndarray | None = None
    n_dropped: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[1] != len(self.columns):
            raise ValueError("column names do not match X")
        if np.asarray(self.y).shape != (X.shape[0],):
            raise ValueError("y must have one entry per row")
        for name, lab in (("clusters", self.clusters), ("fixed_effects", self.fixed_effects)):
            if lab is not None and np.asarray(lab).shape != (X.shape[0],):
                raise ValueError(f"{name} must have one label per row")

    @property
    def n_obs(self) -> int:
        return int(self.X.shape[0])

    @classmethod
    def build(cls, regressors: Mapping[str, Sequence[float]], y: Sequence[float], *,
              clusters: Sequence | None = None, fixed_effects: Sequence | None = None,
              intercept: bool = True) -> "DesignMatrix":
        """Assemble a design, dropping rows with missing values.

        ``intercept`` is ignored when fixed effects are present.
        """
        y = np.asarray(y, dtype=float)
        cols = [np.asarray(v, dtype=float) for v in regressors.values()]
        names = list(regressors)
        if intercept and fixed_effects is None:
            cols.insert(0, np.ones(y.size))
            names.insert(0, "Intercept")
        X = np.column_stack(cols) if cols else np.zeros((y.size, 0))
        ok = np.isfinite(y) & np.all(np.isfinite(X), axis=1)
        cl = None if clusters is None else np.asarray(clusters, dtype=object)
        fe = None if fixed_effects is None else np.asarray(fixed_effects, dtype=object)
        for lab in (cl, fe):
            if lab is not None:
                ok &= np.array([v is not None and v == v for v in lab], dtype=bool)
        dropped = int((~ok).sum())
        if dropped:
            logger.info("design: %d rows with missing values excluded", dropped)
        return cls(X[ok], y[ok], tuple(names), None if cl is None else cl[ok],
                   None if fe is None else fe[ok], dropped)


@dataclass(frozen=True)
class FitResult:
    family: str
    columns: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    n_obs: int
    n_clusters: int
    objective: float
    iterations: int = 0
    converged: bool = True
    fixed_effects: dict = field(default_factory=dict)
    dropped_groups: tuple = ()
    n_dropped_rows: int = 0
    notes: tuple[str, ...] = ()
    reference_group: str | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def p(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.z))

    @property
    def ci_low(self) -> np.ndarray:
        return self.coef - Z95 * self.se

    @property
    def ci_high(self) -> np.ndarray:
        return self.coef + Z95 * self.se

    def index(self, term: str) -> int:
        try:
            return self.columns.index(term)
        except ValueError:
            raise KeyError(term) from None

    def __getitem__(self, term: str) -> float:
        return float(self.coef[self.index(term)])

    def term(self, name: str) -> dict[str, float]:
        i = self.index(name)
        return {"estimate": float(self.coef[i]), "se": float(self.se[i]), "z": float(self.z[i]),
                "p": float(self.p[i]), "ci_low": float(self.ci_low[i]), "ci_high": float(self.ci_high[i])}

    @property
    def loglik(self) -> float:
        """Log-likelihood for Poisson/logistic; for OLS ``objective`` is the SSR."""
        return float(self.objective) if self.family != "gaussian" else float("nan")


def percent_effect(beta):
    """Multiplicative effect of a log-link coefficient as a percent change (exp(b) - 1)."""
    return np.expm1(beta)


# ---------------------------------------------------------------------------
# Shared linear algebra
# ---------------------------------------------------------------------------

def _codes(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inv = np.unique(np.asarray(labels).astype(str), return_inverse=True)
    return uniq, inv


def _group_mean(v: np.ndarray, g: np.ndarray, n_g: int, w: np.ndarray | None = None) -> np.ndarray:
    """Weighted group means of the rows of ``v`` (1-D or 2-D)."""
    w = np.ones(g.size) if w is None else w
    den = np.bincount(g, weights=w, minlength=n_g)
    if v.ndim == 1:
        return np.bincount(g, weights=w * v, minlength=n_g) / den
    out = np.empty((n_g, v.shape[1]))
    for j in range(v.shape[1]):
        out[:, j] = np.bincount(g, weights=w * v[:, j], minlength=n_g)
    return out / den[:, None]


def _collinear_columns(X: np.ndarray, columns: Sequence[str], tol: float = 1e-10) -> list[str]:
    """Columns that add no rank when appended left to right."""
    bad, kept = [], []
    scale = max(float(np.abs(X).max()) if X.size else 0.0, 1.0)
    for j in range(X.shape[1]):
        if not np.any(np.abs(X[:, j]) > tol * scale):
            bad.append(columns[j])
            continue
        trial = kept + [j]
        sv = np.linalg.svd(X[:, trial], compute_uv=False)
        if sv[-1] <= tol * sv[0] * max(X.shape):
            bad.append(columns[j])
        else:
            kept.append(j)
    return bad


def _check_rank(X: np.ndarray, columns: Sequence[str]) -> None:
    if X.shape[1] == 0:
        return
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        bad = _collinear_columns(X, columns) or list(columns)
        raise RankDeficiencyError(bad)


def _sandwich(Xt: np.ndarray, u: np.ndarray, bread_inv: np.ndarray, clusters: np.ndarray,
              k: int) -> tuple[np.ndarray, int]:
    """Cluster-robust covariance from transformed regressors and residual scores.

    ``Xt`` rows times ``u`` are the per-observation score contributions.
    """
    _, cid = _codes(clusters)
    g = int(cid.max()) + 1 if cid.size else 0
    if g < 2:
        raise ValueError("cluster-robust covariance needs at least two clusters")
    n = Xt.shape[0]
    scores = Xt * u[:, None]
    S = np.zeros((g, Xt.shape[1]))
    np.add.at(S, cid, scores)
    meat = S.T @ S
    corr = g / (g - 1) * (n - 1) / max(n - k, 1)
    cov = corr * bread_inv @ meat @ bread_inv
    return 0.5 * (cov + cov.T), g


def _nested(inner: np.ndarray, outer: np.ndarray) -> bool:
    """True when every ``inner`` group lies inside one ``outer`` group."""
    pairs = {}
    for a, b in zip(np.asarray(inner).astype(str), np.asarray(outer).astype(str)):
        if pairs.setdefault(a, b) != b:
            return False
    return True


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def fit_ols(design: DesignMatrix) -> FitResult:
    """Least squares, absorbing fixed effects by within-group demeaning.

    Covariance is note/cluster-robust when ``design.clusters`` is set and
    heteroskedasticity-robust (each row its own cluster) otherwise.
    """
    X = np.asarray(design.X, dtype=float)
    y = np.asarray(design.y, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty design")
    n_fe = 0
    if design.fixed_effects is not None:
        _, g = _codes(design.fixed_effects)
        n_fe = int(g.max()) + 1
        X = X - _group_mean(X, g, n_fe)[g]
        y = y - _group_mean(y, g, n_fe)[g]
    _check_rank(X, design.columns)
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ beta
    bread_inv = np.linalg.inv(xtx)
    clusters = design.clusters if design.clusters is not None else np.arange(n)
    k = X.shape[1] + (0 if n_fe == 0 or _nested(design.fixed_effects, clusters) else n_fe)
    cov, g_count = _sandwich(X, resid, bread_inv, clusters, k)
    notes = ("fixed effects absorbed by within-group demeaning",) if n_fe else ()
    return FitResult("gaussian", design.columns, beta, cov, n, g_count, float(resid @ resid),
                     n_dropped_rows=design.n_dropped, notes=notes)


def cluster_robust(fit: FitResult, design: DesignMatrix, clusters: Sequence | None = None) -> np.ndarray:
    """Recompute the clustered sandwich covariance of ``fit`` on ``design``.

    Uses ``design.clusters`` unless ``clusters`` is given. The bread is the
    observed information of the family, after concentrating out any fixed
    effects; correction is G/(G-1) * (N-1)/(N-K).
    """
    cl = np.asarray(clusters if clusters is not None else design.clusters, dtype=object)
    if cl is None or cl.shape != (design.n_obs,):
        raise ValueError("clusters must label every row")
    X = np.asarray(design.X, dtype=float)
    y = np.asarray(design.y, dtype=float)
    keep = np.ones(design.n_obs, dtype=bool)
    fe = design.fixed_effects
    if fe is not None and fit.dropped_groups:
        keep = ~np.isin(np.asarray(fe).astype(str), np.asarray(fit.dropped_groups, dtype=str))
    X, y, cl = X[keep], y[keep], cl[keep]
    fe = None if fe is None else np.asarray(fe)[keep]
    eta = X @ fit.coef
    n_fe = 0
    if fe is not None:
        labels, g = _codes(fe)
        n_fe = labels.size
        if fit.family == "gaussian":
            eta = None
        else:
            alpha = np.array([fit.fixed_effects[lab] for lab in labels])
            eta = eta + alpha[g]
    if fit.family == "gaussian":
        w = np.ones(y.size)
        if fe is not None:
            X = X - _group_mean(X, g, n_fe)[g]
            y = y - _group_mean(y, g, n_fe)[g]
        u = y - X @ fit.coef
    else:
        mu, w = _mean_weight(fit.family, eta)
        u = y - mu
        if fe is not None:
            X = X - _group_mean(X, g, n_fe, w)[g]
    bread_inv = np.linalg.inv((X * w[:, None]).T @ X)
    k = X.shape[1] + (0 if n_fe == 0 or _nested(fe, cl) else n_fe)
    return _sandwich(X, u, bread_inv, cl, k)[0]


# ---------------------------------------------------------------------------
# GLMs by IRLS / Newton
# ---------------------------------------------------------------------------

def _mean_weight(family: str, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if family == "poisson":
        mu = np.exp(eta)
        return mu, mu
    mu = special.expit(eta)
    return mu, mu * (1.0 - mu)


def _loglik(family: str, y: np.ndarray, eta: np.ndarray) -> float:
    if family == "poisson":
        return float(np.sum(y * eta - np.exp(eta) - special.gammaln(y + 1.0)))
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _irls(family: str, design: DesignMatrix, max_iter: int, tol: float) -> FitResult:
    X = np.asarray(design.X, dtype=float)
    y = np.asarray(design.y, dtype=float)
    cols = design.columns
    dropped: tuple = ()
    fe_labels = None
    if design.fixed_effects is not None:
        labels, g = _codes(design.fixed_effects)
        sums = np.bincount(g, weights=y, minlength=labels.size)
        sizes = np.bincount(g, minlength=labels.size)
        if family == "poisson":
            degenerate = sums == 0
        else:
            degenerate = (sums == 0) | (sums == sizes)
        if degenerate.any():
            dropped = tuple(labels[degenerate].tolist())
            logger.info("%s: %d fixed-effect groups with degenerate outcome dropped", family, len(dropped))
            keep = ~degenerate[g]
            X, y = X[keep], y[keep]
            labels, g = _codes(np.asarray(design.fixed_effects)[keep])
        fe_labels = labels
        n_g = labels.size
    n, p = X.shape
    if n == 0:
        raise ValueError("empty design")
    if fe_labels is not None:
        _check_rank(X - _group_mean(X, g, n_g)[g], cols)
    else:
        _check_rank(X, cols)
    if family == "binomial":
        _check_separation(X, y, cols)

    beta = np.zeros(p)
    if fe_labels is not None:
        ybar = np.bincount(g, weights=y, minlength=n_g) / np.bincount(g, minlength=n_g)
        alpha = np.log(ybar) if family == "poisson" else special.logit(np.clip(ybar, 1e-6, 1 - 1e-6))
    else:
        alpha = np.zeros(0)
        if family == "poisson" and "Intercept" in cols:
            beta[cols.index("Intercept")] = np.log(max(y.mean(), 1e-10))

    def linpred(b, a):
        eta = X @ b
        return eta + a[g] if fe_labels is not None else eta

    eta = linpred(beta, alpha)
    obj = _loglik(family, y, eta)
    trace: list[dict] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu, w = _mean_weight(family, eta)
        r = y - mu
        gb = X.T @ r
        if fe_labels is not None:
            ga = np.bincount(g, weights=r, minlength=n_g)
            score_norm = float(np.sqrt(gb @ gb + ga @ ga))
        else:
            score_norm = float(np.sqrt(gb @ gb))
        trace.append({"iter": it, "score_norm": score_norm, "objective": obj,
                      "max_abs_coef": float(np.max(np.abs(beta))) if p else 0.0})
        if score_norm < tol:
            converged = True
            break
        if fe_labels is not None:
            D = np.bincount(g, weights=w, minlength=n_g)
            B = np.empty((p, n_g))
            for j in range(p):
                B[j] = np.bincount(g, weights=w * X[:, j], minlength=n_g)
            A = (X * w[:, None]).T @ X
            S = A - (B / D) @ B.T
            rhs = gb - B @ (ga / D)
            db = np.linalg.solve(S, rhs) if p else np.zeros(0)
            da = (ga - B.T @ db) / D
        else:
            H = (X * w[:, None]).T @ X
            db = np.linalg.solve(H, gb)
            da = np.zeros(0)
        step = 1.0
        for _ in range(40):
            nb, na = beta + step * db, alpha + step * da
            ne = linpred(nb, na)
            nobj = _loglik(family, y, ne)
            if np.isfinite(nobj) and nobj >= obj - 1e-12 * abs(obj):
                break
            step *= 0.5
        else:
            raise ConvergenceError(f"{family} IRLS: step halving failed", trace)
        if not np.all(np.isfinite(nb)) or not np.isfinite(nobj):
            raise ConvergenceError(f"{family} IRLS diverged", trace)
        beta, alpha, eta, obj = nb, na, ne, nobj
        if family == "binomial" and p and np.max(np.abs(beta)) > 50:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(cols[j], "coefficient diverging during IRLS")
    if not converged:
        if family == "binomial" and p:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(cols[j], f"no convergence in {max_iter} iterations")
        raise ConvergenceError(f"{family} IRLS did not reach score norm {tol:g} in {max_iter} iterations",
                               trace)

    fe_map: dict = {}
    notes: tuple[str, ...] = ()
    reference = None
    if fe_labels is not None:
        reference = str(fe_labels[int(np.argmax(np.bincount(g, minlength=n_g)))])
        fe_map = {str(lab): float(a) for lab, a in zip(fe_labels, alpha)}
        notes = (FE_CAVEAT,)
    # covariance of the regressor block, fixed effects concentrated out
    mu, w = _mean_weight(family, eta)
    Xt = X - _group_mean(X, g, n_g, w)[g] if fe_labels is not None else X
    bread_inv = np.linalg.inv((Xt * w[:, None]).T @ Xt) if p else np.zeros((0, 0))
    clusters = design.clusters
    if clusters is not None and dropped:
        keep = ~np.isin(np.asarray(design.fixed_effects).astype(str), np.asarray(dropped, dtype=str))
        clusters = np.asarray(clusters)[keep]
    clusters = clusters if clusters is not None else np.arange(n)
    k = p + (0 if fe_labels is None or _nested(fe_labels[g], clusters) else fe_labels.size)
    cov, g_count = _sandwich(Xt, y - mu, bread_inv, clusters, k) if p else (np.zeros((0, 0)), 0)
    return FitResult(family, cols, beta, cov, n, g_count, obj, it, converged, fe_map, dropped,
                     design.n_dropped, notes, reference)


def _check_separation(X: np.ndarray, y: np.ndarray, columns: Sequence[str]) -> None:
    if np.all(y == y[0]):
        raise SeparationError(columns[0] if columns else "Intercept", "outcome is constant")
    pos, neg = y == 1, y == 0
    for j, name in enumerate(columns):
        x = X[:, j]
        if np.ptp(x) == 0:
            continue
        if x[neg].max() <= x[pos].min() or x[pos].max() <= x[neg].min():
            raise SeparationError(name, "a threshold on this column separates the outcome")


def fit_poisson(design: DesignMatrix, max_iter: int = 100, tol: float = 1e-8) -> FitResult:
    """Poisson regression with log link by Newton-IRLS.

    Fixed effects enter as an indicator block solved by partitioned Newton
    steps; groups with all-zero outcomes have no finite effect and are
    dropped (see ``dropped_groups``). ``fixed_effects`` in the result maps
    each group to its level and names the largest group as reference.
    """
    y = np.asarray(design.y, dtype=float)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("Poisson outcome must be non-negative integers")
    return _irls("poisson", design, max_iter, tol)


def fit_logistic(design: DesignMatrix, max_iter: int = 100, tol: float = 1e-8) -> FitResult:
    """Logistic regression by Newton-IRLS; clustered covariance on ``design.clusters``."""
    y = np.asarray(design.y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic outcome must be binary 0/1")
    return _irls("binomial", design, max_iter, tol)


def fit(design: DesignMatrix, family: str) -> FitResult:
    if family == "gaussian":
        return fit_ols(design)
    if family == "poisson":
        return fit_poisson(design)
    if family == "binomial":
        return fit_logistic(design)
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Interrupted time series
# ---------------------------------------------------------------------------

def its_design(panel: Panel, outcome: str) -> DesignMatrix:
    """T, D and DxT regressors with note fixed effects and note clusters."""
    if outcome == "count":
        y = panel.rating_count
    elif outcome == "leaning":
        y = panel.rating_leaning
    else:
        raise ValueError("outcome must be 'count' or 'leaning'")
    regs = {"T": panel.quarter_index, "D": panel.post_display, "DxT": panel.quarters_since_display}
    return DesignMatrix.build(regs, y, clusters=panel.note_id, fixed_effects=panel.note_id)


@dataclass(frozen=True)
class ITSReport:
    outcome: str
    family: str
    models: dict[str, FitResult]
    skipped: dict[str, str]

    def percent_effects(self, key: str) -> dict[str, tuple[float, float, float]]:
        """(effect, ci_low, ci_high) as percent changes for a Poisson model."""
        fr = self.models[key]
        if fr.family != "poisson":
            raise ValueError("percent effects are defined for the Poisson count model only")
        return {t: (float(percent_effect(fr[t])), float(percent_effect(fr.term(t)["ci_low"])),
                    float(percent_effect(fr.term(t)["ci_high"]))) for t in fr.columns}


def its_report(panels: Panel | Mapping[str, Panel], outcome: str,
               subgroups: Mapping[str, Iterable[str]] | None = None) -> ITSReport:
    """Fit the ITS specification per panel and per note subgroup.

    ``panels`` may be one panel or a mapping of labelled panels (for example
    rater-group splits). ``subgroups`` restricts each panel to note sets
    (for example stable and disappeared notes). Empty or unfittable groups
    are recorded in ``skipped``.
    """
    family = "poisson" if outcome == "count" else "gaussian"
    if outcome not in ("count", "leaning"):
        raise ValueError("outcome must be 'count' or 'leaning'")
    labelled = {"all": panels} if isinstance(panels, Panel) else dict(panels)
    subs = {"all": None} if subgroups is None else dict(subgroups)
    models: dict[str, FitResult] = {}
    skipped: dict[str, str] = {}
    for plabel, panel in labelled.items():
        for slabel, members in subs.items():
            if len(labelled) == 1:
                key = slabel
            elif len(subs) == 1:
                key = plabel
            else:
                key = f"{plabel}/{slabel}"
            part = panel if members is None else panel.restrict(members)
            if len(part) == 0:
                skipped[key] = "empty subgroup"
                logger.warning("its %s: subgroup %s is empty, skipped", outcome, key)
                continue
            try:
                models[key] = fit(its_design(part, outcome), family)
            except (ValueError, RuntimeError) as exc:
                skipped[key] = f"fit failed: {exc}".splitlines()[0]
                logger.warning("its %s: %s skipped (%s)", outcome, key, skipped[key])
    return ITSReport(outcome, family, models, skipped)


REPORT_COLUMNS = ("model", "outcome", "family", "term", "estimate", "clustered_se", "z", "p",
                  "ci_low", "ci_high", "n_obs", "n_clusters", "pct_effect", "pct_ci_low", "pct_ci_high")


def _fmt(x: float) -> str:
    return "nan" if x != x else format(float(x), ".10g")


def write_its_report_tsv(reports: ITSReport | Sequence[ITSReport], path: str | Path) -> int:
    """One row per (model, term); percent columns are filled for Poisson terms."""
    reports = [reports] if isinstance(reports, ITSReport) else list(reports)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            for key, fr in rep.models.items():
                for i, term in enumerate(fr.columns):
                    if fr.family == "poisson":
                        pct = [percent_effect(fr.coef[i]), percent_effect(fr.ci_low[i]),
                               percent_effect(fr.ci_high[i])]
                    else:
                        pct = [float("nan")] * 3
                    w.writerow([key, rep.outcome, fr.family, term, _fmt(fr.coef[i]), _fmt(fr.se[i]),
                                _fmt(fr.z[i]), _fmt(fr.p[i]), _fmt(fr.ci_low[i]), _fmt(fr.ci_high[i]),
                                fr.n_obs, fr.n_clusters, *map(_fmt, pct)])
                    rows += 1
    return rows


# ---------------------------------------------------------------------------
# Disappearance model
# ---------------------------------------------------------------------------

POST_COVARIATES = ("topic_politics", "topic_science", "topic_health", "topic_economy",
                   "sentiment_pos", "sentiment_neg", "has_media", "verified", "log_account_age",
                   "log_followers", "log_followees", "misinfo_exposure", "partisan_score")


def _covariate(post: PostRecord, name: str) -> float:
    if name == "log_account_age":
        return float(np.log1p(post.account_age_days))
    if name == "log_followers":
        return float(np.log1p(post.followers))
    if name == "log_followees":
        return float(np.log1p(post.followees))
    return float(getattr(post, name))


def disappearance_design(displayed: Mapping[str, bool], notes: Mapping[str, NoteRecord],
                         posts: Mapping[str, PostRecord],
                         covariates: Sequence[str] = POST_COVARIATES) -> DesignMatrix:
    """Rows are displayed notes; outcome 1 when the note later disappeared.

    ``displayed`` maps note id to its disappeared flag. Clusters are post
    authors. Notes without a post record get missing covariates and are
    dropped by the design builder.
    """
    ids = sorted(displayed)
    y = np.array([1.0 if displayed[n] else 0.0 for n in ids])
    regs = {c: [] for c in covariates}
    authors = []
    for n in ids:
        post = posts.get(notes[n].post_id) if n in notes else None
        authors.append(post.author_id if post is not None else None)
        for c in covariates:
            regs[c].append(_covariate(post, c) if post is not None else np.nan)
    return DesignMatrix.build(regs, y, clusters=np.array(authors, dtype=object))
