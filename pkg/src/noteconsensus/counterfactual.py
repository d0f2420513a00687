"""Counterfactual re-scoring: drop ratings from chosen rater groups, refit the
scorer with the same configuration, and compare note intercepts by cohort."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import RatingEvent, Status, latest_rating_matrix
from .embedder import RaterClass, RaterRelation
from .scorer import ScorerConfig, StatusTimeline, fit, model_statuses

COHORTS = ("disappeared", "stable", "never_displayed")


class Scope(str, enum.Enum):
    POST_DISPLAY_ONLY = "post_display_only"
    ALL_RATINGS = "all_ratings"


@dataclass(frozen=True)
class ExclusionPolicy:
    groups: frozenset = frozenset()
    scope: Scope = Scope.POST_DISPLAY_ONLY

    def __post_init__(self):
        object.__setattr__(self, "groups", frozenset(RaterClass(g) for g in self.groups))
        object.__setattr__(self, "scope", Scope(self.scope))
        if self.scope is Scope.ALL_RATINGS and len(self.groups) == len(RaterClass):
            raise ValueError("excluding every rater group from all ratings leaves an empty matrix")

    @classmethod
    def parse(cls, text: str, scope: str = "post_display_only") -> "ExclusionPolicy":
        """``"Dissimilar"`` or ``"Similar,Dissimilar"``; empty means no exclusion."""
        names = [t.strip() for t in text.split(",") if t.strip()]
        return cls(frozenset(names), Scope(scope))


@dataclass(frozen=True)
class ExclusionReport:
    removed: dict[str, dict[str, int]]
    n_input: int
    n_output: int
    unclassified: int = 0

    @property
    def n_removed(self) -> int:
        return self.n_input - self.n_output

    def totals(self) -> dict[str, int]:
        out = {c.value: 0 for c in RaterClass}
        for per_note in self.removed.values():
            for g, k in per_note.items():
                out[g] += k
        return out


def _display_times(timelines: Mapping[str, StatusTimeline | int | None]) -> dict[str, int | None]:
    out = {}
    for n, v in timelines.items():
        out[n] = v.display_time if isinstance(v, StatusTimeline) else (None if v is None else int(v))
    return out


def _rater_class(value) -> RaterClass:
    return value.rater_class if isinstance(value, RaterRelation) else RaterClass(value)


def apply_policy(events: Iterable[RatingEvent],
                 relations: Mapping[tuple[str, str], RaterRelation | RaterClass | str],
                 timelines: Mapping[str, StatusTimeline | int | None],
                 policy: ExclusionPolicy) -> tuple[list[RatingEvent], ExclusionReport]:
    """Remove ratings whose rater class is excluded (and, when scoped, made at
    or after the note's display time).

    ``relations`` is keyed by (note id, rater id). Pairs without a relation
    count as General and are tallied in ``unclassified``. ``timelines`` may
    hold status timelines or plain display times.
    """
    events = list(events)
    scoped = policy.scope is Scope.POST_DISPLAY_ONLY
    shown = _display_times(timelines) if scoped else {}
    kept: list[RatingEvent] = []
    removed: dict[str, dict[str, int]] = {}
    unclassified = 0
    for e in events:
        rel = relations.get((e.note_id, e.rater_id))
        if rel is None:
            unclassified += 1
            cls = RaterClass.GENERAL
        else:
            cls = _rater_class(rel)
        drop = cls in policy.groups
        if drop and scoped:
            t = shown.get(e.note_id)
            drop = t is not None and e.created_at >= t
        if drop:
            per = removed.setdefault(e.note_id, {})
            per[cls.value] = per.get(cls.value, 0) + 1
        else:
            kept.append(e)
    return kept, ExclusionReport(removed, len(events), len(kept), unclassified)


# ---------------------------------------------------------------------------
# Re-scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoteDelta:
    note_id: str
    cohort: str
    intercept_orig: float
    intercept_cf: float
    status_orig: Status
    status_cf: Status

    @property
    def delta(self) -> float:
        return self.intercept_cf - self.intercept_orig


@dataclass(frozen=True)
class CohortSummary:
    cohort: str
    n: int
    mean_delta: float
    ci_low: float
    ci_high: float


def bootstrap_mean_ci(values: Sequence[float], n_boot: int = 2000, seed: int = 0,
                      level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for a mean."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, x.size, (n_boot, x.size))].mean(axis=1)
    a = (1.0 - level) / 2.0
    return float(np.quantile(means, a)), float(np.quantile(means, 1.0 - a))


@dataclass(frozen=True)
class DeltaReport:
    notes: dict[str, NoteDelta]
    cohorts: dict[str, CohortSummary]
    missing: tuple[str, ...] = ()
    bootstrap_seed: int = 0
    n_boot: int = 2000

    def deltas(self, cohort: str | None = None, notes: Iterable[str] | None = None) -> np.ndarray:
        sel = self.notes.values() if notes is None else (self.notes[n] for n in notes if n in self.notes)
        return np.array([d.delta for d in sel if cohort is None or d.cohort == cohort])

    @property
    def flips(self) -> dict[str, int]:
        survive = sum(1 for d in self.notes.values() if d.cohort == "disappeared"
                      and d.status_cf is Status.CURRENTLY_RATED_HELPFUL)
        vanish = sum(1 for d in self.notes.values() if d.status_orig is Status.CURRENTLY_RATED_HELPFUL
                     and d.status_cf is not Status.CURRENTLY_RATED_HELPFUL)
        return {"would_have_survived": survive, "would_have_vanished": vanish}

    def survived(self, notes: Iterable[str]) -> list[str]:
        """Disappeared notes among ``notes`` that hold Helpful status under the counterfactual."""
        return [n for n in notes if n in self.notes and self.notes[n].cohort == "disappeared"
                and self.notes[n].status_cf is Status.CURRENTLY_RATED_HELPFUL]

    def difference_ci(self, first: str, second: str) -> tuple[float, float, float]:
        """Mean delta of cohort ``first`` minus ``second`` with a bootstrap interval."""
        a, b = self.deltas(first), self.deltas(second)
        if a.size == 0 or b.size == 0:
            return float("nan"), float("nan"), float("nan")
        rng = np.random.default_rng(self.bootstrap_seed + 1)
        diffs = (a[rng.integers(0, a.size, (self.n_boot, a.size))].mean(axis=1)
                 - b[rng.integers(0, b.size, (self.n_boot, b.size))].mean(axis=1))
        return float(a.mean() - b.mean()), float(np.quantile(diffs, 0.025)), float(np.quantile(diffs, 0.975))


def rescore_diff(original_events: Iterable[RatingEvent], filtered_events: Iterable[RatingEvent],
                 config: ScorerConfig = ScorerConfig(),
                 timelines: Mapping[str, StatusTimeline] | None = None,
                 n_boot: int = 2000, bootstrap_seed: int = 0) -> DeltaReport:
    """Fit the scorer on both event sets with one config and pair notes by id.

    Cohorts come from ``timelines``; notes without one are never_displayed.
    Notes absent from the counterfactual fit are listed in ``missing``.
    """
    orig_m = latest_rating_matrix(list(original_events))
    cf_m = latest_rating_matrix(list(filtered_events))
    if orig_m.n_cells == 0 or cf_m.n_cells == 0:
        raise ValueError("both event sets must be non-empty")
    orig = fit(orig_m, config)
    cf = fit(cf_m, config)
    s_orig = model_statuses(orig, orig_m, config.thresholds)
    s_cf = model_statuses(cf, cf_m, config.thresholds)
    i_orig, i_cf = orig.note_intercept_map(), cf.note_intercept_map()
    timelines = timelines or {}
    notes: dict[str, NoteDelta] = {}
    missing = []
    for n in orig.note_ids:
        if n not in i_cf:
            missing.append(n)
            continue
        tl = timelines.get(n)
        cohort = tl.cohort if tl is not None else "never_displayed"
        notes[n] = NoteDelta(n, cohort, float(i_orig[n]), float(i_cf[n]), s_orig[n], s_cf[n])
    cohorts = {}
    for c in COHORTS:
        d = [v.delta for v in notes.values() if v.cohort == c]
        lo, hi = bootstrap_mean_ci(d, n_boot, bootstrap_seed)
        cohorts[c] = CohortSummary(c, len(d), float(np.mean(d)) if d else float("nan"), lo, hi)
    return DeltaReport(notes, cohorts, tuple(missing), bootstrap_seed, n_boot)


def _fmt(x: float) -> str:
    return "nan" if x != x else format(float(x), ".10g")


def write_counterfactual_tsv(report: DeltaReport, path: str | Path) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["noteId", "cohort", "intercept_orig", "intercept_cf", "delta", "status_orig", "status_cf"])
        for n in sorted(report.notes):
            d = report.notes[n]
            w.writerow([n, d.cohort, _fmt(d.intercept_orig), _fmt(d.intercept_cf), _fmt(d.delta),
                        d.status_orig.value, d.status_cf.value])
    return len(report.notes)


def write_cohort_summary_tsv(report: DeltaReport, path: str | Path) -> int:
    """Cohort means with bootstrap intervals, flip counts and missing notes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["cohort", "n", "mean_delta", "ci_low", "ci_high"])
        for c in COHORTS:
            s = report.cohorts[c]
            w.writerow([c, s.n, _fmt(s.mean_delta), _fmt(s.ci_low), _fmt(s.ci_high)])
        for k, v in report.flips.items():
            w.writerow([k, v, "", "", ""])
        w.writerow(["missing_from_counterfactual", len(report.missing), "", "", ""])
    return len(COHORTS)
