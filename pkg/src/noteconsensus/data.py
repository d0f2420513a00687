"""Domain records, TSV ingestion, rating matrices and display-centred panels.

All timestamps are epoch milliseconds (UTC). Rating levels are encoded as
NotHelpful = 0.0, SomewhatHelpful = 0.5, Helpful = 1.0.
"""

from __future__ import annotations

import csv
import enum
import logging
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

QUARTER_MS = 15 * 60 * 1000
DEFAULT_WINDOW = (-16, 16)

LEVEL_BY_NAME = {"NOT_HELPFUL": 0.0, "SOMEWHAT_HELPFUL": 0.5, "HELPFUL": 1.0}
NAME_BY_LEVEL = {v: k for k, v in LEVEL_BY_NAME.items()}


class Status(str, enum.Enum):
    NEEDS_MORE_RATINGS = "NEEDS_MORE_RATINGS"
    CURRENTLY_RATED_HELPFUL = "CURRENTLY_RATED_HELPFUL"
    CURRENTLY_RATED_NOT_HELPFUL = "CURRENTLY_RATED_NOT_HELPFUL"

    def __str__(self) -> str:
        return self.value


class MissingColumnError(ValueError):
    """A mandatory column is absent from a TSV header."""


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatingEvent:
    note_id: str
    rater_id: str
    created_at: int
    level: float


@dataclass(frozen=True)
class NoteRecord:
    note_id: str
    writer_id: str
    post_id: str
    created_at: int
    cited_domains: tuple[str, ...] = ()


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    author_id: str
    topic_politics: bool
    topic_science: bool
    topic_health: bool
    topic_economy: bool
    sentiment_pos: float
    sentiment_neg: float
    has_media: bool
    verified: bool
    account_age_days: float
    followers: int
    followees: int
    misinfo_exposure: float
    partisan_score: float


@dataclass(frozen=True)
class StatusEntry:
    note_id: str
    at: int
    status: Status


@dataclass(frozen=True)
class PanelObservation:
    note_id: str
    quarter_index: int
    post_display: int
    quarters_since_display: int
    rating_count: int
    rating_leaning: int


# ---------------------------------------------------------------------------
# TSV layouts
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "t", "yes"):
        return True
    if t in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_millis(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise ValueError("timestamp must be positive")
    return value


def _parse_count(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("count must be non-negative")
    return value


def _nonempty(text: str) -> str:
    if not text:
        raise ValueError("empty identifier")
    return text


def _parse_rating(row: dict) -> RatingEvent:
    level = LEVEL_BY_NAME[row["helpfulnessLevel"].strip()]
    return RatingEvent(
        note_id=_nonempty(row["noteId"]),
        rater_id=_nonempty(row["raterParticipantId"]),
        created_at=_parse_millis(row["createdAtMillis"]),
        level=level,
    )


def _parse_note(row: dict) -> NoteRecord:
    domains = row.get("citedDomains") or ""
    return NoteRecord(
        note_id=_nonempty(row["noteId"]),
        writer_id=_nonempty(row["noteAuthorParticipantId"]),
        post_id=row["tweetId"],
        created_at=_parse_millis(row["createdAtMillis"]),
        cited_domains=tuple(d.strip() for d in domains.split(",") if d.strip()),
    )


def _parse_status(row: dict) -> StatusEntry:
    return StatusEntry(
        note_id=_nonempty(row["noteId"]),
        at=_parse_millis(row["timestampMillis"]),
        status=Status(row["status"].strip()),
    )


def _parse_post(row: dict) -> PostRecord:
    misinfo = float(row["misinfo_exposure"])
    partisan = float(row["partisan_score"])
    if not 0.0 <= misinfo <= 1.0:
        raise ValueError("misinfo_exposure outside [0, 1]")
    if not -1.0 <= partisan <= 1.0:
        raise ValueError("partisan_score outside [-1, 1]")
    return PostRecord(
        post_id=_nonempty(row["postId"]),
        author_id=_nonempty(row["authorId"]),
        topic_politics=_parse_bool(row["topic_politics"]),
        topic_science=_parse_bool(row["topic_science"]),
        topic_health=_parse_bool(row["topic_health"]),
        topic_economy=_parse_bool(row["topic_economy"]),
        sentiment_pos=float(row["sentiment_pos"]),
        sentiment_neg=float(row["sentiment_neg"]),
        has_media=_parse_bool(row["has_media"]),
        verified=_parse_bool(row["verified"]),
        account_age_days=float(row["account_age_days"]),
        followers=_parse_count(row["followers"]),
        followees=_parse_count(row["followees"]),
        misinfo_exposure=misinfo,
        partisan_score=partisan,
    )


def _format_rating(r: RatingEvent) -> list[str]:
    return [r.note_id, r.rater_id, str(r.created_at), NAME_BY_LEVEL[r.level]]


def _format_note(n: NoteRecord) -> list[str]:
    return [n.note_id, n.writer_id, n.post_id, str(n.created_at), ",".join(n.cited_domains)]


def _format_status(s: StatusEntry) -> list[str]:
    return [s.note_id, str(s.at), s.status.value]


def _format_post(p: PostRecord) -> list[str]:
    out = []
    for f in fields(PostRecord):
        v = getattr(p, f.name)
        if isinstance(v, bool):
            out.append("1" if v else "0")
        else:
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
    return out


@dataclass(frozen=True)
class _Layout:
    columns: tuple[str, ...]
    mandatory: tuple[str, ...]
    id_column: str
    parse: object
    format: object


LAYOUTS: dict[str, _Layout] = {
    "ratings": _Layout(
        ("noteId", "raterParticipantId", "createdAtMillis", "helpfulnessLevel"),
        ("noteId", "raterParticipantId", "createdAtMillis", "helpfulnessLevel"),
        "raterParticipantId", _parse_rating, _format_rating),
    "notes": _Layout(
        ("noteId", "noteAuthorParticipantId", "tweetId", "createdAtMillis", "citedDomains"),
        ("noteId", "noteAuthorParticipantId", "tweetId", "createdAtMillis"),
        "noteId", _parse_note, _format_note),
    "status": _Layout(
        ("noteId", "timestampMillis", "status"),
        ("noteId", "timestampMillis", "status"),
        "noteId", _parse_status, _format_status),
    "posts": _Layout(
        ("postId", "authorId") + tuple(f.name for f in fields(PostRecord))[2:],
        ("postId", "authorId") + tuple(f.name for f in fields(PostRecord))[2:],
        "postId", _parse_post, _format_post),
}


@dataclass
class IngestReport:
    kind: str
    rows_read: int = 0
    rows_dropped: int = 0
    distinct_ids: int = 0
    dropped_lines: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.rows_dropped


def iter_tsv(path: str | Path, kind: str, report: IngestReport | None = None) -> Iterator:
    """Stream typed records from one TSV file.

    Malformed rows are skipped and recorded on ``report``.
    """
    layout = LAYOUTS[kind]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = reader.fieldnames or []
        for col in layout.mandatory:
            if col not in header:
                raise MissingColumnError(f"{path}: missing mandatory column {col!r}")
        for lineno, row in enumerate(reader, start=2):
            if report is not None:
                report.rows_read += 1
            try:
                if any(row.get(c) is None for c in layout.mandatory):
                    raise ValueError("short row")
                record = layout.parse(row)
            except (KeyError, ValueError) as exc:
                if report is not None:
                    report.rows_dropped += 1
                    report.dropped_lines.append((str(path), lineno, str(exc)))
                continue
            yield record


def ingest_tsv(paths: str | Path | Sequence[str | Path], kind: str) -> tuple[list, IngestReport]:
    """Read one or more TSV files of a given kind into records.

    ``kind`` is one of ``notes``, ``ratings``, ``status`` or ``posts``.
    Duplicate note or post ids after the first occurrence are dropped.
    """
    if kind not in LAYOUTS:
        raise ValueError(f"unknown TSV kind {kind!r}")
    if isinstance(paths, (str, Path)):
        paths = [paths]
    report = IngestReport(kind=kind)
    records = []
    seen: set[str] = set()
    unique_key = {"notes": "note_id", "posts": "post_id"}.get(kind)
    for path in paths:
        for rec in iter_tsv(path, kind, report):
            if unique_key is not None:
                key = getattr(rec, unique_key)
                if key in seen:
                    report.rows_dropped += 1
                    report.dropped_lines.append((str(path), -1, f"duplicate id {key}"))
                    continue
                seen.add(key)
            records.append(rec)
    id_attr = {"ratings": "rater_id", "notes": "note_id",
               "status": "note_id", "posts": "post_id"}[kind]
    report.distinct_ids = len({getattr(r, id_attr) for r in records})
    logger.info("ingested %s: %d read, %d dropped", kind, report.rows_read, report.rows_dropped)
    return records, report


def write_tsv(records: Iterable, path: str | Path, kind: str) -> int:
    layout = LAYOUTS[kind]
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\t".join(layout.columns) + "\n")
        for rec in records:
            fh.write("\t".join(layout.format(rec)) + "\n")
            n += 1
    return n


def read_lookup(path: str | Path) -> dict[str, float]:
    """Read a ``hostname<TAB>score`` table (bias.tsv / quality.tsv)."""
    out: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        for col in ("hostname", "score"):
            if col not in (reader.fieldnames or []):
                raise MissingColumnError(f"{path}: missing mandatory column {col!r}")
        for row in reader:
            try:
                out[row["hostname"].strip().lower()] = float(row["score"])
            except (TypeError, ValueError):
                continue
    return out


def write_lookup(lookup: Mapping[str, float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("hostname\tscore\n")
        for host in sorted(lookup):
            fh.write(f"{host}\t{float(lookup[host])!r}\n")


# ---------------------------------------------------------------------------
# Rating matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatingMatrix:
    """Sparse note x rater matrix in coordinate form.

    Cells are sorted by (note index, rater index); ids are sorted strings.
    """
    note_ids: tuple[str, ...]
    rater_ids: tuple[str, ...]
    note_idx: np.ndarray
    rater_idx: np.ndarray
    values: np.ndarray
    created_at: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.values.size)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.note_ids), len(self.rater_ids)

    def __len__(self) -> int:
        return self.n_cells

    def cells(self) -> dict[tuple[str, str], float]:
        return {(self.note_ids[n], self.rater_ids[r]): float(v)
                for n, r, v in zip(self.note_idx, self.rater_idx, self.values)}

    def expand(self) -> list[RatingEvent]:
        return [RatingEvent(self.note_ids[n], self.rater_ids[r], int(t), float(v))
                for n, r, v, t in zip(self.note_idx, self.rater_idx, self.values, self.created_at)]

    def raters_per_note(self) -> np.ndarray:
        return np.bincount(self.note_idx, minlength=len(self.note_ids))

    def ratings_per_rater(self) -> np.ndarray:
        return np.bincount(self.rater_idx, minlength=len(self.rater_ids))

    def subset(self, keep: np.ndarray) -> "RatingMatrix":
        """Keep the masked cells and re-index to the ids still present."""
        n_idx, r_idx = self.note_idx[keep], self.rater_idx[keep]
        used_n = np.unique(n_idx)
        used_r = np.unique(r_idx)
        remap_n = np.full(len(self.note_ids), -1, dtype=np.int64)
        remap_n[used_n] = np.arange(used_n.size)
        remap_r = np.full(len(self.rater_ids), -1, dtype=np.int64)
        remap_r[used_r] = np.arange(used_r.size)
        return RatingMatrix(
            note_ids=tuple(self.note_ids[i] for i in used_n),
            rater_ids=tuple(self.rater_ids[i] for i in used_r),
            note_idx=remap_n[n_idx],
            rater_idx=remap_r[r_idx],
            values=self.values[keep],
            created_at=self.created_at[keep],
        )


def _empty_matrix() -> RatingMatrix:
    z = np.zeros(0, dtype=np.int64)
    return RatingMatrix((), (), z, z.copy(), np.zeros(0), z.copy())


def latest_rating_matrix(events: Iterable[RatingEvent]) -> RatingMatrix:
    """Collapse a rating stream to one cell per (note, rater).

    The event with the largest ``created_at`` wins; equal timestamps are
    resolved in favour of the larger level.
    """
    events = list(events)
    if not events:
        return _empty_matrix()
    note_codes, note_ids = _factorize([e.note_id for e in events])
    rater_codes, rater_ids = _factorize([e.rater_id for e in events])
    times = np.fromiter((e.created_at for e in events), dtype=np.int64, count=len(events))
    levels = np.fromiter((e.level for e in events), dtype=float, count=len(events))
    # lexsort: last key is primary
    order = np.lexsort((levels, times, rater_codes, note_codes))
    n_s, r_s = note_codes[order], rater_codes[order]
    last = np.ones(order.size, dtype=bool)
    last[:-1] = (n_s[1:] != n_s[:-1]) | (r_s[1:] != r_s[:-1])
    pick = order[last]
    return RatingMatrix(
        note_ids=note_ids,
        rater_ids=rater_ids,
        note_idx=note_codes[pick],
        rater_idx=rater_codes[pick],
        values=levels[pick],
        created_at=times[pick],
    )


def _factorize(labels: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    uniq, codes = np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True)
    return codes.astype(np.int64), tuple(str(u) for u in uniq)


# ---------------------------------------------------------------------------
# Display times and ITS panels
# ---------------------------------------------------------------------------

def first_display_times(entries: Iterable[StatusEntry]) -> dict[str, int]:
    """Time of the first CurrentlyRatedHelpful entry per note."""
    out: dict[str, int] = {}
    for e in entries:
        if e.status is Status.CURRENTLY_RATED_HELPFUL:
            if e.note_id not in out or e.at < out[e.note_id]:
                out[e.note_id] = e.at
    return out


@dataclass(frozen=True)
class Panel:
    """Columnar (note, quarter) panel around each note's display time."""
    note_id: np.ndarray
    quarter_index: np.ndarray
    post_display: np.ndarray
    quarters_since_display: np.ndarray
    rating_count: np.ndarray
    rating_leaning: np.ndarray
    window: tuple[int, int] = DEFAULT_WINDOW
    excluded: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.note_id.size)

    @property
    def notes(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.note_id.tolist()))

    def observations(self) -> Iterator[PanelObservation]:
        for i in range(len(self)):
            yield PanelObservation(
                str(self.note_id[i]), int(self.quarter_index[i]), int(self.post_display[i]),
                int(self.quarters_since_display[i]), int(self.rating_count[i]),
                int(self.rating_leaning[i]))

    def restrict(self, notes: Iterable[str]) -> "Panel":
        keep = np.isin(self.note_id, np.asarray(list(notes), dtype=object))
        return Panel(self.note_id[keep], self.quarter_index[keep], self.post_display[keep],
                     self.quarters_since_display[keep], self.rating_count[keep],
                     self.rating_leaning[keep], self.window, self.excluded)


def build_its_panel(
    events: Iterable[RatingEvent],
    display_times: Mapping[str, int],
    window: tuple[int, int] = DEFAULT_WINDOW,
    notes: Iterable[str] | None = None,
) -> Panel:
    """Bin ratings into 15-minute quarters relative to each note's display.

    Quarter ``T`` covers ``[display + T*15min, display + (T+1)*15min)``; the
    display quarter is ``T = 0`` and has ``D = 1``. SomewhatHelpful ratings
    add to the count but not to the leaning. Notes in scope without a
    display time are listed in ``Panel.excluded``.
    """
    lo, hi = window
    if hi < lo:
        raise ValueError("window upper bound below lower bound")
    events = list(events)
    scope = list(dict.fromkeys(notes)) if notes is not None else sorted(
        set(display_times) | {e.note_id for e in events})
    included = [n for n in scope if n in display_times]
    excluded = tuple(n for n in scope if n not in display_times)
    if excluded:
        logger.info("panel: %d notes without display time excluded", len(excluded))
    width = hi - lo + 1
    pos = {n: i for i, n in enumerate(included)}
    counts = np.zeros((len(included), width), dtype=np.int64)
    leaning = np.zeros((len(included), width), dtype=np.int64)
    for e in events:
        i = pos.get(e.note_id)
        if i is None:
            continue
        q = (e.created_at - display_times[e.note_id]) // QUARTER_MS
        if q < lo or q > hi:
            continue
        counts[i, q - lo] += 1
        if e.level == 1.0:
            leaning[i, q - lo] += 1
        elif e.level == 0.0:
            leaning[i, q - lo] -= 1
    T = np.tile(np.arange(lo, hi + 1), len(included))
    D = (T >= 0).astype(np.int64)
    return Panel(
        note_id=np.repeat(np.asarray(included, dtype=object), width),
        quarter_index=T,
        post_display=D,
        quarters_since_display=D * np.maximum(T, 0),
        rating_count=counts.ravel(),
        rating_leaning=leaning.ravel(),
        window=(lo, hi),
        excluded=excluded,
    )


def write_panel_tsv(panels: Mapping[str, Panel], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("group\tnoteId\tT\tD\tDxT\trating_count\trating_leaning\n")
        for group in panels:
            for o in panels[group].observations():
                fh.write(f"{group}\t{o.note_id}\t{o.quarter_index}\t{o.post_display}\t"
                         f"{o.quarters_since_display}\t{o.rating_count}\t{o.rating_leaning}\n")
                n += 1
    return n


def read_panel_tsv(path: str | Path) -> dict[str, Panel]:
    rows: dict[str, list[list[str]]] = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader)
        if header[:2] != ["group", "noteId"]:
            raise MissingColumnError(f"{path}: not a panel file")
        for row in reader:
            rows.setdefault(row[0], []).append(row[1:])
    out = {}
    for group, rs in rows.items():
        cols = list(zip(*rs))
        T = np.asarray(cols[1], dtype=np.int64)
        out[group] = Panel(
            note_id=np.asarray(cols[0], dtype=object), quarter_index=T,
            post_display=np.asarray(cols[2], dtype=np.int64),
            quarters_since_display=np.asarray(cols[3], dtype=np.int64),
            rating_count=np.asarray(cols[4], dtype=np.int64),
            rating_leaning=np.asarray(cols[5], dtype=np.int64),
            window=(int(T.min()), int(T.max())) if T.size else DEFAULT_WINDOW)
    return out


# ---------------------------------------------------------------------------
# Cited-source scoring
# ---------------------------------------------------------------------------

def _lookup_mean(note: NoteRecord, lookup: Mapping[str, float]) -> float | None:
    vals = [lookup[d.lower()] for d in note.cited_domains if d.lower() in lookup]
    if not vals:
        return None
    return float(np.mean(vals))


def domain_bias_score(note: NoteRecord, bias_lookup: Mapping[str, float]) -> float | None:
    """Mean political-bias code (-1 left ... +1 right) of the note's cited domains."""
    return _lookup_mean(note, bias_lookup)


def domain_quality_score(note: NoteRecord, quality_lookup: Mapping[str, float]) -> tuple[float | None, str | None]:
    """Mean source quality in [0, 1] and its high/low label (high iff >= 0.5)."""
    score = _lookup_mean(note, quality_lookup)
    if score is None:
        return None, None
    return score, ("high" if score >= 0.5 else "low")


def rating_counts_by(events: Iterable[RatingEvent], attr: str = "note_id") -> Counter:
    return Counter(getattr(e, attr) for e in events)
