"""Pipeline driver: ``noteconsensus <stage> --run-dir DIR [--config FILE]``.

Stages run in a fixed dependency order and write only inside the run
directory. ``manifest.json`` records the config hash, input digests, every
output file with its sha256 and row count, per-stage wall time and the seed
registry. A lock file keeps a single writer per run directory.

Exit codes: 0 success, 1 usage or config error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import fcntl
import graphlib
import hashlib
import json
import logging
import os
import sys
import time
import typing
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence


from . import counterfactual as cf
from . import econometrics as ec
from .data import (DEFAULT_WINDOW, build_its_panel, ingest_tsv, latest_rating_matrix, read_panel_tsv,
                   write_panel_tsv, write_tsv)
from .embedder import (EmbedderConfig, RaterClass, classification_metrics, copair_distributions,
                       fit_embeddings, filter_dataset, read_relations_tsv, relations_for_events,
                       thresholds_from_copairs, write_embeddings, write_relations_tsv)
from .scorer import (ScorerConfig, fit, model_statuses, replay, scorer_config_from_mapping,
                     timelines_from_entries, write_scores_tsv, write_timelines_tsv)
from .simulator import SimConfig, simulate, write_scenario

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2

# Declared order is the order of ``all``; ``check_stage_graph`` verifies it.
STAGES = ("simulate", "ingest", "score", "replay", "embed", "panel", "its", "counterfactual", "report")
DEPENDS: dict[str, tuple[str, ...]] = {
    "simulate": (),
    "ingest": ("simulate",),
    "score": ("ingest",),
    "replay": ("ingest",),
    "embed": ("ingest",),
    "panel": ("replay", "embed"),
    "its": ("panel", "replay"),
    "counterfactual": ("embed", "replay"),
    "report": ("its", "counterfactual"),
}
# The artifact whose presence proves a stage has run.
MARKER = {
    "simulate": "inputs/ratings.tsv",
    "ingest": "ingest/ratings.tsv",
    "score": "score/scores.tsv",
    "replay": "replay/timelines.tsv",
    "embed": "embed/relations.tsv",
    "panel": "panel/panel.tsv",
    "its": "its/its_report.tsv",
    "counterfactual": "counterfactual/counterfactual.tsv",
    "report": "report/summary.txt",
}
SECTIONS = ("run", "sim", "ingest", "scorer", "replay", "embedder", "its", "counterfactual")


class UsageError(Exception):
    pass


class StageError(Exception):
    pass


def check_stage_graph() -> tuple[str, ...]:
    """Raise if the graph has a cycle or ``STAGES`` is not a topological order."""
    ts = graphlib.TopologicalSorter(DEPENDS)
    ts.prepare()
    pos = {s: i for i, s in enumerate(STAGES)}
    for stage, deps in DEPENDS.items():
        for d in deps:
            if pos[d] >= pos[stage]:
                raise graphlib.CycleError(f"{d} must precede {stage}", [d, stage])
    return STAGES


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``[section]`` headers prefix following keys."""
    values: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"config line {lineno}: expected key = value")
        key = key.strip()
        if section and not key.startswith(section + "."):
            key = f"{section}.{key}"
        if key.split(".", 1)[0] not in SECTIONS and key != "seed":
            raise UsageError(f"config line {lineno}: unknown section in {key!r}")
        values[key] = value.strip()
    return values


def _parse_value(tp, text: str):
    origin = typing.get_origin(tp)
    if origin is tuple:
        args = typing.get_args(tp)
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_parse_value(args[0], p) for p in parts)
        if len(parts) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values, got {text!r}")
        return tuple(_parse_value(a, p) for a, p in zip(args, parts))
    if tp is bool:
        low = text.lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("1", "true", "yes")
    if tp in (int, float, str):
        return tp(text)
    raise ValueError(f"unsupported setting type {tp}")


def dataclass_from_mapping(base, values: Mapping[str, str]):
    """Replace fields of the dataclass instance ``base`` from dotted keys."""
    hints = typing.get_type_hints(type(base))
    kw: dict = {}
    nested: dict[str, dict[str, str]] = {}
    for key, text in values.items():
        head, _, rest = key.partition(".")
        if head not in hints:
            raise KeyError(f"unknown setting {key!r} for {type(base).__name__}")
        if rest:
            nested.setdefault(head, {})[rest] = text
        else:
            kw[head] = _parse_value(hints[head], text)
    for head, sub in nested.items():
        kw[head] = dataclass_from_mapping(getattr(base, head), sub)
    return dataclasses.replace(base, **kw)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    sim: SimConfig
    scorer: ScorerConfig
    embedder: EmbedderConfig
    ingest: dict[str, str]
    rescore_interval: int
    window: tuple[int, int]
    exclude: cf.ExclusionPolicy
    n_boot: int
    bootstrap_seed: int
    values: dict[str, str]

    @property
    def hash(self) -> str:
        canon = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def seeds(self) -> dict[str, int]:
        return {"run": self.seed, "sim": self.sim.seed, "scorer": self.scorer.seed,
                "embedder": self.embedder.seed, "bootstrap": self.bootstrap_seed}


def _section(values: Mapping[str, str], name: str) -> dict[str, str]:
    p = name + "."
    return {k[len(p):]: v for k, v in values.items() if k.startswith(p)}


def build_run_config(values: Mapping[str, str], seed_override: int | None = None) -> RunConfig:
    """Resolve the effective configuration. The run seed (``run.seed``,
    replaced by ``--seed``) fills every component seed not set explicitly."""
    values = dict(values)
    if "seed" in values:
        values["run.seed"] = values.pop("seed")
    if seed_override is not None:
        values["run.seed"] = str(seed_override)
    try:
        seed = int(values.get("run.seed", "0"))
        unknown = set(_section(values, "run")) - {"seed"}
        if unknown:
            raise KeyError(f"unknown run setting(s) {sorted(unknown)}")
        for sec in ("sim", "scorer", "embedder"):
            values.setdefault(f"{sec}.seed", str(seed))
        values.setdefault("counterfactual.bootstrap_seed", str(seed))
        sim = dataclass_from_mapping(SimConfig(), _section(values, "sim"))
        scorer = scorer_config_from_mapping(_section(values, "scorer"))
        emb = dataclass_from_mapping(EmbedderConfig(), _section(values, "embedder"))
        ingest = _section(values, "ingest")
        unknown = set(ingest) - {"ratings", "notes", "posts"}
        if unknown:
            raise KeyError(f"unknown ingest setting(s) {sorted(unknown)}")
        rep = _section(values, "replay")
        if set(rep) - {"interval_ms"}:
            raise KeyError(f"unknown replay setting(s) {sorted(set(rep) - {'interval_ms'})}")
        its = _section(values, "its")
        if set(its) - {"window"}:
            raise KeyError(f"unknown its setting(s) {sorted(set(its) - {'window'})}")
        window = _parse_value(tuple[int, int], its["window"]) if "window" in its else DEFAULT_WINDOW
        cfs = _section(values, "counterfactual")
        known = {"exclude", "scope", "n_boot", "bootstrap_seed"}
        if set(cfs) - known:
            raise KeyError(f"unknown counterfactual setting(s) {sorted(set(cfs) - known)}")
        policy = cf.ExclusionPolicy.parse(cfs.get("exclude", "Dissimilar"),
                                          cfs.get("scope", "post_display_only"))
        return RunConfig(seed, sim, scorer, emb, ingest, int(rep.get("interval_ms", 3_600_000)),
                         window, policy, int(cfs.get("n_boot", 2000)), int(cfs["bootstrap_seed"]),
                         values)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def load_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return build_run_config({}, seed_override)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    return build_run_config(parse_config_text(text), seed_override)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rows(path: Path) -> int | None:
    """Data rows of a TSV (header excluded); None for other files."""
    if path.suffix != ".tsv":
        return None
    with open(path, "rb") as fh:
        return max(sum(1 for _ in fh) - 1, 0)


class Run:
    """A run directory with its manifest."""

    def __init__(self, root: str | Path, config: RunConfig):
        self.root = Path(root).resolve()
        self.config = config
        self.manifest_path = self.root / "manifest.json"
        self.manifest = self._load()

    def _load(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return {"run_id": uuid.uuid4().hex[:12], "config_hash": self.config.hash, "config": {},
                "seeds": {}, "inputs": {}, "stages": {}}

    def check_config(self, force: bool) -> None:
        old = self.manifest.get("config_hash")
        if old != self.config.hash:
            if not force:
                raise StageError(f"config hash {self.config.hash[:12]} differs from the run directory's "
                                 f"{old[:12]}; use --force to overwrite")
            logger.warning("config changed; earlier stage records are dropped")
            self.manifest["stages"] = {}
        self.manifest["config_hash"] = self.config.hash
        self.manifest["config"] = dict(sorted(self.config.values.items()))
        self.manifest["seeds"] = self.config.seeds

    def path(self, rel: str) -> Path:
        p = (self.root / rel).resolve()
        if self.root not in p.parents:
            raise StageError(f"refusing to write outside the run directory: {rel}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def has(self, stage: str) -> bool:
        return (self.root / MARKER[stage]).exists()

    def record(self, stage: str, outputs: Sequence[str], seconds: float) -> None:
        entry = {}
        for rel in outputs:
            p = self.root / rel
            entry[rel] = {"sha256": sha256_file(p), "rows": _rows(p)}
        self.manifest["stages"][stage] = {"outputs": entry, "seconds": round(seconds, 3),
                                          "config_hash": self.config.hash}
        self.save()

    def add_inputs(self, paths: Sequence[Path]) -> None:
        for p in paths:
            try:
                key = str(p.resolve().relative_to(self.root))
            except ValueError:
                key = str(p.resolve())
            self.manifest["inputs"][key] = sha256_file(p)

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.manifest_path)


class RunLock:
    """Exclusive advisory lock on ``<run-dir>/.lock``."""

    def __init__(self, root: Path):
        self.path = root / ".lock"
        self.fh = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.path, "a+")
        try:
            fcntl.flock(self.fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            self.fh.close()
            raise StageError(f"run directory {self.path.parent} is locked by another process")
        self.fh.seek(0)
        self.fh.truncate()
        self.fh.write(f"{os.getpid()}\n")
        self.fh.flush()
        return self

    def __exit__(self, *exc):
        fcntl.flock(self.fh, fcntl.LOCK_UN)
        self.fh.close()
        return False


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _require(run: Run, stage: str) -> None:
    for dep in DEPENDS[stage]:
        if dep == "simulate" and stage == "ingest" and run.config.ingest:
            continue
        if not run.has(dep):
            raise StageError(f"run {dep} first")


def _events(run: Run):
    return ingest_tsv(run.root / "ingest/ratings.tsv", "ratings")[0]


def _notes(run: Run):
    return {n.note_id: n for n in ingest_tsv(run.root / "ingest/notes.tsv", "notes")[0]}


def _timelines(run: Run):
    return timelines_from_entries(ingest_tsv(run.root / "replay/timelines.tsv", "status")[0])


def stage_simulate(run: Run) -> list[str]:
    paths = write_scenario(simulate(run.config.sim), run.path("inputs"))
    return sorted(str(p.relative_to(run.root)) for p in paths.values())


def stage_ingest(run: Run) -> list[str]:
    srcs = {}
    for kind in ("ratings", "notes", "posts"):
        given = run.config.ingest.get(kind)
        if given:
            srcs[kind] = [Path(p.strip()) for p in given.split(",") if p.strip()]
        else:
            srcs[kind] = [run.root / "inputs" / f"{kind}.tsv"]
        missing = [str(p) for p in srcs[kind] if not p.exists()]
        if missing and kind == "posts" and not given:
            srcs[kind] = []
        elif missing:
            raise StageError(f"missing {kind} input: {', '.join(missing)}")
    run.add_inputs([p for ps in srcs.values() for p in ps])
    out = []
    report = run.path("ingest/ingest_report.tsv")
    with open(report, "w", encoding="utf-8") as fh:
        fh.write("kind\trows_read\trows_dropped\tdistinct_ids\n")
        drops = []
        for kind, paths in srcs.items():
            records, rep = ingest_tsv(paths, kind) if paths else ([], None)
            if kind == "ratings" and not records:
                raise StageError("no ratings ingested")
            write_tsv(records, run.path(f"ingest/{kind}.tsv"), kind)
            out.append(f"ingest/{kind}.tsv")
            if rep is not None:
                fh.write(f"{kind}\t{rep.rows_read}\t{rep.rows_dropped}\t{rep.distinct_ids}\n")
                drops += [(kind, Path(f).name, line, why) for f, line, why in rep.dropped_lines]
    with open(run.path("ingest/dropped_rows.tsv"), "w", encoding="utf-8") as fh:
        fh.write("kind\tfile\tline\treason\n")
        for row in drops:
            fh.write("\t".join(map(str, row)) + "\n")
    return out + ["ingest/ingest_report.tsv", "ingest/dropped_rows.tsv"]


def stage_score(run: Run) -> list[str]:
    matrix = latest_rating_matrix(_events(run))
    model = fit(matrix, run.config.scorer)
    statuses = model_statuses(model, matrix, run.config.scorer.thresholds)
    write_scores_tsv(model, statuses, run.path("score/scores.tsv"))
    return ["score/scores.tsv"]


def stage_replay(run: Run) -> list[str]:
    result = replay(_events(run), run.config.scorer, run.config.rescore_interval)
    write_timelines_tsv(result.timelines, run.path("replay/timelines.tsv"))
    with open(run.path("replay/cohorts.tsv"), "w", encoding="utf-8") as fh:
        fh.write("noteId\tcohort\tdisplayTime\tfinalStatus\n")
        for n, tl in result.timelines.items():
            shown = "" if tl.display_time is None else tl.display_time
            fh.write(f"{n}\t{tl.cohort}\t{shown}\t{tl.final_status.value}\n")
    return ["replay/timelines.tsv", "replay/cohorts.tsv"]


def stage_embed(run: Run) -> list[str]:
    cfg = run.config.embedder
    events = _events(run)
    try:
        matrix, frep = filter_dataset(events, cfg)
    except ValueError as exc:
        raise StageError(str(exc)) from exc
    emb = fit_embeddings(matrix, cfg)
    metrics = classification_metrics(emb, matrix)
    stats = copair_distributions(matrix, emb, cfg)
    if cfg.recompute_thresholds:
        sim_t, dis_t = thresholds_from_copairs(stats)
        cfg = dataclasses.replace(cfg, similar_threshold=sim_t, dissimilar_threshold=dis_t)
    rels = relations_for_events(_notes(run), events, emb, cfg)
    write_embeddings(emb, run.path("embed/embeddings.bin"))
    write_relations_tsv(rels, run.path("embed/relations.tsv"))
    counts = {c.value: 0 for c in RaterClass}
    for r in rels.values():
        counts[r.rater_class.value] += 1
    rows = [("final_mse", emb.final_loss), ("precision", metrics["precision"]),
            ("recall", metrics["recall"]), ("weighted_f1", metrics["f1"]), ("n_scored", metrics["n"]),
            ("notes_removed", frep.notes_removed), ("raters_removed", frep.raters_removed),
            ("same_pair_mean", stats.same_mean), ("opposite_pair_mean", stats.opposite_mean),
            ("similar_threshold", cfg.similar_threshold),
            ("dissimilar_threshold", cfg.dissimilar_threshold)]
    rows += [(f"pairs_{k}", v) for k, v in counts.items()]
    with open(run.path("embed/embed_metrics.tsv"), "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for k, v in rows:
            fh.write(f"{k}\t{v if isinstance(v, int) else format(float(v), '.10g')}\n")
    return ["embed/embeddings.bin", "embed/relations.tsv", "embed/embed_metrics.tsv"]


def stage_panel(run: Run) -> list[str]:
    events = _events(run)
    shown = {n: tl.display_time for n, tl in _timelines(run).items() if tl.displayed}
    rels = read_relations_tsv(run.root / "embed/relations.tsv")
    notes = sorted(shown)
    by_group: dict[str, list] = {c.value: [] for c in RaterClass}
    for e in events:
        by_group[rels.get((e.note_id, e.rater_id), RaterClass.GENERAL).value].append(e)
    panels = {"all": build_its_panel(events, shown, run.config.window, notes)}
    for c in RaterClass:
        panels[c.value.lower()] = build_its_panel(by_group[c.value], shown, run.config.window, notes)
    write_panel_tsv(panels, run.path("panel/panel.tsv"))
    return ["panel/panel.tsv"]


def _failed_fit(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".splitlines()[0]


def stage_its(run: Run) -> list[str]:
    panels = read_panel_tsv(run.root / "panel/panel.tsv")
    if "all" not in panels:
        raise StageError("panel file has no 'all' group; run panel first")
    tls = _timelines(run)
    subs = {"all": None,
            "stable": [n for n, t in tls.items() if t.cohort == "stable"],
            "disappeared": [n for n, t in tls.items() if t.cohort == "disappeared"]}
    groups = {k: v for k, v in panels.items() if k != "all"}
    reports = []
    for outcome in ("count", "leaning"):
        reports.append(ec.its_report(panels["all"], outcome, subs))
        if groups:
            reports.append(ec.its_report(groups, outcome))
    ec.write_its_report_tsv(reports, run.path("its/its_report.tsv"))
    with open(run.path("its/its_skipped.tsv"), "w", encoding="utf-8") as fh:
        fh.write("model\toutcome\treason\n")
        for rep in reports:
            for key, why in rep.skipped.items():
                fh.write(f"{key}\t{rep.outcome}\t{why}\n")

    displayed = {n: t.disappeared for n, t in tls.items() if t.displayed}
    posts = {p.post_id: p for p in ingest_tsv(run.root / "ingest/posts.tsv", "posts")[0]}
    with open(run.path("its/disappearance_model.tsv"), "w", encoding="utf-8") as fh:
        fh.write("term\testimate\tclustered_se\tz\tp\tci_low\tci_high\tn_obs\tn_clusters\tstatus\n")
        try:
            design = ec.disappearance_design(displayed, _notes(run), posts)
            res = ec.fit_logistic(design)
        except (ValueError, RuntimeError) as exc:
            logger.warning("disappearance model skipped: %s", _failed_fit(exc))
            fh.write(f"\t\t\t\t\t\t\t{len(displayed)}\t\tskipped: {_failed_fit(exc)}\n")
        else:
            for i, t in enumerate(res.columns):
                vals = [res.coef[i], res.se[i], res.z[i], res.p[i], res.ci_low[i], res.ci_high[i]]
                fh.write("\t".join([t, *(_fmt(v) for v in vals), str(res.n_obs),
                                    str(res.n_clusters), "ok"]) + "\n")
    return ["its/its_report.tsv", "its/its_skipped.tsv", "its/disappearance_model.tsv"]


def stage_counterfactual(run: Run) -> list[str]:
    events = _events(run)
    tls = _timelines(run)
    rels = read_relations_tsv(run.root / "embed/relations.tsv")
    kept, xrep = cf.apply_policy(events, rels, tls, run.config.exclude)
    try:
        report = cf.rescore_diff(events, kept, run.config.scorer, tls,
                                 run.config.n_boot, run.config.bootstrap_seed)
    except ValueError as exc:
        raise StageError(str(exc)) from exc
    cf.write_counterfactual_tsv(report, run.path("counterfactual/counterfactual.tsv"))
    cf.write_cohort_summary_tsv(report, run.path("counterfactual/counterfactual_summary.tsv"))
    with open(run.path("counterfactual/exclusion.tsv"), "w", encoding="utf-8") as fh:
        fh.write("group\tremoved\n")
        for g, k in xrep.totals().items():
            fh.write(f"{g}\t{k}\n")
        fh.write(f"unclassified_kept_as_general\t{xrep.unclassified}\n")
        fh.write(f"ratings_in\t{xrep.n_input}\nratings_out\t{xrep.n_output}\n")
    with open(run.path("counterfactual/cohort_differences.tsv"), "w", encoding="utf-8") as fh:
        fh.write("contrast\tdifference\tci_low\tci_high\n")
        for a, b in (("disappeared", "stable"), ("stable", "never_displayed"),
                     ("disappeared", "never_displayed")):
            fh.write(f"{a}-{b}\t" + "\t".join(_fmt(v) for v in report.difference_ci(a, b)) + "\n")
    return ["counterfactual/counterfactual.tsv", "counterfactual/counterfactual_summary.tsv",
            "counterfactual/exclusion.tsv", "counterfactual/cohort_differences.tsv"]


def _fmt(x: float) -> str:
    return "nan" if x != x else format(float(x), ".10g")


def _read_tsv(path: Path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split("\t") for line in fh]


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(rows[0]))]
    return ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]


def stage_report(run: Run) -> list[str]:
    tls = _timelines(run)
    shown = [t for t in tls.values() if t.displayed]
    gone = sum(t.disappeared for t in shown)
    rate = gone / len(shown) if shown else float("nan")
    with open(run.path("report/disappearance_rates.tsv"), "w", encoding="utf-8") as fh:
        fh.write("notes\tdisplayed\tdisappeared\trate\n")
        fh.write(f"{len(tls)}\t{len(shown)}\t{gone}\t{_fmt(rate)}\n")

    its_rows = _read_tsv(run.root / "its/its_report.tsv")
    head = its_rows[0]
    pick = [head.index(c) for c in ("model", "outcome", "term", "estimate", "clustered_se", "p",
                                    "pct_effect", "pct_ci_low", "pct_ci_high")]
    its_tab = [[r[i] for i in pick] for r in its_rows]
    cohort_rows = _read_tsv(run.root / "counterfactual/counterfactual_summary.tsv")
    diff_rows = _read_tsv(run.root / "counterfactual/cohort_differences.tsv")
    dis_rows = _read_tsv(run.root / "its/disappearance_model.tsv")

    lines = ["Disappearance", "-------------",
             f"notes {len(tls)}, displayed {len(shown)}, disappeared {gone}, rate {rate:.4f}", "",
             "Interrupted time series (note-clustered SE; pct columns for the count model)",
             "----------------------------------------------------------------------------",
             *_table(its_tab), "", ec.FE_CAVEAT, "",
             "Disappearance model (logistic, author-clustered SE)",
             "---------------------------------------------------",
             *_table([r[:5] + r[-1:] for r in dis_rows]), "",
             f"Counterfactual re-scoring (excluded: {','.join(sorted(g.value for g in run.config.exclude.groups))}"
             f", scope {run.config.exclude.scope.value})",
             "-----------------------------------------------------------------",
             *_table(cohort_rows), "", *_table(diff_rows), ""]
    run.path("report/summary.txt").write_text("\n".join(lines), encoding="utf-8")
    return ["report/disappearance_rates.tsv", "report/summary.txt"]


STAGE_FUNCS: dict[str, Callable[[Run], list[str]]] = {
    "simulate": stage_simulate, "ingest": stage_ingest, "score": stage_score, "replay": stage_replay,
    "embed": stage_embed, "panel": stage_panel, "its": stage_its,
    "counterfactual": stage_counterfactual, "report": stage_report,
}


def run_stages(stage: str, run_dir: str | Path, config: RunConfig, force: bool = False) -> dict:
    """Execute ``stage`` (or every stage for ``all``) and return the manifest."""
    order = check_stage_graph() if stage == "all" else (stage,)
    run = Run(run_dir, config)
    with RunLock(run.root):
        run.check_config(force)
        for s in order:
            _require(run, s)
            logger.info("stage %s", s)
            t0 = time.perf_counter()
            outputs = STAGE_FUNCS[s](run)
            run.record(s, outputs, time.perf_counter() - t0)
    return run.manifest


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="noteconsensus", description="Run pipeline stages in a run directory.")
    p.add_argument("stage", choices=(*STAGES, "all"))
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--run-dir", metavar="PATH", default=os.environ.get("RUN_DIR"),
                   help="run directory (default: $RUN_DIR)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--force", action="store_true", help="proceed despite a config hash mismatch")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["run"]:
        argv = argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.run_dir:
        print("noteconsensus: error: --run-dir or RUN_DIR is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(args.config, args.seed)
    except UsageError as exc:
        print(f"noteconsensus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = run_stages(args.stage, args.run_dir, config, args.force)
    except StageError as exc:
        print(f"noteconsensus: error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:
        logger.debug("stage failure", exc_info=True)
        print(f"noteconsensus: stage failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    done = [s for s in STAGES if s in manifest["stages"]]
    print(f"run {manifest['run_id']}: {', '.join(done)} -> {Path(args.run_dir) / 'manifest.json'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
