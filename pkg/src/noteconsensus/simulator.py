"""Seeded synthetic rater populations, notes and rating streams.

Raters carry latent viewpoint vectors drawn around cluster centroids. Each
rating on a note comes from a rater who is similar, general or dissimilar
to the note's writer (by latent cosine), in configured shares. Arrival
volume jumps at display and then grows per quarter; the helpful
probability is logistic in note quality, rater-writer cosine, rater
leniency and a per-group shift that switches on at display. An optional
attack adds waves of NotHelpful ratings from a dedicated cohort.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import QUARTER_MS, NoteRecord, PostRecord, RatingEvent, write_lookup, write_tsv

GROUPS = ("similar", "general", "dissimilar")


@dataclass(frozen=True)
class AttackConfig:
    fraction: float = 0.0
    attackers_per_wave: int = 100
    wave_start_quarter: int = 2
    wave_quarters: int = 4
    cohort_size: int = 120
    target_cluster: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Scenario parameters. ``leaning_shift`` holds magnitudes for
    (similar, general, dissimilar); the dissimilar one is applied with a
    negative sign after display."""
    n_raters: int = 1000
    n_notes: int = 300
    cluster_mix: tuple[float, ...] = (0.5, 0.5)
    latent_dim: int = 4
    cluster_spread: float = 0.35
    neutral_share: float = 0.4
    group_shares: tuple[float, float, float] = (0.265, 0.656, 0.079)
    group_cosine_cut: float = 0.3
    base_rate: float = 3.0
    display_jump: float = 1.4
    sustained_growth: float = 1.036
    leaning_shift: tuple[float, float, float] = (1.0, 0.3, 3.0)
    viewpoint_weight: float = 4.0
    displayed_fraction: float = 0.25
    quality_displayed: float = 4.0
    quality_other: float = -4.0
    quality_sd: float = 0.3
    leniency_sd: float = 0.3
    somewhat_rate: float = 0.05
    pre_quarters: int = 16
    horizon: int = 24
    creation_span_quarters: int = 96
    start_millis: int = 1_700_000_000_000
    n_authors: int = 150
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0

    def __post_init__(self):
        if not np.isclose(sum(self.cluster_mix), 1.0):
            raise ValueError("cluster_mix must sum to 1")
        if not np.isclose(sum(self.group_shares), 1.0):
            raise ValueError("group_shares must sum to 1")
        if not 0.0 <= self.neutral_share < 1.0:
            raise ValueError("neutral_share must be in [0, 1)")
        if self.display_jump <= 0:
            raise ValueError("display_jump must be positive")
        if self.horizon < 17:
            raise ValueError("horizon must be >= 17 quarters to cover the display window")
        if self.n_raters < 2 or self.n_notes < 1:
            raise ValueError("need at least two raters and one note")


@dataclass(frozen=True)
class Population:
    rater_ids: tuple[str, ...]
    latent: np.ndarray
    cluster: np.ndarray
    leniency: np.ndarray
    is_attacker: np.ndarray

    def __len__(self) -> int:
        return len(self.rater_ids)

    def unit_latent(self) -> np.ndarray:
        return self.latent / np.linalg.norm(self.latent, axis=1, keepdims=True)


@dataclass(frozen=True)
class NoteTruth:
    note_id: str
    writer_index: int
    quality: float
    created_at: int
    display_time: int | None
    attacked: bool = False


@dataclass
class GroundTruth:
    population: Population
    notes: dict[str, NoteTruth]
    rating_groups: list[str]
    rating_is_attack: list[bool]
    attacked: set[str] = field(default_factory=set)

    def display_times(self) -> dict[str, int]:
        return {n: t.display_time for n, t in self.notes.items() if t.display_time is not None}

    def group_shares(self) -> dict[str, float]:
        labels = [g for g, a in zip(self.rating_groups, self.rating_is_attack) if not a]
        n = max(len(labels), 1)
        return {g: labels.count(g) / n for g in GROUPS}


def _centroids(n_clusters: int, dim: int) -> np.ndarray:
    """Unit centroids in antipodal pairs along successive axes."""
    out = np.zeros((n_clusters, dim))
    for j in range(n_clusters):
        out[j, (j // 2) % dim] = 1.0 if j % 2 == 0 else -1.0
    return out


def generate_population(config: SimConfig, rng: np.random.Generator | None = None) -> Population:
    """Raters around cluster centroids, plus the attacker cohort if an attack is configured.

    A ``neutral_share`` of raters (cluster -1) carry no viewpoint: their
    latent vectors lie off the centroid axes, so their cosine to any
    partisan writer is near zero. When rating, a neutral leans to a
    random side per judgment (see :func:`generate_ratings`).
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    cents = _centroids(len(config.cluster_mix), config.latent_dim)
    cluster = rng.choice(len(config.cluster_mix), size=config.n_raters, p=np.asarray(config.cluster_mix))
    latent = cents[cluster] + rng.normal(0.0, config.cluster_spread, (config.n_raters, config.latent_dim))
    neutral = rng.random(config.n_raters) < config.neutral_share
    if neutral.any():
        axes = np.abs(cents).sum(axis=0) > 0
        free = rng.normal(0.0, 1.0, (int(neutral.sum()), config.latent_dim))
        free[:, axes] *= config.cluster_spread / 3.0
        if axes.all():
            free *= config.cluster_spread
        latent[neutral] = free
        cluster[neutral] = -1
    leniency = rng.normal(0.0, config.leniency_sd, config.n_raters)
    ids = [f"r{i:05d}" for i in range(config.n_raters)]
    attacker = np.zeros(config.n_raters, dtype=bool)
    atk = config.attack
    if atk.fraction > 0 and atk.cohort_size > 0:
        k = atk.cohort_size
        # the cohort sits on the centroid opposite the targeted cluster
        home = atk.target_cluster + 1 if atk.target_cluster % 2 == 0 else atk.target_cluster - 1
        home = home % max(len(config.cluster_mix), 1)
        opp = -cents[atk.target_cluster] if len(config.cluster_mix) == 1 else cents[home]
        latent = np.vstack([latent, opp + rng.normal(0.0, config.cluster_spread, (k, config.latent_dim))])
        cluster = np.concatenate([cluster, np.full(k, home)])
        leniency = np.concatenate([leniency, rng.normal(0.0, config.leniency_sd, k)])
        ids += [f"a{i:04d}" for i in range(k)]
        attacker = np.concatenate([attacker, np.ones(k, dtype=bool)])
    # guard against an exact zero vector
    latent[np.linalg.norm(latent, axis=1) == 0, 0] = 1e-9
    return Population(tuple(ids), latent, cluster, leniency, attacker)


def generate_notes(population: Population, config: SimConfig,
                   rng: np.random.Generator | None = None) -> tuple[list[NoteRecord], list[PostRecord], dict[str, NoteTruth]]:
    """Notes with planted quality and a planted display schedule, plus their posts."""
    rng = rng if rng is not None else np.random.default_rng(config.seed + 1)
    organic = np.flatnonzero(~population.is_attacker & (population.cluster >= 0))
    if organic.size == 0:
        organic = np.flatnonzero(~population.is_attacker)
    writers = rng.choice(organic, size=config.n_notes)
    displayed = rng.random(config.n_notes) < config.displayed_fraction
    quality = np.where(displayed, config.quality_displayed, config.quality_other) \
        + rng.normal(0.0, config.quality_sd, config.n_notes)
    created = config.start_millis + rng.integers(0, config.creation_span_quarters * QUARTER_MS,
                                                 size=config.n_notes)
    authors = [f"au{i:04d}" for i in range(config.n_authors)]
    author_of = rng.integers(0, config.n_authors, size=config.n_notes)
    author_traits = {
        "verified": rng.random(config.n_authors) < 0.4,
        "age": rng.uniform(30, 5000, config.n_authors),
        "followers": rng.lognormal(7, 2, config.n_authors).astype(int),
        "followees": rng.lognormal(6, 1, config.n_authors).astype(int),
        "misinfo": rng.beta(2, 5, config.n_authors),
        "partisan": np.clip(rng.normal(0, 0.5, config.n_authors), -1, 1),
    }
    hosts = [f"site{i}.example" for i in range(12)]
    notes, posts, truth = [], [], {}
    for i in range(config.n_notes):
        nid, pid = f"n{i:05d}", f"p{i:05d}"
        disp = int(created[i] + config.pre_quarters * QUARTER_MS) if displayed[i] else None
        cited = tuple(sorted(set(rng.choice(hosts, size=rng.integers(0, 3)).tolist())))
        notes.append(NoteRecord(nid, population.rater_ids[writers[i]], pid, int(created[i]), cited))
        a = author_of[i]
        topics = rng.random(4) < (0.4, 0.2, 0.2, 0.15)
        posts.append(PostRecord(
            post_id=pid, author_id=authors[a],
            topic_politics=bool(topics[0]), topic_science=bool(topics[1]),
            topic_health=bool(topics[2]), topic_economy=bool(topics[3]),
            sentiment_pos=float(np.round(rng.random(), 4)), sentiment_neg=float(np.round(rng.random(), 4)),
            has_media=bool(rng.random() < 0.3), verified=bool(author_traits["verified"][a]),
            account_age_days=float(np.round(author_traits["age"][a], 2)),
            followers=int(author_traits["followers"][a]), followees=int(author_traits["followees"][a]),
            misinfo_exposure=float(np.round(author_traits["misinfo"][a], 4)),
            partisan_score=float(np.round(author_traits["partisan"][a], 4)),
        ))
        truth[nid] = NoteTruth(nid, int(writers[i]), float(quality[i]), int(created[i]), disp)
    return notes, posts, truth


def _group_pools(population: Population, writer: int, cut: float) -> list[np.ndarray]:
    unit = population.unit_latent()
    cos = unit @ unit[writer]
    idx = np.arange(len(population))
    own = idx != writer
    return [idx[own & (cos > cut)], idx[own & (cos >= -cut) & (cos <= cut)], idx[own & (cos < -cut)]]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate_ratings(population: Population, notes: dict[str, NoteTruth], config: SimConfig,
                     rng: np.random.Generator | None = None) -> tuple[list[RatingEvent], list[str]]:
    """Organic rating stream and the group label of every rating.

    Returns events sorted by (created_at, note_id, rater_id) and labels in
    the same order.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed + 2)
    unit = population.unit_latent()
    shares = np.asarray(config.group_shares)
    shift = np.array([config.leaning_shift[0], config.leaning_shift[1], -config.leaning_shift[2]])
    rows = []
    for nid in sorted(notes):
        t = notes[nid]
        pools = _group_pools(population, t.writer_index, config.group_cosine_cut)
        if t.display_time is not None:
            q = np.arange(-config.pre_quarters, config.horizon)
            post = q >= 0
            rate = config.base_rate * np.where(
                post, config.display_jump * config.sustained_growth ** np.maximum(q, 0), 1.0)
            origin = t.display_time
        else:
            q = np.arange(0, config.pre_quarters + config.horizon)
            post = np.zeros(q.size, dtype=bool)
            rate = np.full(q.size, config.base_rate)
            origin = t.created_at
        per_q = rng.poisson(rate)
        n = int(per_q.sum())
        if n == 0:
            continue
        quarter = np.repeat(q, per_q)
        is_post = np.repeat(post, per_q)
        times = origin + quarter * QUARTER_MS + rng.integers(0, QUARTER_MS, size=n)
        group = rng.choice(3, size=n, p=shares)
        raters = np.empty(n, dtype=np.int64)
        for g in range(3):
            sel = np.flatnonzero(group == g)
            if sel.size == 0:
                continue
            pool = pools[g] if pools[g].size else pools[1]
            if pool.size == 0:
                pool = np.flatnonzero(np.arange(len(population)) != t.writer_index)
            raters[sel] = rng.choice(pool, size=sel.size, replace=sel.size > pool.size)
        cos = unit[raters] @ unit[t.writer_index]
        neutral = population.cluster[raters] < 0
        if neutral.any():
            # a neutral judgment leans to a random side with the typical partisan strength,
            # so neutrals match partisans in average sensitivity to quality
            partisan = population.cluster >= 0
            lean = float(np.mean(np.abs(unit[partisan] @ unit[t.writer_index]))) if partisan.any() else 0.0
            cos = np.where(neutral, lean * rng.choice((-1.0, 1.0), size=n), cos)
        logit = (t.quality + config.viewpoint_weight * cos + population.leniency[raters]
                 + is_post * shift[group])
        helpful = rng.random(n) < _sigmoid(logit)
        somewhat = rng.random(n) < config.somewhat_rate
        level = np.where(somewhat, 0.5, helpful.astype(float))
        for k in range(n):
            rows.append((int(times[k]), nid, population.rater_ids[raters[k]], float(level[k]), GROUPS[group[k]]))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    events = [RatingEvent(r[1], r[2], r[0], r[3]) for r in rows]
    return events, [r[4] for r in rows]


def inject_attack(events: Sequence[RatingEvent], labels: Sequence[str], population: Population,
                  notes: dict[str, NoteTruth], config: SimConfig,
                  rng: np.random.Generator | None = None) -> tuple[list[RatingEvent], list[str], list[bool], set[str]]:
    """Add NotHelpful waves from the attacker cohort to targeted displayed notes.

    Targets are displayed notes whose writer sits in ``attack.target_cluster``;
    ``attack.fraction`` of them are attacked. Returns the merged stream, its
    group labels, per-rating attack flags and the attacked note ids.
    """
    atk = config.attack
    flags = [False] * len(events)
    if atk.fraction <= 0:
        return list(events), list(labels), flags, set()
    rng = rng if rng is not None else np.random.default_rng(config.seed + 3)
    cohort = np.flatnonzero(population.is_attacker)
    if cohort.size == 0:
        raise ValueError("attack configured but the population has no attacker cohort")
    eligible = sorted(n for n, t in notes.items()
                      if t.display_time is not None and population.cluster[t.writer_index] == atk.target_cluster)
    n_attack = int(round(atk.fraction * len(eligible)))
    attacked = sorted(rng.choice(eligible, size=n_attack, replace=False).tolist()) if n_attack else []
    rows = [(e.created_at, e.note_id, e.rater_id, e.level, g, False) for e, g in zip(events, labels)]
    for nid in attacked:
        t = notes[nid]
        k = min(atk.attackers_per_wave, cohort.size)
        who = rng.choice(cohort, size=k, replace=False)
        start = t.display_time + atk.wave_start_quarter * QUARTER_MS
        times = start + rng.integers(0, max(atk.wave_quarters, 1) * QUARTER_MS, size=k)
        for r, tm in zip(who, times):
            rows.append((int(tm), nid, population.rater_ids[r], 0.0, "dissimilar", True))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[5]))
    return ([RatingEvent(r[1], r[2], r[0], r[3]) for r in rows], [r[4] for r in rows],
            [r[5] for r in rows], set(attacked))


@dataclass
class Scenario:
    config: SimConfig
    population: Population
    notes: list[NoteRecord]
    posts: list[PostRecord]
    events: list[RatingEvent]
    truth: GroundTruth

    @property
    def note_map(self) -> dict[str, NoteRecord]:
        return {n.note_id: n for n in self.notes}


def simulate(config: SimConfig = SimConfig()) -> Scenario:
    """Run the whole generator: population, notes, organic ratings, attack."""
    root = np.random.SeedSequence(config.seed)
    r_pop, r_notes, r_rate, r_attack = (np.random.default_rng(s) for s in root.spawn(4))
    population = generate_population(config, r_pop)
    notes, posts, truth = generate_notes(population, config, r_notes)
    events, labels = generate_ratings(population, truth, config, r_rate)
    events, labels, flags, attacked = inject_attack(events, labels, population, truth, config, r_attack)
    for n in attacked:
        truth[n] = replace(truth[n], attacked=True)
    gt = GroundTruth(population, truth, labels, flags, attacked)
    return Scenario(config, population, notes, posts, events, gt)


def write_scenario(scenario: Scenario, directory: str | Path) -> dict[str, Path]:
    """Write the scenario in the ingestion TSV layouts plus ``ground_truth.tsv``.

    ``ground_truth.tsv`` mixes two record kinds: ``rating`` rows (id is the
    0-based row of ``ratings.tsv``) carry a group label and attack flag;
    ``note`` rows carry the planted display quarter (quarters since the
    scenario start, empty if never displayed) and the attacked flag.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{k}.tsv" for k in ("notes", "ratings", "posts")}
    write_tsv(scenario.notes, paths["notes"], "notes")
    write_tsv(scenario.events, paths["ratings"], "ratings")
    write_tsv(scenario.posts, paths["posts"], "posts")
    gt = d / "ground_truth.tsv"
    truth = scenario.truth
    start = scenario.config.start_millis
    with open(gt, "w", encoding="utf-8") as fh:
        fh.write("record\tid\tgroupLabel\tattack\tdisplayQuarter\tattacked\n")
        for i, (g, a) in enumerate(zip(truth.rating_groups, truth.rating_is_attack)):
            fh.write(f"rating\t{i}\t{g}\t{int(a)}\t\t\n")
        for nid in sorted(truth.notes):
            t = truth.notes[nid]
            dq = "" if t.display_time is None else str((t.display_time - start) // QUARTER_MS)
            fh.write(f"note\t{nid}\t\t\t{dq}\t{int(t.attacked)}\n")
    paths["ground_truth"] = gt
    hosts = sorted({h for n in scenario.notes for h in n.cited_domains})
    codes = (-1.0, -0.5, 0.0, 0.5, 1.0)
    write_lookup({h: codes[i % 5] for i, h in enumerate(hosts)}, d / "bias.tsv")
    write_lookup({h: round(0.2 + 0.6 * ((i * 7) % 11) / 10, 3) for i, h in enumerate(hosts)}, d / "quality.tsv")
    paths["bias"] = d / "bias.tsv"
    paths["quality"] = d / "quality.tsv"
    return paths
