"""A coordinated downvoting attack, then the counterfactual without it.

An attacker cohort sits on the opposite side of one viewpoint cluster and
downvotes most of that cluster's displayed notes shortly after display.
Replaying the scorer shows notes disappearing; refitting without
post-display ratings from dissimilar raters shows which of them would
have stayed up. Takes about a minute.

    python3 demos/attack_counterfactual.py
"""
from noteconsensus import counterfactual as cf
from noteconsensus import embedder as emb
from noteconsensus.data import latest_rating_matrix
from noteconsensus.scorer import ScorerConfig, replay
from noteconsensus.simulator import AttackConfig, SimConfig, simulate

sc = simulate(SimConfig(n_notes=500, n_raters=1000, seed=0,
                        attack=AttackConfig(fraction=0.8, attackers_per_wave=100, cohort_size=120)))
config = ScorerConfig()
print(f"{len(sc.events)} ratings, {len(sc.truth.attacked)} notes attacked")

history = replay(sc.events, config)
cohort = {n: tl.cohort for n, tl in history.timelines.items()}
for name in cf.COHORTS:
    members = [n for n, c in cohort.items() if c == name]
    hit = sum(n in sc.truth.attacked for n in members)
    print(f"  {name:<16} {len(members):>4} notes, {hit:>3} attacked")

matrix, _ = emb.filter_dataset(latest_rating_matrix(sc.events))
relations = emb.relations_for_events(sc.note_map, sc.events, emb.fit_embeddings(matrix))
kept, excluded = cf.apply_policy(sc.events, relations, history.timelines, cf.ExclusionPolicy.parse("Dissimilar"))
print(f"\nremoved {excluded.n_removed} post-display ratings from dissimilar raters")

report = cf.rescore_diff(sc.events, kept, config, history.timelines)
print("\nmean intercept change by cohort")
for name, s in report.cohorts.items():
    print(f"  {name:<16} {s.mean_delta:+.3f}  [{s.ci_low:+.3f}, {s.ci_high:+.3f}]  n={s.n}")
gone = [n for n, c in cohort.items() if c == "disappeared" and n in sc.truth.attacked]
print(f"\nattacked notes that disappeared: {len(gone)}, "
      f"would have stayed helpful: {len(report.survived(gone))}")
