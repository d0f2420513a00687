"""Why a note liked by one side only does not get shown.

Two camps of raters rate three notes. Note A is rated helpful by both
camps, note B only by camp one, note C by nobody. The factor term soaks
up the camp-aligned agreement on B, so its intercept stays low while A's
is high.

    python3 demos/bridging_scores.py
"""
import numpy as np

from noteconsensus.data import RatingEvent, latest_rating_matrix
from noteconsensus.scorer import ScorerConfig, fit, model_statuses

rng = np.random.default_rng(0)
camp = {f"u{i:02d}": i % 2 for i in range(40)}
events = []
t = 0
for rater, side in camp.items():
    for note, p_helpful in (("A", (0.9, 0.9)), ("B", (0.95, 0.05)), ("C", (0.1, 0.1))):
        t += 1
        events.append(RatingEvent(note, rater, t, float(rng.random() < p_helpful[side])))

# a few extra notes give the factor axis something to anchor on
for k in range(20):
    for rater, side in camp.items():
        t += 1
        events.append(RatingEvent(f"x{k:02d}", rater, t, float(rng.random() < (0.85 if side == k % 2 else 0.15))))

matrix = latest_rating_matrix(events)
model = fit(matrix, ScorerConfig(seed=1))
status = model_statuses(model, matrix)
intercepts = model.note_intercept_map()
factors = model.note_factor_map()

print(f"{'note':<6}{'helpful share':>14}{'intercept':>11}{'factor':>9}  status")
for note in ("A", "B", "C"):
    share = np.mean([e.level for e in events if e.note_id == note])
    print(f"{note:<6}{share:>14.2f}{intercepts[note]:>11.3f}{factors[note][0]:>9.3f}  {status[note].value}")
