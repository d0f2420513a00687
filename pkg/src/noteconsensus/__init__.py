"""Bridging-style note scoring, rater embeddings, interrupted time series and
counterfactual re-scoring over community-note rating streams."""

from . import counterfactual, data, econometrics, embedder, scorer, simulator
from .data import NoteRecord, PostRecord, RatingEvent, Status
from .embedder import EmbedderConfig, RaterClass
from .scorer import ScorerConfig, ScoringModel, StatusThresholds
from .simulator import AttackConfig, SimConfig

__all__ = [
    "counterfactual", "data", "econometrics", "embedder", "scorer", "simulator",
    "NoteRecord", "PostRecord", "RatingEvent", "Status", "EmbedderConfig", "RaterClass",
    "ScorerConfig", "ScoringModel", "StatusThresholds", "AttackConfig", "SimConfig",
]
__version__ = "0.1.0"
