"""Question routing: lexical match against view descriptions and schemas.

The score is a weighted token overlap between the question's content tokens
and each view's description (weight 2), column names (weight 2), and a
sample of distinct text-cell tokens (weight 1), normalized by the best
possible weighted overlap. A view is chosen when the top score clears the
confidence threshold; otherwise the question falls back to retrieval.
"""
from __future__ import annotations

from dataclasses import dataclass

from .catalog import Catalog, View
from .text import STOPWORDS, content_tokens

DESCRIPTION_WEIGHT = 2
COLUMN_WEIGHT = 2
CELL_WEIGHT = 1
_MAX_WEIGHT = DESCRIPTION_WEIGHT + COLUMN_WEIGHT + CELL_WEIGHT

DEFAULT_ROUTE_THRESHOLD = 0.15


@dataclass(frozen=True)
class VbeRoute:
    view: str
    confidence: float

    engine = "vbe"


@dataclass(frozen=True)
class RbeRoute:
    reason: str  # no-view-above-threshold | translator-failure | engine-error-fallback

    engine = "rbe"


RouteDecision = object  # VbeRoute | RbeRoute


def _column_tokens(view: View) -> set[str]:
    tokens: set[str] = set()
    for name, _ in view.schema.columns:
        lowered = name.lower()
        tokens.add(lowered)
        tokens.update(part for part in lowered.split("_") if part)
    return {t for t in tokens if t not in STOPWORDS}


def view_score(question_tokens: set[str], view: View) -> float:
    """Weighted overlap in [0, 1]; 0 for an empty question."""
    if not question_tokens:
        return 0.0
    desc = content_tokens(view.description)
    cols = _column_tokens(view)
    cells = view.text_token_sample()
    weighted = (
        DESCRIPTION_WEIGHT * len(question_tokens & desc)
        + COLUMN_WEIGHT * len(question_tokens & cols)
        + CELL_WEIGHT * len(question_tokens & cells)
    )
    return weighted / (_MAX_WEIGHT * len(question_tokens))


def match_view(question: str, catalog: Catalog) -> list:
    """All views ranked by score, descending, ties broken by view name."""
    tokens = content_tokens(question)
    ranked = [(view.name, view_score(tokens, view)) for view in catalog.views()]
    ranked.sort(key=lambda p: (-p[1], p[0]))
    return ranked


def route(question: str, catalog: Catalog, threshold: float = DEFAULT_ROUTE_THRESHOLD):
    """Pick the best view when its score clears the threshold, else RBE."""
    ranking = match_view(question, catalog)
    if ranking and ranking[0][1] >= threshold:
        name, score = ranking[0]
        return VbeRoute(view=name, confidence=score)
    return RbeRoute(reason="no-view-above-threshold")
