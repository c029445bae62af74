"""Retrieval-based engine: BM25 index, top-k retrieval, extractive answers.

One document per timeline episode. The answer composer conditions only on
the retrieved documents, so aggregate questions are capped at k pieces of
evidence by construction; that limitation is the point of the baseline.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .text import STOPWORDS, tokenize


class RbeError(Exception):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass(frozen=True)
class RbeConfig:
    k: int = 4
    k1: float = 1.2
    b: float = 0.75


@dataclass
class Index:
    doc_ids: list
    texts: dict  # doc_id -> text
    term_freqs: dict  # doc_id -> {term: tf}
    lengths: dict  # doc_id -> token count
    doc_freq: dict  # term -> document frequency
    avg_length: float

    @property
    def size(self) -> int:
        return len(self.doc_ids)

    def to_json(self) -> str:
        payload = {
            "doc_ids": self.doc_ids,
            "texts": self.texts,
            "term_freqs": self.term_freqs,
            "lengths": self.lengths,
            "doc_freq": self.doc_freq,
            "avg_length": self.avg_length,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(blob: str) -> "Index":
        payload = json.loads(blob)
        return Index(
            doc_ids=payload["doc_ids"],
            texts=payload["texts"],
            term_freqs=payload["term_freqs"],
            lengths=payload["lengths"],
            doc_freq=payload["doc_freq"],
            avg_length=payload["avg_length"],
        )


def build_index(documents) -> Index:
    """Inverted statistics for BM25; lowercase alphanumeric tokenization."""
    if not documents:
        raise RbeError("cannot index an empty document set")
    doc_ids = []
    texts = {}
    term_freqs = {}
    lengths = {}
    doc_freq: Counter = Counter()
    total = 0
    for doc in documents:
        if doc.doc_id in texts:
            raise RbeError(f"duplicate doc_id {doc.doc_id!r}")
        if not doc.text:
            raise RbeError(f"document {doc.doc_id!r} has empty text")
        tokens = tokenize(doc.text)
        doc_ids.append(doc.doc_id)
        texts[doc.doc_id] = doc.text
        freqs = dict(Counter(tokens))
        term_freqs[doc.doc_id] = freqs
        lengths[doc.doc_id] = len(tokens)
        total += len(tokens)
        for term in freqs:
            doc_freq[term] += 1
    return Index(
        doc_ids=doc_ids,
        texts=texts,
        term_freqs=term_freqs,
        lengths=lengths,
        doc_freq=dict(doc_freq),
        avg_length=total / len(doc_ids),
    )


def bm25_score(index: Index, doc_id: str, query_tokens, config: RbeConfig) -> float:
    freqs = index.term_freqs[doc_id]
    length = index.lengths[doc_id]
    n = index.size
    score = 0.0
    for term in query_tokens:
        tf = freqs.get(term, 0)
        if tf == 0:
            continue
        df = index.doc_freq.get(term, 0)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        denom = tf + config.k1 * (1.0 - config.b + config.b * length / index.avg_length)
        score += idf * tf * (config.k1 + 1.0) / denom
    return score


def retrieve(index: Index, query: str, config: RbeConfig | None = None) -> list:
    """Top-k (doc_id, score) by BM25, descending, ties broken by doc_id.

    Zero-scoring documents are never returned; an empty query gives an
    empty ranking.
    """
    config = config or RbeConfig()
    query_tokens = tokenize(query)
    if not query_tokens:
        return []
    scored = []
    for doc_id in index.doc_ids:
        score = bm25_score(index, doc_id, query_tokens, config)
        if score > 0.0:
            scored.append((doc_id, score))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[: config.k]


# ---------------------------------------------------------------------------
# Extractive answer composition


@dataclass
class RbeAnswer:
    text: str
    sources: list = field(default_factory=list)  # retrieved doc ids, rank order


_DOC_DATE_RE = re.compile(r"\b(\d{4})/(\d{2})/(\d{2})\b")


def _doc_date(text: str):
    import datetime

    m = _DOC_DATE_RE.search(text)
    if not m:
        return None
    try:
        return datetime.date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError:
        return None


def _question_terms(question: str) -> list[str]:
    return [t for t in tokenize(question) if t not in STOPWORDS and not t.isdigit()]


def _matching(index: Index, hits, question: str) -> list[str]:
    """Retrieved docs whose text contains every content term of the question
    (substring match, so 'chat' also matches 'chatted')."""
    terms = _question_terms(question)
    out = []
    for doc_id, _ in hits:
        lowered = index.texts[doc_id].lower()
        if all(term in lowered for term in terms):
            out.append(doc_id)
    return out


def answer_rbe(index: Index, question: str, category, config: RbeConfig | None = None) -> RbeAnswer:
    """Compose a deterministic answer from the retrieved documents only."""
    from .text import format_date_long

    config = config or RbeConfig()
    hits = retrieve(index, question, config)
    sources = [doc_id for doc_id, _ in hits]
    if not hits:
        return RbeAnswer(text="I could not find relevant records.", sources=[])

    name = getattr(category, "name", None) or ""
    matching = _matching(index, hits, question)

    if name in ("COUNT_TIMES", "NESTED_COMPARE"):
        count = len(matching)
        if count == 0:
            return RbeAnswer(text="I could not find relevant records.", sources=sources)
        return RbeAnswer(
            text=f"Based on the retrieved records, I found {count} matching records.",
            sources=sources,
        )
    if name in ("LAST_TIME", "FIRST_TIME"):
        dates = [d for d in (_doc_date(index.texts[m]) for m in matching) if d is not None]
        if not dates:
            return RbeAnswer(text="I could not find relevant records.", sources=sources)
        best = max(dates) if name == "LAST_TIME" else min(dates)
        label = "last" if name == "LAST_TIME" else "first"
        return RbeAnswer(
            text=f"Based on the retrieved records, the {label} time was on "
            f"{format_date_long(best)}.",
            sources=sources,
        )
    if name == "DID_EVER":
        if matching:
            return RbeAnswer(text="Yes, the retrieved records mention it.", sources=sources)
        return RbeAnswer(text="No, I found no record of it.", sources=sources)
    if name == "SUM_SPENT":
        total = 0
        found = False
        for doc_id in matching:
            m = re.search(r"(\d+(?:\.\d+)?) dollars", index.texts[doc_id])
            if m:
                total += float(m.group(1))
                found = True
        if not found:
            return RbeAnswer(text="I could not find relevant records.", sources=sources)
        rendered = int(total) if total == int(total) else total
        return RbeAnswer(
            text=f"Based on the retrieved records, I spent a total of {rendered} dollars.",
            sources=sources,
        )
    if name == "MOST_FREQUENT":
        question_terms = set(_question_terms(question))
        counts: Counter = Counter()
        for doc_id, _ in hits:
            for tok in tokenize(index.texts[doc_id]):
                if tok in STOPWORDS or tok.isdigit() or tok in question_terms:
                    continue
                counts[tok] += 1
        if not counts:
            return RbeAnswer(text="I could not determine that from the retrieved records.",
                             sources=sources)
        top = sorted(counts.items(), key=lambda p: (-p[1], p[0]))[0]
        return RbeAnswer(
            text=f"Based on the retrieved records, the most frequent was {top[0]}.",
            sources=sources,
        )
    if name == "LIST_ON":
        texts = [index.texts[m] for m in matching]
        if not texts:
            return RbeAnswer(text="I could not find relevant records.", sources=sources)
        return RbeAnswer(
            text="Based on the retrieved records: " + " ".join(texts),
            sources=sources,
        )
    # Generic fallback: quote the best match.
    return RbeAnswer(
        text="Based on the retrieved records: " + index.texts[sources[0]],
        sources=sources,
    )
