"""Shared text helpers: tokenization, edit distance, date and number canonicalization."""
from __future__ import annotations

import datetime
import re
from functools import lru_cache

# Fixed stopword list: common English function words plus question-scaffold
# words that carry no routing or grading signal ("how many times did I ...").
STOPWORDS = frozenset(
    """
    a an and are as at be been by did do does doing each for from had has have
    having he her hers him his how i if in into is it its me mine my of on or
    our ours she so that the their theirs them then there these they this
    those to was we were what when where which while who whom why will with
    you your yours
    also am any both but can could ever just least make most much often only
    other out over some such than too under up very
    first last long many time times went take took taken go going get got
    list tell show find found spend spent total
    """.split()
)

_WORD_RE = re.compile(r"[a-z0-9]+")

_MONTHS = {
    name: i + 1
    for i, name in enumerate(
        [
            "january",
            "february",
            "march",
            "april",
            "may",
            "june",
            "july",
            "august",
            "september",
            "october",
            "november",
            "december",
        ]
    )
}

_LONG_DATE_RE = re.compile(
    r"\b(" + "|".join(_MONTHS) + r")\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})\b"
)
_ISO_DATE_RE = re.compile(r"\b(\d{4})[/-](\d{1,2})[/-](\d{1,2})\b")

# Value words normalized to numbers before tokenization so "never" and "0"
# grade as the same answer.
_NUMBER_WORDS = {"never": "0", "none": "0", "zero": "0", "no": "0", "yes": "1"}


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric word tokens, stopwords included."""
    return _WORD_RE.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    """Distinct non-stopword tokens of ``text``."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@lru_cache(maxsize=65536)
def similarity(a: str, b: str) -> float:
    """Normalized edit similarity: 1 - dist / max(len); 1.0 for two empties."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def parse_date(text: str) -> datetime.date | None:
    """Parse the canonical YYYY/MM/DD form, or None."""
    m = re.fullmatch(r"(\d{4})/(\d{2})/(\d{2})", text)
    if not m:
        return None
    try:
        return datetime.date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError:
        return None


def format_date(d: datetime.date) -> str:
    """Canonical YYYY/MM/DD rendering."""
    return f"{d.year:04d}/{d.month:02d}/{d.day:02d}"


def format_date_long(d: datetime.date) -> str:
    """Long form used in verbalized answers, e.g. 'December 26, 2022'."""
    return f"{d.strftime('%B')} {d.day}, {d.year}"


def _canonical_number(text: str) -> str:
    value = float(text)
    if value == int(value):
        return str(int(value))
    return repr(value)


def canonical_tokens(text: str) -> list[str]:
    """Grading tokens: dates canonicalized to YYYY/MM/DD, numbers to plain
    decimals, value words (never/none/yes/...) mapped to numbers."""
    s = text.lower()
    s = _LONG_DATE_RE.sub(
        lambda m: f" {int(m.group(3)):04d}/{_MONTHS[m.group(1)]:02d}/{int(m.group(2)):02d} ",
        s,
    )
    s = _ISO_DATE_RE.sub(
        lambda m: f" {int(m.group(1)):04d}/{int(m.group(2)):02d}/{int(m.group(3)):02d} ",
        s,
    )
    tokens: list[str] = []
    for raw in re.findall(r"\d{4}/\d{2}/\d{2}|\d+(?:\.\d+)?|[a-z]+", s):
        if re.fullmatch(r"\d{4}/\d{2}/\d{2}", raw):
            tokens.append(raw)
        elif raw[0].isdigit():
            tokens.append(_canonical_number(raw))
        else:
            tokens.append(_NUMBER_WORDS.get(raw, raw))
    return tokens


def is_value_token(token: str) -> bool:
    """True for canonical date and number tokens."""
    return bool(re.fullmatch(r"\d{4}/\d{2}/\d{2}|\d+(?:\.\d+)?|-\d+(?:\.\d+)?", token))
