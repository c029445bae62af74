"""Question-to-SQL translation.

Two translators share one output contract: a deterministic template
translator (regular question patterns per view, slots filled into SQL with
aggregates pushed into the query), and a remote JSON-over-HTTP client for
plugging in an external model. Every accepted translation parses, validates,
and cleans against the target view before use.
"""
from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass, field

import requests

from .catalog import Catalog, View
from .rewriter import RelaxConfig, clean
from . import sqlast
from .sqlast import AggCall, InSubquery, ExistsSubquery, SubqueryRef, ColumnRef


class NoTemplateMatchError(Exception):
    """The question matches no known template for the routed view."""


class RemoteTranslationError(Exception):
    """Transport failure or unusable SQL from the remote translator."""


class QuestionCategory(enum.Enum):
    COUNT_TIMES = "count_times"
    LAST_TIME = "last_time"
    FIRST_TIME = "first_time"
    LIST_ON = "list_on"
    MOST_FREQUENT = "most_frequent"
    DID_EVER = "did_ever"
    SUM_SPENT = "sum_spent"
    NESTED_COMPARE = "nested_compare"


@dataclass(frozen=True)
class Translation:
    sql: str
    category: QuestionCategory
    slots: dict
    translator: str  # template | remote


@dataclass(frozen=True)
class Template:
    view: str
    category: QuestionCategory
    question_format: str  # used by the benchmark generator
    pattern: re.Pattern
    sql_format: str  # aggregate-pushdown SQL
    listing_format: str  # row-listing SQL (baseline engines)


def _esc(value: str) -> str:
    return value.replace("'", "''")


def _t(view, category, question_format, slot_res, sql_format, listing_format) -> Template:
    pattern = re.escape(question_format)
    for slot, expr in slot_res.items():
        pattern = pattern.replace(re.escape("{" + slot + "}"), f"(?P<{slot}>{expr})")
    pattern = "^" + pattern + "$"
    return Template(
        view=view,
        category=category,
        question_format=question_format,
        pattern=re.compile(pattern, re.IGNORECASE),
        sql_format=sql_format,
        listing_format=listing_format,
    )


_NAME = r"[A-Za-z][A-Za-z .'-]*"
_DATE = r"\d{4}/\d{2}/\d{2}"
_YEAR = r"\d{4}"
_INT = r"\d+"

_YEAR_RANGE = "date >= '{year}/01/01' AND date <= '{year}/12/31'"

TEMPLATES: list[Template] = [
    # -- daily_chat_log ----------------------------------------------------
    _t(
        "daily_chat_log",
        QuestionCategory.LAST_TIME,
        "When was the last time I chatted with {person}?",
        {"person": _NAME},
        "SELECT MAX(date) FROM daily_chat_log WHERE friends LIKE '%{person}%'",
        "SELECT date FROM daily_chat_log WHERE friends LIKE '%{person}%'",
    ),
    _t(
        "daily_chat_log",
        QuestionCategory.FIRST_TIME,
        "When was the first time I chatted with {person}?",
        {"person": _NAME},
        "SELECT MIN(date) FROM daily_chat_log WHERE friends LIKE '%{person}%'",
        "SELECT date FROM daily_chat_log WHERE friends LIKE '%{person}%'",
    ),
    _t(
        "daily_chat_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I chat with {person}?",
        {"person": _NAME},
        "SELECT COUNT(*) FROM daily_chat_log WHERE friends LIKE '%{person}%'",
        "SELECT date FROM daily_chat_log WHERE friends LIKE '%{person}%'",
    ),
    _t(
        "daily_chat_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I chat with {person} in {year}?",
        {"person": _NAME, "year": _YEAR},
        "SELECT COUNT(*) FROM daily_chat_log WHERE friends LIKE '%{person}%' AND " + _YEAR_RANGE,
        "SELECT date FROM daily_chat_log WHERE friends LIKE '%{person}%' AND " + _YEAR_RANGE,
    ),
    _t(
        "daily_chat_log",
        QuestionCategory.DID_EVER,
        "Did I ever chat with {person}?",
        {"person": _NAME},
        "SELECT COUNT(*) FROM daily_chat_log WHERE friends LIKE '%{person}%'",
        "SELECT date FROM daily_chat_log WHERE friends LIKE '%{person}%'",
    ),
    _t(
        "daily_chat_log",
        QuestionCategory.LIST_ON,
        "Who did I chat with on {date}?",
        {"date": _DATE},
        "SELECT friends FROM daily_chat_log WHERE date = '{date}'",
        "SELECT friends FROM daily_chat_log WHERE date = '{date}'",
    ),
    # -- trips ---------------------------------------------------------------
    _t(
        "trips",
        QuestionCategory.COUNT_TIMES,
        "How many trips did I take to {place}?",
        {"place": _NAME},
        "SELECT COUNT(*) FROM trips WHERE destination LIKE '%{place}%'",
        "SELECT date FROM trips WHERE destination LIKE '%{place}%'",
    ),
    _t(
        "trips",
        QuestionCategory.COUNT_TIMES,
        "How many trips did I take in {year}?",
        {"year": _YEAR},
        "SELECT COUNT(*) FROM trips WHERE " + _YEAR_RANGE,
        "SELECT date FROM trips WHERE " + _YEAR_RANGE,
    ),
    _t(
        "trips",
        QuestionCategory.LAST_TIME,
        "When was the last time I traveled to {place}?",
        {"place": _NAME},
        "SELECT MAX(date) FROM trips WHERE destination LIKE '%{place}%'",
        "SELECT date FROM trips WHERE destination LIKE '%{place}%'",
    ),
    _t(
        "trips",
        QuestionCategory.FIRST_TIME,
        "When was the first time I traveled to {place}?",
        {"place": _NAME},
        "SELECT MIN(date) FROM trips WHERE destination LIKE '%{place}%'",
        "SELECT date FROM trips WHERE destination LIKE '%{place}%'",
    ),
    _t(
        "trips",
        QuestionCategory.DID_EVER,
        "Did I ever travel to {place}?",
        {"place": _NAME},
        "SELECT COUNT(*) FROM trips WHERE destination LIKE '%{place}%'",
        "SELECT date FROM trips WHERE destination LIKE '%{place}%'",
    ),
    _t(
        "trips",
        QuestionCategory.MOST_FREQUENT,
        "Which destination did I travel to most often?",
        {},
        "SELECT destination, COUNT(*) AS visits FROM trips "
        "GROUP BY destination ORDER BY COUNT(*) DESC, destination",
        "SELECT destination FROM trips",
    ),
    # -- shopping_log ----------------------------------------------------------
    _t(
        "shopping_log",
        QuestionCategory.SUM_SPENT,
        "How much did I spend on {item}?",
        {"item": _NAME},
        "SELECT SUM(cost) FROM shopping_log WHERE item LIKE '%{item}%'",
        "SELECT cost FROM shopping_log WHERE item LIKE '%{item}%'",
    ),
    _t(
        "shopping_log",
        QuestionCategory.SUM_SPENT,
        "How much did I spend in {year}?",
        {"year": _YEAR},
        "SELECT SUM(cost) FROM shopping_log WHERE " + _YEAR_RANGE,
        "SELECT cost FROM shopping_log WHERE " + _YEAR_RANGE,
    ),
    _t(
        "shopping_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I buy {item}?",
        {"item": _NAME},
        "SELECT COUNT(*) FROM shopping_log WHERE item LIKE '%{item}%'",
        "SELECT date FROM shopping_log WHERE item LIKE '%{item}%'",
    ),
    _t(
        "shopping_log",
        QuestionCategory.LAST_TIME,
        "When was the last time I bought {item}?",
        {"item": _NAME},
        "SELECT MAX(date) FROM shopping_log WHERE item LIKE '%{item}%'",
        "SELECT date FROM shopping_log WHERE item LIKE '%{item}%'",
    ),
    _t(
        "shopping_log",
        QuestionCategory.LIST_ON,
        "What did I buy on {date}?",
        {"date": _DATE},
        "SELECT item FROM shopping_log WHERE date = '{date}'",
        "SELECT item FROM shopping_log WHERE date = '{date}'",
    ),
    _t(
        "shopping_log",
        QuestionCategory.MOST_FREQUENT,
        "What item did I buy most often?",
        {},
        "SELECT item, COUNT(*) AS purchases FROM shopping_log "
        "GROUP BY item ORDER BY COUNT(*) DESC, item",
        "SELECT item FROM shopping_log",
    ),
    _t(
        "shopping_log",
        QuestionCategory.NESTED_COMPARE,
        "On how many days did I buy more than {n} items?",
        {"n": _INT},
        "SELECT COUNT(*) FROM (SELECT date FROM shopping_log "
        "GROUP BY date HAVING COUNT(*) > {n}) AS busy_days",
        "SELECT date FROM shopping_log",
    ),
    # -- exercise_log -----------------------------------------------------------
    _t(
        "exercise_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I do {activity}?",
        {"activity": _NAME},
        "SELECT COUNT(*) FROM exercise_log WHERE activity LIKE '%{activity}%'",
        "SELECT date FROM exercise_log WHERE activity LIKE '%{activity}%'",
    ),
    _t(
        "exercise_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I do {activity} in {year}?",
        {"activity": _NAME, "year": _YEAR},
        "SELECT COUNT(*) FROM exercise_log WHERE activity LIKE '%{activity}%' AND " + _YEAR_RANGE,
        "SELECT date FROM exercise_log WHERE activity LIKE '%{activity}%' AND " + _YEAR_RANGE,
    ),
    _t(
        "exercise_log",
        QuestionCategory.LAST_TIME,
        "When was the last time I did {activity}?",
        {"activity": _NAME},
        "SELECT MAX(date) FROM exercise_log WHERE activity LIKE '%{activity}%'",
        "SELECT date FROM exercise_log WHERE activity LIKE '%{activity}%'",
    ),
    _t(
        "exercise_log",
        QuestionCategory.FIRST_TIME,
        "When was the first time I did {activity}?",
        {"activity": _NAME},
        "SELECT MIN(date) FROM exercise_log WHERE activity LIKE '%{activity}%'",
        "SELECT date FROM exercise_log WHERE activity LIKE '%{activity}%'",
    ),
    _t(
        "exercise_log",
        QuestionCategory.DID_EVER,
        "Did I ever do {activity}?",
        {"activity": _NAME},
        "SELECT COUNT(*) FROM exercise_log WHERE activity LIKE '%{activity}%'",
        "SELECT date FROM exercise_log WHERE activity LIKE '%{activity}%'",
    ),
    _t(
        "exercise_log",
        QuestionCategory.MOST_FREQUENT,
        "Which exercise activity did I do most often?",
        {},
        "SELECT activity, COUNT(*) AS sessions FROM exercise_log "
        "GROUP BY activity ORDER BY COUNT(*) DESC, activity",
        "SELECT activity FROM exercise_log",
    ),
    _t(
        "exercise_log",
        QuestionCategory.LIST_ON,
        "What exercise did I do on {date}?",
        {"date": _DATE},
        "SELECT activity FROM exercise_log WHERE date = '{date}'",
        "SELECT activity FROM exercise_log WHERE date = '{date}'",
    ),
    _t(
        "exercise_log",
        QuestionCategory.NESTED_COMPARE,
        "On how many days did I exercise for more than {n} minutes?",
        {"n": _INT},
        "SELECT COUNT(*) FROM (SELECT date FROM exercise_log "
        "GROUP BY date HAVING SUM(minutes) > {n}) AS heavy_days",
        "SELECT date, minutes FROM exercise_log",
    ),
    # -- pet_log -------------------------------------------------------------
    _t(
        "pet_log",
        QuestionCategory.COUNT_TIMES,
        "How many times did I take my {pet} to the {event}?",
        {"pet": _NAME, "event": _NAME},
        "SELECT COUNT(*) FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
        "SELECT date FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
    ),
    _t(
        "pet_log",
        QuestionCategory.LAST_TIME,
        "When was the last time I took my {pet} to the {event}?",
        {"pet": _NAME, "event": _NAME},
        "SELECT MAX(date) FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
        "SELECT date FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
    ),
    _t(
        "pet_log",
        QuestionCategory.DID_EVER,
        "Did I ever take my {pet} to the {event}?",
        {"pet": _NAME, "event": _NAME},
        "SELECT COUNT(*) FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
        "SELECT date FROM pet_log WHERE pet LIKE '%{pet}%' AND event LIKE '%{event}%'",
    ),
]


def templates_for_view(view_name: str) -> list:
    return [t for t in TEMPLATES if t.view.lower() == view_name.lower()]


def _fill(fmt: str, slots: dict) -> str:
    out = fmt
    for name, value in slots.items():
        out = out.replace("{" + name + "}", _esc(value))
    return out


def translate_template(question: str, view: View) -> Translation:
    """Match the question against the view's templates and fill the SQL."""
    for template in templates_for_view(view.name):
        m = template.pattern.match(question.strip())
        if m:
            slots = {k: v.strip() for k, v in m.groupdict().items()}
            return Translation(
                sql=_fill(template.sql_format, slots),
                category=template.category,
                slots=slots,
                translator="template",
            )
    raise NoTemplateMatchError(f"no template matches {question!r} for view {view.name!r}")


def translate_listing(question: str, view: View) -> Translation:
    """Row-listing variant of the matching template (no aggregate pushdown);
    used by the SQL baseline that aggregates in a post-hoc reader."""
    for template in templates_for_view(view.name):
        m = template.pattern.match(question.strip())
        if m:
            slots = {k: v.strip() for k, v in m.groupdict().items()}
            return Translation(
                sql=_fill(template.listing_format, slots),
                category=template.category,
                slots=slots,
                translator="template",
            )
    raise NoTemplateMatchError(f"no template matches {question!r} for view {view.name!r}")


# ---------------------------------------------------------------------------
# Remote translator


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    timeout_s: float = 30.0
    api_key_env: str = "POSTVIEW_TRANSLATOR_KEY"


def _remote_request(question: str, view: View, config: EndpointConfig) -> str:
    payload = {
        "question": question,
        "view": {
            "name": view.name,
            "description": view.description,
            "columns": [
                {"name": n, "type": t.value} for n, t in view.schema.columns
            ],
        },
        "dialect": "posttext-subset-v1",
    }
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        response = requests.post(
            config.url, data=json.dumps(payload), headers=headers, timeout=config.timeout_s
        )
        response.raise_for_status()
        body = response.json()
    except (requests.RequestException, json.JSONDecodeError) as exc:
        raise RemoteTranslationError(f"remote translator failed: {exc}") from exc
    sql = body.get("sql") if isinstance(body, dict) else None
    if not isinstance(sql, str) or not sql.strip():
        raise RemoteTranslationError("remote translator returned no SQL string")
    return sql


def translate_remote(question: str, view: View, config: EndpointConfig) -> Translation:
    """Ask a remote endpoint for SQL; accept only after parse + validate +
    clean against the target view. One retry on unusable SQL."""
    last_error = None
    for _ in range(2):
        sql = _remote_request(question, view, config)
        try:
            query = sqlast.parse(sql)
            catalog = Catalog()
            catalog.register_view(view.name, view.description, view.table)
            cleaned, audit = clean(query, catalog, RelaxConfig())
            return Translation(
                sql=sqlast.print_query(cleaned),
                category=infer_category(cleaned),
                slots={"audit": "; ".join(audit)} if audit else {},
                translator="remote",
            )
        except Exception as exc:  # unusable SQL: retry once, then fail
            last_error = exc
    raise RemoteTranslationError(f"remote SQL unusable after retry: {last_error}")


def infer_category(query) -> QuestionCategory:
    """Best-effort category from AST shape (used for remote translations)."""
    if any(isinstance(r, SubqueryRef) for r in query.from_refs):
        return QuestionCategory.NESTED_COMPARE

    def subqueries(expr):
        return list(sqlast._walk_expr_queries(expr)) if expr is not None else []

    if subqueries(query.where) or subqueries(query.having):
        return QuestionCategory.NESTED_COMPARE
    aggs = [i.expr for i in query.select_items if isinstance(i.expr, AggCall)]
    if aggs:
        funcs = {a.func for a in aggs}
        if query.group_by and query.order_by:
            return QuestionCategory.MOST_FREQUENT
        if "MAX" in funcs:
            return QuestionCategory.LAST_TIME
        if "MIN" in funcs:
            return QuestionCategory.FIRST_TIME
        if "SUM" in funcs:
            return QuestionCategory.SUM_SPENT
        return QuestionCategory.COUNT_TIMES
    return QuestionCategory.LIST_ON


AGGREGATE_CATEGORIES = (
    QuestionCategory.COUNT_TIMES,
    QuestionCategory.SUM_SPENT,
    QuestionCategory.MOST_FREQUENT,
)


def aggregate_pushdown_check(translation: Translation) -> bool:
    """True iff the outermost select list computes the aggregate itself."""
    query = sqlast.parse(translation.sql)
    return any(sqlast._expr_has_agg(item.expr) for item in query.select_items)
