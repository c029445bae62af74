"""Query cleaning and relaxation.

Cleaning repairs misspelled column references (case-insensitive edit distance
up to a configurable budget) and drops unrepairable WHERE/HAVING conjuncts,
always recording what it did. Relaxation weakens text predicates in two
steps: equality becomes LIKE '%v%', and every LIKE gains a CLOSE_ENOUGH
fuzzy alternative, so slot-value mismatches still match. Predicates under
NOT are left alone, which keeps relaxation result-monotone.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

from .catalog import Catalog, ValueType
from .text import levenshtein, similarity
from . import sqlast
from .sqlast import (
    AggCall,
    And,
    Arith,
    CloseEnough,
    ColumnRef,
    Compare,
    ExistsSubquery,
    InSubquery,
    Like,
    Literal,
    Not,
    Or,
    Query,
    SelectItem,
    OrderItem,
    SubqueryRef,
    ViewRef,
)


class UnrepairableQueryError(Exception):
    """Cleaning cannot produce a valid query (unknown view, missing select
    column with no candidate, or leftover diagnostics)."""


@dataclass(frozen=True)
class RelaxConfig:
    similarity_threshold: float = 0.8
    max_repair_distance: int = 2


# ---------------------------------------------------------------------------
# CLOSE_ENOUGH


def _normalize(text: str) -> str:
    return " ".join(text.casefold().split())


@lru_cache(maxsize=65536)
def _close_enough_cached(pattern: str, value: str, threshold: float) -> bool:
    stripped = _normalize(pattern.replace("%", " "))
    if not stripped:
        return False
    value_tokens = _normalize(value).split()
    pattern_tokens = stripped.split()
    width = len(pattern_tokens)
    for start in range(len(value_tokens) - width + 1):
        if value_tokens[start : start + width] == pattern_tokens:
            return True
    return any(similarity(stripped, tok) >= threshold for tok in value_tokens)


def close_enough(pattern: str, value: str, threshold: float = 0.8) -> bool:
    """Fuzzy text match: after casefolding, whitespace normalization, and
    stripping % wildcards, the pattern is a contiguous run of the value's
    tokens, or its edit similarity to some token reaches the threshold."""
    return _close_enough_cached(pattern, value, threshold)


# ---------------------------------------------------------------------------
# Cleaning


def _map_columns(node, fn):
    """Rebuild an AST node with every ColumnRef passed through fn."""
    if isinstance(node, ColumnRef):
        return fn(node)
    if isinstance(node, Literal):
        return node
    if isinstance(node, Compare):
        return Compare(node.op, _map_columns(node.left, fn), _map_columns(node.right, fn))
    if isinstance(node, Like):
        return Like(_map_columns(node.column, fn), node.pattern)
    if isinstance(node, CloseEnough):
        return CloseEnough(node.pattern, _map_columns(node.column, fn))
    if isinstance(node, And):
        return And(_map_columns(node.left, fn), _map_columns(node.right, fn))
    if isinstance(node, Or):
        return Or(_map_columns(node.left, fn), _map_columns(node.right, fn))
    if isinstance(node, Not):
        return Not(_map_columns(node.operand, fn))
    if isinstance(node, Arith):
        return Arith(node.op, _map_columns(node.left, fn), _map_columns(node.right, fn))
    if isinstance(node, AggCall):
        return AggCall(node.func, None if node.arg is None else _map_columns(node.arg, fn))
    if isinstance(node, (InSubquery, ExistsSubquery)):
        return node  # subqueries are cleaned through their own scope
    raise TypeError(f"not an expression: {node!r}")


def _conjuncts(expr) -> list:
    if isinstance(expr, And):
        return _conjuncts(expr.left) + _conjuncts(expr.right)
    return [expr]


def _conjoin(parts: list):
    if not parts:
        return None
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def _expr_column_names(expr) -> set[str]:
    names: set[str] = set()

    def visit(node):
        if isinstance(node, ColumnRef):
            names.add(node.name.lower())
        elif isinstance(node, (Compare, And, Or, Arith)):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Not):
            visit(node.operand)
        elif isinstance(node, (Like, CloseEnough)):
            visit(node.column)
        elif isinstance(node, AggCall) and node.arg is not None:
            visit(node.arg)
        elif isinstance(node, InSubquery):
            visit(node.needle)

    visit(expr)
    return names


def clean(query: Query, catalog: Catalog, config: RelaxConfig | None = None):
    """Repair or drop invalid column references; returns (query, audit).

    Every unknown column whose closest catalog column is within the repair
    distance is renamed; otherwise the WHERE/HAVING conjunct containing it is
    dropped (recorded in the audit). Raises UnrepairableQueryError when a
    valid query cannot be produced.
    """
    config = config or RelaxConfig()
    audit: list[str] = []
    cleaned = _clean_query(query, catalog, config, audit)
    remaining = sqlast.validate(cleaned, catalog)
    if remaining:
        raise UnrepairableQueryError(
            "; ".join(d.message for d in remaining)
        )
    return cleaned, audit


def _clean_query(query: Query, catalog: Catalog, config: RelaxConfig, audit: list) -> Query:
    # Clean nested FROM subqueries first so the outer scope is trustworthy.
    from_refs = []
    for ref in query.from_refs:
        if isinstance(ref, SubqueryRef):
            from_refs.append(replace(ref, query=_clean_query(ref.query, catalog, config, audit)))
        else:
            if not catalog.has_view(ref.view):
                raise UnrepairableQueryError(f"unknown view {ref.view!r}")
            from_refs.append(ref)
    query = replace(query, from_refs=tuple(from_refs))
    query = _clean_expr_subqueries(query, catalog, config, audit)

    scope = sqlast.build_scope(query, catalog)
    known = {n.lower() for n in scope.all_column_names()}
    renames: dict[str, str] = {}
    unknown: set[str] = set()
    for diag in sqlast.validate(query, catalog):
        if diag.code != "unknown-column" or diag.name is None:
            continue
        lowered = diag.name.lower()
        if lowered in renames or lowered in unknown:
            continue
        best = None
        for candidate in diag.candidates:
            dist = levenshtein(lowered, candidate.lower())
            if dist <= config.max_repair_distance and (best is None or dist < best[0]):
                best = (dist, candidate)
        if best is not None:
            renames[lowered] = best[1]
        else:
            unknown.add(lowered)

    if renames:

        def rename(ref: ColumnRef) -> ColumnRef:
            if ref.name.lower() in renames and ref.name.lower() not in known:
                new = renames[ref.name.lower()]
                audit.append(f"repaired column {ref.name!r} to {new!r}")
                return ColumnRef(name=new, table=ref.table)
            return ref

        query = _map_query_columns(query, rename)

    if unknown:
        query = _drop_bad_conjuncts(query, unknown, audit)
    return query


def _clean_expr_subqueries(query: Query, catalog, config, audit) -> Query:
    def fix(expr):
        if isinstance(expr, InSubquery):
            return InSubquery(expr.needle, _clean_query(expr.query, catalog, config, audit))
        if isinstance(expr, ExistsSubquery):
            return ExistsSubquery(_clean_query(expr.query, catalog, config, audit))
        if isinstance(expr, And):
            return And(fix(expr.left), fix(expr.right))
        if isinstance(expr, Or):
            return Or(fix(expr.left), fix(expr.right))
        if isinstance(expr, Not):
            return Not(fix(expr.operand))
        if isinstance(expr, Compare):
            return Compare(expr.op, fix(expr.left), fix(expr.right))
        return expr

    changes = {}
    if query.where is not None:
        changes["where"] = fix(query.where)
    if query.having is not None:
        changes["having"] = fix(query.having)
    return replace(query, **changes) if changes else query


def _map_query_columns(query: Query, fn) -> Query:
    return replace(
        query,
        select_items=tuple(
            SelectItem(_map_columns(i.expr, fn), i.alias) for i in query.select_items
        ),
        where=None if query.where is None else _map_columns(query.where, fn),
        group_by=tuple(_map_columns(c, fn) for c in query.group_by),
        having=None if query.having is None else _map_columns(query.having, fn),
        order_by=tuple(
            OrderItem(_map_columns(o.expr, fn), o.descending) for o in query.order_by
        ),
    )


def _drop_bad_conjuncts(query: Query, unknown: set, audit: list) -> Query:
    def scrub(expr, clause: str):
        if expr is None:
            return None
        kept = []
        for conj in _conjuncts(expr):
            bad = _expr_column_names(conj) & unknown
            if bad:
                audit.append(
                    f"dropped {clause} predicate {sqlast.print_expr(conj)!r} "
                    f"(unknown column {sorted(bad)[0]!r})"
                )
            else:
                kept.append(conj)
        return _conjoin(kept)

    query = replace(query, where=scrub(query.where, "WHERE"), having=scrub(query.having, "HAVING"))

    # Unknown columns anywhere else cannot be dropped without changing the
    # query's meaning; that is unrepairable.
    for item in query.select_items:
        if _expr_column_names(item.expr) & unknown:
            raise UnrepairableQueryError(
                f"select item references unknown column with no repair candidate: "
                f"{sqlast.print_expr(item.expr)}"
            )
    for col in query.group_by:
        if _expr_column_names(col) & unknown:
            raise UnrepairableQueryError(f"GROUP BY references unknown column {col.name!r}")
    for item in query.order_by:
        if _expr_column_names(item.expr) & unknown:
            raise UnrepairableQueryError(
                f"ORDER BY references unknown column: {sqlast.print_expr(item.expr)}"
            )
    return query


# ---------------------------------------------------------------------------
# Relaxation


def relax(query: Query, catalog: Catalog, config: RelaxConfig | None = None) -> Query:
    """Weaken text predicates: ``col = 'v'`` becomes
    ``(col LIKE '%v%' OR CLOSE_ENOUGH('%v%', col))`` and ``col LIKE p``
    becomes ``(col LIKE p OR CLOSE_ENOUGH(p, col))``. Idempotent; leaves
    select/group/order/limit and anything under NOT untouched."""
    config = config or RelaxConfig()
    return _relax_query(query, catalog, config)


def _relax_query(query: Query, catalog: Catalog, config: RelaxConfig) -> Query:
    scope = sqlast.build_scope(query, catalog)

    def column_is_text(ref: ColumnRef) -> bool:
        matches = scope.resolve(ref)
        return len(matches) == 1 and matches[0][2] is ValueType.TEXT

    def relax_expr(expr):
        if isinstance(expr, And):
            return And(relax_expr(expr.left), relax_expr(expr.right))
        if isinstance(expr, Or):
            if _already_relaxed(expr):
                return expr
            return Or(relax_expr(expr.left), relax_expr(expr.right))
        if isinstance(expr, Not):
            return expr  # never weaken under negation
        if isinstance(expr, Compare) and expr.op == "=":
            pair = _text_eq_parts(expr, column_is_text)
            if pair is not None:
                col, value = pair
                pattern = f"%{value}%"
                return Or(Like(col, pattern), CloseEnough(pattern, col))
            return _relax_subqueries(expr, catalog, config)
        if isinstance(expr, Like):
            return Or(expr, CloseEnough(expr.pattern, expr.column))
        return _relax_subqueries(expr, catalog, config)

    changes = {}
    if query.where is not None:
        changes["where"] = relax_expr(query.where)
    if query.having is not None:
        changes["having"] = relax_expr(query.having)
    from_refs = tuple(
        replace(r, query=_relax_query(r.query, catalog, config))
        if isinstance(r, SubqueryRef)
        else r
        for r in query.from_refs
    )
    return replace(query, from_refs=from_refs, **changes)


def _text_eq_parts(expr: Compare, column_is_text):
    left, right = expr.left, expr.right
    if isinstance(left, ColumnRef) and isinstance(right, Literal) and isinstance(right.value, str):
        if column_is_text(left):
            return left, right.value
    if isinstance(right, ColumnRef) and isinstance(left, Literal) and isinstance(left.value, str):
        if column_is_text(right):
            return right, left.value
    return None


def _already_relaxed(expr: Or) -> bool:
    return (
        isinstance(expr.left, Like)
        and isinstance(expr.right, CloseEnough)
        and expr.right.pattern == expr.left.pattern
        and expr.right.column == expr.left.column
    )


def _relax_subqueries(expr, catalog, config):
    if isinstance(expr, InSubquery):
        return InSubquery(expr.needle, _relax_query(expr.query, catalog, config))
    if isinstance(expr, ExistsSubquery):
        return ExistsSubquery(_relax_query(expr.query, catalog, config))
    return expr
