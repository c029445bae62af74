"""Semiring-annotated query evaluation.

Every result row carries a provenance polynomial over base-tuple identifiers:
scans annotate rows with their own key, cross products multiply, duplicate
merging (DISTINCT, grouping) adds. Predicates with IN/EXISTS subqueries
multiply in the polynomials of the inner rows that made them true, so a
monomial's variables always form a sufficient witness for its row. Rows also
carry per-cell where-provenance (which base cells a value was copied from)
and the contributing set (all base tuples that fed the row).
"""
from __future__ import annotations

import datetime
from dataclasses import dataclass, field
from functools import reduce

from .catalog import Catalog, TupleId, ValueType, format_value, sort_key
from .rewriter import close_enough
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
    SubqueryRef,
    ViewRef,
)


class EngineError(Exception):
    pass


class NegationUnsupportedError(EngineError):
    """NOT over IN/EXISTS subqueries has no sound positive-semiring semantics."""


class ContextBudgetExceeded(EngineError):
    """A verbalized list blew the character budget; carries truncated text."""

    def __init__(self, text: str, budget: int):
        super().__init__(f"verbalization exceeds context budget of {budget} characters")
        self.text = text
        self.budget = budget


# ---------------------------------------------------------------------------
# Provenance polynomials (commutative semiring N[X] over TupleIds)


@dataclass(frozen=True)
class Monomial:
    factors: tuple  # sorted tuple of TupleId, with multiplicity

    @staticmethod
    def of(*tuple_ids: TupleId) -> "Monomial":
        return Monomial(tuple(sorted(tuple_ids, key=lambda t: t.order_key())))

    def variables(self) -> frozenset:
        return frozenset(self.factors)

    def times(self, other: "Monomial") -> "Monomial":
        return Monomial.of(*(self.factors + other.factors))

    def order_key(self):
        return (len(self.factors), tuple(t.order_key() for t in self.factors))


@dataclass(frozen=True)
class ProvPolynomial:
    monomials: tuple  # sorted tuple of Monomial, with multiplicity

    @staticmethod
    def of(*monomials: Monomial) -> "ProvPolynomial":
        return ProvPolynomial(tuple(sorted(monomials, key=Monomial.order_key)))

    @staticmethod
    def var(tuple_id: TupleId) -> "ProvPolynomial":
        return ProvPolynomial.of(Monomial.of(tuple_id))

    def is_zero(self) -> bool:
        return not self.monomials

    def add(self, other: "ProvPolynomial") -> "ProvPolynomial":
        return ProvPolynomial.of(*(self.monomials + other.monomials))

    def mul(self, other: "ProvPolynomial") -> "ProvPolynomial":
        return ProvPolynomial.of(
            *(a.times(b) for a in self.monomials for b in other.monomials)
        )

    def variables(self) -> frozenset:
        out: set = set()
        for m in self.monomials:
            out.update(m.factors)
        return frozenset(out)

    def why(self) -> frozenset:
        """Minimal witness sets: distinct variable sets of monomials, kept
        only when no other monomial's variable set is a proper subset."""
        seen = {m.variables() for m in self.monomials}
        return frozenset(
            w for w in seen if not any(o < w for o in seen)
        )


ZERO = ProvPolynomial.of()
ONE = ProvPolynomial.of(Monomial.of())


def why(polynomial: ProvPolynomial) -> frozenset:
    """Why-provenance of an annotated row: its minimal witness sets."""
    return polynomial.why()


def _collapse_empties(poly: ProvPolynomial) -> ProvPolynomial:
    """Drop duplicate empty monomials (the empty witness is idempotent as a
    predicate support; keeping one copy avoids inflating bag multiplicity)."""
    empties = [m for m in poly.monomials if not m.factors]
    if len(empties) <= 1:
        return poly
    rest = [m for m in poly.monomials if m.factors]
    return ProvPolynomial.of(Monomial.of(), *rest)


# ---------------------------------------------------------------------------
# Annotated tables


@dataclass
class AnnotatedRow:
    values: tuple
    polynomial: ProvPolynomial
    where: tuple  # per cell: frozenset of (TupleId, column name)
    contributing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.contributing:
            self.contributing = self.polynomial.variables()


@dataclass
class AnnotatedTable:
    columns: tuple  # of (name, ValueType|None)
    rows: list  # of AnnotatedRow
    warnings: list = field(default_factory=list)

    def column_names(self) -> list[str]:
        return [n for n, _ in self.columns]

    def plain_rows(self) -> list[tuple]:
        return [r.values for r in self.rows]

    def to_json(self) -> dict:
        return {
            "columns": [n for n, _ in self.columns],
            "rows": [
                {
                    "values": [format_value(v) for v in r.values],
                    "polynomial": [
                        [str(t) for t in m.factors] for m in r.polynomial.monomials
                    ],
                    "where": [
                        sorted(f"{t}.{c}" for t, c in cell) for cell in r.where
                    ],
                    "contributing": sorted(str(t) for t in r.contributing),
                }
                for r in self.rows
            ],
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# Evaluation


def _like_match(pattern: str, value: str) -> bool:
    import re

    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.fullmatch("".join(out), value, flags=re.DOTALL) is not None


@dataclass
class _Source:
    alias: str
    columns: list  # (name, type)
    rows: list  # AnnotatedRow


class _Evaluator:
    def __init__(self, catalog: Catalog, threshold: float = 0.8):
        self.catalog = catalog
        self.threshold = threshold
        self.warnings: list[str] = []
        self._subquery_cache: dict[Query, AnnotatedTable] = {}

    # -- entry ----------------------------------------------------------

    def evaluate(self, query: Query) -> AnnotatedTable:
        self._check_negation(query)
        table = self._eval_query(query)
        table.warnings = self.warnings
        return table

    def _check_negation(self, query: Query) -> None:
        if sqlast.query_has_negated_subquery(query):
            raise NegationUnsupportedError(
                "negated subqueries (NOT IN / NOT EXISTS) are not supported"
            )

    # -- sources ---------------------------------------------------------

    def _scan_view(self, ref: ViewRef) -> _Source:
        view = self.catalog.view(ref.view)
        schema = view.schema
        key_idx = schema.key_indexes()
        rows = []
        for raw in view.table.rows:
            tid = TupleId(view=view.name, key=tuple(raw[i] for i in key_idx))
            where = tuple(
                frozenset([(tid, schema.columns[i][0])]) for i in range(len(raw))
            )
            rows.append(
                AnnotatedRow(values=tuple(raw), polynomial=ProvPolynomial.var(tid), where=where)
            )
        return _Source(alias=ref.alias or view.name, columns=list(schema.columns), rows=rows)

    def _eval_subquery(self, query: Query) -> AnnotatedTable:
        if query not in self._subquery_cache:
            self._subquery_cache[query] = self._eval_query(query)
        return self._subquery_cache[query]

    # -- main pipeline ----------------------------------------------------

    def _eval_query(self, query: Query) -> AnnotatedTable:
        sources = []
        for ref in query.from_refs:
            if isinstance(ref, ViewRef):
                sources.append(self._scan_view(ref))
            else:
                inner = self._eval_query(ref.query)
                sources.append(
                    _Source(alias=ref.alias, columns=list(inner.columns), rows=inner.rows)
                )

        # Cross product with polynomial multiplication.
        rows = None
        for src in sources:
            if rows is None:
                rows = list(src.rows)
            else:
                rows = [
                    AnnotatedRow(
                        values=a.values + b.values,
                        polynomial=a.polynomial.mul(b.polynomial),
                        where=a.where + b.where,
                    )
                    for a in rows
                    for b in src.rows
                ]
        rows = rows or []

        scope = _RowScope(sources)

        if query.where is not None:
            filtered = []
            for row in rows:
                ok, support = self._eval_pred(query.where, scope, row)
                if ok:
                    poly = row.polynomial.mul(_collapse_empties(support))
                    filtered.append(
                        AnnotatedRow(values=row.values, polynomial=poly, where=row.where)
                    )
            rows = filtered

        aggregate = sqlast.is_aggregate_query(query)
        if aggregate:
            out_rows, out_cols, order_ctx = self._eval_groups(query, scope, rows)
        else:
            out_rows, out_cols, order_ctx = self._eval_projection(query, scope, rows)

        if query.distinct:
            out_rows, order_ctx = self._dedupe(out_rows, order_ctx)

        if query.order_by:
            out_rows = self._order(query, out_rows, order_ctx)

        if query.limit is not None:
            out_rows = out_rows[: query.limit]

        return AnnotatedTable(columns=tuple(out_cols), rows=out_rows)

    # -- scalar expressions ------------------------------------------------

    def _eval_scalar(self, expr, scope, row):
        """Value of a non-aggregate expression for one joined row."""
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, ColumnRef):
            return row.values[scope.index(expr)]
        if isinstance(expr, Arith):
            return self._arith(expr, self._eval_scalar(expr.left, scope, row),
                               self._eval_scalar(expr.right, scope, row))
        if isinstance(expr, (Compare, Like, CloseEnough, And, Or, Not, InSubquery, ExistsSubquery)):
            ok, _ = self._eval_pred(expr, scope, row)
            return ok
        raise EngineError(f"cannot evaluate {sqlast.print_expr(expr)} as a scalar")

    def _arith(self, expr, left, right):
        if left is None or right is None:
            return None
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if right == 0:
            self.warnings.append(f"division by zero in {sqlast.print_expr(expr)}; result is NULL")
            return None
        return left / right

    def _eval_pred(self, expr, scope, row):
        """Predicate truth plus the polynomial support that made it true.

        Scalar atoms need no tuples beyond the row itself (support ONE); a
        true IN/EXISTS contributes the matching inner rows' polynomials.
        """
        if isinstance(expr, And):
            lt, ls = self._eval_pred(expr.left, scope, row)
            if not lt:
                return False, ZERO
            rt, rs = self._eval_pred(expr.right, scope, row)
            if not rt:
                return False, ZERO
            return True, ls.mul(rs)
        if isinstance(expr, Or):
            lt, ls = self._eval_pred(expr.left, scope, row)
            rt, rs = self._eval_pred(expr.right, scope, row)
            if not (lt or rt):
                return False, ZERO
            support = ZERO
            if lt:
                support = support.add(ls)
            if rt:
                support = support.add(rs)
            return True, _collapse_empties(support)
        if isinstance(expr, Not):
            ok, _ = self._eval_pred(expr.operand, scope, row)
            return (not ok), ONE
        if isinstance(expr, Compare):
            left = self._eval_scalar(expr.left, scope, row)
            right = self._eval_scalar(expr.right, scope, row)
            return self._compare(expr.op, left, right), ONE
        if isinstance(expr, Like):
            value = self._eval_scalar(expr.column, scope, row)
            if value is None:
                return False, ZERO
            return _like_match(expr.pattern, str(value)), ONE
        if isinstance(expr, CloseEnough):
            value = self._eval_scalar(expr.column, scope, row)
            if value is None:
                return False, ZERO
            return close_enough(expr.pattern, str(value), self.threshold), ONE
        if isinstance(expr, InSubquery):
            needle = self._eval_scalar(expr.needle, scope, row)
            if needle is None:
                return False, ZERO
            inner = self._eval_subquery(expr.query)
            support = ZERO
            found = False
            for irow in inner.rows:
                if self._compare("=", needle, irow.values[0]):
                    found = True
                    support = support.add(irow.polynomial)
            return (found, support) if found else (False, ZERO)
        if isinstance(expr, ExistsSubquery):
            inner = self._eval_subquery(expr.query)
            if not inner.rows:
                return False, ZERO
            support = reduce(
                ProvPolynomial.add, (r.polynomial for r in inner.rows), ZERO
            )
            return True, support
        if isinstance(expr, Literal):
            if isinstance(expr.value, bool):
                return expr.value, ONE
            return expr.value is not None, ONE
        raise EngineError(f"cannot evaluate predicate {sqlast.print_expr(expr)}")

    @staticmethod
    def _compare(op: str, left, right) -> bool:
        if left is None or right is None:
            return False  # three-valued logic collapsed to false
        if isinstance(left, bool) != isinstance(right, bool):
            raise EngineError(f"type mismatch comparing {left!r} and {right!r}")
        numeric = (int, float)
        if isinstance(left, numeric) and isinstance(right, numeric):
            pass
        elif type(left) is not type(right):
            raise EngineError(f"type mismatch comparing {left!r} and {right!r}")
        if op == "=":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        if op == ">=":
            return left >= right
        raise EngineError(f"unknown comparison {op}")

    def _where_of(self, expr, scope, row) -> frozenset:
        """Where-provenance for a copied cell; empty for computed values."""
        if isinstance(expr, ColumnRef):
            return row.where[scope.index(expr)]
        return frozenset()

    # -- projection (non-aggregate) ----------------------------------------

    def _eval_projection(self, query, scope, rows):
        out_rows = []
        order_ctx = []
        for row in rows:
            values = []
            wheres = []
            for item in query.select_items:
                values.append(self._eval_scalar(item.expr, scope, row))
                wheres.append(self._where_of(item.expr, scope, row))
            out_rows.append(
                AnnotatedRow(values=tuple(values), polynomial=row.polynomial, where=tuple(wheres))
            )
            order_ctx.append(
                {o.expr: self._eval_scalar(o.expr, scope, row) for o in query.order_by}
            )
        columns = self._output_columns(query, scope)
        return out_rows, columns, order_ctx

    def _output_columns(self, query, scope):
        columns = []
        for i, item in enumerate(query.select_items):
            if item.alias:
                name = item.alias
            elif isinstance(item.expr, ColumnRef):
                name = item.expr.name
            else:
                name = f"column{i + 1}"
            columns.append((name, self._static_type(item.expr, scope)))
        return columns

    def _static_type(self, expr, scope):
        if isinstance(expr, Literal):
            return None if expr.value is None else _runtime_type(expr.value)
        if isinstance(expr, ColumnRef):
            try:
                return scope.type_of(expr)
            except EngineError:
                return None
        if isinstance(expr, AggCall):
            if expr.arg is None or expr.func == "COUNT":
                return ValueType.INT
            if expr.func == "AVG":
                return ValueType.FLOAT
            return self._static_type(expr.arg, scope)
        if isinstance(expr, Arith):
            lt = self._static_type(expr.left, scope)
            rt = self._static_type(expr.right, scope)
            if expr.op == "/" or ValueType.FLOAT in (lt, rt):
                return ValueType.FLOAT
            return ValueType.INT
        return ValueType.BOOL if isinstance(expr, (Compare, Like, CloseEnough, And, Or, Not)) else None

    # -- grouping and aggregates --------------------------------------------

    def _eval_groups(self, query, scope, rows):
        groups: dict[tuple, list] = {}
        if query.group_by:
            key_idx = [scope.index(c) for c in query.group_by]
            for row in rows:
                key = tuple(row.values[i] for i in key_idx)
                groups.setdefault(key, []).append(row)
        else:
            groups[()] = list(rows)  # implicit single group, even when empty

        out_rows = []
        order_ctx = []
        group_keys = sorted(groups, key=lambda k: tuple(sort_key(v) for v in k))
        for key in group_keys:
            members = groups[key]
            poly = reduce(ProvPolynomial.add, (m.polynomial for m in members), ZERO)
            if query.having is not None:
                ok, support = self._eval_group_pred(query.having, scope, query, key, members)
                if not ok:
                    continue
                poly = poly.mul(_collapse_empties(support)) if members else poly
            values = []
            wheres = []
            for item in query.select_items:
                value, where = self._eval_group_expr(item.expr, scope, query, key, members)
                values.append(value)
                wheres.append(where)
            out_rows.append(AnnotatedRow(values=tuple(values), polynomial=poly, where=tuple(wheres)))
            order_ctx.append(
                {
                    o.expr: self._eval_group_expr(o.expr, scope, query, key, members)[0]
                    for o in query.order_by
                }
            )
        columns = self._output_columns(query, scope)
        return out_rows, columns, order_ctx

    def _group_key_value(self, expr, scope, query, key):
        for i, g in enumerate(query.group_by):
            if g == expr:
                return key[i]
            if (
                isinstance(expr, ColumnRef)
                and g.name.lower() == expr.name.lower()
                and (g.table is None or expr.table is None or g.table.lower() == expr.table.lower())
            ):
                return key[i]
        raise EngineError(f"ungrouped column {sqlast.print_expr(expr)} in aggregate query")

    def _eval_group_expr(self, expr, scope, query, key, members):
        """(value, where-provenance) of a select/order expression per group."""
        if isinstance(expr, AggCall):
            return self._eval_aggregate(expr, scope, members)
        if isinstance(expr, Literal):
            return expr.value, frozenset()
        if isinstance(expr, ColumnRef):
            value = self._group_key_value(expr, scope, query, key)
            wheres = [m.where[scope.index(expr)] for m in members]
            merged = frozenset().union(*wheres) if wheres else frozenset()
            return value, merged
        if isinstance(expr, Arith):
            lv, _ = self._eval_group_expr(expr.left, scope, query, key, members)
            rv, _ = self._eval_group_expr(expr.right, scope, query, key, members)
            return self._arith(expr, lv, rv), frozenset()
        if isinstance(expr, (Compare, And, Or, Not)):
            ok, _ = self._eval_group_pred(expr, scope, query, key, members)
            return ok, frozenset()
        raise EngineError(f"cannot evaluate {sqlast.print_expr(expr)} per group")

    def _eval_aggregate(self, agg: AggCall, scope, members):
        if agg.arg is None:  # COUNT(*)
            return len(members), frozenset()
        pairs = []
        for m in members:
            pairs.append((self._eval_scalar(agg.arg, scope, m), m))
        present = [(v, m) for v, m in pairs if v is not None]
        if agg.func == "COUNT":
            return len(present), frozenset()
        if not present:
            return None, frozenset()
        values = [v for v, _ in present]
        if agg.func == "SUM":
            return sum(values), frozenset()
        if agg.func == "AVG":
            return sum(values) / len(values), frozenset()
        best = min(values, key=sort_key) if agg.func == "MIN" else max(values, key=sort_key)
        where = frozenset()
        for v, m in present:
            if v == best:
                where = where | self._where_of(agg.arg, scope, m)
        return best, where

    def _eval_group_pred(self, expr, scope, query, key, members):
        if isinstance(expr, And):
            lt, ls = self._eval_group_pred(expr.left, scope, query, key, members)
            if not lt:
                return False, ZERO
            rt, rs = self._eval_group_pred(expr.right, scope, query, key, members)
            if not rt:
                return False, ZERO
            return True, ls.mul(rs)
        if isinstance(expr, Or):
            lt, ls = self._eval_group_pred(expr.left, scope, query, key, members)
            rt, rs = self._eval_group_pred(expr.right, scope, query, key, members)
            if not (lt or rt):
                return False, ZERO
            support = ZERO
            if lt:
                support = support.add(ls)
            if rt:
                support = support.add(rs)
            return True, _collapse_empties(support)
        if isinstance(expr, Not):
            ok, _ = self._eval_group_pred(expr.operand, scope, query, key, members)
            return (not ok), ONE
        if isinstance(expr, Compare):
            left, _ = self._eval_group_expr(expr.left, scope, query, key, members)
            right, _ = self._eval_group_expr(expr.right, scope, query, key, members)
            return self._compare(expr.op, left, right), ONE
        if isinstance(expr, InSubquery):
            needle, _ = self._eval_group_expr(expr.needle, scope, query, key, members)
            if needle is None:
                return False, ZERO
            inner = self._eval_subquery(expr.query)
            support = ZERO
            found = False
            for irow in inner.rows:
                if self._compare("=", needle, irow.values[0]):
                    found = True
                    support = support.add(irow.polynomial)
            return (found, support) if found else (False, ZERO)
        if isinstance(expr, ExistsSubquery):
            inner = self._eval_subquery(expr.query)
            if not inner.rows:
                return False, ZERO
            return True, reduce(ProvPolynomial.add, (r.polynomial for r in inner.rows), ZERO)
        if isinstance(expr, (Like, CloseEnough)):
            raise EngineError(
                f"{sqlast.print_expr(expr)} is not valid in HAVING over ungrouped text"
            )
        if isinstance(expr, Literal):
            if isinstance(expr.value, bool):
                return expr.value, ONE
            return expr.value is not None, ONE
        raise EngineError(f"cannot evaluate group predicate {sqlast.print_expr(expr)}")

    # -- DISTINCT / ORDER BY -------------------------------------------------

    def _dedupe(self, rows, order_ctx):
        merged: dict[tuple, AnnotatedRow] = {}
        ctx: dict[tuple, dict] = {}
        order: list[tuple] = []
        for row, oc in zip(rows, order_ctx):
            key = tuple(sort_key(v) for v in row.values)
            if key in merged:
                prev = merged[key]
                merged[key] = AnnotatedRow(
                    values=prev.values,
                    polynomial=prev.polynomial.add(row.polynomial),
                    where=tuple(a | b for a, b in zip(prev.where, row.where)),
                )
            else:
                merged[key] = row
                ctx[key] = oc
                order.append(key)
        return [merged[k] for k in order], [ctx[k] for k in order]

    def _order(self, query, rows, order_ctx):
        def row_key(pair):
            row, ctx = pair
            keys = []
            for item in query.order_by:
                value = ctx[item.expr]
                k = sort_key(value)
                if item.descending:
                    keys.append(_Reversed(k))
                else:
                    keys.append(k)
            keys.append(tuple(sort_key(v) for v in row.values))
            keys.append(tuple(m.order_key() for m in row.polynomial.monomials))
            return tuple(keys)

        pairs = sorted(zip(rows, order_ctx), key=row_key)
        return [row for row, _ in pairs]


class _Reversed:
    """Inverts comparison order for DESC sort keys."""

    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key

    def __lt__(self, other):
        return other.key < self.key

    def __eq__(self, other):
        return self.key == other.key


class _RowScope:
    def __init__(self, sources):
        self.sources = sources
        self.offsets = []
        offset = 0
        for src in sources:
            self.offsets.append(offset)
            offset += len(src.columns)

    def index(self, ref: ColumnRef) -> int:
        matches = []
        for src, offset in zip(self.sources, self.offsets):
            if ref.table is not None and src.alias.lower() != ref.table.lower():
                continue
            for i, (name, _) in enumerate(src.columns):
                if name.lower() == ref.name.lower():
                    matches.append(offset + i)
        if len(matches) != 1:
            shown = f"{ref.table}.{ref.name}" if ref.table else ref.name
            raise EngineError(f"cannot resolve column {shown!r}")
        return matches[0]

    def type_of(self, ref: ColumnRef):
        for src in self.sources:
            if ref.table is not None and src.alias.lower() != ref.table.lower():
                continue
            for name, vtype in src.columns:
                if name.lower() == ref.name.lower():
                    return vtype
        raise EngineError(f"cannot resolve column {ref.name!r}")


def _runtime_type(value):
    from .catalog import value_type_of

    return value_type_of(value)


def evaluate(query: Query, catalog: Catalog, close_enough_threshold: float = 0.8) -> AnnotatedTable:
    """Evaluate a validated query with provenance annotations (bag semantics)."""
    return _Evaluator(catalog, threshold=close_enough_threshold).evaluate(query)


# ---------------------------------------------------------------------------
# Verbalization


_TOPIC_PATTERNS = {
    "LAST_TIME": r"^\s*when was the last time\s+(.+?)\??\s*$",
    "FIRST_TIME": r"^\s*when was the first time\s+(.+?)\??\s*$",
}


def _topic(question: str, category_name: str) -> str | None:
    import re

    pattern = _TOPIC_PATTERNS.get(category_name)
    if not pattern:
        return None
    m = re.match(pattern, question, flags=re.IGNORECASE)
    return m.group(1).strip() if m else None


def _render(value) -> str:
    if isinstance(value, datetime.date):
        return format_value(value)
    if isinstance(value, float) and value == int(value):
        return str(int(value))
    return format_value(value)


def verbalize(result: AnnotatedTable, question: str, category, context_budget: int = 4000) -> str:
    """Deterministic template answer for a result table.

    ``category`` may be None or any object with a ``name`` (the question
    category enum). Dates are rendered in long form; multi-row results as an
    enumerated list. Raises ContextBudgetExceeded when the list form blows
    the character budget (the exception carries the truncated text).
    """
    name = getattr(category, "name", None) or ""
    rows = result.rows
    scalar = rows[0].values[0] if len(rows) == 1 and len(rows[0].values) >= 1 else None

    if not rows:
        if name in ("LAST_TIME", "FIRST_TIME", "DID_EVER"):
            topic = _topic(question, name)
            return f"I never {_strip_subject(topic)}." if topic else "I found no matching records."
        return "I found no matching records."

    if name in ("LAST_TIME", "FIRST_TIME") and len(rows) == 1:
        topic = _topic(question, name)
        if scalar is None:
            return f"I never {_strip_subject(topic)}." if topic else "I found no matching records."
        when = (
            None if not isinstance(scalar, datetime.date) else _long_date(scalar)
        )
        label = "last" if name == "LAST_TIME" else "first"
        if topic and when:
            return f"The {label} time {topic} was on {when}."
        if when:
            return f"The {label} matching date is {when}."
        return f"The answer is {_render(scalar)}."

    if name in ("COUNT_TIMES", "NESTED_COMPARE") and len(rows) == 1 and len(rows[0].values) == 1:
        count = scalar or 0
        if count == 0:
            return "I found no matching records."
        return f"I found {_render(count)} matching records."

    if name == "DID_EVER" and len(rows) == 1 and len(rows[0].values) == 1:
        count = scalar or 0
        if count and count > 0:
            return f"Yes, I did, {_render(count)} times in total."
        return "No, I never did."

    if name == "SUM_SPENT" and len(rows) == 1 and len(rows[0].values) == 1:
        if scalar is None:
            return "I found no matching records."
        return f"I spent a total of {_render(scalar)} dollars."

    if name == "MOST_FREQUENT" and rows and len(rows[0].values) >= 2:
        top = rows[0]
        return (
            f"The most frequent was {_render(top.values[0])}, "
            f"{_render(top.values[1])} times."
        )

    if len(rows) == 1 and len(rows[0].values) == 1:
        if scalar is None:
            return "I found no matching records."
        if isinstance(scalar, datetime.date):
            return f"The answer is {_long_date(scalar)}."
        return f"The answer is {_render(scalar)}."

    # Enumerated list under the context budget.
    entries = []
    for i, row in enumerate(rows, start=1):
        cells = ", ".join(_render(v) for v in row.values)
        entries.append(f"{i}. {cells}")
    text = f"I found {len(rows)} matching records: " + "; ".join(entries)
    if len(text) > context_budget:
        truncated = text[: max(0, context_budget - 40)].rstrip()
        truncated += " ... [truncated: context budget exceeded]"
        raise ContextBudgetExceeded(truncated, context_budget)
    return text


def _long_date(d: datetime.date) -> str:
    from .text import format_date_long

    return format_date_long(d)


def _strip_subject(topic: str | None) -> str:
    if not topic:
        return "did that"
    lowered = topic.strip()
    if lowered.lower().startswith("i "):
        return lowered[2:]
    return lowered
