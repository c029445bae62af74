"""Key-retrieval provenance queries and reconciliation.

For every select-from-where(-groupby-having) block over a base view, a
labeled query selecting that view's key columns under the block's WHERE is
generated; GROUP BY + HAVING blocks are constrained to rows of passing groups
through an IN-subquery on the grouping column. Executing these queries gives
a second, syntax-directed route to the contributing tuples, reconciled
against the engine's annotations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .catalog import Catalog, TupleId, format_value
from . import engine as _engine
from . import sqlast
from .sqlast import (
    And,
    ColumnRef,
    ExistsSubquery,
    InSubquery,
    Like,
    CloseEnough,
    Compare,
    Not,
    Or,
    Arith,
    AggCall,
    Literal,
    Query,
    SelectItem,
    SubqueryRef,
    ViewRef,
)


@dataclass(frozen=True)
class ProvQuery:
    label: str  # q0, q1, ... in traversal order
    query: Query
    target_view: str


@dataclass
class ProvGenResult:
    queries: list
    skipped: list  # human-readable warnings for blocks left out


def _conjuncts(expr):
    if expr is None:
        return []
    if isinstance(expr, And):
        return _conjuncts(expr.left) + _conjuncts(expr.right)
    return [expr]


def _conjoin(parts):
    if not parts:
        return None
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def _expr_refs(expr):
    """Column refs mentioned by an expression, ignoring subquery interiors
    (subqueries in this dialect are self-contained)."""
    refs = []

    def visit(node):
        if isinstance(node, ColumnRef):
            refs.append(node)
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
    return refs


@dataclass
class _Block:
    query: Query


def _inline_subquery_source(ref: SubqueryRef):
    """A plain single-view SFW subquery can stand in for its base view:
    returns (ViewRef, rename map alias-col -> base ColumnRef, extra where)."""
    q = ref.query
    if q.group_by or q.having is not None or q.distinct or q.limit is not None:
        return None
    if len(q.from_refs) != 1 or not isinstance(q.from_refs[0], ViewRef):
        return None
    rename = {}
    for item in q.select_items:
        if not isinstance(item.expr, ColumnRef):
            return None
        out_name = (item.alias or item.expr.name).lower()
        rename[out_name] = item.expr
    if any(sqlast._expr_has_agg(i.expr) for i in q.select_items):
        return None
    return q.from_refs[0], rename, q.where


def generate(query: Query, catalog: Catalog) -> ProvGenResult:
    """Emit one key-retrieval query per base view of every block, outer to
    inner, left to right. Blocks with negated subqueries are skipped and
    reported, mirroring the engine's negation limits."""
    queries: list[ProvQuery] = []
    skipped: list[str] = []

    def emit(view_ref: ViewRef, where, block: Query) -> None:
        view = catalog.view(view_ref.view)
        key_cols = tuple(SelectItem(ColumnRef(name=k)) for k in view.schema.key)
        prov_where = where
        if block.group_by and block.having is not None:
            if len(block.group_by) == 1 and len(block.from_refs) == 1:
                group_col = ColumnRef(name=block.group_by[0].name)
                inner = Query(
                    select_items=(SelectItem(group_col),),
                    from_refs=(ViewRef(view=view_ref.view),),
                    where=where,
                    group_by=(group_col,),
                    having=block.having,
                )
                constraint = InSubquery(needle=group_col, query=inner)
                prov_where = _conjoin([c for c in [where, constraint] if c is not None])
            else:
                skipped.append(
                    f"HAVING constraint dropped for block over {view_ref.view!r}: "
                    "only single-column GROUP BY keys are expressible"
                )
        prov = Query(
            select_items=key_cols,
            from_refs=(ViewRef(view=view_ref.view),),
            where=prov_where,
        )
        queries.append(
            ProvQuery(label=f"q{len(queries)}", query=prov, target_view=view.name)
        )

    def visit_block(block: Query) -> None:
        negated = any(
            sqlast.has_negated_subquery(e)
            for e in (block.where, block.having)
            if e is not None
        )
        if negated:
            skipped.append(
                f"skipped block {sqlast.print_query(block)!r}: negated subquery"
            )
        else:
            sources = []  # (ViewRef, rename map or None, inlined where)
            for ref in block.from_refs:
                if isinstance(ref, ViewRef):
                    sources.append((ref, None, None, ref.alias or ref.view))
                else:
                    inlined = _inline_subquery_source(ref)
                    if inlined is not None:
                        view_ref, rename, inner_where = inlined
                        sources.append((view_ref, rename, inner_where, ref.alias))
            multi = len(block.from_refs) > 1
            for view_ref, rename, inner_where, alias in sources:
                conjuncts = []
                for conj in _conjuncts(block.where):
                    refs = _expr_refs(conj)
                    if multi and any(
                        r.table is not None and r.table.lower() != alias.lower()
                        for r in refs
                    ):
                        continue  # predicate needs another scope
                    if multi and any(r.table is None for r in refs) and len(refs) > 0:
                        # Bare columns in a cross product: keep only if they
                        # belong to this source.
                        view_cols = {
                            n.lower()
                            for n, _ in catalog.view(view_ref.view).schema.columns
                        }
                        if rename:
                            view_cols |= set(rename)
                        if not all(
                            r.name.lower() in view_cols for r in refs if r.table is None
                        ):
                            continue
                    if rename is not None:
                        known = set(rename)
                        if not all(r.name.lower() in known for r in refs):
                            continue
                        conj = _rename_columns(conj, rename)
                    else:
                        conj = _strip_qualifiers(conj, alias)
                    conjuncts.append(conj)
                if inner_where is not None:
                    conjuncts = _conjuncts(inner_where) + conjuncts
                block_for_emit = block if rename is None else replace(block, group_by=(), having=None)
                emit(view_ref, _conjoin(conjuncts), block_for_emit)
        for ref in block.from_refs:
            if isinstance(ref, SubqueryRef):
                visit_block(ref.query)
        for expr in (block.where, block.having):
            for sub in _expr_subqueries(expr):
                visit_block(sub)

    visit_block(query)
    return ProvGenResult(queries=queries, skipped=skipped)


def _expr_subqueries(expr):
    if expr is None:
        return
    if isinstance(expr, (Compare, And, Or, Arith)):
        yield from _expr_subqueries(expr.left)
        yield from _expr_subqueries(expr.right)
    elif isinstance(expr, Not):
        yield from _expr_subqueries(expr.operand)
    elif isinstance(expr, AggCall) and expr.arg is not None:
        yield from _expr_subqueries(expr.arg)
    elif isinstance(expr, InSubquery):
        yield expr.query
    elif isinstance(expr, ExistsSubquery):
        yield expr.query


def _rename_columns(expr, rename: dict):
    def fn(ref: ColumnRef) -> ColumnRef:
        target = rename.get(ref.name.lower())
        return ColumnRef(name=target.name) if target is not None else ColumnRef(name=ref.name)

    from .rewriter import _map_columns

    return _map_columns(expr, fn)


def _strip_qualifiers(expr, alias: str):
    def fn(ref: ColumnRef) -> ColumnRef:
        if ref.table is not None and ref.table.lower() == alias.lower():
            return ColumnRef(name=ref.name)
        return ref

    from .rewriter import _map_columns

    return _map_columns(expr, fn)


def execute_prov(catalog: Catalog, prov_queries) -> list:
    """Run the generated queries; returns labeled TupleIds, ordered by label
    then key."""
    results = []
    for order, pq in enumerate(prov_queries):
        table = _engine.evaluate(pq.query, catalog)
        for row in table.rows:
            results.append((order, pq.label, TupleId(view=pq.target_view, key=row.values)))
    results.sort(key=lambda r: (r[0], r[2].order_key()))
    return [(label, tid) for _, label, tid in results]


@dataclass
class ReconciliationReport:
    equal: bool
    engine_only: list
    prov_only: list
    partial: bool = False
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "equal": self.equal,
            "engine_only": [str(t) for t in self.engine_only],
            "prov_only": [str(t) for t in self.prov_only],
            "partial": self.partial,
            "notes": list(self.notes),
        }


def reconcile(annotated, prov_results, skipped=()) -> ReconciliationReport:
    """Compare the engine's contributing tuples with the provenance-query
    route; both diffs are listed. Marked partial when blocks were skipped."""
    engine_set = set()
    for row in annotated.rows:
        engine_set.update(row.contributing)
    prov_set = {tid for _, tid in prov_results}
    engine_only = sorted(engine_set - prov_set, key=TupleId.order_key)
    prov_only = sorted(prov_set - engine_set, key=TupleId.order_key)
    partial = bool(skipped)
    notes = [f"partial: blocks skipped ({s})" for s in skipped]
    return ReconciliationReport(
        equal=not engine_only and not prov_only,
        engine_only=engine_only,
        prov_only=prov_only,
        partial=partial,
        notes=notes,
    )


def provenance_bundle(prov_result: ProvGenResult, prov_tuples, report) -> dict:
    """JSON-ready provenance bundle emitted alongside answers."""
    return {
        "queries": [
            {"label": pq.label, "sql": sqlast.print_query(pq.query)}
            for pq in prov_result.queries
        ],
        "tuples": [
            {
                "label": label,
                "view": tid.view,
                "key": [format_value(v) for v in tid.key],
            }
            for label, tid in prov_tuples
        ],
        "reconciliation": report.to_json() if report is not None else None,
    }
