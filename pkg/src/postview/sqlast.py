"""SQL subset: AST types, recursive-descent parser, canonical printer, validator.

The dialect covers SELECT [DISTINCT] ... FROM (views, cross products,
parenthesized subqueries) WHERE ... GROUP BY ... HAVING ... ORDER BY ...
LIMIT, with comparison/boolean/arithmetic expressions, LIKE, a first-class
CLOSE_ENOUGH(pattern, column) predicate, COUNT/SUM/AVG/MIN/MAX aggregates,
and IN/EXISTS subqueries. Printing is canonical: ``parse(print(x)) == x``.

String literals shaped like YYYY/MM/DD are promoted to date literals, so date
constants order chronologically.
"""
from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field

from .catalog import Catalog, ValueType, value_type_of
from .text import levenshtein, parse_date


class SqlError(Exception):
    """Base for parse-time failures."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SqlSyntaxError(SqlError):
    pass


class UnsupportedSqlError(SqlError):
    """A recognized construct outside the supported subset."""

    def __init__(self, construct: str, line: int = 1, column: int = 1):
        super().__init__(f"unsupported construct: {construct}", line, column)
        self.construct = construct


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class ColumnRef:
    name: str
    table: str | None = None


@dataclass(frozen=True)
class Literal:
    value: object  # None | bool | int | float | str | datetime.date


@dataclass(frozen=True)
class Compare:
    op: str  # one of = != < <= > >=
    left: object
    right: object


@dataclass(frozen=True)
class Like:
    column: ColumnRef
    pattern: str


@dataclass(frozen=True)
class CloseEnough:
    pattern: str
    column: ColumnRef


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class Arith:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class AggCall:
    func: str  # COUNT SUM AVG MIN MAX; COUNT with arg None means COUNT(*)
    arg: object | None


@dataclass(frozen=True)
class InSubquery:
    needle: object
    query: "Query"


@dataclass(frozen=True)
class ExistsSubquery:
    query: "Query"


@dataclass(frozen=True)
class ViewRef:
    view: str
    alias: str | None = None


@dataclass(frozen=True)
class SubqueryRef:
    query: "Query"
    alias: str


@dataclass(frozen=True)
class SelectItem:
    expr: object
    alias: str | None = None


@dataclass(frozen=True)
class OrderItem:
    expr: object
    descending: bool = False


@dataclass(frozen=True)
class Query:
    select_items: tuple
    from_refs: tuple
    distinct: bool = False
    where: object | None = None
    group_by: tuple = ()
    having: object | None = None
    order_by: tuple = ()
    limit: int | None = None


AGG_FUNCS = ("COUNT", "SUM", "AVG", "MIN", "MAX")

KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER",
    "LIMIT", "AND", "OR", "NOT", "LIKE", "IN", "EXISTS", "AS", "ASC", "DESC",
    "NULL", "TRUE", "FALSE", "CLOSE_ENOUGH", *AGG_FUNCS,
}

UNSUPPORTED_KEYWORDS = {
    "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS", "ON", "UNION",
    "INTERSECT", "EXCEPT", "OVER", "WINDOW", "WITH", "INSERT", "UPDATE",
    "DELETE", "CREATE", "DROP", "ALTER", "BETWEEN", "CASE", "CAST", "OFFSET",
    "VALUES", "SET",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_NUMBER_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")


@dataclass
class _Token:
    kind: str  # IDENT NUMBER STRING SYMBOL EOF
    text: str
    line: int
    column: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def _tokenize(sql: str) -> list[_Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(sql)
    while i < n:
        ch = sql[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if ch == "'":
            j = i + 1
            parts = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal", start_line, start_col)
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":
                        parts.append("'")
                        j += 2
                        continue
                    j += 1
                    break
                parts.append(sql[j])
                j += 1
            tokens.append(_Token("STRING", "".join(parts), start_line, start_col))
            col += j - i
            i = j
            continue
        m = _NUMBER_RE.match(sql, i)
        if m and ch.isdigit():
            tokens.append(_Token("NUMBER", m.group(0), start_line, start_col))
            col += m.end() - i
            i = m.end()
            continue
        m = _IDENT_RE.match(sql, i)
        if m:
            tokens.append(_Token("IDENT", m.group(0), start_line, start_col))
            col += m.end() - i
            i = m.end()
            continue
        for sym in ("<=", ">=", "!=", "<>"):
            if sql.startswith(sym, i):
                tokens.append(_Token("SYMBOL", sym, start_line, start_col))
                i += 2
                col += 2
                break
        else:
            if ch in "(),.*=<>+-/":
                tokens.append(_Token("SYMBOL", ch, start_line, start_col))
                i += 1
                col += 1
            else:
                raise SqlSyntaxError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(_Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, sql: str):
        self.tokens = _tokenize(sql)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise SqlSyntaxError(message, tok.line, tok.column)

    def check_supported(self, tok: _Token) -> None:
        if tok.kind == "IDENT" and tok.upper in UNSUPPORTED_KEYWORDS:
            raise UnsupportedSqlError(tok.upper, tok.line, tok.column)

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.upper in words

    def expect_keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.upper == word:
            return self.next()
        self.error(f"expected {word}")

    def expect_symbol(self, sym: str) -> _Token:
        tok = self.peek()
        if tok.kind == "SYMBOL" and tok.text == sym:
            return self.next()
        self.error(f"expected {sym!r}")

    def ident(self, what: str) -> str:
        tok = self.peek()
        self.check_supported(tok)
        if tok.kind != "IDENT":
            self.error(f"expected {what}")
        if tok.upper in KEYWORDS:
            self.error(f"keyword {tok.upper} cannot be used as {what}")
        return self.next().text

    # -- grammar --------------------------------------------------------

    def parse_query(self) -> Query:
        self.check_supported(self.peek())
        self.expect_keyword("SELECT")
        distinct = False
        if self.at_keyword("DISTINCT"):
            self.next()
            distinct = True
        tok = self.peek()
        if tok.kind == "SYMBOL" and tok.text == "*":
            raise UnsupportedSqlError("SELECT *", tok.line, tok.column)
        select_items = [self.parse_select_item()]
        while self.at_symbol(","):
            self.next()
            select_items.append(self.parse_select_item())
        self.expect_keyword("FROM")
        from_refs = [self.parse_table_ref()]
        while self.at_symbol(","):
            self.next()
            from_refs.append(self.parse_table_ref())
        where = None
        if self.at_keyword("WHERE"):
            self.next()
            where = self.parse_expr()
        group_by: list[ColumnRef] = []
        if self.at_keyword("GROUP"):
            self.next()
            self.expect_keyword("BY")
            group_by.append(self.parse_column_ref())
            while self.at_symbol(","):
                self.next()
                group_by.append(self.parse_column_ref())
        having = None
        if self.at_keyword("HAVING"):
            self.next()
            having = self.parse_expr()
        order_by: list[OrderItem] = []
        if self.at_keyword("ORDER"):
            self.next()
            self.expect_keyword("BY")
            order_by.append(self.parse_order_item())
            while self.at_symbol(","):
                self.next()
                order_by.append(self.parse_order_item())
        limit = None
        if self.at_keyword("LIMIT"):
            self.next()
            tok = self.peek()
            if tok.kind != "NUMBER" or "." in tok.text or "e" in tok.text.lower():
                self.error("LIMIT expects a nonnegative integer")
            limit = int(self.next().text)
        return Query(
            select_items=tuple(select_items),
            from_refs=tuple(from_refs),
            distinct=distinct,
            where=where,
            group_by=tuple(group_by),
            having=having,
            order_by=tuple(order_by),
            limit=limit,
        )

    def at_symbol(self, sym: str) -> bool:
        tok = self.peek()
        return tok.kind == "SYMBOL" and tok.text == sym

    def parse_select_item(self) -> SelectItem:
        expr = self.parse_expr()
        alias = None
        if self.at_keyword("AS"):
            self.next()
            alias = self.ident("alias")
        elif self.peek().kind == "IDENT" and self.peek().upper not in KEYWORDS:
            self.check_supported(self.peek())
            alias = self.next().text
        return SelectItem(expr=expr, alias=alias)

    def parse_order_item(self) -> OrderItem:
        expr = self.parse_expr()
        descending = False
        if self.at_keyword("ASC"):
            self.next()
        elif self.at_keyword("DESC"):
            self.next()
            descending = True
        return OrderItem(expr=expr, descending=descending)

    def parse_table_ref(self):
        if self.at_symbol("("):
            self.next()
            query = self.parse_query()
            self.expect_symbol(")")
            if self.at_keyword("AS"):
                self.next()
            alias = self.ident("subquery alias")
            return SubqueryRef(query=query, alias=alias)
        name = self.ident("view name")
        alias = None
        if self.at_keyword("AS"):
            self.next()
            alias = self.ident("alias")
        elif self.peek().kind == "IDENT" and self.peek().upper not in KEYWORDS:
            self.check_supported(self.peek())
            alias = self.next().text
        return ViewRef(view=name, alias=alias)

    def parse_column_ref(self) -> ColumnRef:
        first = self.ident("column name")
        if self.at_symbol("."):
            self.next()
            second = self.ident("column name")
            return ColumnRef(name=second, table=first)
        return ColumnRef(name=first)

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while self.at_keyword("OR"):
            self.next()
            left = Or(left=left, right=self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.at_keyword("AND"):
            self.next()
            left = And(left=left, right=self.parse_not())
        return left

    def parse_not(self):
        if self.at_keyword("NOT"):
            self.next()
            return Not(operand=self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self):
        left = self.parse_additive()
        tok = self.peek()
        if tok.kind == "SYMBOL" and tok.text in ("=", "!=", "<>", "<", "<=", ">", ">="):
            op = self.next().text
            if op == "<>":
                op = "!="
            right = self.parse_additive()
            return Compare(op=op, left=left, right=right)
        negated = False
        if self.at_keyword("NOT") and self.peek(1).kind == "IDENT" and self.peek(1).upper in ("LIKE", "IN"):
            self.next()
            negated = True
        if self.at_keyword("LIKE"):
            like_tok = self.next()
            if not isinstance(left, ColumnRef):
                self.error("LIKE requires a column on the left", like_tok)
            pat = self.peek()
            if pat.kind != "STRING":
                self.error("LIKE requires a string pattern")
            self.next()
            node = Like(column=left, pattern=pat.text)
            return Not(operand=node) if negated else node
        if self.at_keyword("IN"):
            in_tok = self.next()
            self.expect_symbol("(")
            if not self.at_keyword("SELECT"):
                raise UnsupportedSqlError("IN over a value list", in_tok.line, in_tok.column)
            query = self.parse_query()
            self.expect_symbol(")")
            node = InSubquery(needle=left, query=query)
            return Not(operand=node) if negated else node
        if negated:
            self.error("expected LIKE or IN after NOT")
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while self.at_symbol("+") or self.at_symbol("-"):
            op = self.next().text
            left = Arith(op=op, left=left, right=self.parse_multiplicative())
        return left

    def parse_multiplicative(self):
        left = self.parse_primary()
        while self.at_symbol("*") or self.at_symbol("/"):
            op = self.next().text
            left = Arith(op=op, left=left, right=self.parse_primary())
        return left

    def parse_primary(self):
        tok = self.peek()
        self.check_supported(tok)
        if tok.kind == "SYMBOL" and tok.text == "-":
            minus = self.next()
            num = self.peek()
            if num.kind != "NUMBER":
                self.error("expected a number after unary minus", minus)
            self.next()
            return Literal(value=-_number_value(num.text))
        if tok.kind == "NUMBER":
            self.next()
            return Literal(value=_number_value(tok.text))
        if tok.kind == "STRING":
            self.next()
            promoted = parse_date(tok.text)
            return Literal(value=promoted if promoted is not None else tok.text)
        if tok.kind == "SYMBOL" and tok.text == "(":
            self.next()
            if self.at_keyword("SELECT"):
                raise UnsupportedSqlError("scalar subquery", tok.line, tok.column)
            inner = self.parse_expr()
            self.expect_symbol(")")
            return inner
        if tok.kind == "IDENT":
            upper = tok.upper
            if upper == "NULL":
                self.next()
                return Literal(value=None)
            if upper == "TRUE":
                self.next()
                return Literal(value=True)
            if upper == "FALSE":
                self.next()
                return Literal(value=False)
            if upper == "EXISTS":
                self.next()
                self.expect_symbol("(")
                query = self.parse_query()
                self.expect_symbol(")")
                return ExistsSubquery(query=query)
            if upper == "CLOSE_ENOUGH":
                self.next()
                self.expect_symbol("(")
                pat = self.peek()
                if pat.kind != "STRING":
                    self.error("CLOSE_ENOUGH requires a string pattern first")
                self.next()
                self.expect_symbol(",")
                column = self.parse_column_ref()
                self.expect_symbol(")")
                return CloseEnough(pattern=pat.text, column=column)
            if upper in AGG_FUNCS:
                func_tok = self.next()
                self.expect_symbol("(")
                if self.at_symbol("*"):
                    star = self.next()
                    if upper != "COUNT":
                        self.error(f"{upper}(*) is not valid", star)
                    self.expect_symbol(")")
                    return AggCall(func="COUNT", arg=None)
                arg = self.parse_expr()
                self.expect_symbol(")")
                return AggCall(func=upper, arg=arg)
            if upper in KEYWORDS:
                self.error(f"unexpected keyword {upper}")
            return self.parse_column_ref()
        self.error("expected an expression")


def _number_value(text: str):
    if "." in text or "e" in text.lower():
        return float(text)
    return int(text)


def parse(sql_text: str) -> Query:
    """Parse SQL text into a Query AST; raises SqlSyntaxError/UnsupportedSqlError."""
    parser = _Parser(sql_text)
    query = parser.parse_query()
    tok = parser.peek()
    if tok.kind != "EOF":
        parser.check_supported(tok)
        parser.error(f"unexpected trailing input {tok.text!r}")
    return query


# ---------------------------------------------------------------------------
# Printer


def _quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def print_expr(expr) -> str:
    if isinstance(expr, Literal):
        v = expr.value
        if v is None:
            return "NULL"
        if isinstance(v, bool):
            return "TRUE" if v else "FALSE"
        if isinstance(v, datetime.date):
            return _quote(f"{v.year:04d}/{v.month:02d}/{v.day:02d}")
        if isinstance(v, str):
            return _quote(v)
        if isinstance(v, float):
            return repr(v)
        return str(v)
    if isinstance(expr, ColumnRef):
        return f"{expr.table}.{expr.name}" if expr.table else expr.name
    if isinstance(expr, Compare):
        return f"{print_expr(expr.left)} {expr.op} {print_expr(expr.right)}"
    if isinstance(expr, Like):
        return f"{print_expr(expr.column)} LIKE {_quote(expr.pattern)}"
    if isinstance(expr, CloseEnough):
        return f"CLOSE_ENOUGH({_quote(expr.pattern)}, {print_expr(expr.column)})"
    if isinstance(expr, And):
        return f"({print_expr(expr.left)} AND {print_expr(expr.right)})"
    if isinstance(expr, Or):
        return f"({print_expr(expr.left)} OR {print_expr(expr.right)})"
    if isinstance(expr, Not):
        return f"NOT ({print_expr(expr.operand)})"
    if isinstance(expr, Arith):
        return f"({print_expr(expr.left)} {expr.op} {print_expr(expr.right)})"
    if isinstance(expr, AggCall):
        if expr.arg is None:
            return "COUNT(*)"
        return f"{expr.func}({print_expr(expr.arg)})"
    if isinstance(expr, InSubquery):
        return f"{print_expr(expr.needle)} IN ({print_query(expr.query)})"
    if isinstance(expr, ExistsSubquery):
        return f"EXISTS ({print_query(expr.query)})"
    raise TypeError(f"not an expression: {expr!r}")


def print_query(query: Query) -> str:
    """Canonical one-line SQL text for an AST."""
    parts = ["SELECT"]
    if query.distinct:
        parts.append("DISTINCT")
    items = []
    for item in query.select_items:
        rendered = print_expr(item.expr)
        if item.alias:
            rendered += f" AS {item.alias}"
        items.append(rendered)
    parts.append(", ".join(items))
    parts.append("FROM")
    refs = []
    for ref in query.from_refs:
        if isinstance(ref, ViewRef):
            refs.append(f"{ref.view} AS {ref.alias}" if ref.alias else ref.view)
        else:
            refs.append(f"({print_query(ref.query)}) AS {ref.alias}")
    parts.append(", ".join(refs))
    if query.where is not None:
        parts.append("WHERE")
        parts.append(print_expr(query.where))
    if query.group_by:
        parts.append("GROUP BY")
        parts.append(", ".join(print_expr(c) for c in query.group_by))
    if query.having is not None:
        parts.append("HAVING")
        parts.append(print_expr(query.having))
    if query.order_by:
        parts.append("ORDER BY")
        parts.append(
            ", ".join(
                print_expr(o.expr) + (" DESC" if o.descending else "")
                for o in query.order_by
            )
        )
    if query.limit is not None:
        parts.append(f"LIMIT {query.limit}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    code: str  # unknown-view | unknown-column | ambiguous-column |
    #            aggregate-misuse | type-mismatch | subquery-shape
    message: str
    name: str | None = None
    candidates: tuple = ()


@dataclass
class Scope:
    """Column resolution context: one entry per FROM source."""

    sources: list  # of (alias, [(name, ValueType|None)])

    def resolve(self, ref: ColumnRef):
        """Return (source index, column index, type) or a list of matches."""
        matches = []
        for si, (alias, columns) in enumerate(self.sources):
            if ref.table is not None and alias.lower() != ref.table.lower():
                continue
            for ci, (name, vtype) in enumerate(columns):
                if name.lower() == ref.name.lower():
                    matches.append((si, ci, vtype))
        return matches

    def all_column_names(self) -> list[str]:
        names = []
        for _, columns in self.sources:
            names.extend(name for name, _ in columns)
        return names


def column_candidates(name: str, scope: Scope, limit: int = 3, max_distance: int = 3) -> tuple:
    """Nearby column names by case-insensitive edit distance."""
    scored = []
    for candidate in scope.all_column_names():
        dist = levenshtein(name.lower(), candidate.lower())
        if dist <= max_distance:
            scored.append((dist, candidate))
    scored.sort(key=lambda p: (p[0], p[1]))
    out = []
    for _, candidate in scored:
        if candidate not in out:
            out.append(candidate)
    return tuple(out[:limit])


def _expr_has_agg(expr) -> bool:
    if isinstance(expr, AggCall):
        return True
    if isinstance(expr, (Compare, And, Or, Arith)):
        return _expr_has_agg(expr.left) or _expr_has_agg(expr.right)
    if isinstance(expr, Not):
        return _expr_has_agg(expr.operand)
    # Like/CloseEnough/In/Exists operands cannot contain aggregates.
    return False


def is_aggregate_query(query: Query) -> bool:
    return (
        bool(query.group_by)
        or query.having is not None
        or any(_expr_has_agg(i.expr) for i in query.select_items)
    )


_NUMERIC = (ValueType.INT, ValueType.FLOAT)


def _comparable(a, b) -> bool:
    if a is None or b is None:
        return True
    if a in _NUMERIC and b in _NUMERIC:
        return True
    return a is b


class _Validator:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.diagnostics: list[Diagnostic] = []

    def add(self, code, message, name=None, candidates=()):
        self.diagnostics.append(
            Diagnostic(code=code, message=message, name=name, candidates=tuple(candidates))
        )

    def build_scope(self, query: Query) -> Scope:
        sources = []
        seen_aliases = set()
        for ref in query.from_refs:
            if isinstance(ref, ViewRef):
                alias = ref.alias or ref.view
                if not self.catalog.has_view(ref.view):
                    self.add("unknown-view", f"unknown view {ref.view!r}", name=ref.view)
                    columns = []
                else:
                    schema = self.catalog.view(ref.view).schema
                    columns = list(schema.columns)
            else:
                alias = ref.alias
                columns = self.output_columns(ref.query)
                self.validate_query(ref.query)
            if alias.lower() in seen_aliases:
                self.add("subquery-shape", f"duplicate FROM alias {alias!r}")
            seen_aliases.add(alias.lower())
            sources.append((alias, columns))
        return Scope(sources=sources)

    def output_columns(self, query: Query) -> list:
        scope = self.build_scope_quiet(query)
        columns = []
        for i, item in enumerate(query.select_items):
            if item.alias:
                name = item.alias
            elif isinstance(item.expr, ColumnRef):
                name = item.expr.name
            else:
                name = f"column{i + 1}"
            columns.append((name, self.infer_type_quiet(item.expr, scope)))
        return columns

    def build_scope_quiet(self, query: Query) -> Scope:
        saved = self.diagnostics
        self.diagnostics = []
        try:
            return self.build_scope(query)
        finally:
            self.diagnostics = saved

    def infer_type_quiet(self, expr, scope):
        saved = self.diagnostics
        self.diagnostics = []
        try:
            return self.infer_type(expr, scope)
        finally:
            self.diagnostics = saved

    def resolve_column(self, ref: ColumnRef, scope: Scope):
        matches = scope.resolve(ref)
        if len(matches) == 1:
            return matches[0][2]
        if not matches:
            shown = f"{ref.table}.{ref.name}" if ref.table else ref.name
            self.add(
                "unknown-column",
                f"unknown column {shown!r}",
                name=ref.name,
                candidates=column_candidates(ref.name, scope),
            )
            return None
        self.add("ambiguous-column", f"ambiguous column {ref.name!r}", name=ref.name)
        return matches[0][2]

    def infer_type(self, expr, scope: Scope):
        if isinstance(expr, Literal):
            return None if expr.value is None else value_type_of(expr.value)
        if isinstance(expr, ColumnRef):
            return self.resolve_column(expr, scope)
        if isinstance(expr, Compare):
            lt = self.infer_type(expr.left, scope)
            rt = self.infer_type(expr.right, scope)
            if not _comparable(lt, rt):
                self.add(
                    "type-mismatch",
                    f"cannot compare {lt.value} with {rt.value}: "
                    f"{print_expr(expr)}",
                )
            return ValueType.BOOL
        if isinstance(expr, Like):
            ct = self.resolve_column(expr.column, scope)
            if ct is not None and ct is not ValueType.TEXT:
                self.add("type-mismatch", f"LIKE requires a text column: {print_expr(expr)}")
            return ValueType.BOOL
        if isinstance(expr, CloseEnough):
            ct = self.resolve_column(expr.column, scope)
            if ct is not None and ct is not ValueType.TEXT:
                self.add(
                    "type-mismatch",
                    f"CLOSE_ENOUGH requires a text column: {print_expr(expr)}",
                )
            return ValueType.BOOL
        if isinstance(expr, (And, Or)):
            self.infer_type(expr.left, scope)
            self.infer_type(expr.right, scope)
            return ValueType.BOOL
        if isinstance(expr, Not):
            self.infer_type(expr.operand, scope)
            return ValueType.BOOL
        if isinstance(expr, Arith):
            lt = self.infer_type(expr.left, scope)
            rt = self.infer_type(expr.right, scope)
            for t in (lt, rt):
                if t is not None and t not in _NUMERIC:
                    self.add(
                        "type-mismatch",
                        f"arithmetic requires numeric operands: {print_expr(expr)}",
                    )
                    return None
            if lt is ValueType.FLOAT or rt is ValueType.FLOAT or expr.op == "/":
                return ValueType.FLOAT
            return ValueType.INT
        if isinstance(expr, AggCall):
            if expr.arg is None:
                return ValueType.INT
            if _expr_has_agg(expr.arg):
                self.add("aggregate-misuse", f"nested aggregate: {print_expr(expr)}")
            at = self.infer_type(expr.arg, scope)
            if expr.func == "COUNT":
                return ValueType.INT
            if expr.func in ("SUM", "AVG"):
                if at is not None and at not in _NUMERIC:
                    self.add(
                        "type-mismatch",
                        f"{expr.func} requires a numeric argument: {print_expr(expr)}",
                    )
                return ValueType.FLOAT if expr.func == "AVG" else at
            return at  # MIN/MAX
        if isinstance(expr, InSubquery):
            nt = self.infer_type(expr.needle, scope)
            self.validate_query(expr.query)
            inner = self.output_columns(expr.query)
            if len(inner) != 1:
                self.add(
                    "subquery-shape",
                    f"IN subquery must select exactly one column, got {len(inner)}",
                )
            elif not _comparable(nt, inner[0][1]):
                self.add(
                    "type-mismatch",
                    f"IN subquery column type does not match: {print_expr(expr)}",
                )
            return ValueType.BOOL
        if isinstance(expr, ExistsSubquery):
            self.validate_query(expr.query)
            return ValueType.BOOL
        raise TypeError(f"not an expression: {expr!r}")

    def validate_query(self, query: Query) -> None:
        scope = self.build_scope(query)
        aggregate = is_aggregate_query(query)
        group_exprs = set(query.group_by)

        def grouped(expr) -> bool:
            """In an aggregate query, non-aggregate parts must be grouped."""
            if expr in group_exprs:
                return True
            if isinstance(expr, ColumnRef):
                # Accept qualified/unqualified spelling of the same column.
                return any(
                    g.name.lower() == expr.name.lower()
                    and (g.table is None or expr.table is None or g.table.lower() == expr.table.lower())
                    for g in query.group_by
                )
            if isinstance(expr, Literal):
                return True
            if isinstance(expr, AggCall):
                return True
            if isinstance(expr, (Compare, And, Or, Arith)):
                return grouped(expr.left) and grouped(expr.right)
            if isinstance(expr, Not):
                return grouped(expr.operand)
            if isinstance(expr, (InSubquery, ExistsSubquery, Like, CloseEnough)):
                return False
            return False

        for item in query.select_items:
            self.infer_type(item.expr, scope)
            if aggregate and not _expr_has_agg(item.expr) and not grouped(item.expr):
                self.add(
                    "aggregate-misuse",
                    f"non-aggregate select item {print_expr(item.expr)!r} "
                    "must appear in GROUP BY",
                )
        if query.where is not None:
            if _expr_has_agg(query.where):
                self.add("aggregate-misuse", "aggregate call in WHERE")
            self.infer_type(query.where, scope)
        for col in query.group_by:
            self.resolve_column(col, scope)
        if query.having is not None:
            if not aggregate:
                self.add("aggregate-misuse", "HAVING requires GROUP BY or aggregates")
            self.infer_type(query.having, scope)
            if not grouped(query.having) and not _expr_has_agg(query.having):
                pass  # pure scalar HAVING over grouped cols is caught below
            if aggregate and not self._having_ok(query.having, grouped):
                self.add(
                    "aggregate-misuse",
                    f"HAVING references ungrouped column: {print_expr(query.having)}",
                )
        for item in query.order_by:
            self.infer_type(item.expr, scope)
            if aggregate and not _expr_has_agg(item.expr) and not grouped(item.expr):
                self.add(
                    "aggregate-misuse",
                    f"ORDER BY references ungrouped column: {print_expr(item.expr)}",
                )
            if not aggregate and _expr_has_agg(item.expr):
                self.add("aggregate-misuse", "aggregate in ORDER BY of a non-aggregate query")

    def _having_ok(self, expr, grouped) -> bool:
        if isinstance(expr, AggCall):
            return True
        if isinstance(expr, (Compare, And, Or, Arith)):
            return self._having_ok(expr.left, grouped) and self._having_ok(expr.right, grouped)
        if isinstance(expr, Not):
            return self._having_ok(expr.operand, grouped)
        if isinstance(expr, (InSubquery,)):
            return self._having_ok(expr.needle, grouped)
        if isinstance(expr, ExistsSubquery):
            return True
        return grouped(expr)


def validate(query: Query, catalog: Catalog) -> list[Diagnostic]:
    """Check a parsed query against the catalog; empty list means executable."""
    v = _Validator(catalog)
    v.validate_query(query)
    return v.diagnostics


def build_scope(query: Query, catalog: Catalog) -> Scope:
    """Resolution scope for a query's FROM clause (used by the rewriter)."""
    return _Validator(catalog).build_scope_quiet(query)


def infer_expr_type(expr, scope: Scope):
    """Best-effort type of an expression within a scope (None when unknown)."""
    return _Validator(Catalog()).infer_type_quiet(expr, scope)


def walk_queries(query: Query):
    """Yield this query and every nested subquery, outer first, left to right."""
    yield query
    for ref in query.from_refs:
        if isinstance(ref, SubqueryRef):
            yield from walk_queries(ref.query)
    for expr in (query.where, query.having):
        if expr is not None:
            yield from _walk_expr_queries(expr)


def _walk_expr_queries(expr):
    if isinstance(expr, (Compare, And, Or, Arith)):
        yield from _walk_expr_queries(expr.left)
        yield from _walk_expr_queries(expr.right)
    elif isinstance(expr, Not):
        yield from _walk_expr_queries(expr.operand)
    elif isinstance(expr, AggCall) and expr.arg is not None:
        yield from _walk_expr_queries(expr.arg)
    elif isinstance(expr, InSubquery):
        yield from walk_queries(expr.query)
    elif isinstance(expr, ExistsSubquery):
        yield from walk_queries(expr.query)


def has_negated_subquery(expr) -> bool:
    """True if a NOT appears above any IN/EXISTS subquery."""

    def contains_subquery(e) -> bool:
        if isinstance(e, (InSubquery, ExistsSubquery)):
            return True
        if isinstance(e, (Compare, And, Or, Arith)):
            return contains_subquery(e.left) or contains_subquery(e.right)
        if isinstance(e, Not):
            return contains_subquery(e.operand)
        if isinstance(e, AggCall) and e.arg is not None:
            return contains_subquery(e.arg)
        return False

    if expr is None:
        return False
    if isinstance(expr, Not):
        if contains_subquery(expr.operand):
            return True
        return has_negated_subquery(expr.operand)
    if isinstance(expr, (Compare, And, Or, Arith)):
        return has_negated_subquery(expr.left) or has_negated_subquery(expr.right)
    if isinstance(expr, AggCall) and expr.arg is not None:
        return has_negated_subquery(expr.arg)
    if isinstance(expr, InSubquery):
        return _query_has_negated_subquery(expr.query)
    if isinstance(expr, ExistsSubquery):
        return _query_has_negated_subquery(expr.query)
    return False


def _query_has_negated_subquery(query: Query) -> bool:
    for q in walk_queries(query):
        for e in (q.where, q.having):
            if e is not None and has_negated_subquery(e):
                return True
    return False


def query_has_negated_subquery(query: Query) -> bool:
    return _query_has_negated_subquery(query)
