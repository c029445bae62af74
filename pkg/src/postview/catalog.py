"""Typed source tables, described views, and keyed tuple identities.

The catalog is the only data access layer: tables are loaded from CSV files
with a JSON schema sidecar, registered as views with a human description, and
addressed row-by-row through ``TupleId`` keys. Once built, a catalog is never
mutated, so provenance references stay valid for the whole session.
"""
from __future__ import annotations

import csv
import datetime
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .text import STOPWORDS, format_date, parse_date, tokenize

# A cell value is one of: None, bool, int, float, str, datetime.date.
Value = object
Row = tuple


class CatalogError(Exception):
    """Loading or lookup failure in the catalog layer."""


class ValueType(enum.Enum):
    BOOL = "bool"
    INT = "int"
    FLOAT = "float"
    TEXT = "text"
    DATE = "date"


def value_type_of(value) -> ValueType | None:
    """Runtime type of a cell value; None for SQL NULL."""
    if value is None:
        return None
    if isinstance(value, bool):
        return ValueType.BOOL
    if isinstance(value, int):
        return ValueType.INT
    if isinstance(value, float):
        return ValueType.FLOAT
    if isinstance(value, str):
        return ValueType.TEXT
    if isinstance(value, datetime.date):
        return ValueType.DATE
    raise TypeError(f"unsupported value {value!r}")


def format_value(value) -> str:
    """Canonical text rendering: dates as YYYY/MM/DD, NULL as empty string."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime.date):
        return format_date(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce_value(text: str, vtype: ValueType):
    """Parse a CSV cell into a typed value; empty cells become NULL.

    Raises ValueError on an unparseable cell.
    """
    if text == "":
        return None
    if vtype is ValueType.TEXT:
        return text
    if vtype is ValueType.INT:
        return int(text)
    if vtype is ValueType.FLOAT:
        return float(text)
    if vtype is ValueType.BOOL:
        lowered = text.lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        raise ValueError(f"not a bool: {text!r}")
    if vtype is ValueType.DATE:
        d = parse_date(text)
        if d is None:
            raise ValueError(f"not a YYYY/MM/DD date: {text!r}")
        return d
    raise ValueError(f"unknown type {vtype}")


def sort_key(value) -> tuple:
    """Total, deterministic ordering over heterogeneous values."""
    if value is None:
        return (0, "")
    if isinstance(value, bool):
        return (1, "1" if value else "0")
    if isinstance(value, (int, float)):
        return (2, float(value))
    if isinstance(value, datetime.date):
        return (3, format_date(value))
    return (4, str(value))


@dataclass(frozen=True)
class Schema:
    columns: tuple  # of (name, ValueType)
    key: tuple  # of column names

    def __post_init__(self):
        names = [n.lower() for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise CatalogError("column names must be unique (case-insensitive)")
        if not self.key:
            raise CatalogError("schema key must be nonempty")
        for k in self.key:
            if k.lower() not in names:
                raise CatalogError(f"key column {k!r} not in schema")

    def column_names(self) -> list[str]:
        return [n for n, _ in self.columns]

    def column_index(self, name: str) -> int:
        lowered = name.lower()
        for i, (n, _) in enumerate(self.columns):
            if n.lower() == lowered:
                return i
        raise CatalogError(f"no column {name!r}")

    def column_type(self, name: str) -> ValueType:
        return self.columns[self.column_index(name)][1]

    def key_indexes(self) -> list[int]:
        return [self.column_index(k) for k in self.key]


@dataclass
class SourceTable:
    name: str
    schema: Schema
    rows: list  # of Row

    def key_of(self, row: Row) -> tuple:
        idx = self.schema.key_indexes()
        return tuple(row[i] for i in idx)

    def validate(self) -> None:
        width = len(self.schema.columns)
        seen = {}
        for rownum, row in enumerate(self.rows, start=1):
            if len(row) != width:
                raise CatalogError(
                    f"{self.name}: row {rownum} has {len(row)} cells, expected {width}"
                )
            for (colname, vtype), value in zip(self.schema.columns, row):
                if value is not None and value_type_of(value) is not vtype:
                    raise CatalogError(
                        f"{self.name}: row {rownum}, column {colname!r}: "
                        f"expected {vtype.value}, got {value!r}"
                    )
            key = self.key_of(row)
            if any(k is None for k in key):
                raise CatalogError(f"{self.name}: row {rownum} has NULL in key")
            if key in seen:
                raise CatalogError(
                    f"{self.name}: duplicate key {format_key(key)} "
                    f"(rows {seen[key]} and {rownum})"
                )
            seen[key] = rownum


def format_key(key: tuple) -> str:
    return "(" + ", ".join(format_value(v) for v in key) + ")"


@dataclass
class View:
    name: str
    description: str
    table: SourceTable
    cell_links: dict | None = None  # (key tuple, column name) -> source URI
    _text_token_sample: frozenset | None = field(default=None, repr=False, compare=False)

    @property
    def schema(self) -> Schema:
        return self.table.schema

    def text_token_sample(self, cap: int = 512) -> frozenset:
        """Distinct non-stopword tokens drawn from text cells, capped for
        routing use. Deterministic: rows scanned in storage order."""
        if self._text_token_sample is None:
            text_cols = [
                i for i, (_, t) in enumerate(self.schema.columns) if t is ValueType.TEXT
            ]
            sample: set[str] = set()
            for row in self.table.rows:
                for i in text_cols:
                    if isinstance(row[i], str):
                        for tok in tokenize(row[i]):
                            if tok not in STOPWORDS:
                                sample.add(tok)
                if len(sample) >= cap:
                    break
            self._text_token_sample = frozenset(sample)
        return self._text_token_sample


@dataclass(frozen=True)
class TupleId:
    """A (view, key) reference resolvable to exactly one row."""

    view: str
    key: tuple

    def order_key(self) -> tuple:
        return (self.view, tuple(sort_key(v) for v in self.key))

    def __str__(self) -> str:
        return f"{self.view}{format_key(self.key)}"


class Catalog:
    """Registry of named, described views. Append-only during a session."""

    def __init__(self) -> None:
        self._views: dict[str, View] = {}
        self._indexes: dict[str, dict] = {}

    def register_view(self, name, description, table, cell_links=None) -> None:
        if not description or not description.strip():
            raise CatalogError(f"view {name!r} needs a nonempty description")
        lowered = name.lower()
        if lowered in self._views:
            raise CatalogError(f"duplicate view name {name!r}")
        table.validate()
        index = {table.key_of(row): row for row in table.rows}
        if cell_links:
            names = {n.lower() for n in table.schema.column_names()}
            for key, column in cell_links:
                if key not in index:
                    raise CatalogError(f"cell link references missing row {format_key(key)}")
                if column.lower() not in names:
                    raise CatalogError(f"cell link references missing column {column!r}")
        view = View(name=name, description=description, table=table, cell_links=cell_links)
        self._views[lowered] = view
        self._indexes[lowered] = index

    def view_names(self) -> list[str]:
        return sorted(v.name for v in self._views.values())

    def views(self) -> list[View]:
        return [self._views[n.lower()] for n in self.view_names()]

    def has_view(self, name: str) -> bool:
        return name.lower() in self._views

    def view(self, name: str) -> View:
        try:
            return self._views[name.lower()]
        except KeyError:
            raise CatalogError(f"unknown view {name!r}") from None

    def primary_key_columns(self, view_name: str) -> list[str]:
        return list(self.view(view_name).schema.key)

    def resolve(self, tuple_id: TupleId) -> Row:
        view = self.view(tuple_id.view)
        index = self._indexes[view.name.lower()]
        expected = len(view.schema.key)
        if len(tuple_id.key) != expected:
            raise CatalogError(
                f"key arity mismatch for {tuple_id.view!r}: "
                f"got {len(tuple_id.key)}, expected {expected}"
            )
        try:
            return index[tuple_id.key]
        except KeyError:
            raise CatalogError(
                f"dangling key {format_key(tuple_id.key)} in view {tuple_id.view!r}"
            ) from None


def load_sidecar(path) -> tuple[Schema, str]:
    """Read a schema sidecar JSON: columns, key, and the view description."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogError(f"cannot read schema sidecar {path}: {exc}") from exc
    try:
        columns = tuple((c["name"], ValueType(c["type"])) for c in spec["columns"])
        key = tuple(spec["key"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"malformed schema sidecar {path}: {exc}") from exc
    return Schema(columns=columns, key=key), spec.get("description", "")


def load_table(path, schema_sidecar) -> SourceTable:
    """Load a typed table from a CSV file plus its schema sidecar.

    The CSV must be RFC-4180 with a header row; cells are coerced to the
    sidecar's declared types, empty cells to NULL. All schema invariants
    (arity, types, key uniqueness) are validated before returning.
    """
    schema, _ = load_sidecar(schema_sidecar)
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CatalogError(f"{path}: missing header row") from None
            expected = schema.column_names()
            if [h.lower() for h in header] != [c.lower() for c in expected]:
                raise CatalogError(
                    f"{path}: header {header} does not match schema columns {expected}"
                )
            rows = []
            for rownum, raw in enumerate(reader, start=1):
                if len(raw) != len(expected):
                    raise CatalogError(
                        f"{path}: row {rownum} has {len(raw)} cells, expected {len(expected)}"
                    )
                row = []
                for (colname, vtype), cell in zip(schema.columns, raw):
                    try:
                        row.append(coerce_value(cell, vtype))
                    except ValueError as exc:
                        raise CatalogError(
                            f"{path}: row {rownum}, column {colname!r}: {exc}"
                        ) from None
                rows.append(tuple(row))
    except OSError as exc:
        raise CatalogError(f"cannot read {path}: {exc}") from exc
    table = SourceTable(name=path.stem, schema=schema, rows=rows)
    table.validate()
    return table


def load_manifest(path) -> Catalog:
    """Build a catalog from a manifest JSON listing view files.

    Manifest shape: {"views": [{"name", "table", "schema"}]}, with file paths
    relative to the manifest's directory.
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    catalog = Catalog()
    for entry in manifest.get("views", []):
        try:
            name = entry["name"]
            csv_path = base / entry["table"]
            sidecar_path = base / entry["schema"]
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed manifest entry {entry!r}: {exc}") from exc
        table = load_table(csv_path, sidecar_path)
        table.name = name
        _, description = load_sidecar(sidecar_path)
        catalog.register_view(name, description, table)
    return catalog
