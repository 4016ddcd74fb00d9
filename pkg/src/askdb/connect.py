"""Data ingestion and uniform, scope-enforced access to the relational store.

The reference backend is an embedded SQLite file; remote backends plug in
behind the same driver surface. All query-path entry points are read-only:
writes go through ingest_csv only.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import re
import sqlite3
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .errors import (
    CoercionError,
    ConnectionError_,
    ExecutionError,
    IngestError,
    PolicyError,
    SchemaError,
    ScopeError,
)

DIALECTS = ("embedded", "ansi", "postgres")

# Logical data types used throughout the engine.
STRING, NUMERIC, DATE, BOOLEAN = "string", "numeric", "date", "boolean"

_DECL_TO_LOGICAL = {
    "INTEGER": NUMERIC,
    "REAL": NUMERIC,
    "NUMERIC": NUMERIC,
    "TEXT": STRING,
    "DATE": DATE,
    "BOOLEAN": BOOLEAN,
}
_LOGICAL_TO_DECL = {NUMERIC: "REAL", STRING: "TEXT", DATE: "DATE", BOOLEAN: "BOOLEAN"}

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_BOOL_WORDS = {"true", "false", "t", "f", "yes", "no"}
_IDENT_RE = re.compile(r'"([^"]+)"|\b([A-Za-z_][A-Za-z0-9_]*)\b')


@dataclass(frozen=True)
class TableRef:
    connection_id: str
    name: str
    schema: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.schema}.{self.name}" if self.schema else self.name


@dataclass
class RowBatch:
    columns: list[tuple[str, str]]  # (name, logical data type)
    rows: list[tuple]
    truncated: bool = False

    def __post_init__(self):
        arity = len(self.columns)
        for row in self.rows:
            if len(row) != arity:
                raise ValueError(f"row arity {len(row)} != column arity {arity}")

    def column_values(self, name: str) -> list:
        idx = [c for c, _ in self.columns].index(name)
        return [r[idx] for r in self.rows]


@dataclass
class ConnectionSpec:
    id: str
    dialect: str = "embedded"
    location: str = ":memory:"
    # table name -> column list, or None meaning all columns of that table
    scope: Optional[dict[str, Optional[list[str]]]] = None

    def __post_init__(self):
        if self.dialect not in DIALECTS:
            raise ConnectionError_(f"unknown dialect {self.dialect!r}; expected one of {DIALECTS}")


def infer_column_type(values: Iterable[str]) -> str:
    """CSV inference: a column is numeric/date/boolean only when 100% of
    non-empty values parse; anything mixed stays text."""
    saw = False
    all_int = all_float = all_date = all_bool = True
    for v in values:
        if v is None or v == "":
            continue
        saw = True
        s = v.strip()
        if all_bool and s.lower() not in _BOOL_WORDS:
            all_bool = False
        if all_int and not _INT_RE.match(s):
            all_int = False
        if all_float and not _FLOAT_RE.match(s):
            all_float = False
        if all_date and not _DATE_RE.match(s):
            all_date = False
        if not (all_int or all_float or all_date or all_bool):
            return STRING
    if not saw:
        return STRING
    if all_bool:
        return BOOLEAN
    if all_int or all_float:
        return NUMERIC
    if all_date:
        return DATE
    return STRING


def _coerce(value: str, logical: str, column: str):
    if value is None or value == "":
        return None
    s = value.strip()
    if logical == NUMERIC:
        if _INT_RE.match(s):
            return int(s)
        if _FLOAT_RE.match(s):
            return float(s)
        raise CoercionError(f"value {value!r} is not numeric in column {column!r}", column)
    if logical == DATE:
        if not _DATE_RE.match(s):
            raise CoercionError(f"value {value!r} is not an ISO date in column {column!r}", column)
        return s
    if logical == BOOLEAN:
        if s.lower() not in _BOOL_WORDS:
            raise CoercionError(f"value {value!r} is not boolean in column {column!r}", column)
        return 1 if s.lower() in {"true", "t", "yes"} else 0
    return value


class Connection:
    """Handle over one embedded store, enforcing the spec's visibility scope.

    Shareable read-only after ingestion; each read opens its own sqlite
    connection so concurrent readers never share a cursor.
    """

    def __init__(self, spec: ConnectionSpec):
        self.spec = spec
        self._memory_conn: Optional[sqlite3.Connection] = None
        if spec.location == ":memory:":
            self._memory_conn = sqlite3.connect(":memory:")
        elif not Path(spec.location).parent.exists():
            raise ConnectionError_(f"location directory does not exist: {spec.location}")
        if spec.scope is not None:
            self._validate_scope()

    # -- low-level handles -------------------------------------------------

    def _write_conn(self) -> sqlite3.Connection:
        if self._memory_conn is not None:
            return self._memory_conn
        return sqlite3.connect(self.spec.location)

    def _read_conn(self) -> sqlite3.Connection:
        if self._memory_conn is not None:
            return self._memory_conn
        path = Path(self.spec.location)
        if not path.exists():
            raise ConnectionError_(f"store not found: {self.spec.location}")
        return sqlite3.connect(f"file:{path}?mode=ro", uri=True)

    def _maybe_close(self, conn: sqlite3.Connection) -> None:
        if conn is not self._memory_conn:
            conn.close()

    # -- schema ------------------------------------------------------------

    def _all_tables(self) -> list[str]:
        conn = self._read_conn()
        try:
            rows = conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' AND name NOT LIKE 'sqlite_%' ORDER BY name"
            ).fetchall()
        except sqlite3.Error as exc:
            raise ConnectionError_(f"cannot reach store: {exc}") from exc
        finally:
            self._maybe_close(conn)
        return [r[0] for r in rows]

    def _table_columns(self, table: str) -> list[tuple[str, str]]:
        conn = self._read_conn()
        try:
            info = conn.execute(f"PRAGMA table_info({_quote(table)})").fetchall()
        finally:
            self._maybe_close(conn)
        if not info:
            raise SchemaError(f"unknown table {table!r}")
        out = []
        for _, name, decl, *_rest in info:
            out.append((name, _DECL_TO_LOGICAL.get((decl or "TEXT").upper(), STRING)))
        return out

    def _validate_scope(self) -> None:
        existing = set(self._all_tables())
        for table, cols in (self.spec.scope or {}).items():
            if table not in existing:
                raise ScopeError(f"scoped table {table!r} does not exist")
            if cols is not None:
                if not cols:
                    raise ScopeError(f"scoped column list for {table!r} is empty")
                actual = {c for c, _ in self._table_columns(table)}
                missing = set(cols) - actual
                if missing:
                    raise ScopeError(f"scoped columns {sorted(missing)} missing from {table!r}")

    def visible_tables(self) -> list[str]:
        tables = self._all_tables()
        if self.spec.scope is None:
            return tables
        return [t for t in tables if t in self.spec.scope]

    def visible_columns(self, table: str) -> list[tuple[str, str]]:
        if self.spec.scope is not None and table not in self.spec.scope:
            raise SchemaError(f"table {table!r} is outside the connection scope")
        cols = self._table_columns(table)
        allowed = (self.spec.scope or {}).get(table) if self.spec.scope else None
        if allowed is None:
            return cols
        return [(c, t) for c, t in cols if c in allowed]

    def list_tables(self) -> list[tuple[TableRef, list[tuple[str, str]]]]:
        return [
            (TableRef(self.spec.id, t), self.visible_columns(t))
            for t in self.visible_tables()
        ]

    def table_ddl(self, table: str) -> str:
        conn = self._read_conn()
        try:
            row = conn.execute(
                "SELECT sql FROM sqlite_master WHERE type='table' AND name=?", (table,)
            ).fetchone()
        finally:
            self._maybe_close(conn)
        return row[0] if row and row[0] else ""

    def count_rows(self, table: str) -> int:
        if table not in self.visible_tables():
            raise SchemaError(f"table {table!r} is outside the connection scope")
        conn = self._read_conn()
        try:
            return conn.execute(f"SELECT COUNT(*) FROM {_quote(table)}").fetchone()[0]
        finally:
            self._maybe_close(conn)

    # -- ingestion ----------------------------------------------------------

    def ingest_csv(
        self,
        path: str | Path,
        table: TableRef,
        type_hints: Optional[dict[str, str]] = None,
    ) -> int:
        path = Path(path)
        if not path.exists():
            raise IngestError(f"file not found: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError("empty file: a header row is required", line=1) from None
            except csv.Error as exc:
                raise IngestError(f"malformed CSV: {exc}", line=1) from None
            header = [h.strip() for h in header]
            if any(not h for h in header) or len(set(header)) != len(header):
                raise IngestError("header must have unique, non-empty names", line=1)
            rows: list[list[str]] = []
            try:
                for lineno, row in enumerate(reader, start=2):
                    if not row:
                        continue
                    if len(row) != len(header):
                        raise IngestError(
                            f"expected {len(header)} fields, found {len(row)}", line=lineno
                        )
                    rows.append(row)
            except csv.Error as exc:
                raise IngestError(f"malformed CSV: {exc}", line=reader.line_num) from None

        hints = {k.lower(): v for k, v in (type_hints or {}).items()}
        logical: dict[str, str] = {}
        for i, col in enumerate(header):
            hinted = hints.get(col.lower())
            if hinted:
                if hinted not in _LOGICAL_TO_DECL and hinted != NUMERIC:
                    raise IngestError(f"unknown type hint {hinted!r} for column {col!r}")
                logical[col] = hinted
            else:
                logical[col] = infer_column_type(r[i] for r in rows)

        # Integer-valued numeric columns get INTEGER declarations.
        decls = []
        for i, col in enumerate(header):
            decl = _LOGICAL_TO_DECL[logical[col]]
            if logical[col] == NUMERIC and all(
                _INT_RE.match(r[i].strip()) for r in rows if r[i] not in (None, "")
            ):
                decl = "INTEGER"
            decls.append(decl)

        coerced = [
            tuple(_coerce(row[i], logical[col], col) for i, col in enumerate(header))
            for row in rows
        ]

        conn = self._write_conn()
        try:
            cols_sql = ", ".join(f"{_quote(c)} {d}" for c, d in zip(header, decls))
            conn.execute(f"DROP TABLE IF EXISTS {_quote(table.name)}")
            conn.execute(f"CREATE TABLE {_quote(table.name)} ({cols_sql})")
            if coerced:
                placeholders = ", ".join("?" * len(header))
                conn.executemany(
                    f"INSERT INTO {_quote(table.name)} VALUES ({placeholders})", coerced
                )
            conn.commit()
        finally:
            self._maybe_close(conn)
        return len(coerced)

    # -- sampling ------------------------------------------------------------

    def fetch_sample(
        self,
        table: TableRef | str,
        column: Optional[str | Sequence[str]] = None,
        max_rows: int = 100_000,
        seed: int = 0,
    ) -> RowBatch:
        """Seeded pseudo-random sample in hash order.

        Pure function of (table contents, seed, max_rows): rows are keyed by
        a salted content hash, so the same data yields the same batch on any
        backend, independent of physical row order.
        """
        if not 1 <= max_rows <= 1_000_000:
            raise ValueError("max_rows must be in [1, 1000000]")
        name = table.name if isinstance(table, TableRef) else table
        visible = dict(self.visible_columns(name))
        if column is None:
            selected = list(visible.items())
        else:
            wanted = [column] if isinstance(column, str) else list(column)
            for c in wanted:
                if c not in visible:
                    raise SchemaError(f"unknown column {c!r} in table {name!r}")
            selected = [(c, visible[c]) for c in wanted]
        col_sql = ", ".join(_quote(c) for c, _ in selected)
        salt = str(seed).encode()

        def key(row: tuple) -> bytes:
            return hashlib.blake2b(salt + repr(row).encode(), digest_size=16).digest()

        conn = self._read_conn()
        try:
            cursor = conn.execute(f"SELECT {col_sql} FROM {_quote(name)}")
            total = 0

            def tagged():
                nonlocal total
                for row in cursor:
                    total += 1
                    yield (key(row), row)

            picked = heapq.nsmallest(max_rows, tagged(), key=lambda kr: kr[0])
        finally:
            self._maybe_close(conn)
        return RowBatch(
            columns=selected,
            rows=[row for _, row in picked],
            truncated=total > max_rows,
        )

    # -- execution -----------------------------------------------------------

    def execute_sql(self, sql: str, row_limit: int = 10_000) -> RowBatch:
        """Run a single read-only statement, capped at row_limit rows."""
        _check_read_only(sql)
        if self.spec.scope is not None:
            self._check_scope_identifiers(sql)
        conn = self._read_conn()
        try:
            try:
                cursor = conn.execute(sql)
            except sqlite3.Error as exc:
                raise ExecutionError(str(exc)) from exc
            names = [d[0] for d in cursor.description or []]
            rows = cursor.fetchmany(row_limit)
            truncated = bool(cursor.fetchone()) if len(rows) == row_limit else False
        finally:
            self._maybe_close(conn)
        columns = [(n, _sniff_type(i, rows)) for i, n in enumerate(names)]
        return RowBatch(columns=columns, rows=[tuple(r) for r in rows], truncated=truncated)

    def _check_scope_identifiers(self, sql: str) -> None:
        scope = self.spec.scope or {}
        all_tables = set(self._all_tables())
        out_of_scope_tables = all_tables - set(scope)
        # Column names of scoped tables that were excluded from the scope.
        hidden_columns: set[str] = set()
        for table, allowed in scope.items():
            if allowed is not None:
                hidden_columns.update(
                    c for c, _ in self._table_columns(table) if c not in allowed
                )
        for match in _IDENT_RE.finditer(sql):
            ident = (match.group(1) or match.group(2)).lower()
            if ident in {t.lower() for t in out_of_scope_tables}:
                raise PolicyError(f"table {ident!r} is outside the connection scope")
            if ident in {c.lower() for c in hidden_columns}:
                raise PolicyError(f"column {ident!r} is outside the connection scope")


def _check_read_only(sql: str) -> None:
    stripped = re.sub(r"--[^\n]*|/\*.*?\*/", " ", sql, flags=re.S).strip()
    if not stripped:
        raise PolicyError("empty statement")
    body = stripped.rstrip(";")
    if ";" in body:
        raise PolicyError("multiple statements are not allowed")
    first = re.match(r"[A-Za-z]+", body)
    if not first or first.group(0).lower() not in {"select", "with", "explain"}:
        raise PolicyError(f"write or DDL statement rejected: {stripped.split()[0]!r}")


def _sniff_type(index: int, rows: list) -> str:
    for row in rows:
        v = row[index]
        if v is None:
            continue
        if isinstance(v, bool):
            return BOOLEAN
        if isinstance(v, (int, float)):
            return NUMERIC
        if isinstance(v, str) and _DATE_RE.match(v):
            return DATE
        return STRING
    return STRING


def _quote(ident: str) -> str:
    return '"' + ident.replace('"', '""') + '"'


def open_connection(spec: ConnectionSpec) -> Connection:
    return Connection(spec)
