"""Precomputed data-dependent metrics used by the sensitivity analysis.

The analysis never touches protected rows directly. It consumes a small
store of per-column maximum frequencies (the count of the most common value
in a column), per-table row counts, and the set of tables marked public.
Collecting a max frequency is itself a counting query, so the one-time
collection step can be run through the same private machinery or on the
database directly by the operator.

The store round-trips through a small INI-like text format::

    # anything after '#' is a comment
    [tables]
    edges = 5000

    [public]
    nodes

    [mf]
    edges.source = 65
    edges.dest = 65

Section order is free, whitespace around '=' is ignored, duplicate keys and
unknown section names are errors.
"""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

from .errors import FormatError, MissingColumn, MissingMetric, NegativeCount
from .relalg import Catalog

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class MetricsStore:
    """Max-frequency metrics, public-table flags, and row counts.

    Fields:
        mf: (table, column) -> max frequency of any single value.
        public_tables: tables whose rows are not protected.
        row_counts: table -> number of rows (used for the delta default).
    """

    mf: Dict[Tuple[str, str], int] = field(default_factory=dict)
    public_tables: frozenset = frozenset()
    row_counts: Dict[str, int] = field(default_factory=dict)

    def mf_of(self, table: str, column: str) -> int:
        try:
            return self.mf[(table, column)]
        except KeyError:
            raise MissingMetric(
                "no max-frequency metric recorded for %s.%s" % (table, column)
            ) from None

    def is_public(self, table: str) -> bool:
        return table in self.public_tables

    def total_rows(self) -> int:
        """Total protected database size across all tables."""
        return sum(self.row_counts.values())

    def tables(self) -> frozenset:
        return frozenset(self.row_counts) | frozenset(t for t, _ in self.mf)


def validate_store(store: MetricsStore):
    """Check cross-field consistency; raises FormatError/NegativeCount."""
    for table, count in store.row_counts.items():
        if count < 0:
            raise NegativeCount("row count for %s is negative" % table)
    for (table, column), value in store.mf.items():
        if value < 0:
            raise NegativeCount("mf for %s.%s is negative" % (table, column))
        rows = store.row_counts.get(table)
        if rows is not None:
            if value > rows:
                raise FormatError(
                    "mf for %s.%s exceeds the table row count (%d > %d)"
                    % (table, column, value, rows)
                )
            if rows > 0 and value == 0:
                raise FormatError(
                    "mf for %s.%s is 0 but the table is non-empty" % (table, column)
                )


def collect_from_rows(rows: Iterable[dict], column: str) -> int:
    """Compute the max frequency of ``column`` over in-memory rows.

    Args:
        rows: records as dictionaries.
        column: the column to profile.

    Returns:
        The multiplicity of the most frequent value; 0 for no rows.

    Raises:
        MissingColumn: some row lacks the column.
    """
    counts = Counter()
    for row in rows:
        if column not in row:
            raise MissingColumn("row lacks column %r" % column)
        counts[row[column]] += 1
    if not counts:
        return 0
    return max(counts.values())


def metrics_collection_sql(table: str, column: str, catalog: Optional[Catalog] = None) -> str:
    """Return the SQL statement that collects one max-frequency metric.

    The statement is meant to be run once, by the operator, against the
    live database. Identifiers are validated (and optionally checked against
    a catalog) so the template cannot be used for injection.
    """
    for name in (table, column):
        if not _IDENT_RE.match(name):
            raise FormatError("invalid identifier %r" % name)
    if catalog is not None:
        if table not in catalog.columns:
            raise FormatError("unknown table %r" % table)
        if column not in catalog.columns[table]:
            raise FormatError("unknown column %r in table %r" % (column, table))
    return (
        "SELECT COUNT(%(col)s) FROM %(table)s GROUP BY %(col)s "
        "ORDER BY count DESC LIMIT 1;" % {"col": column, "table": table}
    )


def load_metrics(path: str) -> MetricsStore:
    """Parse a metrics file into a MetricsStore.

    Raises:
        FormatError: malformed lines, unknown sections, duplicate keys, or
            inconsistent values (with the offending line number).
        NegativeCount: a negative row count or max frequency.
    """
    mf: Dict[Tuple[str, str], int] = {}
    public = set()
    row_counts: Dict[str, int] = {}
    section = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in ("tables", "public", "mf"):
                    raise FormatError("unknown section [%s]" % section, line=lineno)
                continue
            if section is None:
                raise FormatError("entry before any section header", line=lineno)
            if section == "public":
                if "=" in line:
                    raise FormatError(
                        "[public] entries are bare table names", line=lineno
                    )
                if line in public:
                    raise FormatError("duplicate public table %r" % line, line=lineno)
                public.add(line)
                continue
            if "=" not in line:
                raise FormatError("expected 'name = value'", line=lineno)
            key, _, value = (part.strip() for part in line.partition("="))
            try:
                number = int(value)
            except ValueError:
                raise FormatError(
                    "value for %r is not an integer: %r" % (key, value), line=lineno
                ) from None
            if number < 0:
                raise NegativeCount(
                    "negative count for %r: %d" % (key, number), line=lineno
                )
            if section == "tables":
                if key in row_counts:
                    raise FormatError("duplicate table %r" % key, line=lineno)
                row_counts[key] = number
            else:
                if "." not in key:
                    raise FormatError(
                        "[mf] keys are table.column, got %r" % key, line=lineno
                    )
                table, _, column = key.partition(".")
                if (table, column) in mf:
                    raise FormatError("duplicate mf key %r" % key, line=lineno)
                mf[(table, column)] = number
    store = MetricsStore(mf=mf, public_tables=frozenset(public), row_counts=row_counts)
    validate_store(store)
    return store


def save_metrics(store: MetricsStore, path: str):
    """Write ``store`` in the text format ``load_metrics`` reads."""
    lines = ["[tables]"]
    for table in sorted(store.row_counts):
        lines.append("%s = %d" % (table, store.row_counts[table]))
    lines.append("")
    lines.append("[public]")
    for table in sorted(store.public_tables):
        lines.append(table)
    lines.append("")
    lines.append("[mf]")
    for table, column in sorted(store.mf):
        lines.append("%s.%s = %d" % (table, column, store.mf[(table, column)]))
    lines.append("")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines))
    os.replace(tmp, path)


def catalog_from_metrics(store: MetricsStore) -> Catalog:
    """Build a parser catalog from the columns the store has metrics for."""
    columns: Dict[str, tuple] = {}
    for table, column in sorted(store.mf):
        columns.setdefault(table, ())
        columns[table] = columns[table] + (column,)
    return Catalog(columns=columns, public_tables=store.public_tables)
