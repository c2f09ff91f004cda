"""Relational algebra core for counting queries.

The sensitivity analysis operates on a small relational algebra rather than
on SQL text: base tables, equijoins (with optional residual filters),
projection, selection, and counting (plain or grouped). A query is a tree of
the node types defined here; the SQL front end in ``flexdp.parser`` produces
these trees.

Example::

    t = Table("edges", "e1", ("source", "dest"))
    q = Count(t)
    ancestors(q)            # frozenset({'edges'})

Attribute references are kept as written in the query (optional qualifier
plus column name). ``scope_of`` computes the attributes visible at each node
together with their provenance, and ``resolve_attribute`` reduces a reference
to either the base-table column it names or the marker ``DERIVED`` when the
value passes through an aggregation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

from .errors import UnresolvedAttribute, UnsupportedQuery


@dataclass(frozen=True)
class AttrRef:
    """An attribute reference as written in a query, e.g. ``e1.dest`` or ``city``."""

    qualifier: Optional[str]
    name: str

    @classmethod
    def parse(cls, text: str) -> "AttrRef":
        if "." in text:
            qualifier, name = text.split(".", 1)
            return cls(qualifier, name)
        return cls(None, text)

    def __str__(self) -> str:
        if self.qualifier:
            return "%s.%s" % (self.qualifier, self.name)
        return self.name


@dataclass(frozen=True)
class BaseColumn:
    """Provenance of an attribute that traces to a base-table column."""

    table: str
    column: str

    def __str__(self) -> str:
        return "%s.%s" % (self.table, self.column)


class _DerivedType:
    """Provenance marker for attributes produced by an aggregation."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "DERIVED"


DERIVED = _DerivedType()

Provenance = Union[BaseColumn, _DerivedType]

# Literal values allowed in predicates.
Literal = Union[int, str]


@dataclass(frozen=True)
class Comparison:
    """A single comparison ``left op right``; ``right`` may be a literal."""

    left: AttrRef
    op: str  # one of = != < <= > >=
    right: Union[AttrRef, int, str]

    def __str__(self) -> str:
        right = self.right if isinstance(self.right, AttrRef) else repr(self.right)
        return "%s %s %s" % (self.left, self.op, right)


# A predicate is a conjunction of comparisons.
Predicate = tuple


@dataclass(frozen=True)
class Table:
    """A base-table reference.

    ``name`` is the stored table (used for self-join detection); ``alias`` is
    the qualifier attribute references use, which defaults to the name. The
    column tuple is copied out of the catalog so trees are self-contained.
    """

    name: str
    alias: str
    columns: tuple

    def __str__(self) -> str:
        if self.alias != self.name:
            return "%s AS %s" % (self.name, self.alias)
        return self.name


@dataclass(frozen=True)
class Join:
    """An equijoin on ``key_left = key_right`` with an optional residual filter.

    The residual holds every conjunct of the original join condition other
    than the chosen equijoin term; it is applied to the joined rows and, like
    an ordinary selection, never increases stability.
    """

    left: "RelExpr"
    right: "RelExpr"
    key_left: AttrRef
    key_right: AttrRef
    residual: tuple = ()


@dataclass(frozen=True)
class Project:
    """Projection onto a subset of the input's attributes (no renaming)."""

    attrs: tuple
    input: "RelExpr"


@dataclass(frozen=True)
class Select:
    """Selection by a conjunction of comparisons."""

    predicate: tuple
    input: "RelExpr"


@dataclass(frozen=True)
class Aliased:
    """A named subquery reference: the input's attributes requalified under one alias.

    Structurally this is a projection that renames qualifiers, so every
    analysis treats it as a pass-through.
    """

    input: "RelExpr"
    alias: str


@dataclass(frozen=True)
class Count:
    """A plain count of the input's rows. Output is one attribute, ``label``."""

    input: "RelExpr"
    label: str = "count"


@dataclass(frozen=True)
class CountGrouped:
    """A grouped count: one output row per distinct grouping-key value."""

    group_attrs: tuple
    input: "RelExpr"
    label: str = "count"


RelExpr = Union[Table, Join, Project, Select, Aliased, Count, CountGrouped]


@dataclass(frozen=True)
class Catalog:
    """Schema information the parser validates queries against.

    Fields:
        columns: mapping from table name to its tuple of column names.
        public_tables: tables whose contents are not protected.
    """

    columns: dict
    public_tables: frozenset = frozenset()

    def __post_init__(self):
        for table, cols in self.columns.items():
            if not cols:
                raise ValueError("table %r has no columns" % table)
            if len(set(cols)) != len(cols):
                raise ValueError("table %r repeats a column name" % table)

    @property
    def tables(self):
        return frozenset(self.columns)


class ScopeEntry(NamedTuple):
    """One attribute visible at a node: qualifier, name, and provenance."""

    qualifier: Optional[str]
    name: str
    provenance: Provenance


@functools.lru_cache(maxsize=None)
def scope_of(r: RelExpr) -> tuple:
    """Return the attributes visible at ``r`` in evaluation (column) order.

    The order matches the tuple layout the evaluator produces for the node:
    a join exposes its left input's attributes followed by the right's, a
    projection the selected subset, and so on. Aggregations expose their
    grouping keys (re-marked as derived) and the count attribute.
    """
    if isinstance(r, Table):
        return tuple(
            ScopeEntry(r.alias, col, BaseColumn(r.name, col)) for col in r.columns
        )
    if isinstance(r, Join):
        return scope_of(r.left) + scope_of(r.right)
    if isinstance(r, Project):
        inner = scope_of(r.input)
        return tuple(_lookup(attr, inner) for attr in r.attrs)
    if isinstance(r, Select):
        return scope_of(r.input)
    if isinstance(r, Aliased):
        return tuple(
            ScopeEntry(r.alias, entry.name, entry.provenance)
            for entry in scope_of(r.input)
        )
    if isinstance(r, Count):
        return (ScopeEntry(None, r.label, DERIVED),)
    if isinstance(r, CountGrouped):
        inner = scope_of(r.input)
        keys = tuple(
            ScopeEntry(e.qualifier, e.name, DERIVED)
            for e in (_lookup(attr, inner) for attr in r.group_attrs)
        )
        return keys + (ScopeEntry(None, r.label, DERIVED),)
    raise TypeError("not a relational expression: %r" % (r,))


def _lookup(attr: AttrRef, scope: tuple) -> ScopeEntry:
    """Find the unique scope entry ``attr`` names, or raise UnresolvedAttribute."""
    if attr.qualifier is None:
        matches = [e for e in scope if e.name == attr.name]
    else:
        matches = [
            e for e in scope if e.qualifier == attr.qualifier and e.name == attr.name
        ]
    if not matches:
        raise UnresolvedAttribute("no attribute %s in scope" % attr)
    if len(matches) > 1:
        raise UnresolvedAttribute("ambiguous attribute %s" % attr)
    return matches[0]


def resolve_entry(attr: AttrRef, r: RelExpr) -> ScopeEntry:
    """Resolve ``attr`` to the unique scope entry it names within ``r``."""
    return _lookup(attr, scope_of(r))


def resolve_across(attr: AttrRef, relations) -> ScopeEntry:
    """Resolve ``attr`` against the concatenated scopes of several relations.

    Used for join conditions, where a bare column name must be unique
    across both inputs together, not merely within one side.
    """
    scope: tuple = ()
    for r in relations:
        scope = scope + scope_of(r)
    return _lookup(attr, scope)


def resolve_attribute(attr: AttrRef, r: RelExpr) -> Provenance:
    """Resolve ``attr`` against ``r`` and return its provenance.

    Returns:
        The BaseColumn the attribute traces to, or DERIVED if its value
        passes through an aggregation.

    Raises:
        UnresolvedAttribute: no unique attribute of that name is in scope.
    """
    return _lookup(attr, scope_of(r)).provenance


def attribute_index(attr: AttrRef, r: RelExpr) -> int:
    """Return the position of ``attr`` in ``r``'s output tuples."""
    scope = scope_of(r)
    return scope.index(_lookup(attr, scope))


def in_scope(attr: AttrRef, r: RelExpr) -> bool:
    """True when ``attr`` resolves uniquely within ``r``."""
    try:
        _lookup(attr, scope_of(r))
    except UnresolvedAttribute:
        return False
    return True


@functools.lru_cache(maxsize=None)
def ancestors(r: RelExpr) -> frozenset:
    """The set of base tables ``r`` reads from.

    Two join operands that share an ancestor constitute a self join, which
    the stability analysis must treat more conservatively than a join of
    unrelated relations.
    """
    if isinstance(r, Table):
        return frozenset((r.name,))
    if isinstance(r, Join):
        return ancestors(r.left) | ancestors(r.right)
    if isinstance(r, (Project, Select, Aliased)):
        return ancestors(r.input)
    if isinstance(r, (Count, CountGrouped)):
        return ancestors(r.input)
    raise TypeError("not a relational expression: %r" % (r,))


def is_self_join(j: Join) -> bool:
    """True when the join's operands share at least one base table."""
    return bool(ancestors(j.left) & ancestors(j.right))


def join_nodes(r: RelExpr):
    """Yield every Join node in ``r``, depth first."""
    if isinstance(r, Join):
        yield from join_nodes(r.left)
        yield from join_nodes(r.right)
        yield r
    elif isinstance(r, (Project, Select, Aliased, Count, CountGrouped)):
        yield from join_nodes(r.input)


def unwrap_root(q: RelExpr) -> RelExpr:
    """Strip projection and alias wrappers from the query root.

    A counting query may surface as a bare projection of a subquery's count
    attribute; the count node underneath is then the effective root.
    """
    while isinstance(q, (Project, Aliased)):
        q = q.input
    return q


def root_count(q: RelExpr) -> RelExpr:
    """Return the root Count/CountGrouped node, or raise UnsupportedQuery."""
    root = unwrap_root(q)
    if not isinstance(root, (Count, CountGrouped)):
        raise UnsupportedQuery(
            "outermost operation is not a count; only counting queries are supported"
        )
    return root
