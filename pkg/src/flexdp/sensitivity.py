"""Elastic stability and sensitivity of counting queries.

Local sensitivity at distance k asks: over all databases at most k tuple
replacements away from the actual one, how much can one further replacement
change the query result? Computing that exactly requires the data. The
recursion here bounds it from above using only per-column max-frequency
metrics, one number per column, by tracking how a single changed tuple can
propagate through joins:

* a base table has stability 1: one replaced tuple changes one row;
* joining two unrelated relations multiplies a changed tuple by the number
  of rows it can match, bounded by the other side's join-key max frequency
  at distance k;
* a self join additionally lets a change on each side interact with the
  other, so the two one-sided effects and their product all add;
* selections and projections pass stability through unchanged;
* a grouped count doubles stability, because a changed input row can leave
  one output group and enter another.

Max frequency at distance k inflates each private table's recorded max
frequency by k, since k replacements can pile k more copies onto the most
common value. Public tables are exempt: their contents are fixed, so their
stability is 0 and their max frequencies do not grow with k.

All stability arithmetic is exact (arbitrary-precision integers). A
vectorized natural-log variant is provided for the smoothing scan, which
needs the whole profile k = 0..k_max at once.
"""

from __future__ import annotations

from typing import Dict, Union

import numpy as np

from .errors import UnsupportedQuery
from .metrics import MetricsStore
from .relalg import (
    Aliased,
    AttrRef,
    BaseColumn,
    Count,
    CountGrouped,
    Join,
    Project,
    RelExpr,
    ScopeEntry,
    Select,
    Table,
    is_self_join,
    join_nodes,
    resolve_entry,
    root_count,
    scope_of,
)


class _BottomType:
    """Result marker for max frequencies the metrics cannot bound.

    Any attribute that passes through an aggregation has no usable max
    frequency; arithmetic with BOTTOM yields BOTTOM, and a join that needs
    such a frequency is rejected.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOTTOM"


BOTTOM = _BottomType()

MfValue = Union[int, _BottomType]


def _check_distance(k):
    if not isinstance(k, int) or isinstance(k, bool) or k < 0:
        raise ValueError("distance k must be a non-negative integer, got %r" % (k,))


def _mf(entry: ScopeEntry, r: RelExpr, k: int, m: MetricsStore, memo: Dict) -> MfValue:
    key = (id(r), entry)
    if key in memo:
        return memo[key]
    value = _mf_uncached(entry, r, k, m, memo)
    memo[key] = value
    return value


def _mf_uncached(entry, r, k, m, memo):
    if isinstance(r, Table):
        prov = entry.provenance
        assert isinstance(prov, BaseColumn)
        base = m.mf_of(prov.table, prov.column)
        if m.is_public(prov.table):
            return base
        return base + k
    if isinstance(r, Join):
        # the frequency of a value in the joined relation is its frequency on
        # its own side times the matches the other side's key can supply
        if entry in scope_of(r.left):
            own = _mf(entry, r.left, k, m, memo)
            other = _mf(resolve_entry(r.key_right, r.right), r.right, k, m, memo)
        else:
            own = _mf(entry, r.right, k, m, memo)
            other = _mf(resolve_entry(r.key_left, r.left), r.left, k, m, memo)
        if own is BOTTOM or other is BOTTOM:
            return BOTTOM
        return own * other
    if isinstance(r, (Project, Select)):
        return _mf(entry, r.input, k, m, memo)
    if isinstance(r, Aliased):
        idx = scope_of(r).index(entry)
        return _mf(scope_of(r.input)[idx], r.input, k, m, memo)
    if isinstance(r, (Count, CountGrouped)):
        return BOTTOM
    raise TypeError("not a relational expression: %r" % (r,))


def mf_at_distance(attr: AttrRef, r: RelExpr, k: int, m: MetricsStore) -> MfValue:
    """Upper-bound the max frequency of ``attr`` in ``r`` at distance k.

    Args:
        attr: an attribute visible in ``r``.
        r: the relation (any node of a query tree).
        k: how many tuple replacements away from the actual database.
        m: recorded metrics.

    Returns:
        An integer bound, or BOTTOM if the attribute passes through an
        aggregation and therefore has no metric-derived bound.
    """
    _check_distance(k)
    return _mf(resolve_entry(attr, r), r, k, m, {})


def _stability(r: RelExpr, k: int, m: MetricsStore, memo: Dict) -> int:
    cached = memo.get(id(r))
    if cached is not None:
        return cached
    value = _stability_uncached(r, k, m, memo)
    memo[id(r)] = value
    return value


def _stability_uncached(r, k, m, memo):
    if isinstance(r, Table):
        return 0 if m.is_public(r.name) else 1
    if isinstance(r, Join):
        s_left = _stability(r.left, k, m, memo)
        s_right = _stability(r.right, k, m, memo)
        mf_memo = {}
        mf_left = _mf(resolve_entry(r.key_left, r.left), r.left, k, m, mf_memo)
        mf_right = _mf(resolve_entry(r.key_right, r.right), r.right, k, m, mf_memo)
        if mf_left is BOTTOM:
            raise UnsupportedQuery(
                "join key %s has no max-frequency bound (aggregation input)"
                % r.key_left
            )
        if mf_right is BOTTOM:
            raise UnsupportedQuery(
                "join key %s has no max-frequency bound (aggregation input)"
                % r.key_right
            )
        if is_self_join(r):
            return mf_left * s_right + mf_right * s_left + s_left * s_right
        return max(mf_left * s_right, mf_right * s_left)
    if isinstance(r, (Project, Select, Aliased)):
        return _stability(r.input, k, m, memo)
    if isinstance(r, Count):
        return 1
    if isinstance(r, CountGrouped):
        return 2 * _stability(r.input, k, m, memo)
    raise TypeError("not a relational expression: %r" % (r,))


def elastic_stability(r: RelExpr, k: int, m: MetricsStore) -> int:
    """Exact integer stability bound of relation ``r`` at distance k.

    This bounds how many rows of ``r`` can change when one tuple of the
    underlying database is replaced, maximized over databases at distance
    up to k from the actual one.
    """
    _check_distance(k)
    return _stability(r, k, m, {})


def elastic_sensitivity(q: RelExpr, k: int, m: MetricsStore) -> int:
    """Sensitivity bound of a counting query at distance k.

    For a plain count the result can move by at most the stability of the
    counted relation. For a grouped count (histogram output, L1 distance)
    the bound doubles: a changed row can decrement one bin and increment
    another.

    Raises:
        UnsupportedQuery: the root is not a count, or a join key lacks a
            max-frequency bound.
    """
    _check_distance(k)
    root = root_count(q)
    inner = elastic_stability(root.input, k, m)
    if isinstance(root, CountGrouped):
        return 2 * inner
    return inner


def join_count(q: RelExpr) -> int:
    """Number of join nodes anywhere in the query."""
    return sum(1 for _ in join_nodes(q))


# ---------------------------------------------------------------------------
# Vectorized natural-log profile, used by the smoothing scan. The smoothing
# step needs the stability at every distance 0..k_max; recomputing the exact
# recursion once per k is wasteful and the values can exceed double range,
# so this variant evaluates ln of the same recursion for all k at once.
# Sums become logaddexp, products become sums, max stays max. Relative error
# is a few ulps per node, far inside the tolerance the scan needs.
# ---------------------------------------------------------------------------


def _log_mf(entry, r, ks, m, memo):
    key = (id(r), entry)
    if key in memo:
        return memo[key]
    if isinstance(r, Table):
        prov = entry.provenance
        base = float(m.mf_of(prov.table, prov.column))
        with np.errstate(divide="ignore"):
            if m.is_public(prov.table):
                value = np.full_like(ks, np.log(base) if base > 0 else -np.inf)
            else:
                value = np.log(base + ks)
    elif isinstance(r, Join):
        if entry in scope_of(r.left):
            own = _log_mf(entry, r.left, ks, m, memo)
            other = _log_mf(resolve_entry(r.key_right, r.right), r.right, ks, m, memo)
        else:
            own = _log_mf(entry, r.right, ks, m, memo)
            other = _log_mf(resolve_entry(r.key_left, r.left), r.left, ks, m, memo)
        if own is BOTTOM or other is BOTTOM:
            value = BOTTOM
        else:
            value = own + other
    elif isinstance(r, (Project, Select)):
        value = _log_mf(entry, r.input, ks, m, memo)
    elif isinstance(r, Aliased):
        idx = scope_of(r).index(entry)
        value = _log_mf(scope_of(r.input)[idx], r.input, ks, m, memo)
    elif isinstance(r, (Count, CountGrouped)):
        value = BOTTOM
    else:
        raise TypeError("not a relational expression: %r" % (r,))
    memo[key] = value
    return value


def _log_stability(r, ks, m, memo, mf_memo):
    cached = memo.get(id(r))
    if cached is not None:
        return cached
    if isinstance(r, Table):
        value = np.full_like(ks, 0.0 if not m.is_public(r.name) else -np.inf)
    elif isinstance(r, Join):
        s_left = _log_stability(r.left, ks, m, memo, mf_memo)
        s_right = _log_stability(r.right, ks, m, memo, mf_memo)
        mf_left = _log_mf(resolve_entry(r.key_left, r.left), r.left, ks, m, mf_memo)
        mf_right = _log_mf(resolve_entry(r.key_right, r.right), r.right, ks, m, mf_memo)
        if mf_left is BOTTOM:
            raise UnsupportedQuery(
                "join key %s has no max-frequency bound (aggregation input)"
                % r.key_left
            )
        if mf_right is BOTTOM:
            raise UnsupportedQuery(
                "join key %s has no max-frequency bound (aggregation input)"
                % r.key_right
            )
        if is_self_join(r):
            value = np.logaddexp(
                np.logaddexp(mf_left + s_right, mf_right + s_left),
                s_left + s_right,
            )
        else:
            value = np.maximum(mf_left + s_right, mf_right + s_left)
    elif isinstance(r, (Project, Select, Aliased)):
        value = _log_stability(r.input, ks, m, memo, mf_memo)
    elif isinstance(r, Count):
        value = np.zeros_like(ks)
    elif isinstance(r, CountGrouped):
        value = np.log(2.0) + _log_stability(r.input, ks, m, memo, mf_memo)
    else:
        raise TypeError("not a relational expression: %r" % (r,))
    memo[id(r)] = value
    return value


def sensitivity_log_profile(q: RelExpr, ks: np.ndarray, m: MetricsStore) -> np.ndarray:
    """ln of the query's sensitivity bound, evaluated at every distance in ``ks``.

    ``ks`` is a float array of distances. Matches ln(elastic_sensitivity)
    up to float round-off; -inf where the bound is 0 (all-public queries).
    """
    ks = np.asarray(ks, dtype=float)
    root = root_count(q)
    profile = _log_stability(root.input, ks, m, {}, {})
    if isinstance(root, CountGrouped):
        return np.log(2.0) + profile
    return profile
