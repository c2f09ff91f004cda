"""Stability and max-frequency recursions, frozen against hand derivations."""

import numpy as np
import pytest

from flexdp import (
    Aliased,
    AttrRef,
    BOTTOM,
    Count,
    CountGrouped,
    Join,
    MetricsStore,
    Project,
    Select,
    Table,
    UnsupportedQuery,
    elastic_sensitivity,
    elastic_stability,
    join_count,
    mf_at_distance,
    parse_query,
    sensitivity_log_profile,
)

from _support import TRIANGLE_SQL, triangle_catalog, triangle_metrics

EDGES = Table("edges", "edges", ("source", "dest"))
METRICS = triangle_metrics()  # mf(source) = mf(dest) = 65


def triangle_query():
    return parse_query(TRIANGLE_SQL, triangle_catalog())


def test_base_table_stability():
    assert elastic_stability(EDGES, 0, METRICS) == 1
    assert elastic_stability(EDGES, 7, METRICS) == 1


def test_public_table_stability_is_zero():
    public = triangle_metrics()
    public = MetricsStore(
        mf=public.mf, public_tables=frozenset({"edges"}), row_counts=public.row_counts
    )
    assert elastic_stability(EDGES, 0, public) == 0


def test_filters_and_projections_pass_through():
    q = parse_query(
        "SELECT COUNT(*) FROM edges WHERE source = 1", triangle_catalog()
    )
    assert elastic_sensitivity(q, 3, METRICS) == 1


def test_mf_inflates_with_distance():
    # one replaced tuple can add one occurrence of the heaviest value
    for k in (0, 1, 10):
        assert mf_at_distance(AttrRef("edges", "dest"), EDGES, k, METRICS) == 65 + k


def test_mf_public_table_does_not_inflate():
    m = MetricsStore(
        mf=METRICS.mf, public_tables=frozenset({"edges"}), row_counts=METRICS.row_counts
    )
    assert mf_at_distance(AttrRef("edges", "dest"), EDGES, 9, m) == 65


def test_mf_through_join_multiplies_by_matching_key():
    # joining edges e1 to e2 on e1.dest = e2.source: each of the up-to
    # (65+k) rows holding e2's heaviest dest value matches up to (65+k)
    # rows of e1, so the joined frequency bound is the product
    q = parse_query(
        "SELECT COUNT(*) FROM edges e1 JOIN edges e2 ON e1.dest = e2.source",
        triangle_catalog(),
    )
    j = q.input
    for k in (0, 1, 5):
        got = mf_at_distance(AttrRef("e2", "dest"), j, k, METRICS)
        assert got == (65 + k) * (65 + k)


def test_mf_of_aggregate_output_is_bottom():
    c = Count(EDGES, label="n")
    assert mf_at_distance(AttrRef(None, "n"), c, 0, METRICS) is BOTTOM


def test_self_join_stability_first_triangle_join():
    # both inputs are the edges table, so a replaced edge can appear on
    # either side or pair with itself:
    #   mf_k(e1.dest)*S(e2) + mf_k(e2.source)*S(e1) + S(e1)*S(e2)
    # = (65+k) + (65+k) + 1 = 131 + 2k
    q = parse_query(
        "SELECT COUNT(*) FROM edges e1 JOIN edges e2 ON e1.dest = e2.source",
        triangle_catalog(),
    )
    for k in range(0, 20):
        assert elastic_sensitivity(q, k, METRICS) == 131 + 2 * k


def test_full_triangle_stability():
    # outer join: (e1 join e2) with e3, again a self join.
    #   mf_k(e2.dest, e1 join e2) = (65+k)^2   (product through the join)
    #   mf_k(e3.source, e3)       = 65+k
    #   S(e1 join e2) = 131+2k, S(e3) = 1
    # total = (65+k)^2 + (65+k)(131+2k) + (131+2k) = 3k^2 + 393k + 12871
    q = triangle_query()
    for k in (0, 1, 2, 10, 100):
        expected = 3 * k * k + 393 * k + 12871
        assert elastic_sensitivity(q, k, METRICS) == expected
    assert elastic_sensitivity(q, 0, METRICS) == 12871


def test_non_self_join_takes_max():
    catalog_cols = {"users": ("id", "dept"), "orders": ("uid", "item")}
    m = MetricsStore(
        mf={
            ("users", "id"): 3,
            ("users", "dept"): 50,
            ("orders", "uid"): 7,
            ("orders", "item"): 9,
        },
        public_tables=frozenset(),
        row_counts={"users": 100, "orders": 100},
    )
    from flexdp import Catalog

    q = parse_query(
        "SELECT COUNT(*) FROM users u JOIN orders o ON u.id = o.uid",
        Catalog(columns=catalog_cols),
    )
    # max(mf_k(u.id)*S(o), mf_k(o.uid)*S(u)) = max(3+k, 7+k) = 7+k
    for k in (0, 1, 4):
        assert elastic_sensitivity(q, k, m) == 7 + k


def test_private_join_public_reduces_to_public_mf():
    from flexdp import Catalog

    m = MetricsStore(
        mf={
            ("edges", "source"): 65,
            ("edges", "dest"): 65,
            ("zips", "zip"): 4,
            ("zips", "city"): 9,
        },
        public_tables=frozenset({"zips"}),
        row_counts={"edges": 1000, "zips": 50},
    )
    catalog = Catalog(
        columns={"edges": ("source", "dest"), "zips": ("zip", "city")},
        public_tables=frozenset({"zips"}),
    )
    q = parse_query(
        "SELECT COUNT(*) FROM edges e JOIN zips z ON e.dest = z.zip", catalog
    )
    # S(zips) = 0 kills one branch; the other is mf(z.zip) * S(edges) with
    # no +k inflation on the public side
    for k in (0, 1, 50):
        assert elastic_sensitivity(q, k, m) == 4


def test_all_public_query_has_zero_sensitivity():
    m = MetricsStore(
        mf=METRICS.mf,
        public_tables=frozenset({"edges"}),
        row_counts=METRICS.row_counts,
    )
    q = triangle_query()
    assert elastic_sensitivity(q, 5, m) == 0


def test_grouped_count_doubles():
    q_plain = parse_query(
        "SELECT COUNT(*) FROM edges e1 JOIN edges e2 ON e1.dest = e2.source",
        triangle_catalog(),
    )
    q_grouped = parse_query(
        "SELECT e1.source, COUNT(*) FROM edges e1 "
        "JOIN edges e2 ON e1.dest = e2.source GROUP BY e1.source",
        triangle_catalog(),
    )
    for k in (0, 3):
        assert elastic_sensitivity(q_grouped, k, METRICS) == 2 * elastic_sensitivity(
            q_plain, k, METRICS
        )


def test_join_on_aggregate_key_rejected_at_analysis():
    # the parser refuses this shape too; build the tree directly to check
    # the analysis defends itself as well
    counted = Aliased(Count(EDGES, label="n"), "a")
    bad = Join(counted, EDGES, AttrRef("a", "n"), AttrRef("edges", "source"))
    with pytest.raises(UnsupportedQuery, match="a.n"):
        elastic_stability(bad, 0, METRICS)


def test_distance_must_be_non_negative_int():
    q = triangle_query()
    with pytest.raises(ValueError):
        elastic_sensitivity(q, -1, METRICS)
    with pytest.raises(ValueError):
        elastic_sensitivity(q, 1.5, METRICS)


def test_join_count():
    assert join_count(triangle_query()) == 2
    assert join_count(parse_query("SELECT COUNT(*) FROM edges", triangle_catalog())) == 0


def test_log_profile_matches_exact_recursion():
    q = triangle_query()
    ks = np.arange(0, 300, dtype=float)
    logs = sensitivity_log_profile(q, ks, METRICS)
    exact = np.array(
        [float(elastic_sensitivity(q, int(k), METRICS)) for k in ks]
    )
    np.testing.assert_allclose(np.exp(logs), exact, rtol=1e-12)


def test_log_profile_grouped_and_public():
    catalog = triangle_catalog()
    grouped = parse_query(
        "SELECT source, COUNT(*) FROM edges GROUP BY source", catalog
    )
    ks = np.array([0.0, 2.0])
    np.testing.assert_allclose(
        np.exp(sensitivity_log_profile(grouped, ks, METRICS)), [2.0, 2.0]
    )
    public = MetricsStore(
        mf=METRICS.mf, public_tables=frozenset({"edges"}), row_counts=METRICS.row_counts
    )
    q = triangle_query()
    assert np.all(np.isneginf(sensitivity_log_profile(q, ks, public)))
