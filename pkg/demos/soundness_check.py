"""Walkthrough: checking the analyzer against brute-force ground truth.

On a database small enough to enumerate, local sensitivity can be computed
exactly: try every database within k replacements, then every single further
replacement, and record the worst change in the query answer. The analyzer's
bound must dominate that number at every k. This is the same machinery the
`flexdp check` subcommand runs over a corpus directory.

The last section shows why the bound is conditional on honest metrics: feed
the analyzer an understated max frequency and the guarantee evaporates.

Run:  python3 demos/soundness_check.py
"""

from flexdp import (
    MetricsStore,
    MicroDatabase,
    ball_size,
    elastic_sensitivity,
    eval_query,
    local_sensitivity_at,
    parse_query,
)

SQL = "SELECT COUNT(*) FROM edges e1 JOIN edges e2 ON e1.dest = e2.source"


def main():
    db = MicroDatabase(
        tables={"edges": [(1, 2), (2, 3), (3, 1), (1, 3)]},
        columns={"edges": ("source", "dest")},
    )
    query = parse_query(SQL, db.catalog())
    metrics = db.exact_metrics()

    print("4 edges over 3 nodes; counting consecutive edge pairs")
    print("true result: %d" % eval_query(query, db))
    print(
        "metrics: mf(source)=%d mf(dest)=%d"
        % (metrics.mf[("edges", "source")], metrics.mf[("edges", "dest")])
    )
    print()

    print("   k   ball size   exact local sensitivity   analyzer bound   verdict")
    for k in (0, 1, 2):
        exact = local_sensitivity_at(query, db, k)
        bound = elastic_sensitivity(query, k, metrics)
        print(
            "  %2d   %9d   %23.0f   %14d   %s"
            % (k, ball_size(db, k), exact, bound, "ok" if bound >= exact else "VIOLATION")
        )
    print()
    print("the bound is loose (it assumes worst-case collisions) but safe.")
    print()

    # understate the metrics and the domination breaks
    lying = MetricsStore(
        mf={("edges", "source"): 1, ("edges", "dest"): 1},
        public_tables=frozenset(),
        row_counts=metrics.row_counts,
    )
    print("same query, but metrics claim mf=1 (the data reaches 2):")
    for k in (0, 1):
        exact = local_sensitivity_at(query, db, k)
        bound = elastic_sensitivity(query, k, lying)
        print(
            "  k=%d  exact %.0f  claimed bound %d  -> %s"
            % (k, exact, bound, "ok" if bound >= exact else "VIOLATION")
        )
    print()
    print("moral: collect metrics with the provided collection queries and")
    print("validate corpora with `flexdp check` before trusting releases.")


if __name__ == "__main__":
    main()
