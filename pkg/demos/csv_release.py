"""Walkthrough: private release of counts over CSV data, with a budget.

Builds a toy ride-sharing dataset on disk, collects exact metrics from it,
and releases a scalar count and a histogram under a shared privacy budget.
Everything is seeded, so reruns print identical numbers.

Run:  python3 demos/csv_release.py
"""

import tempfile
from pathlib import Path

from flexdp import (
    BudgetLedger,
    MicroDatabase,
    catalog_from_metrics,
    eval_query,
    make_params,
    parse_query,
    release_count,
    release_histogram,
    save_metrics,
    load_metrics,
)

TRIPS = """city,driver
a,d1
a,d1
a,d2
b,d2
b,d3
c,d3
"""


def main():
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "data"
        data.mkdir()
        (data / "trips.csv").write_text(TRIPS)

        db = MicroDatabase.from_csv_dir(str(data))
        metrics = db.exact_metrics()
        metrics_path = Path(tmp) / "metrics.txt"
        save_metrics(metrics, str(metrics_path))
        print("metrics collected from the data and persisted:")
        print(metrics_path.read_text())

        store = load_metrics(str(metrics_path))
        catalog = catalog_from_metrics(store)
        params = make_params(epsilon=0.5, delta=1e-6)
        ledger = BudgetLedger(max_epsilon=1.2, max_delta=1e-5)

        # 1) scalar count
        q1 = parse_query("SELECT COUNT(*) FROM trips WHERE city = 'a'", catalog)
        true1 = eval_query(q1, db)
        ledger.charge(params)
        r1 = release_count(float(true1), q1, store, params, seed=11)
        print("count of trips in city 'a': released %.3f" % r1.value)
        print(
            "  (noise scale %.1f from S=%.1f; seed %d; budget now %.2f/%.2f eps)"
            % (r1.noise_scale, r1.S, r1.seed, ledger.spent_epsilon, ledger.max_epsilon)
        )

        # 2) histogram over a public, fixed bin domain
        q2 = parse_query(
            "SELECT city, COUNT(*) FROM trips GROUP BY city", catalog
        )
        true2 = eval_query(q2, db)
        ledger.charge(params)
        r2 = release_histogram(true2, ["a", "b", "c", "d"], q2, store, params, seed=12)
        print("trips per city (note the noisy zero for the empty bin 'd'):")
        for label, value in r2.bins:
            print("  %-2s %8.3f" % (label, value))

        # 3) a third identical charge would exceed the 1.2 epsilon cap
        try:
            ledger.charge(params)
        except Exception as exc:
            print("third release refused: %s" % exc)


if __name__ == "__main__":
    main()
