"""Differentially private SQL counting queries via elastic sensitivity.

The pipeline: parse a counting query into relational algebra, bound its
sensitivity at every replacement distance using per-column max-frequency
metrics, smooth the bound, and release the true result with calibrated
Laplace noise. A brute-force oracle for tiny databases backs the bound with
ground truth.
"""

from .errors import (
    BudgetExhausted,
    EvaluationError,
    FlexError,
    FormatError,
    InvalidParams,
    InvalidScale,
    MissingColumn,
    MissingMetric,
    NegativeCount,
    ParseError,
    ProtectedBinLabels,
    TooLargeToEnumerate,
    UnknownBinLabel,
    UnknownColumn,
    UnknownTable,
    UnresolvedAttribute,
    UnsupportedQuery,
)
from .mechanism import (
    BudgetLedger,
    PrivacyParams,
    ReleaseResult,
    SmoothBound,
    budget_charge,
    laplace_inverse_cdf,
    laplace_sample,
    make_params,
    release_count,
    release_histogram,
    scan_limit,
    smooth_bound,
    smooth_scan,
)
from .metrics import (
    MetricsStore,
    catalog_from_metrics,
    collect_from_rows,
    load_metrics,
    metrics_collection_sql,
    save_metrics,
    validate_store,
)
from .oracle import (
    MicroDatabase,
    ball_size,
    column_max_frequency,
    eval_query,
    eval_rows,
    local_sensitivity_at,
    neighbors_at,
)
from .parser import parse_query
from .relalg import (
    DERIVED,
    Aliased,
    AttrRef,
    BaseColumn,
    Catalog,
    Comparison,
    Count,
    CountGrouped,
    Join,
    Project,
    RelExpr,
    ScopeEntry,
    Select,
    Table,
    ancestors,
    attribute_index,
    in_scope,
    is_self_join,
    join_nodes,
    resolve_attribute,
    resolve_entry,
    root_count,
    scope_of,
    unwrap_root,
)
from .sensitivity import (
    BOTTOM,
    elastic_sensitivity,
    elastic_stability,
    join_count,
    mf_at_distance,
    sensitivity_log_profile,
)

__version__ = "0.1.0"

__all__ = [
    "Aliased",
    "AttrRef",
    "BOTTOM",
    "BaseColumn",
    "BudgetExhausted",
    "BudgetLedger",
    "Catalog",
    "Comparison",
    "Count",
    "CountGrouped",
    "DERIVED",
    "EvaluationError",
    "FlexError",
    "FormatError",
    "InvalidParams",
    "InvalidScale",
    "Join",
    "MetricsStore",
    "MicroDatabase",
    "MissingColumn",
    "MissingMetric",
    "NegativeCount",
    "ParseError",
    "PrivacyParams",
    "Project",
    "ProtectedBinLabels",
    "RelExpr",
    "ReleaseResult",
    "ScopeEntry",
    "Select",
    "SmoothBound",
    "Table",
    "TooLargeToEnumerate",
    "UnknownBinLabel",
    "UnknownColumn",
    "UnknownTable",
    "UnresolvedAttribute",
    "UnsupportedQuery",
    "ancestors",
    "attribute_index",
    "ball_size",
    "budget_charge",
    "catalog_from_metrics",
    "collect_from_rows",
    "column_max_frequency",
    "elastic_sensitivity",
    "elastic_stability",
    "eval_query",
    "eval_rows",
    "in_scope",
    "is_self_join",
    "join_count",
    "join_nodes",
    "laplace_inverse_cdf",
    "laplace_sample",
    "load_metrics",
    "local_sensitivity_at",
    "make_params",
    "metrics_collection_sql",
    "mf_at_distance",
    "neighbors_at",
    "parse_query",
    "release_count",
    "release_histogram",
    "resolve_attribute",
    "resolve_entry",
    "root_count",
    "save_metrics",
    "scan_limit",
    "scope_of",
    "sensitivity_log_profile",
    "smooth_bound",
    "smooth_scan",
    "unwrap_root",
    "validate_store",
]
