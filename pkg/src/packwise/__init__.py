"""packwise: autoscaling decisions from clustered demand patterns.

Learn representative demand patterns from a workload trace, precompute a
near-optimal VM packing for each offline, and answer "how many machines,
which services where" online by similarity lookup.
"""

from .clustering import (
    ClusterModel,
    DegenerateModelError,
    Dendrogram,
    PatternAgglomerative,
    PatternKMeans,
    ahc,
    davies_bouldin,
    dunn,
    kmeans,
    select_k,
)
from .demand import DemandVector, demand_for_period, demand_from_values, demand_series
from .engine import (
    BuildError,
    ComparisonReport,
    MissPolicy,
    OfflineReport,
    PackingAutoscaler,
    SimulationReport,
    build_offline,
    evaluate_methods,
    run_online,
)
from .lookup import (
    FingerprintMismatchError,
    LookupEntry,
    LookupTable,
    MatchResult,
    MissBuffer,
    TableFormatError,
    catalog_fingerprint,
    load_table,
    match,
    pearson,
    save_table,
)
from .packing import (
    GaParams,
    PackingSolution,
    VmInstance,
    VmType,
    best_fit_pack,
    brute_force_pack,
    evaluate_genome,
    first_fit_pack,
    ga_pack,
    load_vm_catalog,
    save_vm_catalog,
    verify_solution,
)
from .workload import (
    ServiceCatalog,
    SyntheticSpec,
    TraceParseError,
    WorkloadTrace,
    generate_trace,
    load_catalog,
    load_trace,
    save_catalog,
    save_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BuildError",
    "ClusterModel",
    "ComparisonReport",
    "DegenerateModelError",
    "DemandVector",
    "Dendrogram",
    "FingerprintMismatchError",
    "GaParams",
    "LookupEntry",
    "LookupTable",
    "MatchResult",
    "MissBuffer",
    "MissPolicy",
    "OfflineReport",
    "PackingAutoscaler",
    "PackingSolution",
    "PatternAgglomerative",
    "PatternKMeans",
    "ServiceCatalog",
    "SimulationReport",
    "SyntheticSpec",
    "TableFormatError",
    "TraceParseError",
    "VmInstance",
    "VmType",
    "WorkloadTrace",
    "ahc",
    "best_fit_pack",
    "brute_force_pack",
    "build_offline",
    "catalog_fingerprint",
    "davies_bouldin",
    "demand_for_period",
    "demand_from_values",
    "demand_series",
    "dunn",
    "evaluate_genome",
    "evaluate_methods",
    "first_fit_pack",
    "ga_pack",
    "generate_trace",
    "kmeans",
    "load_catalog",
    "load_table",
    "load_trace",
    "load_vm_catalog",
    "match",
    "pearson",
    "run_online",
    "save_catalog",
    "save_table",
    "save_trace",
    "save_vm_catalog",
    "select_k",
    "verify_solution",
]
