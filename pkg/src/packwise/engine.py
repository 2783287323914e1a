"""End-to-end orchestration.

Offline: turn a historical trace into demand patterns, pick a cluster
count, cluster, pack every representative pattern with the GA, and
assemble the lookup table. Online: replay a trace period by period,
serving each from the table on a hit and from a fallback on a miss,
recycling missed patterns into new table entries once enough accumulate.
A comparison mode prices the same trace under the table pipeline,
per-period GA, both greedy baselines, and a static peak-sized
configuration.

All reports serialize deterministically (no wall-clock content); repeated
runs with the same seeds produce byte-identical files. Stage timings are
logged, not serialized.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .clustering import Dendrogram, ahc, kmeans, select_k
from .demand import DemandVector, demand_for_period, demand_from_values, demand_series
from .lookup import (
    FingerprintMismatchError,
    LookupEntry,
    LookupTable,
    MissBuffer,
    catalog_fingerprint,
    match,
)
from .packing import (
    GaParams,
    PackingSolution,
    best_fit_pack,
    brute_force_pack,
    first_fit_pack,
    ga_pack,
    verify_solution,
)
from .workload import ServiceCatalog, WorkloadTrace

log = logging.getLogger(__name__)

BRUTE_FORCE_SLOTS = 3


class BuildError(RuntimeError):
    """Offline table construction cannot complete."""


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _fmt_pattern(pattern) -> str:
    return ";".join(_fmt(v) for v in pattern)


@dataclass(frozen=True)
class OfflineReport:
    """What the offline build decided and how much each packing costs."""

    best_k: int
    index_rows: tuple          # (k, davies_bouldin, dunn) from the k-means sweep
    ahc_db_index: float | None
    ahc_dunn_index: float | None
    centroid_rows: tuple       # (index, pattern, ga, first_fit, best_fit, brute|None)
    dendrogram: Dendrogram
    timings: dict = field(compare=False, default_factory=dict)

    def to_csv(self, path) -> None:
        lines = [
            f"# best_k={self.best_k}",
            f"# ahc_davies_bouldin={_fmt(self.ahc_db_index) if self.ahc_db_index is not None else ''}"
            f" ahc_dunn={_fmt(self.ahc_dunn_index) if self.ahc_dunn_index is not None else ''}",
            "representative,pattern,ga_cost,first_fit_cost,best_fit_cost,brute_force_cost",
        ]
        for idx, pattern, ga, ff, bf, brute in self.centroid_rows:
            brute_s = _fmt(brute) if brute is not None else ""
            lines.append(
                f"{idx},{_fmt_pattern(pattern)},{_fmt(ga)},{_fmt(ff)},{_fmt(bf)},{brute_s}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    score: float
    hit: bool
    source: str            # table | fallback-greedy | fallback-nearest
    cost: float


@dataclass(frozen=True)
class SimulationReport:
    """Per-period replay decisions plus aggregates."""

    records: tuple
    hit_rate: float
    total_cost: float
    recluster_events: int
    live_violation_rate: float
    skipped_entries: int
    final_table: LookupTable = field(compare=False, repr=False, default=None)

    def to_csv(self, path) -> None:
        lines = [
            f"# hit_rate={_fmt(self.hit_rate)} total_cost={_fmt(self.total_cost)}"
            f" recluster_events={self.recluster_events}"
            f" live_violation_rate={_fmt(self.live_violation_rate)}"
            f" skipped_entries={self.skipped_entries}",
            "period,score,hit,source,cost",
        ]
        for r in self.records:
            lines.append(f"{r.period},{_fmt(r.score)},{int(r.hit)},{r.source},{_fmt(r.cost)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ComparisonReport:
    """Per-period cost of each provisioning method, plus column totals."""

    methods: tuple
    rows: tuple
    totals: tuple

    def to_csv(self, path) -> None:
        lines = ["period," + ",".join(self.methods)]
        for i, row in enumerate(self.rows):
            lines.append(f"{i}," + ",".join(_fmt(v) for v in row))
        lines.append("total," + ",".join(_fmt(v) for v in self.totals))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class MissPolicy:
    """How the online loop buffers misses and grows the table.

    incremental mode clusters only the buffered misses into
    ceil(buffer/10) new representatives (capped at the number of distinct
    buffered patterns) and appends them; full mode reruns cluster-count
    selection over existing representatives plus the buffer and rebuilds
    the table.
    """

    buffer_size: int = 20
    mode: str = "incremental"
    ga_params: GaParams = field(default_factory=GaParams)
    k_range: tuple = (2, 15)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("incremental", "full"):
            raise ValueError("mode must be 'incremental' or 'full'")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be >= 1")


def _pack_representatives(centroids, catalog, vm_catalog, ga_params, period_seconds,
                          on_infeasible="raise"):
    """GA-pack each centroid; returns (entries, row data, skipped count)."""
    entries, rows, skipped = [], [], 0
    for i, centroid in enumerate(centroids):
        dv = demand_from_values(centroid, catalog)
        params = replace(ga_params, seed=ga_params.seed + i)
        sol = ga_pack(dv, vm_catalog, params, period_seconds)
        if not sol.feasible:
            if on_infeasible == "raise":
                raise BuildError(
                    f"representative {i} (pattern {_fmt_pattern(centroid)}) "
                    f"has no feasible packing"
                )
            log.warning("skipping representative %d: no feasible packing", i)
            skipped += 1
            continue
        ff = first_fit_pack(dv, vm_catalog, period_seconds)
        bf = best_fit_pack(dv, vm_catalog, period_seconds)
        brute_cost = None
        if dv.service_count * BRUTE_FORCE_SLOTS <= 12:
            brute = brute_force_pack(dv, vm_catalog, BRUTE_FORCE_SLOTS, period_seconds)
            if brute.feasible:
                brute_cost = brute.total_cost
        entries.append(LookupEntry(pattern=centroid, solution=sol))
        rows.append((i, centroid, sol.total_cost, ff.total_cost, bf.total_cost, brute_cost))
    return entries, rows, skipped


def euclidean_default_threshold(centroids) -> float:
    """Distance-mode default: a quarter of the mean inter-centroid distance."""
    c = np.asarray(centroids, dtype=float)
    dists = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
    off = dists[~np.eye(len(c), dtype=bool)]
    if off.size == 0 or off.mean() == 0:
        raise BuildError("cannot derive a distance threshold from coincident centroids")
    return 0.25 * float(off.mean())


def build_offline(trace: WorkloadTrace, catalog: ServiceCatalog, vm_catalog,
                  k_range=(2, 15), ga_params: GaParams | None = None, *,
                  similarity: str = "pearson", threshold: float | None = None,
                  magnitude_ratio: float = 1.5, linkage: str = "ward",
                  seed: int = 0):
    """Construct the lookup table from a historical trace.

    Pipeline: demand series -> cluster-count selection -> k-means
    representatives (hierarchical clustering runs alongside for the
    dendrogram artifact) -> GA packing per representative. Any
    representative without a feasible packing aborts the build: the table
    must only ever serve feasible configurations.

    Returns (LookupTable, OfflineReport).
    """
    timings = {}
    t0 = time.perf_counter()
    series = demand_series(trace, catalog)
    patterns = np.vstack([dv.values for dv in series])
    timings["demand"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    best_k, index_rows = select_k(patterns, k_range, seed=seed)
    model = kmeans(patterns, best_k, seed=seed + best_k)
    ahc_model, dendrogram = ahc(patterns, best_k, linkage=linkage)
    timings["clustering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    gp = ga_params or GaParams()
    entries, centroid_rows, _ = _pack_representatives(
        model.centroids, catalog, vm_catalog, gp, trace.period_seconds,
        on_infeasible="raise")
    timings["packing"] = time.perf_counter() - t0

    if threshold is None:
        threshold = 0.7 if similarity == "pearson" \
            else euclidean_default_threshold(model.centroids)
    table = LookupTable(
        entries=tuple(entries),
        similarity=similarity,
        threshold=threshold,
        magnitude_ratio=magnitude_ratio,
        fingerprint=catalog_fingerprint(catalog, vm_catalog),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    report = OfflineReport(
        best_k=best_k,
        index_rows=tuple(index_rows),
        ahc_db_index=ahc_model.db_index,
        ahc_dunn_index=ahc_model.dunn_index,
        centroid_rows=tuple(centroid_rows),
        dendrogram=dendrogram,
        timings=timings,
    )
    log.info("offline build: %s", " ".join(f"{k}={v:.2f}s" for k, v in timings.items()))
    return table, report


def _check_fingerprint(table: LookupTable, catalog, vm_catalog) -> None:
    if table.fingerprint != catalog_fingerprint(catalog, vm_catalog):
        raise FingerprintMismatchError("table was built for different catalogs")


def _recluster(table, buffer, catalog, vm_catalog, policy, period_seconds, event):
    """Grow (or rebuild) the table from the buffered miss patterns."""
    buffered = np.vstack(buffer.patterns)
    if policy.mode == "incremental":
        distinct = np.unique(buffered, axis=0).shape[0]
        k_new = min(math.ceil(len(buffer) / 10), distinct)
        model = kmeans(buffered, k_new, seed=policy.seed + 1000 * event)
        gp = replace(policy.ga_params, seed=policy.ga_params.seed + 1000 * event)
        entries, _, skipped = _pack_representatives(
            model.centroids, catalog, vm_catalog, gp, period_seconds,
            on_infeasible="skip")
        return table.extended(entries), skipped
    union = np.vstack([np.vstack([e.pattern for e in table.entries]), buffered])
    hi = min(policy.k_range[1], union.shape[0] - 1)
    lo = min(policy.k_range[0], hi)
    best_k, _ = select_k(union, (lo, hi), seed=policy.seed + 1000 * event)
    model = kmeans(union, best_k, seed=policy.seed + 1000 * event + best_k)
    gp = replace(policy.ga_params, seed=policy.ga_params.seed + 1000 * event)
    entries, _, skipped = _pack_representatives(
        model.centroids, catalog, vm_catalog, gp, period_seconds,
        on_infeasible="skip")
    if not entries:
        log.warning("full recluster produced no feasible entries; keeping old table")
        return table, skipped
    return table.replaced(entries), skipped


def run_online(table: LookupTable, online_trace: WorkloadTrace,
               catalog: ServiceCatalog, vm_catalog,
               fallback_policy: str = "greedy",
               miss_policy: MissPolicy | None = None) -> SimulationReport:
    """Replay a trace against the table, one configuration per period.

    Hits serve the matched entry's configuration. Misses serve either a
    best-fit packing of the live demand (fallback_policy="greedy") or the
    best-scoring entry regardless of threshold ("nearest"), and are
    recorded in the miss buffer; a full buffer triggers reclustering per
    the miss policy and new entries extend the table for subsequent
    periods.

    Table-sourced configurations are feasible for their representative by
    construction; each emitted configuration is additionally checked
    against the live period demand and mismatches are counted in
    live_violation_rate (logged, not fatal).
    """
    if fallback_policy not in ("greedy", "nearest"):
        raise ValueError("fallback_policy must be 'greedy' or 'nearest'")
    _check_fingerprint(table, catalog, vm_catalog)
    policy = miss_policy or MissPolicy()
    buffer = MissBuffer(capacity=policy.buffer_size)

    records = []
    hits = 0
    violations = 0
    events = 0
    skipped = 0
    total = 0.0
    for period, counts in enumerate(online_trace.counts):
        dv = demand_for_period(counts, catalog)
        result = match(table, dv)
        if result.hit:
            solution, source = result.chosen, "table"
            hits += 1
        elif fallback_policy == "greedy":
            solution = best_fit_pack(dv, vm_catalog, online_trace.period_seconds)
            source = "fallback-greedy"
        else:
            solution = table.entries[result.best_index].solution
            source = "fallback-nearest"
        if not verify_solution(solution, dv):
            violations += 1
            log.warning("period %d: configuration from %s violates live demand",
                        period, source)
        total += solution.total_cost
        records.append(PeriodRecord(period, result.score, result.hit, source,
                                    solution.total_cost))
        if not result.hit:
            if buffer.record(dv.values):
                events += 1
                table, newly_skipped = _recluster(
                    table, buffer, catalog, vm_catalog, policy,
                    online_trace.period_seconds, events)
                skipped += newly_skipped
                buffer.clear()

    n = len(records)
    return SimulationReport(
        records=tuple(records),
        hit_rate=hits / n if n else 0.0,
        total_cost=total,
        recluster_events=events,
        live_violation_rate=violations / n if n else 0.0,
        skipped_entries=skipped,
        final_table=table,
    )


def evaluate_methods(trace: WorkloadTrace, catalog: ServiceCatalog, vm_catalog,
                     table: LookupTable,
                     ga_params: GaParams | None = None) -> ComparisonReport:
    """Price every period under five provisioning methods.

    pipeline: table lookup with greedy fallback on misses (stateless; the
    buffer/reclustering machinery is left out of the comparison).
    per_period_ga: a fresh GA packing of each period (the offline-optimal
    reference). first_fit / best_fit: greedy packings per period.
    static_peak: one GA packing of the entrywise-maximum demand, reused
    every period.
    """
    _check_fingerprint(table, catalog, vm_catalog)
    if trace.n_periods == 0:
        raise ValueError("trace has no periods")
    gp = ga_params or GaParams()
    secs = trace.period_seconds

    peak_counts = trace.counts.max(axis=0)
    peak = ga_pack(demand_for_period(peak_counts, catalog), vm_catalog,
                   replace(gp, seed=gp.seed + 10_000), secs)

    rows = []
    for i, counts in enumerate(trace.counts):
        dv = demand_for_period(counts, catalog)
        result = match(table, dv)
        pipeline = result.chosen if result.hit else best_fit_pack(dv, vm_catalog, secs)
        per_ga = ga_pack(dv, vm_catalog, replace(gp, seed=gp.seed + i), secs)
        rows.append((
            pipeline.total_cost,
            per_ga.total_cost,
            first_fit_pack(dv, vm_catalog, secs).total_cost,
            best_fit_pack(dv, vm_catalog, secs).total_cost,
            peak.total_cost,
        ))
    totals = tuple(float(s) for s in np.array(rows).sum(axis=0))
    return ComparisonReport(
        methods=("pipeline", "per_period_ga", "first_fit", "best_fit", "static_peak"),
        rows=tuple(rows),
        totals=totals,
    )


class PackingAutoscaler:
    """Estimator-style front door: fit on a historical trace, predict VM
    configurations for new demand.

    fit() runs the offline pipeline and stores the lookup table; predict()
    maps request-count rows to PackingSolutions by table match with greedy
    fallback (stateless). replay() runs the full online loop including
    miss recycling and returns the simulation report.
    """

    def __init__(self, k_range=(2, 15), similarity="pearson", threshold=None,
                 magnitude_ratio=1.5, fallback="greedy", miss_buffer_size=20,
                 linkage="ward", ga_params=None, seed=0):
        self.k_range = k_range
        self.similarity = similarity
        self.threshold = threshold
        self.magnitude_ratio = magnitude_ratio
        self.fallback = fallback
        self.miss_buffer_size = miss_buffer_size
        self.linkage = linkage
        self.ga_params = ga_params
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {
            "k_range": self.k_range,
            "similarity": self.similarity,
            "threshold": self.threshold,
            "magnitude_ratio": self.magnitude_ratio,
            "fallback": self.fallback,
            "miss_buffer_size": self.miss_buffer_size,
            "linkage": self.linkage,
            "ga_params": self.ga_params,
            "seed": self.seed,
        }

    def set_params(self, **params):
        valid = self.get_params()
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, trace: WorkloadTrace, catalog: ServiceCatalog, vm_catalog):
        self.table_, self.report_ = build_offline(
            trace, catalog, vm_catalog,
            k_range=self.k_range,
            ga_params=self.ga_params,
            similarity=self.similarity,
            threshold=self.threshold,
            magnitude_ratio=self.magnitude_ratio,
            linkage=self.linkage,
            seed=self.seed,
        )
        self._catalog = catalog
        self._vm_catalog = vm_catalog
        self._period_seconds = trace.period_seconds
        return self

    def _decide(self, dv: DemandVector) -> PackingSolution:
        result = match(self.table_, dv)
        if result.hit:
            return result.chosen
        if self.fallback == "nearest":
            return self.table_.entries[result.best_index].solution
        return best_fit_pack(dv, self._vm_catalog, self._period_seconds)

    def predict(self, counts):
        """Configurations for one count row or a matrix of rows."""
        if not hasattr(self, "table_"):
            raise ValueError("autoscaler is not fitted")
        arr = np.asarray(counts)
        if arr.ndim == 1:
            return self._decide(demand_for_period(arr, self._catalog))
        return [self._decide(demand_for_period(row, self._catalog)) for row in arr]

    def replay(self, trace: WorkloadTrace) -> SimulationReport:
        if not hasattr(self, "table_"):
            raise ValueError("autoscaler is not fitted")
        policy = MissPolicy(buffer_size=self.miss_buffer_size,
                            ga_params=self.ga_params or GaParams(),
                            seed=self.seed)
        return run_online(self.table_, trace, self._catalog, self._vm_catalog,
                          fallback_policy=self.fallback, miss_policy=policy)
