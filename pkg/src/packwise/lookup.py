"""Pattern-to-configuration lookup table and similarity matching.

The table maps representative demand patterns to precomputed packing
solutions. An incoming pattern is scored against every entry; the best
entry is a hit when its score clears the threshold (>= for correlation,
<= for Euclidean distance). Misses accumulate in a buffer until enough
have piled up to justify reclustering.

Correlation is invariant to scale and shift, so two patterns with the
same shape but very different magnitudes correlate near 1 even though
they need very different machine counts. A configurable magnitude guard
(L1-norm ratio within [1/ratio, ratio]) closes that hole in correlation
mode; setting the ratio to infinity disables the guard. Euclidean mode
avoids the issue entirely.

Table files are versioned UTF-8 JSON tied to the catalogs they were built
from via a fingerprint hash.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demand import DemandVector
from .packing import PackingSolution, VmInstance, solution_cost
from .validation import as_float_vector
from .workload import ServiceCatalog

TABLE_VERSION = "packwise-table-v1"
SIMILARITIES = ("pearson", "euclidean")


class TableFormatError(ValueError):
    """Table file is corrupt, truncated, or has the wrong version."""


class FingerprintMismatchError(ValueError):
    """Table was built for different service/VM catalogs."""


def catalog_fingerprint(catalog: ServiceCatalog, vm_catalog) -> str:
    """Stable hash of the service catalog plus the VM catalog."""
    h = hashlib.sha256()
    h.update(f"services={catalog.service_count};dims={catalog.dimension_count}\n".encode())
    for row in catalog.unit_costs:
        h.update((",".join(repr(float(v)) for v in row) + "\n").encode())
    for t in vm_catalog:
        caps = ",".join(repr(float(c)) for c in t.capacity)
        h.update(f"{t.id}|{caps}|{t.hourly_cost!r}\n".encode())
    return h.hexdigest()


def pearson(a, b) -> float:
    """Sample Pearson correlation in [-1, 1].

    When either vector has zero variance the usual formula degenerates;
    the sentinel is 1.0 if the mean-centered vectors coincide (within
    1e-12) and 0.0 otherwise, so a constant never spuriously matches a
    varying pattern.
    """
    a = as_float_vector(a, "a")
    b = as_float_vector(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ValueError("correlation needs vectors of length >= 2")
    ca, cb = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt((ca ** 2).sum()), np.sqrt((cb ** 2).sum())
    if sa == 0.0 or sb == 0.0:
        return 1.0 if np.allclose(ca, cb, atol=1e-12) else 0.0
    # Identical (or negated) centered vectors score exactly +/-1; the
    # quotient below would land one ulp off for the self-match case.
    if np.array_equal(ca, cb):
        return 1.0
    if np.array_equal(ca, -cb):
        return -1.0
    r = float(ca @ cb / (sa * sb))
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class LookupEntry:
    """One table row: representative pattern -> feasible packing."""

    pattern: np.ndarray
    solution: PackingSolution

    def __post_init__(self):
        object.__setattr__(self, "pattern", as_float_vector(self.pattern, "pattern"))
        if not self.solution.feasible:
            raise ValueError("lookup entries require feasible solutions")


@dataclass(frozen=True)
class MatchResult:
    best_index: int
    score: float
    hit: bool
    chosen: PackingSolution | None


@dataclass(eq=False)
class LookupTable:
    """Ordered entries plus the matching policy they were built with.

    created_at is bookkeeping only: it is neither serialized nor part of
    table equality, so rebuilding with the same seed yields an equal
    table.
    """

    entries: tuple
    similarity: str = "pearson"
    threshold: float = 0.7
    magnitude_ratio: float = 1.5
    fingerprint: str = ""
    created_at: str | None = field(default=None, compare=False)

    def __post_init__(self):
        self.entries = tuple(self.entries)
        if not self.entries:
            raise ValueError("lookup table needs at least one entry")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.similarity == "pearson" and not -1.0 < self.threshold <= 1.0:
            raise ValueError("correlation threshold must lie in (-1, 1]")
        if self.similarity == "euclidean" and self.threshold <= 0:
            raise ValueError("distance threshold must be positive")
        if self.magnitude_ratio < 1.0:
            raise ValueError("magnitude_ratio must be >= 1 (inf disables the guard)")
        widths = {len(e.pattern) for e in self.entries}
        if len(widths) != 1:
            raise ValueError("entry patterns have inconsistent lengths")

    @property
    def service_count(self) -> int:
        return len(self.entries[0].pattern)

    def to_doc(self) -> dict:
        """JSON-ready document (the canonical on-disk representation)."""
        return {
            "version": TABLE_VERSION,
            "similarity": self.similarity,
            "threshold": self.threshold,
            "magnitude_ratio": None if math.isinf(self.magnitude_ratio) else self.magnitude_ratio,
            "fingerprint": self.fingerprint,
            "entries": [
                {
                    "pattern": [float(v) for v in e.pattern],
                    "instances": [
                        {
                            "type_id": inst.vm_type.id,
                            "assignment": [int(b) for b in inst.assignment],
                        }
                        for inst in e.solution.instances
                    ],
                    "cost": e.solution.total_cost,
                }
                for e in self.entries
            ],
        }

    def __eq__(self, other):
        if not isinstance(other, LookupTable):
            return NotImplemented
        return self.to_doc() == other.to_doc()

    def extended(self, new_entries) -> "LookupTable":
        """A new table with entries appended; tables are never mutated."""
        return LookupTable(
            entries=self.entries + tuple(new_entries),
            similarity=self.similarity,
            threshold=self.threshold,
            magnitude_ratio=self.magnitude_ratio,
            fingerprint=self.fingerprint,
            created_at=self.created_at,
        )

    def replaced(self, new_entries) -> "LookupTable":
        """A new table with entries replaced wholesale."""
        return LookupTable(
            entries=tuple(new_entries),
            similarity=self.similarity,
            threshold=self.threshold,
            magnitude_ratio=self.magnitude_ratio,
            fingerprint=self.fingerprint,
            created_at=self.created_at,
        )


def _magnitude_ok(incoming: np.ndarray, pattern: np.ndarray, ratio: float) -> bool:
    if math.isinf(ratio):
        return True
    ni, np_ = float(np.abs(incoming).sum()), float(np.abs(pattern).sum())
    if ni == 0.0 and np_ == 0.0:
        return True
    if ni == 0.0 or np_ == 0.0:
        return False
    r = ni / np_
    return 1.0 / ratio <= r <= ratio


def match(table: LookupTable, incoming: DemandVector) -> MatchResult:
    """Score the incoming pattern against every entry and decide hit/miss.

    Best entry is the highest correlation (or smallest distance); ties go
    to the lowest index. A hit requires the threshold to clear and, in
    correlation mode, the magnitude guard to pass; only hits carry a
    solution.
    """
    vec = incoming.values
    if len(vec) != table.service_count:
        raise FingerprintMismatchError(
            f"incoming pattern has {len(vec)} services, table holds {table.service_count}"
        )
    if table.similarity == "pearson":
        scores = np.array([pearson(vec, e.pattern) for e in table.entries])
        best = int(scores.argmax())
        hit = scores[best] >= table.threshold and _magnitude_ok(
            vec, table.entries[best].pattern, table.magnitude_ratio)
    else:
        scores = np.array([float(np.linalg.norm(vec - e.pattern)) for e in table.entries])
        best = int(scores.argmin())
        hit = scores[best] <= table.threshold
    return MatchResult(
        best_index=best,
        score=float(scores[best]),
        hit=bool(hit),
        chosen=table.entries[best].solution if hit else None,
    )


@dataclass
class MissBuffer:
    """Patterns that failed to match, waiting for the next reclustering."""

    capacity: int = 20
    patterns: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("buffer capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.patterns)

    def record(self, pattern) -> bool:
        """Append a miss pattern; True when reclustering is due (size >= capacity)."""
        self.patterns.append(as_float_vector(pattern, "pattern"))
        return len(self.patterns) >= self.capacity

    def clear(self) -> None:
        self.patterns.clear()


def save_table(table: LookupTable, path) -> None:
    Path(path).write_text(
        json.dumps(table.to_doc(), indent=2) + "\n", encoding="utf-8"
    )


def load_table(path, catalog: ServiceCatalog, vm_catalog,
               period_seconds: float | None = None) -> LookupTable:
    """Load and validate a table file.

    The file stores VM types by id only, so the catalogs are required to
    resolve instances and to verify the fingerprint. Entry costs are taken
    from the file; when period_seconds is given they are cross-checked
    against the catalog prices.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TableFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != TABLE_VERSION:
        raise TableFormatError(
            f"{path}: expected version {TABLE_VERSION!r}, got {doc.get('version')!r}"
        )
    expected = catalog_fingerprint(catalog, vm_catalog)
    if doc.get("fingerprint") != expected:
        raise FingerprintMismatchError(
            f"{path}: table was built for different catalogs"
        )
    by_id = {t.id: t for t in vm_catalog}
    entries = []
    try:
        for rec in doc["entries"]:
            instances = []
            for inst in rec["instances"]:
                type_id = inst["type_id"]
                if type_id not in by_id:
                    raise TableFormatError(f"{path}: unknown VM type {type_id!r}")
                instances.append(VmInstance(by_id[type_id], np.array(inst["assignment"])))
            cost = float(rec["cost"])
            if period_seconds is not None:
                recomputed = solution_cost(instances, period_seconds)
                if not math.isclose(cost, recomputed, rel_tol=1e-9, abs_tol=1e-12):
                    raise TableFormatError(
                        f"{path}: stored cost {cost} disagrees with catalog prices"
                    )
            entries.append(LookupEntry(
                pattern=np.array(rec["pattern"], dtype=float),
                solution=PackingSolution(tuple(instances), cost, feasible=True),
            ))
        ratio = doc["magnitude_ratio"]
        table = LookupTable(
            entries=tuple(entries),
            similarity=doc["similarity"],
            threshold=float(doc["threshold"]),
            magnitude_ratio=math.inf if ratio is None else float(ratio),
            fingerprint=doc["fingerprint"],
        )
    except (KeyError, TypeError) as exc:
        raise TableFormatError(f"{path}: malformed table document ({exc})") from None
    return table
