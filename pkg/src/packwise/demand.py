"""Turn request counts into resource-demand vectors.

For one period, service s with count D_s and per-dimension unit costs
N_s[k] needs D_s * N_s[k] resource units in dimension k. The scalar
pattern value for s is the total across dimensions, D_s * sum_k N_s[k];
the vector of those S values is what gets clustered and matched. The full
(S, d) per-dimension matrix is what the packing solvers consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .validation import as_float_matrix, as_float_vector
from .workload import ServiceCatalog, WorkloadTrace


@dataclass(frozen=True)
class DemandVector:
    """Resource demand for one period.

    values[s] is the scalar demand magnitude of service s (the clustering /
    matching pattern); per_dim[s][k] is its demand in resource dimension k.
    values[s] always equals per_dim[s].sum().
    """

    values: np.ndarray
    per_dim: np.ndarray

    def __post_init__(self):
        values = as_float_vector(self.values, "values")
        per_dim = as_float_matrix(self.per_dim, "per_dim")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "per_dim", per_dim)
        if per_dim.shape[0] != values.shape[0]:
            raise ValueError(
                f"per_dim has {per_dim.shape[0]} rows for {values.shape[0]} values"
            )
        if values.size and (np.min(values) < 0 or np.min(per_dim) < 0):
            raise ValueError("demand entries must be nonnegative")
        sums = per_dim.sum(axis=1)
        if not np.allclose(values, sums, rtol=1e-9, atol=1e-9):
            raise ValueError("values must equal the per-dimension row sums")

    @property
    def service_count(self) -> int:
        return self.values.shape[0]

    @property
    def dimension_count(self) -> int:
        return self.per_dim.shape[1]


def demand_for_period(counts, catalog: ServiceCatalog) -> DemandVector:
    """Demand vector for one period of request counts.

    per_dim[s][k] = counts[s] * unit_costs[s][k]; values[s] is the row sum.
    No summation across services: each service keeps its own entry.
    """
    c = np.asarray(counts, dtype=float)
    if c.ndim != 1 or c.shape[0] != catalog.service_count:
        raise ValueError(
            f"counts must be a vector of length {catalog.service_count}, "
            f"got shape {c.shape}"
        )
    if c.size and np.min(c) < 0:
        raise ValueError("counts must be nonnegative")
    per_dim = c[:, None] * catalog.unit_costs
    return DemandVector(values=per_dim.sum(axis=1), per_dim=per_dim)


def demand_series(trace: WorkloadTrace, catalog: ServiceCatalog) -> list[DemandVector]:
    """One DemandVector per trace period, order preserved."""
    if trace.n_periods == 0:
        raise ValueError("trace has no periods")
    return [demand_for_period(row, catalog) for row in trace.counts]


def demand_from_values(values, catalog: ServiceCatalog) -> DemandVector:
    """Reconstruct a full DemandVector from a scalar pattern vector.

    Any demand produced from counts has per_dim rows proportional to the
    catalog's unit-cost rows, so a pattern (e.g. a cluster centroid) maps
    back to per-dimension demand by splitting each value in unit-cost
    proportions. Exact inverse of demand_for_period for real-valued counts.
    """
    v = as_float_vector(values, "values")
    if v.shape[0] != catalog.service_count:
        raise ValueError(
            f"values must have length {catalog.service_count}, got {v.shape[0]}"
        )
    weights = catalog.unit_costs / catalog.unit_costs.sum(axis=1, keepdims=True)
    per_dim = v[:, None] * weights
    return DemandVector(values=per_dim.sum(axis=1), per_dim=per_dim)


def save_demand_series(series: list[DemandVector], path) -> None:
    """Write pattern values as CSV rows (6 significant digits) for inspection."""
    lines = [",".join(f"{v:.6g}" for v in dv.values) for dv in series]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
