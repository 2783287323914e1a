"""VM packing: decide how many machines to rent and which services go where.

A solution is a list of VM instances, each an instance type plus a binary
row marking the hosted services. A service hosted on several instances
splits its demand equally among them (share = 1 / host count); an instance
is within capacity when its equally-split per-dimension load fits the
type's capacity vector. Rental cost accrues pro rata per period:
hourly cost times period length in hours.

Solvers:

* ga_pack        - genetic algorithm over fixed-slot genomes, penalty fitness
* first_fit_pack - greedy, decreasing demand, first instance that fits
* best_fit_pack  - greedy, decreasing demand, tightest instance that fits
* brute_force_pack - exhaustive optimum for tiny instances (the oracle)

verify_solution re-checks coverage and capacity with plain loops,
independent of the solvers' vectorized arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demand import DemandVector
from .validation import as_float_vector
from .workload import DEFAULT_PERIOD_SECONDS, TraceParseError

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class VmType:
    """A rentable machine type: capacity per resource dimension, price per hour."""

    id: str
    capacity: np.ndarray
    hourly_cost: float

    def __post_init__(self):
        cap = as_float_vector(self.capacity, "capacity")
        object.__setattr__(self, "capacity", cap)
        if np.min(cap) < 0 or cap.max() <= 0:
            raise ValueError(f"type {self.id}: capacity must be nonnegative with some positive entry")
        if self.hourly_cost <= 0:
            raise ValueError(f"type {self.id}: hourly cost must be positive")


@dataclass(frozen=True)
class VmInstance:
    """One rented machine and the binary service-assignment row it hosts."""

    vm_type: VmType
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if not np.isin(a, (0, 1)).all():
            raise ValueError("assignment entries must be 0 or 1")
        a = np.array(a, dtype=np.uint8, copy=True)
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)

    @property
    def services(self) -> np.ndarray:
        return np.flatnonzero(self.assignment)


@dataclass(frozen=True)
class PackingSolution:
    """Instances plus the per-period rental cost; feasible means the
    solution covers all positive demand within every capacity."""

    instances: tuple
    total_cost: float
    feasible: bool

    @property
    def instance_count(self) -> int:
        return len(self.instances)


@dataclass
class GaParams:
    """Genetic-algorithm knobs. max_instances / penalty_weight default to
    instance-derived values when left as None (twice the aggregate lower
    bound; 1e4 times the priciest type)."""

    population: int = 80
    generations: int = 300
    crossover_rate: float = 0.9
    mutation_rate: float = 0.05
    max_instances: int | None = None
    penalty_weight: float | None = None
    elitism: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")


def period_hours(period_seconds: float) -> float:
    return period_seconds / 3600.0


def solution_cost(instances, period_seconds: float) -> float:
    return sum(inst.vm_type.hourly_cost for inst in instances) * period_hours(period_seconds)


def prune_empty_instances(instances) -> tuple:
    """Drop instances hosting nothing; load and feasibility are unchanged."""
    return tuple(inst for inst in instances if inst.assignment.any())


def feasibility_violations(solution: PackingSolution, demand: DemandVector,
                           tol: float = FEASIBILITY_TOL) -> list[str]:
    """Re-check Coverage and Capacity with plain loops, independent of any
    solver arithmetic. Returns human-readable violation messages."""
    msgs = []
    S = demand.service_count
    hosts = [0] * S
    for inst in solution.instances:
        if len(inst.assignment) != S:
            return [f"assignment width {len(inst.assignment)} != {S} services"]
        if not inst.assignment.any():
            msgs.append(f"instance of type {inst.vm_type.id} hosts no service")
        for s in range(S):
            if inst.assignment[s]:
                hosts[s] += 1
    for s in range(S):
        if demand.values[s] > 0 and hosts[s] == 0:
            msgs.append(f"service {s} has positive demand but no host")
    for i, inst in enumerate(solution.instances):
        for k in range(demand.dimension_count):
            load = 0.0
            for s in range(S):
                if inst.assignment[s]:
                    load += demand.per_dim[s][k] / hosts[s]
            if load > inst.vm_type.capacity[k] + tol:
                msgs.append(
                    f"instance {i} ({inst.vm_type.id}) dimension {k}: "
                    f"load {load:.6g} exceeds capacity {inst.vm_type.capacity[k]:.6g}"
                )
    return msgs


def verify_solution(solution: PackingSolution, demand: DemandVector,
                    tol: float = FEASIBILITY_TOL) -> bool:
    return not feasibility_violations(solution, demand, tol=tol)


def default_max_instances(demand: DemandVector, vm_catalog) -> int:
    """Slot budget: twice the aggregate lower bound ceil(total demand /
    largest type's total capacity). Zero demand needs zero slots."""
    total = float(demand.values.sum())
    if total == 0:
        return 0
    biggest = max(float(t.capacity.sum()) for t in vm_catalog)
    return 2 * math.ceil(total / biggest)


def evaluate_genome(slot_types, slot_bits, demand: DemandVector, vm_catalog,
                    period_seconds: float = DEFAULT_PERIOD_SECONDS):
    """Score one genome: (cost, violation).

    A genome is max_instances slots; slot_types[m] is a type index or -1
    for off, slot_bits[m] the assignment row. Slots that are off or assign
    no service contribute nothing (they decode to no instance). violation
    sums capacity overflow across instances and dimensions plus the total
    demand of uncovered services; the GA minimizes
    cost + penalty_weight * violation.
    """
    hours = period_hours(period_seconds)
    S = demand.service_count
    active = [m for m, t in enumerate(slot_types) if t >= 0 and any(slot_bits[m])]
    hosts = [0] * S
    for m in active:
        for s in range(S):
            hosts[s] += 1 if slot_bits[m][s] else 0
    violation = 0.0
    for s in range(S):
        if demand.values[s] > 0 and hosts[s] == 0:
            violation += demand.values[s]
    cost = 0.0
    for m in active:
        vm = vm_catalog[slot_types[m]]
        cost += vm.hourly_cost * hours
        for k in range(demand.dimension_count):
            load = 0.0
            for s in range(S):
                if slot_bits[m][s]:
                    load += demand.per_dim[s][k] / hosts[s]
            violation += max(0.0, load - vm.capacity[k])
    return cost, violation


def _catalog_arrays(vm_catalog, d: int):
    caps = np.vstack([t.capacity for t in vm_catalog])
    if caps.shape[1] != d:
        raise ValueError(
            f"VM capacities have {caps.shape[1]} dimensions, demand has {d}"
        )
    costs = np.array([t.hourly_cost for t in vm_catalog])
    return caps, costs


def _evaluate_population(types, bits, per_dim, values, caps, costs, hours, lam):
    """Vectorized twin of evaluate_genome over a (P, M[, S]) population."""
    active = types >= 0
    eff = bits * active[:, :, None]
    n_hosts = eff.sum(axis=1)
    share = np.divide(1.0, n_hosts, out=np.zeros_like(n_hosts, dtype=float),
                      where=n_hosts > 0)
    load = np.einsum("pms,ps,sk->pmk", eff, share, per_dim)
    effective = active & (eff.sum(axis=2) > 0)
    type_idx = np.clip(types, 0, len(costs) - 1)
    cap_eff = caps[type_idx] * effective[:, :, None]
    cap_viol = np.maximum(0.0, load - cap_eff).sum(axis=(1, 2))
    cov_viol = (((n_hosts == 0) & (values > 0)) * values).sum(axis=1)
    cost = (costs[type_idx] * effective).sum(axis=1) * hours
    viol = cap_viol + cov_viol
    return cost + lam * viol, cost, viol


def _decode(slot_types, slot_bits, vm_catalog, feasible, period_seconds) -> PackingSolution:
    instances = tuple(
        VmInstance(vm_catalog[int(t)], slot_bits[m])
        for m, t in enumerate(slot_types)
        if t >= 0 and slot_bits[m].any()
    )
    return PackingSolution(
        instances=instances,
        total_cost=solution_cost(instances, period_seconds),
        feasible=feasible,
    )


def _encode_solution(solution: PackingSolution, vm_catalog, m_slots: int, S: int):
    """Greedy solution -> genome arrays, or None when it needs more slots."""
    if solution.instance_count > m_slots:
        return None
    ids = [t.id for t in vm_catalog]
    types = np.full(m_slots, -1, dtype=np.int64)
    bits = np.zeros((m_slots, S), dtype=np.uint8)
    for m, inst in enumerate(solution.instances):
        types[m] = ids.index(inst.vm_type.id)
        bits[m] = inst.assignment
    return types, bits


def ga_evolve(demand: DemandVector, vm_catalog, params: GaParams,
              period_seconds: float = DEFAULT_PERIOD_SECONDS):
    """Run the GA and return (solution, best_fitness_trace).

    Genome: params.max_instances slots, each a type index (or off) plus an
    assignment row. Tournament selection (size 3), uniform slot-wise
    crossover, per-gene mutation that flips assignment bits and resamples
    slot types, elitism. The initial population is seeded with the two
    greedy baselines when they fit the slot budget, so the GA starts no
    worse than greedy. Deterministic given params.seed.

    With no feasible individual after the last generation, the
    least-violating one is returned flagged feasible=False.
    """
    if not vm_catalog:
        raise ValueError("vm_catalog is empty")
    S, d = demand.service_count, demand.dimension_count
    caps, costs = _catalog_arrays(vm_catalog, d)
    if demand.values.sum() == 0:
        return PackingSolution((), 0.0, True), ()

    lower_bound = math.ceil(float(demand.values.sum()) / float(caps.sum(axis=1).max()))
    M = params.max_instances if params.max_instances is not None \
        else default_max_instances(demand, vm_catalog)
    if M < lower_bound:
        raise ValueError(f"max_instances={M} below the lower bound {lower_bound}")
    lam = params.penalty_weight if params.penalty_weight is not None \
        else 1e4 * float(costs.max())
    hours = period_hours(period_seconds)
    T = len(vm_catalog)
    P, E = params.population, params.elitism
    rng = np.random.default_rng(params.seed)

    types = rng.integers(-1, T, size=(P, M))
    bits = rng.integers(0, 2, size=(P, M, S), dtype=np.uint8)
    for row, greedy in enumerate((first_fit_pack, best_fit_pack)):
        sol = greedy(demand, vm_catalog, period_seconds=period_seconds)
        encoded = _encode_solution(sol, vm_catalog, M, S) if sol.feasible else None
        if encoded is not None:
            types[row], bits[row] = encoded

    best_feasible = None   # (cost, types, bits)
    least_violating = None  # (viol, cost, types, bits)
    trace = []
    for gen in range(params.generations):
        fitness, cost, viol = _evaluate_population(
            types, bits, demand.per_dim, demand.values, caps, costs, hours, lam)
        trace.append(float(fitness.min()))

        feas = viol <= FEASIBILITY_TOL
        if feas.any():
            i = int(np.flatnonzero(feas)[cost[feas].argmin()])
            if best_feasible is None or cost[i] < best_feasible[0]:
                best_feasible = (float(cost[i]), types[i].copy(), bits[i].copy())
        i = int(np.lexsort((cost, viol))[0])
        if least_violating is None or (viol[i], cost[i]) < least_violating[:2]:
            least_violating = (float(viol[i]), float(cost[i]), types[i].copy(), bits[i].copy())

        if gen == params.generations - 1:
            break

        elite = np.argsort(fitness, kind="stable")[:E]
        elite_t, elite_b = types[elite].copy(), bits[elite].copy()

        contenders = rng.integers(0, P, size=(P, 3))
        winners = contenders[np.arange(P), fitness[contenders].argmin(axis=1)]
        types, bits = types[winners].copy(), bits[winners].copy()

        half = P // 2
        do_cx = rng.random(half) < params.crossover_rate
        swap = (rng.random((half, M)) < 0.5) & do_cx[:, None]
        a, b = types[0:2 * half:2], types[1:2 * half:2]
        a2, b2 = a.copy(), b.copy()
        a[swap], b[swap] = b2[swap], a2[swap]
        ab, bb = bits[0:2 * half:2], bits[1:2 * half:2]
        ab2, bb2 = ab.copy(), bb.copy()
        ab[swap], bb[swap] = bb2[swap], ab2[swap]

        tmask = rng.random((P, M)) < params.mutation_rate
        fresh = rng.integers(-1, T, size=(P, M))
        types = np.where(tmask, fresh, types)
        bmask = rng.random((P, M, S)) < params.mutation_rate
        bits = bits ^ bmask.astype(np.uint8)

        types[:E], bits[:E] = elite_t, elite_b

    if best_feasible is not None:
        _, bt, bb = best_feasible
        solution = _decode(bt, bb, vm_catalog, feasible=True, period_seconds=period_seconds)
        assert verify_solution(solution, demand), "GA champion failed the independent check"
        return solution, tuple(trace)
    _, _, lt, lb = least_violating
    return _decode(lt, lb, vm_catalog, feasible=False, period_seconds=period_seconds), tuple(trace)


def ga_pack(demand: DemandVector, vm_catalog, params: GaParams | None = None,
            period_seconds: float = DEFAULT_PERIOD_SECONDS) -> PackingSolution:
    """Near-optimal packing for one demand vector via the genetic algorithm."""
    solution, _ = ga_evolve(demand, vm_catalog, params or GaParams(), period_seconds)
    return solution


def _fits(load, dem, capacity) -> bool:
    return bool(np.all(load + dem <= capacity + FEASIBILITY_TOL))


def _cheapest_fitting_type(dem, vm_catalog):
    fitting = [t for t in vm_catalog if np.all(dem <= t.capacity + FEASIBILITY_TOL)]
    if not fitting:
        return None
    return min(fitting, key=lambda t: t.hourly_cost)


def _greedy_pack(demand: DemandVector, vm_catalog, choose, period_seconds) -> PackingSolution:
    if not vm_catalog:
        raise ValueError("vm_catalog is empty")
    _catalog_arrays(vm_catalog, demand.dimension_count)
    S = demand.service_count
    order = np.argsort(-demand.values, kind="stable")
    opened: list[list] = []  # [type, load, bits]
    feasible = True
    for s in order:
        if demand.values[s] == 0:
            continue
        dem = demand.per_dim[s]
        candidates = [i for i, (t, load, _) in enumerate(opened) if _fits(load, dem, t.capacity)]
        if candidates:
            i = choose(candidates, opened, dem)
            opened[i][1] = opened[i][1] + dem
            opened[i][2][s] = 1
            continue
        vm = _cheapest_fitting_type(dem, vm_catalog)
        if vm is None:
            # Nothing holds this service whole; place it on the roomiest
            # type anyway and report the solution infeasible.
            feasible = False
            vm = max(vm_catalog, key=lambda t: float(t.capacity.sum()))
        bits = np.zeros(S, dtype=np.uint8)
        bits[s] = 1
        opened.append([vm, dem.copy(), bits])
    instances = tuple(VmInstance(t, bits) for t, _, bits in opened)
    return PackingSolution(
        instances=instances,
        total_cost=solution_cost(instances, period_seconds),
        feasible=feasible,
    )


def first_fit_pack(demand: DemandVector, vm_catalog,
                   period_seconds: float = DEFAULT_PERIOD_SECONDS) -> PackingSolution:
    """Greedy baseline: services in decreasing demand order, each placed
    whole on the first open instance with room, else on a new instance of
    the cheapest type that holds it alone."""
    return _greedy_pack(demand, vm_catalog, lambda cands, _o, _d: cands[0], period_seconds)


def best_fit_pack(demand: DemandVector, vm_catalog,
                  period_seconds: float = DEFAULT_PERIOD_SECONDS) -> PackingSolution:
    """Greedy baseline like first_fit_pack, but each service goes to the
    open instance left with the least total slack (ties: lowest index)."""

    def choose(cands, opened, dem):
        def slack(i):
            t, load, _ = opened[i]
            return float((t.capacity - load - dem).sum())
        return min(cands, key=slack)

    return _greedy_pack(demand, vm_catalog, choose, period_seconds)


def brute_force_pack(demand: DemandVector, vm_catalog, m_cap: int,
                     period_seconds: float = DEFAULT_PERIOD_SECONDS) -> PackingSolution:
    """Exhaustive optimum over every type/assignment combination of up to
    m_cap instance slots. Verification oracle for tiny instances only:
    refuses when S * m_cap > 12 or m_cap > 3.

    Ties break toward fewer instances, then the lexicographically smallest
    genome encoding (slot types first, then the flattened assignment bits).
    """
    S, d = demand.service_count, demand.dimension_count
    if m_cap > 3 or S * m_cap > 12:
        raise ValueError(
            f"instance too large for exhaustive search (S={S}, m_cap={m_cap})"
        )
    if not vm_catalog:
        raise ValueError("vm_catalog is empty")
    caps, costs = _catalog_arrays(vm_catalog, d)
    if demand.values.sum() == 0:
        return PackingSolution((), 0.0, True)
    hours = period_hours(period_seconds)

    n_bits = S * m_cap
    combos = np.arange(2 ** n_bits)
    shifts = np.arange(n_bits - 1, -1, -1)
    bits_all = ((combos[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1, m_cap, S)

    best = None  # (cost, count, type_rank, bit_index, types, bits)
    for rank, combo in enumerate(itertools.product(range(len(vm_catalog) + 1), repeat=m_cap)):
        types = np.array(combo) - 1
        active = types >= 0
        eff = bits_all * active[None, :, None]
        n_hosts = eff.sum(axis=1)
        covered = ~((n_hosts == 0) & (demand.values > 0)).any(axis=1)
        share = np.divide(1.0, n_hosts, out=np.zeros_like(n_hosts, dtype=float),
                          where=n_hosts > 0)
        load = np.einsum("nms,ns,sk->nmk", eff, share, demand.per_dim)
        effective = active[None, :] & (eff.sum(axis=2) > 0)
        type_idx = np.clip(types, 0, len(vm_catalog) - 1)
        cap_eff = caps[type_idx] * effective[:, :, None]
        within = (load <= cap_eff + FEASIBILITY_TOL).all(axis=(1, 2))
        ok = covered & within
        if not ok.any():
            continue
        cost = (costs[type_idx] * effective).sum(axis=1) * hours
        count = effective.sum(axis=1)
        idx = np.flatnonzero(ok)
        idx = idx[np.lexsort((idx, count[idx], cost[idx]))]
        i = int(idx[0])
        key = (float(cost[i]), int(count[i]), rank, i)
        if best is None or key < best[:4]:
            best = key + (types, bits_all[i])

    if best is None:
        return PackingSolution((), 0.0, False)
    return _decode(best[4], best[5], vm_catalog, feasible=True, period_seconds=period_seconds)


def load_vm_catalog(path) -> list[VmType]:
    """Read VM types: one `id,cap_1,...,cap_d,hourly_cost` line per type."""
    types = []
    width = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) < 3:
            raise TraceParseError(f"{path}: line {lineno}: need id, capacities, hourly cost")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise TraceParseError(f"{path}: line {lineno}: inconsistent column count")
        try:
            caps = [float(f) for f in fields[1:-1]]
            cost = float(fields[-1])
        except ValueError:
            raise TraceParseError(f"{path}: line {lineno}: not a numeric row") from None
        types.append(VmType(id=fields[0].strip(), capacity=np.array(caps), hourly_cost=cost))
    if not types:
        raise TraceParseError(f"{path}: empty VM catalog")
    return types


def save_vm_catalog(vm_catalog, path) -> None:
    lines = [
        ",".join([t.id] + [f"{c:.6g}" for c in t.capacity] + [f"{t.hourly_cost:.6g}"])
        for t in vm_catalog
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
