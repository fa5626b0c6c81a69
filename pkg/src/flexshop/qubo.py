"""Binary quadratic models of flexible job shop subproblems.

Each binary variable ``x[i, j, k, t]`` means: operation ``j`` of job ``i``
starts on machine ``k`` at integer time ``t``.  Start times are restricted to
per-operation windows derived from fastest-predecessor and
fastest-successor sums under a horizon ``t_max``.  The model combines three
objective groups (makespan surrogate, extra workload, priority-weighted
makespan) and three penalty groups (one start per operation, job order,
machine exclusivity), each scaled by its own Lagrange weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from flexshop.instance import Instance, Job, Operation


class InfeasibleHorizonError(ValueError):
    """The horizon is too short for some operation's time window."""


class EmptySubsetError(ValueError):
    """A model was requested for a subset with no operations."""


class MissingVariableError(KeyError):
    """An energy evaluation received an assignment missing a variable."""


class VarKey(NamedTuple):
    """Identity of one binary variable: operation, machine, start time."""

    job: int
    op: int
    machine: int
    start: int


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive range of allowed start times for one operation."""

    earliest: int
    latest: int


@dataclass(frozen=True)
class LagrangeParams:
    """Weights of the six Hamiltonian groups; all must be nonnegative.

    ``alpha``, ``beta``, ``gamma`` scale the makespan, workload, and priority
    objectives; ``delta``, ``epsilon``, ``zeta`` scale the assignment,
    precedence, and machine-overlap penalties.  A weight of zero removes its
    group from the model entirely.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    epsilon: float = 0.0
    zeta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "epsilon", "zeta"):
            value = getattr(self, name)
            if not (value >= 0.0):
                raise ValueError(f"Lagrange weight {name} must be nonnegative, got {value}")


@dataclass(frozen=True)
class JobSelection:
    """A contiguous run of one job's operations chosen for a model."""

    job: Job
    ops: tuple[Operation, ...]

    def __post_init__(self):
        if not self.ops:
            raise EmptySubsetError(f"job {self.job.id} selected with no operations")
        first = self.ops[0].index
        for offset, op in enumerate(self.ops):
            if op.job != self.job.id or op.index != first + offset:
                raise ValueError(
                    f"selection for job {self.job.id} is not a contiguous slice of its operations"
                )


Subset = tuple[JobSelection, ...]


def whole_instance_subset(instance: Instance) -> Subset:
    """Subset covering every operation of every job."""
    return tuple(JobSelection(job=job, ops=job.operations) for job in instance.jobs)


def predecessor_time(job: Job, op_index: int, floor: int = 0) -> int:
    """Earliest conceivable start of an operation: the sum of the fastest
    durations of all prior operations of its job, raised to ``floor``."""
    total = sum(op.min_duration for op in job.operations[:op_index])
    return max(total, floor)


def successor_time(ops: Sequence[Operation], position: int) -> int:
    """Fastest time needed to finish ``ops[position:]`` back to back,
    including the operation at ``position`` itself."""
    return sum(op.min_duration for op in ops[position:])


def contention_factors(subset: Subset) -> tuple[float, float]:
    """Density factors scaling the horizon slack.

    The first factor is the ratio of selected jobs to selected operations.
    The second is the number of ordered pairs of distinct selected
    operations that share at least one machine, divided by the total count
    of (operation, machine option) pairs in the subset.
    """
    _require_nonempty(subset)
    num_jobs = len(subset)
    all_ops = [op for sel in subset for op in sel.ops]
    num_ops = len(all_ops)
    machine_sets = [op.machines for op in all_ops]
    shared = 0
    for a in range(num_ops):
        for b in range(num_ops):
            if a != b and machine_sets[a] & machine_sets[b]:
                shared += 1
    option_pairs = sum(len(op.options) for op in all_ops)
    return num_jobs / num_ops, shared / option_pairs


def estimate_tmax(subset: Subset, t_est: float, committed_horizon: int = 0) -> int:
    """Horizon estimate: committed work so far, plus one slowest operation
    per selected job, plus a slack term scaled by the contention factors.
    The result is rounded up to an integer."""
    _require_nonempty(subset)
    if t_est < 0:
        raise ValueError(f"t_est must be nonnegative, got {t_est}")
    per_job_max = sum(max(op.max_duration for op in sel.ops) for sel in subset)
    a1, a2 = contention_factors(subset)
    return int(math.ceil(committed_horizon + per_job_max + t_est * a1 * a2))


def build_windows(
    subset: Subset,
    t_max: int,
    floors: Mapping[tuple[int, int], int] | None = None,
) -> dict[tuple[int, int], TimeWindow]:
    """Start-time window per selected operation under horizon ``t_max``.

    The lower edge is the fastest-predecessor sum raised to any floor given
    for that operation; the upper edge leaves room to finish the remaining
    selected operations of the job at their fastest.  Raises
    InfeasibleHorizonError when any window closes.
    """
    _require_nonempty(subset)
    floors = floors or {}
    windows: dict[tuple[int, int], TimeWindow] = {}
    for sel in subset:
        for position, op in enumerate(sel.ops):
            earliest = predecessor_time(sel.job, op.index, floors.get((op.job, op.index), 0))
            latest = t_max - successor_time(sel.ops, position)
            if latest < earliest:
                raise InfeasibleHorizonError(
                    f"operation ({op.job},{op.index}) has empty window "
                    f"[{earliest}, {latest}] under t_max={t_max}"
                )
            windows[(op.job, op.index)] = TimeWindow(earliest=earliest, latest=latest)
    return windows


def variables_for(
    subset: Subset,
    windows: Mapping[tuple[int, int], TimeWindow],
) -> list[VarKey]:
    """All variables of a subset in canonical (job, op, machine, start) order."""
    _require_nonempty(subset)
    keys = []
    for sel in subset:
        for op in sel.ops:
            window = windows[(op.job, op.index)]
            for option in op.options:
                for start in range(window.earliest, window.latest + 1):
                    keys.append(VarKey(op.job, op.index, option.machine, start))
    keys.sort()
    return keys


def unpruned_variable_count(subset: Subset, t_max: int) -> int:
    """Variable count if every start in [0, t_max] were kept."""
    _require_nonempty(subset)
    per_start = sum(len(op.options) for sel in subset for op in sel.ops)
    return per_start * (t_max + 1)


@dataclass(frozen=True)
class Bqm:
    """Binary quadratic model: offset + sum of linear and pairwise terms.

    ``variables`` is the canonical sorted tuple of every variable, including
    any that carry no weight.  ``quadratic`` keys are ordered pairs with the
    smaller key first.  Zero weights are never stored.
    """

    variables: tuple[VarKey, ...]
    linear: dict[VarKey, float]
    quadratic: dict[tuple[VarKey, VarKey], float]
    offset: float = 0.0

    def __post_init__(self):
        known = set(self.variables)
        if len(known) != len(self.variables):
            raise ValueError("duplicate variables in Bqm")
        if list(self.variables) != sorted(self.variables):
            raise ValueError("Bqm variables must be sorted")
        for key, weight in self.linear.items():
            if key not in known:
                raise ValueError(f"linear term on unknown variable {key}")
            if weight == 0.0:
                raise ValueError(f"zero linear weight stored for {key}")
        for (a, b), weight in self.quadratic.items():
            if a not in known or b not in known:
                raise ValueError(f"quadratic term on unknown variables ({a}, {b})")
            if not a < b:
                raise ValueError(f"quadratic key ({a}, {b}) is not in canonical order")
            if weight == 0.0:
                raise ValueError(f"zero quadratic weight stored for ({a}, {b})")

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_interactions(self) -> int:
        return len(self.quadratic)


def ordered_pair(a: VarKey, b: VarKey) -> tuple[VarKey, VarKey]:
    """Canonical unordered-pair key."""
    if a == b:
        raise ValueError(f"self-pair on variable {a}")
    return (a, b) if a < b else (b, a)


OBJECTIVE_KINDS = ("makespan", "workload", "priority")
CONSTRAINT_KINDS = ("assignment", "precedence", "overlap")


def _require_nonempty(subset: Subset):
    if not subset:
        raise EmptySubsetError("subset has no jobs")


def _group_by_op(variables: Iterable[VarKey]) -> dict[tuple[int, int], list[VarKey]]:
    grouped: dict[tuple[int, int], list[VarKey]] = {}
    for key in variables:
        grouped.setdefault((key.job, key.op), []).append(key)
    return grouped


def _resolve_variables(
    subset: Subset,
    windows: Mapping[tuple[int, int], TimeWindow],
    variables: Sequence[VarKey] | None,
) -> list[VarKey]:
    if variables is None:
        return variables_for(subset, windows)
    out = sorted(variables)
    return out


def _op_lookup(subset: Subset) -> dict[tuple[int, int], tuple[Job, Operation]]:
    table = {}
    for sel in subset:
        for op in sel.ops:
            table[(op.job, op.index)] = (sel.job, op)
    return table


def build_objective_terms(
    kind: str,
    subset: Subset,
    windows: Mapping[tuple[int, int], TimeWindow],
    variables: Sequence[VarKey] | None = None,
) -> dict[VarKey, float]:
    """Linear weights of one objective group, zero entries omitted.

    makespan: start + duration - fastest-predecessor sum.
    workload: duration minus the operation's fastest duration.
    priority: the makespan weight multiplied by the job's priority.
    """
    if kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {kind!r}")
    _require_nonempty(subset)
    keys = _resolve_variables(subset, windows, variables)
    ops = _op_lookup(subset)
    terms: dict[VarKey, float] = {}
    for key in keys:
        job, op = ops[(key.job, key.op)]
        duration = op.duration_on(key.machine)
        if kind == "workload":
            weight = float(duration - op.min_duration)
        else:
            weight = float(key.start + duration - predecessor_time(job, op.index))
            if kind == "priority":
                weight *= job.priority
        if weight != 0.0:
            terms[key] = weight
    return terms


def build_constraint_terms(
    kind: str,
    subset: Subset,
    windows: Mapping[tuple[int, int], TimeWindow],
    variables: Sequence[VarKey] | None = None,
) -> tuple[dict[VarKey, float], dict[tuple[VarKey, VarKey], float], float]:
    """Linear, quadratic, and offset parts of one penalty group.

    assignment: (1 - sum of the operation's variables)^2 per operation.
    precedence: +1 per variable pair of same-job operations j < j' whose
    start times violate the job order (later op starts before the earlier
    one could finish).
    overlap: +1 per variable pair of different-job operations on the same
    machine whose busy intervals intersect.
    """
    if kind not in CONSTRAINT_KINDS:
        raise ValueError(f"unknown constraint kind {kind!r}")
    _require_nonempty(subset)
    keys = _resolve_variables(subset, windows, variables)
    ops = _op_lookup(subset)
    linear: dict[VarKey, float] = {}
    quadratic: dict[tuple[VarKey, VarKey], float] = {}
    offset = 0.0

    if kind == "assignment":
        for group in _group_by_op(keys).values():
            offset += 1.0
            for idx, key in enumerate(group):
                linear[key] = linear.get(key, 0.0) - 1.0
                for other in group[idx + 1 :]:
                    pair = ordered_pair(key, other)
                    quadratic[pair] = quadratic.get(pair, 0.0) + 2.0
    elif kind == "precedence":
        grouped = _group_by_op(keys)
        for sel in subset:
            selected = [op for op in sel.ops if (op.job, op.index) in grouped]
            for a_pos, op_a in enumerate(selected):
                for op_b in selected[a_pos + 1 :]:
                    for key_a in grouped[(op_a.job, op_a.index)]:
                        dur_a = ops[(key_a.job, key_a.op)][1].duration_on(key_a.machine)
                        for key_b in grouped[(op_b.job, op_b.index)]:
                            if key_b.start - key_a.start < dur_a:
                                pair = ordered_pair(key_a, key_b)
                                quadratic[pair] = quadratic.get(pair, 0.0) + 1.0
    else:
        by_machine: dict[int, list[VarKey]] = {}
        for key in keys:
            by_machine.setdefault(key.machine, []).append(key)
        for machine_keys in by_machine.values():
            for idx, key_a in enumerate(machine_keys):
                dur_a = ops[(key_a.job, key_a.op)][1].duration_on(key_a.machine)
                for key_b in machine_keys[idx + 1 :]:
                    if key_b.job == key_a.job:
                        continue
                    dur_b = ops[(key_b.job, key_b.op)][1].duration_on(key_b.machine)
                    if key_a.start < key_b.start + dur_b and key_b.start < key_a.start + dur_a:
                        pair = ordered_pair(key_a, key_b)
                        quadratic[pair] = quadratic.get(pair, 0.0) + 1.0

    linear = {k: w for k, w in linear.items() if w != 0.0}
    quadratic = {k: w for k, w in quadratic.items() if w != 0.0}
    return linear, quadratic, offset


_GROUP_WEIGHTS = (
    ("makespan", "alpha"),
    ("workload", "beta"),
    ("priority", "gamma"),
    ("assignment", "delta"),
    ("precedence", "epsilon"),
    ("overlap", "zeta"),
)


def build_bqm(
    subset: Subset,
    windows: Mapping[tuple[int, int], TimeWindow],
    params: LagrangeParams,
    variables: Sequence[VarKey] | None = None,
) -> Bqm:
    """Assemble the weighted sum of all active Hamiltonian groups.

    Groups with a zero Lagrange weight are skipped entirely; weights that
    cancel to exactly zero are dropped from the result.
    """
    keys = _resolve_variables(subset, windows, variables)
    linear: dict[VarKey, float] = {}
    quadratic: dict[tuple[VarKey, VarKey], float] = {}
    offset = 0.0
    for kind, weight_name in _GROUP_WEIGHTS:
        weight = getattr(params, weight_name)
        if weight == 0.0:
            continue
        if kind in OBJECTIVE_KINDS:
            terms = build_objective_terms(kind, subset, windows, keys)
            for key, value in terms.items():
                linear[key] = linear.get(key, 0.0) + weight * value
        else:
            lin, quad, off = build_constraint_terms(kind, subset, windows, keys)
            offset += weight * off
            for key, value in lin.items():
                linear[key] = linear.get(key, 0.0) + weight * value
            for pair, value in quad.items():
                quadratic[pair] = quadratic.get(pair, 0.0) + weight * value
    linear = {k: w for k, w in sorted(linear.items()) if w != 0.0}
    quadratic = {k: w for k, w in sorted(quadratic.items()) if w != 0.0}
    return Bqm(variables=tuple(keys), linear=linear, quadratic=quadratic, offset=offset)


def energy(bqm: Bqm, assignment: Mapping[VarKey, int]) -> float:
    """Model energy of a full assignment, summed in canonical order.

    Every Bqm variable must be assigned; extra assignment keys are ignored.
    The summation order (sorted linear terms, then sorted quadratic terms,
    then the offset) is fixed so independently computed energies compare
    bit for bit.
    """
    for key in bqm.variables:
        if key not in assignment:
            raise MissingVariableError(f"assignment is missing variable {key}")
    total = 0.0
    for key in sorted(bqm.linear):
        if assignment[key]:
            total += bqm.linear[key]
    for a, b in sorted(bqm.quadratic):
        if assignment[a] and assignment[b]:
            total += bqm.quadratic[(a, b)]
    return total + bqm.offset


def _format_weight(value: float) -> str:
    return repr(value)


def dump(bqm: Bqm) -> str:
    """Plain-text model dump: VAR, LIN, QUAD, and OFFSET records."""
    lines = []
    for key in bqm.variables:
        lines.append(f"VAR {key.job} {key.op} {key.machine} {key.start}")
    for key in sorted(bqm.linear):
        lines.append(
            f"LIN {key.job} {key.op} {key.machine} {key.start} {_format_weight(bqm.linear[key])}"
        )
    for a, b in sorted(bqm.quadratic):
        lines.append(
            f"QUAD {a.job} {a.op} {a.machine} {a.start} "
            f"{b.job} {b.op} {b.machine} {b.start} {_format_weight(bqm.quadratic[(a, b)])}"
        )
    lines.append(f"OFFSET {_format_weight(bqm.offset)}")
    return "\n".join(lines) + "\n"
