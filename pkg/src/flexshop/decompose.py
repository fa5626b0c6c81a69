"""Bottleneck-guided iterative decomposition.

Large instances are solved in loops: score the remaining jobs by
bottleneck pressure, pick the top jobs and a bounded window of their next
operations, build and sample a model for just that slice, commit the best
feasible sample, and repeat until every operation is scheduled.  Committed
work constrains later loops through per-operation start floors and
blocked machine intervals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from flexshop.instance import Instance, Job, Operation
from flexshop.qubo import (
    Bqm,
    EmptySubsetError,
    InfeasibleHorizonError,
    JobSelection,
    LagrangeParams,
    Subset,
    VarKey,
    build_bqm,
    build_windows,
    contention_factors,
    estimate_tmax,
    predecessor_time,
    successor_time,
    unpruned_variable_count,
    variables_for,
)
from flexshop.samplers import SampleSet
from flexshop.schedule import Schedule, ScheduleEntry

logger = logging.getLogger(__name__)

Sampler = Callable[[Bqm], SampleSet]


class SolveFailedError(RuntimeError):
    """A loop found no feasible sample within the retry budget."""


@dataclass(frozen=True)
class BottleneckWeights:
    """Weights of the three bottleneck factors under the combined score.

    Factors with zero weight are skipped entirely.  At least one weight
    must be positive.
    """

    makespan: float = 1.0
    workload: float = 1.0
    priority: float = 1.0

    def __post_init__(self):
        values = (self.makespan, self.workload, self.priority)
        if any(not (value >= 0.0) for value in values):
            raise ValueError(f"bottleneck weights must be nonnegative, got {values}")
        if not any(value > 0.0 for value in values):
            raise ValueError("at least one bottleneck weight must be positive")


@dataclass
class LoopState:
    """Mutable progress of the iterative solve."""

    instance: Instance
    next_op: dict[int, int]
    committed: list[ScheduleEntry] = field(default_factory=list)
    machine_busy: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    job_end: dict[int, int] = field(default_factory=dict)
    horizon: int = 0

    @classmethod
    def initial(cls, instance: Instance) -> "LoopState":
        return cls(instance=instance, next_op={job.id: 0 for job in instance.jobs})

    @property
    def done(self) -> bool:
        return all(
            self.next_op[job.id] >= len(job.operations) for job in self.instance.jobs
        )

    def remaining_jobs(self) -> list[Job]:
        return [
            job
            for job in self.instance.jobs
            if self.next_op[job.id] < len(job.operations)
        ]

    def remaining_ops(self, job: Job) -> tuple[Operation, ...]:
        return job.operations[self.next_op[job.id] :]

    def commit(self, entries: Sequence[ScheduleEntry], counts: Mapping[int, int]):
        """Record a loop's scheduled entries and advance the per-job cursor."""
        for entry in sorted(entries):
            self.committed.append(entry)
            self.machine_busy.setdefault(entry.machine, []).append((entry.start, entry.end))
            self.job_end[entry.job] = max(self.job_end.get(entry.job, 0), entry.end)
            self.horizon = max(self.horizon, entry.end)
        for machine in self.machine_busy:
            self.machine_busy[machine].sort()
        for job_id, count in counts.items():
            self.next_op[job_id] += count


def bottleneck_makespan(state: LoopState) -> dict[int, float]:
    """Remaining fastest-work factor, range-normalized over remaining jobs.

    Jobs with more remaining minimum processing time score closer to 1; a
    degenerate range (all jobs equal) scores everyone 0.
    """
    remaining = state.remaining_jobs()
    sums = {
        job.id: sum(op.min_duration for op in state.remaining_ops(job)) for job in remaining
    }
    if not sums:
        return {}
    low = min(sums.values())
    high = max(sums.values())
    if high == low:
        return {job_id: 0.0 for job_id in sums}
    return {job_id: (value - low) / (high - low) for job_id, value in sums.items()}


def bottleneck_workload(state: LoopState) -> dict[int, float]:
    """Machine-pressure factor, normalized by the largest job score.

    Each remaining operation scores the reciprocal of its option count
    plus the share of remaining operations competing for its machines;
    jobs sum their operations' scores.
    """
    remaining = state.remaining_jobs()
    all_ops = [op for job in remaining for op in state.remaining_ops(job)]
    if not all_ops:
        return {}
    total_ops = len(all_ops)
    machine_load: dict[int, int] = {}
    for op in all_ops:
        for machine in op.machines:
            machine_load[machine] = machine_load.get(machine, 0) + 1
    scores = {}
    for job in remaining:
        total = 0.0
        for op in state.remaining_ops(job):
            shared = sum(machine_load[machine] for machine in op.machines)
            total += 1.0 / len(op.machines) + shared / total_ops
        scores[job.id] = total
    top = max(scores.values())
    return {job_id: value / top for job_id, value in scores.items()}


def bottleneck_priority(state: LoopState) -> dict[int, float]:
    """Priority factor: job priority over the instance's largest priority."""
    top = state.instance.max_priority
    return {job.id: job.priority / top for job in state.remaining_jobs()}


def bottleneck_combined(state: LoopState, weights: BottleneckWeights) -> dict[int, float]:
    """Quadratic-mean combination of the active bottleneck factors."""
    remaining = [job.id for job in state.remaining_jobs()]
    parts: list[tuple[float, dict[int, float]]] = []
    if weights.makespan > 0.0:
        parts.append((weights.makespan, bottleneck_makespan(state)))
    if weights.workload > 0.0:
        parts.append((weights.workload, bottleneck_workload(state)))
    if weights.priority > 0.0:
        parts.append((weights.priority, bottleneck_priority(state)))
    combined = {}
    for job_id in remaining:
        combined[job_id] = math.sqrt(
            sum(weight * factors[job_id] ** 2 for weight, factors in parts)
        )
    return combined


def select_subset(
    state: LoopState, weights: BottleneckWeights, num_jobs: int, ops_per_job: int
) -> Subset:
    """Top-scored remaining jobs (ties to the lower id), each contributing
    up to ``ops_per_job`` of its next unscheduled operations."""
    if num_jobs < 1 or ops_per_job < 1:
        raise ValueError("subset bounds must be at least 1")
    scores = bottleneck_combined(state, weights)
    if not scores:
        raise EmptySubsetError("no remaining jobs to select")
    ranked = sorted(scores, key=lambda job_id: (-scores[job_id], job_id))
    chosen = sorted(ranked[:num_jobs])
    selections = []
    for job_id in chosen:
        job = state.instance.jobs[job_id]
        ops = state.remaining_ops(job)[:ops_per_job]
        selections.append(JobSelection(job=job, ops=ops))
    return tuple(selections)


@dataclass(frozen=True)
class LoopRecord:
    """Diagnostics for one committed (or failed) loop."""

    loop: int
    jobs: tuple[int, ...]
    num_ops: int
    t_max: int
    vars_full: int
    vars_pruned: int
    attempts: int
    best_energy: float
    feasible: bool


def _subset_floors(state: LoopState, subset: Subset) -> dict[tuple[int, int], int]:
    """Earliest-start floors: committed predecessor finish, propagated
    through the slice at fastest durations."""
    floors: dict[tuple[int, int], int] = {}
    for sel in subset:
        running = state.job_end.get(sel.job.id, 0)
        for op in sel.ops:
            floors[(op.job, op.index)] = running
            effective = max(predecessor_time(sel.job, op.index), running)
            running = effective + op.min_duration
    return floors


def _blocked(state: LoopState, key: VarKey, duration: int) -> bool:
    intervals = state.machine_busy.get(key.machine)
    if not intervals:
        return False
    end = key.start + duration
    for busy_start, busy_end in intervals:
        if key.start < busy_end and busy_start < end:
            return True
    return False


def _prune_variables(state: LoopState, subset: Subset, windows) -> list[VarKey]:
    durations = {}
    for sel in subset:
        for op in sel.ops:
            for option in op.options:
                durations[(op.job, op.index, option.machine)] = option.duration
    keys = []
    for key in variables_for(subset, windows):
        duration = durations[(key.job, key.op, key.machine)]
        if not _blocked(state, key, duration):
            keys.append(key)
    return keys


def _ops_covered(subset: Subset) -> set[tuple[int, int]]:
    return {(op.job, op.index) for sel in subset for op in sel.ops}


def _candidate_entries(
    variables: Sequence[VarKey], bits: bytes, durations: Mapping[tuple[int, int, int], int]
) -> list[ScheduleEntry]:
    entries = []
    for i, key in enumerate(variables):
        if bits[i]:
            entries.append(
                ScheduleEntry(
                    job=key.job,
                    op=key.op,
                    machine=key.machine,
                    start=key.start,
                    duration=durations[(key.job, key.op, key.machine)],
                )
            )
    return entries


def _is_subset_feasible(entries: list[ScheduleEntry], subset: Subset) -> bool:
    """Exactly one start per selected op, job order kept, no overlap.

    Committed work needs no re-checking here: floors keep new starts after
    the committed predecessors and pruning removed variables that would
    touch a busy machine interval.
    """
    required = _ops_covered(subset)
    seen: dict[tuple[int, int], ScheduleEntry] = {}
    for entry in entries:
        key = (entry.job, entry.op)
        if key in seen:
            return False
        seen[key] = entry
    if len(seen) != len(required):
        return False
    for sel in subset:
        previous = None
        for op in sel.ops:
            entry = seen[(op.job, op.index)]
            if previous is not None and entry.start < previous.end:
                return False
            previous = entry
    by_machine: dict[int, list[ScheduleEntry]] = {}
    for entry in entries:
        by_machine.setdefault(entry.machine, []).append(entry)
    for machine_entries in by_machine.values():
        machine_entries.sort(key=lambda e: e.start)
        for a, b in zip(machine_entries, machine_entries[1:]):
            if b.start < a.end:
                return False
    return True


def _makespan_lower_bound(
    state: LoopState, subset: Subset, floors: Mapping[tuple[int, int], int]
) -> int:
    bound = state.horizon
    for sel in subset:
        chain = 0
        for op in sel.ops:
            earliest = predecessor_time(sel.job, op.index, floors[(op.job, op.index)])
            chain = max(chain, earliest) + op.min_duration
        bound = max(bound, chain)
    return bound


def _select_candidate(
    sample_set: SampleSet,
    subset: Subset,
    state: LoopState,
    durations: Mapping[tuple[int, int, int], int],
    makespan_first: bool,
    lower_bound: int,
):
    """Best feasible sample of a loop, or None.

    Samples arrive sorted by (energy, state).  Normally the minimal
    feasible energy wins, with ties broken by the smaller total makespan
    and then the lexicographically smaller state.  When the makespan
    objective is the only active one, feasible samples are ranked by total
    makespan first, which matches how runs are judged.
    """
    variables = sample_set.variables
    best = None
    best_key = None
    tied_energy = None
    for energy_value, bits in sample_set.records:
        if not makespan_first and tied_energy is not None and energy_value > tied_energy:
            break
        entries = _candidate_entries(variables, bits, durations)
        if not _is_subset_feasible(entries, subset):
            continue
        total_makespan = max([state.horizon] + [entry.end for entry in entries])
        if makespan_first:
            key = (total_makespan, energy_value, bits)
        else:
            key = (energy_value, total_makespan, bits)
            tied_energy = energy_value
        if best_key is None or key < best_key:
            best_key = key
            best = (entries, energy_value, total_makespan)
            if makespan_first and total_makespan <= lower_bound:
                break
    return best


def run_iterative(
    instance: Instance,
    params: LagrangeParams,
    sampler: Sampler,
    *,
    weights: BottleneckWeights | None = None,
    num_jobs: int | None = None,
    ops_per_job: int | None = None,
    t_est: float = 10.0,
    retries: int = 4,
    trace: list[LoopRecord] | None = None,
) -> Schedule:
    """Solve an instance loop by loop; returns a complete feasible schedule.

    ``num_jobs`` and ``ops_per_job`` bound each loop's subset (defaults
    cover the whole instance, giving a single loop).  Each loop estimates
    a horizon and, if the model turns out infeasible or the sampler finds
    no feasible sample, retries with a grown horizon: first by a doubling
    slack increment, then clamped to bounds that guarantee open windows
    and finally a serially-schedulable horizon.  Raises SolveFailedError
    when the retry budget is exhausted.
    """
    weights = weights or BottleneckWeights()
    if num_jobs is None:
        num_jobs = instance.num_jobs
    if ops_per_job is None:
        ops_per_job = max(len(job.operations) for job in instance.jobs)

    state = LoopState.initial(instance)
    loop_index = 0
    while not state.done:
        subset = select_subset(state, weights, num_jobs, ops_per_job)
        floors = _subset_floors(state, subset)
        durations = {
            (op.job, op.index, option.machine): option.duration
            for sel in subset
            for op in sel.ops
            for option in op.options
        }

        base = estimate_tmax(subset, t_est, state.horizon)
        a1, a2 = contention_factors(subset)
        grow = max(1, math.ceil(t_est * a1 * a2))
        min_viable = 0
        for sel in subset:
            for position, op in enumerate(sel.ops):
                earliest = predecessor_time(sel.job, op.index, floors[(op.job, op.index)])
                min_viable = max(min_viable, earliest + successor_time(sel.ops, position))
        start_base = max(
            [state.horizon]
            + [
                predecessor_time(sel.job, op.index, floors[(op.job, op.index)])
                for sel in subset
                for op in sel.ops
            ]
        )
        serial_bound = start_base + sum(
            op.min_duration for sel in subset for op in sel.ops
        )
        lower_bound = _makespan_lower_bound(state, subset, floors)
        makespan_first = params.alpha > 0.0 and params.beta == 0.0 and params.gamma == 0.0

        candidate = None
        t_max = base
        attempts = 0
        last_vars = (0, 0)
        for attempt in range(retries + 1):
            if attempt == 1:
                t_max = max(base + grow, min_viable)
                grow *= 2
            elif attempt >= 2:
                t_max = max(base + grow, min_viable, serial_bound)
                grow *= 2
            attempts = attempt + 1
            try:
                windows = build_windows(subset, t_max, floors)
            except InfeasibleHorizonError:
                continue
            keys = _prune_variables(state, subset, windows)
            covered = {(key.job, key.op) for key in keys}
            if covered != _ops_covered(subset):
                continue
            bqm = build_bqm(subset, windows, params, keys)
            last_vars = (unpruned_variable_count(subset, t_max), len(keys))
            sample_set = sampler(bqm)
            candidate = _select_candidate(
                sample_set, subset, state, durations, makespan_first, lower_bound
            )
            if candidate is not None:
                break

        if candidate is None:
            if trace is not None:
                trace.append(
                    LoopRecord(
                        loop=loop_index,
                        jobs=tuple(sel.job.id for sel in subset),
                        num_ops=sum(len(sel.ops) for sel in subset),
                        t_max=t_max,
                        vars_full=last_vars[0],
                        vars_pruned=last_vars[1],
                        attempts=attempts,
                        best_energy=math.nan,
                        feasible=False,
                    )
                )
            raise SolveFailedError(
                f"loop {loop_index}: no feasible sample after {attempts} attempts "
                f"(t_max reached {t_max})"
            )

        entries, energy_value, total_makespan = candidate
        state.commit(entries, {sel.job.id: len(sel.ops) for sel in subset})
        if trace is not None:
            trace.append(
                LoopRecord(
                    loop=loop_index,
                    jobs=tuple(sel.job.id for sel in subset),
                    num_ops=sum(len(sel.ops) for sel in subset),
                    t_max=t_max,
                    vars_full=last_vars[0],
                    vars_pruned=last_vars[1],
                    attempts=attempts,
                    best_energy=energy_value,
                    feasible=True,
                )
            )
        logger.debug(
            "loop %d: jobs %s, t_max %d, attempts %d, energy %.6g, makespan %d",
            loop_index,
            [sel.job.id for sel in subset],
            t_max,
            attempts,
            energy_value,
            total_makespan,
        )
        loop_index += 1

    return Schedule(entries=tuple(state.committed))
