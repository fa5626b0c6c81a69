"""Schedules: decoding samples, feasibility checks, objectives, rendering.

A schedule is an ordered collection of entries (job, operation, machine,
start, duration).  Machine usage is half-open: an entry occupies
``[start, start + duration)``.  Decoding keeps whatever a sample selected,
including duplicate or missing operations; :func:`check_feasible` reports
such defects instead of hiding them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

from flexshop.instance import Instance
from flexshop.qubo import VarKey


class InfeasibleScheduleError(ValueError):
    """An objective was evaluated on an infeasible or incomplete schedule."""


class ScheduleFormatError(ValueError):
    """Malformed schedule CSV text."""


@dataclass(frozen=True, order=True)
class ScheduleEntry:
    """One scheduled operation."""

    job: int
    op: int
    machine: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class Schedule:
    """Entries in canonical order; may be partial or defective."""

    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    def __len__(self) -> int:
        return len(self.entries)

    def for_job(self, job: int) -> tuple[ScheduleEntry, ...]:
        return tuple(entry for entry in self.entries if entry.job == job)


class ViolationKind(enum.Enum):
    MISSING_OP = "missing_op"
    DUPLICATE_OP = "duplicate_op"
    ILLEGAL_MACHINE = "illegal_machine"
    PRECEDENCE = "precedence"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class Violation:
    """One feasibility defect, with a human-readable detail."""

    kind: ViolationKind
    detail: str


def decode(assignment: Mapping[VarKey, int], instance: Instance) -> Schedule:
    """Schedule selected by a sample: one entry per set variable."""
    entries = []
    for key, value in assignment.items():
        if not value:
            continue
        op = instance.jobs[key.job].operations[key.op]
        entries.append(
            ScheduleEntry(
                job=key.job,
                op=key.op,
                machine=key.machine,
                start=key.start,
                duration=op.duration_on(key.machine),
            )
        )
    return Schedule(entries=tuple(entries))


def _scan(
    entries: Iterable[ScheduleEntry],
    instance: Instance,
    required: set[tuple[int, int]],
) -> list[Violation]:
    """Feasibility defects of ``entries``; operations in ``required`` must
    appear exactly once, others may be absent."""
    entries = sorted(entries)
    violations: list[Violation] = []

    counts: dict[tuple[int, int], int] = {}
    for entry in entries:
        counts[(entry.job, entry.op)] = counts.get((entry.job, entry.op), 0) + 1

    for job, op in sorted(required):
        if counts.get((job, op), 0) == 0:
            violations.append(
                Violation(ViolationKind.MISSING_OP, f"operation ({job},{op}) is not scheduled")
            )
    for (job, op), count in sorted(counts.items()):
        if count > 1:
            violations.append(
                Violation(
                    ViolationKind.DUPLICATE_OP,
                    f"operation ({job},{op}) is scheduled {count} times",
                )
            )

    for entry in entries:
        operation = instance.jobs[entry.job].operations[entry.op]
        try:
            duration = operation.duration_on(entry.machine)
        except KeyError:
            violations.append(
                Violation(
                    ViolationKind.ILLEGAL_MACHINE,
                    f"operation ({entry.job},{entry.op}) cannot run on machine {entry.machine}",
                )
            )
            continue
        if duration != entry.duration:
            violations.append(
                Violation(
                    ViolationKind.ILLEGAL_MACHINE,
                    f"operation ({entry.job},{entry.op}) on machine {entry.machine} "
                    f"takes {duration}, entry says {entry.duration}",
                )
            )

    by_op: dict[tuple[int, int], list[ScheduleEntry]] = {}
    for entry in entries:
        by_op.setdefault((entry.job, entry.op), []).append(entry)
    for job in instance.jobs:
        for earlier, later in zip(job.operations, job.operations[1:]):
            first = by_op.get((job.id, earlier.index))
            second = by_op.get((job.id, later.index))
            if not first or not second or len(first) > 1 or len(second) > 1:
                continue
            if second[0].start < first[0].end:
                violations.append(
                    Violation(
                        ViolationKind.PRECEDENCE,
                        f"operation ({job.id},{later.index}) starts at {second[0].start} "
                        f"before ({job.id},{earlier.index}) ends at {first[0].end}",
                    )
                )

    by_machine: dict[int, list[ScheduleEntry]] = {}
    for entry in entries:
        by_machine.setdefault(entry.machine, []).append(entry)
    for machine in sorted(by_machine):
        machine_entries = by_machine[machine]
        for idx, a in enumerate(machine_entries):
            for b in machine_entries[idx + 1 :]:
                if a.job == b.job and a.op == b.op:
                    continue
                if a.start < b.end and b.start < a.end:
                    violations.append(
                        Violation(
                            ViolationKind.OVERLAP,
                            f"operations ({a.job},{a.op}) and ({b.job},{b.op}) overlap "
                            f"on machine {machine}",
                        )
                    )
    return violations


def check_feasible(schedule: Schedule, instance: Instance) -> list[Violation]:
    """All feasibility defects of a complete schedule; empty means feasible."""
    required = {(op.job, op.index) for op in instance.operations()}
    return _scan(schedule.entries, instance, required)


def _require_feasible(schedule: Schedule, instance: Instance):
    violations = check_feasible(schedule, instance)
    if violations:
        first = violations[0]
        raise InfeasibleScheduleError(
            f"schedule is infeasible ({len(violations)} violations; "
            f"first: {first.kind.value}: {first.detail})"
        )


def eval_makespan(schedule: Schedule, instance: Instance) -> int:
    """Completion time of the last operation (feasible schedules only)."""
    _require_feasible(schedule, instance)
    return max(entry.end for entry in schedule.entries)


def eval_workload(schedule: Schedule, instance: Instance) -> int:
    """Total busy machine time (feasible schedules only)."""
    _require_feasible(schedule, instance)
    return sum(entry.duration for entry in schedule.entries)


def eval_priority(schedule: Schedule, instance: Instance) -> float:
    """Priority-weighted normalized job completion (feasible schedules only).

    Per job: (its last finish / makespan) times (its priority / largest
    priority), summed over jobs.  Lower is better: important jobs finishing
    early shrink their share.
    """
    _require_feasible(schedule, instance)
    makespan = max(entry.end for entry in schedule.entries)
    max_priority = instance.max_priority
    total = 0.0
    for job in instance.jobs:
        finish = max(entry.end for entry in schedule.entries if entry.job == job.id)
        total += (finish / makespan) * (job.priority / max_priority)
    return total


CSV_HEADER = "job,op,machine,start,duration"


def write_csv(schedule: Schedule) -> str:
    """Render entries as CSV with a fixed header, canonically ordered."""
    lines = [CSV_HEADER]
    for entry in schedule.entries:
        lines.append(f"{entry.job},{entry.op},{entry.machine},{entry.start},{entry.duration}")
    return "\n".join(lines) + "\n"


def read_csv(text: str, instance: Instance) -> Schedule:
    """Parse schedule CSV; ids must exist in the instance."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ScheduleFormatError(f"expected header {CSV_HEADER!r}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ScheduleFormatError(f"line {lineno}: expected 5 fields, found {len(parts)}")
        try:
            job, op, machine, start, duration = (int(part) for part in parts)
        except ValueError:
            raise ScheduleFormatError(f"line {lineno}: non-integer field in {line!r}") from None
        if not 0 <= job < instance.num_jobs:
            raise ScheduleFormatError(f"line {lineno}: job {job} does not exist")
        if not 0 <= op < len(instance.jobs[job].operations):
            raise ScheduleFormatError(f"line {lineno}: operation ({job},{op}) does not exist")
        if not 0 <= machine < instance.num_machines:
            raise ScheduleFormatError(f"line {lineno}: machine {machine} does not exist")
        if start < 0 or duration < 1:
            raise ScheduleFormatError(f"line {lineno}: bad start or duration in {line!r}")
        entries.append(ScheduleEntry(job=job, op=op, machine=machine, start=start, duration=duration))
    return Schedule(entries=tuple(entries))


_PALETTE = (
    "#4e79a7",
    "#f28e2b",
    "#e15759",
    "#76b7b2",
    "#59a14f",
    "#edc948",
    "#b07aa1",
    "#ff9da7",
    "#9c755f",
    "#bab0ac",
)


def gantt_svg(schedule: Schedule, instance: Instance, title: str | None = None) -> str:
    """Deterministic Gantt chart: one row per machine, bars colored by job.

    The output contains no timestamps or random ids, so identical inputs
    produce identical bytes.
    """
    horizon = max((entry.end for entry in schedule.entries), default=1)
    scale = max(12, min(48, 960 // max(1, horizon)))
    row_height = 28
    left = 64
    top = 40
    width = left + horizon * scale + 16
    height = top + instance.num_machines * row_height + 24 + 16 * instance.num_jobs

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    heading = title if title is not None else instance.name
    lines.append(f'<text x="{left}" y="16" font-size="13">{heading}</text>')

    for machine in range(instance.num_machines):
        y = top + machine * row_height
        lines.append(
            f'<text x="8" y="{y + row_height - 10}" fill="#333">M{machine}</text>'
        )
        lines.append(
            f'<line x1="{left}" y1="{y + row_height - 4}" x2="{left + horizon * scale}" '
            f'y2="{y + row_height - 4}" stroke="#ccc"/>'
        )
    for tick in range(horizon + 1):
        x = left + tick * scale
        lines.append(
            f'<line x1="{x}" y1="{top - 4}" x2="{x}" '
            f'y2="{top + instance.num_machines * row_height - 4}" stroke="#eee"/>'
        )
        if horizon <= 40 or tick % 5 == 0:
            lines.append(f'<text x="{x - 3}" y="{top - 8}" fill="#888" font-size="9">{tick}</text>')

    for entry in schedule.entries:
        color = _PALETTE[entry.job % len(_PALETTE)]
        x = left + entry.start * scale
        y = top + entry.machine * row_height + 2
        bar_width = entry.duration * scale
        lines.append(
            f'<rect x="{x}" y="{y}" width="{bar_width}" height="{row_height - 10}" '
            f'fill="{color}" stroke="#333"/>'
        )
        lines.append(
            f'<text x="{x + 3}" y="{y + row_height - 16}" fill="white">'
            f"J{entry.job}.{entry.op}</text>"
        )

    legend_y = top + instance.num_machines * row_height + 12
    for job in instance.jobs:
        color = _PALETTE[job.id % len(_PALETTE)]
        y = legend_y + job.id * 16
        lines.append(f'<rect x="8" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        lines.append(
            f'<text x="24" y="{y}" fill="#333">job {job.id} (priority {job.priority})</text>'
        )

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
