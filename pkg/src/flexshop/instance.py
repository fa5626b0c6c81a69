"""Problem instances: jobs, operations, machine options, priorities.

The text format is the classic flexible job shop layout: a header line with
the job count, machine count, and an (ignored) flexibility figure, then one
line per job listing its operation count followed, per operation, by the
number of machine options and the (machine, duration) pairs.  Machines are
1-based in files and 0-based in memory.  An optional ``#priorities`` block
after the job lines carries one integer weight per job.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator

from flexshop.rng import Rng, derive_seed


class InstanceError(ValueError):
    """Base class for instance construction and parsing failures."""


class InstanceSyntaxError(InstanceError):
    """Malformed instance text; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class MachineIndexError(InstanceError):
    """A machine index outside the declared machine count."""


class EmptyInstanceError(InstanceError):
    """An instance, job, or operation with nothing in it."""


class PriorityRangeError(InstanceError):
    """An invalid priority value or priority sampling range."""


@dataclass(frozen=True)
class MachineOption:
    """One way to run an operation: a machine and the time it takes."""

    machine: int
    duration: int


@dataclass(frozen=True)
class Operation:
    """One step of a job, with the machine options able to perform it."""

    job: int
    index: int
    options: tuple[MachineOption, ...]

    @property
    def min_duration(self) -> int:
        """Fastest duration over the operation's machine options."""
        return min(opt.duration for opt in self.options)

    @property
    def max_duration(self) -> int:
        """Slowest duration over the operation's machine options."""
        return max(opt.duration for opt in self.options)

    @property
    def machines(self) -> frozenset[int]:
        """Set of machines able to perform this operation."""
        return frozenset(opt.machine for opt in self.options)

    def duration_on(self, machine: int) -> int:
        """Duration on a specific machine; raises KeyError if not offered."""
        for opt in self.options:
            if opt.machine == machine:
                return opt.duration
        raise KeyError(f"operation ({self.job},{self.index}) cannot run on machine {machine}")


@dataclass(frozen=True)
class Job:
    """An ordered chain of operations with an integer priority weight."""

    id: int
    priority: int
    operations: tuple[Operation, ...]


@dataclass(frozen=True)
class Instance:
    """Immutable problem instance."""

    name: str
    num_machines: int
    jobs: tuple[Job, ...]

    def __post_init__(self):
        if not self.jobs:
            raise EmptyInstanceError("instance has no jobs")
        if self.num_machines < 1:
            raise EmptyInstanceError("instance has no machines")
        for job in self.jobs:
            if job.priority < 1:
                raise PriorityRangeError(f"job {job.id} has priority {job.priority}; must be >= 1")
            if not job.operations:
                raise EmptyInstanceError(f"job {job.id} has no operations")
            for op in job.operations:
                if not op.options:
                    raise EmptyInstanceError(f"operation ({op.job},{op.index}) has no machine options")
                for opt in op.options:
                    if not 0 <= opt.machine < self.num_machines:
                        raise MachineIndexError(
                            f"operation ({op.job},{op.index}) references machine "
                            f"{opt.machine}; valid range is 0..{self.num_machines - 1}"
                        )
                    if opt.duration < 1:
                        raise InstanceError(
                            f"operation ({op.job},{op.index}) has non-positive duration "
                            f"{opt.duration} on machine {opt.machine}"
                        )

    @property
    def num_jobs(self) -> int:
        return len(self.jobs)

    @property
    def num_operations(self) -> int:
        return sum(len(job.operations) for job in self.jobs)

    @property
    def max_priority(self) -> int:
        return max(job.priority for job in self.jobs)

    def operations(self) -> Iterator[Operation]:
        """All operations in job order."""
        for job in self.jobs:
            yield from job.operations


@dataclass
class _Token:
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"\S+")


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for match in _TOKEN_RE.finditer(line):
            tokens.append(_Token(match.group(), lineno, match.start() + 1))
    return tokens


class _Reader:
    """Sequential token reader with located error reporting."""

    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        last = self.tokens[-1] if self.tokens else None
        self.end_line = last.line if last else 1
        self.end_column = last.column + len(last.text) if last else 1

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, what: str) -> _Token:
        if self.done():
            raise InstanceSyntaxError(f"unexpected end of input; expected {what}", self.end_line, self.end_column)
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def take_int(self, what: str, minimum: int | None = None) -> tuple[int, _Token]:
        token = self.take(what)
        try:
            value = int(token.text)
        except ValueError:
            raise InstanceSyntaxError(
                f"expected {what}, found {token.text!r}", token.line, token.column
            ) from None
        if minimum is not None and value < minimum:
            raise InstanceSyntaxError(f"{what} must be >= {minimum}, found {value}", token.line, token.column)
        return value, token


PRIORITY_MARKER = "#priorities"


def parse_instance(text: str, name: str = "instance") -> Instance:
    """Parse instance text; raises located InstanceSyntaxError on bad input."""
    reader = _Reader(text)
    if reader.done():
        raise EmptyInstanceError("instance text is empty")
    num_jobs, _ = reader.take_int("job count", minimum=1)
    num_machines, _ = reader.take_int("machine count", minimum=1)
    reader.take_int("flexibility figure")  # informational, not used

    jobs = []
    for job_id in range(num_jobs):
        num_ops, _ = reader.take_int(f"operation count of job {job_id}", minimum=1)
        ops = []
        for op_index in range(num_ops):
            num_options, _ = reader.take_int(
                f"option count of operation ({job_id},{op_index})", minimum=1
            )
            options = []
            for _ in range(num_options):
                machine, machine_tok = reader.take_int("machine index", minimum=None)
                if not 1 <= machine <= num_machines:
                    raise MachineIndexError(
                        f"line {machine_tok.line}, column {machine_tok.column}: machine index "
                        f"{machine} out of range 1..{num_machines}"
                    )
                duration, _ = reader.take_int("duration", minimum=1)
                options.append(MachineOption(machine=machine - 1, duration=duration))
            ops.append(Operation(job=job_id, index=op_index, options=tuple(options)))
        jobs.append(Job(id=job_id, priority=1, operations=tuple(ops)))

    token = reader.peek()
    if token is not None and token.text == PRIORITY_MARKER:
        reader.take("priority marker")
        priorities = []
        for job_id in range(num_jobs):
            value, value_tok = reader.take_int(f"priority of job {job_id}")
            if value < 1:
                raise PriorityRangeError(
                    f"line {value_tok.line}, column {value_tok.column}: priority of job "
                    f"{job_id} must be >= 1, found {value}"
                )
            priorities.append(value)
        jobs = [replace(job, priority=pr) for job, pr in zip(jobs, priorities)]

    token = reader.peek()
    if token is not None:
        raise InstanceSyntaxError(f"unexpected trailing token {token.text!r}", token.line, token.column)

    return Instance(name=name, num_machines=num_machines, jobs=tuple(jobs))


def load_instance(path) -> Instance:
    """Read and parse an instance file; the name is the file stem."""
    import pathlib

    p = pathlib.Path(path)
    return parse_instance(p.read_text(), name=p.stem)


def serialize(instance: Instance) -> str:
    """Render an instance back to text; re-parsing yields an equal instance.

    The flexibility figure is emitted as the mean option count rounded to the
    nearest integer.  The priority block is only written when some priority
    differs from the default of 1.
    """
    total_options = sum(len(op.options) for op in instance.operations())
    flexibility = max(1, round(total_options / instance.num_operations))
    lines = [f"{instance.num_jobs} {instance.num_machines} {flexibility}"]
    for job in instance.jobs:
        parts = [str(len(job.operations))]
        for op in job.operations:
            parts.append(str(len(op.options)))
            for opt in op.options:
                parts.append(str(opt.machine + 1))
                parts.append(str(opt.duration))
        lines.append(" ".join(parts))
    if any(job.priority != 1 for job in instance.jobs):
        lines.append(PRIORITY_MARKER)
        lines.append(" ".join(str(job.priority) for job in instance.jobs))
    return "\n".join(lines) + "\n"


def assign_priorities(instance: Instance, seed: int, low: int = 1, high: int = 10) -> Instance:
    """Return a copy with priorities drawn uniformly from [low, high]."""
    if low < 1 or high < low:
        raise PriorityRangeError(f"invalid priority range [{low}, {high}]")
    rng = Rng(derive_seed(seed, 0x7072))
    span = high - low + 1
    jobs = tuple(
        replace(job, priority=low + rng.next_below(span)) for job in instance.jobs
    )
    return replace(instance, jobs=jobs)
