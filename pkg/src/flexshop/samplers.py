"""Samplers over binary quadratic models.

Four entry points share one result type: exhaustive enumeration
(:func:`sample_exact`), simulated annealing (:func:`sample_sa`), tabu
search (:func:`sample_tabu`), and a hybrid decomposition loop
(:func:`solve_hybrid`) that refines the best state found by the SA and
tabu branches through fixed-context subproblems.  The hybrid subproblems
are solved either classically (exhaustively when small, otherwise by
annealing) or by a programmatically registered external backend.

All samplers are deterministic functions of the model and the
configuration seed.  Stored energies are recomputed from scratch in a
fixed summation order, so equal states always carry bit-identical
energies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Mapping, Sequence

from flexshop import _kernels
from flexshop.qubo import Bqm, VarKey
from flexshop.rng import derive_seed

_SEED_MASK = (1 << 64) - 1


class TooLargeError(ValueError):
    """The model exceeds the exhaustive sampler's variable cap."""


class BackendUnavailableError(RuntimeError):
    """The external hybrid backend was requested but none is registered."""


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs shared by all samplers; every field has a working default.

    ``t_hot=None`` means: use the largest absolute model weight.  The
    hybrid solver runs the SA and tabu branches with this exact
    configuration, so its round zero reproduces the standalone samplers.
    """

    seed: int = 0
    sa_restarts: int = 8
    sa_sweeps: int = 64
    t_hot: float | None = None
    t_cold: float = 0.01
    tabu_tenure: int = 10
    tabu_max_stall: int = 200
    tabu_restarts: int = 4
    hybrid_subproblem: int = 20
    hybrid_rounds: int = 2
    exact_cap: int = 24

    def __post_init__(self):
        if self.sa_restarts < 1 or self.sa_sweeps < 1:
            raise ValueError("SA restart and sweep counts must be at least 1")
        if not (self.t_cold > 0.0):
            raise ValueError(f"t_cold must be positive, got {self.t_cold}")
        if self.t_hot is not None and not (self.t_hot > self.t_cold):
            raise ValueError(f"t_hot ({self.t_hot}) must exceed t_cold ({self.t_cold})")
        if self.tabu_tenure < 0:
            raise ValueError("tabu tenure must be nonnegative")
        if self.tabu_max_stall < 1 or self.tabu_restarts < 1:
            raise ValueError("tabu stall limit and restart count must be at least 1")
        if self.hybrid_subproblem < 1:
            raise ValueError("hybrid subproblem size must be at least 1")
        if self.hybrid_rounds < 0:
            raise ValueError("hybrid round count must be nonnegative")
        if self.exact_cap < 1:
            raise ValueError("exact cap must be at least 1")


class SampleSet:
    """Samples sorted by energy; ties by lexicographically smallest state.

    ``records`` holds (energy, bits) pairs where ``bits`` is one byte per
    variable in canonical variable order.  Iteration and :attr:`samples`
    materialize assignment dicts on demand.
    """

    def __init__(
        self,
        variables: tuple[VarKey, ...],
        records: list[tuple[float, bytes]],
        sampler: str,
        info: dict | None = None,
    ):
        self.variables = variables
        self.records = sorted(records, key=lambda rec: (rec[0], rec[1]))
        self.sampler = sampler
        self.info = info or {}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[dict[VarKey, int], float]]:
        for energy_value, bits in self.records:
            yield self.assignment_of(bits), energy_value

    @property
    def samples(self) -> list[tuple[dict[VarKey, int], float]]:
        return list(self)

    def assignment_of(self, bits: bytes) -> dict[VarKey, int]:
        return {key: bits[i] for i, key in enumerate(self.variables)}

    def best(self) -> tuple[dict[VarKey, int], float]:
        """Lowest-energy sample."""
        if not self.records:
            raise ValueError("sample set is empty")
        energy_value, bits = self.records[0]
        return self.assignment_of(bits), energy_value

    @property
    def lowest_energy(self) -> float:
        if not self.records:
            raise ValueError("sample set is empty")
        return self.records[0][0]


def compile_bqm(bqm: Bqm) -> tuple[list[float], list[int], list[int], list[float]]:
    """Flatten a Bqm for the kernels: linear array plus symmetric CSR
    adjacency with neighbor lists sorted ascending."""
    index = {key: i for i, key in enumerate(bqm.variables)}
    n = len(bqm.variables)
    lin = [0.0] * n
    for key, weight in bqm.linear.items():
        lin[index[key]] = weight
    adjacency: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (a, b), weight in bqm.quadratic.items():
        ia, ib = index[a], index[b]
        adjacency[ia].append((ib, weight))
        adjacency[ib].append((ia, weight))
    nbr_ptr = [0]
    nbr_idx: list[int] = []
    nbr_w: list[float] = []
    for neighbors in adjacency:
        neighbors.sort()
        for j, weight in neighbors:
            nbr_idx.append(j)
            nbr_w.append(weight)
        nbr_ptr.append(len(nbr_idx))
    return lin, nbr_ptr, nbr_idx, nbr_w


def _finalize(
    bqm: Bqm,
    raw_records: list[tuple[float, bytes]],
    sampler: str,
    info: dict,
) -> SampleSet:
    records = [(energy_value + bqm.offset, bits) for energy_value, bits in raw_records]
    return SampleSet(bqm.variables, records, sampler, info)


def max_abs_weight(bqm: Bqm) -> float:
    """Largest absolute linear or quadratic weight; 0.0 if none."""
    largest = 0.0
    for weight in bqm.linear.values():
        largest = max(largest, abs(weight))
    for weight in bqm.quadratic.values():
        largest = max(largest, abs(weight))
    return largest


def _resolve_t_hot(bqm: Bqm, config: SamplerConfig) -> float:
    if config.t_hot is not None:
        return config.t_hot
    auto = max_abs_weight(bqm)
    return max(auto, 2.0 * config.t_cold, 1.0)


def sample_exact(bqm: Bqm, cap: int = 24, limit: int | None = None) -> SampleSet:
    """Exhaustively enumerate all states; raises TooLargeError over ``cap``.

    With ``limit`` set, only the best ``limit`` states (by energy, ties by
    enumeration order) are returned; memory otherwise grows as 2^n.
    """
    n = bqm.num_variables
    if n > cap:
        raise TooLargeError(f"model has {n} variables; exhaustive cap is {cap}")
    lin, nbr_ptr, nbr_idx, nbr_w = compile_bqm(bqm)
    started = time.perf_counter()
    raw = _kernels.exact_enum(lin, nbr_ptr, nbr_idx, nbr_w, limit)
    wall = time.perf_counter() - started
    info = {
        "cap": cap,
        "limit": limit,
        "wall_time_s": wall,
        "lane": _kernels.BACKEND,
    }
    return _finalize(bqm, raw, "exact", info)


def sample_sa(bqm: Bqm, config: SamplerConfig | None = None) -> SampleSet:
    """Simulated annealing; one sample per restart."""
    config = config or SamplerConfig()
    lin, nbr_ptr, nbr_idx, nbr_w = compile_bqm(bqm)
    t_hot = _resolve_t_hot(bqm, config)
    started = time.perf_counter()
    raw = _kernels.sa_run(
        lin,
        nbr_ptr,
        nbr_idx,
        nbr_w,
        config.sa_restarts,
        config.sa_sweeps,
        t_hot,
        config.t_cold,
        config.seed & _SEED_MASK,
    )
    wall = time.perf_counter() - started
    info = {
        "restarts": config.sa_restarts,
        "sweeps": config.sa_sweeps,
        "t_hot": t_hot,
        "t_cold": config.t_cold,
        "wall_time_s": wall,
        "lane": _kernels.BACKEND,
    }
    return _finalize(bqm, raw, "sa", info)


def sample_tabu(bqm: Bqm, config: SamplerConfig | None = None) -> SampleSet:
    """Tabu search; one sample per restart."""
    config = config or SamplerConfig()
    lin, nbr_ptr, nbr_idx, nbr_w = compile_bqm(bqm)
    started = time.perf_counter()
    raw = _kernels.tabu_run(
        lin,
        nbr_ptr,
        nbr_idx,
        nbr_w,
        config.tabu_tenure,
        config.tabu_max_stall,
        config.tabu_restarts,
        config.seed & _SEED_MASK,
    )
    wall = time.perf_counter() - started
    info = {
        "tenure": config.tabu_tenure,
        "max_stall": config.tabu_max_stall,
        "restarts": config.tabu_restarts,
        "wall_time_s": wall,
        "lane": _kernels.BACKEND,
    }
    return _finalize(bqm, raw, "tabu", info)


ExternalBackend = Callable[[Bqm], SampleSet]

_external_backend: ExternalBackend | None = None


def register_external_backend(backend: ExternalBackend | None):
    """Register (or clear, with None) the hybrid external solver.

    The callable receives a fixed-context sub-model whose energies match
    the full model after merging, and must return a SampleSet over exactly
    the sub-model's variables.
    """
    global _external_backend
    _external_backend = backend


def external_backend() -> ExternalBackend | None:
    return _external_backend


def build_sub_bqm(bqm: Bqm, assignment: Mapping[VarKey, int], chosen: Sequence[VarKey]) -> Bqm:
    """Restrict a model to ``chosen`` variables with the rest fixed.

    The remaining variables keep the values given in ``assignment``; their
    contributions move into the sub-model's linear terms and offset, so
    for any sub-assignment s: sub_energy(s) equals the full energy of
    ``assignment`` overridden by s on ``chosen``.
    """
    from flexshop.qubo import energy as full_energy

    sub_vars = tuple(sorted(chosen))
    sub_set = set(sub_vars)
    if len(sub_vars) != len(sub_set):
        raise ValueError("duplicate variables in subproblem")
    known = set(bqm.variables)
    for key in sub_vars:
        if key not in known:
            raise ValueError(f"subproblem variable {key} is not in the model")

    context = dict(assignment)
    for key in sub_vars:
        context[key] = 0
    offset = full_energy(bqm, context)

    linear: dict[VarKey, float] = {key: bqm.linear.get(key, 0.0) for key in sub_vars}
    quadratic: dict[tuple[VarKey, VarKey], float] = {}
    for (a, b), weight in bqm.quadratic.items():
        a_in = a in sub_set
        b_in = b in sub_set
        if a_in and b_in:
            quadratic[(a, b)] = weight
        elif a_in and context[b]:
            linear[a] += weight
        elif b_in and context[a]:
            linear[b] += weight
    linear = {key: weight for key, weight in sorted(linear.items()) if weight != 0.0}
    quadratic = dict(sorted(quadratic.items()))
    return Bqm(variables=sub_vars, linear=linear, quadratic=quadratic, offset=offset)


def _impacts(
    bits: bytes,
    lin: list[float],
    nbr_ptr: list[int],
    nbr_idx: list[int],
    nbr_w: list[float],
) -> list[float]:
    """Flip delta of every variable in the given state."""
    deltas = []
    for i in range(len(lin)):
        acc = lin[i]
        for s in range(nbr_ptr[i], nbr_ptr[i + 1]):
            if bits[nbr_idx[s]]:
                acc += nbr_w[s]
        deltas.append(-acc if bits[i] else acc)
    return deltas


def solve_hybrid(bqm: Bqm, config: SamplerConfig | None = None, backend: str = "classical") -> SampleSet:
    """Two-branch start (SA and tabu with this exact config), then rounds
    of fixed-context subproblem refinement around the incumbent.

    Each round selects the ``hybrid_subproblem`` variables with the
    largest absolute flip delta at the incumbent, solves the restricted
    model (classically, or through the registered external backend), and
    keeps merged states; the incumbent moves only on strict improvement.
    The result pools all branch and merged samples, duplicates collapsed.
    """
    config = config or SamplerConfig()
    if backend not in ("classical", "external"):
        raise ValueError(f"unknown hybrid backend {backend!r}")
    if backend == "external" and _external_backend is None:
        raise BackendUnavailableError("no external backend registered")

    started = time.perf_counter()
    sa_set = sample_sa(bqm, config)
    tabu_set = sample_tabu(bqm, config)
    pool: dict[bytes, float] = {}
    for energy_value, bits in sa_set.records + tabu_set.records:
        pool.setdefault(bits, energy_value)

    n = bqm.num_variables
    rounds_done = 0
    if n > 0:
        lin, nbr_ptr, nbr_idx, nbr_w = compile_bqm(bqm)
        var_index = {key: i for i, key in enumerate(bqm.variables)}
        incumbent_energy, incumbent = min(
            ((energy_value, bits) for bits, energy_value in pool.items()),
            key=lambda rec: (rec[0], rec[1]),
        )
        for round_index in range(config.hybrid_rounds):
            deltas = _impacts(incumbent, lin, nbr_ptr, nbr_idx, nbr_w)
            ranked = sorted(range(n), key=lambda i: (-abs(deltas[i]), i))
            chosen_idx = sorted(ranked[: min(config.hybrid_subproblem, n)])
            chosen = [bqm.variables[i] for i in chosen_idx]
            sub_bqm = build_sub_bqm(bqm, _bits_to_assignment(bqm, incumbent), chosen)

            if backend == "external":
                sub_set = _external_backend(sub_bqm)
                if not isinstance(sub_set, SampleSet) or tuple(sub_set.variables) != tuple(sub_bqm.variables):
                    raise BackendUnavailableError(
                        "external backend returned an invalid sample set"
                    )
            elif sub_bqm.num_variables <= min(config.exact_cap, 20):
                sub_set = sample_exact(sub_bqm, cap=max(config.exact_cap, 20), limit=128)
            else:
                sub_config = replace(config, seed=derive_seed(config.seed, 101 + round_index))
                sub_set = sample_sa(sub_bqm, sub_config)

            keep = 128 if n <= 64 else 16
            sub_index = {key: i for i, key in enumerate(sub_bqm.variables)}
            for _, sub_bits in sub_set.records[:keep]:
                merged = bytearray(incumbent)
                for key, sub_i in sub_index.items():
                    merged[var_index[key]] = sub_bits[sub_i]
                merged_bytes = bytes(merged)
                if merged_bytes not in pool:
                    merged_energy = (
                        _kernels.energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, merged_bytes)
                        + bqm.offset
                    )
                    pool[merged_bytes] = merged_energy
            rounds_done += 1
            best_energy, best_bits = min(
                ((energy_value, bits) for bits, energy_value in pool.items()),
                key=lambda rec: (rec[0], rec[1]),
            )
            if best_energy < incumbent_energy:
                incumbent_energy, incumbent = best_energy, best_bits

    wall = time.perf_counter() - started
    info = {
        "backend": backend,
        "rounds": rounds_done,
        "subproblem": config.hybrid_subproblem,
        "wall_time_s": wall,
        "lane": _kernels.BACKEND,
    }
    records = [(energy_value, bits) for bits, energy_value in pool.items()]
    return SampleSet(bqm.variables, records, f"hybrid-{backend}", info)


def _bits_to_assignment(bqm: Bqm, bits: bytes) -> dict[VarKey, int]:
    return {key: bits[i] for i, key in enumerate(bqm.variables)}
