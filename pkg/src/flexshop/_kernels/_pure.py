"""Pure-Python sampler kernels.

These are the reference implementations of the hot loops.  The compiled
module in ``_core.pyx`` mirrors them operation for operation: identical
random streams, identical visit orders, identical floating-point summation
orders.  Results from the two lanes are bit-for-bit equal.

The model arrives flattened: ``lin[i]`` is the linear weight of variable
``i``, and the quadratic terms sit in a symmetric adjacency in compressed
sparse row form (``nbr_ptr``, ``nbr_idx``, ``nbr_w``) with each neighbor
list sorted ascending.  Energies returned here exclude the model offset;
the caller adds it once.  States travel as ``bytes`` with one 0/1 per
variable.
"""

from __future__ import annotations

import heapq
import math

from flexshop.rng import Rng, derive_seed

BACKEND = "pure"


def energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, bits) -> float:
    """Offset-free energy, summed in canonical order.

    Linear terms come first in variable order, then each quadratic pair
    once at its lower endpoint, neighbors ascending.
    """
    total = 0.0
    n = len(lin)
    for i in range(n):
        if bits[i]:
            total += lin[i]
    for i in range(n):
        if bits[i]:
            for s in range(nbr_ptr[i], nbr_ptr[i + 1]):
                j = nbr_idx[s]
                if j > i and bits[j]:
                    total += nbr_w[s]
    return total


def _flip_delta(i, bits, lin, nbr_ptr, nbr_idx, nbr_w) -> float:
    """Energy change of flipping variable ``i`` in the current state."""
    acc = lin[i]
    for s in range(nbr_ptr[i], nbr_ptr[i + 1]):
        if bits[nbr_idx[s]]:
            acc += nbr_w[s]
    return -acc if bits[i] else acc


def _random_state(rng: Rng, n: int) -> bytearray:
    bits = bytearray(n)
    for i in range(n):
        bits[i] = rng.next_bit()
    return bits


def sa_run(lin, nbr_ptr, nbr_idx, nbr_w, num_restarts, num_sweeps, t_hot, t_cold, seed):
    """Simulated annealing; returns one (energy, bits) pair per restart.

    Each restart owns an independent derived stream.  A sweep visits the
    variables in index order under a geometric temperature ramp from
    ``t_hot`` to ``t_cold``; moves are Metropolis-accepted.  The returned
    energy of the best-seen state is recomputed from scratch.
    """
    n = len(lin)
    results = []
    for restart in range(num_restarts):
        rng = Rng(derive_seed(seed, restart))
        bits = _random_state(rng, n)
        current = energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, bits)
        best_bits = bytes(bits)
        best = current
        for sweep in range(num_sweeps):
            if num_sweeps > 1:
                frac = sweep / (num_sweeps - 1)
            else:
                frac = 0.0
            temp = t_hot * (t_cold / t_hot) ** frac
            for i in range(n):
                delta = _flip_delta(i, bits, lin, nbr_ptr, nbr_idx, nbr_w)
                if delta <= 0.0:
                    accept = True
                else:
                    accept = rng.next_double() < math.exp(-delta / temp)
                if accept:
                    bits[i] ^= 1
                    current += delta
                    if current < best:
                        best = current
                        best_bits = bytes(bits)
        results.append((energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, best_bits), best_bits))
    return results


def tabu_run(lin, nbr_ptr, nbr_idx, nbr_w, tenure, max_stall, num_restarts, seed):
    """Tabu search; returns one (energy, bits) pair per restart.

    Steepest-descent moves over cached flip deltas.  A flipped variable is
    blocked for ``tenure`` iterations unless flipping it would beat the
    best state seen in the restart (aspiration).  If every move is blocked
    and none aspirates, the blocked move with the smallest delta is taken.
    A restart stops after ``max_stall`` consecutive non-improving moves.
    """
    n = len(lin)
    results = []
    for restart in range(num_restarts):
        rng = Rng(derive_seed(seed, restart))
        bits = _random_state(rng, n)
        current = energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, bits)
        best_bits = bytes(bits)
        best = current
        deltas = [_flip_delta(i, bits, lin, nbr_ptr, nbr_idx, nbr_w) for i in range(n)]
        tabu_until = [0] * n
        iteration = 0
        stall = 0
        while stall < max_stall:
            chosen = -1
            chosen_delta = 0.0
            for i in range(n):
                delta = deltas[i]
                if tabu_until[i] <= iteration or current + delta < best:
                    if chosen < 0 or delta < chosen_delta:
                        chosen = i
                        chosen_delta = delta
            if chosen < 0:
                for i in range(n):
                    if chosen < 0 or deltas[i] < chosen_delta:
                        chosen = i
                        chosen_delta = deltas[i]
            bits[chosen] ^= 1
            current += chosen_delta
            move = 1.0 if bits[chosen] else -1.0
            for s in range(nbr_ptr[chosen], nbr_ptr[chosen + 1]):
                j = nbr_idx[s]
                sign = -1.0 if bits[j] else 1.0
                deltas[j] += sign * nbr_w[s] * move
            deltas[chosen] = -chosen_delta
            tabu_until[chosen] = iteration + tenure + 1
            if current < best:
                best = current
                best_bits = bytes(bits)
                stall = 0
            else:
                stall += 1
            iteration += 1
        results.append((energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, best_bits), best_bits))
    return results


def exact_enum(lin, nbr_ptr, nbr_idx, nbr_w, limit=None):
    """Exhaustive enumeration; returns up to ``limit`` lowest states.

    Walks all 2^n states along a binary-reflected Gray code, tracking the
    energy incrementally.  States are ranked by (tracked energy, walk
    index); the kept states' energies are then recomputed from scratch.
    With ``limit=None`` every state is returned.
    """
    n = len(lin)
    if n == 0:
        return [(0.0, b"")]
    if n > 62:
        raise ValueError(f"exact enumeration over {n} variables is not supported")
    total = 1 << n

    def walk():
        bits = bytearray(n)
        current = 0.0
        yield current, 0
        for step in range(1, total):
            flip = (step & -step).bit_length() - 1
            current += _flip_delta(flip, bits, lin, nbr_ptr, nbr_idx, nbr_w)
            bits[flip] ^= 1
            yield current, step

    if limit is None or limit >= total:
        picked = sorted(walk())
    else:
        picked = heapq.nsmallest(limit, walk())

    results = []
    for _, step in picked:
        gray = step ^ (step >> 1)
        bits = bytes((gray >> i) & 1 for i in range(n))
        results.append((energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, bits), bits))
    return results
