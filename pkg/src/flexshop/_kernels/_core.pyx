# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampler kernels.

Operation-for-operation mirror of ``_pure.py``: the same splitmix64
streams, the same visit orders, the same floating-point summation orders.
Outputs are bit-for-bit identical to the pure-Python lane.
"""

from libc.math cimport exp
from libc.stdint cimport int64_t, uint64_t

import numpy as np

BACKEND = "compiled"

cdef double DOUBLE_UNIT = 1.0 / 9007199254740992.0  # 2**-53
cdef uint64_t GAMMA = 0x9E3779B97F4A7C15UL


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9UL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBUL
    return z ^ (z >> 31)


cdef inline uint64_t derive(uint64_t seed, uint64_t index) nogil:
    return mix64(mix64(seed) ^ ((index + 1) * GAMMA))


cdef inline uint64_t rng_next(uint64_t *state) nogil:
    state[0] = state[0] + GAMMA
    return mix64(state[0])


cdef inline double rng_double(uint64_t *state) nogil:
    return <double>(rng_next(state) >> 11) * DOUBLE_UNIT


cdef inline unsigned char rng_bit(uint64_t *state) nogil:
    return <unsigned char>(rng_next(state) >> 63)


cdef double c_energy(double[::1] lin, int64_t[::1] nbr_ptr, int64_t[::1] nbr_idx,
                     double[::1] nbr_w, unsigned char[::1] bits) nogil:
    cdef Py_ssize_t n = lin.shape[0]
    cdef Py_ssize_t i, s
    cdef int64_t j
    cdef double total = 0.0
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


cdef inline double c_delta(Py_ssize_t i, unsigned char[::1] bits, double[::1] lin,
                           int64_t[::1] nbr_ptr, int64_t[::1] nbr_idx,
                           double[::1] nbr_w) nogil:
    cdef double acc = lin[i]
    cdef Py_ssize_t s
    for s in range(nbr_ptr[i], nbr_ptr[i + 1]):
        if bits[nbr_idx[s]]:
            acc += nbr_w[s]
    if bits[i]:
        return -acc
    return acc


cdef _as_arrays(lin, nbr_ptr, nbr_idx, nbr_w):
    return (
        np.ascontiguousarray(lin, dtype=np.float64),
        np.ascontiguousarray(nbr_ptr, dtype=np.int64),
        np.ascontiguousarray(nbr_idx, dtype=np.int64),
        np.ascontiguousarray(nbr_w, dtype=np.float64),
    )


def energy_of_bits(lin, nbr_ptr, nbr_idx, nbr_w, bits):
    """Offset-free energy in canonical summation order."""
    a_lin, a_ptr, a_idx, a_w = _as_arrays(lin, nbr_ptr, nbr_idx, nbr_w)
    cdef unsigned char[::1] b = np.frombuffer(bytes(bits), dtype=np.uint8).copy()
    return c_energy(a_lin, a_ptr, a_idx, a_w, b)


def sa_run(lin, nbr_ptr, nbr_idx, nbr_w, num_restarts, num_sweeps, t_hot, t_cold, seed):
    """Simulated annealing; one (energy, bits) pair per restart."""
    a_lin, a_ptr, a_idx, a_w = _as_arrays(lin, nbr_ptr, nbr_idx, nbr_w)
    cdef double[::1] v_lin = a_lin
    cdef int64_t[::1] v_ptr = a_ptr
    cdef int64_t[::1] v_idx = a_idx
    cdef double[::1] v_w = a_w
    cdef Py_ssize_t n = v_lin.shape[0]
    cdef int c_restarts = num_restarts
    cdef int c_sweeps = num_sweeps
    cdef double c_hot = t_hot
    cdef double c_cold = t_cold
    cdef uint64_t c_seed = seed
    cdef uint64_t state
    cdef Py_ssize_t i, j2
    cdef int restart, sweep
    cdef double frac, temp, delta, current, best
    cdef bint accept

    bits_arr = np.zeros(n, dtype=np.uint8)
    best_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] bits = bits_arr
    cdef unsigned char[::1] best_bits = best_arr

    results = []
    for restart in range(c_restarts):
        state = derive(c_seed, <uint64_t>restart)
        for i in range(n):
            bits[i] = rng_bit(&state)
        current = c_energy(v_lin, v_ptr, v_idx, v_w, bits)
        best = current
        for i in range(n):
            best_bits[i] = bits[i]
        for sweep in range(c_sweeps):
            if c_sweeps > 1:
                frac = <double>sweep / <double>(c_sweeps - 1)
            else:
                frac = 0.0
            temp = c_hot * (c_cold / c_hot) ** frac
            for i in range(n):
                delta = c_delta(i, bits, v_lin, v_ptr, v_idx, v_w)
                if delta <= 0.0:
                    accept = True
                else:
                    accept = rng_double(&state) < exp(-delta / temp)
                if accept:
                    bits[i] ^= 1
                    current += delta
                    if current < best:
                        best = current
                        for j2 in range(n):
                            best_bits[j2] = bits[j2]
        results.append((c_energy(v_lin, v_ptr, v_idx, v_w, best_bits), best_arr.tobytes()))
    return results


def tabu_run(lin, nbr_ptr, nbr_idx, nbr_w, tenure, max_stall, num_restarts, seed):
    """Tabu search; one (energy, bits) pair per restart."""
    a_lin, a_ptr, a_idx, a_w = _as_arrays(lin, nbr_ptr, nbr_idx, nbr_w)
    cdef double[::1] v_lin = a_lin
    cdef int64_t[::1] v_ptr = a_ptr
    cdef int64_t[::1] v_idx = a_idx
    cdef double[::1] v_w = a_w
    cdef Py_ssize_t n = v_lin.shape[0]
    cdef int c_tenure = tenure
    cdef int c_stall_cap = max_stall
    cdef int c_restarts = num_restarts
    cdef uint64_t c_seed = seed
    cdef uint64_t state
    cdef Py_ssize_t i, s, chosen
    cdef int64_t j
    cdef int restart
    cdef long iteration, stall
    cdef double current, best, chosen_delta, delta, move, sign

    bits_arr = np.zeros(n, dtype=np.uint8)
    best_arr = np.zeros(n, dtype=np.uint8)
    deltas_arr = np.zeros(n, dtype=np.float64)
    tabu_arr = np.zeros(n, dtype=np.int64)
    cdef unsigned char[::1] bits = bits_arr
    cdef unsigned char[::1] best_bits = best_arr
    cdef double[::1] deltas = deltas_arr
    cdef int64_t[::1] tabu_until = tabu_arr

    results = []
    for restart in range(c_restarts):
        state = derive(c_seed, <uint64_t>restart)
        for i in range(n):
            bits[i] = rng_bit(&state)
        current = c_energy(v_lin, v_ptr, v_idx, v_w, bits)
        best = current
        for i in range(n):
            best_bits[i] = bits[i]
            deltas[i] = c_delta(i, bits, v_lin, v_ptr, v_idx, v_w)
            tabu_until[i] = 0
        iteration = 0
        stall = 0
        while stall < c_stall_cap:
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
            if bits[chosen]:
                move = 1.0
            else:
                move = -1.0
            for s in range(v_ptr[chosen], v_ptr[chosen + 1]):
                j = v_idx[s]
                if bits[j]:
                    sign = -1.0
                else:
                    sign = 1.0
                deltas[j] += sign * v_w[s] * move
            deltas[chosen] = -chosen_delta
            tabu_until[chosen] = iteration + c_tenure + 1
            if current < best:
                best = current
                for i in range(n):
                    best_bits[i] = bits[i]
                stall = 0
            else:
                stall += 1
            iteration += 1
        results.append((c_energy(v_lin, v_ptr, v_idx, v_w, best_bits), best_arr.tobytes()))
    return results


def exact_enum(lin, nbr_ptr, nbr_idx, nbr_w, limit=None):
    """Exhaustive Gray-code enumeration; up to ``limit`` lowest states."""
    a_lin, a_ptr, a_idx, a_w = _as_arrays(lin, nbr_ptr, nbr_idx, nbr_w)
    cdef double[::1] v_lin = a_lin
    cdef int64_t[::1] v_ptr = a_ptr
    cdef int64_t[::1] v_idx = a_idx
    cdef double[::1] v_w = a_w
    cdef Py_ssize_t n = v_lin.shape[0]
    if n == 0:
        return [(0.0, b"")]
    if n > 62:
        raise ValueError(f"exact enumeration over {n} variables is not supported")

    cdef uint64_t total = (<uint64_t>1) << n
    cdef uint64_t step, gray
    cdef Py_ssize_t flip, i
    cdef double current = 0.0

    energies_arr = np.empty(total, dtype=np.float64)
    bits_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] energies = energies_arr
    cdef unsigned char[::1] bits = bits_arr

    energies[0] = 0.0
    with nogil:
        for step in range(1, total):
            flip = 0
            while not (step >> flip) & 1:
                flip += 1
            current += c_delta(flip, bits, v_lin, v_ptr, v_idx, v_w)
            bits[flip] ^= 1
            energies[step] = current

    order = np.argsort(energies_arr, kind="stable")
    if limit is not None and int(limit) < order.shape[0]:
        order = order[: int(limit)]

    results = []
    cdef uint64_t picked
    for picked in order:
        gray = picked ^ (picked >> 1)
        for i in range(n):
            bits[i] = (gray >> i) & 1
        results.append((c_energy(v_lin, v_ptr, v_idx, v_w, bits), bits_arr.tobytes()))
    return results
