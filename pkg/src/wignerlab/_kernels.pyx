# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels. Must stay bit-identical to _pykernels.py."""

from libc.stdint cimport int64_t, uint8_t, uint64_t

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _derive(uint64_t seed, uint64_t index) nogil:
    return _mix64(seed ^ _mix64(index + 1))


cdef inline double _uniform(uint64_t *state) nogil:
    state[0] = state[0] + GAMMA
    return (_mix64(state[0]) >> 11) * INV_2_53


cdef inline int64_t _pick_slice(const double[:] probs, const uint8_t[:] alive,
                                int64_t s, int64_t c, double u) nogil:
    cdef double cum = 0.0
    cdef int64_t last = -1
    cdef int64_t i
    for i in range(c):
        cum += probs[s + i]
        if alive[s + i]:
            last = i
            if u < cum:
                return i
    return last


def mix64(z):
    return _mix64(<uint64_t>(z & 0xFFFFFFFFFFFFFFFF))


def derive_state(seed, index):
    return _derive(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF),
                   <uint64_t>(index & 0xFFFFFFFFFFFFFFFF))


def next_u64(state):
    cdef uint64_t s = <uint64_t>(state & 0xFFFFFFFFFFFFFFFF)
    s = s + GAMMA
    return s, _mix64(s)


def u64_to_uniform(x):
    return (<uint64_t>x >> 11) * INV_2_53


def pick(probs, alive, u):
    cdef double cum = 0.0
    cdef Py_ssize_t last = -1
    cdef Py_ssize_t i
    for i in range(len(probs)):
        cum += probs[i]
        if alive[i]:
            last = i
            if u < cum:
                return i
    return last


def walk_batch(uint64_t seed, int64_t start, int64_t n,
               const int64_t[:] node_child_start,
               const int64_t[:] node_child_count,
               const int64_t[:] node_leaf,
               const int64_t[:] child_node,
               const double[:] child_prob,
               const uint8_t[:] child_alive,
               int64_t n_readouts,
               const int64_t[:] readout_start,
               const int64_t[:] readout_count,
               const double[:] readout_prob,
               const uint8_t[:] readout_alive,
               int64_t[:] out_leaf,
               int64_t[:] out_readout):
    cdef int64_t r, node, s, c, j, leaf, k, slot
    cdef uint64_t state
    cdef double u
    with nogil:
        for r in range(n):
            state = _derive(seed, <uint64_t>(start + r))
            node = 0
            while node_child_count[node] > 0:
                u = _uniform(&state)
                s = node_child_start[node]
                c = node_child_count[node]
                j = _pick_slice(child_prob, child_alive, s, c, u)
                node = child_node[s + j]
            leaf = node_leaf[node]
            out_leaf[r] = leaf
            for k in range(n_readouts):
                u = _uniform(&state)
                slot = leaf * n_readouts + k
                out_readout[r * n_readouts + k] = _pick_slice(
                    readout_prob, readout_alive, readout_start[slot],
                    readout_count[slot], u)
