# cython: language_level=3
"""Compiled hot loops. Must stay draw-for-draw identical to _pykernels.py."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t, uint8_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t splitmix64(uint64_t x) nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double to_uniform(uint64_t h) nogil:
    return <double>(h >> 11) * INV53


def sandpile_stabilize(cnp.int64_t[::1] mass_in, const cnp.int64_t[:, ::1] nbr,
                       int64_t t, int64_t cap, bint random_order=False,
                       uint64_t order_seed=0):
    cdef Py_ssize_t n = mass_in.shape[0], deg = nbr.shape[1]
    mass_arr = np.array(mass_in, dtype=np.int64, copy=True)
    odo_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] mass = mass_arr
    cdef cnp.int64_t[::1] odo = odo_arr
    cdef cnp.int64_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] pos = np.full(n, -1, dtype=np.int64)
    cdef Py_ssize_t head = 0, size = 0, i, j, k, slot, last
    cdef int64_t total = 0
    cdef uint64_t base = splitmix64(order_seed), step = 0
    for i in range(n):
        if mass[i] >= t:
            queue[size] = i
            pos[i] = size
            size += 1
    with nogil:
        if not random_order:
            # pos doubles as the in-queue flag
            while size > 0:
                if total >= cap:
                    break
                i = queue[head]
                head += 1
                if head == n:
                    head = 0
                size -= 1
                pos[i] = -1
                mass[i] -= deg
                odo[i] += 1
                total += 1
                for k in range(deg):
                    j = nbr[i, k]
                    if j >= 0:
                        mass[j] += 1
                        if mass[j] >= t and pos[j] < 0:
                            slot = head + size
                            if slot >= n:
                                slot -= n
                            queue[slot] = j
                            pos[j] = 0
                            size += 1
                if mass[i] >= t and pos[i] < 0:
                    slot = head + size
                    if slot >= n:
                        slot -= n
                    queue[slot] = i
                    pos[i] = 0
                    size += 1
        else:
            while size > 0:
                if total >= cap:
                    break
                slot = <Py_ssize_t>(to_uniform(splitmix64(base ^ step)) * size)
                step += 1
                i = queue[slot]
                mass[i] -= deg
                odo[i] += 1
                total += 1
                if mass[i] < t:
                    last = queue[size - 1]
                    queue[slot] = last
                    pos[last] = slot
                    pos[i] = -1
                    size -= 1
                for k in range(deg):
                    j = nbr[i, k]
                    if j >= 0:
                        mass[j] += 1
                        if mass[j] >= t and pos[j] < 0:
                            queue[size] = j
                            pos[j] = size
                            size += 1
    return mass_arr, odo_arr, total, size == 0


def arw_stabilize(cnp.int64_t[::1] counts_in, const cnp.int64_t[:, ::1] nbr,
                  double sleep_prob, uint64_t stack_seed, int64_t cap,
                  bint random_order=False, uint64_t order_seed=0):
    cdef Py_ssize_t n = counts_in.shape[0], deg = nbr.shape[1]
    counts_arr = np.array(counts_in, dtype=np.int64, copy=True)
    asleep_arr = np.zeros(n, dtype=np.uint8)
    jumps_arr = np.zeros(n, dtype=np.int64)
    instr_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef uint8_t[::1] asleep = asleep_arr
    cdef cnp.int64_t[::1] jumps = jumps_arr
    cdef cnp.int64_t[::1] instr = instr_arr
    cdef cnp.int64_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] pos = np.full(n, -1, dtype=np.int64)
    cdef Py_ssize_t head = 0, size = 0, i, j, slot, last, direction
    cdef int64_t total = 0
    cdef uint64_t sbase = splitmix64(stack_seed), obase = splitmix64(order_seed)
    cdef uint64_t step = 0, h
    cdef bint moved
    for i in range(n):
        if counts[i] > 0:
            queue[size] = i
            pos[i] = size
            size += 1
    with nogil:
        while size > 0:
            if total >= cap:
                break
            if random_order:
                slot = <Py_ssize_t>(to_uniform(splitmix64(obase ^ step)) * size)
                step += 1
                i = queue[slot]
            else:
                i = queue[head]
                head += 1
                if head == n:
                    head = 0
                size -= 1
                pos[i] = -1
            h = splitmix64(splitmix64(sbase ^ <uint64_t>i) ^ <uint64_t>instr[i])
            instr[i] += 1
            total += 1
            j = -1
            moved = False
            if to_uniform(h) < sleep_prob:
                if counts[i] == 1:
                    asleep[i] = 1
            else:
                direction = <Py_ssize_t>(to_uniform(splitmix64(h)) * deg)
                j = nbr[i, direction]
                counts[i] -= 1
                jumps[i] += 1
                moved = True
                if j >= 0:
                    counts[j] += 1
                    asleep[j] = 0
            if random_order:
                if counts[i] == 0 or asleep[i]:
                    last = queue[size - 1]
                    queue[slot] = last
                    pos[last] = slot
                    pos[i] = -1
                    size -= 1
                if moved and j >= 0 and pos[j] < 0:
                    queue[size] = j
                    pos[j] = size
                    size += 1
            else:
                if moved and j >= 0 and pos[j] < 0:
                    slot = head + size
                    if slot >= n:
                        slot -= n
                    queue[slot] = j
                    pos[j] = 0
                    size += 1
                if counts[i] > 0 and not asleep[i] and pos[i] < 0:
                    slot = head + size
                    if slot >= n:
                        slot -= n
                    queue[slot] = i
                    pos[i] = 0
                    size += 1
    return counts_arr, asleep_arr, jumps_arr, instr_arr, total, size == 0


def bootstrap_closure(const uint8_t[::1] occupied_in, const cnp.int64_t[:, ::1] nbr,
                      int64_t theta):
    cdef Py_ssize_t n = occupied_in.shape[0], deg = nbr.shape[1]
    occ_arr = np.array(occupied_in, dtype=np.uint8, copy=True)
    cdef uint8_t[::1] occ = occ_arr
    cdef cnp.int64_t[::1] hits = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t top = 0, i, j, k
    for i in range(n):
        if occ[i]:
            stack[top] = i
            top += 1
    with nogil:
        while top > 0:
            top -= 1
            i = stack[top]
            for k in range(deg):
                j = nbr[i, k]
                if j >= 0 and not occ[j]:
                    hits[j] += 1
                    if hits[j] >= theta:
                        occ[j] = 1
                        stack[top] = j
                        top += 1
    return occ_arr


cdef inline Py_ssize_t _find(cnp.int64_t[::1] parent, Py_ssize_t i) nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def label_components(const uint8_t[::1] omega, const cnp.int64_t[:, ::1] nbr):
    cdef Py_ssize_t n = omega.shape[0], deg = nbr.shape[1], i, j, k, a, b
    labels_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.int64_t[::1] parent = np.arange(n, dtype=np.int64)
    with nogil:
        for i in range(n):
            if not omega[i]:
                continue
            for k in range(deg):
                j = nbr[i, k]
                if j > i and omega[j]:
                    a = _find(parent, i)
                    b = _find(parent, j)
                    if a < b:
                        parent[b] = a
                    elif b < a:
                        parent[a] = b
        for i in range(n):
            if omega[i]:
                labels[i] = _find(parent, i)
    return labels_arr


def bfs_distance(const uint8_t[::1] sources, const cnp.int64_t[:, ::1] nbr):
    cdef Py_ssize_t n = sources.shape[0], deg = nbr.shape[1], i, j, k
    dist_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = dist_arr
    cdef cnp.int64_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0
    for i in range(n):
        if sources[i]:
            dist[i] = 0
            queue[tail] = i
            tail += 1
    with nogil:
        while head < tail:
            i = queue[head]
            head += 1
            for k in range(deg):
                j = nbr[i, k]
                if j >= 0 and dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue[tail] = j
                    tail += 1
    return dist_arr
