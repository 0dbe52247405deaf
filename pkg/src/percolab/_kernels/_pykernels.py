"""Pure-Python kernels, selected when the compiled module is unavailable.

Same signatures, same queue discipline and the same counter-based draws as
the Cython module, so both backends return bit-identical results.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from ..rng import splitmix64, to_uniform


def sandpile_stabilize(mass_in, nbr, t, cap, random_order=False, order_seed=0):
    mass = [int(m) for m in mass_in]
    n = len(mass)
    table = nbr.tolist()
    deg = nbr.shape[1]
    odo = [0] * n
    total = 0
    if not random_order:
        queue = deque(i for i in range(n) if mass[i] >= t)
        inq = [False] * n
        for i in queue:
            inq[i] = True
        while queue:
            if total >= cap:
                break
            i = queue.popleft()
            inq[i] = False
            mass[i] -= deg
            odo[i] += 1
            total += 1
            for j in table[i]:
                if j >= 0:
                    mass[j] += 1
                    if mass[j] >= t and not inq[j]:
                        queue.append(j)
                        inq[j] = True
            if mass[i] >= t and not inq[i]:
                queue.append(i)
                inq[i] = True
        remaining = len(queue)
    else:
        base = splitmix64(order_seed)
        ulist = [i for i in range(n) if mass[i] >= t]
        pos = [-1] * n
        for s, i in enumerate(ulist):
            pos[i] = s
        step = 0
        while ulist:
            if total >= cap:
                break
            slot = int(to_uniform(splitmix64(base ^ step)) * len(ulist))
            step += 1
            i = ulist[slot]
            mass[i] -= deg
            odo[i] += 1
            total += 1
            if mass[i] < t:
                last = ulist[-1]
                ulist[slot] = last
                pos[last] = slot
                pos[i] = -1
                ulist.pop()
            for j in table[i]:
                if j >= 0:
                    mass[j] += 1
                    if mass[j] >= t and pos[j] < 0:
                        pos[j] = len(ulist)
                        ulist.append(j)
        remaining = len(ulist)
    return (np.array(mass, dtype=np.int64), np.array(odo, dtype=np.int64),
            total, remaining == 0)


def arw_stabilize(counts_in, nbr, sleep_prob, stack_seed, cap,
                  random_order=False, order_seed=0):
    counts = [int(c) for c in counts_in]
    n = len(counts)
    table = nbr.tolist()
    deg = nbr.shape[1]
    asleep = [0] * n
    jumps = [0] * n
    instr = [0] * n
    total = 0
    sbase = splitmix64(stack_seed)
    obase = splitmix64(order_seed)
    step = 0
    active = [i for i in range(n) if counts[i] > 0]
    pos = [-1] * n
    for s, i in enumerate(active):
        pos[i] = s
    queue = deque(active)
    while (active if random_order else queue):
        if total >= cap:
            break
        if random_order:
            slot = int(to_uniform(splitmix64(obase ^ step)) * len(active))
            step += 1
            i = active[slot]
        else:
            i = queue.popleft()
            pos[i] = -1
        h = splitmix64(splitmix64(sbase ^ i) ^ instr[i])
        instr[i] += 1
        total += 1
        j = -1
        moved = False
        if to_uniform(h) < sleep_prob:
            if counts[i] == 1:
                asleep[i] = 1
        else:
            j = table[i][int(to_uniform(splitmix64(h)) * deg)]
            counts[i] -= 1
            jumps[i] += 1
            moved = True
            if j >= 0:
                counts[j] += 1
                asleep[j] = 0
        if random_order:
            if counts[i] == 0 or asleep[i]:
                last = active[-1]
                active[slot] = last
                pos[last] = slot
                pos[i] = -1
                active.pop()
            if moved and j >= 0 and pos[j] < 0:
                pos[j] = len(active)
                active.append(j)
        else:
            if moved and j >= 0 and pos[j] < 0:
                queue.append(j)
                pos[j] = 0
            if counts[i] > 0 and not asleep[i] and pos[i] < 0:
                queue.append(i)
                pos[i] = 0
    remaining = len(active) if random_order else len(queue)
    return (np.array(counts, dtype=np.int64), np.array(asleep, dtype=np.uint8),
            np.array(jumps, dtype=np.int64), np.array(instr, dtype=np.int64),
            total, remaining == 0)


def bootstrap_closure(occupied_in, nbr, theta):
    occ = [int(v) for v in occupied_in]
    table = nbr.tolist()
    hits = [0] * len(occ)
    stack = [i for i, v in enumerate(occ) if v]
    while stack:
        i = stack.pop()
        for j in table[i]:
            if j >= 0 and not occ[j]:
                hits[j] += 1
                if hits[j] >= theta:
                    occ[j] = 1
                    stack.append(j)
    return np.array(occ, dtype=np.uint8)


def label_components(omega, nbr):
    open_ = [bool(v) for v in omega]
    n = len(open_)
    table = nbr.tolist()
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        if not open_[i]:
            continue
        for j in table[i]:
            if j > i and open_[j]:
                a, b = find(i), find(j)
                if a < b:
                    parent[b] = a
                elif b < a:
                    parent[a] = b
    return np.array([find(i) if open_[i] else -1 for i in range(n)], dtype=np.int64)


def bfs_distance(sources, nbr):
    n = len(sources)
    table = nbr.tolist()
    dist = [-1] * n
    queue = deque()
    for i in range(n):
        if sources[i]:
            dist[i] = 0
            queue.append(i)
    while queue:
        i = queue.popleft()
        for j in table[i]:
            if j >= 0 and dist[j] < 0:
                dist[j] = dist[i] + 1
                queue.append(j)
    return np.array(dist, dtype=np.int64)
