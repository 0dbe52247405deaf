"""Finite windows of Z^d: open boxes with a dissipative sink and tori.

Sites are stored by row-major linear index. Each geometry owns a neighbor
table of shape ``(n_sites, 2 * d)``; slot ``2 * a`` is the step ``-1`` along
axis ``a`` and slot ``2 * a + 1`` the step ``+1``. On an open box a step that
leaves the window is recorded as ``-1`` (the sink).
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

Site = tuple[int, ...]


class Boundary(str, enum.Enum):
    OPEN_BOX = "openbox"
    TORUS = "torus"


@dataclass(frozen=True)
class LatticeGeometry:
    dimension: int
    side: int
    boundary: Boundary = Boundary.OPEN_BOX

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.side < 1:
            raise ValueError(f"side must be >= 1, got {self.side}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.boundary is Boundary.TORUS and self.side < 3:
            # side 1 or 2 would give self-loops or doubled neighbors
            raise ValueError("torus side must be >= 3")

    @property
    def n_sites(self) -> int:
        return self.side**self.dimension

    @property
    def degree(self) -> int:
        return 2 * self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dimension

    @property
    def is_torus(self) -> bool:
        return self.boundary is Boundary.TORUS

    def check_site(self, x: Sequence[int]) -> Site:
        x = tuple(int(c) for c in x)
        if len(x) != self.dimension or any(c < 0 or c >= self.side for c in x):
            raise ValueError(f"site {x} outside the {self.shape} window")
        return x

    def index(self, x: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self.check_site(x), self.shape))

    def site(self, i: int) -> Site:
        if not 0 <= i < self.n_sites:
            raise ValueError(f"index {i} outside window of {self.n_sites} sites")
        return tuple(int(c) for c in np.unravel_index(i, self.shape))

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer coordinates of every site, shape ``(n_sites, d)``."""
        grids = np.indices(self.shape).reshape(self.dimension, -1)
        return np.ascontiguousarray(grids.T, dtype=np.int64)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        d, L = self.dimension, self.side
        coords = self.coords
        strides = np.array([L ** (d - 1 - a) for a in range(d)], dtype=np.int64)
        lin = np.arange(self.n_sites, dtype=np.int64)
        table = np.empty((self.n_sites, 2 * d), dtype=np.int64)
        for a in range(d):
            c = coords[:, a]
            for slot, step in ((2 * a, -1), (2 * a + 1, 1)):
                nc = c + step
                if self.is_torus:
                    wrapped = nc % L
                    table[:, slot] = lin + (wrapped - c) * strides[a]
                else:
                    inside = (nc >= 0) & (nc < L)
                    table[:, slot] = np.where(inside, lin + step * strides[a], -1)
        table.setflags(write=False)
        return table

    @cached_property
    def sink_counts(self) -> np.ndarray:
        counts = (self.neighbor_table < 0).sum(axis=1).astype(np.int64)
        counts.setflags(write=False)
        return counts

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Sites with at least one coordinate on a face (always empty on a torus)."""
        if self.is_torus:
            mask = np.zeros(self.n_sites, dtype=bool)
        else:
            mask = ((self.coords == 0) | (self.coords == self.side - 1)).any(axis=1)
        mask.setflags(write=False)
        return mask

    def center(self) -> Site:
        return (self.side // 2,) * self.dimension

    def distance(self, u: Sequence[int], v: Sequence[int]) -> int:
        return int(self.distances_from(u, np.asarray([v]))[0])

    def distances_from(self, u: Sequence[int], others: np.ndarray) -> np.ndarray:
        """Graph distance from ``u`` to each row of ``others`` (coordinates)."""
        diff = np.abs(np.asarray(others, dtype=np.int64) - np.asarray(u, dtype=np.int64))
        if self.is_torus:
            diff = np.minimum(diff, self.side - diff)
        return diff.sum(axis=-1)


def neighbors(geom: LatticeGeometry, x: Sequence[int]) -> tuple[list[Site], int]:
    """In-window neighbors of ``x`` and the number of steps that fall into the sink."""
    i = geom.index(x)
    row = geom.neighbor_table[i]
    inside = [geom.site(int(j)) for j in row if j >= 0]
    return inside, int((row < 0).sum())


def ball(geom: LatticeGeometry, center: Sequence[int], n: int) -> frozenset[Site]:
    if n < 0:
        raise ValueError("radius must be nonnegative")
    return frozenset(geom.site(int(i)) for i in ball_indices(geom, center, n))


def ball_indices(geom: LatticeGeometry, center: Sequence[int], n: int) -> np.ndarray:
    center = geom.check_site(center)
    return np.flatnonzero(geom.distances_from(center, geom.coords) <= n)


def bfs_distances(geom: LatticeGeometry, sources: Iterable[int]) -> np.ndarray:
    """Plain breadth-first distances over the window; used as a reference only."""
    dist = np.full(geom.n_sites, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    table = geom.neighbor_table
    while queue:
        i = queue.popleft()
        for j in table[i]:
            if j >= 0 and dist[j] < 0:
                dist[j] = dist[i] + 1
                queue.append(j)
    return dist


def geodesic(geom: LatticeGeometry, u: Sequence[int], v: Sequence[int]) -> list[Site]:
    """Shortest path from ``u`` to ``v``, both ends included.

    Each step moves along the lowest-indexed axis that still reduces the
    distance to ``v``. On a torus the shorter way round is taken; when both
    ways have equal length the ``+1`` direction is used.
    """
    cur = list(geom.check_site(u))
    v = geom.check_site(v)
    L = geom.side
    path = [tuple(cur)]
    for a in range(geom.dimension):
        while cur[a] != v[a]:
            delta = v[a] - cur[a]
            if geom.is_torus:
                fwd = delta % L
                step = 1 if fwd <= L - fwd else -1
                cur[a] = (cur[a] + step) % L
            else:
                cur[a] += 1 if delta > 0 else -1
            path.append(tuple(cur))
    return path


def translate_config(cfg: np.ndarray, z: Sequence[int], geom: LatticeGeometry) -> np.ndarray:
    """Torus shift: the result at ``y`` equals ``cfg`` at ``y - z``."""
    if not geom.is_torus:
        raise ValueError("translation is only an automorphism of the torus window")
    z = tuple(int(c) for c in z)
    if len(z) != geom.dimension:
        raise ValueError(f"shift {z} has wrong dimension")
    arr = np.asarray(cfg).reshape(geom.shape)
    return np.roll(arr, shift=z, axis=tuple(range(geom.dimension))).reshape(-1)
