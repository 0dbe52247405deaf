"""Cluster analysis of open/closed site configurations.

Labels are canonical: a cluster is named by the smallest linear index among
its sites. Distances between clusters are lattice graph distances (closed
sites may be crossed), not chemical distances inside the open set.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .lattice import LatticeGeometry, ball_indices, translate_config


def _as_omega(omega, geom: LatticeGeometry) -> np.ndarray:
    arr = np.asarray(omega).reshape(-1)
    if arr.shape[0] != geom.n_sites:
        raise ValueError(f"site configuration has {arr.shape[0]} sites, window has {geom.n_sites}")
    return np.ascontiguousarray(arr != 0, dtype=np.uint8)


@dataclass(frozen=True)
class ClusterLabels:
    geom: LatticeGeometry
    labels: np.ndarray  # -1 on closed sites
    roots: np.ndarray  # sorted canonical labels
    sizes: np.ndarray
    touches_boundary: np.ndarray
    crossing: np.ndarray  # (n_clusters, d)

    @property
    def count(self) -> int:
        return int(self.roots.shape[0])

    def position(self, label: int) -> int:
        k = int(np.searchsorted(self.roots, label))
        if k >= self.count or self.roots[k] != label:
            raise KeyError(f"no cluster with label {label}")
        return k

    def size_of(self, label: int) -> int:
        return int(self.sizes[self.position(label)])

    def sites_of(self, label: int) -> np.ndarray:
        self.position(label)
        return np.flatnonzero(self.labels == label)

    def largest(self) -> int | None:
        """Label of the largest cluster; ties go to the smallest label."""
        if self.count == 0:
            return None
        return int(self.roots[int(np.argmax(self.sizes))])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site", "label"])
            for i, lab in enumerate(self.labels.tolist()):
                w.writerow([i, lab])


def label_clusters(omega, geom: LatticeGeometry) -> ClusterLabels:
    om = _as_omega(omega, geom)
    labels = _kernels.label_components(om, geom.neighbor_table)
    open_idx = np.flatnonzero(labels >= 0)
    roots, inverse, sizes = np.unique(labels[open_idx], return_inverse=True, return_counts=True)
    k = roots.shape[0]
    touches = np.bincount(inverse, weights=geom.boundary_mask[open_idx], minlength=k) > 0
    coords = geom.coords[open_idx]
    L = geom.side
    crossing = np.zeros((k, geom.dimension), dtype=bool)
    far = L // 2 if geom.is_torus else L - 1
    for a in range(geom.dimension):
        lo = np.bincount(inverse, weights=coords[:, a] == 0, minlength=k) > 0
        hi = np.bincount(inverse, weights=coords[:, a] == far, minlength=k) > 0
        crossing[:, a] = lo & hi
    return ClusterLabels(
        geom=geom,
        labels=labels,
        roots=roots.astype(np.int64),
        sizes=sizes.astype(np.int64),
        touches_boundary=touches,
        crossing=crossing,
    )


def spans(omega, geom: LatticeGeometry, axis: int = 0) -> bool:
    """Crossing test straight from the kernel labels, without building statistics.

    Agrees with ``cluster_stats(label_clusters(...)).crossing[axis]``.
    """
    om = _as_omega(omega, geom)
    labels = _kernels.label_components(om, geom.neighbor_table)
    c = geom.coords[:, axis]
    far = geom.side // 2 if geom.is_torus else geom.side - 1
    lo = labels[c == 0]
    hi = labels[c == far]
    lo = lo[lo >= 0]
    hi = hi[hi >= 0]
    if lo.size == 0 or hi.size == 0:
        return False
    return bool(np.intersect1d(lo, hi, assume_unique=False).size)


@dataclass(frozen=True)
class ClusterStats:
    count: int
    largest: int
    second: int
    ratio: float
    crossing: tuple[bool, ...]


def cluster_stats(labels: ClusterLabels) -> ClusterStats:
    sizes = np.sort(labels.sizes)[::-1]
    s1 = int(sizes[0]) if sizes.size else 0
    s2 = int(sizes[1]) if sizes.size > 1 else 0
    return ClusterStats(
        count=labels.count,
        largest=s1,
        second=s2,
        ratio=s2 / s1 if s2 else 0.0,
        crossing=tuple(bool(v) for v in labels.crossing.any(axis=0)),
    )


def macroscopic_count(labels: ClusterLabels, delta: float) -> int:
    return int(np.count_nonzero(labels.sizes >= delta * labels.geom.n_sites))


def infinite_mask(labels: ClusterLabels, surrogate: str = "boundary", delta: float = 0.01) -> np.ndarray:
    """Per-cluster flag for the finite stand-in of "infinite"."""
    if surrogate == "boundary":
        return labels.touches_boundary.copy()
    if surrogate == "macroscopic":
        return labels.sizes >= delta * labels.geom.n_sites
    raise ValueError(f"unknown surrogate {surrogate!r}")


@dataclass(frozen=True)
class DistanceReport:
    D: int
    attaining_pairs: list[tuple[int, int]]


def set_distance(geom: LatticeGeometry, sites_a, sites_b) -> DistanceReport:
    """Lattice distance between two disjoint site sets and every pair attaining it.

    The distance comes from a multi-source breadth-first search out of
    ``sites_a``; pairs are then enumerated with the closed-form metric.
    """
    a = np.asarray(sites_a, dtype=np.int64)
    b = np.asarray(sites_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both site sets must be nonempty")
    src = np.zeros(geom.n_sites, dtype=np.uint8)
    src[a] = 1
    dist = _kernels.bfs_distance(src, geom.neighbor_table)
    D = int(dist[b].min())
    pairs = []
    a_coords = geom.coords[a]
    for y in np.sort(b[dist[b] == D]):
        hits = a[geom.distances_from(geom.coords[y], a_coords) == D]
        pairs.extend((int(x), int(y)) for x in hits)
    pairs.sort()
    return DistanceReport(D=D, attaining_pairs=pairs)


def cluster_distance(labels: ClusterLabels, A: int, B: int, geom: LatticeGeometry | None = None) -> DistanceReport:
    geom = labels.geom if geom is None else geom
    if A == B:
        raise ValueError("cluster distance needs two distinct labels")
    return set_distance(geom, labels.sites_of(A), labels.sites_of(B))


def trifurcation_candidates(geom: LatticeGeometry, n: int, radius: int | None = None) -> list[tuple[int, ...]]:
    """Sites of ``4n Z^d`` (anchored at the window corner) whose ``2n``-ball fits."""
    if n < 1:
        raise ValueError("block radius n must be >= 1")
    L = geom.side
    if geom.is_torus:
        axis = list(range(0, L, 4 * n))
    else:
        axis = [c for c in range(0, L, 4 * n) if c - 2 * n >= 0 and c + 2 * n <= L - 1]
    grid = np.array(np.meshgrid(*([axis] * geom.dimension), indexing="ij")).reshape(geom.dimension, -1).T
    if radius is not None:
        o = np.asarray(geom.center())
        keep = geom.distances_from(o, grid) + 2 * n <= radius
        grid = grid[keep]
    return [tuple(int(c) for c in row) for row in grid]


def is_coarse_trifurcation(
    om: np.ndarray,
    labels: ClusterLabels,
    geom: LatticeGeometry,
    y: Sequence[int],
    n: int,
    surrogate: str = "boundary",
    delta: float = 0.01,
) -> bool:
    """Deletion-and-relabel test at a single candidate site."""
    blk = ball_indices(geom, y, n)
    if not om[blk].all():
        return False
    yi = geom.index(y)
    inf = infinite_mask(labels, surrogate, delta)
    if not inf[labels.position(int(labels.labels[yi]))]:
        return False
    cut = om.copy()
    cut[blk] = 0
    after = label_clusters(cut, geom)
    inf_after = infinite_mask(after, surrogate, delta)
    rim = geom.neighbor_table[blk].ravel()
    rim = rim[rim >= 0]
    rim_labels = np.unique(after.labels[rim])
    rim_labels = rim_labels[rim_labels >= 0]
    arms = sum(1 for lab in rim_labels if inf_after[after.position(int(lab))])
    return arms >= 3


def count_coarse_trifurcations(
    omega,
    geom: LatticeGeometry,
    n: int = 1,
    radius: int | None = None,
    surrogate: str | None = None,
    delta: float = 0.01,
) -> int:
    """Number of candidate sites that are coarse-trifurcations.

    A candidate ``y`` counts when ``B_n(y)`` is fully open, ``y``'s cluster is
    "infinite" under the surrogate, and closing ``B_n(y)`` leaves at least
    three "infinite" clusters adjacent to the ball. The surrogate defaults to
    boundary contact on an open box and macroscopic size on a torus.
    """
    om = _as_omega(omega, geom)
    if surrogate is None:
        surrogate = "macroscopic" if geom.is_torus else "boundary"
    if not om.any():
        return 0
    labels = label_clusters(om, geom)
    return sum(
        is_coarse_trifurcation(om, labels, geom, y, n, surrogate, delta)
        for y in trifurcation_candidates(geom, n, radius)
    )


# --- mass transport ---------------------------------------------------------

Kernel = Callable[[LatticeGeometry, np.ndarray, np.ndarray], np.ndarray]


def zero_kernel(geom: LatticeGeometry, omega_a, omega_b) -> np.ndarray:
    return np.zeros((geom.n_sites, geom.n_sites))


def unit_kernel(geom: LatticeGeometry, omega_a, omega_b) -> np.ndarray:
    """Mass 1 from every open site to each open neighbor, in ``omega_b``."""
    om = _as_omega(omega_b, geom).astype(bool)
    M = np.zeros((geom.n_sites, geom.n_sites))
    for slot in range(geom.degree):
        nb = geom.neighbor_table[:, slot]
        ok = om & (nb >= 0)
        ok[ok] &= om[nb[ok]]
        src = np.flatnonzero(ok)
        M[src, nb[src]] += 1.0
    return M


def step2_kernel(geom: LatticeGeometry, omega_12, omega_3) -> np.ndarray:
    """Each ``omega_3`` cluster avoiding the ``omega_12`` giant spreads unit mass
    evenly over its own sites that are closest to the giant.

    Entry ``[x, y]`` is ``1/N`` when ``y`` is one of the ``N`` sites of ``x``'s
    ``omega_3`` cluster at minimal distance from the giant, else 0. Rows of
    clusters that touch the giant (N infinite) and closed rows are zero.
    """
    o12 = _as_omega(omega_12, geom)
    o3 = _as_omega(omega_3, geom)
    M = np.zeros((geom.n_sites, geom.n_sites))
    lab12 = label_clusters(o12, geom)
    giant = lab12.largest()
    if giant is None:
        return M
    giant_mask = lab12.labels == giant
    dist = _kernels.bfs_distance(giant_mask.astype(np.uint8), geom.neighbor_table)
    lab3 = label_clusters(o3, geom)
    for root in lab3.roots:
        members = np.flatnonzero(lab3.labels == root)
        if giant_mask[members].any():
            continue
        d = dist[members]
        attain = members[d == d.min()]
        M[np.ix_(members, attain)] = 1.0 / attain.size
    return M


def _shift_index_matrix(geom: LatticeGeometry) -> np.ndarray:
    c = geom.coords
    delta = (c[None, :, :] - c[:, None, :]) % geom.side
    return np.ravel_multi_index(tuple(np.moveaxis(delta, -1, 0)), geom.shape)


@dataclass(frozen=True)
class MTPReport:
    max_discrepancy: float
    passed: bool
    sent: np.ndarray
    received: np.ndarray
    raw_sent: np.ndarray
    raw_received: np.ndarray
    total_by_rows: float
    total_by_cols: float


def mtp_check(
    geom: LatticeGeometry,
    kernel: Kernel,
    omega_a,
    omega_b,
    tol: float = 1e-12,
) -> MTPReport:
    """Mass sent versus mass received after averaging over all torus shifts.

    The shift average ``f(x, y) = (1/|V|) sum_z F(x + z, y + z)`` is
    diagonally invariant, so each site must send exactly what it receives.
    """
    if not geom.is_torus:
        raise ValueError("mass-transport check needs a torus")
    F = np.asarray(kernel(geom, omega_a, omega_b), dtype=np.float64)
    N = geom.n_sites
    if F.shape != (N, N):
        raise ValueError(f"kernel returned shape {F.shape}, expected {(N, N)}")
    shift = _shift_index_matrix(geom)
    g = np.bincount(shift.ravel(), weights=F.ravel(), minlength=N) / N
    f = g[shift]
    sent = f.sum(axis=1)
    received = f.sum(axis=0)
    disc = float(np.max(np.abs(sent - received))) if N else 0.0
    return MTPReport(
        max_discrepancy=disc,
        passed=disc <= tol,
        sent=sent,
        received=received,
        raw_sent=F.sum(axis=1),
        raw_received=F.sum(axis=0),
        total_by_rows=math.fsum(math.fsum(row) for row in F),
        total_by_cols=math.fsum(math.fsum(col) for col in F.T),
    )


def is_diagonally_invariant(kernel: Kernel, geom: LatticeGeometry, omega_a, omega_b, z: Sequence[int]) -> bool:
    """``F(x + z, y + z; tau_z omega) == F(x, y; omega)`` for every pair."""
    F = kernel(geom, omega_a, omega_b)
    Fz = kernel(geom, translate_config(omega_a, z, geom), translate_config(omega_b, z, geom))
    perm = translate_config(np.arange(geom.n_sites), z, geom)
    # perm[w] = w - z, so the shifted kernel read at (x + z, y + z) is Fz[inv, inv]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(geom.n_sites)
    return bool(np.allclose(Fz[np.ix_(inv, inv)], F, rtol=0, atol=1e-15))


def write_labels_csv(labels: ClusterLabels, path: str | Path) -> None:
    labels.to_csv(path)
