import numpy as np
import pytest

from percolab.clusters import (
    cluster_distance,
    cluster_stats,
    count_coarse_trifurcations,
    infinite_mask,
    is_diagonally_invariant,
    label_clusters,
    macroscopic_count,
    mtp_check,
    set_distance,
    spans,
    step2_kernel,
    trifurcation_candidates,
    unit_kernel,
    zero_kernel,
)
from percolab.lattice import Boundary, LatticeGeometry, ball

from oracles import flood_fill, l1, nbrs, window_sites

B, T = Boundary.OPEN_BOX, Boundary.TORUS


def _omega(g, sites):
    om = np.zeros(g.n_sites, dtype=np.uint8)
    for x in sites:
        om[g.index(x)] = 1
    return om


def test_trivial_labelings():
    g = LatticeGeometry(2, 6, T)
    assert label_clusters(np.zeros(g.n_sites), g).count == 0
    full = label_clusters(np.ones(g.n_sites), g)
    assert full.count == 1 and full.sizes.tolist() == [36]
    corners = label_clusters(_omega(LatticeGeometry(2, 4, B), [(0, 0), (3, 3)]), LatticeGeometry(2, 4, B))
    assert corners.count == 2 and corners.sizes.tolist() == [1, 1]


@pytest.mark.parametrize("seed", range(200))
def test_labels_match_flood_fill(seed):
    rng = np.random.default_rng(seed)
    boundary = T if seed % 2 else B
    d = 3 if seed % 5 == 0 else 2
    L = 4 if d == 3 else 7
    g = LatticeGeometry(d, L, boundary)
    om = (rng.random(g.n_sites) < rng.uniform(0.3, 0.7)).astype(np.uint8)
    lab = label_clusters(om, g)
    comps = flood_fill({x for x in window_sites(d, L) if om[g.index(x)]}, L, boundary is T)
    assert lab.count == len(comps)
    assert sorted(lab.sizes.tolist()) == sorted(len(c) for c in comps)
    for comp in comps:
        idx = [g.index(x) for x in comp]
        assert len(set(lab.labels[idx].tolist())) == 1
        k = lab.position(int(lab.labels[idx[0]]))
        touches = any(None in nbrs(x, L, False) for x in comp) if boundary is B else False
        assert lab.touches_boundary[k] == touches
    for a in range(d):
        far = L // 2 if boundary is T else L - 1
        want = any({x[a] for x in comp} >= {0, far} for comp in comps)
        assert spans(om, g, a) == want == bool(lab.crossing[:, a].any())


def test_ratio_fixtures():
    g = LatticeGeometry(2, 8, B)
    assert cluster_stats(label_clusters(_omega(g, [(1, 1), (1, 2)]), g)).ratio == 0.0
    assert cluster_stats(label_clusters(_omega(g, [(1, 1), (5, 5)]), g)).ratio == 1.0


def test_row_and_single_site():
    g = LatticeGeometry(2, 8, B)
    om = _omega(g, [(i, 0) for i in range(8)] + [(4, 4)])
    st = cluster_stats(label_clusters(om, g))
    assert (st.largest, st.second) == (8, 1)
    assert st.crossing[0] and not st.crossing[1]
    assert spans(om, g, 0) and not spans(om, g, 1)


def test_largest_tie_goes_to_smallest_label():
    g = LatticeGeometry(2, 8, B)
    lab = label_clusters(_omega(g, [(5, 5), (0, 0)]), g)
    assert lab.largest() == 0


def test_macroscopic_and_surrogates():
    g = LatticeGeometry(2, 10, B)
    om = _omega(g, [(i, 0) for i in range(10)] + [(5, 5)])
    lab = label_clusters(om, g)
    assert macroscopic_count(lab, 0.05) == 1
    assert macroscopic_count(lab, 0.01) == 2
    assert infinite_mask(lab, "boundary").tolist() == [True, False]
    with pytest.raises(ValueError):
        infinite_mask(lab, "volume")


# --- distances --------------------------------------------------------------

def _brute_distance(g, A, B_):
    best, pairs = None, []
    for a in A:
        for b in B_:
            d = l1(g.site(a), g.site(b), g.side, g.is_torus)
            if best is None or d < best:
                best, pairs = d, [(a, b)]
            elif d == best:
                pairs.append((a, b))
    return best, sorted(pairs)


def test_line_distance():
    g = LatticeGeometry(1, 5, B)
    lab = label_clusters(np.array([1, 0, 0, 0, 1]), g)
    rep = cluster_distance(lab, 0, 4)
    assert rep.D == 4 and rep.attaining_pairs == [(0, 4)]


def test_two_parallel_rows():
    g = LatticeGeometry(2, 7, B)
    om = _omega(g, [(i, 0) for i in range(7)] + [(i, 2) for i in range(7)])
    lab = label_clusters(om, g)
    a, b = lab.roots.tolist()
    rep = cluster_distance(lab, a, b)
    assert rep.D == 2 and len(rep.attaining_pairs) == 7
    assert (rep.D, rep.attaining_pairs) == _brute_distance(g, lab.sites_of(a), lab.sites_of(b))


def test_clusters_one_closed_site_apart():
    g = LatticeGeometry(1, 5, B)
    lab = label_clusters(np.array([1, 0, 1, 0, 0]), g)
    assert cluster_distance(lab, 0, 2).D == 2
    with pytest.raises(ValueError):
        cluster_distance(lab, 0, 0)


@pytest.mark.parametrize("seed", range(40))
def test_distance_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = LatticeGeometry(2, 8, T if seed % 2 else B)
    om = (rng.random(g.n_sites) < 0.35).astype(np.uint8)
    lab = label_clusters(om, g)
    if lab.count < 2:
        pytest.skip("fewer than two clusters")
    a, b = rng.choice(lab.roots, 2, replace=False)
    rep = cluster_distance(lab, int(a), int(b))
    assert (rep.D, rep.attaining_pairs) == _brute_distance(g, lab.sites_of(int(a)), lab.sites_of(int(b)))


def test_set_distance_rejects_empty():
    with pytest.raises(ValueError):
        set_distance(LatticeGeometry(1, 4, B), [], [1])


# --- coarse trifurcations ---------------------------------------------------

def _trifurcation_oracle(g, om, n):
    """Independent deletion-and-relabel count with boundary contact as "infinite"."""
    L = g.side
    open_sites = {x for x in window_sites(2, L) if om[g.index(x)]}

    def reaches(comp):
        return any(None in nbrs(x, L, False) for x in comp)

    comps = flood_fill(open_sites, L)
    count = 0
    for y in trifurcation_candidates(g, n):
        blk = ball(g, y, n)
        if not blk <= open_sites:
            continue
        home = next(c for c in comps if y in c)
        if not reaches(home):
            continue
        rest = flood_fill(open_sites - blk, L)
        rim = {z for x in blk for z in nbrs(x, L, False) if z is not None and z not in blk}
        arms = [c for c in rest if c & rim and reaches(c)]
        count += len(arms) >= 3
    return count


def _arms(center, dirs, L):
    cx, cy = center
    pts = set(ball(LatticeGeometry(2, L, B), center, 1))
    for dx, dy in dirs:
        x, y = cx, cy
        while 0 <= x < L and 0 <= y < L:
            pts.add((x, y))
            x, y = x + dx, y + dy
    return pts


def test_y_shaped_fixture():
    g = LatticeGeometry(2, 9, B)
    assert trifurcation_candidates(g, 1) == [(4, 4)]
    tee = _omega(g, _arms((4, 4), [(0, 1), (0, -1), (-1, 0)], 9))
    assert count_coarse_trifurcations(tee, g, n=1) == 1 == _trifurcation_oracle(g, tee, 1)
    line = _omega(g, _arms((4, 4), [(0, 1), (0, -1)], 9))
    assert count_coarse_trifurcations(line, g, n=1) == 0
    plus = _omega(g, _arms((4, 4), [(0, 1), (0, -1), (-1, 0), (1, 0)], 9))
    assert count_coarse_trifurcations(plus, g, n=1) == 1


def test_trivial_trifurcation_counts():
    g = LatticeGeometry(2, 13, B)
    assert count_coarse_trifurcations(np.ones(g.n_sites), g) == 0
    assert count_coarse_trifurcations(np.zeros(g.n_sites), g) == 0


@pytest.mark.parametrize("seed", range(30))
def test_trifurcations_against_oracle(seed):
    rng = np.random.default_rng(seed)
    g = LatticeGeometry(2, 17, B)
    om = (rng.random(g.n_sites) < 0.55).astype(np.uint8)
    # open every candidate ball so positive counts are common
    for y in trifurcation_candidates(g, 1):
        for x in ball(g, y, 1):
            om[g.index(x)] = 1
    assert count_coarse_trifurcations(om, g, 1) == _trifurcation_oracle(g, om, 1)


def test_candidates_respect_radius():
    g = LatticeGeometry(2, 33, B)
    full = trifurcation_candidates(g, 1)
    near = trifurcation_candidates(g, 1, radius=10)
    assert set(near) < set(full)
    assert all(g.distance(y, g.center()) + 2 <= 10 for y in near)
    with pytest.raises(ValueError):
        trifurcation_candidates(g, 0)


# --- mass transport ---------------------------------------------------------

def test_unit_kernel_full_torus():
    g = LatticeGeometry(2, 6, T)
    rep = mtp_check(g, unit_kernel, np.ones(g.n_sites), np.ones(g.n_sites))
    assert np.all(rep.raw_sent == 4) and np.all(rep.raw_received == 4)
    assert rep.max_discrepancy == 0 and rep.passed


def test_zero_kernel():
    g = LatticeGeometry(2, 5, T)
    rep = mtp_check(g, zero_kernel, np.ones(25), np.zeros(25))
    assert rep.max_discrepancy == 0.0 and rep.total_by_rows == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_step2_kernel_mass_transport(seed):
    rng = np.random.default_rng(seed)
    g = LatticeGeometry(2, 12, T)
    o12 = (rng.random(g.n_sites) < 0.62).astype(np.uint8)
    o3 = np.maximum(o12, (rng.random(g.n_sites) < 0.3)).astype(np.uint8)
    F = step2_kernel(g, o12, o3)
    # each row outside the giant's clusters sends exactly one unit
    assert np.all(np.isclose(F.sum(axis=1), 0) | np.isclose(F.sum(axis=1), 1))
    rep = mtp_check(g, step2_kernel, o12, o3)
    assert rep.max_discrepancy < 1e-12
    assert rep.total_by_rows == rep.total_by_cols
    assert is_diagonally_invariant(step2_kernel, g, o12, o3, (3, 7))
    assert is_diagonally_invariant(unit_kernel, g, o12, o3, (1, 0))


def test_mtp_requires_torus():
    g = LatticeGeometry(2, 5, B)
    with pytest.raises(ValueError):
        mtp_check(g, unit_kernel, np.ones(25), np.ones(25))


def test_labels_csv(tmp_path):
    g = LatticeGeometry(1, 4, B)
    lab = label_clusters(np.array([1, 1, 0, 1]), g)
    lab.to_csv(tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text() == "site,label\n0,0\n1,0\n2,-1\n3,3\n"
