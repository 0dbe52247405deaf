import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from percolab.lattice import Boundary, LatticeGeometry
from percolab.measures import (
    CouplingSampler,
    InsertionToleranceWarning,
    Poisson,
    ScaledBernoulli,
    TableFamily,
    check_strictly_increasing,
    coupled_insertion_epsilon,
    family_from_dict,
    insertion_epsilon,
    sample_config,
    sample_coupled,
)


def test_bernoulli_quantile_fixtures():
    f = ScaledBernoulli(threshold_t=4)
    assert f.quantile(0.3, 0.5) == 0
    assert f.quantile(0.3, 0.8) == 4


def test_poisson_quantile_fixture():
    # cumulative e^-1 (1 + 1) ~ 0.7358 < 0.9 < e^-1 (1 + 1 + 0.5) ~ 0.9197
    assert Poisson(rho_max=1.0).quantile(1.0, 0.9) == 2


@settings(max_examples=200, deadline=None)
@given(p=st.floats(0, 1), u=st.floats(0, 1, exclude_max=True))
def test_poisson_quantile_matches_scipy(p, u):
    f = Poisson(rho_max=3.0)
    want = stats.poisson.ppf(u, p * 3.0) if p > 0 else 0.0
    got = f.quantile(p, u)
    # scipy's ppf is inf{k: F(k) >= u}; ours is inf{k: F(k) > u}; they differ only on atoms
    assert got in (want, want + 1)
    cdf_at = stats.poisson.cdf(got, p * 3.0) if p > 0 else 1.0
    assert cdf_at > u or math.isclose(cdf_at, u)


@pytest.mark.parametrize("family", [ScaledBernoulli(threshold_t=3), Poisson(rho_max=4)])
def test_quantile_monotone_in_p(family):
    rng = np.random.default_rng(0)
    us = rng.random(10_000)
    p1, p2 = np.sort(rng.random(2))
    assert np.all(family.quantile(p1, us) <= family.quantile(p2, us))


@pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
def test_poisson_sampler_chi_square(p):
    f = Poisson(rho_max=4)
    g = LatticeGeometry(2, 128, Boundary.TORUS)
    xi = sample_config(g, f, p, seed=7)
    rho = 4 * p
    kmax = int(rho + 4 * math.sqrt(rho) + 2)
    obs = np.bincount(np.minimum(xi, kmax), minlength=kmax + 1)
    probs = stats.poisson.pmf(np.arange(kmax + 1), rho)
    probs[-1] = stats.poisson.sf(kmax - 1, rho)
    _, pval = stats.chisquare(obs, probs * len(xi))
    assert pval > 1e-4


def test_bernoulli_frequency():
    g = LatticeGeometry(2, 200, Boundary.OPEN_BOX)
    xi = sample_config(g, ScaledBernoulli(threshold_t=2.5), 0.3, seed=1)
    assert set(np.unique(xi).tolist()) <= {0.0, 2.5}
    se = math.sqrt(0.3 * 0.7 / g.n_sites)
    assert abs((xi > 0).mean() - 0.3) < 4 * se


def test_poisson_mean_clt():
    g = LatticeGeometry(2, 64, Boundary.OPEN_BOX)
    X, Y, Z = sample_coupled(g, CouplingSampler(Poisson(rho_max=2), (0.3, 0.5, 0.7), 11))
    se = math.sqrt(1.0 / g.n_sites)
    assert abs(Y.mean() - 1.0) < 3 * se


def test_coupling_rejects_non_strict_params():
    f = Poisson(rho_max=2)
    for params in [(0.5, 0.5, 0.5), (0.2, 0.5, 0.5), (0.6, 0.5, 0.7), (-0.1, 0.2, 0.3), (0.1, 0.2, 1.5)]:
        with pytest.raises(ValueError):
            CouplingSampler(f, params, 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), t=st.sampled_from([1.0, 2.0, 4.0, 0.5]))
def test_bernoulli_coupling_is_ordered(seed, t):
    g = LatticeGeometry(2, 12, Boundary.OPEN_BOX)
    X, Y, Z = sample_coupled(g, CouplingSampler(ScaledBernoulli(threshold_t=t), (0.2, 0.5, 0.8), seed))
    assert set(np.unique(X).tolist()) <= {0, t}
    assert np.all(X <= Y) and np.all(Y <= Z)


def test_coupling_is_reproducible():
    g = LatticeGeometry(2, 10, Boundary.OPEN_BOX)
    s = CouplingSampler(Poisson(rho_max=3), (0.1, 0.4, 0.9), 5)
    a, b = sample_coupled(g, s), sample_coupled(g, s)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_insertion_epsilon_fixtures():
    assert insertion_epsilon(ScaledBernoulli(threshold_t=4), 0.37) == pytest.approx(0.37)
    e = math.exp(-1)
    assert insertion_epsilon(Poisson(rho_max=1, threshold_t=4), 1.0) == pytest.approx(
        1 - e * (1 + 1 + 0.5 + 1 / 6), abs=1e-12
    )
    assert insertion_epsilon(Poisson(rho_max=1, threshold_t=4), 1.0) == pytest.approx(0.01899, abs=1e-5)
    with pytest.warns(InsertionToleranceWarning):
        assert insertion_epsilon(ScaledBernoulli(threshold_t=4), 0.0) == 0.0


def test_coupled_epsilon_bernoulli_is_marginal_gap():
    # given X = 0, the chance Y = t under the shared-uniform coupling
    f = ScaledBernoulli(threshold_t=1)
    assert coupled_insertion_epsilon(f, 0.3, 0.6) == pytest.approx((0.6 - 0.3) / 0.7)


def test_table_family():
    f = TableFamily(
        params=(0.0, 0.5, 1.0),
        values=(0, 1, 3),
        cdfs=((1.0, 1.0, 1.0), (0.5, 0.8, 1.0), (0.1, 0.3, 1.0)),
        threshold_t=2,
    )
    assert f.quantile(0.0, 0.99) == 0
    assert f.quantile(0.6, 0.6) == 1  # row for p = 0.5
    assert f.quantile(1.0, 0.35) == 3
    assert insertion_epsilon(f, 0.7) == pytest.approx(0.2)
    assert check_strictly_increasing(f, (0.0, 0.5, 1.0))
    assert not check_strictly_increasing(f, (0.5, 0.6, 1.0))


@pytest.mark.parametrize(
    "cdfs",
    [
        ((1.0, 1.0), (0.5, 0.9)),  # last column must be 1
        ((1.0, 1.0), (0.8, 0.7)),  # not monotone in value
        ((0.5, 1.0), (0.9, 1.0)),  # not stochastically increasing
    ],
)
def test_table_family_validation(cdfs):
    with pytest.raises(ValueError):
        TableFamily(params=(0.0, 1.0), values=(0, 1), cdfs=cdfs)


def test_family_from_dict():
    assert family_from_dict({"kind": "poisson", "rho_max": "2", "t": "4"}) == Poisson(rho_max=2, threshold_t=4)
    assert family_from_dict({"kind": "bernoulli", "t": "3"}) == ScaledBernoulli(threshold_t=3)
    f = family_from_dict({"kind": "table", "params": "0,1", "values": "0,2", "cdfs": "1,1;0.4,1", "t": "2"})
    assert isinstance(f, TableFamily)
    with pytest.raises(ValueError):
        family_from_dict({"kind": "gamma"})


def test_p_out_of_range():
    with pytest.raises(ValueError):
        Poisson(rho_max=1).quantile(1.2, 0.5)
