"""Stochastically increasing one-parameter families and their monotone coupling.

A family is described by its quantile function ``Q(p, u)``. Feeding the same
per-site uniform ``U_x`` into ``Q(p1, .)``, ``Q(p2, .)`` and ``Q(p3, .)``
yields three product configurations ordered pointwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import pdtr

from .lattice import LatticeGeometry
from .rng import site_uniforms


class InsertionToleranceWarning(UserWarning):
    """The family puts no mass on ``[t, inf)`` at the requested parameter."""


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"parameter p must lie in [0, 1], got {p}")
    return p


class MeasureFamily:
    """Base class. Subclasses provide ``support_cdf`` on a finite support."""

    threshold_t: float
    integer_valued = True

    def support_cdf(self, p: float) -> tuple[np.ndarray, np.ndarray]:
        """Support points (sorted) and the CDF evaluated at each of them."""
        raise NotImplementedError

    def quantile(self, p: float, u):
        """Generalized inverse CDF ``inf{v : F_p(v) > u}`` for ``u`` in [0, 1)."""
        p = _check_p(p)
        u_arr = np.asarray(u, dtype=np.float64)
        if np.any((u_arr < 0.0) | (u_arr >= 1.0)):
            raise ValueError("u must lie in [0, 1)")
        values, cdf = self.support_cdf(p)
        idx = np.searchsorted(cdf, u_arr, side="right")
        idx = np.minimum(idx, len(values) - 1)
        out = values[idx]
        return out.item() if np.ndim(u) == 0 else out

    def pmf(self, p: float) -> tuple[np.ndarray, np.ndarray]:
        values, cdf = self.support_cdf(_check_p(p))
        return values, np.diff(cdf, prepend=0.0)

    def tail(self, p: float) -> float:
        """``mu_p([t, inf))``."""
        values, cdf = self.support_cdf(_check_p(p))
        below = values < self.threshold_t
        if not below.any():
            return 1.0
        return float(max(0.0, 1.0 - cdf[below][-1]))

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class ScaledBernoulli(MeasureFamily):
    """Mass ``t`` with probability ``p``, else 0."""

    threshold_t: float = 1.0

    def __post_init__(self):
        if not self.threshold_t > 0:
            raise ValueError("threshold t must be positive")

    @property
    def integer_valued(self) -> bool:
        return float(self.threshold_t).is_integer()

    def support_cdf(self, p):
        t = self.threshold_t
        dtype = np.int64 if self.integer_valued else np.float64
        return np.array([0, t], dtype=dtype), np.array([1.0 - p, 1.0])

    def quantile(self, p, u):
        # closed form; keeps u = 1 - p exactly on the upper branch
        p = _check_p(p)
        u_arr = np.asarray(u, dtype=np.float64)
        if np.any((u_arr < 0.0) | (u_arr >= 1.0)):
            raise ValueError("u must lie in [0, 1)")
        dtype = np.int64 if self.integer_valued else np.float64
        t = np.asarray(self.threshold_t, dtype=dtype)
        out = np.where(u_arr >= 1.0 - p, t, np.zeros((), dtype=dtype))
        return out.item() if np.ndim(u) == 0 else out

    def describe(self):
        return f"bernoulli(t={self.threshold_t:g})"


@dataclass(frozen=True)
class Poisson(MeasureFamily):
    """Poisson with mean ``rho(p) = p * rho_max``."""

    rho_max: float = 1.0
    threshold_t: float = 4.0
    tail_eps: float = 1e-17

    def __post_init__(self):
        if not self.rho_max > 0:
            raise ValueError("rho_max must be positive")
        if not self.threshold_t > 0:
            raise ValueError("threshold t must be positive")

    def rate(self, p: float) -> float:
        return _check_p(p) * self.rho_max

    def support_cdf(self, p):
        rho = self.rate(p)
        # support grows until the upper tail is below double resolution
        kmax = int(rho + 12.0 * math.sqrt(rho) + 40.0)
        ks = np.arange(kmax + 1, dtype=np.int64)
        cdf = pdtr(ks, rho) if rho > 0 else np.ones(kmax + 1)
        cdf = np.maximum.accumulate(cdf)
        cdf[-1] = 1.0
        return ks, cdf

    def describe(self):
        return f"poisson(rho_max={self.rho_max:g},t={self.threshold_t:g})"


@dataclass(frozen=True)
class TableFamily(MeasureFamily):
    """User-supplied CDF rows on a fixed support, indexed by a grid of ``p``.

    For ``p`` between grid points the row of the largest grid value ``<= p``
    is used, which keeps the quantile monotone in ``p``.
    """

    params: tuple[float, ...]
    values: tuple[float, ...]
    cdfs: tuple[tuple[float, ...], ...]
    threshold_t: float = 1.0
    _cdf_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ps = np.asarray(self.params, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        cdf = np.asarray(self.cdfs, dtype=np.float64)
        if ps.ndim != 1 or len(ps) == 0 or np.any(np.diff(ps) <= 0):
            raise ValueError("params must be a strictly increasing, nonempty grid")
        if ps[0] != 0.0:
            raise ValueError("params grid must start at p = 0")
        if np.any(vals < 0) or np.any(np.diff(vals) <= 0):
            raise ValueError("support values must be nonnegative and strictly increasing")
        if cdf.shape != (len(ps), len(vals)):
            raise ValueError("cdfs must have one row per parameter and one column per value")
        if np.any(np.diff(cdf, axis=1) < 0) or not np.allclose(cdf[:, -1], 1.0):
            raise ValueError("each cdf row must be nondecreasing and end at 1")
        if np.any(np.diff(cdf, axis=0) > 0):
            raise ValueError("cdf rows must decrease in p (stochastic increase)")
        object.__setattr__(self, "_cdf_array", cdf)

    @property
    def integer_valued(self) -> bool:
        return all(float(v).is_integer() for v in self.values)

    def support_cdf(self, p):
        row = int(np.searchsorted(np.asarray(self.params), p, side="right")) - 1
        dtype = np.int64 if self.integer_valued else np.float64
        cdf = self._cdf_array[row].copy()
        cdf[-1] = 1.0
        return np.asarray(self.values, dtype=dtype), cdf

    def describe(self):
        return f"table(n_params={len(self.params)},t={self.threshold_t:g})"


def quantile(family: MeasureFamily, p: float, u):
    return family.quantile(p, u)


def insertion_epsilon(family: MeasureFamily, p: float) -> float:
    """Probability that a single site carries mass at least ``t``.

    For a product measure this is the conditional probability of that event
    given everything off the site. Zero means the family is not insertion
    tolerant at ``p``; a warning is emitted.
    """
    eps = family.tail(p)
    if eps <= 0.0:
        warnings.warn(
            f"{family.describe()} has no mass at or above t={family.threshold_t:g} at p={p}",
            InsertionToleranceWarning,
            stacklevel=2,
        )
        return 0.0
    return eps


def coupled_insertion_epsilon(family: MeasureFamily, p_lo: float, p_hi: float) -> float:
    """Worst-case ``P(Y_x >= t | X_x)`` under the shared-uniform coupling.

    Unlike :func:`insertion_epsilon` this conditions on the lower configuration
    at the same site, which the quantile coupling makes informative.
    """
    lo_vals, lo_cdf = family.support_cdf(_check_p(p_lo))
    hi_vals, hi_cdf = family.support_cdf(_check_p(p_hi))
    t = family.threshold_t
    below = hi_vals < t
    cut = float(hi_cdf[below][-1]) if below.any() else 0.0
    worst = 1.0
    left = 0.0
    for right in lo_cdf:
        width = right - left
        if width > 1e-15:
            hit = max(0.0, right - max(left, cut))
            worst = min(worst, hit / width)
        left = right
    return worst


@dataclass(frozen=True)
class CouplingSampler:
    family: MeasureFamily
    params: tuple[float, ...]
    seed: int

    def __post_init__(self):
        ps = tuple(_check_p(p) for p in self.params)
        if len(ps) < 1:
            raise ValueError("at least one parameter is required")
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError(f"parameters must be strictly increasing, got {ps}")
        object.__setattr__(self, "params", ps)

    def uniforms(self, geom: LatticeGeometry) -> np.ndarray:
        return site_uniforms(self.seed, geom.n_sites)


def sample_coupled(geom: LatticeGeometry, sampler: CouplingSampler) -> tuple[np.ndarray, ...]:
    """One configuration per parameter, pointwise ordered, sharing site uniforms."""
    u = sampler.uniforms(geom)
    return tuple(np.asarray(sampler.family.quantile(p, u)) for p in sampler.params)


def sample_config(geom: LatticeGeometry, family: MeasureFamily, p: float, seed: int) -> np.ndarray:
    return sample_coupled(geom, CouplingSampler(family, (p,), seed))[0]


def family_from_dict(cfg: dict[str, str]) -> MeasureFamily:
    """Build a family from flat ``family.*`` config keys (prefix stripped)."""
    kind = cfg.get("kind", "bernoulli").lower()
    t = float(cfg.get("t", 1.0 if kind == "bernoulli" else 4.0))
    if kind in ("bernoulli", "scaled_bernoulli"):
        return ScaledBernoulli(threshold_t=t)
    if kind == "poisson":
        return Poisson(rho_max=float(cfg.get("rho_max", 1.0)), threshold_t=t)
    if kind == "table":
        params = _floats(cfg["params"])
        values = _floats(cfg["values"])
        rows = tuple(_floats(r) for r in cfg["cdfs"].split(";"))
        return TableFamily(params=params, values=values, cdfs=rows, threshold_t=t)
    raise ValueError(f"unknown family kind {kind!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def check_strictly_increasing(family: MeasureFamily, params: Sequence[float]) -> bool:
    """Strict stochastic increase on tail sets ``[n, inf)`` for ``n = 1 .. t``."""
    tails = []
    t = int(math.ceil(family.threshold_t))
    for p in params:
        values, cdf = family.support_cdf(_check_p(p))
        row = []
        for n in range(1, t + 1):
            below = values < n
            row.append(1.0 - (cdf[below][-1] if below.any() else 0.0))
        tails.append(row)
    tails = np.asarray(tails)
    return bool(np.all(np.diff(tails, axis=0) > 0))
