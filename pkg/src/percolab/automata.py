"""Monotone maps from particle configurations to open/closed site configurations.

Sandpile and activated random walk report the set of sites that toppled;
bootstrap percolation reports its occupied closure. Configurations are flat
row-major arrays tied to a :class:`~percolab.lattice.LatticeGeometry`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .lattice import LatticeGeometry, translate_config
from .rng import mix

log = logging.getLogger(__name__)

CAP_PER_SITE = 10_000


@dataclass(frozen=True)
class StabilizationResult:
    omega: np.ndarray
    odometer: np.ndarray
    final_config: np.ndarray
    stabilized: bool
    dissipated: int = 0
    instructions: np.ndarray | None = field(default=None, repr=False)
    asleep: np.ndarray | None = field(default=None, repr=False)

    @property
    def odometer_total(self) -> int:
        return int(self.odometer.sum())


def _as_int_config(xi, geom: LatticeGeometry) -> np.ndarray:
    arr = np.asarray(xi).reshape(-1)
    if arr.shape[0] != geom.n_sites:
        raise ValueError(f"configuration has {arr.shape[0]} sites, window has {geom.n_sites}")
    if np.any(arr < 0):
        raise ValueError("particle configurations must be nonnegative")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.floor(arr)):
            raise ValueError("sandpile and ARW need integer particle counts")
    elif arr.dtype.kind not in "iub":
        raise ValueError(f"unsupported dtype {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.int64)


def _as_config(xi, geom: LatticeGeometry) -> np.ndarray:
    arr = np.asarray(xi).reshape(-1)
    if arr.shape[0] != geom.n_sites:
        raise ValueError(f"configuration has {arr.shape[0]} sites, window has {geom.n_sites}")
    if np.any(arr < 0):
        raise ValueError("particle configurations must be nonnegative")
    return arr


def _default_cap(geom: LatticeGeometry, cap: int | None) -> int:
    if cap is None:
        return CAP_PER_SITE * geom.n_sites
    if cap <= 0:
        raise ValueError("cap must be positive")
    return int(cap)


def _order_flags(order: str) -> bool:
    if order not in ("fifo", "random"):
        raise ValueError(f"order must be 'fifo' or 'random', got {order!r}")
    return order == "random"


def sandpile_stabilize(
    xi,
    geom: LatticeGeometry,
    t: int | None = None,
    cap: int | None = None,
    order: str = "fifo",
    order_seed: int = 0,
) -> StabilizationResult:
    """Topple every site holding at least ``t`` particles until none remain.

    A toppling sends one particle to each of the ``2d`` neighbors; particles
    sent off an open box are lost. ``t`` defaults to ``2d`` and may not be
    smaller (masses would go negative). With ``order="random"`` the next
    site is drawn uniformly among unstable ones from ``order_seed``.
    """
    t = geom.degree if t is None else int(t)
    if t < geom.degree:
        raise ValueError(f"threshold t={t} is below the degree {geom.degree}")
    mass = _as_int_config(xi, geom)
    cap = _default_cap(geom, cap)
    final, odo, total, stabilized = _kernels.sandpile_stabilize(
        mass, geom.neighbor_table, t, cap, _order_flags(order), int(order_seed) & (2**64 - 1)
    )
    if not stabilized and not geom.is_torus:
        log.warning("sandpile on open box hit the topple cap (%d); this should not happen", cap)
    dissipated = int(np.dot(odo, geom.sink_counts))
    return StabilizationResult(
        omega=(odo > 0).astype(np.uint8),
        odometer=odo,
        final_config=final,
        stabilized=bool(stabilized),
        dissipated=dissipated,
    )


def abelian_check(
    xi,
    geom: LatticeGeometry,
    t: int | None = None,
    trials: int = 10,
    seed: int = 0,
    cap: int | None = None,
) -> bool:
    """True iff ``trials`` random toppling orders reproduce the FIFO result exactly."""
    ref = sandpile_stabilize(xi, geom, t, cap)
    if not ref.stabilized:
        raise ValueError("configuration does not stabilize under the cap")
    for k in range(trials):
        res = sandpile_stabilize(xi, geom, t, cap, order="random", order_seed=mix(seed, k))
        if not (
            res.stabilized
            and np.array_equal(res.odometer, ref.odometer)
            and np.array_equal(res.final_config, ref.final_config)
        ):
            return False
    return True


def bootstrap_apply(xi, geom: LatticeGeometry, theta: int, t: float = 1.0) -> np.ndarray:
    """Occupied closure: start from ``{xi >= t}``, fill sites with ``theta`` occupied neighbors."""
    if not 1 <= theta <= geom.degree:
        raise ValueError(f"theta must lie in [1, {geom.degree}], got {theta}")
    arr = _as_config(xi, geom)
    occupied = np.ascontiguousarray(arr >= t, dtype=np.uint8)
    return _kernels.bootstrap_closure(occupied, geom.neighbor_table, int(theta))


def sleep_probability(lam: float) -> float:
    if lam < 0 or math.isnan(lam):
        raise ValueError("sleep rate must be nonnegative")
    return 1.0 if math.isinf(lam) else lam / (1.0 + lam)


def arw_stabilize(
    xi,
    geom: LatticeGeometry,
    lam: float,
    seed: int,
    cap: int | None = None,
    order: str = "fifo",
    order_seed: int = 0,
) -> StabilizationResult:
    """Activated random walk through site-wise instruction stacks.

    Instruction ``k`` at site ``x`` is a pure function of ``(seed, x, k)``:
    sleep with probability ``lam / (1 + lam)``, otherwise a jump to a uniform
    neighbor slot (sink slots kill the particle). Sleep only takes effect on
    a lone particle; an arriving particle wakes a sleeper. The odometer
    counts jumps, ``instructions`` counts every stack entry consumed.
    """
    counts = _as_int_config(xi, geom)
    cap = _default_cap(geom, cap)
    final, asleep, jumps, instr, total, stabilized = _kernels.arw_stabilize(
        counts,
        geom.neighbor_table,
        sleep_probability(lam),
        int(seed) & (2**64 - 1),
        cap,
        _order_flags(order),
        int(order_seed) & (2**64 - 1),
    )
    return StabilizationResult(
        omega=(jumps > 0).astype(np.uint8),
        odometer=jumps,
        final_config=final,
        stabilized=bool(stabilized),
        dissipated=int(counts.sum() - final.sum()),
        instructions=instr,
        asleep=asleep,
    )


def interpolate_config(omega_p1, Y, t: float) -> np.ndarray:
    """Open where ``omega_p1`` is open or ``Y >= t``."""
    omega_p1 = np.asarray(omega_p1)
    Y = np.asarray(Y)
    if omega_p1.shape != Y.shape:
        raise ValueError(f"shape mismatch {omega_p1.shape} vs {Y.shape}")
    return ((omega_p1 != 0) | (Y >= t)).astype(np.uint8)


class Automaton:
    """A (possibly seeded) monotone map ``xi -> omega``."""

    kind = "abstract"
    convention = "occupied"
    deterministic = True

    def threshold(self, geom: LatticeGeometry) -> float:
        raise NotImplementedError

    def apply(self, xi, geom: LatticeGeometry, seed: int = 0) -> StabilizationResult:
        raise NotImplementedError

    def __call__(self, xi, geom: LatticeGeometry, seed: int = 0) -> np.ndarray:
        return self.apply(xi, geom, seed).omega


def _static_result(omega: np.ndarray, xi) -> StabilizationResult:
    return StabilizationResult(
        omega=omega,
        odometer=np.zeros(omega.shape[0], dtype=np.int64),
        final_config=np.asarray(xi).reshape(-1),
        stabilized=True,
    )


@dataclass(frozen=True)
class Sandpile(Automaton):
    t: int | None = None
    cap: int | None = None
    kind = "sandpile"
    convention = "toppled"

    def threshold(self, geom):
        return geom.degree if self.t is None else self.t

    def apply(self, xi, geom, seed=0):
        return sandpile_stabilize(xi, geom, self.t, self.cap)


@dataclass(frozen=True)
class Bootstrap(Automaton):
    theta: int = 2
    t: float = 1.0
    kind = "bootstrap"

    def threshold(self, geom):
        return self.t

    def apply(self, xi, geom, seed=0):
        return _static_result(bootstrap_apply(xi, geom, self.theta, self.t), xi)


@dataclass(frozen=True)
class ActivatedRandomWalk(Automaton):
    sleep_rate: float = 1.0
    t: int = 2
    cap: int | None = None
    kind = "arw"
    convention = "toppled"
    deterministic = False

    def threshold(self, geom):
        return self.t

    def apply(self, xi, geom, seed=0):
        return arw_stabilize(xi, geom, self.sleep_rate, seed, self.cap)


@dataclass(frozen=True)
class Identity(Automaton):
    """``omega_x = 1{xi_x >= t}``: plain site percolation of the input."""

    t: float = 1.0
    kind = "identity"

    def threshold(self, geom):
        return self.t

    def apply(self, xi, geom, seed=0):
        arr = _as_config(xi, geom)
        return _static_result((arr >= self.t).astype(np.uint8), xi)


def automaton_from_dict(cfg: dict[str, str], family_t: float | None = None) -> Automaton:
    """Build an automaton from flat ``automaton.*`` config keys (prefix stripped)."""
    kind = cfg.get("kind", "sandpile").lower()
    cap = int(float(cfg["cap"])) if "cap" in cfg else None
    if kind == "sandpile":
        return Sandpile(t=int(cfg["t"]) if "t" in cfg else None, cap=cap)
    if kind == "bootstrap":
        return Bootstrap(theta=int(cfg.get("theta", 2)), t=float(cfg.get("t", 1.0)))
    if kind == "arw":
        return ActivatedRandomWalk(
            sleep_rate=float(cfg.get("lambda", 1.0)), t=int(cfg.get("t", 2)), cap=cap
        )
    if kind == "identity":
        default_t = 1.0 if family_t is None else family_t
        return Identity(t=float(cfg.get("t", default_t)))
    raise ValueError(f"unknown automaton kind {kind!r}")


@dataclass(frozen=True)
class DiffResult:
    omega_before: np.ndarray
    omega_after: np.ndarray
    diff: frozenset[int]
    site: int

    @property
    def monotone(self) -> bool:
        return bool(np.all(self.omega_after >= self.omega_before))


def raise_site(xi, geom: LatticeGeometry, x: Sequence[int], r: float) -> np.ndarray:
    """The configuration equal to ``max(r, xi_x)`` at ``x`` and to ``xi`` elsewhere."""
    arr = np.array(np.asarray(xi).reshape(-1), copy=True)
    i = geom.index(x)
    if r > arr[i]:
        if arr.dtype.kind in "iu" and float(r).is_integer():
            arr[i] = int(r)
        else:
            arr = arr.astype(np.float64)
            arr[i] = r
    return arr


def increase_and_diff(
    automaton: Automaton,
    xi,
    geom: LatticeGeometry,
    x: Sequence[int],
    r: float,
    seed: int = 0,
) -> DiffResult:
    """Apply the automaton before and after raising site ``x`` to mass ``r``.

    Both runs share ``seed``, so for ARW they read the same instruction stacks.
    """
    before = automaton.apply(xi, geom, seed).omega
    after = automaton.apply(raise_site(xi, geom, x, r), geom, seed).omega
    diff = frozenset(int(i) for i in np.flatnonzero((after == 1) & (before == 0)))
    return DiffResult(before, after, diff, geom.index(x))


def ad4_holds(result: DiffResult, geom: LatticeGeometry) -> bool:
    """Every newly opened site lies in the open cluster of the raised site.

    Equivalently, the new open set is the old one joined with a connected
    set containing that site. An empty difference passes.
    """
    if not result.diff:
        return True
    after = result.omega_after
    if not after[result.site]:
        return False
    labels = _kernels.label_components(np.ascontiguousarray(after, dtype=np.uint8), geom.neighbor_table)
    root = labels[result.site]
    return all(labels[i] == root for i in result.diff)


def translation_covariant(
    automaton: Automaton, xi, geom: LatticeGeometry, z: Sequence[int], seed: int = 0
) -> bool | None:
    """Compare ``T(tau_z xi)`` with ``tau_z T(xi)`` on a torus.

    Returns ``None`` when either run fails to stabilize (the comparison is
    then not meaningful on a finite torus).
    """
    a = automaton.apply(xi, geom, seed)
    b = automaton.apply(translate_config(np.asarray(xi).reshape(-1), z, geom), geom, seed)
    if not (a.stabilized and b.stabilized):
        return None
    return bool(np.array_equal(translate_config(a.omega, z, geom), b.omega))
