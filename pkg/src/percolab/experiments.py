"""Monte Carlo drivers: critical-point surrogates, uniqueness and
trifurcation scans, axiom sweeps and the geodesic merge demonstration.

Seeding: the particle configuration of trial ``k`` at side ``L`` is drawn
from ``mix(master, L, k)`` and does *not* depend on ``p``. Runs at different
``p`` therefore share their uniforms and form a monotone coupling, which is
what makes crossing indicators nondecreasing along a sweep.
"""
from __future__ import annotations

import csv
import functools
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .automata import (
    ActivatedRandomWalk,
    Automaton,
    Sandpile,
    abelian_check,
    ad4_holds,
    arw_stabilize,
    increase_and_diff,
    interpolate_config,
    translation_covariant,
)
from .clusters import (
    cluster_stats,
    count_coarse_trifurcations,
    infinite_mask,
    label_clusters,
    macroscopic_count,
    set_distance,
    spans,
)
from .lattice import Boundary, LatticeGeometry, geodesic
from .measures import (
    CouplingSampler,
    MeasureFamily,
    coupled_insertion_epsilon,
    insertion_epsilon,
    sample_coupled,
)
from .rng import DEFAULT_SEED, mix, site_uniforms_batch, to_uniform

log = logging.getLogger(__name__)

Z95 = 1.959963984540054
_VERIFY_TAG = 0xA5
_MERGE_TAG = 0xB7


class BracketError(RuntimeError):
    """Crossing probability does not straddle 1/2 on the pre-scan grid."""


@dataclass(frozen=True)
class ExperimentPlan:
    automaton: Automaton
    family: MeasureFamily
    dimension: int = 2
    sides: tuple[int, ...] = (16,)
    boundary: Boundary = Boundary.OPEN_BOX
    p_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    trials: int = 50
    seed: int = DEFAULT_SEED
    surrogate: str = "boundary"
    delta: float = 0.01
    coupling: tuple[float, float, float] = (0.4, 0.5, 0.6)
    trifurcation_n: int | None = None
    p_tol: float = 1.0 / 256
    crossing_axis: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sides:
            raise ValueError("at least one side length is required")
        if self.surrogate not in ("boundary", "macroscopic"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        c = tuple(float(p) for p in self.coupling)
        if len(c) != 3 or not 0.0 <= c[0] < c[1] < c[2] <= 1.0:
            raise ValueError(f"coupling needs 0 <= p1 < p2 < p3 <= 1, got {self.coupling}")
        object.__setattr__(self, "coupling", c)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "sides", tuple(int(L) for L in self.sides))
        object.__setattr__(self, "p_grid", tuple(sorted(float(p) for p in self.p_grid)))

    def geometry(self, L: int, boundary: Boundary | None = None) -> LatticeGeometry:
        return _geometry(self.dimension, L, Boundary(boundary or self.boundary))


@functools.lru_cache(maxsize=64)
def _geometry(d: int, L: int, boundary: Boundary) -> LatticeGeometry:
    # shared so the neighbor table is built once per window
    return LatticeGeometry(d, L, boundary)


def trial_seed(master: int, L: int, trial: int) -> int:
    return mix(master, L, trial)


def automaton_seed(sample_seed: int) -> int:
    return mix(sample_seed, 1)


@dataclass(frozen=True)
class TrialRecord:
    crossing: bool
    ratio: float
    macroscopic: int
    toppled_density: float
    stabilized: bool
    trifurcations: int
    odometer_origin: int


def run_trial(plan: ExperimentPlan, L: int, p: float, trial: int) -> TrialRecord:
    geom = plan.geometry(L)
    s = trial_seed(plan.seed, L, trial)
    (xi,) = sample_coupled(geom, CouplingSampler(plan.family, (p,), s))
    res = plan.automaton.apply(xi, geom, automaton_seed(s))
    labels = label_clusters(res.omega, geom)
    stats = cluster_stats(labels)
    tri = -1
    if plan.trifurcation_n is not None:
        tri = count_coarse_trifurcations(
            res.omega, geom, plan.trifurcation_n, surrogate=plan.surrogate, delta=plan.delta
        )
    return TrialRecord(
        crossing=stats.crossing[plan.crossing_axis],
        ratio=stats.ratio,
        macroscopic=macroscopic_count(labels, plan.delta),
        toppled_density=float(res.omega.mean()),
        stabilized=res.stabilized,
        trifurcations=tri,
        odometer_origin=int(res.odometer[geom.index(geom.center())]),
    )


def _run_task(args):
    plan, L, p, trial = args
    return run_trial(plan, L, p, trial)


def _run_trials(plan: ExperimentPlan, L: int, p: float) -> list[TrialRecord]:
    tasks = [(plan, L, p, k) for k in range(plan.trials)]
    if plan.workers > 1 and plan.trials > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            # map preserves task order whatever the completion order
            return list(pool.map(_run_task, tasks, chunksize=max(1, plan.trials // (4 * plan.workers))))
    return [_run_task(t) for t in tasks]


def crossing_probability(plan: ExperimentPlan, L: int, p: float, trials: int | None = None) -> tuple[float, float, float]:
    """Crossing frequency with its Wilson interval, for large trial counts.

    Uses the same per-trial seeds as :func:`run_trial` but samples all
    trials in one vectorized draw and skips the cluster statistics.
    """
    trials = plan.trials if trials is None else trials
    geom = plan.geometry(L)
    seeds = [trial_seed(plan.seed, L, k) for k in range(trials)]
    hits = 0
    chunk = max(1, 2_000_000 // geom.n_sites)
    for start in range(0, trials, chunk):
        block = seeds[start:start + chunk]
        xis = np.asarray(plan.family.quantile(p, site_uniforms_batch(block, geom.n_sites)))
        for s, xi in zip(block, xis):
            omega = plan.automaton.apply(xi, geom, automaton_seed(s)).omega
            hits += spans(omega, geom, plan.crossing_axis)
    lo, hi = wilson_interval(hits, trials)
    return hits / trials, lo, hi


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(centre - half, phat)), min(1.0, max(centre + half, phat))


@dataclass(frozen=True)
class PointResult:
    L: int
    p: float
    trials: int
    crossing_prob: float
    ci_lo: float
    ci_hi: float
    s2_over_s1_mean: float
    macroscopic_count_mean: float
    toppled_density_mean: float
    trifurcations_mean: float
    stab_fail_freq: float
    odometer_origin_mean: float


def summarize(L: int, p: float, records: Sequence[TrialRecord]) -> PointResult:
    n = len(records)
    k = sum(r.crossing for r in records)
    lo, hi = wilson_interval(k, n)
    tri = [r.trifurcations for r in records if r.trifurcations >= 0]
    return PointResult(
        L=L,
        p=p,
        trials=n,
        crossing_prob=k / n,
        ci_lo=lo,
        ci_hi=hi,
        s2_over_s1_mean=float(np.mean([r.ratio for r in records])),
        macroscopic_count_mean=float(np.mean([r.macroscopic for r in records])),
        toppled_density_mean=float(np.mean([r.toppled_density for r in records])),
        trifurcations_mean=float(np.mean(tri)) if tri else math.nan,
        stab_fail_freq=sum(not r.stabilized for r in records) / n,
        odometer_origin_mean=float(np.mean([r.odometer_origin for r in records])),
    )


CSV_COLUMNS = (
    "automaton", "family", "d", "L", "boundary", "p", "trials", "crossing_prob",
    "ci_lo", "ci_hi", "s2_over_s1_mean", "macroscopic_count_mean",
    "trifurcations_mean", "stab_fail_freq", "seed",
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".12g")
    return str(v)


@dataclass
class SweepResult:
    plan: ExperimentPlan
    rows: list[PointResult] = field(default_factory=list)

    def sorted_rows(self) -> list[PointResult]:
        return sorted(self.rows, key=lambda r: (r.L, r.p))

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        plan = self.plan
        for r in self.sorted_rows():
            w.writerow([
                plan.automaton.kind, plan.family.describe(), plan.dimension, r.L,
                plan.boundary.value, _fmt(r.p), r.trials, _fmt(r.crossing_prob),
                _fmt(r.ci_lo), _fmt(r.ci_hi), _fmt(r.s2_over_s1_mean),
                _fmt(r.macroscopic_count_mean), _fmt(r.trifurcations_mean),
                _fmt(r.stab_fail_freq), plan.seed,
            ])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def row(self, L: int, p: float) -> PointResult:
        for r in self.rows:
            if r.L == L and r.p == p:
                return r
        raise KeyError((L, p))


class _PointCache:
    """Evaluates (L, p) points once and keeps their per-trial records."""

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.records: dict[tuple[int, float], list[TrialRecord]] = {}

    def get(self, L: int, p: float) -> PointResult:
        key = (L, float(p))
        if key not in self.records:
            self.records[key] = _run_trials(self.plan, L, float(p))
        return summarize(L, float(p), self.records[key])

    def sweep(self) -> SweepResult:
        return SweepResult(self.plan, [summarize(L, p, recs) for (L, p), recs in self.records.items()])

    def order_violations(self, attr: str = "crossing") -> int:
        """Trials whose indicator decreases somewhere along increasing ``p``."""
        bad = 0
        for L in {k[0] for k in self.records}:
            ps = sorted(p for (LL, p) in self.records if LL == L)
            for k in range(self.plan.trials):
                seq = [getattr(self.records[(L, p)][k], attr) for p in ps]
                bad += any(a > b for a, b in zip(seq, seq[1:]))
        return bad


@dataclass
class PcEstimate:
    pc_hat: dict[int, float]
    sweep: SweepResult
    failures: list[str]
    order_violations: int


def estimate_pc_topple(plan: ExperimentPlan) -> PcEstimate:
    """Bisection on ``p`` for crossing probability 1/2, per side length.

    A pre-scan over ``plan.p_grid`` locates the bracket; when no adjacent
    grid pair straddles 1/2 the side is reported as a bracket failure and
    its estimate is NaN.
    """
    cache = _PointCache(plan)
    pc_hat: dict[int, float] = {}
    failures: list[str] = []
    for L in plan.sides:
        probs = [cache.get(L, p).crossing_prob for p in plan.p_grid]
        lo = hi = None
        for (pa, qa), (pb, qb) in zip(zip(plan.p_grid, probs), zip(plan.p_grid[1:], probs[1:])):
            if qa < 0.5 <= qb:
                lo, hi = pa, pb
                break
        if lo is None:
            msg = (
                f"L={L}: crossing probability does not straddle 1/2 on grid "
                f"{list(plan.p_grid)} (observed {[round(q, 4) for q in probs]})"
            )
            log.warning("bracket failure: %s", msg)
            failures.append(msg)
            pc_hat[L] = math.nan
            continue
        while hi - lo > plan.p_tol:
            mid = 0.5 * (lo + hi)
            if cache.get(L, mid).crossing_prob >= 0.5:
                hi = mid
            else:
                lo = mid
        pc_hat[L] = 0.5 * (lo + hi)
    return PcEstimate(pc_hat, cache.sweep(), failures, cache.order_violations())


@dataclass
class StabEstimate:
    pc_stab_hat: dict[int, float]
    sweep: SweepResult


def estimate_pc_stab(plan: ExperimentPlan) -> StabEstimate:
    """Cap-exhaustion frequency over ``plan.p_grid`` for each side length.

    The crossing point is the linear interpolation of the first grid
    interval where the failure frequency reaches 1/2 (NaN if it never does).
    """
    cache = _PointCache(plan)
    est: dict[int, float] = {}
    for L in plan.sides:
        freqs = [cache.get(L, p).stab_fail_freq for p in plan.p_grid]
        est[L] = math.nan
        prev_p, prev_f = None, None
        for p, f in zip(plan.p_grid, freqs):
            if f >= 0.5:
                if prev_p is None or f == prev_f:
                    est[L] = p
                else:
                    est[L] = prev_p + (0.5 - prev_f) * (p - prev_p) / (f - prev_f)
                break
            prev_p, prev_f = p, f
    return StabEstimate(est, cache.sweep())


def uniqueness_scan(plan: ExperimentPlan, p: float) -> SweepResult:
    cache = _PointCache(plan)
    for L in plan.sides:
        cache.get(L, p)
    return cache.sweep()


def trifurcation_scan(plan: ExperimentPlan, p: float, n: int = 1) -> SweepResult:
    return uniqueness_scan(replace(plan, trifurcation_n=n), p)


def trifurcation_table(sweep: SweepResult) -> list[tuple[int, float, float, float]]:
    """Rows ``(L, mean T_L, mean T_L / L^(d-1), mean T_L / L^d)``."""
    d = sweep.plan.dimension
    return [
        (r.L, r.trifurcations_mean, r.trifurcations_mean / r.L ** (d - 1), r.trifurcations_mean / r.L**d)
        for r in sweep.sorted_rows()
    ]


# --- axiom verification ------------------------------------------------------

AXIOMS = ("R2", "D2", "D3", "AD4", "D1", "Abelian", "R3")


@dataclass
class AxiomTally:
    checks: int = 0
    violations: int = 0
    skipped: int = 0
    reproducers: list[int] = field(default_factory=list)

    def record(self, ok: bool | None, seed: int) -> None:
        if ok is None:
            self.skipped += 1
            return
        self.checks += 1
        if not ok:
            self.violations += 1
            if len(self.reproducers) < 10:
                self.reproducers.append(seed)


@dataclass
class AxiomReport:
    tallies: dict[str, AxiomTally]
    epsilons: dict[float, float]
    coupled_epsilons: dict[tuple[float, float], float]

    @property
    def total_violations(self) -> int:
        return sum(t.violations for t in self.tallies.values())

    def lines(self) -> list[str]:
        out = []
        for name in AXIOMS:
            t = self.tallies[name]
            tail = f" reproducer seeds: {t.reproducers}" if t.reproducers else ""
            out.append(
                f"{name:8s} checks={t.checks:5d} violations={t.violations:4d} skipped={t.skipped:4d}{tail}"
            )
        return out


def _leq(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b))


def verify_axioms(plan: ExperimentPlan, trials: int | None = None, L: int | None = None) -> AxiomReport:
    """Run the per-axiom checks over ``trials`` seeded instances.

    Each instance draws a coupled triple at ``plan.coupling``. D1 is checked
    on a torus of the same size and only for deterministic automata; the
    Abelian check applies to sandpile and ARW only.
    """
    trials = plan.trials if trials is None else trials
    L = plan.sides[0] if L is None else L
    geom = plan.geometry(L)
    torus = plan.geometry(L, Boundary.TORUS) if L >= 3 else None
    auto = plan.automaton
    t = auto.threshold(geom)
    tallies = {name: AxiomTally() for name in AXIOMS}

    epsilons = {}
    for p in plan.coupling:
        eps = insertion_epsilon(plan.family, p)
        epsilons[p] = eps
        tallies["R3"].record(eps > 0, plan.seed)
    p1, p2, p3 = plan.coupling
    coupled = {
        (p1, p2): coupled_insertion_epsilon(plan.family, p1, p2),
        (p2, p3): coupled_insertion_epsilon(plan.family, p2, p3),
    }

    for k in range(trials):
        s = mix(plan.seed, _VERIFY_TAG, L, k)
        a_seed = automaton_seed(s)
        X, Y, Z = sample_coupled(geom, CouplingSampler(plan.family, plan.coupling, s))
        tallies["R2"].record(_leq(X, Y) and _leq(Y, Z), s)

        runs = [auto.apply(c, geom, a_seed) for c in (X, Y, Z)]
        if all(r.stabilized for r in runs):
            wx, wy, wz = (r.omega for r in runs)
            tallies["D2"].record(_leq(wx, wy) and _leq(wy, wz), s)
        else:
            tallies["D2"].record(None, s)
        for c, r in zip((X, Y, Z), runs):
            tallies["D3"].record(bool(np.all(r.omega[c >= t] == 1)), s)

        x = geom.site(int(to_uniform(mix(s, 2)) * geom.n_sites))
        r_mass = math.ceil(t) if Y.dtype.kind in "iu" else t
        diff = increase_and_diff(auto, Y, geom, x, r_mass, a_seed)
        tallies["AD4"].record(diff.monotone and ad4_holds(diff, geom), s)

        if isinstance(auto, Sandpile):
            if runs[1].stabilized:
                tallies["Abelian"].record(
                    abelian_check(Y, geom, auto.t, trials=3, seed=mix(s, 3), cap=auto.cap), s
                )
            else:
                tallies["Abelian"].record(None, s)
        elif isinstance(auto, ActivatedRandomWalk):
            a = arw_stabilize(Y, geom, auto.sleep_rate, a_seed, auto.cap)
            b = arw_stabilize(Y, geom, auto.sleep_rate, a_seed, auto.cap, order="random", order_seed=mix(s, 3))
            if a.stabilized and b.stabilized:
                tallies["Abelian"].record(
                    np.array_equal(a.instructions, b.instructions)
                    and np.array_equal(a.final_config, b.final_config)
                    and np.array_equal(a.asleep, b.asleep),
                    s,
                )
            else:
                tallies["Abelian"].record(None, s)
        else:
            tallies["Abelian"].record(None, s)

        if torus is not None and auto.deterministic:
            (Yt,) = sample_coupled(torus, CouplingSampler(plan.family, (p2,), s))
            z = tuple(int(to_uniform(mix(s, 4, a)) * L) for a in range(plan.dimension))
            tallies["D1"].record(translation_covariant(auto, Yt, torus, z, a_seed), s)
        else:
            tallies["D1"].record(None, s)
    return AxiomReport(tallies, epsilons, coupled)


# --- geodesic merge ------------------------------------------------------------

@dataclass(frozen=True)
class MergeReport:
    found_pair: bool
    D: int | None = None
    merged: bool | None = None
    pair: tuple[int, int] | None = None
    geodesic_interior: tuple[int, ...] = ()
    seed: int | None = None


def open_geodesic_and_merge(
    automaton: Automaton,
    geom: LatticeGeometry,
    xi3: np.ndarray,
    giant_sites: np.ndarray,
    cluster_sites: np.ndarray,
    seed: int = 0,
) -> MergeReport:
    """Raise the interior of a shortest giant-to-cluster geodesic to ``t`` and re-apply.

    Reports whether the giant and the cluster end up in one open cluster.
    """
    rep = set_distance(geom, giant_sites, cluster_sites)
    x, y = rep.attaining_pairs[0]
    path = geodesic(geom, geom.site(x), geom.site(y))
    interior = tuple(geom.index(v) for v in path[1:-1])
    t = automaton.threshold(geom)
    xi = np.array(np.asarray(xi3).reshape(-1), copy=True)
    if interior:
        fill = math.ceil(t) if xi.dtype.kind in "iu" else t
        idx = np.asarray(interior)
        xi[idx] = np.maximum(xi[idx], fill)
    omega = automaton.apply(xi, geom, seed).omega
    labels = label_clusters(omega, geom).labels
    root = labels[x]
    merged = bool(
        root >= 0
        and np.all(labels[np.asarray(giant_sites)] == root)
        and np.all(labels[np.asarray(cluster_sites)] == root)
    )
    return MergeReport(True, rep.D, merged, (x, y), interior)


def geodesic_merge_experiment(
    plan: ExperimentPlan,
    params: tuple[float, float, float] | None = None,
    L: int | None = None,
    trial: int = 0,
    require_macroscopic: bool = True,
) -> MergeReport:
    """One coupled draw: find the interpolated giant and a separate ``omega^{p3}``
    cluster, then try to join them along a geodesic.

    ``found_pair`` is False when every eligible ``omega^{p3}`` cluster already
    contains the giant (or there is none).
    """
    params = plan.coupling if params is None else tuple(params)
    L = plan.sides[0] if L is None else L
    geom = plan.geometry(L)
    s = mix(plan.seed, _MERGE_TAG, L, trial)
    a_seed = automaton_seed(s)
    X, Y, Z = sample_coupled(geom, CouplingSampler(plan.family, params, s))
    auto = plan.automaton
    t = auto.threshold(geom)
    omega_12 = interpolate_config(auto.apply(X, geom, a_seed).omega, Y, t)
    omega_3 = auto.apply(Z, geom, a_seed).omega
    lab12 = label_clusters(omega_12, geom)
    giant = lab12.largest()
    if giant is None:
        return MergeReport(False, seed=s)
    giant_sites = lab12.sites_of(giant)
    lab3 = label_clusters(omega_3, geom)
    eligible = infinite_mask(lab3, plan.surrogate, plan.delta) if require_macroscopic else np.ones(lab3.count, bool)
    giant_roots = set(np.unique(lab3.labels[giant_sites]).tolist())
    best, best_size = None, 0
    for pos, root in enumerate(lab3.roots.tolist()):
        if eligible[pos] and root not in giant_roots and lab3.sizes[pos] > best_size:
            best, best_size = root, int(lab3.sizes[pos])
    if best is None:
        return MergeReport(False, seed=s)
    rep = open_geodesic_and_merge(auto, geom, Z, giant_sites, lab3.sites_of(best), a_seed)
    return replace(rep, seed=s)


def staged_merge_trials(
    plan: ExperimentPlan,
    n_found: int,
    params: tuple[float, float, float] | None = None,
    L: int | None = None,
    max_attempts: int = 10_000,
    require_macroscopic: bool = False,
) -> list[MergeReport]:
    """Keep drawing trials until ``n_found`` of them have a separate cluster."""
    found: list[MergeReport] = []
    for trial in range(max_attempts):
        rep = geodesic_merge_experiment(plan, params, L, trial, require_macroscopic)
        if rep.found_pair:
            found.append(rep)
            if len(found) == n_found:
                break
    return found

