"""Command-line front end.

    percolab SUBCOMMAND [--config PATH] [--seed N] [--out DIR] [--workers N]
                        [--set key=value ...]

Exit status: 0 on success, 1 on a configuration error, 2 when a checked
invariant is violated (the reproducer seed is printed).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .automata import Automaton, automaton_from_dict
from .clusters import label_clusters, mtp_check, step2_kernel, unit_kernel, zero_kernel
from .experiments import (
    ExperimentPlan,
    estimate_pc_stab,
    estimate_pc_topple,
    geodesic_merge_experiment,
    trifurcation_scan,
    trifurcation_table,
    uniqueness_scan,
    verify_axioms,
)
from .automata import interpolate_config
from .lattice import LatticeGeometry
from .measures import CouplingSampler, family_from_dict, sample_coupled
from .rng import DEFAULT_SEED, mix
from .serialization import read_config, write_config

log = logging.getLogger("percolab")

SUBCOMMANDS = ("stabilize", "sample", "verify", "pc", "stab", "uniqueness", "trifurcations", "merge-demo", "mtp")

DEFAULTS = {
    "automaton.kind": "sandpile",
    "family.kind": "poisson",
    "family.rho_max": "4",
    "family.t": "4",
    "geometry.d": "2",
    "geometry.L": "16",
    "geometry.boundary": "openbox",
    "sweep.p": "0,0.25,0.5,0.75,1",
    "sweep.trials": "50",
    "sweep.p_tol": str(1 / 256),
    "coupling.p": "0.4,0.5,0.6",
    "surrogate.kind": "boundary",
    "surrogate.delta": "0.01",
    "scan.p": "0.7",
    "trifurcation.n": "1",
    "verify.trials": "100",
    "merge.trials": "20",
    "merge.require_macroscopic": "true",
    "mtp.kernel": "step2",
    "mtp.configs": "10",
    "init.kind": "sample",
}


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    def __init__(self, message: str, seed: int | None = None):
        super().__init__(message)
        self.seed = seed


@dataclass
class RunConfig:
    subcommand: str
    config_path: Path | None = None
    seed: int = DEFAULT_SEED
    out_dir: Path = Path(".")
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    overrides: dict[str, str] = field(default_factory=dict)


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; ``[section]`` prefixes later keys."""
    out: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[f"{section}.{key}" if section else key] = value
    return out


def _section(cfg: dict[str, str], name: str) -> dict[str, str]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def build_plan(cfg: dict[str, str], seed: int, workers: int) -> ExperimentPlan:
    try:
        family = family_from_dict(_section(cfg, "family"))
        automaton = automaton_from_dict(_section(cfg, "automaton"), family.threshold_t)
        coupling = _floats(cfg["coupling.p"])
        if len(coupling) != 3:
            raise ConfigError("coupling.p needs three values p1,p2,p3")
        return ExperimentPlan(
            automaton=automaton,
            family=family,
            dimension=int(cfg["geometry.d"]),
            sides=_ints(cfg["geometry.L"]),
            boundary=cfg["geometry.boundary"],
            p_grid=_floats(cfg["sweep.p"]),
            trials=int(cfg["sweep.trials"]),
            seed=seed,
            surrogate=cfg["surrogate.kind"],
            delta=float(cfg["surrogate.delta"]),
            coupling=coupling,
            p_tol=float(cfg["sweep.p_tol"]),
            workers=workers,
        )
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _initial_config(cfg: dict[str, str], plan: ExperimentPlan, geom: LatticeGeometry) -> np.ndarray:
    init = _section(cfg, "init")
    kind = init.get("kind", "sample")
    if kind == "sample":
        p = float(init.get("p", plan.coupling[1]))
        (xi,) = sample_coupled(geom, CouplingSampler(plan.family, (p,), plan.seed))
        return xi
    if kind == "zeros":
        return np.zeros(geom.n_sites, dtype=np.int64)
    if kind == "uniform":
        return np.full(geom.n_sites, int(init.get("mass", 1)), dtype=np.int64)
    if kind == "delta":
        xi = np.zeros(geom.n_sites, dtype=np.int64)
        where = init.get("site", "center")
        site = geom.center() if where == "center" else _ints(where)
        xi[geom.index(site)] = int(init.get("mass", 1))
        return xi
    if kind == "file":
        values, fgeom = read_config(init["file"])
        if fgeom != geom:
            raise ConfigError(f"init.file geometry {fgeom} does not match {geom}")
        return values
    raise ConfigError(f"unknown init.kind {kind!r}")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cmd_stabilize(cfg, plan, out: Path, say) -> None:
    geom = plan.geometry(plan.sides[0])
    xi = _initial_config(cfg, plan, geom)
    res = plan.automaton.apply(xi, geom, mix(plan.seed, 1))
    write_config(out / "initial.bin", xi, geom)
    write_config(out / "omega.bin", res.omega, geom)
    write_config(out / "odometer.bin", res.odometer, geom)
    write_config(out / "final.bin", res.final_config, geom)
    label_clusters(res.omega, geom).to_csv(out / "labels.csv")
    say(f"automaton {plan.automaton.kind} on {geom.boundary.value} d={geom.dimension} L={geom.side}")
    say(f"initial mass {int(np.asarray(xi).sum())}")
    say(f"odometer total {res.odometer_total}")
    say(f"open sites {int(res.omega.sum())}")
    say(f"stabilized {res.stabilized}")
    if plan.automaton.convention == "toppled" and not geom.is_torus:
        final_mass = int(np.asarray(res.final_config).sum())
        say(f"final mass {final_mass}, dissipated {res.dissipated}")
        if int(np.asarray(xi).sum()) != final_mass + res.dissipated:
            raise InvariantViolation("mass not conserved", plan.seed)


def _cmd_sample(cfg, plan, out: Path, say) -> None:
    geom = plan.geometry(plan.sides[0])
    X, Y, Z = sample_coupled(geom, CouplingSampler(plan.family, plan.coupling, plan.seed))
    for name, arr in zip("XYZ", (X, Y, Z)):
        write_config(out / f"{name}.bin", arr, geom)
        say(f"{name}: mean mass {float(np.mean(arr)):.6g}")
    if not (np.all(X <= Y) and np.all(Y <= Z)):
        raise InvariantViolation("coupled sample is not ordered", plan.seed)
    say("ordering X <= Y <= Z holds at every site")


def _cmd_verify(cfg, plan, out: Path, say) -> None:
    report = verify_axioms(plan, int(cfg["verify.trials"]))
    rows = [
        (name, t.checks, t.violations, t.skipped, " ".join(str(s) for s in t.reproducers))
        for name, t in report.tallies.items()
    ]
    _write_rows(out / "verify.csv", ("axiom", "checks", "violations", "skipped", "reproducer_seeds"), rows)
    for line in report.lines():
        say(line)
    for p, eps in report.epsilons.items():
        say(f"insertion epsilon at p={p:g}: {eps:.6g}")
    say(f"total violations {report.total_violations}")
    if report.total_violations:
        seeds = [s for t in report.tallies.values() for s in t.reproducers]
        raise InvariantViolation("axiom violations found", seeds[0] if seeds else None)


def _cmd_pc(cfg, plan, out: Path, say) -> None:
    est = estimate_pc_topple(plan)
    est.sweep.to_csv(out / "pc_topple.csv")
    for L, pc in est.pc_hat.items():
        say(f"L={L} pc_hat={'nan' if math.isnan(pc) else format(pc, '.6f')}")
    for msg in est.failures:
        say(f"bracket failure: {msg}")
    say(f"crossing order violations {est.order_violations}")
    if est.order_violations:
        raise InvariantViolation("crossing indicator not monotone in p", plan.seed)


def _cmd_stab(cfg, plan, out: Path, say) -> None:
    est = estimate_pc_stab(plan)
    est.sweep.to_csv(out / "pc_stab.csv")
    for r in est.sweep.sorted_rows():
        say(f"L={r.L} p={r.p:g} stab_fail_freq={r.stab_fail_freq:.4f} mean_odometer_origin={r.odometer_origin_mean:.4g}")
    for L, p in est.pc_stab_hat.items():
        say(f"L={L} pc_stab_hat={'nan' if math.isnan(p) else format(p, '.6f')}")


def _cmd_uniqueness(cfg, plan, out: Path, say) -> None:
    sweep = uniqueness_scan(plan, float(cfg["scan.p"]))
    sweep.to_csv(out / "uniqueness.csv")
    for r in sweep.sorted_rows():
        say(f"L={r.L} mean_s2_over_s1={r.s2_over_s1_mean:.6g} mean_macroscopic={r.macroscopic_count_mean:.4g}")


def _cmd_trifurcations(cfg, plan, out: Path, say) -> None:
    sweep = trifurcation_scan(plan, float(cfg["scan.p"]), int(cfg["trifurcation.n"]))
    sweep.to_csv(out / "trifurcations.csv")
    for L, mean, per_face, per_vol in trifurcation_table(sweep):
        say(f"L={L} mean_T={mean:.6g} T/L^(d-1)={per_face:.6g} T/L^d={per_vol:.6g}")


def _cmd_merge(cfg, plan, out: Path, say) -> None:
    n = int(cfg["merge.trials"])
    req = _bool(cfg["merge.require_macroscopic"])
    rows, bad = [], []
    for k in range(n):
        rep = geodesic_merge_experiment(plan, trial=k, require_macroscopic=req)
        rows.append((k, rep.found_pair, "" if rep.D is None else rep.D,
                     "" if rep.merged is None else rep.merged, rep.seed))
        if rep.found_pair and not rep.merged:
            bad.append(rep.seed)
    _write_rows(out / "merge.csv", ("trial", "found_pair", "D", "merged", "seed"), rows)
    found = sum(1 for r in rows if r[1])
    say(f"trials {n}, found_pair {found}, merged {found - len(bad)}")
    if bad:
        raise InvariantViolation("found pair that did not merge", bad[0])


_KERNELS = {"step2": step2_kernel, "unit": unit_kernel, "zero": zero_kernel}


def _cmd_mtp(cfg, plan, out: Path, say) -> None:
    name = cfg["mtp.kernel"]
    if name not in _KERNELS:
        raise ConfigError(f"unknown mtp.kernel {name!r}")
    from .lattice import Boundary
    geom = plan.geometry(plan.sides[0], Boundary.TORUS)
    rows, worst = [], 0.0
    auto = plan.automaton
    t = auto.threshold(geom)
    for k in range(int(cfg["mtp.configs"])):
        s = mix(plan.seed, 0x37, k)
        X, Y, Z = sample_coupled(geom, CouplingSampler(plan.family, plan.coupling, s))
        o12 = interpolate_config(auto.apply(X, geom, mix(s, 1)).omega, Y, t)
        o3 = auto.apply(Z, geom, mix(s, 1)).omega
        rep = mtp_check(geom, _KERNELS[name], o12, o3)
        worst = max(worst, rep.max_discrepancy)
        rows.append((k, name, format(rep.max_discrepancy, ".6g"), rep.passed, s))
    _write_rows(out / "mtp.csv", ("config", "kernel", "max_discrepancy", "pass", "seed"), rows)
    say(f"kernel {name}: max discrepancy {worst:.3g} over {len(rows)} torus configurations")
    if any(not r[3] for r in rows):
        raise InvariantViolation("mass-transport identity failed", next(r[4] for r in rows if not r[3]))


_DISPATCH = {
    "stabilize": _cmd_stabilize,
    "sample": _cmd_sample,
    "verify": _cmd_verify,
    "pc": _cmd_pc,
    "stab": _cmd_stab,
    "uniqueness": _cmd_uniqueness,
    "trifurcations": _cmd_trifurcations,
    "merge-demo": _cmd_merge,
    "mtp": _cmd_mtp,
}


def run(config: RunConfig, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout

    def say(line: str) -> None:
        print(line, file=stdout)

    if config.subcommand not in _DISPATCH:
        print(f"unknown subcommand {config.subcommand!r}", file=sys.stderr)
        print(_usage(), file=sys.stderr)
        return 1
    try:
        cfg = dict(DEFAULTS)
        if config.config_path is not None:
            cfg.update(parse_config_text(Path(config.config_path).read_text()))
        cfg.update(config.overrides)
        plan = build_plan(cfg, config.seed, config.workers)
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        _DISPATCH[config.subcommand](cfg, plan, out, say)
    except InvariantViolation as exc:
        say(f"INVARIANT VIOLATION: {exc}; reproduce with --seed {exc.seed}")
        return 2
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    return 0


def _usage() -> str:
    return (
        "usage: percolab {" + ",".join(SUBCOMMANDS) + "} [--config PATH] [--seed N] "
        "[--out DIR] [--workers N] [--set key=value ...]"
    )


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="percolab", usage=_usage())
    ap.add_argument("subcommand")
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    ap.add_argument("--out", type=Path, default=Path("."))
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            print(f"--set expects key=value, got {item!r}", file=sys.stderr)
            return 1
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    config = RunConfig(args.subcommand, args.config, args.seed, args.out, max(1, args.workers), overrides)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
