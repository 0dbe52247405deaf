import io
import subprocess
import sys

import numpy as np
import pytest

from percolab.cli import ConfigError, RunConfig, main, parse_config_text, run
from percolab.serialization import read_config

FAST = ["--workers", "1", "--set", "sweep.trials=4", "--set", "geometry.L=8"]


def _run(tmp_path, *args):
    out = io.StringIO()
    argv = list(args)
    sub = argv.pop(0)
    overrides = {}
    while argv:
        flag = argv.pop(0)
        if flag == "--set":
            k, v = argv.pop(0).split("=", 1)
            overrides[k] = v
    code = run(RunConfig(sub, out_dir=tmp_path, workers=1, overrides=overrides), stdout=out)
    return code, out.getvalue()


def test_config_parser():
    cfg = parse_config_text(
        "# comment\nautomaton.kind = bootstrap  # trailing\n[family]\nkind = poisson\nrho_max=2\n"
    )
    assert cfg == {"automaton.kind": "bootstrap", "family.kind": "poisson", "family.rho_max": "2"}
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_stabilize_single_toppling(tmp_path):
    code, out = _run(
        tmp_path, "stabilize", "--set", "init.kind=delta", "--set", "init.mass=4", "--set", "geometry.L=5"
    )
    assert code == 0
    assert "odometer total 1" in out
    omega, g = read_config(tmp_path / "omega.bin")
    assert g.side == 5 and omega.sum() == 1 and omega[g.index((2, 2))] == 1


@pytest.mark.parametrize(
    "sub", ["sample", "verify", "pc", "stab", "uniqueness", "trifurcations", "merge-demo", "mtp"]
)
def test_every_subcommand_runs(tmp_path, sub):
    code, out = _run(
        tmp_path, sub, "--set", "sweep.trials=3", "--set", "geometry.L=8", "--set", "verify.trials=3",
        "--set", "merge.trials=2", "--set", "mtp.configs=1", "--set", "sweep.p=0.2,0.9",
    )
    assert code == 0, out
    assert out.strip()
    assert any(tmp_path.iterdir())


def test_csv_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pc", "--out", str(a), *FAST]) == 0
    assert main(["pc", "--out", str(b), *FAST]) == 0
    assert (a / "pc_topple.csv").read_bytes() == (b / "pc_topple.csv").read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("automaton.kind = bootstrap\nfamily.kind = bernoulli\nfamily.t = 1\ngeometry.L = 6\n")
    code = main(["uniqueness", "--config", str(cfg), "--out", str(tmp_path), "--set", "geometry.L=7", *FAST[:2]])
    assert code == 0
    text = (tmp_path / "uniqueness.csv").read_text()
    assert text.splitlines()[1].startswith("bootstrap,")
    assert ",7,openbox," in text


def test_config_errors(tmp_path, capsys):
    assert main(["pc", "--out", str(tmp_path), "--set", "automaton.kind=glauber"]) == 1
    assert main(["pc", "--out", str(tmp_path), "--set", "coupling.p=0.5,0.4,0.6"]) == 1
    assert main(["pc", "--out", str(tmp_path), "--set", "nonsense"]) == 1
    assert main(["pc", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1
    assert main(["bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sample", "--out", str(blocker / "sub")]) == 1


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    import percolab.cli as cli
    from percolab.experiments import AxiomReport, AxiomTally, AXIOMS

    def broken(plan, trials=None, L=None):
        tallies = {a: AxiomTally() for a in AXIOMS}
        tallies["D2"].record(False, 1234)
        return AxiomReport(tallies, {}, {})

    monkeypatch.setattr(cli, "verify_axioms", broken)
    code, out = _run(tmp_path, "verify")
    assert code == 2
    assert "--seed 1234" in out


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "percolab.cli", "stabilize", "--out", str(tmp_path),
         "--set", "init.kind=delta", "--set", "init.mass=4"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "odometer total 1" in proc.stdout
