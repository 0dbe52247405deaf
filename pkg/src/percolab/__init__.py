"""Dependent site percolation from monotone automata on Z^d windows."""
from ._kernels import BACKEND
from .automata import ActivatedRandomWalk, Bootstrap, Identity, Sandpile, increase_and_diff
from .clusters import label_clusters, mtp_check
from .experiments import ExperimentPlan, estimate_pc_stab, estimate_pc_topple, verify_axioms
from .lattice import Boundary, LatticeGeometry
from .measures import CouplingSampler, Poisson, ScaledBernoulli, TableFamily, sample_coupled

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ActivatedRandomWalk",
    "Bootstrap",
    "Boundary",
    "CouplingSampler",
    "ExperimentPlan",
    "Identity",
    "LatticeGeometry",
    "Poisson",
    "Sandpile",
    "ScaledBernoulli",
    "TableFamily",
    "estimate_pc_stab",
    "estimate_pc_topple",
    "increase_and_diff",
    "label_clusters",
    "mtp_check",
    "sample_coupled",
    "verify_axioms",
]
