"""Simplicial partitioning of multiparametric mixed-integer conic
programs: offline construction of a parameter-space tree whose leaves
carry feasible (phase one) and certified near-optimal (phase two) binary
commutations, plus an online point-location query.
"""

from . import (cli, conic, errors, geometry, instances, mi, phase1, phase2,
               problem, tree, verification)
from .errors import CommutreeError
from .geometry import Polytope, Simplex
from .mi import CommutationCache
from .phase1 import Phase1Config, build_partition
from .phase2 import Phase2Config, refine_partition
from .problem import ConicData, ParametricProgram
from .tree import PartitionTree, statistics

__all__ = [
    "cli", "conic", "errors", "geometry", "instances", "mi", "phase1",
    "phase2", "problem", "tree", "verification",
    "CommutreeError", "Polytope", "Simplex", "CommutationCache",
    "Phase1Config", "build_partition", "Phase2Config", "refine_partition",
    "ConicData", "ParametricProgram", "PartitionTree", "statistics",
]

__version__ = "0.1.0"
