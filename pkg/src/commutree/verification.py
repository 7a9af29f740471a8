"""Independent a-posteriori checks of a finalized partition tree.

Everything here re-derives its facts from scratch (fresh conic solves,
enumeration over all admissible commutations) rather than trusting the
values recorded during construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic, mi
from .errors import OutsideTheta
from .geometry import (barycentric_coordinates, sample_in_hull,
                       simplex_volume)
from .problem import ParametricProgram
from .tree import (PartitionTree, STATUS_CERTIFIED, STATUS_ONLY_FEASIBLE)

SUBOPT_SLACK = 1e-6
VOLUME_RTOL = 1e-6


@dataclass
class VerificationReport:
    ok: bool
    checks: int = 0
    failures: list[str] = field(default_factory=list)

    def fail(self, message: str):
        self.ok = False
        self.failures.append(message)


def _check_volume(tree: PartitionTree, report: VerificationReport):
    """Children of every simplex node must tile it exactly."""
    for node in tree.nodes:
        if node.id == 0 or not node.children or not node.is_simplex:
            continue
        report.checks += 1
        vol = simplex_volume(node.vertices)
        child_vol = sum(simplex_volume(tree.nodes[c].vertices)
                        for c in node.children)
        if abs(child_vol - vol) > VOLUME_RTOL * max(vol, 1e-300):
            report.fail(f"node {node.id}: child volume {child_vol} != "
                        f"parent volume {vol}")


def _check_leaf(prog: ParametricProgram, leaf, rng, samples: int,
                report: VerificationReport):
    delta = leaf.delta
    if delta is None:
        report.fail(f"leaf {leaf.id}: no commutation recorded")
        return
    # vertex feasibility (certifies hull feasibility by convexity)
    for v in leaf.vertices:
        report.checks += 1
        out = conic.solve_fixed_commutation(prog, v, delta)
        if not out.is_optimal:
            report.fail(f"leaf {leaf.id}: delta infeasible at vertex {v} "
                        f"({out.status})")
            return
    # sampled interior feasibility and suboptimality
    vertex_values = np.array([
        conic.solve_fixed_commutation(prog, v, delta).value
        for v in leaf.vertices])
    thetas = sample_in_hull(rng, leaf.vertices, samples)
    for theta in thetas:
        report.checks += 1
        out = conic.solve_fixed_commutation(prog, theta, delta)
        if not out.is_optimal:
            report.fail(f"leaf {leaf.id}: delta infeasible at sampled "
                        f"theta {theta} ({out.status})")
            continue
        if leaf.status == STATUS_ONLY_FEASIBLE:
            continue
        if leaf.status == STATUS_CERTIFIED and leaf.e_abs is not None:
            best, _ = mi.solve_minlp(prog, theta)
            if best.is_optimal and \
                    out.value - best.value > leaf.e_abs + SUBOPT_SLACK:
                report.fail(
                    f"leaf {leaf.id}: suboptimality "
                    f"{out.value - best.value} at theta {theta} exceeds "
                    f"recorded bound {leaf.e_abs}")


def _check_query(tree: PartitionTree, rng, samples: int,
                 report: VerificationReport):
    """Tree descent must agree with a linear scan over all leaves."""
    first = tree.first_layer()
    for _ in range(samples):
        cell = first[rng.integers(len(first))]
        theta = sample_in_hull(rng, cell.vertices, 1)[0]
        report.checks += 1
        try:
            found = tree.query(theta)
        except OutsideTheta:
            report.fail(f"query lost theta {theta} inside the partition")
            continue
        _, inside = barycentric_coordinates(found.vertices, theta)
        if not inside:
            report.fail(f"query returned leaf {found.id} not containing "
                        f"theta {theta}")


def verify_tree(tree: PartitionTree, prog: ParametricProgram,
                samples_per_leaf: int = 5, seed: int = 0,
                query_samples: int = 50) -> VerificationReport:
    """Re-check a finalized tree: structural volume conservation, vertex
    and sampled-interior feasibility of every leaf commutation, sampled
    suboptimality against a full enumeration oracle, and query/linear-scan
    agreement. Returns a report listing every violation found."""
    report = VerificationReport(ok=True)
    rng = np.random.default_rng(seed)
    if not tree.is_finalized():
        report.fail("tree has open or unresolved leaves")
    _check_volume(tree, report)
    for leaf in tree.leaves():
        if leaf.is_simplex:
            _check_leaf(prog, leaf, rng, samples_per_leaf, report)
    _check_query(tree, rng, query_samples, report)
    return report
