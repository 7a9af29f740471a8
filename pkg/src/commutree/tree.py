"""Partition-tree data structure: node taxonomy, point-location query,
serialization and statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FormatError, OutsideTheta
from .geometry import (barycentric_coordinates, simplex_volume)
from .problem import Commutation

STATUS_OPEN = "open"
STATUS_INTERNAL = "internal"
STATUS_CLOSED_FEASIBLE = "closed_feasible"
STATUS_CERTIFIED = "certified"
STATUS_ONLY_FEASIBLE = "only_feasible"
STATUS_WARNED = "warned"

LEAF_STATUSES = (STATUS_CLOSED_FEASIBLE, STATUS_CERTIFIED,
                 STATUS_ONLY_FEASIBLE, STATUS_WARNED)
_ALL_STATUSES = (STATUS_OPEN, STATUS_INTERNAL) + LEAF_STATUSES


@dataclass
class Node:
    id: int
    parent: int
    vertices: np.ndarray
    status: str = STATUS_OPEN
    delta: Optional[Commutation] = None
    e_abs: Optional[float] = None
    e_rel: Optional[float] = None
    depth: int = 0
    children: list[int] = field(default_factory=list)
    vertex_values: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_simplex(self) -> bool:
        return self.vertices.shape[0] == self.vertices.shape[1] + 1


@dataclass
class TreeStats:
    leaf_count: int
    max_depth: int
    depth_below_first_layer: int
    node_count: int
    first_layer_count: int
    iteration_count: int
    runtime: float
    status_volume_fractions: dict
    kappa_estimate: Optional[float]


class PartitionTree:
    """Tree of cells (region, commutation) over a parameter polytope.

    The root stores the polytope; its children are the initial simplicial
    cells; descendants come from binary bisection or point-insertion
    splits. Finalized trees are immutable by convention and safe to query
    concurrently.
    """

    def __init__(self, p: int, m: int, theta_vertices):
        self.p = p
        self.m = m
        root = Node(id=0, parent=-1,
                    vertices=np.atleast_2d(np.asarray(theta_vertices,
                                                      dtype=float)))
        self.nodes: list[Node] = [root]
        self.meta: dict = {"iterations": 0, "runtime": 0.0}
        self.events: list[dict] = []
        self.last_query_tests = 0

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def add_child(self, parent_id: int, vertices) -> Node:
        parent = self.nodes[parent_id]
        node = Node(id=len(self.nodes), parent=parent_id,
                    vertices=np.atleast_2d(np.asarray(vertices, dtype=float)),
                    depth=parent.depth + 1)
        if parent.status in (STATUS_OPEN,):
            parent.status = STATUS_INTERNAL
        parent.children.append(node.id)
        self.nodes.append(node)
        return node

    def close(self, node_id: int, status: str, delta=None,
              e_abs=None, e_rel=None, vertex_values=None):
        node = self.nodes[node_id]
        node.status = status
        node.delta = tuple(delta) if delta is not None else None
        node.e_abs = e_abs
        node.e_rel = e_rel
        if vertex_values is not None:
            node.vertex_values = np.asarray(vertex_values, dtype=float)

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf and n.id != 0]

    def first_layer(self) -> list[Node]:
        return [self.nodes[i] for i in self.root.children]

    def is_finalized(self) -> bool:
        return all(n.status in LEAF_STATUSES for n in self.leaves())

    def total_volume(self) -> float:
        return sum(simplex_volume(n.vertices) for n in self.first_layer())

    # -- point location ----------------------------------------------------

    def query(self, theta) -> Node:
        """Descend to the leaf containing theta.

        The first child containing theta (boundary tolerance -1e-9) wins
        on shared facets; below the first layer the last sibling is taken
        without testing since children cover their parent.
        """
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        self.last_query_tests = 0
        node = None
        for cid in self.root.children:
            cand = self.nodes[cid]
            self.last_query_tests += 1
            if barycentric_coordinates(cand.vertices, theta)[1]:
                node = cand
                break
        if node is None:
            raise OutsideTheta(f"theta {theta} outside the partitioned set")
        while node.children:
            nxt = None
            for cid in node.children[:-1]:
                cand = self.nodes[cid]
                self.last_query_tests += 1
                if barycentric_coordinates(cand.vertices, theta)[1]:
                    nxt = cand
                    break
            node = nxt if nxt is not None else self.nodes[node.children[-1]]
        return node


def statistics(tree: PartitionTree,
               fitted_leaf_count: Optional[float] = None) -> TreeStats:
    """Exact tree counts plus an optional normalized-overlap estimate.

    The overlap estimate inverts the exponential leaf-count model against
    the fitted prediction so a perfect match maps to 1/e; it is
    model-dependent and reported as such.
    """
    leaves = tree.leaves()
    eta = len(leaves)
    max_depth = max((n.depth for n in leaves), default=0)
    vol = tree.total_volume()
    fractions: dict[str, float] = {}
    for n in leaves:
        fractions[n.status] = fractions.get(n.status, 0.0) + \
            simplex_volume(n.vertices) / vol
    kappa = None
    if fitted_leaf_count is not None and eta > 0:
        log_fit = math.log2(fitted_leaf_count) if fitted_leaf_count > 1 \
            else 0.0
        if log_fit > 0:
            kappa = min(1.0, math.exp(-math.log2(eta) / log_fit))
    return TreeStats(
        leaf_count=eta,
        max_depth=max_depth,
        depth_below_first_layer=max(0, max_depth - 1),
        node_count=len(tree.nodes),
        first_layer_count=len(tree.root.children),
        iteration_count=int(tree.meta.get("iterations", 0)),
        runtime=float(tree.meta.get("runtime", 0.0)),
        status_volume_fractions=fractions,
        kappa_estimate=kappa)


# ---------------------------------------------------------------------------
# Serialization: line-oriented UTF-8 with hex floats (byte-exact round trip).
# ---------------------------------------------------------------------------

_MAGIC = "COMMUTREE-TREE 1"


def _hexline(values) -> str:
    return " ".join(float(v).hex() for v in np.asarray(values).ravel())


def serialize(tree: PartitionTree, path):
    lines = [_MAGIC, f"p {tree.p}", f"m {tree.m}"]
    for key in sorted(tree.meta):
        lines.append(f"meta {key} {tree.meta[key]}")
    for node in tree.nodes:
        delta = "".join(str(b) for b in node.delta) \
            if node.delta is not None else "-"
        ea = float(node.e_abs).hex() if node.e_abs is not None else "-"
        er = float(node.e_rel).hex() if node.e_rel is not None else "-"
        lines.append(f"node {node.id} parent {node.parent} "
                     f"status {node.status} delta {delta} "
                     f"eabs {ea} erel {er} depth {node.depth}")
        for v in node.vertices:
            lines.append("v " + _hexline(v))
        if node.vertex_values is not None:
            lines.append("vals " + _hexline(node.vertex_values))
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def deserialize(path) -> PartitionTree:
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise FormatError(0, "empty file")
    if raw[0].strip() != _MAGIC:
        raise FormatError(1, f"expected header {_MAGIC!r}")

    p = m = None
    meta = {}
    records = []
    current = None
    for lineno, line in enumerate(raw[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "p":
            p = int(tok[1])
        elif tok[0] == "m":
            m = int(tok[1])
        elif tok[0] == "meta":
            meta[tok[1]] = " ".join(tok[2:])
        elif tok[0] == "node":
            kv = dict(zip(tok[2::2], tok[3::2]))
            try:
                current = {
                    "id": int(tok[1]),
                    "parent": int(kv["parent"]),
                    "status": kv["status"],
                    "delta": kv["delta"],
                    "eabs": kv["eabs"],
                    "erel": kv["erel"],
                    "depth": int(kv["depth"]),
                    "verts": [],
                    "vals": None,
                    "line": lineno,
                }
            except (KeyError, ValueError) as exc:
                raise FormatError(lineno, f"bad node record: {exc}") from None
            records.append(current)
        elif tok[0] == "v":
            if current is None:
                raise FormatError(lineno, "vertex before any node")
            try:
                current["verts"].append(
                    [float.fromhex(t) for t in tok[1:]])
            except ValueError as exc:
                raise FormatError(lineno, f"bad float: {exc}") from None
        elif tok[0] == "vals":
            try:
                current["vals"] = np.array(
                    [float.fromhex(t) for t in tok[1:]])
            except ValueError as exc:
                raise FormatError(lineno, f"bad float: {exc}") from None
        elif tok[0] == "end":
            break
        else:
            raise FormatError(lineno, f"unexpected token {tok[0]!r}")
    if p is None or m is None or not records:
        raise FormatError(len(raw), "missing dimensions or nodes")
    if records[0]["parent"] != -1:
        raise FormatError(records[0]["line"], "first node must be the root")

    tree = PartitionTree(p, m, np.array(records[0]["verts"]))
    tree.meta.update(meta)
    tree.nodes[0].status = records[0]["status"]
    for rec in records[1:]:
        node = tree.add_child(rec["parent"], np.array(rec["verts"]))
        if node.id != rec["id"]:
            raise FormatError(rec["line"], "node ids must be sequential")
        if rec["status"] not in _ALL_STATUSES:
            raise FormatError(rec["line"],
                              f"unknown status {rec['status']!r}")
        node.status = rec["status"]
        node.depth = rec["depth"]
        if rec["delta"] != "-":
            node.delta = tuple(int(ch) for ch in rec["delta"])
            if len(node.delta) != m:
                raise FormatError(rec["line"], "delta length mismatch")
        if rec["eabs"] != "-":
            node.e_abs = float.fromhex(rec["eabs"])
        if rec["erel"] != "-":
            node.e_rel = float.fromhex(rec["erel"])
        if rec["vals"] is not None:
            node.vertex_values = rec["vals"]
    # parents must be internal and their simplex children must conserve
    # volume
    for node in tree.nodes:
        if node.children and node.id != 0 and node.is_simplex:
            vol = simplex_volume(node.vertices)
            child_vol = sum(
                simplex_volume(tree.nodes[c].vertices)
                for c in node.children)
            if abs(child_vol - vol) > 1e-6 * max(vol, 1e-300):
                raise FormatError(
                    0, f"children of node {node.id} do not conserve volume")
    for node in tree.leaves():
        if node.status == STATUS_INTERNAL:
            raise FormatError(0, f"leaf {node.id} marked internal")
    return tree
