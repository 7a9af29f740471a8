"""Canonical multiparametric mixed-integer conic program representation.

A program couples a parameter theta in R^p, a continuous decision x in R^n
and a binary commutation delta in {0,1}^m. For every admissible delta the
program data is a conic problem affine in (x, theta):

    minimize    c_x.x + c_th.theta + c0
    subject to  eq_x x + eq_th theta + eq_b = 0
                cone_x x + cone_th theta + cone_b in K

with K a product of nonnegative-orthant and second-order cone factors.
General convex costs must be pre-canonicalized into epigraph form so the
cost row stays affine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import DegenerateInput, FormatError, InadmissibleCommutation
from .geometry import Polytope

CONE_ZERO = "zero"
CONE_NONNEG = "nonneg"
CONE_SOC = "soc"
_KINDS = (CONE_ZERO, CONE_NONNEG, CONE_SOC)


@dataclass(frozen=True)
class ConeSpec:
    """Ordered cone factors, each a (kind, size) pair."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "factors",
                           tuple((str(k), int(s)) for k, s in self.factors))
        for kind, size in self.factors:
            if kind not in _KINDS:
                raise ValueError(f"unknown cone kind {kind!r}")
            if size < 1 or (kind == CONE_SOC and size < 2):
                raise ValueError(f"invalid size {size} for cone {kind}")

    @property
    def dim(self) -> int:
        return sum(s for _, s in self.factors)


def _mat(a, rows, cols) -> np.ndarray:
    if a is None:
        return np.zeros((rows, cols))
    a = np.asarray(a, dtype=float)
    return a.reshape(rows, cols)


@dataclass
class ConicData:
    """Conic problem data for one fixed commutation, affine in (x, theta)."""

    c_x: np.ndarray
    c_th: np.ndarray
    c0: float
    eq_x: np.ndarray
    eq_th: np.ndarray
    eq_b: np.ndarray
    cone_x: np.ndarray
    cone_th: np.ndarray
    cone_b: np.ndarray
    cone: ConeSpec

    def __post_init__(self):
        self.c_x = np.asarray(self.c_x, dtype=float).ravel()
        self.c_th = np.asarray(self.c_th, dtype=float).ravel()
        self.c0 = float(self.c0)
        n, p = self.c_x.size, self.c_th.size
        self.eq_b = np.asarray(self.eq_b, dtype=float).ravel()
        self.cone_b = np.asarray(self.cone_b, dtype=float).ravel()
        self.eq_x = _mat(self.eq_x, self.eq_b.size, n)
        self.eq_th = _mat(self.eq_th, self.eq_b.size, p)
        self.cone_x = _mat(self.cone_x, self.cone_b.size, n)
        self.cone_th = _mat(self.cone_th, self.cone_b.size, p)

    @property
    def n(self) -> int:
        return self.c_x.size

    @property
    def p(self) -> int:
        return self.c_th.size

    def check(self) -> list[str]:
        bad = []
        if self.cone.dim != self.cone_b.size:
            bad.append(f"cone dim {self.cone.dim} != cone rows "
                       f"{self.cone_b.size}")
        return bad


@dataclass
class AffineDeltaData:
    """Program data affine in delta as well, for branch-and-bound.

    Every matrix block of :class:`ConicData` gains delta columns; the cone
    specification is fixed across delta. data(delta) equals the base blocks
    with the delta columns contracted against the binary vector.
    """

    c_x: np.ndarray
    c_d: np.ndarray
    c_th: np.ndarray
    c0: float
    eq_x: np.ndarray
    eq_d: np.ndarray
    eq_th: np.ndarray
    eq_b: np.ndarray
    cone_x: np.ndarray
    cone_d: np.ndarray
    cone_th: np.ndarray
    cone_b: np.ndarray
    cone: ConeSpec

    def fix_delta(self, delta) -> ConicData:
        d = np.asarray(delta, dtype=float)
        return ConicData(
            c_x=self.c_x, c_th=self.c_th,
            c0=self.c0 + float(np.dot(self.c_d, d)),
            eq_x=self.eq_x, eq_th=self.eq_th,
            eq_b=np.asarray(self.eq_b) + _mat(
                self.eq_d, len(np.atleast_1d(self.eq_b)), d.size) @ d,
            cone_x=self.cone_x, cone_th=self.cone_th,
            cone_b=np.asarray(self.cone_b) + _mat(
                self.cone_d, len(np.atleast_1d(self.cone_b)), d.size) @ d,
            cone=self.cone)


Commutation = tuple[int, ...]


@dataclass
class ParametricProgram:
    """Multiparametric mixed-integer conic program.

    ``data_map`` is a deterministic mapping from an admissible commutation
    (tuple of bits) to :class:`ConicData`; arbitrary nonlinearity in delta
    is allowed there. ``affine`` optionally supplies an affine-in-delta
    encoding enabling relaxation-based branch-and-bound.
    """

    p: int
    n: int
    m: int
    data_map: Callable[[Commutation], ConicData]
    one_hot_groups: tuple[tuple[int, ...], ...] = ()
    affine: Optional[AffineDeltaData] = None
    name: str = ""
    admissible_list: Optional[tuple[Commutation, ...]] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.one_hot_groups = tuple(tuple(int(i) for i in g)
                                    for g in self.one_hot_groups)

    def is_admissible(self, delta) -> bool:
        delta = tuple(int(b) for b in delta)
        if len(delta) != self.m or any(b not in (0, 1) for b in delta):
            return False
        if self.admissible_list is not None:
            return delta in set(self.admissible_list)
        return all(sum(delta[i] for i in g) == 1 for g in self.one_hot_groups)

    def admissible(self) -> Iterable[Commutation]:
        """Deterministic enumeration of admissible commutations."""
        if self.admissible_list is not None:
            yield from self.admissible_list
            return
        grouped = sorted({i for g in self.one_hot_groups for i in g})
        free = [i for i in range(self.m) if i not in grouped]
        choice_spaces = [[g_i for g_i in g] for g in self.one_hot_groups]
        for free_bits in itertools.product((0, 1), repeat=len(free)):
            for picks in itertools.product(*choice_spaces) if choice_spaces \
                    else [()]:
                delta = [0] * self.m
                for i, b in zip(free, free_bits):
                    delta[i] = b
                for i in picks:
                    delta[i] = 1
                yield tuple(delta)

    def instantiate(self, delta) -> ConicData:
        delta = tuple(int(b) for b in delta)
        if not self.is_admissible(delta):
            raise InadmissibleCommutation(f"delta {delta} not admissible")
        if delta not in self._cache:
            self._cache[delta] = self.data_map(delta)
        return self._cache[delta]


@dataclass(frozen=True)
class ScalingTransform:
    """Per-axis map theta' = scale * (theta - offset)."""

    scale: np.ndarray
    offset: np.ndarray

    def apply(self, theta) -> np.ndarray:
        return self.scale * (np.asarray(theta, dtype=float) - self.offset)

    def invert(self, theta_scaled) -> np.ndarray:
        return np.asarray(theta_scaled, dtype=float) / self.scale + self.offset


def scale_to_unit_box(prog: ParametricProgram, theta_poly: Polytope):
    """Rescale so every axis of the parameter polytope peaks at |.| = 1.

    Returns (scaled program, scaled polytope, transform). Optimal values
    are unchanged: theta = offset + theta'/scale is substituted into the
    program data.
    """
    v = theta_poly.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    ext = (hi - lo) / 2.0
    if np.any(ext <= 1e-300):
        raise DegenerateInput("zero extent along some parameter axis")
    offset = (hi + lo) / 2.0
    scale = 1.0 / ext
    tf = ScalingTransform(scale=scale, offset=offset)

    inv = np.diag(ext)

    def scaled_map(delta, _inner=prog.data_map):
        d = _inner(delta)
        return ConicData(
            c_x=d.c_x, c_th=d.c_th @ inv,
            c0=d.c0 + float(d.c_th @ offset),
            eq_x=d.eq_x, eq_th=d.eq_th @ inv,
            eq_b=d.eq_b + d.eq_th @ offset,
            cone_x=d.cone_x, cone_th=d.cone_th @ inv,
            cone_b=d.cone_b + d.cone_th @ offset,
            cone=d.cone)

    affine = None
    if prog.affine is not None:
        a = prog.affine
        affine = AffineDeltaData(
            c_x=a.c_x, c_d=a.c_d, c_th=np.asarray(a.c_th) @ inv,
            c0=a.c0 + float(np.asarray(a.c_th) @ offset),
            eq_x=a.eq_x, eq_d=a.eq_d, eq_th=np.asarray(a.eq_th) @ inv,
            eq_b=np.asarray(a.eq_b) + np.asarray(a.eq_th) @ offset,
            cone_x=a.cone_x, cone_d=a.cone_d,
            cone_th=np.asarray(a.cone_th) @ inv,
            cone_b=np.asarray(a.cone_b) + np.asarray(a.cone_th) @ offset,
            cone=a.cone)

    scaled = ParametricProgram(
        p=prog.p, n=prog.n, m=prog.m, data_map=scaled_map,
        one_hot_groups=prog.one_hot_groups, affine=affine,
        name=prog.name, admissible_list=prog.admissible_list)
    return scaled, Polytope(tf.apply(v)), tf


def validate(prog: ParametricProgram) -> list[str]:
    """Diagnostics on dimensions, cone sizes and structural constraints.

    Returns a list of violation messages; empty means valid.
    """
    bad = []
    for g in prog.one_hot_groups:
        if len(g) == 0:
            bad.append("empty one-hot group is unsatisfiable")
        for i in g:
            if not 0 <= i < prog.m:
                bad.append(f"group index {i} out of range for m={prog.m}")
    seen = [i for g in prog.one_hot_groups for i in g]
    if len(seen) != len(set(seen)):
        bad.append("one-hot groups overlap")
    probe = list(itertools.islice(prog.admissible(), 4))
    if not probe:
        bad.append("no admissible commutation exists")
    for delta in probe:
        try:
            d = prog.instantiate(delta)
        except Exception as exc:  # diagnostics, not control flow
            bad.append(f"data_map failed for {delta}: {exc}")
            continue
        if d.n != prog.n:
            bad.append(f"delta {delta}: decision dim {d.n} != n={prog.n}")
        if d.p != prog.p:
            bad.append(f"delta {delta}: parameter dim {d.p} != p={prog.p}")
        bad.extend(f"delta {delta}: {msg}" for msg in d.check())
    return bad


# ---------------------------------------------------------------------------
# Program file format: sectioned UTF-8 text with full-precision hexadecimal
# floats for bit-exact round trips.
# ---------------------------------------------------------------------------

_MAGIC = "COMMUTREE-PROGRAM 1"


def _hexline(values) -> str:
    return " ".join(float(v).hex() for v in np.asarray(values).ravel())


def _parse_floats(tokens, lineno):
    try:
        return np.array([float.fromhex(t) for t in tokens], dtype=float)
    except ValueError as exc:
        raise FormatError(lineno, f"bad float: {exc}") from None


def save_program(prog: ParametricProgram, theta_poly: Polytope, path,
                 meta: Optional[dict] = None):
    """Write the program as an explicit per-commutation data table."""
    deltas = list(prog.admissible())
    lines = [_MAGIC,
             f"p {prog.p}", f"n {prog.n}", f"m {prog.m}"]
    for g in prog.one_hot_groups:
        lines.append("group " + " ".join(str(i) for i in g))
    for v in theta_poly.vertices:
        lines.append("theta " + _hexline(v))
    for key, val in (meta or {}).items():
        lines.append(f"meta {key} {val}")
    lines.append(f"deltas {len(deltas)}")
    for delta in deltas:
        d = prog.instantiate(delta)
        lines.append("delta " + "".join(str(b) for b in delta))
        lines.append("c0 " + _hexline([d.c0]))
        lines.append("cx " + _hexline(d.c_x))
        lines.append("cth " + _hexline(d.c_th))
        lines.append(f"eq {d.eq_b.size}")
        for i in range(d.eq_b.size):
            lines.append(_hexline(np.concatenate(
                [d.eq_x[i], d.eq_th[i], [d.eq_b[i]]])))
        lines.append("cone " + " ".join(f"{k}:{s}"
                                        for k, s in d.cone.factors))
        for i in range(d.cone_b.size):
            lines.append(_hexline(np.concatenate(
                [d.cone_x[i], d.cone_th[i], [d.cone_b[i]]])))
        lines.append("enddelta")
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_program(path):
    """Read a program file; returns (program, theta polytope, meta dict)."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise FormatError(0, "empty file")
    if raw[0].strip() != _MAGIC:
        raise FormatError(1, f"expected header {_MAGIC!r}")

    i = 1
    dims = {}
    groups = []
    theta_rows = []
    meta = {}

    def line():
        if i >= len(raw):
            raise FormatError(len(raw), "unexpected end of file")
        return raw[i].strip()

    while i < len(raw) and not line().startswith("deltas"):
        tok = line().split()
        if not tok:
            i += 1
            continue
        if tok[0] in ("p", "n", "m"):
            dims[tok[0]] = int(tok[1])
        elif tok[0] == "group":
            groups.append(tuple(int(t) for t in tok[1:]))
        elif tok[0] == "theta":
            theta_rows.append(_parse_floats(tok[1:], i + 1))
        elif tok[0] == "meta":
            meta[tok[1]] = " ".join(tok[2:])
        else:
            raise FormatError(i + 1, f"unexpected token {tok[0]!r}")
        i += 1
    if i >= len(raw):
        raise FormatError(len(raw), "missing deltas section")
    for key in ("p", "n", "m"):
        if key not in dims:
            raise FormatError(i + 1, f"missing dimension {key}")
    p, n, m = dims["p"], dims["n"], dims["m"]
    count = int(line().split()[1])
    i += 1

    table: dict[Commutation, ConicData] = {}
    order: list[Commutation] = []
    for _ in range(count):
        tok = line().split()
        if tok[0] != "delta":
            raise FormatError(i + 1, "expected delta record")
        bits = tuple(int(ch) for ch in tok[1])
        if len(bits) != m:
            raise FormatError(i + 1, f"delta length {len(bits)} != m={m}")
        i += 1
        fields = {}
        for key in ("c0", "cx", "cth"):
            tok = line().split()
            if tok[0] != key:
                raise FormatError(i + 1, f"expected {key}")
            fields[key] = _parse_floats(tok[1:], i + 1)
            i += 1
        tok = line().split()
        if tok[0] != "eq":
            raise FormatError(i + 1, "expected eq count")
        n_eq = int(tok[1])
        i += 1
        eq_rows = []
        for _ in range(n_eq):
            row = _parse_floats(line().split(), i + 1)
            if row.size != n + p + 1:
                raise FormatError(i + 1, "bad eq row width")
            eq_rows.append(row)
            i += 1
        tok = line().split()
        if tok[0] != "cone":
            raise FormatError(i + 1, "expected cone spec")
        factors = []
        for t in tok[1:]:
            kind, _, size = t.partition(":")
            factors.append((kind, int(size)))
        try:
            cone = ConeSpec(tuple(factors))
        except ValueError as exc:
            raise FormatError(i + 1, str(exc)) from None
        i += 1
        cone_rows = []
        for _ in range(cone.dim):
            row = _parse_floats(line().split(), i + 1)
            if row.size != n + p + 1:
                raise FormatError(i + 1, "bad cone row width")
            cone_rows.append(row)
            i += 1
        if line() != "enddelta":
            raise FormatError(i + 1, "expected enddelta")
        i += 1
        eq = np.array(eq_rows).reshape(n_eq, n + p + 1)
        co = np.array(cone_rows).reshape(cone.dim, n + p + 1)
        table[bits] = ConicData(
            c_x=fields["cx"], c_th=fields["cth"], c0=float(fields["c0"][0]),
            eq_x=eq[:, :n], eq_th=eq[:, n:n + p], eq_b=eq[:, -1],
            cone_x=co[:, :n], cone_th=co[:, n:n + p], cone_b=co[:, -1],
            cone=cone)
        order.append(bits)
    if i >= len(raw) or line() != "end":
        raise FormatError(i + 1, "missing end marker")
    if not theta_rows:
        raise FormatError(1, "missing theta section")

    prog = ParametricProgram(
        p=p, n=n, m=m, data_map=lambda d: table[tuple(d)],
        one_hot_groups=tuple(groups), admissible_list=tuple(order),
        name=meta.get("name", ""))
    return prog, Polytope(np.array(theta_rows)), meta
