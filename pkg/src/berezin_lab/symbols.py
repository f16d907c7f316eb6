"""Bounded nonnegative symbols on a quadrature grid.

A :class:`SetSpec` describes a region of phase space independently of any
grid; :func:`indicator` samples it. Translating an indicator translates
the SetSpec itself, so no resampling error enters.
"""

from __future__ import annotations

import ast
import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryMismatch, InvalidArgument, StageFailure
from .phase_space import AFFINE, FINITE, Geometry, GroupElement, QuadGrid

_AXIS_NAMES = {FINITE: ("p", "q"), "plane": ("w", "t"), AFFINE: ("a", "b")}

_SAFE_FUNCS = {
    "abs": np.abs, "sqrt": np.sqrt, "exp": np.exp, "log": np.log,
    "sin": np.sin, "cos": np.cos, "floor": np.floor, "minimum": np.minimum,
    "maximum": np.maximum, "hypot": np.hypot,
}
_SAFE_NODES = (
    ast.Expression, ast.BoolOp, ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call,
    ast.Name, ast.Load, ast.Constant, ast.And, ast.Or, ast.Not, ast.Add, ast.Sub,
    ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.FloorDiv, ast.USub, ast.UAdd,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq, ast.BitAnd, ast.BitOr,
)


def _compile_predicate(expr, names):
    tree = ast.parse(expr, mode="eval")
    allowed = set(names) | set(_SAFE_FUNCS) | {"pi"}
    for node in ast.walk(tree):
        if not isinstance(node, _SAFE_NODES):
            raise InvalidArgument(f"predicate uses disallowed syntax: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise InvalidArgument(f"predicate uses unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _SAFE_FUNCS):
            raise InvalidArgument("predicate may only call whitelisted functions")
    # `and`/`or` on arrays is ambiguous; rewrite them as elementwise & / |
    tree = _Elementwise().visit(tree)
    ast.fix_missing_locations(tree)
    return compile(tree, "<predicate>", "eval")


class _Elementwise(ast.NodeTransformer):
    def visit_BoolOp(self, node):
        self.generic_visit(node)
        op = ast.BitAnd() if isinstance(node.op, ast.And) else ast.BitOr()
        out = node.values[0]
        for v in node.values[1:]:
            out = ast.BinOp(left=out, op=op, right=v)
        return out

    def visit_UnaryOp(self, node):
        self.generic_visit(node)
        if isinstance(node.op, ast.Not):
            return ast.Call(func=ast.Name(id="logical_not", ctx=ast.Load()), args=[node.operand], keywords=[])
        return node

    def visit_Compare(self, node):
        self.generic_visit(node)
        if len(node.ops) == 1:
            return node
        # chained comparison a < b < c -> (a < b) & (b < c)
        parts, left = [], node.left
        for op, right in zip(node.ops, node.comparators):
            parts.append(ast.Compare(left=left, ops=[op], comparators=[right]))
            left = right
        out = parts[0]
        for p in parts[1:]:
            out = ast.BinOp(left=out, op=ast.BitAnd(), right=p)
        return out


@dataclass(frozen=True)
class SetSpec:
    """A region of phase space.

    ``kind`` is one of:

    * ``balls``: union of open metric balls, ``centers`` and ``radii``;
    * ``strip``: ``|x[axis] - center| <= half_width``, other coordinate free;
    * ``band``: ``lo <= x[axis] <= hi``;
    * ``predicate``: boolean expression in the geometry's coordinate names;
    * ``empty`` / ``all``.

    ``shifts`` lists group elements applied on the left, first one first:
    a point x belongs to the shifted set iff ``(h_n ... h_1)^{-1} x`` lies in
    the base set.
    """

    kind: str
    geometry: Geometry
    params: dict = field(default_factory=dict)
    shifts: tuple = ()

    def __post_init__(self):
        p = self.params
        if self.kind == "balls":
            c = np.asarray(p.get("centers", []), dtype=np.float64).reshape(-1, 2)
            r = np.asarray(p.get("radii", []), dtype=np.float64).reshape(-1)
            if len(c) != len(r):
                raise InvalidArgument("balls need one radius per center")
            if np.any(~(r > 0)):
                raise InvalidArgument("ball radii must be positive")
            if len(c):
                self.geometry.check_points(c)
            object.__setattr__(self, "params", {"centers": c.tolist(), "radii": r.tolist()})
        elif self.kind == "strip":
            if p.get("axis") not in (0, 1) or not float(p.get("half_width", -1)) > 0:
                raise InvalidArgument("strip needs axis in {0, 1} and half_width > 0")
            object.__setattr__(self, "params", {"axis": int(p["axis"]), "half_width": float(p["half_width"]),
                                                "center": float(p.get("center", 0.0))})
        elif self.kind == "band":
            if p.get("axis") not in (0, 1) or not float(p["hi"]) >= float(p["lo"]):
                raise InvalidArgument("band needs axis in {0, 1} and lo <= hi")
            object.__setattr__(self, "params", {"axis": int(p["axis"]), "lo": float(p["lo"]), "hi": float(p["hi"])})
        elif self.kind == "predicate":
            if not isinstance(p.get("expr"), str):
                raise InvalidArgument("predicate needs an 'expr' string")
            _compile_predicate(p["expr"], _AXIS_NAMES[self.geometry.kind])
        elif self.kind not in ("empty", "all"):
            raise InvalidArgument(f"unknown set kind {self.kind!r}")
        for h in self.shifts:
            if h.geometry != self.geometry:
                raise GeometryMismatch("shift belongs to another geometry")

    @classmethod
    def balls(cls, geometry, centers, radii):
        return cls("balls", geometry, {"centers": centers, "radii": radii})

    @classmethod
    def strip(cls, geometry, axis, half_width, center=0.0):
        return cls("strip", geometry, {"axis": axis, "half_width": half_width, "center": center})

    @classmethod
    def band(cls, geometry, axis, lo, hi):
        return cls("band", geometry, {"axis": axis, "lo": lo, "hi": hi})

    @classmethod
    def predicate(cls, geometry, expr):
        return cls("predicate", geometry, {"expr": expr})

    def translated(self, h):
        return replace(self, shifts=self.shifts + (h,))

    def contains(self, points):
        pts = self.geometry.check_points(points)
        for h in reversed(self.shifts):
            pts = self.geometry.act(h.inverse(), pts)
        return self._base_contains(pts)

    def _base_contains(self, pts):
        g, p = self.geometry, self.params
        m = len(pts)
        if self.kind == "empty":
            return np.zeros(m, dtype=bool)
        if self.kind == "all":
            return np.ones(m, dtype=bool)
        if self.kind == "balls":
            out = np.zeros(m, dtype=bool)
            for c, r in zip(p["centers"], p["radii"]):
                out |= g.distance(pts, np.asarray(c)) < r
            return out
        x = pts[:, p.get("axis", 0)].astype(np.float64) if self.kind in ("strip", "band") else None
        if self.kind == "strip":
            return np.abs(x - p["center"]) <= p["half_width"]
        if self.kind == "band":
            return (x >= p["lo"]) & (x <= p["hi"])
        names = _AXIS_NAMES[g.kind]
        env = {"__builtins__": {}, "pi": math.pi, "logical_not": np.logical_not, **_SAFE_FUNCS,
               names[0]: pts[:, 0].astype(np.float64), names[1]: pts[:, 1].astype(np.float64)}
        code = _compile_predicate(p["expr"], names)
        return np.broadcast_to(np.asarray(eval(code, env), dtype=bool), (m,)).copy()

    def to_dict(self):
        out = {"kind": self.kind, "geometry": self.geometry.kind, **self.params}
        if self.geometry.is_finite:
            out["N"] = self.geometry.N
        if self.shifts:
            out["shifts"] = [h.to_list() for h in self.shifts]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d, geometry=None):
        d = dict(d)
        kind = d.pop("kind")
        gkind = d.pop("geometry", None)
        N = d.pop("N", None)
        if geometry is None:
            geometry = Geometry(gkind, N)
        elif gkind is not None and gkind != geometry.kind:
            raise GeometryMismatch(f"set is for {gkind}, grid is {geometry.kind}")
        shifts = d.pop("shifts", [])
        hs = []
        for s in shifts:
            if geometry.kind == AFFINE:
                hs.append(GroupElement(geometry, tuple(s)))
            else:
                hs.append(GroupElement(geometry, (s[0], s[1], complex(s[2], s[3]) if len(s) == 4 else 1.0)))
        return cls(kind, geometry, d, tuple(hs))


@dataclass(frozen=True, eq=False)
class Symbol:
    """Nonnegative samples aligned with a grid."""

    samples: np.ndarray
    grid: QuadGrid
    provenance: str = "samples"
    spec: SetSpec | None = None
    sup_bound: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.shape != (len(self.grid),):
            raise GeometryMismatch(f"symbol has {s.shape} samples for a grid of {len(self.grid)} points")
        if np.any(~np.isfinite(s)) or np.any(s < 0):
            raise InvalidArgument("symbol samples must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sup_bound", float(s.max()) if len(s) else 0.0)

    @classmethod
    def constant(cls, grid, value):
        return cls(np.full(len(grid), float(value)), grid, "constant")

    def complement(self):
        """1 - sigma, for symbols bounded by 1."""
        if self.sup_bound > 1.0 + 1e-12:
            raise InvalidArgument("complement needs sigma <= 1")
        return Symbol(np.clip(1.0 - self.samples, 0.0, 1.0), self.grid, "complement")

    def l1_norm(self):
        return float(np.dot(self.samples, self.grid.weights))

    @property
    def support(self):
        return np.flatnonzero(self.samples)


def indicator(grid, spec):
    if spec.geometry != grid.geometry:
        raise GeometryMismatch("set and grid belong to different geometries")
    return Symbol(spec.contains(grid.points).astype(np.float64), grid, "indicator", spec)


def translate_symbol(sigma, h):
    """sigma_h(x) = sigma(h^{-1} x).

    Indicators re-evaluate their translated spec. Other symbols are read at
    the grid point nearest to ``h^{-1} x`` (exact on the finite geometry)
    and taken as zero where ``h^{-1} x`` leaves the grid's extent.
    """
    grid = sigma.grid
    if h.geometry != grid.geometry:
        raise GeometryMismatch("group element belongs to another geometry")
    if sigma.provenance == "indicator" and sigma.spec is not None:
        spec = sigma.spec.translated(h)
        return Symbol(spec.contains(grid.points).astype(np.float64), grid, "indicator", spec)
    src = grid.geometry.act(h.inverse(), grid.points)
    idx, _ = grid.nearest(src)
    vals = sigma.samples[idx] * grid.inside(src)
    return Symbol(vals, grid, "translate")


def pointwise_max(sigma, rho):
    if sigma.grid is not rho.grid and not (
        sigma.grid.geometry == rho.grid.geometry and np.array_equal(sigma.grid.points, rho.grid.points)
    ):
        raise GeometryMismatch("symbols live on different grids")
    return Symbol(np.maximum(sigma.samples, rho.samples), sigma.grid, "max")


@dataclass
class SelectionCertificate:
    stages: list
    products: list
    products_in_ball: bool
    rejected: list

    def to_dict(self):
        return {"stages": self.stages, "products": self.products,
                "products_in_ball": self.products_in_ball, "rejected": self.rejected}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _subset_products(elems):
    """Every product h_{i_n} ... h_{i_1} over subsets, later elements on the left."""
    g = elems[0].geometry if elems else None
    out = []
    for r in range(len(elems) + 1):
        for idx in itertools.combinations(range(len(elems)), r):
            prod = g.identity() if g is not None else None
            for i in idx:
                prod = elems[i] * prod
            out.append((idx, prod))
    return out


def _products_within(elems, geometry, radius):
    e = np.asarray(geometry.origin, dtype=np.float64)
    for _, prod in _subset_products(elems):
        x = geometry.act(prod, np.asarray(geometry.origin))
        if geometry.distance(np.asarray(x, dtype=np.float64), e) > radius + 1e-12:
            return False
    return True


def sup_translates_select(sigma, F, grid, candidates, probes=None, K=6, enforce_ball=True, ball_radius=1.0):
    """Greedy running maximum of translates with a per-stage Berezin budget.

    At stage k the tail radius R_k is the smallest probe distance beyond
    which the current Berezin transform is at most 2^-k; the first unused
    candidate h (in list order, after the last accepted one) whose
    translate changes the transform by at most 3 * 2^-k on probes within
    R_k + 1 is accepted and rho <- max(rho, rho_h).

    With ``enforce_ball`` a candidate is skipped when some product of the
    selected elements would move the origin farther than ``ball_radius``;
    otherwise violations are only recorded.

    Returns ``(indices, rho, certificate)``.
    """
    from .berezin import berezin_transform

    if sigma.grid is not grid:
        raise GeometryMismatch("symbol is not sampled on this grid")
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    geom = grid.geometry
    if probes is None:
        probes = grid.points[::4]
    probes = geom.check_points(probes)
    origin = np.asarray(geom.origin, dtype=np.float64)
    pdist = geom.distance(probes.astype(np.float64), origin)

    rho = sigma
    chosen, elems, stages, rejected = [], [], [], []
    next_idx = 0
    for k in range(K):
        tilde = berezin_transform(rho, F, grid, probes).values
        tail = 2.0 ** -k
        over = pdist[tilde > tail]
        R = float(over.max()) if len(over) else 0.0
        near = pdist <= R + 1.0
        limit = 3.0 * 2.0 ** -k
        best = math.inf
        picked = None
        while next_idx < len(candidates):
            m = next_idx
            h = candidates[m]
            next_idx += 1
            if enforce_ball and not _products_within(elems + [h], geom, ball_radius):
                rejected.append({"k": k, "m": m, "reason": "product leaves ball"})
                continue
            moved = geom.act(h.inverse(), probes[near])
            shifted = berezin_transform(rho, F, grid, moved).values
            bound = float(np.max(np.abs(tilde[near] - shifted))) if near.any() else 0.0
            best = min(best, bound)
            if bound <= limit:
                picked = (m, h, bound)
                break
        if picked is None:
            raise StageFailure(f"no candidate met the stage-{k} bound {limit:g}", k, best)
        m, h, bound = picked
        chosen.append(m)
        elems.append(h)
        rho = pointwise_max(rho, translate_symbol(rho, h))
        stages.append({"k": k, "R_k": R, "m_k": m, "bound": bound})

    in_ball = _products_within(elems, geom, ball_radius)
    products = [{"subset": list(idx), "element": prod.to_list()} for idx, prod in _subset_products(elems)]
    rho = Symbol(rho.samples, grid, "sup-construction")
    return chosen, rho, SelectionCertificate(stages, products, in_ball, rejected)


def power_set_max(sigma, elems):
    """max over subsets I of sigma translated by the ordered product over I."""
    out = np.zeros_like(sigma.samples)
    for _, prod in _subset_products(list(elems)):
        out = np.maximum(out, translate_symbol(sigma, prod).samples)
    return out
