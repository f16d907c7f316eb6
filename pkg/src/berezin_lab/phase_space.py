"""Phase-space geometries: quadrature grids, invariant metrics and group actions.

Three geometries are supported:

``finite_gabor``
    Z_N x Z_N with points ``(p, q)`` (frequency, time), counting measure
    scaled by 1/N and the l1 torus metric.
``plane``
    The time-frequency plane with points ``(w, t)``, Lebesgue measure and
    the Euclidean metric.
``affine``
    The half plane of the affine group with points ``(a, b)``, ``a > 0``,
    Haar measure ``da db / a`` and the hyperbolic metric pulled back through
    the chart ``z = a*b + i*a``.

Points are stored as rows of an ``(m, 2)`` array; a single point is any
length-2 sequence.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatch, InvalidArgument

FINITE = "finite_gabor"
PLANE = "plane"
AFFINE = "affine"
KINDS = (FINITE, PLANE, AFFINE)


@dataclass(frozen=True)
class Geometry:
    kind: str
    N: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown geometry kind {self.kind!r}")
        if self.kind == FINITE:
            if self.N is None or int(self.N) != self.N or self.N < 2:
                raise InvalidArgument(f"finite_gabor requires an integer N >= 2, got {self.N!r}")
            object.__setattr__(self, "N", int(self.N))
        elif self.N is not None:
            raise InvalidArgument(f"{self.kind} geometry takes no N")

    @classmethod
    def finite_gabor(cls, N):
        return cls(FINITE, N)

    @classmethod
    def plane(cls):
        return cls(PLANE)

    @classmethod
    def affine(cls):
        return cls(AFFINE)

    @property
    def is_finite(self):
        return self.kind == FINITE

    @property
    def origin(self):
        return (1.0, 0.0) if self.kind == AFFINE else (0, 0) if self.kind == FINITE else (0.0, 0.0)

    def check_points(self, points):
        """Return ``points`` as an ``(m, 2)`` array, validating membership."""
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidArgument(f"points must have shape (m, 2), got {pts.shape}")
        if self.kind == FINITE:
            if not np.all(np.equal(np.mod(pts, 1), 0)):
                raise GeometryMismatch("finite_gabor points must be integers")
            pts = pts.astype(np.int64)
            if np.any(pts < 0) or np.any(pts >= self.N):
                raise GeometryMismatch(f"finite_gabor points must lie in [0, {self.N})")
            return pts
        pts = pts.astype(np.float64)
        if self.kind == AFFINE and np.any(pts[:, 0] <= 0):
            raise GeometryMismatch("affine points need a > 0")
        return pts

    def distance(self, x, y):
        """Invariant distance between (arrays of) points; broadcasts over rows."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape[-1] != 2 or y.shape[-1] != 2:
            raise InvalidArgument("points must have a trailing dimension of 2")
        if self.kind == FINITE:
            d = np.mod(np.abs(x - y), self.N)
            return np.minimum(d, self.N - d).sum(axis=-1)
        if self.kind == PLANE:
            return np.hypot(x[..., 0] - y[..., 0], x[..., 1] - y[..., 1])
        a1, b1 = x[..., 0], x[..., 1]
        a2, b2 = y[..., 0], y[..., 1]
        if np.any(a1 <= 0) or np.any(a2 <= 0):
            raise GeometryMismatch("affine points need a > 0")
        # sinh(d/2) = |z - z'| / (2 sqrt(Im z Im z')), z = a b + i a
        chord = np.hypot(a1 * b1 - a2 * b2, a1 - a2)
        return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(a1 * a2)))

    def identity(self):
        if self.kind == AFFINE:
            return GroupElement(self, (1.0, 0.0))
        return GroupElement(self, (0, 0, 1.0 + 0j) if self.is_finite else (0.0, 0.0, 1.0 + 0j))

    def element(self, *coords):
        """Build a group element; Heisenberg phases default to 1."""
        if self.kind != AFFINE and len(coords) == 2:
            coords = (*coords, 1.0 + 0j)
        return GroupElement(self, tuple(coords))

    def character(self, p, q):
        """The pairing p(q) between frequency and time."""
        scale = self.N if self.is_finite else 1.0
        return cmath.exp(2j * math.pi * p * q / scale)

    def act(self, h, points):
        """Left action of ``h`` on an array of points."""
        if h.geometry != self:
            raise GeometryMismatch("group element belongs to another geometry")
        pts = np.asarray(points)
        single = pts.ndim == 1
        pts = self.check_points(pts)
        if self.kind == AFFINE:
            a1, b1 = h.coords
            out = np.column_stack([a1 * pts[:, 0], b1 / pts[:, 0] + pts[:, 1]])
        else:
            p, q = h.coords[0], h.coords[1]
            out = pts + np.array([p, q], dtype=pts.dtype)
            if self.is_finite:
                out = np.mod(out, self.N)
        return out[0] if single else out


@dataclass(frozen=True)
class GroupElement:
    """Element of the Heisenberg group (p, q, z) or the affine group (a, b)."""

    geometry: Geometry
    coords: tuple

    def __post_init__(self):
        g = self.geometry
        if g.kind == AFFINE:
            if len(self.coords) != 2 or not self.coords[0] > 0:
                raise InvalidArgument(f"affine element needs (a, b) with a > 0, got {self.coords}")
            object.__setattr__(self, "coords", (float(self.coords[0]), float(self.coords[1])))
            return
        if len(self.coords) != 3:
            raise InvalidArgument(f"Heisenberg element needs (p, q, z), got {self.coords}")
        p, q, z = self.coords
        z = complex(z)
        if abs(abs(z) - 1.0) > 1e-9:
            raise InvalidArgument("Heisenberg phase z must have modulus 1")
        if g.is_finite:
            if int(p) != p or int(q) != q:
                raise InvalidArgument("finite Heisenberg p, q must be integers")
            p, q = int(p) % g.N, int(q) % g.N
        else:
            p, q = float(p), float(q)
        object.__setattr__(self, "coords", (p, q, z / abs(z)))

    def __mul__(self, other):
        if other.geometry != self.geometry:
            raise GeometryMismatch("cannot compose elements of different groups")
        g = self.geometry
        if g.kind == AFFINE:
            a1, b1 = self.coords
            a2, b2 = other.coords
            return GroupElement(g, (a1 * a2, b1 / a2 + b2))
        # (p', q', z')(p, q, z) = (p + p', q + q', z z' p(q'))
        p1, q1, z1 = self.coords
        p2, q2, z2 = other.coords
        return GroupElement(g, (p1 + p2, q1 + q2, z1 * z2 * g.character(p2, q1)))

    def inverse(self):
        g = self.geometry
        if g.kind == AFFINE:
            a, b = self.coords
            return GroupElement(g, (1.0 / a, -a * b))
        p, q, z = self.coords
        return GroupElement(g, (-p, -q, z.conjugate() * g.character(p, q)))

    def is_identity(self, tol=0.0):
        ident = self.geometry.identity().coords
        return all(abs(complex(u) - complex(v)) <= tol for u, v in zip(self.coords, ident))

    def to_list(self):
        out = []
        for c in self.coords:
            if isinstance(c, complex):
                out.extend([c.real, c.imag])
            else:
                out.append(c)
        return out


def _centered(half, step):
    if step <= 0 or half <= 0:
        raise InvalidArgument("grid half-widths and steps must be positive")
    if step > half:
        raise InvalidArgument(f"step {step} exceeds half-width {half}")
    n = int(math.floor(2.0 * half / step + 1e-9)) + 1
    return (np.arange(n) - (n - 1) / 2.0) * step


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Discretization of phase space: points in row-major order plus weights.

    ``axes`` holds the two coordinate axes; point ``i * len(axes[1]) + j``
    is ``(axes[0][i], axes[1][j])``.
    """

    geometry: Geometry
    axes: tuple
    weights: np.ndarray
    extent: dict
    points: np.ndarray = field(init=False)

    def __post_init__(self):
        u, v = self.axes
        pts = np.stack(np.meshgrid(u, v, indexing="ij"), axis=-1).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 0:
            w = np.full(len(pts), float(w))
        if w.shape != (len(pts),) or np.any(w <= 0):
            raise InvalidArgument("grid weights must be positive, one per point")
        w.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.points)

    @property
    def shape(self):
        return (len(self.axes[0]), len(self.axes[1]))

    @property
    def origin(self):
        return self.geometry.origin

    @property
    def total_weight(self):
        return float(np.sum(self.weights))

    def distances_from(self, center):
        return self.geometry.distance(self.points, np.asarray(center, dtype=np.float64))

    def to_spec(self):
        return {"geometry": self.geometry.kind, **self.extent}

    def nearest(self, points):
        """Nearest grid index of each point and the snapping distance.

        Ties round toward the smaller coordinate. Points off the grid's
        extent snap to the boundary; callers read the distance.
        """
        pts = self.geometry.check_points(points)
        g = self.geometry
        if g.is_finite:
            idx = pts[:, 0] * g.N + pts[:, 1]
            return idx, np.zeros(len(pts))
        u, v = self.axes
        if g.kind == AFFINE:
            lu = np.log(u)
            i = _nearest_axis(lu, np.log(pts[:, 0]))
        else:
            i = _nearest_axis(u, pts[:, 0])
        j = _nearest_axis(v, pts[:, 1])
        idx = i * len(v) + j
        return idx, g.distance(self.points[idx], pts)

    def inside(self, points, tol=1e-9):
        """Mask of points inside the grid's rectangular extent."""
        pts = self.geometry.check_points(points)
        if self.geometry.is_finite:
            return np.ones(len(pts), dtype=bool)
        if self.geometry.kind == AFFINE:
            e = self.extent
            la = np.log(pts[:, 0])
            return ((la >= math.log(e["a_min"]) - tol) & (la <= math.log(e["a_max"]) + tol)
                    & (np.abs(pts[:, 1]) <= e["b_half"] + tol))
        u, v = self.axes
        return ((pts[:, 0] >= u[0] - tol) & (pts[:, 0] <= u[-1] + tol)
                & (pts[:, 1] >= v[0] - tol) & (pts[:, 1] <= v[-1] + tol))

    def interior(self, margin):
        """Indices of grid points at least ``margin`` away from the boundary.

        The margin is measured along each axis (in log a for the affine
        scale axis). On the finite geometry every point is interior.
        """
        if self.geometry.is_finite or margin <= 0:
            return np.arange(len(self))
        u, v = self.axes
        if self.geometry.kind == AFFINE:
            lu = np.log(self.points[:, 0])
            ok = (lu >= np.log(u[0]) + margin) & (lu <= np.log(u[-1]) - margin)
        else:
            ok = (self.points[:, 0] >= u[0] + margin) & (self.points[:, 0] <= u[-1] - margin)
        ok &= (self.points[:, 1] >= v[0] + margin) & (self.points[:, 1] <= v[-1] - margin)
        return np.flatnonzero(ok)


def _nearest_axis(axis, values):
    if len(axis) == 1:
        return np.zeros(len(values), dtype=np.int64)
    step = (axis[-1] - axis[0]) / (len(axis) - 1)
    pos = (values - axis[0]) / step
    # round half toward the smaller index
    i = np.ceil(pos - 0.5).astype(np.int64)
    return np.clip(i, 0, len(axis) - 1)


def finite_gabor_grid(N):
    geom = Geometry.finite_gabor(N)
    ax = np.arange(geom.N)
    return QuadGrid(geom, (ax, ax), 1.0 / geom.N, {"N": geom.N})


def plane_grid(t_half, w_half, dt, dw):
    """Regular grid on [-w_half, w_half] x [-t_half, t_half] including endpoints."""
    for name, val in (("t_half", t_half), ("w_half", w_half), ("dt", dt), ("dw", dw)):
        if not val > 0:
            raise InvalidArgument(f"{name} must be positive, got {val}")
    w = _centered(w_half, dw)
    t = _centered(t_half, dt)
    extent = {"t_half": float(t_half), "w_half": float(w_half), "dt": float(dt), "dw": float(dw)}
    return QuadGrid(Geometry.plane(), (w, t), dt * dw, extent)


def affine_grid(a_min, a_max, n_scales, b_half, n_shifts):
    """Cell-centred grid, log-uniform in a and uniform in b.

    Each cell has Haar measure ``dlog(a) * db`` so the total weight is
    ``log(a_max / a_min) * 2 * b_half``.
    """
    if not a_min > 0:
        raise InvalidArgument(f"a_min must be positive, got {a_min}")
    if not a_max > a_min:
        raise InvalidArgument("need a_min < a_max")
    if int(n_scales) != n_scales or int(n_shifts) != n_shifts or n_scales < 1 or n_shifts < 1:
        raise InvalidArgument("n_scales and n_shifts must be integers >= 1")
    if not b_half > 0:
        raise InvalidArgument(f"b_half must be positive, got {b_half}")
    n_scales, n_shifts = int(n_scales), int(n_shifts)
    dlog = math.log(a_max / a_min) / n_scales
    db = 2.0 * b_half / n_shifts
    a = a_min * np.exp((np.arange(n_scales) + 0.5) * dlog)
    b = -b_half + (np.arange(n_shifts) + 0.5) * db
    extent = {"a_min": float(a_min), "a_max": float(a_max), "n_scales": n_scales,
              "b_half": float(b_half), "n_shifts": n_shifts}
    return QuadGrid(Geometry.affine(), (a, b), dlog * db, extent)


def grid_from_spec(spec):
    """Inverse of :meth:`QuadGrid.to_spec`."""
    spec = dict(spec)
    kind = spec.pop("geometry", None)
    try:
        if kind == FINITE:
            return finite_gabor_grid(**spec)
        if kind == PLANE:
            return plane_grid(**spec)
        if kind == AFFINE:
            return affine_grid(**spec)
    except TypeError as exc:
        raise InvalidArgument(f"bad grid parameters for {kind}: {exc}") from None
    raise InvalidArgument(f"unknown geometry {kind!r}")


def ball_integral(sigma, grid, center, R):
    """Sum of sigma * weight over grid points with d(x, center) <= R."""
    if not R > 0:
        raise InvalidArgument("R must be positive")
    samples = np.asarray(getattr(sigma, "samples", sigma), dtype=np.float64)
    if samples.shape != (len(grid),):
        raise GeometryMismatch("symbol is not aligned with the grid")
    center = grid.geometry.check_points(center)[0]
    mask = grid.distances_from(center) <= R
    return float(np.sum(samples[mask] * grid.weights[mask]))
