"""Continuous Parseval frames k_x for the three geometries.

Vectors of the Hilbert space are sampled on a :class:`Lattice`. Internally
every frame vector is handled through its *coordinates* ``sqrt(step) * f``
so that the plain dot product is the L2 inner product; operators built
from coordinates are therefore ordinary Hermitian matrices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GeometryMismatch, InvalidArgument
from .phase_space import AFFINE, FINITE, PLANE, Geometry, finite_gabor_grid

BLOCK = 2048


@dataclass(frozen=True)
class Lattice:
    """Signal sample lattice: Z_N (``periodic``) or centred samples on [-L, L]."""

    n: int
    step: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        if self.n < 1 or not self.step > 0:
            raise InvalidArgument("lattice needs n >= 1 and a positive step")
        if self.periodic and self.step != 1.0:
            raise InvalidArgument("periodic lattices have unit step")

    @classmethod
    def finite(cls, N):
        return cls(int(N), 1.0, True)

    @classmethod
    def real(cls, half_width=16.0, step=1.0 / 32):
        if not half_width > 0 or not step > 0:
            raise InvalidArgument("half_width and step must be positive")
        return cls(2 * int(math.floor(half_width / step + 1e-9)) + 1, float(step))

    @property
    def x(self):
        if self.periodic:
            return np.arange(self.n, dtype=np.float64)
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.step

    @property
    def half_width(self):
        return 0.0 if self.periodic else (self.n - 1) / 2.0 * self.step

    def to_dict(self):
        return {"n": self.n, "step": self.step, "periodic": self.periodic}


def matched_plane_lattice(grid, margin=2.0):
    """Lattice on which the truncated plane Gabor system is nearly Parseval.

    The step makes the grid's frequency axis one full period of the
    discrete Fourier transform, so summing over frequencies reproduces a
    Kronecker delta; ``margin`` keeps the signal support away from the
    time edges of the grid (2 suits the unit Gaussian).
    """
    if grid.geometry.kind != PLANE:
        raise GeometryMismatch("matched_plane_lattice needs a plane grid")
    n_w = grid.shape[0]
    step = 1.0 / (n_w * grid.extent["dw"])
    half = grid.extent["t_half"] - margin
    if not half > 0:
        raise InvalidArgument(f"margin {margin} leaves no room inside t_half={grid.extent['t_half']}")
    return Lattice.real(half, step)


class HilbertVector:
    """Samples of a vector on a lattice, optionally backed by an analytic profile.

    ``profile`` lets frames evaluate the vector off the lattice exactly;
    without it evaluation interpolates linearly and is zero outside the
    lattice.
    """

    def __init__(self, values, lattice, profile=None, gain=1.0, name=None):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (lattice.n,):
            raise InvalidArgument(f"expected {lattice.n} samples, got {values.shape}")
        values.setflags(write=False)
        self.values = values
        self.lattice = lattice
        self.profile = profile
        self.gain = complex(gain)
        self.name = name
        self.warnings = []

    @property
    def step(self):
        return self.lattice.step

    @property
    def coords(self):
        return np.sqrt(self.step) * self.values

    @classmethod
    def from_coords(cls, coords, lattice, name=None):
        return cls(np.asarray(coords) / np.sqrt(lattice.step), lattice, name=name)

    def norm(self):
        return float(np.linalg.norm(self.coords))

    def inner(self, other):
        """<self, other>, linear in the first slot."""
        _check_lattice(self.lattice, other.lattice)
        return complex(np.vdot(other.coords, self.coords))

    def scaled(self, c):
        return HilbertVector(self.values * c, self.lattice, self.profile, self.gain * c, self.name)

    def __add__(self, other):
        _check_lattice(self.lattice, other.lattice)
        return HilbertVector(self.values + other.values, self.lattice)

    def __sub__(self, other):
        _check_lattice(self.lattice, other.lattice)
        return HilbertVector(self.values - other.values, self.lattice)

    def evaluate(self, x):
        """Evaluate at arbitrary real positions (real lattices only)."""
        if self.lattice.periodic:
            raise InvalidArgument("off-lattice evaluation is undefined on Z_N")
        x = np.asarray(x, dtype=np.float64)
        if self.profile is not None:
            return self.gain * np.asarray(self.profile(x), dtype=np.complex128)
        grid = self.lattice.x
        re = np.interp(x, grid, self.values.real, left=0.0, right=0.0)
        im = np.interp(x, grid, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def support(self, tol=0.0):
        """Smallest lattice interval outside of which the samples vanish."""
        nz = np.flatnonzero(np.abs(self.values) > tol)
        if len(nz) == 0:
            return (0.0, 0.0)
        x = self.lattice.x
        return (float(x[nz[0]]), float(x[nz[-1]]))


def _check_lattice(a, b):
    if a != b:
        raise GeometryMismatch("vectors live on different lattices")


# -- built-in windows ----------------------------------------------------------

def _gaussian(x):
    return 2.0 ** 0.25 * np.exp(-np.pi * x * x)


def _box(x):
    return ((x >= 0.0) & (x < 1.0)).astype(np.float64)


def _haar(x):
    return np.where((x >= 0.0) & (x < 0.5), 1.0, 0.0) - np.where((x >= 0.5) & (x < 1.0), 1.0, 0.0)


def _mexican_hat(x):
    # second derivative of exp(-pi x^2), up to sign
    return (1.0 - 2.0 * np.pi * x * x) * np.exp(-np.pi * x * x)


WINDOWS = {
    "box": (_box, "indicator of [0, 1)"),
    "dirac": (None, "unit impulse at the origin"),
    "gaussian": (_gaussian, "2^(1/4) exp(-pi x^2), unit L2 norm"),
    "haar": (_haar, "Haar wavelet: +1 on [0, 1/2), -1 on [1/2, 1)"),
    "mexican_hat": (_mexican_hat, "(1 - 2 pi x^2) exp(-pi x^2), mean zero"),
}


def window(name, lattice):
    """Sample a built-in window on ``lattice`` (not normalized).

    On Z_N the profile is read at the centred positions ``k / sqrt(N)``.
    """
    if name not in WINDOWS:
        raise InvalidArgument(f"unknown window {name!r}; choose from {sorted(WINDOWS)}")
    profile = WINDOWS[name][0]
    if name == "dirac":
        vals = np.zeros(lattice.n)
        vals[0 if lattice.periodic else lattice.n // 2] = 1.0 / math.sqrt(lattice.step)
        return HilbertVector(vals, lattice, name=name)
    if lattice.periodic:
        k = np.arange(lattice.n)
        k = np.where(k < (lattice.n + 1) // 2, k, k - lattice.n)
        return HilbertVector(profile(k / math.sqrt(lattice.n)), lattice, name=name)
    return HilbertVector(profile(lattice.x), lattice, profile=profile, name=name)


def load_window_csv(path, lattice):
    """Read one complex sample per row, formatted ``re,im``."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) != 2:
                raise InvalidArgument(f"{path}: each row must be 're,im', got {row}")
            rows.append(complex(float(row[0]), float(row[1])))
    return HilbertVector(np.array(rows), lattice, name=str(path))


# -- frame families -------------------------------------------------------------

class FrameFamily:
    """The map x -> k_x for one geometry and one window."""

    def __init__(self, geometry, window, companion_grid=None, normalize=True):
        if window.norm() == 0.0:
            raise InvalidArgument("window must be nonzero")
        self.geometry = geometry
        self.pre_norm = window.norm()
        self.window = window.scaled(1.0 / self.pre_norm) if normalize else window
        self.lattice = window.lattice
        self.companion_grid = companion_grid

    @property
    def n(self):
        return self.lattice.n

    def vectors(self, points):
        """Coordinate rows ``sqrt(step) * k_x`` for an ``(m, 2)`` array of points."""
        pts = self.geometry.check_points(points)
        x = self.lattice.x
        if self.geometry.kind == FINITE:
            N = self.lattice.n
            p, q = pts[:, :1], pts[:, 1:]
            xi = np.arange(N)[None, :]
            shifted = np.mod(xi - q, N)
            phase = np.exp(2j * np.pi * np.mod(p * shifted, N) / N)
            return phase * self.window.values[shifted]
        root = math.sqrt(self.lattice.step)
        if self.geometry.kind == PLANE:
            w, t = pts[:, :1], pts[:, 1:]
            u = x[None, :] - t
            return root * np.exp(2j * np.pi * w * u) * self.window.evaluate(u)
        a, b = pts[:, :1], pts[:, 1:]
        return (root / np.sqrt(a)) * self.window.evaluate(x[None, :] / a - b)

    def vector(self, point):
        return HilbertVector.from_coords(self.vectors(np.asarray(point)[None, :])[0], self.lattice)

    def blocks(self, grid, size=BLOCK):
        """Yield ``(slice, coordinate rows)`` over the grid in fixed order."""
        self._check_grid(grid)
        for start in range(0, len(grid), size):
            sl = slice(start, min(start + size, len(grid)))
            yield sl, self.vectors(grid.points[sl])

    def _check_grid(self, grid):
        if grid.geometry != self.geometry:
            raise GeometryMismatch("grid and frame use different geometries")

    def invariant_subgroup(self, rng, size=1, scale=1.0):
        """Random elements of the time-shift subgroup Gamma of G_tau.

        Finite: (0, q, 1); plane: (0, q, 1) with q a multiple of the grid's
        time step; affine: (1, b) with b a multiple of the grid's b-step.
        """
        g = self.geometry
        grid = self.companion_grid
        if g.kind == FINITE:
            qs = rng.integers(0, g.N, size)
            return [g.element(0, int(q)) for q in qs]
        if g.kind == PLANE:
            step = grid.extent["dt"] if grid is not None else self.lattice.step
            ks = rng.integers(-4, 5, size) * scale
            return [g.element(0.0, float(k * step)) for k in ks]
        step = 2 * grid.extent["b_half"] / grid.extent["n_shifts"] if grid is not None else 0.25
        ks = rng.integers(-4, 5, size) * scale
        return [g.element(1.0, float(k * step)) for k in ks]

    @cached_property
    def normalization_report(self):
        """Parseval residual on the companion grid (None without one)."""
        if self.companion_grid is None:
            return None
        return {
            "pre_normalization_norm": self.pre_norm,
            "parseval_residual": frame_operator_residual(self, self.companion_grid, trials=3, seed=0),
        }


def make_finite_gabor(phi, normalize=True):
    if not phi.lattice.periodic:
        raise InvalidArgument("finite Gabor windows live on Z_N")
    geom = Geometry.finite_gabor(phi.lattice.n)
    return FrameFamily(geom, phi, finite_gabor_grid(geom.N), normalize=normalize)


def make_plane_gabor(phi, grid, normalize=True):
    """Modulated translates e^{2 pi i w (x - t)} phi(x - t)."""
    if grid.geometry.kind != PLANE:
        raise GeometryMismatch("make_plane_gabor needs a plane grid")
    if phi.lattice.periodic:
        raise InvalidArgument("plane windows need a real lattice")
    # the lattice must resolve every grid frequency without aliasing
    n_w = grid.shape[0]
    if 1.0 / phi.lattice.step < n_w * grid.extent["dw"] * (1 - 1e-9):
        raise InvalidArgument(
            f"lattice step {phi.lattice.step} aliases grid frequencies up to {grid.extent['w_half']}; "
            f"need step <= {1.0 / (n_w * grid.extent['dw'])}")
    return FrameFamily(grid.geometry, phi, grid, normalize=normalize)


def make_affine_wavelet(psi, grid, normalize=False):
    """Dilated translates a^{-1/2} psi(x/a - b).

    Not renormalized by default: admissible scaling (see
    :func:`berezin_lab.berezin.normalize_admissible`) fixes the norm.
    """
    if grid.geometry.kind != AFFINE:
        raise GeometryMismatch("make_affine_wavelet needs an affine grid")
    if psi.lattice.periodic:
        raise InvalidArgument("wavelets need a real lattice")
    return FrameFamily(grid.geometry, psi, grid, normalize=normalize)


# -- transforms -------------------------------------------------------------------

def _as_coords(F, f):
    if isinstance(f, HilbertVector):
        _check_lattice(F.lattice, f.lattice)
        return f.coords
    f = np.asarray(f, dtype=np.complex128)
    if f.shape[0] != F.n:
        raise InvalidArgument(f"vector length {f.shape[0]} does not match lattice size {F.n}")
    return f


def analysis(F, grid, f):
    """Coefficients <f, k_x> at every grid point, in grid order.

    ``f`` may be a HilbertVector or coordinate array(s) of shape (n,) or (n, r).
    """
    c = _as_coords(F, f)
    out = np.empty((len(grid),) + c.shape[1:], dtype=np.complex128)
    for sl, K in F.blocks(grid):
        out[sl] = K.conj() @ c
    return out


def synthesis(F, grid, coeffs, as_vector=True):
    """Sum over grid points of coeffs_j * w_j * k_j."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.shape[0] != len(grid):
        raise InvalidArgument(f"expected {len(grid)} coefficients, got {coeffs.shape[0]}")
    weighted = coeffs * grid.weights.reshape((-1,) + (1,) * (coeffs.ndim - 1))
    out = np.zeros((F.n,) + coeffs.shape[1:], dtype=np.complex128)
    for sl, K in F.blocks(grid):
        out += K.T @ weighted[sl]
    if as_vector and out.ndim == 1:
        return HilbertVector.from_coords(out, F.lattice)
    return out


def random_unit_coords(n, trials, rng):
    """Complex Gaussian columns normalized to unit length."""
    z = rng.standard_normal((n, trials)) + 1j * rng.standard_normal((n, trials))
    return z / np.linalg.norm(z, axis=0)


def frame_operator_residual(F, grid, trials=8, seed=0, vectors=None):
    """max ||S f - f|| over random unit f, S the truncated frame operator."""
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    if vectors is None:
        vectors = random_unit_coords(F.n, trials, np.random.default_rng(seed))
    else:
        vectors = np.column_stack([_as_coords(F, v) for v in vectors])
        vectors = vectors / np.linalg.norm(vectors, axis=0)
    recon = synthesis(F, grid, analysis(F, grid, vectors), as_vector=False)
    return float(np.max(np.linalg.norm(recon - vectors, axis=0)))


def kernel_gram(F, x, y):
    """<k_x, k_y>."""
    K = F.vectors(np.array([x, y], dtype=np.float64))
    return complex(np.vdot(K[1], K[0]))
