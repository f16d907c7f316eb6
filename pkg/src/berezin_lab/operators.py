"""Toeplitz operators T_sigma = sum_j sigma_j w_j k_j k_j^* and their spectra.

Matrices act on coordinate vectors (see :mod:`berezin_lab.frames`), so a
Toeplitz operator is an ordinary Hermitian matrix.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import GeometryMismatch, InvalidArgument, ResourceError
from .frames import BLOCK, HilbertVector, analysis, synthesis
from .phase_space import AFFINE
from .symbols import Symbol, translate_symbol

DENSE_CAP = 4096
MATRIX_MAGIC = b"BRZNMAT1"


def _check_aligned(sigma, grid):
    s = np.asarray(getattr(sigma, "samples", sigma), dtype=np.float64)
    if s.shape != (len(grid),):
        raise GeometryMismatch("symbol is not aligned with the grid")
    return s


def _check_cap(n, cap):
    if n > cap:
        raise ResourceError(f"dense operator of size {n} exceeds the cap {cap}; use apply_toeplitz")


class ToeplitzOperator:
    """Dense Toeplitz operator, materialized on first access to ``matrix``."""

    def __init__(self, sigma, F, grid, F_psi=None, cap=DENSE_CAP):
        self.samples = _check_aligned(sigma, grid)
        F._check_grid(grid)
        if F_psi is not None:
            F_psi._check_grid(grid)
            if F_psi.lattice != F.lattice:
                raise GeometryMismatch("mixed windows must share a lattice")
        _check_cap(F.n, cap)
        self.sigma = sigma
        self.F = F
        self.F_psi = F_psi
        self.grid = grid
        self.is_mixed = F_psi is not None and F_psi is not F

    @property
    def n(self):
        return self.F.n

    @cached_property
    def matrix(self):
        c = self.samples * self.grid.weights
        support = np.flatnonzero(c)
        T = np.zeros((self.n, self.n), dtype=np.complex128)
        for start in range(0, len(support), BLOCK):
            idx = support[start:start + BLOCK]
            pts = self.grid.points[idx]
            Kphi = self.F.vectors(pts)
            Kpsi = self.F_psi.vectors(pts) if self.is_mixed else Kphi
            T += (Kpsi.T * c[idx]) @ Kphi.conj()
        if not self.is_mixed:
            T = 0.5 * (T + T.conj().T)
        T.setflags(write=False)
        return T

    def apply(self, f):
        return self.matrix @ f

    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def hermitian_defect(self):
        T = self.matrix
        return float(np.linalg.norm(T - T.conj().T, 2))


def assemble_toeplitz(sigma, F, grid, cap=DENSE_CAP):
    return ToeplitzOperator(sigma, F, grid, cap=cap)


def assemble_mixed(sigma, F_phi, F_psi, grid, cap=DENSE_CAP):
    """T f = sum_j sigma_j w_j <f, phi_j> psi_j."""
    if F_phi.geometry != F_psi.geometry:
        raise GeometryMismatch("mixed windows must share a geometry")
    return ToeplitzOperator(sigma, F_phi, grid, F_psi=F_psi, cap=cap)


def apply_toeplitz(sigma, F, grid, f):
    """Matrix-free T_sigma f = synthesis(sigma * analysis(f))."""
    s = _check_aligned(sigma, grid)
    c = analysis(F, grid, f)
    out = synthesis(F, grid, c * s.reshape((-1,) + (1,) * (c.ndim - 1)), as_vector=False)
    return HilbertVector.from_coords(out, F.lattice) if isinstance(f, HilbertVector) else out


@dataclass
class SpectrumReport:
    """Descending eigenvalues (or singular values) with trace and norm."""

    eigenvalues: np.ndarray
    trace: float
    operator_norm: float
    full: bool
    kind: str = "eigenvalues"

    def eps_rank(self, eps):
        """Number of values above eps (a lower bound when not ``full``)."""
        return int(np.sum(self.eigenvalues > eps))

    def to_dict(self):
        return {"kind": self.kind, "eigenvalues": [float(v) for v in self.eigenvalues], "trace": self.trace,
                "operator_norm": self.operator_norm, "full": self.full}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue" if self.kind == "eigenvalues" else "singular_value"])
        for i, v in enumerate(self.eigenvalues):
            w.writerow([i, f"{v:.17g}"])
        return buf.getvalue()


def _top_k(op, n, k, seed, dtype):
    v0 = np.random.default_rng(seed).standard_normal(n).astype(dtype)
    vals = eigsh(op, k=k, which="LA", v0=v0, tol=1e-12, return_eigenvectors=False)
    return np.sort(vals)[::-1]


def spectrum(T, k=None, seed=0):
    """Eigenvalues of a Hermitian Toeplitz operator, descending.

    ``k=None`` computes the full spectrum densely; otherwise the top ``k``
    come from a restarted Lanczos iteration with a seeded start vector.
    """
    if getattr(T, "is_mixed", False):
        raise InvalidArgument("mixed operators are not Hermitian; use svd_report")
    M = T.matrix
    trace = float(np.trace(M).real)
    n = M.shape[0]
    if k is None or k >= n - 1:
        vals = scipy.linalg.eigvalsh(M)[::-1]
        return SpectrumReport(vals, trace, float(max(abs(vals[0]), abs(vals[-1]))), True)
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    vals = _top_k(M, n, k, seed, np.complex128)
    return SpectrumReport(vals, trace, float(vals[0]), False)


def top_eigenvalue_matrix_free(sigma, F, grid, seed=0, k=1):
    """Largest eigenvalues of T_sigma without materializing the matrix."""
    s = _check_aligned(sigma, grid)

    def mv(x):
        return apply_toeplitz(s, F, grid, x.reshape(-1))

    op = LinearOperator((F.n, F.n), matvec=mv, dtype=np.complex128)
    return _top_k(op, F.n, k, seed, np.complex128)


def svd_report(T):
    M = T.matrix if hasattr(T, "matrix") else np.asarray(T)
    s = scipy.linalg.svdvals(M)
    return SpectrumReport(s, float(np.trace(M).real), float(s[0]) if len(s) else 0.0, True, "singular_values")


def trace_identity_check(T, sigma, F, grid):
    """(tr T, sum_j sigma_j w_j ||k_j||^2)."""
    s = _check_aligned(sigma, grid)
    lhs = float(np.trace(T.matrix).real)
    rhs = 0.0
    for sl, K in F.blocks(grid):
        norms = np.sum(K.real ** 2 + K.imag ** 2, axis=1)
        rhs += float(np.dot(s[sl] * grid.weights[sl], norms))
    return lhs, rhs


def _shift_matrix(F, grid, h):
    """S_h = sum_j w_j k_{h x_j} k_j^* in coordinates."""
    S = np.zeros((F.n, F.n), dtype=np.complex128)
    for sl, K in F.blocks(grid):
        Kh = F.vectors(grid.geometry.act(h, grid.points[sl]))
        S += (Kh.T * grid.weights[sl]) @ K.conj()
    return S


def shift_apply(F, grid, h, f, warn_fraction=0.1):
    """S_h f = sum_j w_j <f, k_j> k_{h x_j}.

    The shifted frame vectors are evaluated at h x_j directly. A warning is
    attached when more than ``warn_fraction`` of the coefficient mass sits
    at points that h moves outside the grid's extent.
    """
    if h.geometry != grid.geometry:
        raise GeometryMismatch("group element belongs to another geometry")
    coeffs = analysis(F, grid, f)
    moved = grid.geometry.act(h, grid.points)
    out = np.zeros(F.n, dtype=np.complex128)
    for start in range(0, len(grid), BLOCK):
        sl = slice(start, min(start + BLOCK, len(grid)))
        out += F.vectors(moved[sl]).T @ (coeffs[sl] * grid.weights[sl])
    vec = HilbertVector.from_coords(out, F.lattice)
    mass = np.abs(coeffs) ** 2 * grid.weights
    total = float(mass.sum())
    outside = float(mass[~grid.inside(moved)].sum())
    if total > 0 and outside > warn_fraction * total:
        vec.warnings.append(f"truncation: {outside / total:.1%} of the coefficient mass leaves the grid extent")
    return vec


def in_invariant_subgroup(h, tol=1e-12):
    """Membership in the time-shift subgroup of G_tau."""
    if h.geometry.kind == AFFINE:
        return abs(h.coords[0] - 1.0) <= tol
    return h.coords[0] == 0 if h.geometry.is_finite else abs(h.coords[0]) <= tol


def conjugation_residual(sigma, F, grid, h, cap=DENSE_CAP, interior=None):
    """||S_h T_sigma S_h^* - T_{sigma_h}|| in operator norm.

    On a real lattice a translation is not unitary near the lattice ends;
    ``interior`` compresses the difference to samples with |x| <= interior
    so that only the discretization error is measured.
    """
    if not in_invariant_subgroup(h):
        raise InvalidArgument("conjugation identity needs h in the invariant subgroup (pure time shifts)")
    _check_cap(F.n, cap)
    T = assemble_toeplitz(sigma, F, grid, cap).matrix
    if not isinstance(sigma, Symbol):
        sigma = Symbol(_check_aligned(sigma, grid), grid)
    Th = assemble_toeplitz(translate_symbol(sigma, h), F, grid, cap).matrix
    S = _shift_matrix(F, grid, h)
    D = S @ T @ S.conj().T - Th
    if interior is not None:
        if F.lattice.periodic:
            raise InvalidArgument("interior compression needs a real lattice")
        keep = np.abs(F.lattice.x) <= interior
        if not keep.any():
            raise InvalidArgument(f"no lattice samples within |x| <= {interior}")
        D = D[np.ix_(keep, keep)]
    return float(np.linalg.norm(D, 2))


def _lambda_min(M):
    return float(scipy.linalg.eigvalsh(0.5 * (M + M.conj().T), subset_by_index=[0, 0])[0])


def ordering_residual(sigma, rho, F, grid):
    """max(0, -lambda_min(T_max - T_sigma), -lambda_min(T_max - T_rho))."""
    Ts = assemble_toeplitz(sigma, F, grid).matrix
    Tr = assemble_toeplitz(rho, F, grid).matrix
    Tm = assemble_toeplitz(np.maximum(_check_aligned(sigma, grid), _check_aligned(rho, grid)), F, grid).matrix
    return max(0.0, -_lambda_min(Tm - Ts), -_lambda_min(Tm - Tr))


def subadditivity_residual(sigma, rho, F, grid):
    """max(0, -lambda_min(T_sigma + T_rho - T_max))."""
    Ts = assemble_toeplitz(sigma, F, grid).matrix
    Tr = assemble_toeplitz(rho, F, grid).matrix
    Tm = assemble_toeplitz(np.maximum(_check_aligned(sigma, grid), _check_aligned(rho, grid)), F, grid).matrix
    return max(0.0, -_lambda_min(Ts + Tr - Tm))


def export_matrix(T, path):
    """Write 8-byte magic, little-endian uint64 n, then row-major complex128."""
    M = np.ascontiguousarray(T.matrix if hasattr(T, "matrix") else T, dtype="<c16")
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgument("only square matrices can be exported")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC + struct.pack("<Q", M.shape[0]))
        fh.write(M.tobytes())


def import_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MATRIX_MAGIC:
            raise InvalidArgument(f"{path} is not a matrix export")
        (n,) = struct.unpack("<Q", head[8:])
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != n * n:
        raise InvalidArgument(f"{path}: expected {n * n} entries, found {data.size}")
    return data.reshape(n, n).astype(np.complex128)


def frame_operator_matrix(F, grid, cap=DENSE_CAP):
    """S = sum_j w_j k_j k_j^*, i.e. T_1."""
    return assemble_toeplitz(np.ones(len(grid)), F, grid, cap).matrix
