"""Experiments: uncertainty constants, compactness proxies, translate Grams."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .berezin import DecayReport
from .errors import InvalidArgument, ResourceError
from .frames import HilbertVector, _as_coords, analysis, make_plane_gabor, matched_plane_lattice, random_unit_coords, window
from .operators import assemble_toeplitz, frame_operator_matrix, in_invariant_subgroup, shift_apply, spectrum
from .phase_space import PLANE, plane_grid
from .symbols import SetSpec, indicator

PARSEVAL_TOL = 1e-8


@dataclass
class UncertaintyResult:
    """c = lambda_min(S) - lambda_max(T_sigma), with S the frame operator."""

    c_estimate: float
    top_sigma_eigenvalue: float
    frame_lower_bound: float
    verification: float
    trials: int
    seed: int
    caveats: list = field(default_factory=list)
    witness_quotients: list = field(default_factory=list)
    l1_norm: float | None = None
    lambda_bound: float | None = None

    def to_dict(self):
        return {
            "c_estimate": self.c_estimate,
            "top_sigma_eigenvalue": self.top_sigma_eigenvalue,
            "frame_lower_bound": self.frame_lower_bound,
            "verification": self.verification,
            "trials": self.trials,
            "seed": self.seed,
            "caveats": list(self.caveats),
            "witness_quotients": list(self.witness_quotients),
            "l1_norm": self.l1_norm,
            "lambda_bound": self.lambda_bound,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _rayleigh(M, V):
    """Rayleigh quotients of the columns of V."""
    num = np.einsum("ij,ij->j", V.conj(), M @ V).real
    return num / np.einsum("ij,ij->j", V.conj(), V).real


def uncertainty_constant(sigma, F, grid, trials=100, seed=0, witnesses=None, parseval_tol=PARSEVAL_TOL):
    """Lower bound c with <T_{1 - sigma} f, f> >= c ||f||^2.

    On the finite geometry the frame operator is the identity and
    c = 1 - lambda_max(T_sigma). On truncated grids c is corrected by the
    measured lower frame bound and the result carries a
    ``frame-approximation`` caveat when the frame operator is off the
    identity by more than ``parseval_tol``.
    """
    s = np.asarray(getattr(sigma, "samples", sigma), dtype=np.float64)
    if np.any(s < 0) or np.any(s > 1 + 1e-12):
        raise InvalidArgument("uncertainty constant needs 0 <= sigma <= 1")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    T = assemble_toeplitz(s, F, grid).matrix
    caveats = []
    if grid.geometry.is_finite:
        S = np.eye(F.n, dtype=np.complex128)
        lower = 1.0
    else:
        S = frame_operator_matrix(F, grid)
        ev = scipy.linalg.eigvalsh(S)
        lower = float(ev[0])
        if max(abs(ev[0] - 1.0), abs(ev[-1] - 1.0)) > parseval_tol:
            caveats.append("frame-approximation")
    if np.any(s):
        lam = float(scipy.linalg.eigvalsh(T, subset_by_index=[F.n - 1, F.n - 1])[0])
    else:
        lam = 0.0
    D = S - T
    V = random_unit_coords(F.n, trials, np.random.default_rng(seed))
    q = _rayleigh(D, V)
    wq = []
    if witnesses:
        W = np.column_stack([_as_coords(F, w) for w in witnesses])
        wq = [float(v) for v in _rayleigh(D, W)]
    verification = float(min(q.min(), min(wq) if wq else math.inf))
    return UncertaintyResult(lower - lam, lam, lower, verification, trials, seed, caveats, wq)


def l1_symbol_bound(sigma, F, grid, trials=100, seed=0):
    """Uncertainty constant plus lambda_max <= min(||sigma||_inf, ||sigma||_1 sup ||k||^2)."""
    res = uncertainty_constant(sigma, F, grid, trials, seed)
    s = np.asarray(getattr(sigma, "samples", sigma), dtype=np.float64)
    l1 = float(np.dot(s, grid.weights))
    ksup = 0.0
    for _, K in F.blocks(grid):
        ksup = max(ksup, float(np.max(np.sum(np.abs(K) ** 2, axis=1))))
    res.l1_norm = l1
    res.lambda_bound = min(float(s.max()) if len(s) else 0.0, l1 * ksup)
    return res


def _plane_family(window_name, grid, margin):
    lat = matched_plane_lattice(grid, margin)
    return make_plane_gabor(window(window_name, lat), grid)


def compactness_proxy(sigma_spec, window_name, extent_schedule, eps=0.1, delta=0.25, margin=2.0,
                      trials=100, seed=0, cap=None):
    """eps-rank of T_{1_E} on growing square plane grids.

    Each extent L uses the grid [-L, L]^2 with spacing ``delta`` and the
    matched signal lattice. The verdict is ``decaying`` (compact-consistent)
    when the last two eps-rank increments are at most 1, ``stagnant``
    (non-compact-consistent) when every step grows the rank by at least
    half the extent ratio, else ``inconclusive``.
    """
    if sigma_spec.geometry.kind != PLANE:
        raise InvalidArgument("compactness_proxy runs on the plane geometry")
    ext = [float(e) for e in extent_schedule]
    if not ext or any(b <= a for a, b in zip(ext, ext[1:])):
        raise InvalidArgument("extent schedule must be nonempty and increasing")
    ranks, lam, cs, sizes, partial = [], [], [], [], False
    for L in ext:
        grid = plane_grid(L, L, delta, delta)
        F = _plane_family(window_name, grid, margin)
        try:
            kw = {} if cap is None else {"cap": cap}
            sigma = indicator(grid, sigma_spec)
            rep = spectrum(assemble_toeplitz(sigma, F, grid, **kw))
        except ResourceError:
            partial = True
            break
        unc = uncertainty_constant(sigma, F, grid, trials, seed)
        ranks.append(rep.eps_rank(eps))
        lam.append(float(rep.eigenvalues[0]))
        cs.append(unc.c_estimate)
        sizes.append(F.n)
    used = ext[:len(ranks)]
    inc = [b - a for a, b in zip(ranks, ranks[1:])]
    if len(inc) < 1:
        verdict, label = "inconclusive", "too few extents"
    elif all(abs(d) <= 1 for d in inc[-2:]):
        verdict, label = "decaying", "compact-consistent"
    elif all(r1 > 0 and r2 - r1 > 1 and r2 / r1 >= 0.5 * (e2 / e1)
             for r1, r2, e1, e2 in zip(ranks, ranks[1:], used, used[1:])):
        verdict, label = "stagnant", "non-compact-consistent"
    else:
        verdict, label = "inconclusive", "no clear trend"
    details = {"eps": eps, "delta": delta, "margin": margin, "lambda_max": lam, "c_estimate": cs,
               "increments": inc, "label": label, "partial": partial, "lattice_sizes": sizes,
               "set": sigma_spec.to_dict(), "window": window_name}
    return DecayReport("eps_rank", list(zip(used, [float(r) for r in ranks])), verdict, details=details)


def translate_gram(F, grid, f, h_list):
    """Gram of f_k = S_{h_k} ... S_{h_1} f; returns (G, lambda_min, det)."""
    c = _as_coords(F, f)
    if not np.any(c):
        raise InvalidArgument("f must be nonzero")
    for h in h_list:
        if not in_invariant_subgroup(h):
            raise InvalidArgument("translate_gram needs elements of the invariant subgroup")
    vecs = []
    cur = HilbertVector.from_coords(c, F.lattice)
    for h in h_list:
        cur = shift_apply(F, grid, h, cur)
        vecs.append(cur.coords)
    V = np.column_stack(vecs) if vecs else c[:, None]
    G = V.conj().T @ V
    G = 0.5 * (G + G.conj().T)
    lam = float(scipy.linalg.eigvalsh(G)[0])
    return G, lam, float(np.linalg.det(G).real)


def _box_vector(lattice, lo, hi):
    def prof(x):
        return ((x >= lo) & (x < hi)).astype(np.float64)

    return HilbertVector(prof(lattice.x), lattice, profile=prof, name=f"box[{lo},{hi})")


@dataclass
class StripCounterexample:
    max_outside: float
    strip_halfwidth: float
    family: object
    witness: HilbertVector


def strip_counterexample(phi_support_halfwidth, f_support_halfwidth, grid, offset=0.0, margin=2.0):
    """Box window on [offset - K1, offset + K1) against box f on [offset - K2, offset + K2).

    Their STFT vanishes for |t| >= K1 + K2; returns the largest coefficient
    modulus the grid sees there, the strip half-width, and the family and
    witness used (so callers can test the strip's uncertainty constant).
    """
    if grid.geometry.kind != PLANE:
        raise InvalidArgument("strip_counterexample runs on the plane geometry")
    K1, K2 = float(phi_support_halfwidth), float(f_support_halfwidth)
    if not (K1 > 0 and K2 > 0):
        raise InvalidArgument("support half-widths must be positive")
    lat = matched_plane_lattice(grid, margin)
    phi = _box_vector(lat, offset - K1, offset + K1)
    f = _box_vector(lat, offset - K2, offset + K2)
    F = make_plane_gabor(phi, grid)
    coeffs = analysis(F, grid, f)
    outside = np.abs(grid.points[:, 1]) >= K1 + K2
    mx = float(np.abs(coeffs[outside]).max()) if outside.any() else 0.0
    return StripCounterexample(mx, K1 + K2, F, f)


def strip_uncertainty(grid, K1=0.5, K2=0.5, offset=0.5, trials=100, seed=0):
    """Uncertainty constant of the strip |t| <= K1 + K2 with the box witness."""
    ce = strip_counterexample(K1, K2, grid, offset)
    sigma = indicator(grid, SetSpec.strip(grid.geometry, 1, ce.strip_halfwidth))
    return ce, uncertainty_constant(sigma, ce.family, grid, trials, seed, witnesses=[ce.witness])


def ball_union_spec(geometry, n_max=10):
    """Union of B((n^2, 0), 1/n), n = 1..n_max."""
    return SetSpec.balls(geometry, [(n * n, 0.0) for n in range(1, n_max + 1)],
                         [1.0 / n for n in range(1, n_max + 1)])

