"""Berezin transforms, thinness diagnostics and wavelet decay tools."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import GeometryMismatch, InvalidArgument, NonAdmissibleError
from .frames import BLOCK
from .phase_space import PLANE

VERDICTS = ("decaying", "stagnant", "inconclusive")


@dataclass
class DecayReport:
    """A named schedule of (parameter, value) pairs with a tri-state verdict."""

    quantity: str
    schedule: list
    verdict: str
    rate: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise InvalidArgument(f"verdict must be one of {VERDICTS}")
        params = [p for p, _ in self.schedule]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise InvalidArgument("schedule parameters must be strictly increasing")

    @property
    def parameters(self):
        return [p for p, _ in self.schedule]

    @property
    def values(self):
        return [v for _, v in self.schedule]

    def to_dict(self):
        return {"quantity": self.quantity, "schedule": [[float(p), float(v)] for p, v in self.schedule],
                "verdict": self.verdict, "rate": self.rate, "details": self.details}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "value"])
        for p, v in self.schedule:
            w.writerow([f"{p:.17g}", f"{v:.17g}"])
        return buf.getvalue()


@dataclass
class BerezinProfile:
    probes: np.ndarray
    values: np.ndarray
    origin: tuple
    distances: np.ndarray

    def radial_envelope(self, radii):
        """(r, sup of values over probes with d(e, y) >= r); nan when empty."""
        out = []
        for r in radii:
            mask = self.distances >= r
            out.append((float(r), float(self.values[mask].max()) if mask.any() else math.nan))
        return out

    def to_dict(self):
        return {"probes": self.probes.tolist(), "values": self.values.tolist()}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distance", "value"])
        order = np.argsort(self.distances, kind="stable")
        for i in order:
            w.writerow([f"{self.distances[i]:.17g}", f"{self.values[i]:.17g}"])
        return buf.getvalue()


def _samples(sigma, grid):
    s = np.asarray(getattr(sigma, "samples", sigma), dtype=np.float64)
    if s.shape != (len(grid),):
        raise GeometryMismatch("symbol is not aligned with the grid")
    return s


def berezin_transform(sigma, F, grid, probes):
    """sigma~(y) = sum_i sigma_i |<k_i, k_y>|^2 w_i at every probe y."""
    F._check_grid(grid)
    s = _samples(sigma, grid)
    pts = grid.geometry.check_points(probes)
    Kp = F.vectors(pts)
    support = np.flatnonzero(s)
    vals = np.zeros(len(pts))
    sw = s * grid.weights
    for start in range(0, len(support), BLOCK):
        idx = support[start:start + BLOCK]
        A = F.vectors(grid.points[idx]) @ Kp.conj().T
        vals += sw[idx] @ (A.real ** 2 + A.imag ** 2)
    origin = np.asarray(grid.origin, dtype=np.float64)
    return BerezinProfile(pts, vals, grid.origin, grid.geometry.distance(pts.astype(np.float64), origin))


def _default_margin(grid):
    return 2.0 if grid.geometry.kind == PLANE else (1.0 if not grid.geometry.is_finite else 0.0)


def _interior_probes(grid, margin, max_probes):
    idx = grid.interior(margin)
    if len(idx) == 0:
        return idx
    stride = max(1, int(math.ceil(len(idx) / max_probes)))
    return idx[::stride]


def _inscribed_radius(grid, probes, dist):
    """Distance from e to the nearest edge of the probe region.

    Envelopes beyond it would only see part of the space; on the finite
    geometry there is no edge and the full diameter is used.
    """
    if grid.geometry.is_finite:
        return float(dist.max())
    edge = np.zeros(len(probes), dtype=bool)
    for axis in (0, 1):
        col = probes[:, axis]
        edge |= (col == col.min()) | (col == col.max())
    return float(dist[edge].min())


def _ball_integrals(s, grid, probes, R):
    support = np.flatnonzero(s)
    sw = (s * grid.weights)[support]
    pts = grid.points[support].astype(np.float64)
    out = np.zeros(len(probes))
    for start in range(0, len(probes), 256):
        p = probes[start:start + 256].astype(np.float64)
        d = grid.geometry.distance(p[:, None, :], pts[None, :, :])
        out[start:start + 256] = (d <= R) @ sw
    return out


def _envelope(values, dist, radii):
    env = []
    for r in radii:
        m = dist >= r
        env.append(float(values[m].max()) if m.any() else math.nan)
    return env


def _verdict(env, frac):
    if any(math.isnan(v) for v in env):
        return "inconclusive"
    if env[0] <= 0.0:
        return "decaying"
    return "decaying" if env[-1] <= frac * env[0] else "stagnant"


def _loglog_rate(radii, env):
    r = np.asarray(radii)
    v = np.asarray(env)
    ok = (r > 0) & (v > 0) & np.isfinite(v)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def thinness_report(sigma, F, grid, R_list, threshold=0.05, n_radii=8, boundary_margin=None, max_probes=1500):
    """Sup-envelopes of sigma~ and of ball integrals over probes far from e.

    Probes are grid points at least ``boundary_margin`` from the truncation
    boundary (Berezin values near the edge see a clipped grid). The radius
    schedule runs from 0 to the largest distance among probes. The verdict
    is ``decaying`` when the final envelope value is at most ``threshold``
    times its value at r = 0.
    """
    R_list = [float(r) for r in R_list]
    if not R_list or any(b <= a for a, b in zip(R_list, R_list[1:])) or R_list[0] <= 0:
        raise InvalidArgument("R_list must be a nonempty increasing list of positive radii")
    s = _samples(sigma, grid)
    margin = _default_margin(grid) if boundary_margin is None else boundary_margin
    idx = _interior_probes(grid, margin, max_probes)
    if len(idx) == 0:
        return DecayReport("berezin_envelope", [], "inconclusive", details={"reason": "no interior probes"})
    probes = grid.points[idx]
    prof = berezin_transform(s, F, grid, probes)
    dist = prof.distances
    radii = [float(r) for r in np.linspace(0.0, _inscribed_radius(grid, probes, dist), n_radii)]
    env = _envelope(prof.values, dist, radii)
    verdict = _verdict(env, threshold)
    balls = {}
    ball_verdicts = {}
    for R in R_list:
        bi = _ball_integrals(s, grid, probes, R)
        benv = _envelope(bi, dist, radii)
        balls[f"{R:.17g}"] = benv
        ball_verdicts[f"{R:.17g}"] = _verdict(benv, threshold)
    agree = all(v == verdict for v in ball_verdicts.values())
    details = {
        "threshold": threshold,
        "boundary_margin": margin,
        "n_probes": int(len(probes)),
        "ball_envelopes": balls,
        "ball_verdicts": ball_verdicts,
        "verdicts_agree": agree,
    }
    return DecayReport("berezin_envelope", list(zip(radii, env)), verdict,
                       rate=_loglog_rate(radii, env), details=details)


@dataclass
class SchurEstimate:
    M_estimate: float
    tail_sup: float
    M_min: float


def _weight_values(w, pts):
    if w is None:
        return np.ones(len(pts))
    vals = np.asarray(w(pts) if callable(w) else w, dtype=np.float64)
    vals = np.broadcast_to(vals, (len(pts),))
    if np.any(vals <= 0):
        raise InvalidArgument("Schur weight must be positive")
    return vals


def schur_condition(F, grid, w=None, R=0.0, probes=None):
    """Weighted Schur sums w(y)^-1 sum_x |<k_x, k_y>| w(x) w_x over probes.

    ``tail_sup`` restricts the inner sum to d(x, y) > R. Returns the max
    over probes and, as ``M_min``, the min (equal for invariant kernels).
    """
    if R < 0:
        raise InvalidArgument("R must be >= 0")
    F._check_grid(grid)
    if probes is None:
        idx = _interior_probes(grid, _default_margin(grid), 200)
        probes = grid.points[idx]
    pts = grid.geometry.check_points(probes)
    wy = _weight_values(w, pts)
    wx = _weight_values(w, grid.points) * grid.weights
    Kp = F.vectors(pts)
    full = np.zeros(len(pts))
    tail = np.zeros(len(pts))
    for sl, K in F.blocks(grid):
        A = np.abs(K @ Kp.conj().T) * wx[sl, None]
        d = grid.geometry.distance(grid.points[sl].astype(np.float64)[:, None, :], pts.astype(np.float64)[None, :, :])
        full += A.sum(axis=0)
        tail += np.where(d > R, A, 0.0).sum(axis=0) if R > 0 else A.sum(axis=0)
    full /= wy
    tail /= wy
    return SchurEstimate(float(full.max()), float(tail.max()), float(full.min()))


def kernel_decay_profile(F, grid, probes=None, n_bins=10, threshold=1e-3):
    """Binned max of |<k_x, k_e>| against d(x, e).

    Decaying when the max in the last nonempty bin is at most ``threshold``
    times the overall max.
    """
    g = grid.geometry
    pts = grid.points if probes is None else g.check_points(probes)
    e = np.asarray(g.origin, dtype=np.float64)
    ke = F.vectors(np.asarray(g.origin)[None, :])[0]
    vals = np.abs(F.vectors(pts) @ ke.conj())
    d = g.distance(pts.astype(np.float64), e)
    edges = np.linspace(0.0, float(d.max()), n_bins + 1)[1:]
    sched = []
    lo = -1.0
    for hi in edges:
        m = (d > lo) & (d <= hi)
        if m.any():
            sched.append((float(hi), float(vals[m].max())))
        lo = hi
    top = float(vals.max())
    if len(sched) < 2 or top == 0:
        verdict = "inconclusive"
    else:
        verdict = "decaying" if sched[-1][1] <= threshold * top else "stagnant"
    return DecayReport("kernel_modulus", sched, verdict, rate=_loglog_rate(*zip(*sched)) if sched else None)


# -- wavelet diagnostics -----------------------------------------------------------

MEAN_TOL = 1e-6


def _mean(psi):
    return complex(np.sum(psi.values) * psi.step)


def fourier_samples(psi, xi):
    """psi^(xi) = sum_j psi(x_j) exp(-2 pi i x_j xi) * step."""
    x = psi.lattice.x
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty(xi.shape, dtype=np.complex128)
    flat = xi.reshape(-1)
    res = out.reshape(-1)
    for start in range(0, len(flat), 512):
        chunk = flat[start:start + 512]
        res[start:start + 512] = np.exp(-2j * np.pi * np.outer(chunk, x)) @ psi.values * psi.step
    return out


def admissibility_constant(psi, direction=1, xi_min=2.0 ** -20, xi_max=2.0 ** 10, nodes_per_octave=64):
    """Calderon integral int_0^inf |psi^(direction * xi)|^2 / xi d xi.

    psi^ is evaluated directly at log-uniform nodes (the limit of an
    infinitely zero-padded DFT); the upper limit is capped at the lattice
    Nyquist frequency. Trapezoid rule in log xi.
    """
    if direction not in (1, -1):
        raise InvalidArgument("direction must be +1 or -1")
    if psi.lattice.periodic:
        raise InvalidArgument("admissibility needs a real lattice")
    mean = _mean(psi)
    if abs(mean) > MEAN_TOL:
        raise NonAdmissibleError(f"wavelet mean {abs(mean):.3g} exceeds {MEAN_TOL:g}; the integral diverges at 0")
    top = min(xi_max, 0.5 / psi.step)
    if not top > xi_min:
        raise InvalidArgument("empty frequency range")
    n = int(math.ceil(math.log2(top / xi_min) * nodes_per_octave)) + 1
    u = np.linspace(math.log(xi_min), math.log(top), n)
    vals = np.abs(fourier_samples(psi, direction * np.exp(u))) ** 2
    return float(np.trapezoid(vals, u))


def normalize_admissible(psi, imbalance_tol=0.05):
    """Scale psi so that the direction-averaged Calderon constant is 1."""
    cp = admissibility_constant(psi, 1)
    cm = admissibility_constant(psi, -1)
    if not (cp > 0 and cm > 0):
        raise NonAdmissibleError("Calderon constant vanishes")
    if abs(cp - cm) > imbalance_tol * max(cp, cm):
        raise NonAdmissibleError(f"direction constants {cp:.6g} and {cm:.6g} differ by more than "
                                 f"{imbalance_tol:.0%}; scaling cannot balance them")
    c = 0.5 * (cp + cm)
    return psi.scaled(1.0 / math.sqrt(c))


def _support(psi):
    tol = 1e-12 * float(np.abs(psi.values).max())
    lo, hi = psi.support(tol)
    return lo - psi.step, hi + psi.step


def wavelet_self_transform_l1(psi, a, s0=1.0 / 64):
    """I(a) = int |W_psi psi(a, b)| db via one cross-correlation.

    With g(x) = a^-1/2 psi(x/a) the transform at b is the correlation of
    psi and g at lag a*b, so I(a) = (1/a) int |c(tau)| d tau.
    """
    lo, hi = _support(psi)
    h = s0 * min(1.0, a)
    glo, ghi = a * lo, a * hi
    x0 = min(lo, glo)
    n = int(math.ceil((max(hi, ghi) - x0) / h)) + 1
    x = x0 + h * np.arange(n)
    f = psi.evaluate(x)
    g = psi.evaluate(x / a) / math.sqrt(a)
    c = fftconvolve(f, g[::-1].conj()) * h
    return float(np.sum(np.abs(c)) * h / a)


def b1w_integral(psi, a_max_schedule, epsilon, per_octave=8, s0=1.0 / 64):
    """Truncated weighted integral of |W_psi psi| over a in [1/A, A].

    J(A) = sum over log-uniform cells a in [1/A, A] of
    I(a) * a^(1/2 + epsilon) * dlog(a). The verdict is ``decaying`` when
    the increments between consecutive A shrink (fitted log-log slope below
    -0.1), ``stagnant`` otherwise.
    """
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    A = [float(v) for v in a_max_schedule]
    if not A:
        raise InvalidArgument("empty schedule")
    if any(v <= 1 for v in A) or any(b <= a for a, b in zip(A, A[1:])):
        raise InvalidArgument("schedule must be increasing and > 1")
    top = math.log2(A[-1])
    n_cells = int(math.ceil(top * per_octave))
    du = top / n_cells
    u = (np.arange(-n_cells, n_cells) + 0.5) * du
    a = 2.0 ** u
    integrand = np.array([wavelet_self_transform_l1(psi, ai, s0) for ai in a]) * a ** (0.5 + epsilon)
    dlog = du * math.log(2.0)
    vals = []
    for Ai in A:
        m = np.abs(u) <= math.log2(Ai) + 1e-12
        vals.append(float(np.sum(integrand[m]) * dlog))
    inc = [abs(b - v) for v, b in zip(vals, vals[1:])]
    if len(inc) < 2:
        verdict, rate = "inconclusive", None
    else:
        pos = [(x, y) for x, y in zip(A[1:], inc) if y > 0]
        if len(pos) < 2:
            verdict, rate = "decaying", None
        else:
            rate = float(np.polyfit(np.log([p for p, _ in pos]), np.log([q for _, q in pos]), 1)[0])
            verdict = "decaying" if rate < -0.1 else "stagnant"
    note = "Cauchy: increments shrink" if verdict == "decaying" else (
        "divergent: increments do not shrink" if verdict == "stagnant" else "too few schedule points")
    return DecayReport("b1w_integral", list(zip(A, vals)), verdict, rate=rate,
                       details={"epsilon": epsilon, "increments": inc, "note": note,
                                "per_octave": per_octave, "s0": s0})


def large_scale_slope(psi, a_lo=4.0, a_hi=256.0, n=9, s0=1.0 / 64):
    """Log-log slope of I(a) = int |W_psi psi(a, b)| db over [a_lo, a_hi]."""
    a = np.geomspace(a_lo, a_hi, n)
    I = np.array([wavelet_self_transform_l1(psi, ai, s0) for ai in a])
    return float(np.polyfit(np.log(a), np.log(I), 1)[0]), a, I


def holder_modulus(phi, alpha, h_list):
    """max over h of ||phi(. - h) - phi||_L1 / h^alpha."""
    if not 0 < alpha <= 1:
        raise InvalidArgument("alpha must lie in (0, 1]")
    h_list = [float(h) for h in h_list]
    if not h_list or any(h <= 0 for h in h_list):
        raise InvalidArgument("h_list must contain positive shifts")
    x = phi.lattice.x
    best = 0.0
    for h in h_list:
        k = h / phi.step
        if abs(k - round(k)) < 1e-9 and phi.profile is None:
            k = int(round(k))
            shifted = np.zeros_like(phi.values)
            if k < len(x):
                shifted[k:] = phi.values[:len(x) - k]
        else:
            shifted = phi.evaluate(x - h)
        diff = float(np.sum(np.abs(shifted - phi.values)) * phi.step)
        best = max(best, diff / h ** alpha)
    return best


def moment_check(phi, alpha):
    """(sum phi * step, sum |phi| |x|^alpha * step)."""
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    x = phi.lattice.x
    return _mean(phi), float(np.sum(np.abs(phi.values) * np.abs(x) ** alpha) * phi.step)
