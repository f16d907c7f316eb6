import csv
import io
import json
import math

import numpy as np
import pytest
from scipy import integrate

from berezin_lab.analysis import ball_union_spec
from berezin_lab.berezin import (DecayReport, admissibility_constant, b1w_integral, berezin_transform,
                                 holder_modulus, kernel_decay_profile, large_scale_slope, moment_check,
                                 normalize_admissible, schur_condition, thinness_report)
from berezin_lab.errors import InvalidArgument, NonAdmissibleError
from berezin_lab.frames import (HilbertVector, Lattice, make_affine_wavelet, make_finite_gabor, make_plane_gabor,
                                matched_plane_lattice, window)
from berezin_lab.operators import ToeplitzOperator
from berezin_lab.phase_space import affine_grid, plane_grid
from berezin_lab.symbols import SetSpec, Symbol, indicator


@pytest.fixture(scope="module")
def fg16():
    F = make_finite_gabor(window("gaussian", Lattice.finite(16)))
    return F, F.companion_grid


@pytest.fixture(scope="module")
def plane():
    grid = plane_grid(8, 8, 0.25, 0.25)
    F = make_plane_gabor(window("gaussian", matched_plane_lattice(grid)), grid)
    return F, grid


@pytest.fixture(scope="module")
def haar():
    return normalize_admissible(window("haar", Lattice.real(16, 1 / 64)))


def test_constant_one_gives_one(fg16):
    F, grid = fg16
    prof = berezin_transform(np.ones(len(grid)), F, grid, grid.points)
    assert np.max(np.abs(prof.values - 1.0)) < 1e-10
    assert np.all(berezin_transform(np.zeros(len(grid)), F, grid, grid.points).values == 0.0)


def test_operator_path_cross_check(fg16):
    F, grid = fg16
    rng = np.random.default_rng(0)
    s = rng.uniform(0, 1, len(grid))
    probes = grid.points[rng.choice(len(grid), 20, replace=False)]
    T = ToeplitzOperator(s, F, grid).matrix
    K = F.vectors(probes)
    via_operator = np.einsum("ij,jk,ik->i", K.conj(), T, K).real
    assert np.max(np.abs(berezin_transform(s, F, grid, probes).values - via_operator)) < 1e-8


def test_berezin_bounded_by_sup(fg16, plane):
    F, grid = fg16
    rng = np.random.default_rng(1)
    for _ in range(5):
        s = rng.uniform(0, 1, len(grid))
        v = berezin_transform(s, F, grid, grid.points).values
        assert v.min() >= 0 and v.max() <= s.max() + 1e-12
    F, grid = plane
    s = rng.uniform(0, 1, len(grid))
    idx = grid.interior(2.0)[::40]
    v = berezin_transform(s, F, grid, grid.points[idx]).values
    assert v.min() >= 0 and v.max() <= s.max() + 1e-3


def test_thinness_finite_set_decays(plane):
    F, grid = plane
    sigma = indicator(grid, SetSpec.balls(grid.geometry, [(0.0, 0.0)], [0.5]))
    rep = thinness_report(sigma, F, grid, [0.5, 1.0])
    assert rep.verdict == "decaying"
    assert rep.details["verdicts_agree"]


def test_thinness_strip_stagnant(plane):
    F, grid = plane
    sigma = indicator(grid, SetSpec.strip(grid.geometry, 1, 0.5, 0.5))
    rep = thinness_report(sigma, F, grid, [0.5, 1.0])
    assert rep.verdict == "stagnant"
    assert rep.details["verdicts_agree"]
    # invariance oracle: along the strip direction the transform is flat
    probes = np.column_stack([np.linspace(-4, 4, 9), np.full(9, 0.5)])
    vals = berezin_transform(sigma, F, grid, probes).values
    assert np.ptp(vals) < 1e-3 * vals.max()


def test_thinness_ball_union():
    grid = plane_grid(16, 16, 0.25, 0.25)
    F = make_plane_gabor(window("gaussian", matched_plane_lattice(grid)), grid)
    rep = thinness_report(indicator(grid, ball_union_spec(grid.geometry)), F, grid, [0.5, 1.0])
    assert rep.verdict == "decaying"
    assert rep.details["verdicts_agree"]
    assert rep.rate < -1.0


def test_thinness_validation(fg16):
    F, grid = fg16
    with pytest.raises(InvalidArgument):
        thinness_report(np.zeros(len(grid)), F, grid, [2.0, 1.0])
    with pytest.raises(InvalidArgument):
        thinness_report(np.zeros(len(grid)), F, grid, [])


def test_thinness_no_probes_is_inconclusive(plane):
    F, grid = plane
    rep = thinness_report(np.zeros(len(grid)), F, grid, [1.0], boundary_margin=100.0)
    assert rep.verdict == "inconclusive"


def test_schur_finite_invariance(fg16):
    F, grid = fg16
    est = schur_condition(F, grid, probes=grid.points)
    assert est.M_estimate - est.M_min <= 1e-8
    assert est.tail_sup == est.M_estimate
    ke = F.vectors(np.array([grid.origin]))[0]
    direct = np.sum(np.abs(F.vectors(grid.points) @ ke.conj())) / 16
    assert est.M_estimate == pytest.approx(direct, abs=1e-10)


def test_schur_gaussian_tail(plane):
    F, grid = plane
    probes = np.array([[0.0, 0.0], [0.5, -0.25]])
    est = schur_condition(F, grid, R=4.0, probes=probes)
    assert est.tail_sup < 1e-3 * est.M_estimate
    # closed form: |<k_x, k_y>| = exp(-pi d^2 / 2) integrates to 2 over the plane
    assert est.M_estimate == pytest.approx(2.0, rel=2e-2)


def test_schur_weight_validation(fg16):
    F, grid = fg16
    with pytest.raises(InvalidArgument):
        schur_condition(F, grid, w=lambda p: -np.ones(len(p)))
    with pytest.raises(InvalidArgument):
        schur_condition(F, grid, R=-1.0)


def test_kernel_decay_gaussian_closed_form(plane):
    F, grid = plane
    theta = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    probes = 5 * np.column_stack([np.cos(theta), np.sin(theta)])
    rep = kernel_decay_profile(F, grid, probes=probes, n_bins=1)
    assert rep.schedule[-1][1] < math.exp(-math.pi * 25 / 2) + 1e-6
    assert kernel_decay_profile(F, grid).verdict == "decaying"


def test_kernel_box_disjoint_supports():
    grid = plane_grid(6, 4, 0.25, 0.25)
    F = make_plane_gabor(window("box", matched_plane_lattice(grid)), grid)
    probes = np.column_stack([np.linspace(-3, 3, 13), np.full(13, 1.5)])
    vals = np.abs(F.vectors(probes) @ F.vectors(np.zeros((1, 2)))[0].conj())
    assert vals.max() < 1e-12


def test_haar_affine_kernel_and_slope(haar):
    grid = affine_grid(1 / 16, 64, 48, 32, 256)
    F = make_affine_wavelet(haar, grid)
    assert kernel_decay_profile(F, grid).verdict == "decaying"
    slope, a, I = large_scale_slope(haar)
    assert slope <= -1.5 + 0.1


def _haar_hat_sq(xi):
    return 4 * math.sin(math.pi * xi / 2) ** 4 / (math.pi * xi) ** 2


def test_haar_admissibility_matches_quadrature():
    psi = window("haar", Lattice.real(16, 1 / 64))
    # |psi^|^2 / xi integrated over (0, inf), split at the zeros xi = 2k
    pieces = [integrate.quad(lambda x: _haar_hat_sq(x) / x, 2 * k, 2 * k + 2, limit=200)[0] for k in range(2000)]
    oracle = sum(pieces)
    assert oracle == pytest.approx(math.log(2), rel=1e-3)
    for d in (1, -1):
        assert admissibility_constant(psi, d) == pytest.approx(oracle, rel=5e-3)


def test_mexican_hat_admissibility():
    psi = window("mexican_hat", Lattice.real())
    cp = admissibility_constant(psi, 1)
    assert cp == pytest.approx(0.5, rel=1e-6)
    assert abs(cp - admissibility_constant(psi, -1)) < 1e-8
    n = normalize_admissible(psi)
    assert admissibility_constant(n, 1) == pytest.approx(1.0, abs=1e-6)
    again = normalize_admissible(n)
    assert np.max(np.abs(again.values - n.values)) < 1e-9
    doubled = normalize_admissible(psi.scaled(2.0))
    assert np.max(np.abs(doubled.values - n.values)) < 1e-9


def test_nonzero_mean_rejected():
    with pytest.raises(NonAdmissibleError):
        admissibility_constant(window("gaussian", Lattice.real()), 1)


def test_one_sided_wavelet_not_normalizable():
    lat = Lattice.real()
    mh = window("mexican_hat", lat)
    psi = HilbertVector(mh.values * np.exp(2j * np.pi * 3 * lat.x), lat)
    with pytest.raises(NonAdmissibleError):
        normalize_admissible(psi)


def test_b1w_verdicts(haar):
    sched = [2.0 ** k for k in range(2, 9)]
    conv = b1w_integral(haar, sched, 0.5)
    assert conv.verdict == "decaying"
    assert conv.rate < -0.3
    assert all(b < a for a, b in zip(conv.details["increments"], conv.details["increments"][1:]))
    div = b1w_integral(haar, sched, 1.5)
    assert div.verdict == "stagnant"
    assert all(b > a for a, b in zip(div.values, div.values[1:]))


def test_b1w_dilation_scaling(haar):
    # W_{psi_c} psi_c (a, b) = W_psi psi (a, b / c), so J picks up a factor c
    c = 2.0
    lat = Lattice.real(16, 1 / 64)
    dil = HilbertVector(haar.evaluate(lat.x / c) / math.sqrt(c), lat)
    j0 = b1w_integral(haar, [4.0, 8.0], 0.5).values
    j1 = b1w_integral(dil, [4.0, 8.0], 0.5).values
    assert np.allclose(np.array(j1) / np.array(j0), c, rtol=1e-2)


def test_b1w_validation(haar):
    with pytest.raises(InvalidArgument):
        b1w_integral(haar, [4.0, 2.0], 0.5)
    with pytest.raises(InvalidArgument):
        b1w_integral(haar, [4.0], 0.0)


def test_holder_modulus_jump_counts():
    lat = Lattice.real(4, 1 / 256)
    box = window("box", lat)
    assert holder_modulus(box, 1.0, [1 / 64, 1 / 16]) == pytest.approx(2.0, abs=2 * lat.step)
    haar = window("haar", lat)
    assert holder_modulus(haar, 1.0, [1 / 64, 1 / 16]) == pytest.approx(4.0, abs=4 * lat.step)
    g = window("gaussian", Lattice.real(8, 1 / 1024))
    assert holder_modulus(g, 1.0, [1e-3, 1e-2]) == pytest.approx(2 * 2 ** 0.25, rel=0.05)
    with pytest.raises(InvalidArgument):
        holder_modulus(box, 1.5, [0.1])


def test_moment_check():
    lat = Lattice.real(4, 1 / 1024)
    mean, mom = moment_check(window("haar", lat), 1.0)
    assert abs(mean) < 1e-10
    assert mom == pytest.approx(0.5, abs=2 * lat.step)
    assert moment_check(window("box", lat), 1.0)[0].real == pytest.approx(1.0, abs=lat.step)
    odd = HilbertVector(lat.x * np.exp(-np.pi * lat.x ** 2), lat)
    assert abs(moment_check(odd, 1.0)[0]) < 1e-15


def test_decay_report_serialization():
    rep = DecayReport("q", [(1.0, 0.5), (2.0, 0.25)], "decaying", rate=-1.0)
    doc = json.loads(rep.to_json())
    assert doc["verdict"] == "decaying"
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["parameter", "value"]
    assert [float(r[0]) for r in rows[1:]] == [1.0, 2.0]
    with pytest.raises(InvalidArgument):
        DecayReport("q", [(2.0, 0.5), (1.0, 0.25)], "decaying")
    with pytest.raises(InvalidArgument):
        DecayReport("q", [], "maybe")


def test_profile_csv(fg16):
    F, grid = fg16
    prof = berezin_transform(np.ones(len(grid)), F, grid, grid.points[:3])
    rows = list(csv.reader(io.StringIO(prof.to_csv())))
    assert len(rows) == 4
    assert Symbol(np.ones(len(grid)), grid).sup_bound == 1.0
