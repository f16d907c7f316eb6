import json

import numpy as np
import pytest

from berezin_lab.analysis import (ball_union_spec, compactness_proxy, l1_symbol_bound, strip_counterexample,
                                  strip_uncertainty, translate_gram, uncertainty_constant)
from berezin_lab.errors import InvalidArgument
from berezin_lab.frames import Lattice, make_finite_gabor, make_plane_gabor, matched_plane_lattice, window
from berezin_lab.operators import assemble_toeplitz, spectrum
from berezin_lab.phase_space import Geometry, plane_grid
from berezin_lab.symbols import SetSpec


def finite(N, name="gaussian"):
    F = make_finite_gabor(window(name, Lattice.finite(N)))
    return F, F.companion_grid


@pytest.fixture(scope="module")
def plane():
    grid = plane_grid(6, 6, 0.25, 0.25)
    F = make_plane_gabor(window("gaussian", matched_plane_lattice(grid)), grid)
    return F, grid


def test_uncertainty_trivial_symbols():
    F, grid = finite(8)
    zero = uncertainty_constant(np.zeros(len(grid)), F, grid)
    assert zero.c_estimate == 1.0
    one = uncertainty_constant(np.ones(len(grid)), F, grid)
    assert abs(one.c_estimate) < 1e-10
    assert one.caveats == []


def test_uncertainty_concentrated_column():
    F, grid = finite(8, "dirac")
    res = uncertainty_constant((grid.points[:, 1] == 0).astype(float), F, grid)
    assert res.top_sigma_eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert abs(res.c_estimate) < 1e-12


def test_uncertainty_invariants():
    F, grid = finite(16)
    rng = np.random.default_rng(0)
    for seed in range(5):
        s = rng.uniform(0, 1, len(grid))
        res = uncertainty_constant(s, F, grid, trials=100, seed=seed)
        lam = spectrum(assemble_toeplitz(s, F, grid)).eigenvalues[0]
        assert res.c_estimate + lam == pytest.approx(1.0, abs=1e-8)
        assert res.verification >= res.c_estimate - 1e-8
        assert res.seed == seed and res.trials == 100
    doc = json.loads(res.to_json())
    assert doc["seed"] == 4


def test_uncertainty_validation():
    F, grid = finite(4)
    with pytest.raises(InvalidArgument):
        uncertainty_constant(np.full(len(grid), 2.0), F, grid)
    with pytest.raises(InvalidArgument):
        uncertainty_constant(np.zeros(len(grid)), F, grid, trials=0)


def test_uncertainty_plane_caveat_and_lower_bound(plane):
    F, grid = plane
    res = uncertainty_constant(np.zeros(len(grid)), F, grid)
    # on the matched lattice the truncated Gaussian frame is Parseval to 1e-8
    assert res.caveats == []
    assert res.frame_lower_bound == pytest.approx(1.0, abs=1e-8)
    assert res.c_estimate == res.frame_lower_bound
    box = make_plane_gabor(window("box", matched_plane_lattice(grid)), grid)
    assert "frame-approximation" in uncertainty_constant(np.zeros(len(grid)), box, grid).caveats


def test_l1_bound_one_point():
    N = 16
    F, grid = finite(N)
    s = np.zeros(len(grid))
    s[37] = 1.0
    res = l1_symbol_bound(s, F, grid)
    assert res.l1_norm == pytest.approx(1 / N)
    assert res.top_sigma_eigenvalue == pytest.approx(1 / N, abs=1e-12)
    assert res.lambda_bound == pytest.approx(1 / N, abs=1e-12)
    assert l1_symbol_bound(np.zeros(len(grid)), F, grid).c_estimate == 1.0


def test_l1_bound_gaussian_bump(plane):
    F, grid = plane
    w, t = grid.points[:, 0], grid.points[:, 1]
    bump = np.exp(-np.pi * (w ** 2 + t ** 2))
    s = 0.1 * bump / np.dot(bump, grid.weights)
    res = l1_symbol_bound(s, F, grid)
    assert res.l1_norm == pytest.approx(0.1)
    assert res.top_sigma_eigenvalue <= 0.1 + 1e-3
    assert res.top_sigma_eigenvalue <= res.lambda_bound + 1e-12


def test_compactness_single_ball_and_empty():
    g = Geometry.plane()
    ball = compactness_proxy(SetSpec.balls(g, [(0.0, 0.0)], [1.0]), "gaussian", [3, 4, 6])
    assert ball.verdict == "decaying"
    ranks = ball.values
    assert ranks[1] == ranks[2]
    # Markov cap: eps-rank <= mu(E) / eps (up to the discretization of the disc)
    assert all(r <= np.pi / 0.1 + 1 for r in ranks)
    empty = compactness_proxy(SetSpec("empty", g), "gaussian", [3, 4])
    assert empty.values == [0.0, 0.0]
    assert empty.details["lambda_max"] == [0.0, 0.0]


def test_compactness_strip_grows():
    rep = compactness_proxy(SetSpec.strip(Geometry.plane(), 1, 1.0), "box", [3, 6, 12])
    assert rep.verdict == "stagnant"
    r = rep.values
    # the rank keeps growing with the extent; increments do not shrink
    assert r[0] < r[1] < r[2]
    assert r[2] - r[1] >= r[1] - r[0]


def test_compactness_partial_on_cap():
    rep = compactness_proxy(SetSpec.balls(Geometry.plane(), [(0.0, 0.0)], [1.0]), "gaussian", [3, 8], cap=100)
    assert rep.details["partial"]
    assert len(rep.schedule) == 1


def test_compactness_validation():
    with pytest.raises(InvalidArgument):
        compactness_proxy(SetSpec("empty", Geometry.affine()), "gaussian", [3, 4])
    with pytest.raises(InvalidArgument):
        compactness_proxy(SetSpec("empty", Geometry.plane()), "gaussian", [4, 3])


def _gaussian_shift_gram(n, step):
    # <g(. - j s), g(. - k s)> = exp(-pi (j - k)^2 s^2 / 2) for the unit Gaussian
    j = np.arange(1, n + 1)
    return np.exp(-np.pi * (j[:, None] - j[None, :]) ** 2 * step ** 2 / 2)


def test_translate_gram(plane):
    F, grid = plane
    g = grid.geometry
    f = F.vector((0.0, 0.0))
    G, lam, det = translate_gram(F, grid, f, [g.element(0.0, 0.5)] * 5)
    assert lam > 1e-6
    assert np.allclose(G, _gaussian_shift_gram(5, 0.5), atol=2e-2)
    G1, lam1, _ = translate_gram(F, grid, f, [g.identity()])
    assert lam1 == pytest.approx(G1[0, 0].real)
    _, _, det_dup = translate_gram(F, grid, f, [g.identity()] * 3)
    assert abs(det_dup) < 1e-10
    with pytest.raises(InvalidArgument):
        translate_gram(F, grid, np.zeros(F.n), [g.identity()])
    with pytest.raises(InvalidArgument):
        translate_gram(F, grid, f, [g.element(1.0, 0.0)])


def test_strip_counterexample():
    grid = plane_grid(6, 4, 0.25, 0.25)
    ce = strip_counterexample(0.5, 0.5, grid, offset=0.5)
    assert ce.max_outside < 1e-14
    assert ce.strip_halfwidth == 1.0
    wide = strip_counterexample(1.0, 2.0, grid)
    assert wide.strip_halfwidth == 3.0
    assert wide.max_outside < 1e-14
    with pytest.raises(InvalidArgument):
        strip_counterexample(0.0, 1.0, grid)


def test_strip_uncertainty_vanishes():
    ce, res = strip_uncertainty(plane_grid(4, 4, 0.25, 0.25))
    assert res.c_estimate < 1e-10
    assert res.witness_quotients[0] < 1e-10


def test_ball_union_spec():
    spec = ball_union_spec(Geometry.plane(), 3)
    assert spec.contains(np.array([[1.0, 0.5], [4.0, 0.4], [9.0, 0.34]])).tolist() == [True, True, False]
