import numpy as np
import pytest
from scipy.optimize import brentq

from lapspec.coefficient import (QUADRANT_HIGH, SamplingRule, builtin,
                                 constant_field, kellogg_mu, kellogg_solution,
                                 linear_field, load_element_field,
                                 nodal_values, random_element_field,
                                 support_interval, support_intervals)
from lapspec.mesh import uniform_square
from lapspec.quadrature import degree4_rule


def pts(*xy):
    return np.array(xy, dtype=float)


def test_builtin_values():
    p1 = builtin("p1")
    assert p1(pts((0, 0)))[0] == 0.0  # sin vanishes at the corner
    assert p1(pts((0.3, 0.4)))[0] == pytest.approx(np.sin(0.7), abs=1e-15)
    assert builtin("p2")(pts((0, 0)))[0] == pytest.approx(51.0, abs=1e-12)
    assert builtin("p3")(pts((1, 1)))[0] == pytest.approx(256.0, abs=1e-12)
    q = builtin("quadrant")
    assert q(pts((0.5, 0.5)))[0] == QUADRANT_HIGH
    assert q(pts((-0.5, 0.5)))[0] == 1.0
    assert q(pts((-0.5, -0.5)))[0] == QUADRANT_HIGH
    with pytest.raises(ValueError):
        builtin("nope")
    with pytest.raises(ValueError):
        builtin("constant")


def test_p4_interface_takes_upper_branch():
    p4 = builtin("p4")
    x = 0.3
    assert p4(pts((x, 0.5)))[0] == pytest.approx(np.sin(x + 0.5), abs=1e-15)
    assert p4(pts((x, 0.49)))[0] == pytest.approx(
        1 + 50 * np.exp(-5 * (x ** 2 + 0.49 ** 2)), abs=1e-12)


def test_quadrant_constant_matches_interface_conditions():
    # independent oracle: solve the transcendental flux-matching conditions
    # for the checkerboard solution r^g * mu(theta) with g=0.1, rho=pi/4
    g, rho = 0.1, np.pi / 4

    def mismatch(sigma):
        return np.tan((np.pi / 2 - sigma) * g) - np.tan(sigma * g)

    sigma = brentq(mismatch, -15.5, -14.2, xtol=1e-14)
    R = -np.tan(sigma * g) / np.tan(rho * g)
    assert sigma == pytest.approx(-4.75 * np.pi, abs=1e-10)
    assert R == pytest.approx(QUADRANT_HIGH, rel=1e-12)


def test_kellogg_solution_interface_continuity():
    # mu continuous and 2pi periodic; flux jump ratio equals QUADRANT_HIGH
    th = np.linspace(0, 2 * np.pi, 9)
    for t in (np.pi / 2, np.pi, 3 * np.pi / 2):
        below = kellogg_mu(np.array([t - 1e-10]))[0]
        above = kellogg_mu(np.array([t + 1e-10]))[0]
        assert below == pytest.approx(above, abs=1e-9)
    assert kellogg_mu(np.array([0.0]))[0] == \
        pytest.approx(kellogg_mu(np.array([2 * np.pi]))[0], abs=1e-12)
    # flux continuity: k * d(mu)/d(theta) across theta = pi/2
    h = 1e-7
    d_below = (kellogg_mu(np.array([np.pi / 2 - h]))
               - kellogg_mu(np.array([np.pi / 2 - 3 * h]))) / (2 * h)
    d_above = (kellogg_mu(np.array([np.pi / 2 + 3 * h]))
               - kellogg_mu(np.array([np.pi / 2 + h]))) / (2 * h)
    assert QUADRANT_HIGH * d_below[0] == pytest.approx(d_above[0], rel=1e-5)
    # boundary data is zero at the origin and finite elsewhere
    assert kellogg_solution(pts((0, 0)))[0] == 0.0
    assert np.isfinite(kellogg_solution(pts((1, 1), (-1, 0.3)))).all()


@pytest.mark.parametrize("name", ["p1", "p2", "p3"])
def test_gradient_hessian_finite_differences(name):
    field = builtin(name)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.1, 0.9, (40, 2))
    h = 1e-5
    gx = (field(x + [h, 0]) - field(x - [h, 0])) / (2 * h)
    gy = (field(x + [0, h]) - field(x - [0, h])) / (2 * h)
    grad = field.gradient(x)
    scale = np.abs(grad).max() + 1.0
    assert np.abs(grad[:, 0] - gx).max() < 1e-7 * scale
    assert np.abs(grad[:, 1] - gy).max() < 1e-7 * scale
    hess_fd = (field.gradient(x + [h, 0]) - field.gradient(x - [h, 0])) / (2 * h)
    hess = field.hessian(x)
    hscale = np.abs(hess).max() + 1.0
    assert np.abs(hess[:, 0, :] - hess_fd).max() < 1e-6 * hscale


def test_constant_interval_exact():
    m = uniform_square(6)
    iv = support_interval(constant_field(3.5), m, 0)
    assert iv.kmin == iv.kmax == 3.5
    assert iv.exactness == "exact"


def test_quadrant_intervals():
    m = uniform_square(8, (-1, 1))
    q = builtin("quadrant")
    ivs = support_intervals(q, m)
    fc = m.free_coords()
    origin = int(np.where((fc[:, 0] == 0) & (fc[:, 1] == 0))[0][0])
    assert ivs[origin].kmin == 1.0
    assert ivs[origin].kmax == QUADRANT_HIGH
    inside_q2 = int(np.where((fc[:, 0] == -0.75) & (fc[:, 1] == 0.75))[0][0])
    assert (ivs[inside_q2].kmin, ivs[inside_q2].kmax) == (1.0, 1.0)
    assert ivs[inside_q2].exactness == "exact"


def test_p1_interval_example():
    # patch of (0.5, 0.5) on the 10-cell mesh spans x+y in [0.8, 1.2]
    m = uniform_square(10)
    f = builtin("p1")
    fc = m.free_coords()
    d = int(np.where((fc[:, 0] == 0.5) & (fc[:, 1] == 0.5))[0][0])
    iv = support_interval(f, m, d)
    assert iv.kmin == pytest.approx(np.sin(0.8), abs=1e-12)
    assert iv.kmax == pytest.approx(np.sin(1.2), abs=1e-12)
    assert iv.exactness == "sampled"
    # dense-sampling oracle: denser lattice can only widen toward the truth
    dense = support_interval(f, m, d, SamplingRule(lattice_order=12))
    assert dense.kmin <= iv.kmin and dense.kmax >= iv.kmax
    assert dense.kmax - iv.kmax < 1e-4


def test_nodal_inclusion_and_sampling_monotonicity():
    m = uniform_square(8)
    for name in ("p1", "p2", "p3", "p4"):
        field = builtin(name)
        k_nod = nodal_values(field, m)
        coarse = support_intervals(field, m, SamplingRule(lattice_order=2))
        fine = support_intervals(field, m, SamplingRule(lattice_order=5))
        for dof in range(m.n_free):
            assert coarse[dof].kmin - 1e-12 <= k_nod[dof] <= \
                coarse[dof].kmax + 1e-12
            assert fine[dof].kmin <= coarse[dof].kmin + 1e-15
            assert fine[dof].kmax >= coarse[dof].kmax - 1e-15


def test_smooth_interval_width_tracks_gradient():
    # every patch point is within h_hat of the node, so
    # kmax - kmin <= 2 h_hat max|grad k| + O(h_hat^2), checked numerically
    from lapspec.mesh import support_patch
    m = uniform_square(10)
    for name in ("p1", "p2", "p3"):
        field = builtin(name)
        ivs = support_intervals(field, m)
        for dof in range(0, m.n_free, 7):
            tris, nodes, h_hat = support_patch(m, dof)
            patch_pts = m.nodes[nodes]
            gmax = np.linalg.norm(field.gradient(patch_pts), axis=1).max()
            hmax = np.abs(field.hessian(patch_pts)).sum(axis=(1, 2)).max()
            width = ivs[dof].kmax - ivs[dof].kmin
            assert width <= 2 * h_hat * gmax + h_hat ** 2 * hmax


def test_element_field_csv_roundtrip(tmp_path):
    m = uniform_square(4)
    field = random_element_field(m, seed=3)
    path = tmp_path / "field.csv"
    with open(path, "w") as fh:
        for t, v in enumerate(field.values):
            fh.write(f"{t},{float(v)!r}\n")
    loaded = load_element_field(m, path)
    assert np.array_equal(loaded.values, field.values)
    ivs = support_intervals(loaded, m)
    assert all(iv.exactness == "exact" for iv in ivs)
    # interval = min/max of patch triangle values
    patch = m.node_patch[m.free_nodes[0]]
    assert ivs[0].kmin == field.values[patch].min()
    assert ivs[0].kmax == field.values[patch].max()


def test_linear_field_zero_hessian():
    f = linear_field(1.0, 1.0, 0.0)
    assert np.all(f.hessian(pts((0.3, 0.4))) == 0)
    assert f(pts((0.25, 0.9)))[0] == 1.25


def test_interval_dof_out_of_range():
    m = uniform_square(4)
    with pytest.raises(IndexError):
        support_interval(constant_field(1.0), m, m.n_free)


def test_sampler_includes_quadrature_nodes():
    rule = SamplingRule(quad=degree4_rule(), lattice_order=2)
    bary = rule.barycentric_points()
    for q in degree4_rule().points:
        assert np.min(np.abs(bary - q).sum(axis=1)) < 1e-12
