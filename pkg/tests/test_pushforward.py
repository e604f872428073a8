"""Pushforwards of grid densities under convex gradients and transport maps."""

import numpy as np
import pytest

from otpush.convex_analysis import MaxAffineFunction
from otpush.discrete_ot import wasserstein
from otpush.geometry_measures import (DiscreteMeasure, Domain, GridDensity,
                                      discretize)
from otpush.pcost_maps import CConcavePotential, SmoothPotential
from otpush.pushforward import (SelectionPolicy, lot_interpolant,
                                potential_from_discrete_ot,
                                pushforward_convex, pushforward_tmap)

BOX = Domain.box([-0.5], [0.5])
BOX2 = Domain.box([-0.5, -0.5], [0.5, 0.5])
F_ABS = MaxAffineFunction(np.array([[-1.0], [1.0]]), np.zeros(2))
RHO = GridDensity.uniform(BOX, 1000)
D0 = DiscreteMeasure(np.array([[0.0]]), np.array([1.0]), BOX)


def _sign_potential(p):
    return CConcavePotential(np.array([[1.0], [-1.0]]), np.zeros(2), p, 1.0)


# ---------------------------------------------------------------------------
# gradient pushforward
# ---------------------------------------------------------------------------

def test_abs_gradient_splits_half_half():
    res = pushforward_convex(F_ABS, RHO)
    assert res.singular_hits == 0
    assert np.array_equal(res.image.points.ravel(), [-1.0, 1.0])
    assert np.abs(res.image.weights - 0.5).max() < 1e-12
    assert res.image.weights.sum() == pytest.approx(1.0, abs=1e-12)
    src_marginal, _ = res.coupling.marginals()
    assert np.abs(src_marginal - discretize(RHO).weights).max() < 1e-15


def test_selection_policies_at_the_kink():
    cases = [(SelectionPolicy.fixed(1), 1.0),
             (SelectionPolicy.fixed(0), -1.0),
             (None, 0.0),  # min-norm default picks the interior subgradient
             (SelectionPolicy.max_first_coordinate(), 1.0)]
    for policy, expect in cases:
        res = (pushforward_convex(F_ABS, D0, policy) if policy is not None
               else pushforward_convex(F_ABS, D0))
        assert res.singular_hits == 1
        assert res.image.points.ravel().tolist() == [expect]
        assert res.image.weights.tolist() == [1.0]


def test_user_policy_hull_validation():
    with pytest.raises(ValueError, match="outside"):
        pushforward_convex(F_ABS, D0, SelectionPolicy.user(np.array([[2.0]])))
    res = pushforward_convex(F_ABS, D0, SelectionPolicy.user(np.array([[0.25]])))
    assert res.image.points.ravel().tolist() == [0.25]


def test_affine_gradient_is_a_dirac():
    fa = MaxAffineFunction(np.array([[0.3, -0.2]]), np.array([0.1]))
    res = pushforward_convex(fa, GridDensity.uniform(BOX2, 20))
    assert len(res.image) == 1
    assert np.array_equal(res.image.points[0], [0.3, -0.2])


def test_policy_choice_is_irrelevant_off_the_singular_set():
    phi2 = _sign_potential(2.0)
    res_a = pushforward_tmap(phi2, RHO, SelectionPolicy.min_norm())
    res_b = pushforward_tmap(phi2, RHO, SelectionPolicy.max_first_coordinate())
    assert np.array_equal(res_a.image.points, res_b.image.points)
    assert np.array_equal(res_a.image.weights, res_b.image.weights)


# ---------------------------------------------------------------------------
# transport-map pushforward
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p", [2.0, 3.0])
def test_tmap_sign_potential(p):
    res = pushforward_tmap(_sign_potential(p), RHO)
    assert res.singular_hits == 0
    assert np.array_equal(res.image.points.ravel(), [-1.0, 1.0])
    assert np.abs(res.image.weights - 0.5).max() < 1e-12


def test_tmap_zero_potential_is_identity():
    res = pushforward_tmap(SmoothPotential.zero(2.0, 1.0, 1), RHO)
    src = discretize(RHO)
    assert np.array_equal(res.image.points, np.unique(src.points, axis=0))
    assert res.image.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_tmap_atom_pinch_weights():
    eps, k = 0.1, 500
    h = (0.5 - eps / 2) / k
    left = -0.5 + (np.arange(k) + 0.5) * h
    right = eps / 2 + (np.arange(k) + 0.5) * h
    pts = np.concatenate([left, right, [0.0]])[:, None]
    w = np.concatenate([np.full(2 * k, (1 - eps) / (2 * k)), [eps]])
    rho_eps = DiscreteMeasure(pts, w, BOX)
    phi2 = _sign_potential(2.0)
    vec = np.zeros((len(pts), 1))
    vec[-1, 0] = 2.0  # send the midpoint atom to the right
    res = pushforward_tmap(phi2, rho_eps, SelectionPolicy.user(vec))
    assert res.singular_hits == 1
    got = dict(zip(res.image.points.ravel(), res.image.weights))
    assert got[-1.0] == pytest.approx((1 - eps) / 2, abs=1e-12)
    assert got[1.0] == pytest.approx((1 + eps) / 2, abs=1e-12)
    res2 = pushforward_tmap(phi2, rho_eps, SelectionPolicy.fixed(1))
    assert np.array_equal(res2.image.weights, res.image.weights)


def test_quadratic_support_gradient_scales_w2_exactly():
    rng = np.random.default_rng(11)
    for trial in range(5):
        c = rng.uniform(0.3, 2.0)
        X = rng.uniform(-0.5, 0.5, (30, 2))
        Y = rng.uniform(-0.5, 0.5, (25, 2))
        wx = rng.uniform(0.2, 1, 30)
        wy = rng.uniform(0.2, 1, 25)
        mu = DiscreteMeasure(X, wx / wx.sum(), BOX2)
        nu = DiscreteMeasure(Y, wy / wy.sum(), BOX2)
        fmu = MaxAffineFunction.from_supports(X, c * (X ** 2).sum(1) / 2, c * X)
        fnu = MaxAffineFunction.from_supports(Y, c * (Y ** 2).sum(1) / 2, c * Y)
        w_orig = wasserstein(mu, nu, 2.0)
        w_img = wasserstein(pushforward_convex(fmu, mu).image,
                            pushforward_convex(fnu, nu).image, 2.0)
        assert w_img == pytest.approx(c * w_orig, abs=1e-9 * (1 + w_img))


# ---------------------------------------------------------------------------
# potentials fitted from discrete transport
# ---------------------------------------------------------------------------

def test_fitted_potential_two_point_target():
    box01 = Domain.box([0.0], [1.0])
    rho01 = GridDensity.uniform(box01, 1000)
    mu2 = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]), box01)
    fmu = potential_from_discrete_ot(rho01, mu2)
    res = pushforward_convex(fmu, rho01)
    assert res.singular_hits == 0
    assert np.array_equal(res.image.points.ravel(), [0.0, 1.0])
    assert np.abs(res.image.weights - 0.5).max() < 1e-12
    g = fmu.gradient(np.array([[0.25], [0.75]]))
    assert g[0, 0] == 0.0 and g[1, 0] == 1.0
    with pytest.raises(ValueError):
        potential_from_discrete_ot(rho01, mu2, p=3.0)


def test_fitted_potential_dirac_target():
    box01 = Domain.box([0.0], [1.0])
    rho01 = GridDensity.uniform(box01, 1000)
    mud = DiscreteMeasure(np.array([[0.3]]), np.array([1.0]), box01)
    res = pushforward_convex(potential_from_discrete_ot(rho01, mud), rho01)
    assert len(res.image) == 1 and res.image.points[0, 0] == 0.3


def test_fitted_potential_roundtrip_residual():
    rng = np.random.default_rng(11)
    grid30 = GridDensity.uniform(BOX2, 30)
    K = 12
    counts = rng.multinomial(900, np.full(K, 1 / K))
    Y = rng.uniform(-0.45, 0.45, (K, 2))
    muK = DiscreteMeasure(Y, counts / 900, BOX2)
    fK = potential_from_discrete_ot(grid30, muK)
    res = pushforward_convex(fK, grid30)
    # the image support is exactly the target atoms, weights exact up to
    # float accumulation over 900 cells
    img = res.image.merged()
    order_img = np.lexsort(img.points.T)
    order_tgt = np.lexsort(muK.points.T)
    assert np.array_equal(img.points[order_img], muK.points[order_tgt])
    assert np.abs(img.weights[order_img] - muK.weights[order_tgt]).max() <= 1e-12
    # W2 amplifies an O(1e-15) mass defect to its square root, no further
    assert wasserstein(res.image, muK, 2.0) <= 1e-6


# ---------------------------------------------------------------------------
# interpolation path
# ---------------------------------------------------------------------------

def _fitted_pair(rng, grid):
    c0 = rng.multinomial(900, np.full(8, 1 / 8))
    c1 = rng.multinomial(900, np.full(9, 1 / 9))
    mu0 = DiscreteMeasure(rng.uniform(-0.45, 0.45, (8, 2)), c0 / 900, BOX2)
    mu1 = DiscreteMeasure(rng.uniform(-0.45, 0.45, (9, 2)), c1 / 900, BOX2)
    return (potential_from_discrete_ot(grid, mu0),
            potential_from_discrete_ot(grid, mu1))


def test_interpolant_endpoints_and_path():
    rng = np.random.default_rng(31)
    grid30 = GridDensity.uniform(BOX2, 30)
    f0, f1 = _fitted_pair(rng, grid30)
    m_t0 = lot_interpolant(f0, f1, 0.0, grid30)
    m_end = pushforward_convex(f0, grid30).image
    assert np.array_equal(m_t0.points, m_end.points)
    assert np.array_equal(m_t0.weights, m_end.weights)
    m_t1 = lot_interpolant(f0, f1, 1.0, grid30)
    m_other = pushforward_convex(f1, grid30).image
    assert np.array_equal(m_t1.points, m_other.points)
    # identical potentials: the path is stationary
    m_a = lot_interpolant(f0, f0, 0.3, grid30)
    m_b = lot_interpolant(f0, f0, 0.8, grid30)
    assert np.array_equal(m_a.points, m_b.points)
    assert np.array_equal(m_a.weights, m_b.weights)
    # distance from the start grows monotonically along the path
    ds = [wasserstein(lot_interpolant(f0, f1, t, grid30), m_end, 2.0)
          for t in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(ds[k] <= ds[k + 1] + 1e-12 for k in range(4))
    with pytest.raises(ValueError):
        lot_interpolant(f0, f1, 1.2, grid30)
    with pytest.raises(ValueError):
        lot_interpolant(f0, f1, -0.1, grid30)


# ---------------------------------------------------------------------------
# conservation laws
# ---------------------------------------------------------------------------

def test_mass_conservation_and_containment():
    rng = np.random.default_rng(41)
    dom = Domain.ball(np.zeros(2), 1.0)
    grid = GridDensity.uniform(dom, 24)
    for trial in range(5):
        k = int(rng.integers(3, 7))
        atoms = rng.uniform(-0.5, 0.5, (k, 2))
        atoms = atoms[np.linalg.norm(atoms, axis=1) <= 0.6]
        if len(atoms) < 2:
            continue
        phi = CConcavePotential(atoms, rng.uniform(-0.02, 0.02, len(atoms)),
                                2.0, 1.0)
        res = pushforward_tmap(phi, grid)
        assert res.image.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert (np.linalg.norm(res.image.points, axis=1) <= 1.0 + 1e-8).all()
