"""Domains, measures and exact 1D Wasserstein distances."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otpush.geometry_measures import (DiscreteMeasure, Domain, GridDensity,
                                      Measure1D, discretize,
                                      measure_from_json, quantile,
                                      unit_ball_volume, wasserstein_1d)

DOM = Domain.ball(np.zeros(1), 1.0)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.ball([0.0], 0.0)
    with pytest.raises(ValueError):
        Domain.box([0.0], [0.0])
    with pytest.raises(ValueError):
        Domain(kind="pyramid")
    assert Domain.ball([0.0, 0.0], 2.0).dim == 2
    assert Domain.box([0.0, 0.0], [1.0, 2.0]).dim == 2


def test_domain_contains_and_interval():
    ball = Domain.ball([0.0], 1.0)
    assert ball.contains(np.array([[0.5], [-1.0]])).all()
    assert not ball.contains(np.array([[1.1]]))[0]
    assert ball.interval() == (-1.0, 1.0)
    box = Domain.box([0.0, 0.0], [1.0, 1.0])
    assert box.contains(np.array([[0.5, 0.5]]))[0]
    with pytest.raises(ValueError):
        box.interval()


def test_domain_value_equality():
    assert Domain.ball(np.zeros(1), 1.0) == Domain.ball(np.zeros(1), 1.0)
    assert Domain.ball(np.zeros(1), 1.0) != Domain.ball(np.zeros(1), 2.0)
    assert Domain.box([0.0], [1.0]) != Domain.ball(np.zeros(1), 1.0)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0, abs=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, abs=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-14)


# ---------------------------------------------------------------------------
# discrete measures
# ---------------------------------------------------------------------------

def test_discrete_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((1, 1)), np.array([0.5]), DOM)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[2.0]]), np.ones(1), DOM)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[np.nan]]), np.ones(1), DOM)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([1.5, -0.5]), DOM)


def test_discrete_measure_merged():
    m = DiscreteMeasure(np.array([[0.5], [0.5], [-0.5]]),
                        np.array([0.25, 0.25, 0.5]), DOM)
    merged = m.merged()
    assert len(merged.points) == 2
    idx = np.argsort(merged.points[:, 0])
    assert merged.points[idx].ravel().tolist() == [-0.5, 0.5]
    assert merged.weights[idx].tolist() == [0.5, 0.5]


def test_discrete_measure_csv_deterministic(tmp_path):
    m = DiscreteMeasure(np.array([[0.25], [-0.75]]), np.array([0.5, 0.5]), DOM)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    m.to_csv(p1)
    m.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "x_1,weight"


# ---------------------------------------------------------------------------
# grid densities
# ---------------------------------------------------------------------------

def test_grid_uniform_box_70():
    g = GridDensity.uniform(Domain.box([0.0, 0.0], [1.0, 1.0]), 70)
    m = discretize(g)
    assert len(m.points) == 70 * 70
    assert np.allclose(m.weights, 1.0 / 4900.0, atol=1e-15)


def test_grid_uniform_ball_masks_outside():
    g = GridDensity.uniform(Domain.ball(np.zeros(2), 1.0), 16)
    m = discretize(g)
    assert (np.linalg.norm(m.points, axis=1) <= 1.0).all()
    assert len(m.points) < 16 * 16
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_grid_density_bound_invariant():
    for dom, res in ((Domain.box([0.0], [1.0]), 8),
                     (Domain.ball(np.zeros(2), 1.0), 12)):
        g = GridDensity.uniform(dom, res)
        assert (g.cell_masses <=
                g.density_bound * g.cell_volume * (1.0 + 1e-9)).all()
    with pytest.raises(ValueError):
        GridDensity(Domain.box([0.0], [1.0]), (2,),
                    np.array([0.9, 0.1]), density_bound=1.0)


def test_single_cell_grid_is_center_dirac():
    g = GridDensity.uniform(Domain.box([0.0, 0.0], [1.0, 1.0]), 1)
    m = discretize(g)
    assert len(m.points) == 1
    assert np.allclose(m.points[0], [0.5, 0.5])
    assert m.weights[0] == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# 1D measures and quantiles
# ---------------------------------------------------------------------------

def test_measure1d_validation():
    with pytest.raises(ValueError):
        Measure1D.from_pieces(DOM, [(-0.5, 0.5, 0.7)])  # mass != 1
    with pytest.raises(ValueError):
        Measure1D.from_pieces(DOM, [(0.5, -0.5, 1.0)])  # inverted interval
    with pytest.raises(ValueError):
        Measure1D.from_pieces(DOM, [(-0.2, 0.2, 0.5), (-0.1, 0.3, 0.5)])
    with pytest.raises(ValueError):
        Measure1D.from_pieces(DOM, [(0.5, 3.0, 1.0)])  # outside domain


def test_quantile_examples():
    assert quantile(Measure1D.dirac(DOM, 0.0), 0.5) == 0.0
    u = Measure1D.uniform(DOM, -0.5, 0.5)
    assert quantile(u, 0.25) == pytest.approx(-0.25, abs=1e-15)
    eps = 0.1
    pinched = Measure1D.lebesgue_on(
        DOM, [(-0.5, -eps / 2), (eps / 2, 0.5)], [(0.0, eps)])
    assert quantile(pinched, 0.5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        quantile(u, 1.5)
    with pytest.raises(ValueError):
        quantile(u, -0.1)


def test_quantile_right_continuous_at_atoms():
    m = Measure1D.from_pieces(DOM, (), [(0.0, 0.5), (0.75, 0.5)])
    # F(0) = 0.5; the right-continuous inverse jumps to the next atom at 0.5
    assert quantile(m, 0.5) == 0.75
    assert quantile(m, 0.499999) == 0.0
    assert quantile(m, 1.0) == 0.75


def test_quantile_scaling_of_uniform():
    wide = Measure1D.uniform(DOM, -0.8, 0.8)
    narrow = Measure1D.uniform(DOM, -0.2, 0.2)
    for u in (0.1, 0.25, 0.6, 0.9):
        assert quantile(wide, u) == pytest.approx(4.0 * quantile(narrow, u),
                                                  abs=1e-12)


# ---------------------------------------------------------------------------
# 1D Wasserstein distances
# ---------------------------------------------------------------------------

def test_w1d_block_vs_dirac():
    eps = 0.1
    rho = Measure1D.uniform(DOM, -eps / 2, eps / 2)
    assert wasserstein_1d(rho, Measure1D.dirac(DOM, 0.0), 2.0) == pytest.approx(
        eps / (2.0 * math.sqrt(3.0)), abs=1e-15)


def test_w1d_atom_pinch_value():
    eps = 0.1
    rho = Measure1D.uniform(DOM, -0.5, 0.5)
    pinched = Measure1D.lebesgue_on(
        DOM, [(-0.5, -eps / 2), (eps / 2, 0.5)], [(0.0, eps)])
    assert wasserstein_1d(rho, pinched, 2.0) == pytest.approx(
        math.sqrt(eps ** 3 / 12.0), abs=1e-15)
    assert wasserstein_1d(rho, pinched, math.inf) == pytest.approx(
        eps / 2.0, abs=1e-15)


def test_w1d_identity_and_errors():
    m = Measure1D.uniform(DOM, -0.3, 0.4)
    for r in (1.5, 2.0, 3.0, math.inf):
        assert wasserstein_1d(m, m, r) == 0.0
    with pytest.raises(ValueError):
        wasserstein_1d(m, m, 1.0)
    other = Measure1D.uniform(Domain.ball(np.zeros(1), 2.0), -0.3, 0.4)
    with pytest.raises(ValueError):
        wasserstein_1d(m, other, 2.0)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-0.4, 0.4), r=st.sampled_from([1.5, 2.0, 3.0, math.inf]))
def test_w1d_translation_equivariance(a, r):
    dom = Domain.ball(np.zeros(1), 2.0)
    m = Measure1D.from_pieces(dom, [(-0.5, -0.1, 0.4), (0.2, 0.5, 0.35)],
                              [(0.0, 0.25)])
    shifted = Measure1D.from_pieces(
        dom, [(-0.5 + a, -0.1 + a, 0.4), (0.2 + a, 0.5 + a, 0.35)],
        [(a, 0.25)])
    assert wasserstein_1d(m, shifted, r) == pytest.approx(abs(a), abs=1e-12)


def test_w1d_monotone_in_r():
    rho = Measure1D.uniform(DOM, -0.5, 0.5)
    nu = Measure1D.from_pieces(DOM, [(-0.4, 0.2, 0.7)], [(0.45, 0.3)])
    vals = [wasserstein_1d(rho, nu, r) for r in (1.5, 2.0, 3.0, 6.0, math.inf)]
    assert all(vals[i] <= vals[i + 1] + 1e-12 for i in range(len(vals) - 1))


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def test_discretize_uniform_resolution_4():
    m = discretize(Measure1D.uniform(Domain.box([0.0], [1.0]), 0.0, 1.0), 4)
    assert np.allclose(np.sort(m.points.ravel()), [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(m.weights, 0.25)


def test_discretize_keeps_atoms():
    eps = 0.1
    pinched = Measure1D.lebesgue_on(
        DOM, [(-0.5, -eps / 2), (eps / 2, 0.5)], [(0.0, eps)])
    m = discretize(pinched, 100)
    at_zero = np.isclose(m.points.ravel(), 0.0, atol=1e-15)
    assert at_zero.any()
    assert m.weights[at_zero].sum() == pytest.approx(eps, abs=1e-12)


def test_discretize_error_within_half_cell():
    rho = Measure1D.uniform(DOM, -0.5, 0.5)
    for cells in (16, 64, 256):
        m = discretize(rho, cells)
        err = wasserstein_1d(rho, Measure1D.from_discrete(m), math.inf)
        assert err <= 0.5 * (1.0 / cells) + 1e-12


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------

def test_measure_from_json_roundtrips():
    doc = {"kind": "measure1d",
           "domain": {"kind": "ball", "center": [0.0], "radius": 1.0},
           "intervals": [[-0.5, 0.5, 0.9]], "atoms": [[0.0, 0.1]]}
    m = measure_from_json(doc)
    assert isinstance(m, Measure1D)
    assert m.cdf(0.0) == pytest.approx(0.55, abs=1e-15)

    doc = {"kind": "discrete",
           "domain": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
           "points": [[0.25, 0.5], [0.75, 0.5]], "weights": [0.5, 0.5]}
    m = measure_from_json(doc)
    assert isinstance(m, DiscreteMeasure)
    assert len(m.points) == 2

    with pytest.raises(ValueError):
        measure_from_json({"kind": "nonsense"})


def test_measure_from_json_text_document():
    doc = json.loads(json.dumps({
        "kind": "grid",
        "domain": {"kind": "box", "lo": [0.0], "hi": [1.0]},
        "resolution": [4]}))
    g = measure_from_json(doc)
    assert isinstance(g, GridDensity)
    assert discretize(g).weights.sum() == pytest.approx(1.0, abs=1e-12)
