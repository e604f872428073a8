"""Parity between the JIT kernels and their NumPy fallbacks."""

import subprocess
import sys

import numpy as np

from otpush._kernels import (_ball_activity_2d_numpy, _ball_activity_2d_scalar,
                             _ssp_flow_numpy, _ssp_flow_scalar,
                             ball_activity_2d, boundary_probes, ssp_flow)


def _random_flow_instance(rng, n, m):
    cost = rng.uniform(0.0, 4.0, (n, m))
    supply = rng.integers(1, 30, n)
    demand = np.zeros(m, dtype=np.int64)
    remaining = int(supply.sum())
    for j in range(m - 1):
        demand[j] = rng.integers(0, remaining + 1)
        remaining -= demand[j]
    demand[m - 1] = remaining
    return cost, supply.astype(np.int64), demand


def _check_flow_optimal(cost, supply, demand, flow, u, v, status):
    assert status == 0
    assert (flow.sum(axis=1) == supply).all()
    assert (flow.sum(axis=0) == demand).all()
    assert flow.min() >= 0
    slack = cost - u[:, None] - v[None, :]
    assert slack.min() >= -1e-9 * (1.0 + np.abs(cost).max())
    active = flow > 0
    assert np.abs(slack[active]).max() <= 1e-9 * (1.0 + np.abs(cost).max())


def test_ssp_flow_scalar_numpy_parity():
    rng = np.random.default_rng(71)
    for trial in range(25):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(2, 9))
        cost, supply, demand = _random_flow_instance(rng, n, m)
        res_s = _ssp_flow_scalar(cost, supply.copy(), demand.copy(), 10_000)
        res_n = _ssp_flow_numpy(cost, supply.copy(), demand.copy(), 10_000)
        _check_flow_optimal(cost, supply, demand, *res_s)
        _check_flow_optimal(cost, supply, demand, *res_n)
        # identical primal values; plans may differ only across ties
        val_s = (res_s[0] * cost).sum()
        val_n = (res_n[0] * cost).sum()
        assert abs(val_s - val_n) <= 1e-9 * (1.0 + abs(val_s))


def test_ssp_flow_dispatch_agrees_with_both_backends():
    rng = np.random.default_rng(73)
    cost, supply, demand = _random_flow_instance(rng, 6, 5)
    flow, u, v, status = ssp_flow(cost, supply, demand, 10_000)
    _check_flow_optimal(cost, supply, demand, flow, u, v, status)
    val = (flow * cost).sum()
    ref = (_ssp_flow_scalar(cost, supply.copy(), demand.copy(), 10_000)[0]
           * cost).sum()
    assert abs(val - ref) <= 1e-9 * (1.0 + abs(ref))


def test_ssp_flow_iteration_cap_status():
    rng = np.random.default_rng(77)
    cost, supply, demand = _random_flow_instance(rng, 5, 5)
    *_, status = _ssp_flow_numpy(cost, supply.copy(), demand.copy(), 1)
    assert status == 1


def test_ball_activity_parity():
    rng = np.random.default_rng(79)
    probes = boundary_probes(2)
    for trial in range(20):
        k = int(rng.integers(2, 8))
        slopes = rng.normal(size=(k, 2))
        intercepts = rng.normal(scale=0.3, size=k)
        points = rng.uniform(-1, 1, (40, 2))
        eta = float(rng.uniform(0.02, 0.4))
        out_s = _ball_activity_2d_scalar(slopes, intercepts, points, eta,
                                         probes, 1e-12)
        out_n = _ball_activity_2d_numpy(slopes, intercepts, points, eta,
                                        probes, 1e-12)
        for a, b in zip(out_s, out_n):
            assert np.array_equal(a, b)
        lo, hi, _ = out_s
        assert (lo <= hi + 1e-15).all()


def test_ball_activity_dispatch():
    probes = boundary_probes(2)
    slopes = np.array([[1.0, 0.0], [-1.0, 0.0]])
    intercepts = np.zeros(2)
    pts = np.array([[0.0, 0.0], [3.0, 0.0]])
    lo, hi, amb = ball_activity_2d(slopes, intercepts, pts, 0.1, probes, 1e-12)
    # both pieces active at the origin kink: exact diameter 2
    assert lo[0] == hi[0] == 4.0
    assert not amb[0]
    # far from the kink only one piece is active
    assert lo[1] == hi[1] == 0.0


def test_boundary_probes_shapes():
    p1 = boundary_probes(1)
    assert p1.shape == (3, 1)
    p2 = boundary_probes(2, count=12)
    assert p2.shape == (13, 2)
    norms = np.linalg.norm(p2[1:], axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_numpy_fallback_selected_by_env_flag():
    code = (
        "import os; os.environ['OTPUSH_NUMBA'] = '0';"
        "from otpush import _kernels as K;"
        "assert not K.USE_NUMBA;"
        "assert K.ssp_flow.__qualname__ == 'ssp_flow';"
        "import numpy as np;"
        "cost = np.array([[1.0, 2.0], [2.0, 1.0]]);"
        "flow, u, v, s = K.ssp_flow(cost, np.array([3, 3]), np.array([3, 3]), 100);"
        "assert s == 0 and (flow == np.array([[3, 0], [0, 3]])).all()"
    )
    subprocess.run([sys.executable, "-c", code], check=True)
