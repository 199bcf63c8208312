import math

import numpy as np
import pytest

from ddr.data import sdata_field
from ddr.dictionary import DictionarySpec
from ddr.dynamics import (TimeGrid, dump_trajectories_csv, reverse_with_status, solve_adjoint, solve_forward,
                          solve_reverse, terminal_adjoint)
from ddr.exceptions import InvalidInputError, NumericalBlowupError, StateError
from ddr.subspace import svd
from ddr.training import linear_flow_matrix


def cubic_decay():
    return DictionarySpec(1, (3,)), np.array([[-1.0]])


def test_grid():
    g = TimeGrid()
    assert g.M == 100 and g.times[-1] == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        TimeGrid(1.0, 0.03)
    with pytest.raises(InvalidInputError):
        TimeGrid(0.0, 0.01)


def test_zero_field_is_constant_bitwise():
    spec = DictionarySpec(3)
    X = np.random.default_rng(0).normal(size=(3, 7))
    traj = solve_forward(np.zeros((3, spec.d_n)), spec, X)
    for m in range(traj.h.shape[1]):
        np.testing.assert_array_equal(traj.h[:, m, :], X.T)
    assert not traj.clipped.any()


def test_cubic_decay_closed_form():
    # h' = -h^3, h(0) = 1 has h(t) = 1 / sqrt(1 + 2t)
    spec, beta = cubic_decay()
    hT = solve_forward(beta, spec, [[1.0]]).final[0, 0]
    assert abs(hT - 1 / math.sqrt(3)) <= 5e-3


def test_cubic_decay_reverse():
    # explicit reverse Euler from 1/sqrt(3) has an O(dt) error of about 8e-3 at dt = 0.01
    spec, beta = cubic_decay()
    h = 1 / math.sqrt(3)
    for _ in range(100):
        h += 0.01 * h**3
    h0 = solve_reverse(beta, spec, [1 / math.sqrt(3)])
    assert h0[0] == pytest.approx(h, rel=1e-13)
    assert abs(h0[0] - 1.0) <= 1e-2
    fine = solve_reverse(beta, spec, [1 / math.sqrt(3)], TimeGrid(1, 0.001))
    assert abs(fine[0] - 1.0) <= 1e-3


def test_forward_step_matches_euler_formula():
    spec = DictionarySpec(2)
    rng = np.random.default_rng(1)
    beta = 0.3 * rng.normal(size=(2, spec.d_n))
    X = rng.normal(size=(2, 3))
    traj = solve_forward(beta, spec, X, TimeGrid(0.1, 0.05))
    h = X[:, 0]
    for m in range(2):
        xi = np.concatenate([[1.0], h, h**2, h**3])
        h = h + 0.05 * beta @ xi
        np.testing.assert_allclose(traj.h[0, m + 1], h, rtol=1e-14)


def test_linear_flow_first_order_convergence():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3))
    spec = DictionarySpec(3, (1,))
    x = rng.normal(size=(3, 1))
    w, V = np.linalg.eig(A)
    exact = np.real(V @ np.diag(np.exp(w)) @ np.linalg.solve(V, x))
    errs = [np.abs(solve_forward(A, spec, x, TimeGrid(1, dt)).final - exact).max() for dt in (0.01, 0.005)]
    assert 1.5 <= errs[0] / errs[1] <= 2.5


def test_linear_family_endpoint():
    X = np.random.default_rng(3).normal(size=(4, 20))
    U = svd(X).U
    eps = 0.4
    spec = DictionarySpec(4, (1,))
    hT = solve_forward(linear_flow_matrix(U, 2, eps), spec, X).final
    expected = (U[:, :2] @ U[:, :2].T + eps * U[:, 2:] @ U[:, 2:].T) @ X
    assert np.abs(hT - expected).max() <= 0.05 * np.abs(X).max()


def test_sdata_field_euler_drift_shrinks_linearly():
    # the S-data field written as a cubic dictionary
    spec = DictionarySpec(3, (3,))
    beta = np.zeros((3, 3))
    beta[0, 2], beta[2, 0] = 2.0, -2.0
    Z0 = np.array([[0.8, -0.3], [0.0, 0.5], [0.0, 0.0]])
    np.testing.assert_allclose(beta @ Z0**3, sdata_field(Z0))

    def drift(dt):
        h = solve_forward(beta, spec, Z0, TimeGrid(1, dt), clip=np.inf).h
        inv = h[:, :, 0] ** 4 + h[:, :, 2] ** 4
        return np.abs(inv[:, -1] - inv[:, 0]).max()

    assert 1.5 <= drift(0.01) / drift(0.005) <= 2.5


def test_clipping_flags_and_bounds():
    spec = DictionarySpec(1, (1,))
    traj = solve_forward(np.array([[10.0]]), spec, [[1.0, 1e-6]], clip=100)
    assert traj.clipped.tolist() == [True, False]
    assert np.abs(traj.h).max() <= 100


def test_blowup_identifies_sample():
    spec = DictionarySpec(1, (3,))
    with pytest.raises(NumericalBlowupError) as info:
        solve_forward(np.array([[1.0]]), spec, [[0.1, 1e120]], clip=np.inf)
    assert info.value.sample == 1 and info.value.step == 1


def test_bad_shapes():
    spec = DictionarySpec(3)
    with pytest.raises(InvalidInputError):
        solve_forward(np.zeros((3, 4)), spec, np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        solve_forward(np.zeros((3, 10)), spec, np.zeros((2, 2)))


def test_adjoint_terminal_and_zero_cases():
    spec = DictionarySpec(3)
    rng = np.random.default_rng(4)
    beta = 0.2 * rng.normal(size=(3, spec.d_n))
    X = rng.normal(size=(3, 4))
    traj = solve_adjoint(beta, spec, solve_forward(beta, spec, X), np.eye(3), 0.0)
    assert np.all(traj.lam == 0)
    Q = np.array([[1.0, 0.0, 0.0]])
    traj = solve_adjoint(beta, spec, solve_forward(beta, spec, X), Q, 0.1)
    np.testing.assert_array_equal(traj.lam[:, -1], terminal_adjoint(Q, traj.h[:, -1]))


def test_adjoint_constant_for_zero_field():
    spec = DictionarySpec(2)
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    Q = np.array([[1.0, 0.0]])
    traj = solve_adjoint(np.zeros((2, spec.d_n)), spec, solve_forward(np.zeros((2, spec.d_n)), spec, X), Q, 0.0)
    expected = -2 * (X.T - (X.T @ Q.T) @ Q)
    for m in range(traj.lam.shape[1]):
        np.testing.assert_array_equal(traj.lam[:, m], expected)


def test_adjoint_linear_family_closed_form():
    X = np.random.default_rng(5).normal(size=(3, 6))
    U = svd(X).U
    k, eps, mu, T = 1, 0.5, 0.2, 1.0
    spec = DictionarySpec(3, (1,))
    beta = linear_flow_matrix(U, k, eps, T)
    grid = TimeGrid(T, 1e-3)
    traj = solve_adjoint(beta, spec, solve_forward(beta, spec, X, grid), U[:, :k].T, mu, grid)
    P = U[:, k:] @ U[:, k:].T
    le = math.log(eps)
    for m in (0, 500, 1000):
        s = grid.times[m] / T
        coef = 2 * eps ** (2 - s) + (mu * eps * le / T**2) * (eps ** (1 - s) - eps ** (-(1 - s)))
        np.testing.assert_allclose(traj.lam[:, m], -coef * (P @ X).T, atol=5e-3)


def test_adjoint_requires_forward_and_orthonormal_q():
    spec = DictionarySpec(2)
    with pytest.raises(StateError):
        solve_adjoint(np.zeros((2, spec.d_n)), spec, None, np.eye(2), 0.0)
    traj = solve_forward(np.zeros((2, spec.d_n)), spec, np.ones((2, 1)))
    with pytest.raises(InvalidInputError):
        solve_adjoint(np.zeros((2, spec.d_n)), spec, traj, np.array([[1.0, 1.0]]), 0.0)


def test_reverse_zero_field_and_roundtrip_order():
    spec = DictionarySpec(2)
    hT = np.array([0.3, -0.2])
    np.testing.assert_array_equal(solve_reverse(np.zeros((2, spec.d_n)), spec, hT), hT)
    beta = 0.3 * np.random.default_rng(6).normal(size=(2, spec.d_n))
    X = np.random.default_rng(7).normal(size=(2, 5)) * 0.5

    def err(dt):
        grid = TimeGrid(1, dt)
        return np.abs(solve_reverse(beta, spec, solve_forward(beta, spec, X, grid).final, grid) - X).max()

    ratio = err(0.01) / err(0.001)
    assert 5 <= ratio <= 20


def test_reverse_with_status_marks_failures():
    spec = DictionarySpec(1, (3,))
    H0, ok = reverse_with_status(np.array([[-1.0]]), spec, np.array([[0.5, 1e200]]), clip=np.inf)
    assert ok.tolist() == [True, False]
    assert np.isfinite(H0[0, 0]) and np.isnan(H0[0, 1])
    with pytest.raises(InvalidInputError):
        solve_reverse(np.array([[-1.0]]), spec, [np.inf])


def test_trajectory_dump(tmp_path):
    spec = DictionarySpec(1, (1,))
    grid = TimeGrid(1, 0.5)
    traj = solve_forward(np.array([[-1.0]]), spec, [[1.0, 2.0]], grid)
    paths = dump_trajectories_csv(traj, grid, str(tmp_path / "traj_{i}.csv"))
    lines = open(paths[1]).read().splitlines()
    assert lines[0] == "t,h_1" and lines[1] == "0.0,2.0" and len(lines) == 4
    with pytest.raises(InvalidInputError):
        dump_trajectories_csv(traj, grid, str(tmp_path / "x.csv"))
