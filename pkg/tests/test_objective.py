import math

import numpy as np
import pytest

from ddr.dictionary import DictionarySpec
from ddr.dynamics import TimeGrid, solve_forward
from ddr.exceptions import InvalidInputError
from ddr.objective import evaluate, kinetic_energy, projection_residual, residual


def test_zero_field_reduces_to_projection_residual():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 8))
    Q = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    spec = DictionarySpec(3)
    r = evaluate(np.zeros((3, spec.d_n)), Q, spec, X, mu=0.5)
    assert r.J1 == pytest.approx(np.mean(X[2] ** 2), rel=1e-14)
    assert r.J2 == 0.0 and r.J == r.J1 and r.N == 8


def test_scalar_linear_kinetic_energy_closed_form():
    # h' = a h, h(0) = 1: (1/T) int_0^T (a h)^2 dt = a (e^{2a} - 1) / 2 at T = 1
    a = 0.1
    exact = a * (math.exp(2 * a) - 1) / 2
    assert exact == pytest.approx(0.011070, abs=1e-6)
    spec = DictionarySpec(1, (1,))
    for dt, tol in ((0.01, 1e-2), (0.001, 1e-3)):
        grid = TimeGrid(1, dt)
        traj = solve_forward(np.array([[a]]), spec, [[1.0]], grid)
        assert kinetic_energy(np.array([[a]]), spec, traj, grid) == pytest.approx(exact, rel=tol)


def test_kinetic_energy_uses_left_nodes_and_time_average():
    spec = DictionarySpec(1, (1,))
    grid = TimeGrid(2.0, 0.5)
    beta = np.array([[-0.5]])
    traj = solve_forward(beta, spec, [[1.0, 2.0]], grid)
    h = traj.h[:, :-1, 0]
    manual = np.sum((beta[0, 0] * h) ** 2) * grid.dt / (2 * grid.T)
    assert kinetic_energy(beta, spec, traj, grid) == pytest.approx(manual, rel=1e-14)


def test_projection_residual_definition():
    rng = np.random.default_rng(1)
    H = rng.normal(size=(4, 6))
    Q = np.linalg.qr(rng.normal(size=(4, 2)))[0].T
    manual = np.mean([np.sum((h - Q.T @ Q @ h) ** 2) for h in H.T])
    assert projection_residual(H, Q) == pytest.approx(manual, rel=1e-13)


def test_residual_rejects_non_orthonormal_q():
    spec = DictionarySpec(2)
    traj = solve_forward(np.zeros((2, spec.d_n)), spec, np.ones((2, 2)))
    with pytest.raises(InvalidInputError):
        residual(traj, np.array([[2.0, 0.0]]))


def test_report_as_dict():
    spec = DictionarySpec(1, (1,))
    r = evaluate(np.array([[0.0]]), np.array([[1.0]]), spec, [[1.0]])
    assert r.as_dict() == {"J1": 0.0, "J2": 0.0, "J": 0.0, "N": 1, "mu": 0.0}
