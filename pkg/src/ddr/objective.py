"""Projection residual, kinetic energy and the combined objective."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dictionary import DictionarySpec, evaluate_batch
from .dynamics import DEFAULT_CLIP, TimeGrid, TrajectoryBatch, check_orthonormal_rows, solve_forward


@dataclass(frozen=True)
class ObjectiveReport:
    J1: float
    J2: float
    J: float
    N: int
    mu: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def projection_residual(H: np.ndarray, Q: np.ndarray) -> float:
    """``(1/N) ||(I - Q^T Q) H||_F^2`` for a ``(d, N)`` matrix ``H``."""
    R = H - Q.T @ (Q @ H)
    return float(np.sum(R * R) / H.shape[1])


def residual(traj: TrajectoryBatch, Q) -> float:
    """Mean squared distance of the final states from the row space of ``Q``."""
    Q = check_orthonormal_rows(Q)
    return projection_residual(traj.final, Q)


def kinetic_energy(beta, spec: DictionarySpec, traj: TrajectoryBatch, grid: TimeGrid) -> float:
    """Mean time-averaged kinetic energy ``(1/(N T)) sum_i int_0^T ||beta xi(h_i)||^2 dt``.

    Left-Riemann sum over the Euler nodes ``t_0 .. t_{M-1}``. The ``1/T``
    keeps the value consistent with the adjoint gradient for ``T != 1``.
    """
    beta = np.asarray(beta, dtype=float)
    N, Mp1, d = traj.h.shape
    Xi = node_values(spec, traj)[:, : Mp1 - 1, :]
    V = Xi @ beta.T
    return float(np.sum(V * V)) * grid.dt / (N * grid.T)


def node_values(spec: DictionarySpec, traj: TrajectoryBatch) -> np.ndarray:
    """Dictionary values at every trajectory node, shape ``(N, M + 1, d_n)``."""
    if traj.xi is not None:
        return traj.xi
    N, Mp1, d = traj.h.shape
    return evaluate_batch(spec, traj.h.reshape(-1, d)).reshape(N, Mp1, spec.d_n)


def evaluate(beta, Q, spec: DictionarySpec, X, grid: TimeGrid = TimeGrid(), mu: float = 0.0,
             clip: float = DEFAULT_CLIP) -> ObjectiveReport:
    traj = solve_forward(beta, spec, X, grid, clip=clip)
    J1 = residual(traj, Q)
    J2 = kinetic_energy(beta, spec, traj, grid)
    return ObjectiveReport(J1=J1, J2=J2, J=J1 + mu * J2, N=traj.n_samples, mu=float(mu))
