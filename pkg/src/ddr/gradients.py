"""Adjoint-method gradients of the objective and a finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import as_matrix
from .dictionary import DictionarySpec
from .dynamics import DEFAULT_CLIP, TimeGrid, TrajectoryBatch, check_orthonormal_rows, solve_adjoint, solve_forward
from .objective import kinetic_energy, node_values, projection_residual


@dataclass(frozen=True)
class GradientPair:
    g_beta: np.ndarray
    g_Q: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.g_beta.ravel(), self.g_Q.ravel()])


def grad_q(Q: np.ndarray, H_final: np.ndarray) -> np.ndarray:
    """``(1/N) sum_i 2 Q h h^T Q^T Q - 2 Q h h^T`` with ``h`` the columns of ``H_final``."""
    S = H_final @ H_final.T / H_final.shape[1]
    QS = Q @ S
    return 2.0 * QS @ Q.T @ Q - 2.0 * QS


def grad_beta_from_trajectory(beta: np.ndarray, spec: DictionarySpec, traj: TrajectoryBatch,
                              mu: float, grid: TimeGrid) -> np.ndarray:
    """Left-Riemann quadrature of ``(2 mu / T) beta xi xi^T - lam xi^T`` averaged over samples."""
    N = traj.n_samples
    Xi = node_values(spec, traj)[:, : grid.M, :]
    W = (2.0 * mu / grid.T) * (Xi @ beta.T) - traj.lam[:, : grid.M, :]
    g = np.einsum("nmi,nmj->ij", W, Xi)
    return g * (grid.dt / N)


def grad(beta, Q, spec: DictionarySpec, X, grid: TimeGrid = TimeGrid(), mu: float = 0.0,
         clip: float = DEFAULT_CLIP) -> GradientPair:
    """Gradients of ``J`` with respect to ``beta`` and ``Q`` via the adjoint equation."""
    beta = np.asarray(beta, dtype=float)
    Q = check_orthonormal_rows(Q)
    traj = solve_forward(beta, spec, X, grid, clip=clip)
    solve_adjoint(beta, spec, traj, Q, mu, grid, clip=clip)
    g_beta = grad_beta_from_trajectory(beta, spec, traj, mu, grid)
    return GradientPair(g_beta=g_beta, g_Q=grad_q(Q, traj.final))


def fd_grad(beta, Q, spec: DictionarySpec, X, grid: TimeGrid = TimeGrid(), mu: float = 0.0,
            step: float = 1e-5, clip: float = DEFAULT_CLIP) -> GradientPair:
    """Central differences of the discretized objective over every entry of ``beta`` and ``Q``.

    ``Q`` is perturbed in the ambient matrix space, so the orthonormality
    check is bypassed here.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    beta = np.array(beta, dtype=float)
    Q = np.array(Q, dtype=float)
    X = as_matrix(X)

    def J(b, q):
        traj = solve_forward(b, spec, X, grid, clip=clip)
        return projection_residual(traj.final, q) + mu * kinetic_energy(b, spec, traj, grid)

    g_beta = np.zeros_like(beta)
    for idx in np.ndindex(beta.shape):
        bp, bm = beta.copy(), beta.copy()
        bp[idx] += step
        bm[idx] -= step
        g_beta[idx] = (J(bp, Q) - J(bm, Q)) / (2 * step)

    # beta is fixed for the Q derivatives, so integrate once
    H = solve_forward(beta, spec, X, grid, clip=clip).final

    g_Q = np.zeros_like(Q)
    for idx in np.ndindex(Q.shape):
        qp, qm = Q.copy(), Q.copy()
        qp[idx] += step
        qm[idx] -= step
        g_Q[idx] = (projection_residual(H, qp) - projection_residual(H, qm)) / (2 * step)
    return GradientPair(g_beta=g_beta, g_Q=g_Q)


def compare(g: GradientPair, ref: GradientPair) -> dict:
    """Relative errors of ``g`` against ``ref`` (Frobenius and max entrywise)."""
    a, b = g.flat(), ref.flat()
    denom = np.linalg.norm(b)
    frob = float(np.linalg.norm(a - b) / denom) if denom > 0 else float(np.linalg.norm(a - b))
    scale = max(np.max(np.abs(b)), np.finfo(float).tiny)
    return {
        "frobenius_rel": frob,
        "max_entry_rel": float(np.max(np.abs(a - b)) / scale),
        "beta_frobenius_rel": float(np.linalg.norm(g.g_beta - ref.g_beta)
                                    / max(np.linalg.norm(ref.g_beta), np.finfo(float).tiny)),
        "Q_frobenius_rel": float(np.linalg.norm(g.g_Q - ref.g_Q)
                                 / max(np.linalg.norm(ref.g_Q), np.finfo(float).tiny)),
    }


def random_instance(seed: int = 0, d: int = 3, N: int = 5, k: int = 1, degrees=(0, 1, 2, 3),
                    beta_scale: float = 0.2):
    """Small reproducible gradient-check problem: returns ``(beta, Q, spec, X)``.

    Data entries are uniform on ``[-1, 1]``; ``beta`` entries are Gaussian with
    standard deviation ``beta_scale``, small enough that no clamping occurs.
    """
    rng = np.random.default_rng(seed)
    spec = DictionarySpec(d, tuple(degrees))
    X = rng.uniform(-1.0, 1.0, size=(d, N))
    beta = beta_scale * rng.standard_normal((d, spec.d_n))
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return beta, Q.T.copy(), spec, X
