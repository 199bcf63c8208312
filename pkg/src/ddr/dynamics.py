"""Forward, adjoint and time-reversed integration with forward Euler.

All samples are integrated together: states are stored as arrays of shape
``(N, M + 1, d)``. After every Euler step the new state is clamped
elementwise to ``[-clip, clip]``; pass ``clip=np.inf`` to disable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import dictionary as dic
from .data import as_matrix
from .exceptions import InvalidInputError, NumericalBlowupError, StateError

DEFAULT_CLIP = 100.0


@dataclass(frozen=True)
class TimeGrid:
    T: float = 1.0
    dt: float = 0.01

    def __post_init__(self):
        if not (self.T > 0 and self.dt > 0):
            raise InvalidInputError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        M = round(self.T / self.dt)
        if M < 1 or abs(M * self.dt - self.T) > 1e-12:
            raise InvalidInputError(f"dt={self.dt} does not divide T={self.T} into whole steps")

    @property
    def M(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt


@dataclass
class TrajectoryBatch:
    h: np.ndarray
    lam: np.ndarray | None = None
    clipped: np.ndarray | None = None
    # dictionary values at every node, (N, M + 1, d_n); filled by solve_forward
    xi: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        """Final states as a ``(d, N)`` matrix."""
        return self.h[:, -1, :].T

    @property
    def n_samples(self) -> int:
        return self.h.shape[0]


def check_orthonormal_rows(Q, atol: float = 1e-8) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2:
        raise InvalidInputError(f"Q must be a 2-D matrix, got shape {Q.shape}")
    err = np.linalg.norm(Q @ Q.T - np.eye(Q.shape[0]))
    if not err <= atol:
        raise InvalidInputError(f"Q rows are not orthonormal (||QQ^T - I||_F = {err:.3e})")
    return Q


def _check_beta(beta, spec: dic.DictionarySpec) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.d, spec.d_n):
        raise InvalidInputError(f"beta must have shape {(spec.d, spec.d_n)}, got {beta.shape}")
    return beta


def _raise_blowup(H: np.ndarray, step: int, what: str):
    bad = np.flatnonzero(~np.all(np.isfinite(H), axis=1))
    sample = int(bad[0]) if bad.size else None
    raise NumericalBlowupError(f"{what}: non-finite state for sample {sample} at step {step}",
                               sample=sample, step=step)


def _clamp(H: np.ndarray, clip: float, flags: np.ndarray) -> np.ndarray:
    if np.isinf(clip):
        return H
    over = np.abs(H) > clip
    if over.any():
        flags |= over.any(axis=1)
        np.clip(H, -clip, clip, out=H)
    return H


def velocity(beta: np.ndarray, spec: dic.DictionarySpec, H: np.ndarray) -> np.ndarray:
    """Row-wise ``beta @ xi(h_i)`` for states ``H`` of shape (n, d)."""
    return dic.evaluate_batch(spec, H) @ beta.T


def solve_forward(beta, spec: dic.DictionarySpec, X, grid: TimeGrid = TimeGrid(),
                  clip: float = DEFAULT_CLIP) -> TrajectoryBatch:
    """Integrate ``h' = beta xi(h)``, ``h(0) = x_i`` for every column of ``X``."""
    beta = _check_beta(beta, spec)
    X = as_matrix(X)
    if X.shape[0] != spec.d:
        raise InvalidInputError(f"data has {X.shape[0]} rows, dictionary expects d={spec.d}")
    N, M = X.shape[1], grid.M
    h = np.empty((N, M + 1, spec.d))
    xi = np.empty((N, M + 1, spec.d_n))
    h[:, 0, :] = X.T
    flags = np.zeros(N, dtype=bool)
    H = X.T.copy()
    # overflow is reported through NumericalBlowupError instead of warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(M):
            xi[:, m, :] = Xi = dic.evaluate_batch(spec, H)
            H = H + grid.dt * (Xi @ beta.T)
            if not np.isfinite(H).all():
                _raise_blowup(H, m + 1, "forward solve")
            H = _clamp(H, clip, flags)
            h[:, m + 1, :] = H
    xi[:, M, :] = dic.evaluate_batch(spec, H)
    return TrajectoryBatch(h=h, clipped=flags, xi=xi)


def adjoint_rhs(beta, spec, H, L, mu: float, T: float, Xi=None) -> np.ndarray:
    """Right-hand side of the adjoint ODE, row-wise for states ``H`` and multipliers ``L``.

    ``dlam/dt = grad_xi(h)^T beta^T (-lam + (2 mu / T) beta xi(h))``
    """
    if Xi is None:
        Xi = dic.evaluate_batch(spec, H)
    V = Xi @ beta.T
    W = (-L + (2.0 * mu / T) * V) @ beta
    return dic.vjp_batch(spec, H, W)


def terminal_adjoint(Q: np.ndarray, H_final: np.ndarray) -> np.ndarray:
    """``lam(T) = -2 (I - Q^T Q) h(T)`` row-wise for final states (n, d)."""
    return -2.0 * (H_final - (H_final @ Q.T) @ Q)


def solve_adjoint(beta, spec: dic.DictionarySpec, traj: TrajectoryBatch, Q, mu: float,
                  grid: TimeGrid = TimeGrid(), clip: float = DEFAULT_CLIP) -> TrajectoryBatch:
    """Integrate the adjoint equation backwards from ``T`` on the forward grid.

    Each backward step evaluates the right-hand side at the later node,
    ``lam[m] = lam[m+1] - dt * rhs(h[m+1], lam[m+1])``, reusing the stored
    forward states. Returns ``traj`` with ``lam`` filled in.
    """
    if traj is None or traj.h is None:
        raise StateError("solve_adjoint needs a forward trajectory")
    beta = _check_beta(beta, spec)
    Q = check_orthonormal_rows(Q)
    if Q.shape[1] != spec.d:
        raise InvalidInputError(f"Q has {Q.shape[1]} columns, expected {spec.d}")
    N, Mp1, _ = traj.h.shape
    if Mp1 != grid.M + 1:
        raise InvalidInputError(f"trajectory has {Mp1} nodes, grid has {grid.M + 1}")
    lam = np.empty_like(traj.h)
    flags = traj.clipped.copy() if traj.clipped is not None else np.zeros(N, dtype=bool)
    L = terminal_adjoint(Q, traj.h[:, -1, :])
    lam[:, -1, :] = L
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(grid.M - 1, -1, -1):
            Xi = traj.xi[:, m + 1, :] if traj.xi is not None else None
            L = L - grid.dt * adjoint_rhs(beta, spec, traj.h[:, m + 1, :], L, mu, grid.T, Xi)
            if not np.isfinite(L).all():
                _raise_blowup(L, m, "adjoint solve")
            L = _clamp(L, clip, flags)
            lam[:, m, :] = L
    traj.lam = lam
    traj.clipped = flags
    return traj


def solve_reverse(beta, spec: dic.DictionarySpec, hT, grid: TimeGrid = TimeGrid(),
                  clip: float = DEFAULT_CLIP) -> np.ndarray:
    """Integrate ``h' = beta xi(h)`` backwards from ``h(T) = hT`` and return ``h(0)``.

    ``hT`` is a single state (length d) or a ``(d, N)`` matrix of final states.
    """
    beta = _check_beta(beta, spec)
    hT = np.asarray(hT, dtype=float)
    single = hT.ndim == 1
    H = (hT[None, :] if single else hT.T).copy()
    if H.shape[1] != spec.d:
        raise InvalidInputError(f"final state has dimension {H.shape[1]}, expected {spec.d}")
    if not np.isfinite(H).all():
        raise InvalidInputError("final state is not finite")
    flags = np.zeros(H.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(grid.M):
            H = H - grid.dt * velocity(beta, spec, H)
            if not np.isfinite(H).all():
                _raise_blowup(H, m + 1, "reverse solve")
            H = _clamp(H, clip, flags)
    return H[0] if single else H.T


def reverse_with_status(beta, spec, HT: np.ndarray, grid: TimeGrid = TimeGrid(),
                        clip: float = DEFAULT_CLIP):
    """Like :func:`solve_reverse` on a ``(d, N)`` matrix but never raises on blowup.

    Returns ``(H0, ok)``; failed columns hold NaN and ``ok`` is False there.
    """
    beta = _check_beta(beta, spec)
    H = np.asarray(HT, dtype=float).T.copy()
    ok = np.all(np.isfinite(H), axis=1)
    flags = np.zeros(H.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(grid.M):
            H = H - grid.dt * velocity(beta, spec, H)
            ok &= np.all(np.isfinite(H), axis=1)
            H[~ok] = 0.0
            H = _clamp(H, clip, flags)
    H[~ok] = np.nan
    return H.T, ok


def dump_trajectories_csv(traj: TrajectoryBatch, grid: TimeGrid, path_pattern: str) -> list[str]:
    """Write one CSV per sample with columns ``t, h_1..h_d``.

    ``path_pattern`` must contain ``{i}``, replaced by the sample index.
    """
    if "{i}" not in path_pattern:
        raise InvalidInputError("path_pattern must contain '{i}'")
    paths = []
    d = traj.h.shape[2]
    for i in range(traj.n_samples):
        path = path_pattern.format(i=i)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"h_{j + 1}" for j in range(d)])
            for t, row in zip(grid.times, traj.h[i]):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        paths.append(path)
    return paths
