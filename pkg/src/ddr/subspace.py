"""Exact solution of the orthonormal projection subproblem, and PCA helpers.

Minimising ``(1/N) ||(I - Q^T Q) H||_F^2`` over ``k x d`` matrices with
orthonormal rows is solved by the top ``k`` left singular vectors of ``H``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import DatasetMatrix, as_matrix
from .exceptions import InvalidInputError


class DegenerateSubspaceWarning(UserWarning):
    """sigma_k == sigma_{k+1}: the optimal subspace is not unique."""


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def column_signs(U: np.ndarray) -> np.ndarray:
    """Signs that make each column's largest-magnitude entry positive.

    Ties are broken by the lowest row index (``argmax`` returns the first).
    """
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(H) -> SvdResult:
    """Thin SVD of a ``(d, N)`` matrix with the deterministic sign convention.

    ``U`` is ``d x d`` and ``V`` is ``N x d``; when ``N < d`` the missing
    singular values are zero and ``U`` is completed to an orthogonal basis.
    """
    H = as_matrix(H)
    d, N = H.shape
    U, s, Vt = np.linalg.svd(H, full_matrices=N < d)
    U = np.array(U)
    r = min(d, N)
    sv = np.zeros(d)
    sv[:r] = s
    V = np.zeros((N, d))
    V[:, :r] = Vt[:r].T
    signs = column_signs(U)
    U = U * signs
    V = V * signs
    return SvdResult(U=U, singular_values=sv, V=V)


def _check_k(k: int, d: int):
    if not 1 <= k < d:
        raise InvalidInputError(f"need 1 <= k < d, got k={k}, d={d}")


def solve_q(H_T, k: int, rtol: float = 1e-12):
    """Optimal projection for final states ``H_T`` of shape ``(d, N)``.

    Returns ``(Q, residual)`` with ``Q = U_k^T`` and ``residual`` the sum of
    the trailing squared singular values (not divided by N). A
    :class:`DegenerateSubspaceWarning` is issued when ``sigma_k`` and
    ``sigma_{k+1}`` coincide to relative tolerance ``rtol``.
    """
    H_T = as_matrix(H_T)
    if not np.all(np.isfinite(H_T)):
        raise InvalidInputError("H_T contains non-finite values")
    _check_k(k, H_T.shape[0])
    res = svd(H_T)
    s = res.singular_values
    if s[k - 1] - s[k] <= rtol * max(s[0], 1.0):
        warnings.warn(f"sigma_{k} == sigma_{k + 1} ({s[k - 1]:.6g}); minimiser is not unique",
                      DegenerateSubspaceWarning, stacklevel=2)
    Q = np.ascontiguousarray(res.U[:, :k].T)
    return Q, float(np.sum(s[k:] ** 2))


def pca_embed(X, k: int):
    """Uncentred PCA: ``(Q, Y, residual)`` with ``Y = Q X`` and residual ``(1/N) sum_{j>k} sigma_j^2``."""
    values = as_matrix(X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSubspaceWarning)
        Q, tail = solve_q(values, k)
    return Q, Q @ values, tail / values.shape[1]


def pca_reduce(X, d_target: int) -> DatasetMatrix:
    """Centre the data and project it onto its top ``d_target`` principal directions.

    The mean and basis are kept in ``metadata['pca_reduce']`` so new data can
    be mapped the same way with :func:`apply_pca_reduce`.
    """
    base = X if isinstance(X, DatasetMatrix) else DatasetMatrix(as_matrix(X))
    values = base.values
    d = values.shape[0]
    if not 1 <= d_target < d:
        raise InvalidInputError(f"need 1 <= d_target < d, got d_target={d_target}, d={d}")
    mean = values.mean(axis=1)
    centred = values - mean[:, None]
    basis = svd(centred).U[:, :d_target]
    reduced = basis.T @ centred
    meta = dict(base.metadata)
    meta["pca_reduce"] = {"mean": mean, "basis": basis}
    return DatasetMatrix(reduced, metadata=meta)


def apply_pca_reduce(X, mean: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return basis.T @ (as_matrix(X) - np.asarray(mean)[:, None])
