"""Applying a trained model (encode, decode, stability) and checkpoint files."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .data import as_matrix
from .dictionary import DictionarySpec
from .dynamics import TimeGrid, reverse_with_status, solve_forward
from .exceptions import CheckpointError, InvalidInputError
from .training import ModelParams

FORMAT_VERSION = 1
FORMAT_NAME = "ddr-checkpoint"


def encode(m: ModelParams, X) -> np.ndarray:
    """Embed the columns of ``X``: ``Q h(T)``, shape ``(k, N)``."""
    X = as_matrix(X)
    if X.shape[0] != m.d:
        raise InvalidInputError(f"data has {X.shape[0]} features, model expects {m.d}")
    traj = solve_forward(m.beta, m.spec, X, m.grid, clip=m.clip)
    return m.Q @ traj.final


@dataclass(frozen=True)
class DecodeResult:
    values: np.ndarray
    ok: np.ndarray

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(~self.ok))


def decode(m: ModelParams, Y, return_status: bool = False):
    """Map latent points back to data space by running the flow backwards from ``Q^T y``.

    Columns that diverge are NaN. With ``return_status`` a :class:`DecodeResult`
    carrying a per-column success mask is returned instead of the bare array.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != m.k:
        raise InvalidInputError(f"latent points have {Y.shape[0]} rows, model has k={m.k}")
    H0, ok = reverse_with_status(m.beta, m.spec, m.Q.T @ Y, m.grid, clip=m.clip)
    if return_status:
        return DecodeResult(H0, ok)
    return H0


def latent_mesh(grid_pts: int = 20, lower: float = -1.0, upper: float = 1.0) -> np.ndarray:
    """Regular ``grid_pts x grid_pts`` mesh in a 2-D latent space, shape ``(2, grid_pts^2)``."""
    axis = np.linspace(lower, upper, grid_pts)
    a, b = np.meshgrid(axis, axis)
    return np.stack([a.ravel(), b.ravel()])


def lipschitz_estimate(m: ModelParams, X, n_perturb: int = 100, scale: float = 1e-3,
                       seed: int = 0) -> float:
    """Largest observed ratio ``||E(x + delta) - E(x)|| / ||delta||`` over random ``delta``."""
    X = as_matrix(X)
    rng = np.random.default_rng(seed)
    base = encode(m, X)
    worst = 0.0
    for _ in range(n_perturb):
        delta = scale * rng.standard_normal(X.shape)
        moved = encode(m, X + delta)
        ratios = np.linalg.norm(moved - base, axis=0) / np.linalg.norm(delta, axis=0)
        worst = max(worst, float(ratios.max()))
    return worst


def decoder_lipschitz_estimate(m: ModelParams, Y, n_perturb: int = 100, scale: float = 1e-3,
                               seed: int = 0) -> float:
    """Largest observed ratio ``||D(h + delta) - D(h)|| / ||delta||`` for the reversed flow.

    ``h = Q^T y`` for the columns of ``Y``; ``delta`` is a full ``d``-dimensional
    perturbation, so this bounds the reversed flow near the embedded points.
    """
    Y = np.asarray(Y, dtype=float)
    H = m.Q.T @ Y
    rng = np.random.default_rng(seed)
    base, _ = reverse_with_status(m.beta, m.spec, H, m.grid, clip=m.clip)
    worst = 0.0
    for _ in range(n_perturb):
        delta = scale * rng.standard_normal(H.shape)
        moved, _ = reverse_with_status(m.beta, m.spec, H + delta, m.grid, clip=m.clip)
        ratios = np.linalg.norm(moved - base, axis=0) / np.linalg.norm(delta, axis=0)
        worst = max(worst, float(np.nanmax(ratios)))
    return worst


def lipschitz_bound(m: ModelParams, X, margin: float = 0.0) -> float:
    """Gronwall-type bound ``exp(T ||beta||_2 L sqrt(d_n))`` on the encoder's Lipschitz constant.

    ``L`` bounds the gradient norm of each dictionary function on the box
    ``[-r, r]^d`` visited by the trajectories started from ``X`` (enlarged by
    ``margin``). Returns ``inf`` when the bound overflows.
    """
    X = as_matrix(X)
    traj = solve_forward(m.beta, m.spec, X, m.grid, clip=m.clip)
    r = float(np.max(np.abs(traj.h))) + margin
    L = max([1.0 if p == 1 else p * r ** (p - 1) for p in m.spec.degrees if p > 0] or [0.0])
    exponent = m.grid.T * np.linalg.norm(m.beta, 2) * L * math.sqrt(m.spec.d_n)
    return math.exp(exponent) if exponent < 700 else math.inf


def stability_sweep(m: ModelParams, X, etas=(0.01, 0.05, 0.1, 0.5), seed: int = 0,
                    repeats: int = 1):
    """Mean embedding displacement under entrywise Gaussian noise of each size ``eta``.

    Returns a list of ``(eta, displacement)``. Noise for every ``eta`` is the same
    standard-normal draw scaled by ``eta``, so results are comparable across
    the sweep; ``repeats`` averages over independent draws.
    """
    X = as_matrix(X)
    etas = [float(e) for e in etas]
    if any(e < 0 for e in etas):
        raise InvalidInputError("noise levels must be non-negative")
    base = encode(m, X)
    rng = np.random.default_rng(seed)
    draws = [rng.standard_normal(X.shape) for _ in range(repeats)]
    rows = []
    for eta in etas:
        total = 0.0
        for Z in draws:
            if eta == 0:
                continue
            moved = encode(m, X + eta * Z)
            total += float(np.mean(np.linalg.norm(moved - base, axis=0)))
        rows.append((eta, total / repeats))
    return rows


# ---------------------------------------------------------------------------
# Checkpoints


def _matrix_payload(A: np.ndarray) -> dict:
    A = np.asarray(A, dtype=float)
    return {"shape": list(A.shape), "data": [float(v) for v in A.ravel(order="C")]}


def _matrix_from_payload(payload: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in payload["shape"])
        data = np.array(payload["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed matrix field {name!r}: {exc}") from None
    if data.size != int(np.prod(shape)):
        raise CheckpointError(f"{name}: {data.size} values for shape {shape}")
    return data.reshape(shape)


def _json_float(x: float):
    return x if math.isfinite(x) else repr(x)


def to_payload(m: ModelParams, pca_basis=None, pca_mean=None) -> dict:
    payload = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "spec": m.spec.to_dict(),
        "beta": _matrix_payload(m.beta),
        "Q": _matrix_payload(m.Q),
        "mu": float(m.mu),
        "T": float(m.grid.T),
        "dt": float(m.grid.dt),
        "k": int(m.k),
        "clip": _json_float(float(m.clip)),
        "provenance": {k: v for k, v in m.provenance.items()
                       if isinstance(v, (str, int, float, bool)) or v is None},
    }
    if pca_basis is not None:
        payload["pca_reduce"] = {"basis": _matrix_payload(pca_basis),
                                 "mean": _matrix_payload(np.asarray(pca_mean))}
    return payload


def from_payload(payload: dict) -> ModelParams:
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise CheckpointError("not a DDR checkpoint")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    try:
        spec = DictionarySpec.from_dict(payload["spec"])
        grid = TimeGrid(float(payload["T"]), float(payload["dt"]))
        mu = float(payload["mu"])
        k = int(payload["k"])
        clip = float(payload.get("clip", 100.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from None
    beta = _matrix_from_payload(payload.get("beta", {}), "beta")
    Q = _matrix_from_payload(payload.get("Q", {}), "Q")
    if beta.shape != (spec.d, spec.d_n):
        raise CheckpointError(f"beta shape {beta.shape} does not match dictionary {(spec.d, spec.d_n)}")
    if Q.shape != (k, spec.d):
        raise CheckpointError(f"Q shape {Q.shape} does not match (k, d) = {(k, spec.d)}")
    try:
        m = ModelParams(beta=beta, Q=Q, spec=spec, mu=mu, grid=grid, clip=clip,
                        provenance=dict(payload.get("provenance", {})))
    except InvalidInputError as exc:
        raise CheckpointError(f"checkpoint failed validation: {exc}") from None
    if "pca_reduce" in payload:
        m.provenance["pca_reduce_basis"] = _matrix_from_payload(payload["pca_reduce"]["basis"], "basis")
        m.provenance["pca_reduce_mean"] = _matrix_from_payload(payload["pca_reduce"]["mean"], "mean")
    return m


def save(m: ModelParams, path, pca_basis=None, pca_mean=None) -> None:
    """Write a versioned JSON checkpoint. Floats use shortest round-trip repr."""
    if pca_basis is None and "pca_reduce_basis" in m.provenance:
        pca_basis = m.provenance["pca_reduce_basis"]
        pca_mean = m.provenance["pca_reduce_mean"]
    text = json.dumps(to_payload(m, pca_basis, pca_mean), indent=1)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def load(path) -> ModelParams:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: cannot parse checkpoint ({exc.msg} at line {exc.lineno})") from None
    return from_payload(payload)
