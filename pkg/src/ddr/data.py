"""Datasets: the synthetic S-shaped surface, CSV ingestion and min-max scaling.

Storage is column-per-sample: ``values`` has shape ``(d, N)``. CSV files are
row-per-sample and are transposed on the way in and out.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import CSVParseError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinMaxScaling:
    """Per-feature affine map ``x -> lower + (x - data_min) * scale``."""

    lower: float
    upper: float
    data_min: np.ndarray
    data_max: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.data_max == self.data_min

    @property
    def scale(self) -> np.ndarray:
        span = np.where(self.degenerate, 1.0, self.data_max - self.data_min)
        return np.where(self.degenerate, 0.0, (self.upper - self.lower) / span)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.lower + (values - self.data_min[:, None]) * self.scale[:, None]

    def invert(self, values: np.ndarray) -> np.ndarray:
        """Undo the scaling. Constant features come back as their original value."""
        safe = np.where(self.degenerate, 1.0, self.scale)
        out = self.data_min[:, None] + (values - self.lower) / safe[:, None]
        return np.where(self.degenerate[:, None], self.data_min[:, None], out)


@dataclass(frozen=True)
class DatasetMatrix:
    values: np.ndarray
    feature_names: tuple[str, ...] = ()
    normalization: MinMaxScaling | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise InvalidInputError(f"dataset must be 2-D (d, N), got shape {values.shape}")
        if values.shape[1] < 1 or values.shape[0] < 1:
            raise InvalidInputError("dataset needs at least one feature and one sample")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("dataset contains non-finite values")
        if self.feature_names and len(self.feature_names) != values.shape[0]:
            raise InvalidInputError(
                f"{len(self.feature_names)} feature names for {values.shape[0]} features"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_samples(cls, samples, **kwargs) -> "DatasetMatrix":
        """Build from a row-per-sample array of shape ``(N, d)``."""
        return cls(np.asarray(samples, dtype=float).T, **kwargs)

    def samples(self) -> np.ndarray:
        return self.values.T

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


def as_matrix(X) -> np.ndarray:
    """Column-per-sample float array from a DatasetMatrix or array-like."""
    if isinstance(X, DatasetMatrix):
        return X.values
    values = np.asarray(X, dtype=float)
    if values.ndim != 2:
        raise InvalidInputError(f"expected a (d, N) matrix, got shape {values.shape}")
    return values


# ---------------------------------------------------------------------------
# S-shaped surface


def sdata_field(Z: np.ndarray) -> np.ndarray:
    """Generator field z1' = 2 z3^3, z2' = 0, z3' = -2 z1^3 on columns of ``Z``."""
    out = np.zeros_like(Z)
    out[0] = 2.0 * Z[2] ** 3
    out[2] = -2.0 * Z[0] ** 3
    return out


def sdata_initial_conditions(grid_pts: int = 20) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, grid_pts)
    z1, z2 = np.meshgrid(axis, axis)
    return np.stack([z1.ravel(), z2.ravel(), np.zeros(grid_pts * grid_pts)])


def gen_sdata(grid_pts: int = 20, grid=None, method: str = "rk4", step: float = 1e-3,
              return_trajectories: bool = False):
    """Generate the S-shaped dataset in R^3.

    Initial conditions are a ``grid_pts x grid_pts`` mesh on ``[-1, 1]^2`` in
    (z1, z2) with z3 = 0, integrated to ``grid.T`` (default 1).

    ``method="rk4"`` uses classical fourth-order Runge-Kutta with ``step``.
    ``method="euler"`` uses forward Euler with the grid's own ``dt``, i.e. the
    same integrator the model uses.

    With ``return_trajectories`` the states at every step are returned as a
    second value with shape ``(N, n_steps + 1, 3)``.
    """
    from .dynamics import TimeGrid  # dynamics imports this module

    if grid_pts < 2:
        raise InvalidInputError(f"grid_pts must be >= 2, got {grid_pts}")
    grid = grid if grid is not None else TimeGrid()
    Z = sdata_initial_conditions(grid_pts)

    if method == "rk4":
        n_steps = int(round(grid.T / step))
        if n_steps < 1 or abs(n_steps * step - grid.T) > 1e-12:
            raise InvalidInputError(f"step {step} does not divide T={grid.T}")
        h = step
    elif method == "euler":
        n_steps, h = grid.M, grid.dt
    else:
        raise InvalidInputError(f"unknown method {method!r}")

    traj = [Z.T.copy()] if return_trajectories else None
    for _ in range(n_steps):
        if method == "rk4":
            k1 = sdata_field(Z)
            k2 = sdata_field(Z + 0.5 * h * k1)
            k3 = sdata_field(Z + 0.5 * h * k2)
            k4 = sdata_field(Z + h * k3)
            Z = Z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            Z = Z + h * sdata_field(Z)
        if traj is not None:
            traj.append(Z.T.copy())

    X = DatasetMatrix(Z, feature_names=("z1", "z2", "z3"),
                      metadata={"generator": "sdata", "grid_pts": grid_pts, "method": method})
    if return_trajectories:
        return X, np.stack(traj, axis=1)
    return X


# ---------------------------------------------------------------------------
# CSV


def minmax_scale(X: DatasetMatrix, lower: float = 0.0, upper: float = 1.0) -> DatasetMatrix:
    """Scale every feature to ``[lower, upper]``; constant features map to ``lower``."""
    if not upper > lower:
        raise InvalidInputError(f"need upper > lower, got [{lower}, {upper}]")
    values = X.values
    scaling = MinMaxScaling(float(lower), float(upper), values.min(axis=1), values.max(axis=1))
    if np.any(scaling.degenerate):
        logger.warning("constant feature(s) %s mapped to %g (degenerate range)",
                       np.flatnonzero(scaling.degenerate).tolist(), lower)
    return replace(X, values=scaling.apply(values), normalization=scaling)


def _parse_normalize(normalize):
    if normalize in (None, "none"):
        return None
    if isinstance(normalize, tuple):
        return normalize
    text = str(normalize)
    if text == "minmax":
        return (0.0, 1.0)
    if text.startswith("minmax"):
        inner = text[len("minmax"):].strip("():")
        a, b = (float(v) for v in inner.split(","))
        return (a, b)
    raise InvalidInputError(f"unknown normalization {normalize!r}")


def load_csv(path, has_header: bool = False, delimiter: str = ",", normalize=None) -> DatasetMatrix:
    """Read a row-per-sample numeric CSV into a column-per-sample dataset.

    ``normalize`` may be ``None``/``"none"``, ``"minmax"`` (to [0, 1]),
    ``"minmax(a,b)"`` or a tuple ``(a, b)``.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    names: tuple[str, ...] = ()
    rows = []
    width = None
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if has_header and not names and not rows:
            names = tuple(cell.strip() for cell in row)
            width = len(names)
            continue
        if width is None:
            width = len(row)
        if len(row) != width:
            raise CSVParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}",
                                row=lineno)
        parsed = []
        for col, cell in enumerate(row, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise CSVParseError(f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}",
                                    row=lineno, column=col) from None
        rows.append(parsed)
    if not rows:
        raise CSVParseError(f"{path}: no data rows")
    X = DatasetMatrix(np.array(rows, dtype=float).T, feature_names=names,
                      metadata={"source": os.fspath(path)})
    bounds = _parse_normalize(normalize)
    if bounds is not None:
        X = minmax_scale(X, *bounds)
    return X


def save_csv(X, path, feature_names=None) -> None:
    """Write row-per-sample CSV with shortest round-trip float formatting."""
    if isinstance(X, DatasetMatrix):
        names = X.feature_names if feature_names is None else tuple(feature_names)
        values = X.values
    else:
        values = as_matrix(X)
        names = tuple(feature_names or ())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if names:
            writer.writerow(names)
        for sample in values.T:
            writer.writerow([repr(float(v)) for v in sample])
