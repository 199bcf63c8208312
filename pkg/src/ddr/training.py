"""Alternating optimisation of the flow coefficients and the projection.

Each batch step integrates the flow forward, replaces ``Q`` by the exact
optimum for the batch's final states, integrates the adjoint backward with
that ``Q`` and takes one ADAM step on ``beta``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import as_matrix
from .dictionary import DictionarySpec
from .dynamics import DEFAULT_CLIP, TimeGrid, check_orthonormal_rows, solve_adjoint, solve_forward
from .exceptions import InvalidInputError, NumericalBlowupError, TrainingBlowupError
from .gradients import grad_beta_from_trajectory
from .objective import ObjectiveReport, evaluate, kinetic_energy
from .subspace import DegenerateSubspaceWarning, solve_q, svd

logger = logging.getLogger(__name__)

DEFAULT_MU_LIST = (5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 1.5, 2.0)


# ---------------------------------------------------------------------------
# Scale of the linear initialiser


def mu_of_epsilon(eps, T: float = 1.0):
    """Regularisation weight paired with decay factor ``eps`` by

    ``mu(eps) = (4 eps^2 log eps + 4 eps^2 T^2) / (1 - eps^2)``.

    This relation defines :func:`epsilon_star`. It is not the condition for
    ``(A_eps, U_k^T)`` to be stationary; that one is :func:`stationary_mu`.
    """
    eps = np.asarray(eps, dtype=float)
    return (4 * eps**2 * np.log(eps) + 4 * eps**2 * T**2) / (1 - eps**2)


def _bisect(fun, lo: float, hi: float, target: float, tol: float = 1e-12) -> float:
    """Root of increasing ``fun(x) = target`` on ``[lo, hi)``."""
    if fun(lo) >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fun(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def epsilon_star(mu: float, T: float = 1.0) -> float:
    """Invert :func:`mu_of_epsilon` by bisection (to 1e-12).

    For ``T = 1`` the root lies in ``[1/e, 1)`` and ``epsilon_star(0) = 1/e``.
    For ``T > 1`` the search starts at ``exp(-T^2)`` where the relation crosses 0.
    """
    if mu < 0:
        raise InvalidInputError(f"mu must be >= 0, got {mu}")
    if T < 1:
        raise InvalidInputError(f"the relation is only monotone for T >= 1, got T={T}")
    return _bisect(lambda e: float(mu_of_epsilon(e, T)), math.exp(-T * T), 1.0, mu)


EXPANSION_C1 = 4 * math.e / (math.e**2 - 1)
EXPANSION_C2 = 2 * (math.e**2 + 3 * math.e**4) / (math.e**2 - 1) ** 2


def epsilon_star_approx(mu: float) -> float:
    """Root of the second-order expansion ``c1 x + c2 x^2 = mu`` about ``eps = 1/e`` (T = 1)."""
    if mu < 0:
        raise InvalidInputError(f"mu must be >= 0, got {mu}")
    c1, c2 = EXPANSION_C1, EXPANSION_C2
    return math.exp(-1) + (-c1 + math.sqrt(c1 * c1 + 4 * c2 * mu)) / (2 * c2)


def linear_family_objective(eps: float, mu: float, tail: float, T: float = 1.0) -> float:
    """Continuous-time objective of ``(A_eps, U_k^T)`` for a linear dictionary.

    ``tail`` is the PCA residual ``(1/N) sum_{j>k} sigma_j^2``. With
    ``h(t) = eps^(t/T)`` along discarded directions,
    ``J = tail * (eps^2 + mu log(eps) (eps^2 - 1) / (2 T^2))``.
    """
    return tail * (eps**2 + mu * math.log(eps) * (eps**2 - 1) / (2 * T * T))


def stationary_mu(eps, T: float = 1.0):
    """Weight ``mu`` at which ``A_eps`` zeroes the adjoint beta-gradient:
    ``mu = 4 T^2 eps^2 / (1 - eps^2 - 2 eps^2 log eps)``."""
    eps = np.asarray(eps, dtype=float)
    return 4 * T * T * eps**2 / (1 - eps**2 - 2 * eps**2 * np.log(eps))


def stationary_epsilon(mu: float, T: float = 1.0) -> float:
    """Decay factor in ``(0, 1)`` at which ``(A_eps, U_k^T)`` is stationary for weight ``mu``.

    Solves ``d/d eps`` of :func:`linear_family_objective` ``= 0``, which is the
    same condition as the adjoint gradient in ``beta`` vanishing.
    """
    if mu < 0:
        raise InvalidInputError(f"mu must be >= 0, got {mu}")
    if mu == 0:
        return 0.0
    return _bisect(lambda e: float(stationary_mu(e, T)), 1e-300, 1.0, mu)


def linear_flow_matrix(U: np.ndarray, k: int, eps: float, T: float = 1.0) -> np.ndarray:
    """``(1/T) U diag(0 .. 0, log eps .. log eps) U^T`` with ``k`` zeros."""
    diag = np.zeros(U.shape[0])
    diag[k:] = math.log(eps)
    return (U * diag) @ U.T / T


# ---------------------------------------------------------------------------
# Optimiser


class Adam:
    def __init__(self, shape, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param: np.ndarray, g: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_schedule(epoch: int, epochs: int, lr_start: float, lr_end: float) -> float:
    """Geometric decay from ``lr_start`` (first epoch) to ``lr_end`` (last epoch)."""
    if epochs <= 1:
        return lr_start
    return lr_start * (lr_end / lr_start) ** (epoch / (epochs - 1))


# ---------------------------------------------------------------------------
# Configuration, parameters, trace


@dataclass(frozen=True)
class TrainConfig:
    k: int = 2
    mu: float = 1e-3
    degrees: tuple[int, ...] = (0, 1, 2, 3)
    epochs: int = 900
    batch_size: int = 50
    lr_start: float = 0.01
    lr_end: float = 0.001
    seed: int = 0
    grid: TimeGrid = TimeGrid()
    init_mode: str = "pca-linear"
    init_scale: float = 0.2
    init_epsilon: str = "approx"
    clip: float = DEFAULT_CLIP

    def validate(self, n_samples: int | None = None) -> "TrainConfig":
        if not 0 < self.lr_end <= self.lr_start:
            raise InvalidInputError(f"need 0 < lr_end <= lr_start, got {self.lr_end}, {self.lr_start}")
        if self.mu < 0:
            raise InvalidInputError(f"mu must be >= 0, got {self.mu}")
        if self.epochs < 0:
            raise InvalidInputError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1 or (n_samples is not None and self.batch_size > n_samples):
            raise InvalidInputError(f"need 1 <= batch_size <= N, got {self.batch_size} (N={n_samples})")
        if self.init_mode not in ("pca-linear", "random"):
            raise InvalidInputError(f"unknown init_mode {self.init_mode!r}")
        if self.init_epsilon not in ("approx", "exact", "stationary"):
            raise InvalidInputError(f"unknown init_epsilon {self.init_epsilon!r}")
        return self


@dataclass
class ModelParams:
    beta: np.ndarray
    Q: np.ndarray
    spec: DictionarySpec
    mu: float = 1e-3
    grid: TimeGrid = TimeGrid()
    clip: float = DEFAULT_CLIP
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.Q = check_orthonormal_rows(self.Q)
        if self.beta.shape != (self.spec.d, self.spec.d_n):
            raise InvalidInputError(f"beta shape {self.beta.shape} does not match dictionary "
                                    f"{(self.spec.d, self.spec.d_n)}")
        if self.Q.shape[1] != self.spec.d:
            raise InvalidInputError(f"Q shape {self.Q.shape} does not match d={self.spec.d}")
        if not np.all(np.isfinite(self.beta)):
            raise InvalidInputError("beta is not finite")

    @property
    def k(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.spec.d

    def copy(self) -> "ModelParams":
        return replace(self, beta=self.beta.copy(), Q=self.Q.copy(), provenance=dict(self.provenance))

    def report(self, X) -> ObjectiveReport:
        return evaluate(self.beta, self.Q, self.spec, X, self.grid, self.mu, clip=self.clip)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    J1: float
    J2: float
    J: float
    lr: float
    wall_time: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)
    initial: ObjectiveReport | None = None

    def __len__(self):
        return len(self.records)

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path, include_time: bool = False) -> None:
        cols = ["epoch", "J1", "J2", "J", "lr"] + (["wall_time"] if include_time else [])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for r in self.records:
                writer.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in cols[1:]])


# ---------------------------------------------------------------------------
# Initialisation and training


def _init_epsilon(config: TrainConfig) -> float:
    if config.init_epsilon == "exact":
        return epsilon_star(config.mu, config.grid.T)
    if config.init_epsilon == "stationary":
        return stationary_epsilon(config.mu, config.grid.T)
    return epsilon_star_approx(config.mu)


def init_params(X, config: TrainConfig) -> ModelParams:
    """Initial ``(beta, Q)`` for training.

    ``pca-linear``: the linear block of ``beta`` is the PCA-aligned decay flow
    ``(1/T) U diag(0, .., log eps*) U^T`` and ``Q = U_k^T``; every other entry
    is ``N(0, init_scale^2)``. ``random``: all of ``beta`` is Gaussian and
    ``Q`` comes from a QR factorisation of a Gaussian matrix.
    """
    X = as_matrix(X)
    config.validate()
    d = X.shape[0]
    spec = DictionarySpec(d, config.degrees)
    if not 1 <= config.k < d:
        raise InvalidInputError(f"need 1 <= k < d, got k={config.k}, d={d}")
    rng = np.random.default_rng(config.seed)
    beta = config.init_scale * rng.standard_normal((d, spec.d_n))
    if config.init_mode == "pca-linear":
        if 1 not in spec.degrees:
            raise InvalidInputError("pca-linear initialisation needs degree 1 in the dictionary")
        U = svd(X).U
        eps = _init_epsilon(config)
        beta[:, spec.block(1)] = linear_flow_matrix(U, config.k, eps, config.grid.T) if eps > 0 else 0.0
        Q = np.ascontiguousarray(U[:, : config.k].T)
    else:
        G = rng.standard_normal((d, config.k))
        Qc, R = np.linalg.qr(G)
        Q = np.ascontiguousarray((Qc * np.sign(np.diag(R))).T)
    return ModelParams(beta=beta, Q=Q, spec=spec, mu=config.mu, grid=config.grid, clip=config.clip,
                       provenance={"seed": config.seed, "init_mode": config.init_mode})


def _full_report(params: ModelParams, X: np.ndarray) -> tuple[ObjectiveReport, np.ndarray]:
    """Objective with ``Q`` refit on the full data; returns the report and that ``Q``."""
    traj = solve_forward(params.beta, params.spec, X, params.grid, clip=params.clip)
    H = traj.final
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSubspaceWarning)
        Q, tail = solve_q(H, params.k)
    J1 = tail / H.shape[1]
    J2 = kinetic_energy(params.beta, params.spec, traj, params.grid)
    return ObjectiveReport(J1=J1, J2=J2, J=J1 + params.mu * J2, N=H.shape[1], mu=params.mu), Q


def batch_step(params: ModelParams, Xb: np.ndarray, opt: Adam, lr: float) -> ModelParams:
    """One pass of the alternating update on a batch (columns of ``Xb``)."""
    traj = solve_forward(params.beta, params.spec, Xb, params.grid, clip=params.clip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSubspaceWarning)
        Q, _ = solve_q(traj.final, params.k)
    solve_adjoint(params.beta, params.spec, traj, Q, params.mu, params.grid, clip=params.clip)
    g = grad_beta_from_trajectory(params.beta, params.spec, traj, params.mu, params.grid)
    beta = opt.step(params.beta, g, lr)
    return replace(params, beta=beta, Q=Q)


def train(X, config: TrainConfig, init: ModelParams | None = None, callback=None):
    """Train on a ``(d, N)`` dataset. Returns ``(ModelParams, TrainTrace)``.

    The trace holds one full-data objective per epoch, evaluated with ``Q``
    refit on all samples. The returned parameters carry that full-data ``Q``.
    ``callback(epoch, record, params)`` is called after every epoch.
    """
    X = as_matrix(X)
    N = X.shape[1]
    config.validate(N)
    params = init.copy() if init is not None else init_params(X, config)
    params = replace(params, mu=config.mu, grid=config.grid, clip=config.clip)
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(params.beta.shape)
    trace = TrainTrace()

    try:
        trace.initial, _ = _full_report(params, X)
    except NumericalBlowupError as exc:
        raise TrainingBlowupError(f"initial parameters diverge: {exc}", last_good=None,
                                  trace=trace, epoch=0, sample=exc.sample, step=exc.step) from exc

    last_good = params.copy()
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end)
        order = rng.permutation(N)
        try:
            for start in range(0, N, config.batch_size):
                params = batch_step(params, X[:, order[start:start + config.batch_size]], opt, lr)
            report, Q_full = _full_report(params, X)
        except NumericalBlowupError as exc:
            raise TrainingBlowupError(f"training diverged in epoch {epoch + 1}: {exc}",
                                      last_good=last_good, trace=trace, epoch=epoch + 1,
                                      sample=exc.sample, step=exc.step) from exc
        if not np.all(np.isfinite(params.beta)):
            raise TrainingBlowupError(f"beta became non-finite in epoch {epoch + 1}",
                                      last_good=last_good, trace=trace, epoch=epoch + 1)
        params = replace(params, Q=Q_full)
        last_good = params.copy()
        record = EpochRecord(epoch + 1, report.J1, report.J2, report.J, lr, time.perf_counter() - t0)
        trace.records.append(record)
        if callback is not None:
            callback(epoch + 1, record, params)
        logger.debug("epoch %d J1=%.6g J2=%.6g J=%.6g lr=%.4g", epoch + 1, report.J1, report.J2,
                     report.J, lr)

    params.provenance.update({"seed": config.seed, "epochs": config.epochs,
                              "init_mode": config.init_mode,
                              "data_fingerprint": _fingerprint(X)})
    return params, trace


def _fingerprint(X: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# L-curve


@dataclass(frozen=True)
class LCurvePoint:
    mu: float
    J1: float
    J2: float
    error: str | None = None


def lcurve(X, config: TrainConfig, mu_list=DEFAULT_MU_LIST, callback=None) -> list[LCurvePoint]:
    """Train once per weight (fresh initialisation each time) and collect the final ``(J1, J2)``."""
    mu_list = list(mu_list)
    if not mu_list:
        raise InvalidInputError("mu_list is empty")
    points = []
    for mu in mu_list:
        cfg = replace(config, mu=float(mu))
        try:
            _, trace = train(X, cfg)
            last = trace.final if trace.final is not None else trace.initial
            points.append(LCurvePoint(float(mu), float(last.J1), float(last.J2)))
        except (NumericalBlowupError, InvalidInputError) as exc:
            logger.warning("L-curve point mu=%g failed: %s", mu, exc)
            points.append(LCurvePoint(float(mu), math.nan, math.nan, error=str(exc)))
        if callback is not None:
            callback(points[-1])
    return points


def curvature(x: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Signed curvature of the parametric curve ``(x(t), y(t))`` by finite differences."""
    dx, dy = np.gradient(x, t), np.gradient(y, t)
    ddx, ddy = np.gradient(dx, t), np.gradient(dy, t)
    return (dx * ddy - dy * ddx) / np.power(dx * dx + dy * dy, 1.5)


def max_curvature_mu(points) -> float:
    """Weight at the corner of the log-log L-curve.

    The curve is parametrised by ``log mu`` with ``x = log J1`` and
    ``y = log J2``; the corner is the point of largest positive curvature
    (the curve bends toward the origin there).
    """
    good = [p for p in points if p.error is None and p.J1 > 0 and p.J2 > 0]
    if len(good) < 3:
        raise InvalidInputError("need at least three successful L-curve points")
    good.sort(key=lambda p: p.mu)
    t = np.log([p.mu for p in good])
    x = np.log([p.J1 for p in good])
    y = np.log([p.J2 for p in good])
    kappa = curvature(x, y, t)
    return good[int(np.argmax(kappa))].mu


def lcurve_to_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mu", "J1", "J2"])
        for p in points:
            writer.writerow([repr(p.mu), repr(p.J1), repr(p.J2)])
