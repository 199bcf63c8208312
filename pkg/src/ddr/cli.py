"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import model_io
from .data import DatasetMatrix, gen_sdata, load_csv, save_csv
from .dictionary import DictionarySpec
from .dynamics import DEFAULT_CLIP, TimeGrid, TrajectoryBatch, dump_trajectories_csv
from .exceptions import CheckpointError, CSVParseError, InvalidInputError, NumericalBlowupError, \
    TrainingBlowupError
from .gradients import compare, fd_grad, grad, random_instance
from .subspace import apply_pca_reduce, pca_embed, pca_reduce
from .training import DEFAULT_MU_LIST, TrainConfig, lcurve, lcurve_to_csv, max_curvature_mu, train

logger = logging.getLogger("ddr")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _check_out(path, force: bool):
    if path is None:
        return
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise UsageError(f"cannot write to {path}")


def _looks_like_header(path, delimiter: str) -> bool:
    with open(path, newline="") as fh:
        for row in csv.reader(fh, delimiter=delimiter):
            if not row:
                continue
            try:
                [float(c) for c in row]
            except ValueError:
                return True
            return False
    return False


def _read_data(args) -> DatasetMatrix:
    if args.header == "auto":
        has_header = _looks_like_header(args.data, args.delimiter)
    else:
        has_header = args.header == "yes"
    return load_csv(args.data, has_header=has_header, delimiter=args.delimiter,
                    normalize=getattr(args, "normalize", None))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if not isinstance(v, str) else v for v in row])


def _degrees(text: str) -> tuple[int, ...]:
    return DictionarySpec.from_string(1, text).degrees


def _train_config(args) -> TrainConfig:
    return TrainConfig(k=args.k, mu=args.mu, degrees=_degrees(args.degrees), epochs=args.epochs,
                       batch_size=args.batch_size, lr_start=args.lr_start, lr_end=args.lr_end,
                       seed=args.seed, grid=TimeGrid(args.T, args.dt), init_mode=args.init,
                       init_scale=args.init_scale, clip=args.clip)


def _model_input(model, X: DatasetMatrix) -> np.ndarray:
    """Data matrix in the model's coordinates (applies a stored PCA reduction)."""
    basis = model.provenance.get("pca_reduce_basis")
    if basis is None:
        return X.values
    if X.d != basis.shape[0]:
        raise InvalidInputError(f"data has {X.d} features, stored reduction expects {basis.shape[0]}")
    return apply_pca_reduce(X.values, model.provenance["pca_reduce_mean"], basis)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_sdata(args):
    _check_out(args.out, args.force)
    result = gen_sdata(args.grid_pts, TimeGrid(args.T, args.dt), method=args.method,
                       return_trajectories=bool(args.dump_trajectories))
    X = result[0] if args.dump_trajectories else result
    save_csv(X, args.out)
    if args.dump_trajectories:
        steps = result[1].shape[1] - 1
        dump_trajectories_csv(TrajectoryBatch(h=result[1]), TimeGrid(args.T, args.T / steps),
                              args.dump_trajectories)
    print(f"wrote {X.n_samples} samples x {X.d} features to {args.out}")


def cmd_train(args):
    _check_out(args.out_model, args.force)
    _check_out(args.out_trace, args.force)
    X = _read_data(args)
    basis = mean = None
    if args.pca_reduce:
        reduced = pca_reduce(X, args.pca_reduce)
        basis, mean = reduced.metadata["pca_reduce"]["basis"], reduced.metadata["pca_reduce"]["mean"]
        X = reduced
    config = _train_config(args).validate(X.n_samples)

    def progress(epoch, record, params):
        if args.verbose and (epoch % args.log_every == 0 or epoch == config.epochs):
            print(f"epoch {epoch:5d}  J1={record.J1:.6g}  J2={record.J2:.6g}  J={record.J:.6g}  "
                  f"lr={record.lr:.4g}", file=sys.stderr)

    try:
        params, trace = train(X, config, callback=progress)
    except TrainingBlowupError as exc:
        last = exc.trace.final
        note = f"last good epoch {last.epoch}" if last is not None else "no completed epoch"
        print(f"error: {exc} ({note})", file=sys.stderr)
        return EXIT_NUMERIC
    model_io.save(params, args.out_model, pca_basis=basis, pca_mean=mean)
    if args.out_trace:
        trace.to_csv(args.out_trace)
    init, final = trace.initial, trace.final or trace.initial
    print(f"initial  J1={init.J1:.6g}  J2={init.J2:.6g}  J={init.J:.6g}")
    print(f"final    J1={final.J1:.6g}  J2={final.J2:.6g}  J={final.J:.6g}")
    return EXIT_OK


def cmd_embed(args):
    _check_out(args.out, args.force)
    model = model_io.load(args.model)
    X = _read_data(args)
    Y = model_io.encode(model, _model_input(model, X))
    save_csv(Y, args.out, feature_names=[f"y_{i + 1}" for i in range(Y.shape[0])])
    print(f"embedded {Y.shape[1]} samples into {Y.shape[0]} dimensions")
    return EXIT_OK


def cmd_decode(args):
    _check_out(args.out, args.force)
    model = model_io.load(args.model)
    if args.mesh:
        if model.k != 2:
            raise InvalidInputError(f"--mesh needs a model with k=2, got k={model.k}")
        Y = model_io.latent_mesh(args.mesh, args.mesh_lower, args.mesh_upper)
    elif args.data:
        Y = _read_data(args).values
    else:
        raise UsageError("decode needs --data or --mesh")
    result = model_io.decode(model, Y, return_status=True)
    H0 = result.values
    basis = model.provenance.get("pca_reduce_basis")
    if basis is not None:
        H0 = basis @ H0 + model.provenance["pca_reduce_mean"][:, None]
    save_csv(H0, args.out, feature_names=[f"x_{i + 1}" for i in range(H0.shape[0])])
    print(f"decoded {Y.shape[1]} points ({result.n_failed} failed)")
    return EXIT_OK


def cmd_pca(args):
    _check_out(args.out, args.force)
    X = _read_data(args)
    Q, Y, residual = pca_embed(X, args.k)
    if args.out:
        save_csv(Y, args.out, feature_names=[f"y_{i + 1}" for i in range(Y.shape[0])])
    print(f"pca residual {residual:.6g}")
    return EXIT_OK


def cmd_lcurve(args):
    _check_out(args.out, args.force)
    X = _read_data(args)
    config = _train_config(args).validate(X.n_samples)

    def progress(point):
        if args.verbose:
            print(f"mu={point.mu:g}  J1={point.J1:.6g}  J2={point.J2:.6g}", file=sys.stderr)

    points = lcurve(X, config, args.mu_list, callback=progress)
    lcurve_to_csv(points, args.out)
    try:
        print(f"max-curvature mu {max_curvature_mu(points):g}")
    except InvalidInputError as exc:
        print(f"max-curvature mu unavailable: {exc}")
    failed = [p.mu for p in points if p.error is not None]
    if failed:
        print(f"failed mu values: {failed}", file=sys.stderr)
    return EXIT_OK


def cmd_grad_check(args):
    beta, Q, spec, X = random_instance(args.seed, d=args.d, N=args.N, k=args.k,
                                       degrees=_degrees(args.degrees))
    grid = TimeGrid(args.T, args.dt)
    errors = compare(grad(beta, Q, spec, X, grid, args.mu, clip=args.clip),
                     fd_grad(beta, Q, spec, X, grid, args.mu, step=args.fd_step, clip=args.clip))
    for name, value in errors.items():
        print(f"{name} {value:.6e}")
    return EXIT_OK


def cmd_stability(args):
    _check_out(args.out, args.force)
    model = model_io.load(args.model)
    X = _model_input(model, _read_data(args))
    rows = model_io.stability_sweep(model, X, args.etas, seed=args.seed, repeats=args.repeats)
    if args.out:
        _write_rows(args.out, ["eta", "displacement"], rows)
    for eta, disp in rows:
        print(f"eta={eta:g}  displacement={disp:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="row-per-sample CSV")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto")
    p.add_argument("--delimiter", default=",")


def _add_grid(p):
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)


def _add_train(p):
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--degrees", default="0123")
    p.add_argument("--epochs", type=int, default=900)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--lr-start", type=float, default=0.01)
    p.add_argument("--lr-end", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("pca-linear", "random"), default="pca-linear")
    p.add_argument("--init-scale", type=float, default=0.2)
    p.add_argument("--clip", type=float, default=DEFAULT_CLIP)
    p.add_argument("--normalize", default=None, help="none, minmax or minmax(a,b)")
    _add_grid(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddr", description="Dimension reduction by learned flows.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on BLAS threads (fallback: DDR_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    # the same global flags are accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = add("gen-sdata", "generate the S-shaped surface dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--grid-pts", type=int, default=20)
    p.add_argument("--method", choices=("rk4", "euler"), default="rk4")
    p.add_argument("--dump-trajectories", default=None, metavar="PATTERN",
                   help="also write one CSV per sample; PATTERN contains {i}")
    p.add_argument("--force", action="store_true")
    _add_grid(p)
    p.set_defaults(func=cmd_gen_sdata)

    p = add("train", "train a model and write a checkpoint")
    _add_data(p)
    _add_train(p)
    p.add_argument("--pca-reduce", type=int, default=None, metavar="D",
                   help="centre and project the data to D dimensions first")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-trace", default=None)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = add("embed", "encode data with a trained model")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = add("decode", "decode latent points by the reversed flow")
    p.add_argument("--model", required=True)
    _add_data(p, required=False)
    p.add_argument("--mesh", type=int, default=None, metavar="PTS",
                   help="decode a PTS x PTS latent mesh instead of --data")
    p.add_argument("--mesh-lower", type=float, default=-1.0)
    p.add_argument("--mesh-upper", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = add("pca", "uncentred PCA baseline")
    _add_data(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_pca)

    p = add("lcurve", "train over a list of mu and report the corner")
    _add_data(p)
    _add_train(p)
    p.add_argument("--mu-list", type=float, nargs="+", default=list(DEFAULT_MU_LIST))
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_lcurve)

    p = add("grad-check", "adjoint gradient against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--N", type=int, default=5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--degrees", default="0123")
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--clip", type=float, default=math.inf)
    _add_grid(p)
    p.set_defaults(func=cmd_grad_check)

    p = add("stability", "embedding displacement under input noise")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--etas", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_stability)
    return parser


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DDR_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"DDR_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise UsageError(f"--threads must be >= 1, got {threads}")
        limit = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
        with limit:
            code = args.func(args)
        return EXIT_OK if code is None else code
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, InvalidInputError, CSVParseError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
