"""Command-line interface: simulate, fit, predict, cv, benchmark and replay.

Every run writes a ``run_manifest.json`` next to its outputs recording the
resolved configuration, seeds, file hashes and timings. Exit codes: 0 on
success, 1 for usage errors, 2 for invalid data, 3 for solver failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .admm import AdmmConfig, admm_fit
from .core import (NetworkSample, ValidationError, block_expand, load_sample, read_labels,
                   save_sample, standardize, write_labels, write_matrix)
from .evaluate import (METHODS, CvPlan, LinearNetworkModel, accuracy, benchmark_sweep,
                       cross_validate, relative_mse)
from .losses import LossSpec, PenaltySpec, SolverError, fit_restricted
from .simulate import Sec5Design, generate_sec5
from .spectral import sigma_ay, spectral_init

logger = logging.getLogger("supcomm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
THREADS_ENV = "SUPCOMM_THREADS"
LOSSES = {"ls": "least_squares", "logistic": "logistic"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file() and f.name != "run_manifest.json":
                    out[str(f)] = _sha256(f)
        elif p.is_file():
            out[str(p)] = _sha256(p)
    return out


def write_run_manifest(path, args, argv, inputs, outputs, started, seeds):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "inputs": _hash_tree(inputs),
        "outputs": _hash_tree(outputs),
        "timings": {"wall_seconds": time.perf_counter() - started},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _loss(args, sample):
    kind = LOSSES[args.loss]
    if kind == "logistic" and sample.task != "classification":
        sample = NetworkSample(sample.adjacency, sample.responses, task="classification",
                               meta=sample.meta)
    if kind == "least_squares" and sample.task != "regression":
        raise ValidationError("least squares needs a regression sample; use --loss logistic")
    return LossSpec(kind), sample


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args, argv, started):
    design = Sec5Design(n=args.n, K=args.k, s=args.s, t=args.t, sigma=args.sigma,
                        N=args.num_networks, seed=args.seed)
    if not 0 <= args.label_noise <= 0.5:
        raise ValidationError("--label-noise must be in [0, 0.5]")
    sample, labels, B = generate_sec5(design, task=args.task, label_noise=args.label_noise)
    out = _out_dir(args)
    save_sample(sample, out)
    write_labels(out / "labels_true.csv", labels)
    write_matrix(out / "B_true.csv", B)
    write_run_manifest(out / "run_manifest.json", args, argv, [], [out], started,
                       {"seed": args.seed})
    print(f"wrote {sample.n_samples} networks on {sample.n_nodes} nodes to {out}")


def _fit_config(args):
    if args.rho_grid is not None and not args.rho_grid:
        raise UsageError("--rho-grid is empty")
    return AdmmConfig(rho_grid=tuple(args.rho_grid or AdmmConfig.rho_grid), tol=args.tol,
                      max_iter=args.max_iter, n_init=args.n_init, seed=args.seed)


def cmd_fit(args, argv, started):
    sample = load_sample(args.data)
    loss, sample = _loss(args, sample)
    gamma = args.gamma if args.gamma is not None else (1e-5 if loss.kind == "logistic" else 0.0)
    penalty = PenaltySpec(args.lam, gamma)
    K = args.k
    if not 1 <= K <= sample.n_nodes:
        raise ValidationError(f"--k must be in [1, {sample.n_nodes}], got {K}")
    cfg = _fit_config(args)
    std = standardize(sample)
    inputs = [args.data]
    if args.init == "spectral":
        init = None
    elif args.init.startswith("file:"):
        path = args.init[len("file:"):]
        init = read_labels(path)
        inputs.append(path)
        if init.size != sample.n_nodes or init.max() >= K:
            raise ValidationError(f"{path}: need {sample.n_nodes} labels in 1..{K}")
    else:
        raise UsageError("--init must be 'spectral' or 'file:<labels.csv>'")
    if args.no_admm:
        labels = spectral_init(std, K, n_init=args.n_init, seed=args.seed) if init is None else init
        C, b, info = fit_restricted(std, labels, K, loss, penalty)
        diagnostics = {"admm": False, "objective": info["objective"]}
    else:
        fit = admm_fit(std, K, loss, penalty, cfg, init_labels=init)
        labels, C, b = fit.labels, fit.C, fit.intercept
        diagnostics = {"admm": True, **fit.diagnostics()}
    B = block_expand(labels, C)
    model = LinearNetworkModel(B, b, std, labels, C)
    pred = model.predict(sample.adjacency)
    if loss.kind == "least_squares":
        in_sample = {"relative_mse": relative_mse(sample.responses, pred)}
    else:
        in_sample = {"accuracy": accuracy(sample.responses, pred)}
    out = _out_dir(args)
    write_labels(out / "labels.csv", labels)
    write_matrix(out / "C.csv", C)
    write_matrix(out / "B.csv", B)
    if args.dump_sigma:
        write_matrix(out / "sigma_ay.csv", sigma_ay(std))
    _write_json(out / "fit.json", {
        "n": sample.n_nodes, "k": K, "task": sample.task, "loss": loss.kind,
        "lambda": args.lam, "gamma": gamma,
        "labels": (labels + 1).tolist(), "C": C, "intercept": b,
        "in_sample": in_sample,
        "standardization": {"edge_means": std.edge_means, "edge_sds": std.edge_sds,
                            "zero_variance": std.zero_variance,
                            "response_mean": std.response_mean},
        "diagnostics": diagnostics,
    })
    write_run_manifest(out / "run_manifest.json", args, argv, inputs, [out], started,
                       {"seed": args.seed})
    metric, value = next(iter(in_sample.items()))
    print(f"K={K} fit written to {out}; in-sample {metric} = {value:.6g}")


def load_model(path):
    """Rebuild a fitted predictor from ``fit.json``."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"model file not found: {path}")
    spec = json.loads(path.read_text())
    st = spec["standardization"]
    ref = SimpleNamespace(standardized=True, task=spec["task"],
                          edge_means=np.asarray(st["edge_means"], dtype=np.float64),
                          edge_sds=np.asarray(st["edge_sds"], dtype=np.float64),
                          zero_variance=np.asarray(st["zero_variance"], dtype=bool),
                          response_mean=float(st["response_mean"]))
    labels = np.asarray(spec["labels"], dtype=np.intp) - 1
    C = np.asarray(spec["C"], dtype=np.float64)
    return LinearNetworkModel(block_expand(labels, C), float(spec["intercept"]), ref, labels, C)


def cmd_predict(args, argv, started):
    model = load_model(args.model)
    sample = load_sample(args.data, require_responses=False)
    if sample.n_nodes != model.B.shape[0]:
        raise ValidationError(
            f"sample has {sample.n_nodes} nodes, model expects {model.B.shape[0]}")
    score = model.decision_function(sample.adjacency)
    out = _out_dir(args)
    if model.task == "classification":
        pred = np.where(score >= 0, 1.0, -1.0)
        prob = 0.5 * (1.0 + np.tanh(0.5 * score))
        write_matrix(out / "predictions.csv", np.column_stack([pred, prob]))
    else:
        pred = score
        write_matrix(out / "predictions.csv", pred)
    manifest = json.loads(Path(args.data).read_text())
    summary = {}
    if manifest.get("responses") is not None:
        if model.task == "classification":
            summary["accuracy"] = accuracy(sample.responses, pred)
        else:
            summary["relative_mse"] = relative_mse(sample.responses, pred)
        _write_json(out / "predict.json", summary)
    write_run_manifest(out / "run_manifest.json", args, argv, [args.model, args.data], [out],
                       started, {})
    extra = "".join(f"; {k} = {v:.6g}" for k, v in summary.items())
    print(f"wrote {len(pred)} predictions to {out / 'predictions.csv'}{extra}")


def cmd_cv(args, argv, started):
    sample = load_sample(args.data)
    loss, sample = _loss(args, sample)
    if args.method not in METHODS or args.method == "oracle" and not args.truth:
        raise UsageError(f"unknown or unusable method {args.method!r}; "
                         f"valid methods: {', '.join(METHODS)} (oracle needs --truth)")
    truth = read_labels(args.truth) if args.truth else None
    plan = CvPlan(args.folds, tuple(args.k_grid), tuple(args.lambda_grid), args.seed)
    cfg = _fit_config(args)
    result = cross_validate(sample, plan, args.method, loss, args.gamma, truth, cfg)
    out = _out_dir(args)
    curve = result.curve.drop(columns=["folds"])
    curve.to_csv(out / "cv_curve.csv", index=False, float_format="%.17g")
    _write_json(out / "cv.json", result.to_dict())
    inputs = [args.data] + ([args.truth] if args.truth else [])
    write_run_manifest(out / "run_manifest.json", args, argv, inputs, [out], started,
                       {"seed": args.seed})
    print(f"best K = {result.best_k}, lambda = {result.best_lambda:g} ({result.metric})")


def cmd_benchmark(args, argv, started):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {', '.join(bad) or '(none)'}; "
                         f"valid methods: {', '.join(METHODS)}")
    if not args.grid:
        raise UsageError("--grid is empty")
    report = benchmark_sweep(args.vary, args.grid, args.replicates, methods, args.seed,
                             n_test=args.n_test, k_grid=args.k_grid, folds=args.folds,
                             n_jobs=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out)
    summary_path = out.with_name(out.stem + ".summary.csv")
    report.summary.to_csv(summary_path, index=False, float_format="%.17g")
    meta_path = out.with_name(out.stem + ".meta.json")
    _write_json(meta_path, report.meta)
    write_run_manifest(out.with_name(out.stem + ".run_manifest.json"), args, argv, [],
                       [out, summary_path, meta_path], started, {"seed": args.seed})
    print(report.summary.to_string(index=False))


def cmd_replay(args, argv, started):
    manifest = json.loads(Path(args.manifest).read_text())
    replay = manifest.get("argv")
    if not replay:
        raise ValidationError(f"{args.manifest}: no recorded arguments")
    return main(replay)


# -- parser ----------------------------------------------------------------------

def _default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        return int(env)
    return os.cpu_count() or 1


def build_parser():
    p = _Parser(prog="supcomm", description="Supervised community detection for samples of networks.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a sample from the four-community design")
    s.add_argument("--n", type=int, default=40)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--t", type=float, default=0.025)
    s.add_argument("--s", type=float, default=0.1)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--num-networks", type=int, default=150)
    s.add_argument("--task", choices=("regression", "classification"), default="regression")
    s.add_argument("--label-noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    def solver_flags(q):
        q.add_argument("--loss", choices=tuple(LOSSES), default="ls")
        q.add_argument("--lambda", dest="lam", type=float, default=0.0)
        q.add_argument("--gamma", type=float, default=None)
        q.add_argument("--rho-grid", type=_float_list, default=None)
        q.add_argument("--tol", type=float, default=1e-4)
        q.add_argument("--max-iter", type=int, default=200)
        q.add_argument("--n-init", type=int, default=20)
        q.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("fit", help="fit communities and block coefficients")
    f.add_argument("--data", required=True, help="sample manifest.json")
    f.add_argument("--k", type=int, required=True)
    solver_flags(f)
    f.add_argument("--init", default="spectral", help="spectral or file:<labels.csv>")
    f.add_argument("--no-admm", action="store_true")
    f.add_argument("--dump-sigma", action="store_true",
                   help="also write the edge-response moment matrix")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="predict responses with a fitted model")
    r.add_argument("--model", required=True, help="fit.json")
    r.add_argument("--data", required=True, help="sample manifest.json")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    c = sub.add_parser("cv", help="cross-validate over K and lambda")
    c.add_argument("--data", required=True)
    c.add_argument("--method", default="admm")
    c.add_argument("--k-grid", type=_int_list, default=[1, 2, 3, 4, 5, 6])
    c.add_argument("--lambda-grid", type=_float_list, default=[0.0])
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--truth", default=None, help="true labels (oracle method)")
    solver_flags(c)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cv)

    b = sub.add_parser("benchmark", help="simulation sweep over one design parameter")
    b.add_argument("--vary", choices=("sigma", "t", "n-samples"), required=True)
    b.add_argument("--grid", type=_float_list, required=True)
    b.add_argument("--replicates", type=int, default=50)
    b.add_argument("--methods", default=",".join(METHODS))
    b.add_argument("--k-grid", type=_int_list, default=None,
                   help="choose K by CV over this grid (default: true K)")
    b.add_argument("--folds", type=int, default=5)
    b.add_argument("--n-test", type=int, default=500)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="report CSV path")
    b.set_defaults(func=cmd_benchmark)

    y = sub.add_parser("replay", help="re-run the command recorded in a run manifest")
    y.add_argument("manifest")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be positive")
    started = time.perf_counter()
    try:
        with threadpool_limits(args.threads):
            code = args.func(args, argv, started)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"supcomm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"supcomm: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"supcomm: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
