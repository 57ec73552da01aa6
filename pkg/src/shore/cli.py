"""Command-line entry point: ``shore <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import baselines
from .compression import estimate_rip, generate_phi
from .core import SparseVec, derive_seed
from .data import SyntheticSpec, db_to_snr_inv, load_xmc, make_ground_truth, sample_synthetic, write_xmc
from .experiment import ExperimentPlan, THREADS_ENV, decode, parse_config, run_experiment
from .metrics import output_diff, precision_at_s, prediction_loss
from .prediction import FeasibleSet, project_sparse
from .training import load_model, resolve_ridge, save_model, train_compressed, train_uncompressed

FEASIBLE = [f.value for f in FeasibleSet]


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(
        d=args.d, K=args.K, n=args.n, s=args.s, snr_inv=db_to_snr_inv(args.db),
        feasible=args.feasible, seed=derive_seed(args.seed, "samples"),
    )
    gt = make_ground_truth(args.d, args.K, derive_seed(args.seed, "ground_truth"))
    write_xmc(sample_synthetic(spec, gt), args.out)
    return 0


def _cmd_inspect(args) -> int:
    st = load_xmc(args.path).stats()
    print(f"n = {st['n']}")
    print(f"d = {st['d']}")
    print(f"K = {st['K']}")
    print(f"avg feature nnz = {st['avg_feature_nnz']:.2f}")
    print(f"avg label nnz = {st['avg_label_nnz']:.2f}")
    return 0


def _cmd_train(args) -> int:
    ds = load_xmc(args.input)
    Y = ds.Y_matrix()
    ridge = resolve_ridge(ds.X, args.ridge)
    if args.m == 0:
        reg, rep = train_uncompressed(ds.X, Y, ridge)
        save_model(args.model_out, reg)
    else:
        phi = generate_phi(args.m, ds.K, args.seed)
        reg, rep = train_compressed(ds.X, Y, phi, ridge)
        save_model(args.model_out, reg, phi)
    print(f"loss={rep.loss!r} ridge={ridge!r} gram_min_eig~{rep.gram_min_eig_estimate:.6g}", file=sys.stderr)
    return 0


def _plan_for(args) -> ExperimentPlan:
    return ExperimentPlan(
        m_grid=[1], s=args.s, feasible=args.feasible, eta=args.eta, T=args.T, tol=args.tol,
        methods=[args.method], fista_lambda=args.fista_lambda, fista_T=args.fista_T,
        en_lambda1=args.en_lambda1, en_lambda2=args.en_lambda2, en_T=args.en_T,
    )


def _join(xs) -> str:
    return ";".join(xs)


def _cmd_predict(args) -> int:
    reg, phi = load_model(args.model)
    ds = load_xmc(args.input)
    plan = _plan_for(args)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "support", "values", "iterations", "final_objective"])
        for j in range(ds.n):
            x = ds.X[:, j]
            if phi is None:
                # uncompressed model: decoding is a single projection
                zx = reg.apply(x)
                v, iters = project_sparse(zx, args.s, args.feasible), 0
                r = v.to_dense() - zx
            else:
                v, iters = decode(args.method, phi, reg, x, args.s, plan)
                r = phi.mat[:, v.indices] @ v.values - reg.apply(x)
            w.writerow([
                j, _join(str(i) for i in v.indices.tolist()),
                _join(repr(x) for x in v.values.tolist()), iters, repr(float(r @ r)),
            ])
    return 0


def read_predictions(path, K: int) -> list[SparseVec]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            idx = [int(t) for t in row["support"].split(";") if t]
            val = [float(t) for t in row["values"].split(";") if t]
            out.append(SparseVec(K, np.array(idx, dtype=np.int64), np.array(val)))
    return out


def _cmd_evaluate(args) -> int:
    reg, phi = load_model(args.model)
    truth = load_xmc(args.truth)
    preds = read_predictions(args.pred, truth.K)
    if len(preds) != truth.n:
        print(f"error: {len(preds)} predictions for {truth.n} samples", file=sys.stderr)
        return 2
    s = args.s if args.s else max([v.nnz for v in preds] + [1])
    rows: dict[str, list[float]] = {"precision_at_s": [], "output_diff": []}
    if phi is not None:
        rows["prediction_loss"] = []
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "metric", "value"])
        for j, (v, y) in enumerate(zip(preds, truth.Y)):
            vals = {"precision_at_s": precision_at_s(v, y, s), "output_diff": output_diff(v, y)}
            if phi is not None:
                vals["prediction_loss"] = prediction_loss(phi, reg, truth.X[:, j], v)
            for k, val in vals.items():
                rows[k].append(val)
                w.writerow([j, k, repr(val)])
        for k, vals in rows.items():
            a = np.asarray(vals)
            w.writerow(["mean", k, repr(float(a.mean()))])
            w.writerow(["std", k, repr(float(a.std()))])
    return 0


def _cmd_rip_check(args) -> int:
    phi = generate_phi(args.m, args.K, args.seed)
    est = estimate_rip(phi, args.s, args.probes, args.delta, derive_seed(args.seed, "rip"))
    if args.header:
        print("m,K,s,probes,delta,delta_hat,pass_fraction")
    print(f"{args.m},{args.K},{args.s},{args.probes},{args.delta!r},{est.delta_hat!r},{est.pass_fraction!r}")
    return 0


def _cmd_run_experiment(args) -> int:
    plan = parse_config(args.config)
    if args.out_dir:
        plan.out_dir = args.out_dir
    res = run_experiment(plan, threads=args.threads)
    print(f"wrote results to {plan.out_dir} ({res['errors']} failed cells)", file=sys.stderr)
    return 0 if res["errors"] == 0 else 1


def _ridge_arg(text: str):
    return "auto" if text == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shore", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic data set in XMC text format")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--K", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s", type=int, default=3)
    g.add_argument("--db", type=float, default=30.0)
    g.add_argument("--feasible", choices=FEASIBLE, default="nonneg")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    i = sub.add_parser("inspect", help="print data set statistics")
    i.add_argument("path")
    i.set_defaults(func=_cmd_inspect)

    t = sub.add_parser("train", help="fit a (compressed) regressor and save it")
    t.add_argument("--input", required=True)
    t.add_argument("--m", type=int, required=True, help="rows of Phi; 0 trains the uncompressed model")
    t.add_argument("--ridge", type=_ridge_arg, default="auto",
                   help="ridge penalty or 'auto' (0 unless X X^T is singular)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--model-out", required=True)
    t.set_defaults(func=_cmd_train)

    pr = sub.add_parser("predict", help="decode sparse outputs for every sample")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--s", type=int, required=True)
    pr.add_argument("--feasible", choices=FEASIBLE, default="nonneg")
    pr.add_argument("--method", choices=["pgd", "omp", "cd", "fista", "en"], default="pgd")
    pr.add_argument("--eta", type=float, default=0.9)
    pr.add_argument("--T", type=int, default=60)
    pr.add_argument("--tol", type=float, default=1e-3)
    pr.add_argument("--fista-lambda", type=float, default=None)
    pr.add_argument("--fista-T", type=int, default=baselines.FISTA_T)
    pr.add_argument("--en-lambda1", type=float, default=baselines.EN_LAMBDA1)
    pr.add_argument("--en-lambda2", type=float, default=baselines.EN_LAMBDA2)
    pr.add_argument("--en-T", type=int, default=baselines.EN_T)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=_cmd_predict)

    e = sub.add_parser("evaluate", help="score a prediction CSV against a data set")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--s", type=int, default=None, help="divisor for precision@s (default: largest predicted support)")
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("rip-check", help="Monte-Carlo RIP probe of a fresh Gaussian Phi")
    r.add_argument("--m", type=int, required=True)
    r.add_argument("--K", type=int, required=True)
    r.add_argument("--s", type=int, required=True)
    r.add_argument("--probes", type=int, default=500)
    r.add_argument("--delta", type=float, default=0.5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--header", action="store_true", help="print the column names first")
    r.set_defaults(func=_cmd_rip_check)

    x = sub.add_parser("run-experiment", help="run a configured sweep")
    x.add_argument("--config", required=True)
    x.add_argument("--out-dir", default=None)
    x.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    x.set_defaults(func=_cmd_run_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
