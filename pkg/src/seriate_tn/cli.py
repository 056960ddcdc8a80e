"""Command-line entry point.

Subcommands: gen, mi, seriate, embed, train, experiment, stability, connectivity.
Each writes its machine-readable result to ``--out`` and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import born_machine as bm
from . import dataset as dsmod
from . import harness, mi_graph, seriation
from .errors import SeriationError


class UsageError(SeriationError):
    exit_code = 2


def _int_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", "--output", dest="out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (overridden by ${harness.THREADS_ENV})")


def _dataset_flags(p, required=False):
    p.add_argument("--dataset", choices=("bas", "ising", "markov", "random_mps"), required=required)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--p", type=float, default=0.1, help="Markov flip probability")
    p.add_argument("--beta", type=float, default=None, help="Ising inverse temperature")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--data-chi", type=int, default=4, help="bond dimension of the data MPS")


def _spec_from_args(args):
    if getattr(args, "input", None):
        return harness.DatasetSpec("file", path=args.input)
    if not args.dataset:
        raise UsageError("either --dataset or --input is required")
    kind = {"ising": "ising_tree"}.get(args.dataset, args.dataset)
    return harness.DatasetSpec(kind, rows=args.rows, cols=args.cols, n=args.n, T=args.samples,
                               beta=args.beta, p=args.p, data_chi=args.data_chi)


def _train_cfg(args):
    return bm.TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
                          record_every=args.record_every)


def _train_flags(p):
    p.add_argument("--chi", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--record-every", type=int, default=10)


def build_parser():
    parser = argparse.ArgumentParser(prog="seriate-tn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    _common(p)
    _dataset_flags(p, required=True)
    p.add_argument("--tree", help="Ising tree JSON to sample from instead of a random tree")
    p.add_argument("--tree-out", help="write the Ising tree JSON here")

    p = sub.add_parser("mi", help="pairwise MI matrix and Laplacian spectrum")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--laplacian-out")
    p.add_argument("--spectrum-out")

    p = sub.add_parser("seriate", help="Fiedler ordering of a dataset or weight matrix")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="dataset file")
    src.add_argument("--weights", help="weight matrix CSV")
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--permuted-out", help="write the reordered dataset here")

    p = sub.add_parser("embed", help="spectral embedding of the sites")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--weights")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--normalized", action="store_true")

    p = sub.add_parser("train", help="train an MPS Born machine on a dataset")
    _common(p)
    _train_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--trace-out")

    p = sub.add_parser("experiment", help="seriated vs shuffled training")
    _common(p)
    _dataset_flags(p)
    _train_flags(p)
    p.add_argument("--input", help="dataset file instead of a generator")
    p.add_argument("--shuffles", type=int, default=50)
    p.add_argument("--margin", type=float, default=harness.DEFAULT_MARGIN)

    p = sub.add_parser("stability", help="spectral gap vs sample count")
    _common(p)
    _dataset_flags(p)
    p.add_argument("--input", "--input-gen", dest="input", help="dataset file to sub-sample")
    p.add_argument("--counts", type=_int_list, required=True)
    p.add_argument("--seeds", type=int, default=10)

    p = sub.add_parser("connectivity", help="algebraic connectivity vs MPS bond dimension")
    _common(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--chis", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=20)
    return parser


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(args, line):
    # keep stdout clean when it carries the payload
    print(line, file=sys.stdout if args.out else sys.stderr)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _weights(args):
    if getattr(args, "weights", None):
        return mi_graph.check_weight_matrix(mi_graph.load_matrix_csv(args.weights))
    return mi_graph.empirical_pairwise_mi(dsmod.load_dataset(args.input))


def cmd_gen(args):
    spec = _spec_from_args(args)
    if spec.kind == "ising_tree" and args.tree:
        tree = dsmod.load_tree(args.tree)
        beta = dsmod.default_beta(tree) if args.beta is None else args.beta
        ds = dsmod.sample_gibbs(tree, beta, args.samples, harness.derive_seed(args.seed, 1))
    else:
        ds = harness.build_dataset(spec, args.seed)
        tree = harness._ising_tree(spec, args.seed)[0] if spec.kind == "ising_tree" else None
    if args.tree_out and tree is not None:
        dsmod.save_tree(tree, args.tree_out)
    desc = json.dumps(spec.descriptor(), sort_keys=True)
    if args.out:
        dsmod.save_dataset(ds, args.out, comment=f"{desc} seed={args.seed}")
    else:
        for row in ds.samples.tolist():
            sys.stdout.write("".join("01"[b] for b in row) + "\n")
    _summary(args, f"gen: {ds.T} samples of {ds.n} bits ({spec.kind})")


def cmd_mi(args):
    W = _weights(args)
    L = mi_graph.laplacian(W, normalized=args.normalized)
    spec = mi_graph.eigendecompose(L, mi_graph.NORMALIZED if args.normalized else mi_graph.UNNORMALIZED)
    if args.laplacian_out:
        mi_graph.save_matrix_csv(L, args.laplacian_out)
    if args.spectrum_out:
        mi_graph.save_spectrum(spec, args.spectrum_out)
    if args.format == "json":
        text = harness.canonical_json({"n": W.shape[0], "weights": W.tolist(),
                                       "eigenvalues": [float(v) for v in spec.eigenvalues]})
    else:
        text = "\n".join(",".join(repr(float(v)) for v in row) for row in W) + "\n"
    _emit(args, text)
    ncomp = len(mi_graph.connected_components(W))
    _summary(args, f"mi: n={W.shape[0]} max={W.max():.4g} nats lambda1={spec.lambda1:.4g} components={ncomp}")


def cmd_seriate(args):
    W = _weights(args)
    order = harness.seriate_weights(W, normalized=args.normalized)
    if args.permuted_out:
        if not args.input:
            raise UsageError("--permuted-out needs --input")
        ds = dsmod.load_dataset(args.input)
        dsmod.save_dataset(dsmod.permute_dataset(ds, order.perm), args.permuted_out)
    identity = seriation.perm_cost(W, np.arange(W.shape[0]))
    if args.format == "csv":
        text = _csv(["position", "site"], enumerate(order.perm))
    else:
        text = harness.canonical_json(order.to_json())
    _emit(args, text)
    _summary(args, f"seriate: cost {identity:.4g} -> {order.cost:.4g}, stable={order.stable}")


def cmd_embed(args):
    W = _weights(args)
    spec = mi_graph.laplacian_spectrum(W, normalized=args.normalized)
    emb = seriation.spectral_embedding(spec, args.m)
    if args.format == "json":
        text = harness.canonical_json({"coords": emb.coords.tolist()})
    else:
        header = ["site_index"] + [f"coord_{k + 1}" for k in range(emb.m)]
        text = _csv(header, ([i] + [float(v) for v in row] for i, row in enumerate(emb.coords)))
    _emit(args, text)
    _summary(args, f"embed: {emb.coords.shape[0]} sites in {emb.m} dimensions")


def cmd_train(args):
    ds = dsmod.load_dataset(args.input)
    cfg = _train_cfg(args)
    model, used = bm.init_supported(ds.n, args.chi, harness.derive_seed(args.seed, 1), [ds])
    trained, trace = bm.train(model, ds, cfg)
    if args.out:
        bm.save_model(trained, args.out)
    if args.trace_out:
        Path(args.trace_out).write_text(_csv(["epoch", "kl"], trace), encoding="utf-8")
    _summary(args, f"train: KL {trace[0][1]:.4g} -> {trace[-1][1]:.4g} over {cfg.epochs} epochs")


def cmd_experiment(args):
    spec = _spec_from_args(args)
    report = harness.run_seriation_experiment(
        spec, chi=args.chi, cfg=_train_cfg(args), num_shuffles=args.shuffles,
        master_seed=args.seed, threads=harness.resolve_threads(args.threads), margin=args.margin)
    if args.format == "csv":
        rows = [(t["trial"], t["final_kl_random"], t["final_kl_seriated"]) for t in report["trials"]]
        text = _csv(["trial", "final_kl_random", "final_kl_seriated"], rows)
    else:
        text = harness.canonical_json(report)
    _emit(args, text)
    s = report["summary"]
    _summary(args, f"experiment: win_fraction={s['win_fraction']} median KL random={s['median_kl_random']:.4g} "
                   f"seriated={s['median_kl_seriated']:.4g} ({s['num_trials']} trials, {s['num_failed']} failed)")


def cmd_stability(args):
    spec = _spec_from_args(args)
    res = harness.stability_sweep(spec, args.counts, master_seed=args.seed, num_seeds=args.seeds,
                                  threads=harness.resolve_threads(args.threads))
    if args.format == "json":
        text = harness.canonical_json(res)
    else:
        rows = [(r["T"], r["replicate"], r["lambda1"], r["lambda2"], r["gap"]) for r in res["rows"]]
        if res["exact"] is not None:
            e = res["exact"]
            rows.append(("inf", "exact", e["lambda1"], e["lambda2"], e["gap"]))
        text = _csv(["T", "replicate", "lambda1", "lambda2", "gap"], rows)
    _emit(args, text)
    gaps = ", ".join(f"{m['T']}:{m['gap']:.4g}" for m in res["medians"])
    _summary(args, f"stability: median gap {gaps}")


def cmd_connectivity(args):
    res = harness.connectivity_sweep(args.n, args.chis, T=args.samples, master_seed=args.seed,
                                     num_seeds=args.seeds, threads=harness.resolve_threads(args.threads))
    if args.format == "json":
        text = harness.canonical_json(res)
    else:
        rows = [(r["chi"], r["replicate"], r["lambda1"], r["lambda1_unnormalized"], int(r["isolated_vertex"]))
                for r in res["rows"]]
        text = _csv(["chi", "replicate", "lambda1", "lambda1_unnormalized", "isolated_vertex"], rows)
    _emit(args, text)
    meds = ", ".join(f"{m['chi']}:{m['lambda1']:.4g}" for m in res["medians"])
    _summary(args, f"connectivity: median lambda1 {meds}")


COMMANDS = {
    "gen": cmd_gen,
    "mi": cmd_mi,
    "seriate": cmd_seriate,
    "embed": cmd_embed,
    "train": cmd_train,
    "experiment": cmd_experiment,
    "stability": cmd_stability,
    "connectivity": cmd_connectivity,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except SeriationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
