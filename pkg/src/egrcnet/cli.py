"""Command-line entry point: ``egrc {pretrain,train,eval,build-graph,embed}``.

Exit codes: 0 success, 2 usage or input error, 3 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import RunManifest, load_config
from .errors import ColumnCollapseError, EGRCError, TrainingDivergedError
from .graphio import build_knn_graph, read_edges, read_features, read_labels, save_edges, save_labels
from .metrics import evaluate, homogeneity_completeness

log = logging.getLogger("egrcnet")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3


def _overrides(args):
    out = {}
    for key in ("variant", "epochs", "seed", "refine_interval", "tau", "rho", "learning_rate", "dtype"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    if getattr(args, "output_dir", None):
        out["output_dir"] = args.output_dir
    if getattr(args, "no_refine", False):
        out["graph_refinement"] = False
    if getattr(args, "no_jeffreys", False):
        out["jeffreys"] = False
    return out


def _run_pretrain(run):
    from .trainer import pretrain_dae, save_dae

    bundle = run.load_bundle()
    os.makedirs(run.output_dir, exist_ok=True)
    RunManifest.from_run(run).write(os.path.join(run.output_dir, "manifest_pretrain.json"))
    history = []
    dae = pretrain_dae(bundle, run.train, history)
    os.makedirs(os.path.dirname(os.path.abspath(run.dae_path)), exist_ok=True)
    save_dae(dae, run.dae_path, run.train)
    if history:
        log.info("pretrained %d epochs, reconstruction %.6g -> %.6g", len(history), history[0], history[-1])
    return bundle, dae


def cmd_pretrain(args):
    run = load_config(args.config, _overrides(args), args.data_dir)
    _run_pretrain(run)
    print(run.dae_path)
    return EXIT_OK


def cmd_train(args):
    from .trainer import load_dae, save_checkpoint, train

    run = load_config(args.config, _overrides(args), args.data_dir)
    os.makedirs(run.output_dir, exist_ok=True)
    if os.path.isfile(run.dae_path):
        bundle, dae = run.load_bundle(), load_dae(run.dae_path)
    else:
        log.info("no DAE checkpoint at %s; pretraining first", run.dae_path)
        bundle, dae = _run_pretrain(run)
    RunManifest.from_run(run).write(os.path.join(run.output_dir, "manifest.json"))

    log_path = os.path.join(run.output_dir, "run_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:

        def on_epoch(row):
            fh.write(json.dumps(row) + "\n")
            fh.flush()
            if "acc" in row:
                log.info("epoch %d loss %.5f acc %.4f", row["epoch"], row["loss_total"], row["acc"])

        result = train(bundle, dae, run.train, on_epoch=on_epoch)

    save_labels(os.path.join(run.output_dir, "labels.txt"), result.labels)
    save_checkpoint(result.state, os.path.join(run.output_dir, "model.ckpt"), run.train)
    if result.metrics is not None:
        summary = dict(result.metrics, seconds=result.seconds, epochs=run.train.epochs)
        with open(os.path.join(run.output_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args):
    pred = read_labels(args.labels)
    truth = read_labels(args.truth)
    print(json.dumps(evaluate(truth, pred, args.nmi_average), sort_keys=True))
    return EXIT_OK


def cmd_build_graph(args):
    x = read_features(args.features)
    graph = build_knn_graph(x, args.k)
    save_edges(args.out, graph)
    print(f"{len(graph)} edges -> {args.out}")
    return EXIT_OK


def cmd_embed(args):
    from .trainer import input_matrix, load_checkpoint

    run = load_config(args.config, {}, args.data_dir)
    bundle = run.load_bundle()
    state = load_checkpoint(args.checkpoint)
    x = input_matrix(bundle, next(state.model.parameters()).dtype)
    z_a, h = state.embed(x)
    os.makedirs(args.out, exist_ok=True)
    np.savetxt(os.path.join(args.out, "z_a.txt"), z_a.double().numpy(), fmt="%.17g")
    np.savetxt(os.path.join(args.out, "h.txt"), h.double().numpy(), fmt="%.17g")
    if bundle.labels is not None:
        hom, comp = homogeneity_completeness(bundle.labels, z_a.argmax(1).numpy())
        with open(os.path.join(args.out, "scores.json"), "w", encoding="utf-8") as fh:
            json.dump({"homogeneity": hom, "completeness": comp}, fh, indent=2)
            fh.write("\n")
    print(args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="egrc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("config", help="config file or bundled config name (acm, dblp, ...)")
        p.add_argument("--data-dir", help="directory that relative data paths resolve against")
        p.add_argument("--output-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--dtype", choices=("float32", "float64"))

    p = sub.add_parser("pretrain", help="pretrain the auto-encoder")
    run_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="joint training with graph refinement")
    run_args(p)
    p.add_argument("--variant", choices=("full_gcn", "scalable_iappnp"))
    p.add_argument("--refine-interval", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--rho", type=float, help="fixed teleport probability (disables learned theta)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--no-refine", action="store_true", help="keep the input graph fixed")
    p.add_argument("--no-jeffreys", action="store_true", help="use one-sided KL terms")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a labels file against ground truth")
    p.add_argument("labels")
    p.add_argument("truth")
    p.add_argument("--nmi-average", choices=("geometric", "arithmetic"), default="geometric")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("build-graph", help="cosine KNN graph from a feature file")
    p.add_argument("features")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("embed", help="export Z_a and H from a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--data-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TrainingDivergedError, ColumnCollapseError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (EGRCError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
