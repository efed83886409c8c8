"""Command line entry points: run, sweep, compare, partition-stats."""

import argparse
import csv
import os
import sys

import numpy as np

from . import config as configmod
from . import experiment as expmod
from .errors import ConfigurationError, FedwsmError, ParseError
from .federation import LOSSES, STRATEGIES
from .partition import dirichlet_partition, partition_hash, write_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

OUT_ROOT_ENV = "FEDWSM_OUT_ROOT"


def _out_dir(args, cfg, suffix=""):
    if args.out:
        return args.out
    if cfg.out:
        return cfg.out
    stem = os.path.splitext(os.path.basename(args.config))[0] + suffix
    root = os.environ.get(OUT_ROOT_ENV, ".")
    return os.path.join(root, stem + "_out")


def _load(args):
    cfg = configmod.load_experiment(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["fed.seed"] = args.seed
        overrides["partition.seed"] = args.seed
    if args.repeats is not None:
        overrides["run.repeats"] = args.repeats
    if overrides:
        cfg = configmod.apply_override(cfg, overrides)
    return cfg


def cmd_run(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    expmod.run_experiment(cfg, out, jobs=args.jobs)
    print(f"run complete: {out}")
    return EXIT_OK


def cmd_sweep(args):
    base, axis, points = configmod.load_sweep(args.config)
    if args.seed is not None:
        base = configmod.apply_override(base, {"fed.seed": args.seed,
                                               "partition.seed": args.seed})
    if args.repeats is not None:
        base = configmod.apply_override(base, {"run.repeats": args.repeats})
    out = _out_dir(args, base, suffix="_sweep")
    os.makedirs(out, exist_ok=True)
    key = configmod.SWEEP_AXES[axis][0]

    rows = []
    for value in sorted(points):
        cfg = configmod.apply_override(base, {key: value})
        point_dir = os.path.join(out, f"{axis}_{value:g}")
        results = expmod.run_experiment(cfg, point_dir, jobs=args.jobs)
        accs = [r["trailing_accuracy"] for r in results]
        forgets = [r["mean_forgetting_last_quarter"] for r in results]
        rows.append([axis, repr(float(value)), repr(float(np.mean(accs))),
                     repr(float(np.std(accs))), expmod._float(np.nanmean(forgets))])

    with open(os.path.join(out, "sweep_summary.csv"), "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["axis", "value", "mean_trailing_accuracy",
                         "std_trailing_accuracy", "mean_final_forgetting"])
        writer.writerows(rows)
    print(f"sweep complete: {out}")
    return EXIT_OK


def _parse_variants(spec):
    variants = []
    for item in (spec or "").split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigurationError(f"variant {item!r} must be strategy:loss")
        strategy, loss = (p.strip() for p in item.split(":", 1))
        if strategy not in STRATEGIES or loss not in LOSSES:
            raise ConfigurationError(f"unknown variant {item!r}")
        variants.append((strategy, loss))
    if not variants:
        raise ConfigurationError("empty variant list")
    return variants


def cmd_compare(args):
    variants = _parse_variants(args.variants)
    base = _load(args)
    out = _out_dir(args, base, suffix="_compare")
    os.makedirs(out, exist_ok=True)

    rows = []
    for strategy, loss in variants:
        cfg = configmod.apply_override(base, {"fed.strategy": strategy, "fed.loss": loss})
        variant_dir = os.path.join(out, f"{strategy}_{loss}")
        results = expmod.run_experiment(cfg, variant_dir, jobs=args.jobs)
        accs = [r["trailing_accuracy"] for r in results]
        hashes = sorted({r["partition_hash"] for r in results})
        rows.append([strategy, loss, repr(float(np.mean(accs))),
                     repr(float(np.std(accs))), "+".join(hashes)])

    with open(os.path.join(out, "compare_summary.csv"), "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["strategy", "loss", "mean_trailing_accuracy",
                         "std_trailing_accuracy", "partition_hash"])
        writer.writerows(rows)
    print(f"compare complete: {out}")
    return EXIT_OK


def cmd_partition_stats(args):
    cfg = _load(args)
    out = _out_dir(args, cfg, suffix="_partition")
    os.makedirs(out, exist_ok=True)
    dataset = expmod.build_dataset(cfg.dataset)
    for r in range(cfg.repeats):
        pcfg = configmod.apply_override(
            cfg, {"partition.seed": cfg.partition.seed + r}).partition
        shards = dirichlet_partition(dataset, pcfg)
        write_manifest(shards, dataset.num_classes,
                       os.path.join(out, f"manifest_seed{r}.csv"))
        print(f"seed {r}: hash {partition_hash(shards)}")
    print(f"partition stats written to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fedwsm",
        description="Deterministic federated-learning simulator with a "
                    "re-weighted softmax objective and client-forgetting metrics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep),
                     ("compare", cmd_compare), ("partition-stats", cmd_partition_stats)):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the base seed for both partition and federation")
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(fn=fn)
        if name == "compare":
            p.add_argument("--variants", required=True,
                           help="comma list of strategy:loss pairs, e.g. fedavg:ce,fedavg:wsm")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FedwsmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
