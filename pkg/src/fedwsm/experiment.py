"""Experiment execution: build dataset, partition, run rounds, write artifacts.

Everything here is driven by an ExperimentConfig; repeat r uses seed + r for
both the partition and the federation streams. All CSVs use '.' decimals and
LF line endings.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as configmod
from . import data as datamod
from . import metrics as metricsmod
from . import nn
from .federation import run_rounds
from .partition import dirichlet_partition, partition_hash, write_manifest


def build_dataset(spec):
    if spec["kind"] == "synthetic":
        return datamod.make_synthetic(spec["classes"], spec["dim"], spec["per_class"],
                                      spec["spread"], spec["seed"])
    if spec["kind"] == "idx":
        return datamod.load_idx(spec["images"], spec["labels"])
    return datamod.load_csv(spec["path"], spec["label_column"])


def _float(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def run_repeat(resolved, repeat, out_dir):
    """Execute one seeded repeat of an experiment into `out_dir`.

    Returns a summary dict: trailing accuracy, late-training mean forgetting,
    and the partition content hash.
    """
    cfg = configmod.from_resolved(resolved)
    cfg = configmod.apply_override(cfg, {
        "partition.seed": cfg.partition.seed + repeat,
        "fed.seed": cfg.federation.seed + repeat,
    })
    os.makedirs(out_dir, exist_ok=True)
    heat_dir = os.path.join(out_dir, "heatmaps")
    os.makedirs(heat_dir, exist_ok=True)

    dataset = build_dataset(cfg.dataset)
    shards = dirichlet_partition(dataset, cfg.partition)
    write_manifest(shards, dataset.num_classes, os.path.join(out_dir, "manifest.csv"))
    phash = partition_hash(shards)

    hooks = {}
    if cfg.checkpoint_stride > 0:
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

        def checkpoint(t, params):
            if t % cfg.checkpoint_stride == 0 or t == cfg.federation.rounds:
                nn.save_params(params, os.path.join(ckpt_dir, f"round{t:06d}.bin"))

        hooks["post_aggregate"] = checkpoint

    reports = run_rounds(dataset, shards, cfg.federation, hidden=cfg.hidden,
                         metric_stride=cfg.metric_stride, hooks=hooks)

    with open(os.path.join(out_dir, "round_log.csv"), "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["round", "global_val_acc", "global_test_acc",
                         "mean_forgetting", "control_norm"])
        for r in reports:
            writer.writerow([r.round_index, _float(r.global_val_acc),
                             _float(r.global_test_acc), _float(r.mean_forgetting),
                             _float(r.control_norm)])

    for r in reports:
        if r.forgetting is None:
            continue
        t = r.round_index
        metricsmod.export_heatmap(
            r.forgetting,
            os.path.join(heat_dir, f"round{t:06d}_forgetting.csv"),
            os.path.join(heat_dir, f"round{t:06d}_forgetting.svg"),
            kind="forgetting")
        if r.forgetting.prev_accuracy is not None:
            acc = r.forgetting.prev_accuracy[:, None] - r.forgetting.values
            metricsmod.export_heatmap(
                acc,
                os.path.join(heat_dir, f"round{t:06d}_accuracy.csv"),
                os.path.join(heat_dir, f"round{t:06d}_accuracy.svg"),
                kind="accuracy")

    trailing = (metricsmod.trailing_accuracy(reports, cfg.window)
                if reports else float("nan"))
    return {
        "repeat": repeat,
        "trailing_accuracy": trailing,
        "mean_forgetting_last_quarter": late_forgetting(reports),
        "final_val_acc": reports[-1].global_val_acc if reports else float("nan"),
        "partition_hash": phash,
    }


def late_forgetting(reports):
    """Mean of the per-round mean client forgetting over the last quarter of rounds."""
    if not reports:
        return float("nan")
    cutoff = reports[-1].round_index * 0.75
    vals = [r.mean_forgetting for r in reports
            if r.mean_client_forgetting is not None and r.round_index > cutoff]
    return float(np.mean(vals)) if vals else float("nan")


def run_experiment(cfg, out_dir, jobs=1):
    """Run all repeats of an experiment; write config echo and summary files."""
    os.makedirs(out_dir, exist_ok=True)
    configmod.write_resolved(cfg, os.path.join(out_dir, "config.resolved"))
    tasks = [(cfg.resolved, r, os.path.join(out_dir, f"seed{r}")) for r in range(cfg.repeats)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_repeat_star, tasks))
    else:
        results = [run_repeat(*t) for t in tasks]

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["repeat", "trailing_accuracy", "mean_forgetting_last_quarter",
                         "partition_hash"])
        for res in results:
            writer.writerow([res["repeat"], _float(res["trailing_accuracy"]),
                             _float(res["mean_forgetting_last_quarter"]),
                             res["partition_hash"]])
    accs = [res["trailing_accuracy"] for res in results]
    mean, std = float(np.mean(accs)), float(np.std(accs))
    with open(os.path.join(out_dir, "summary.txt"), "w", newline="\n") as f:
        f.write(f"trailing_accuracy mean={mean:.6f} std={std:.6f} repeats={len(accs)}\n")
    return results


def _run_repeat_star(args):
    return run_repeat(*args)
