"""Compare the numpy and numba kernel backends on the training hot path.

Each backend is exercised in a fresh subprocess so the FEDWSM_BACKEND
environment flag is honored at import time. Usage:

    python3 benchmarks/bench_backends.py [--rounds 20] [--clients 10]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, os, sys, time
import numpy as np
from fedwsm import data, federation as fed, kernels, partition

opts = json.loads(sys.argv[1])
ds = data.make_synthetic(10, 32, 200, 1.0, seed=1)
shards = partition.dirichlet_partition(
    ds, partition.PartitionConfig(alpha=0.5, num_clients=opts["clients"], seed=1))
cfg = fed.FederationConfig(
    num_clients=opts["clients"], client_fraction=1.0, rounds=opts["rounds"],
    batch_size=32, lr=0.1, seed=3, loss="wsm", weight_decay=1e-4, local_epochs=2)

# warm up once so numba compilation does not count against the timing
fed.run_rounds(ds, shards, fed.FederationConfig(
    num_clients=opts["clients"], client_fraction=1.0, rounds=1, batch_size=32,
    lr=0.1, seed=3, loss="wsm", local_epochs=1), hidden=(64,))

start = time.perf_counter()
reports = fed.run_rounds(ds, shards, cfg, hidden=(64,))
elapsed = time.perf_counter() - start
print(json.dumps({"backend": kernels.BACKEND, "seconds": elapsed,
                  "final_acc": reports[-1].global_val_acc}))
"""


def run_backend(name, opts):
    env = dict(os.environ, FEDWSM_BACKEND=name)
    out = subprocess.run([sys.executable, "-c", WORKER, json.dumps(opts)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--clients", type=int, default=10)
    args = ap.parse_args()
    opts = {"rounds": args.rounds, "clients": args.clients}

    results = []
    for name in ("numpy", "numba"):
        try:
            results.append(run_backend(name, opts))
        except subprocess.CalledProcessError as exc:
            print(f"{name}: failed ({exc.stderr.strip().splitlines()[-1]})")

    for r in results:
        print(f"{r['backend']:>6}: {r['seconds']:8.3f}s  "
              f"(final val acc {r['final_acc']:.4f})")
    if len(results) == 2:
        a, b = results
        if a["final_acc"] != b["final_acc"]:
            print("warning: backends disagree on the final accuracy")
        print(f"speedup: {a['seconds'] / b['seconds']:.2f}x "
              f"({b['backend']} over {a['backend']})")


if __name__ == "__main__":
    main()
