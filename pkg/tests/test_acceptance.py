"""Acceptance suite: one test per release criterion, with a printed verdict.

The directional experiments (criteria 6-8) share one calibrated desk-scale
setup: 10-class synthetic data (D=32, 600/class, spread 1.0, centralized
logistic-regression oracle ~88%), K=20 clients, MLP(1x64), 300 rounds,
batch 32, lr 1.0, 10 local epochs, weight decay 1e-4, seeds {1, 2, 3}.
"""

import csv
import os
import sys
import time

import numpy as np
import pytest

from fedwsm import cli, data, experiment, federation as fed
from fedwsm import metrics, nn, partition, rng as rngmod

SEEDS = (1, 2, 3)
ROUNDS = 300
CLIENTS = 20
HIDDEN = (64,)
LR = 1.0
EPOCHS = 10
BATCH = 32
WINDOW = 30


def _ok(name, detail=""):
    # bypass pytest's capture so the verdict line always reaches the console
    print(f"\nPASS {name} {detail}".rstrip(), file=sys.__stdout__)


@pytest.fixture(scope="module")
def synthetic():
    return data.make_synthetic(10, 32, 600, 1.0, seed=1)


@pytest.fixture(scope="module")
def run_cache(synthetic):
    cache = {}

    def run(alpha, fraction, loss, seed):
        key = (alpha, fraction, loss, seed)
        if key not in cache:
            shards = partition.dirichlet_partition(
                synthetic, partition.PartitionConfig(alpha=alpha, num_clients=CLIENTS,
                                                     seed=seed))
            cfg = fed.FederationConfig(
                num_clients=CLIENTS, client_fraction=fraction, rounds=ROUNDS,
                batch_size=BATCH, lr=LR, seed=seed, loss=loss,
                weight_decay=1e-4, local_epochs=EPOCHS)
            reports = fed.run_rounds(synthetic, shards, cfg, hidden=HIDDEN,
                                     metric_stride=10)
            cache[key] = (metrics.trailing_accuracy(reports, WINDOW),
                          experiment.late_forgetting(reports))
        return cache[key]

    return run


def _gap(run, alpha, fraction, seed):
    return 100 * (run(alpha, fraction, "wsm", seed)[0]
                  - run(alpha, fraction, "ce", seed)[0])


def test_c1_gradient_oracle():
    start = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        layers = rng.integers(1, 4)
        dims = [int(rng.integers(2, 9))]
        for _ in range(layers - 1):
            dims.append(int(rng.integers(2, 21)))
        num_classes = int(rng.integers(2, 6))
        params = nn.init_params(dims[0], dims[1:], num_classes, rng)
        # nudge every parameter off zero so no pre-activation sits exactly on
        # the ReLU kink (zero biases plus a dead layer would put it there)
        vec0 = params.to_vector() + 0.05 * rng.standard_normal(params.to_vector().size)
        params = nn.ModelParams.from_vector(params.shapes, vec0)
        x = rng.standard_normal((int(rng.integers(1, 6)), dims[0]))
        beta = rng.dirichlet(np.ones(num_classes))
        if num_classes > 2 and rng.random() < 0.5:
            beta[0] = 0.0
            beta /= beta.sum()
        alive = np.flatnonzero(beta > 0)
        y = rng.choice(alive, x.shape[0])
        loss = "ce" if rng.random() < 0.5 else "wsm"
        b = beta if loss == "wsm" else None
        _, grad = nn.loss_and_grad(params, x, y, loss=loss, beta=b)
        g = grad.to_vector()
        vec = params.to_vector()
        fd = np.empty_like(vec)
        h = 1e-5
        for i in range(vec.size):
            vp, vm = vec.copy(), vec.copy()
            vp[i] += h
            vm[i] -= h
            pp = nn.ModelParams.from_vector(params.shapes, vp)
            pm = nn.ModelParams.from_vector(params.shapes, vm)
            if loss == "ce":
                lp = nn.loss_ce(nn.forward(pp, x)[0], y)
                lm = nn.loss_ce(nn.forward(pm, x)[0], y)
            else:
                lp = nn.loss_wsm(nn.forward(pp, x)[0], y, b)
                lm = nn.loss_wsm(nn.forward(pm, x)[0], y, b)
            fd[i] = (lp - lm) / (2 * h)
        # floor the denominator at 1e-6: below that the central-difference
        # truncation error itself exceeds the 1e-5 relative target
        rel = np.abs(g - fd) / np.maximum(1e-6, np.maximum(np.abs(g), np.abs(fd)))
        worst = max(worst, rel.max())
    elapsed = time.time() - start
    assert worst < 1e-5
    assert elapsed < 30
    _ok("criterion 1 (gradient oracle)", f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_c2_uniform_beta_identity():
    rng = np.random.default_rng(7)
    num_classes = 7
    beta = np.full(num_classes, 1.0 / num_classes)
    worst_l, worst_g = 0.0, 0.0
    for _ in range(1000):
        z = rng.standard_normal((1, num_classes)) * rng.uniform(0.1, 20)
        y = rng.integers(0, num_classes, 1)
        dl = abs(nn.loss_wsm(z, y, beta) - (nn.loss_ce(z, y) - np.log(num_classes)))
        dg = np.max(np.abs(nn.logit_gradient(z, y, "ce")
                           - nn.logit_gradient(z, y, "wsm", beta)))
        worst_l, worst_g = max(worst_l, dl), max(worst_g, dg)
    assert worst_l < 1e-10
    assert worst_g < 1e-12
    _ok("criterion 2 (uniform-beta identity)", f"loss {worst_l:.1e} grad {worst_g:.1e}")


def test_c3_masking():
    rng = np.random.default_rng(8)
    for _ in range(200):
        num_classes = int(rng.integers(3, 10))
        beta = rng.dirichlet(np.ones(num_classes))
        dead = rng.choice(num_classes, int(rng.integers(1, num_classes - 1)),
                          replace=False)
        beta[dead] = 0.0
        beta /= beta.sum()
        z = rng.standard_normal((6, num_classes)) * 10
        y = rng.choice(np.flatnonzero(beta > 0), 6)
        g = nn.logit_gradient(z, y, "wsm", beta)
        assert np.all(g[:, dead] == 0.0)
    _ok("criterion 3 (masking)")


def test_c4_strategy_degeneracies(synthetic):
    shards = partition.dirichlet_partition(
        synthetic, partition.PartitionConfig(alpha=0.3, num_clients=6, seed=5))

    def final(strategy, rounds=2, mu=0.0, iters=None, epochs=1):
        cfg = fed.FederationConfig(
            num_clients=6, client_fraction=0.5, rounds=rounds, batch_size=32,
            lr=0.05, seed=17, loss="ce", weight_decay=1e-4,
            local_epochs=epochs, local_iterations=iters,
            strategy=fed.StrategyConfig(strategy, mu=mu))
        reports = fed.run_rounds(synthetic, shards, cfg, hidden=(16,))
        return reports

    # direct parameter-space comparison via a post_aggregate hook
    def final_params(strategy, rounds=2, iters=None, epochs=1):
        got = {}
        cfg = fed.FederationConfig(
            num_clients=6, client_fraction=0.5, rounds=rounds, batch_size=32,
            lr=0.05, seed=17, loss="ce", weight_decay=1e-4,
            local_epochs=epochs, local_iterations=iters,
            strategy=fed.StrategyConfig(strategy))
        fed.run_rounds(synthetic, shards, cfg, hidden=(16,),
                       hooks={"post_aggregate": lambda t, p: got.update({t: p.to_vector()})})
        return got

    avg = final_params("fedavg")
    prox = final_params("fedprox")
    assert np.max(np.abs(avg[2] - prox[2])) < 1e-12
    nova = final_params("fednova", iters=4, epochs=None)
    avg_it = final_params("fedavg", iters=4, epochs=None)
    assert np.max(np.abs(nova[2] - avg_it[2])) < 1e-12
    scaf = final_params("scaffold", rounds=1)
    avg1 = final_params("fedavg", rounds=1)
    assert np.max(np.abs(scaf[1] - avg1[1])) < 1e-12

    # K=1, p=1 federation == centralized SGD
    sh1 = partition.dirichlet_partition(
        synthetic, partition.PartitionConfig(alpha=1.0, num_clients=1, seed=3))
    cfg1 = fed.FederationConfig(num_clients=1, client_fraction=1.0, rounds=2,
                                batch_size=64, lr=0.05, seed=17, loss="ce",
                                weight_decay=1e-4, local_epochs=1)
    got = {}
    fed.run_rounds(synthetic, sh1, cfg1, hidden=(16,),
                   hooks={"post_aggregate": lambda t, p: got.update({t: p.to_vector()})})
    params = nn.init_params(synthetic.dim, (16,), synthetic.num_classes,
                            rngmod.stream(17, rngmod.DOMAIN_INIT))
    shard = sh1[0]
    for t in (1, 2):
        rng = rngmod.stream(17, rngmod.DOMAIN_TRAIN, t, 0)
        perm = rng.permutation(shard.n_train)
        for s in range(0, shard.n_train, 64):
            idx = perm[s:s + 64]
            _, g = nn.loss_and_grad(params, shard.train_x[idx], shard.train_y[idx])
            nn.sgd_step(params, g, 0.05, 1e-4)
    assert np.max(np.abs(params.to_vector() - got[2])) < 1e-12
    _ok("criterion 4 (strategy degeneracies)")


def test_c5_forgetting_bookkeeping():
    x = np.zeros((4, 2))
    def shard(cid, y):
        return partition.DatasetShard(cid, x, y, x, y,
                                      nn.class_proportions(y, 2),
                                      np.arange(4), np.arange(4))
    shards = [shard(0, np.array([0, 0, 1, 1])), shard(1, np.array([1, 1, 1, 0]))]
    prev = nn.ModelParams([np.zeros((2, 2))], [np.array([0.0, 1.0])])  # predicts 1
    const0 = nn.ModelParams([np.zeros((2, 2))], [np.array([1.0, 0.0])])  # predicts 0
    f = metrics.forgetting_matrix(prev, {0: prev.copy(), 1: const0}, shards)
    # hand-computed: Acc_0(prev)=0.5, Acc_1(prev)=0.75; model 1 predicts class 0
    expected = np.array([[0.0, 0.5 - 0.5],
                         [0.0, 0.75 - 0.25]])
    assert np.array_equal(f.values, expected)
    assert np.all(f.values[:, 0] == 0.0)
    _ok("criterion 5 (forgetting bookkeeping)")


def test_c6_directional_wsm_claim(run_cache):
    start = time.time()
    gaps, forget_pairs = [], []
    for seed in SEEDS:
        acc_ce, f_ce = run_cache(0.1, 0.1, "ce", seed)
        acc_w, f_w = run_cache(0.1, 0.1, "wsm", seed)
        gaps.append(100 * (acc_w - acc_ce))
        forget_pairs.append((f_w, f_ce))
    elapsed = time.time() - start
    mean_gap = float(np.mean(gaps))
    assert mean_gap >= 2.0, f"mean WSM-CE gap {mean_gap:.2f} pts < 2"
    for f_w, f_ce in forget_pairs:
        assert f_w < f_ce, "WSM late-training forgetting not lower in every repeat"
    assert elapsed < 600
    _ok("criterion 6 (directional WSM claim)",
        f"gap {mean_gap:+.2f} pts, {elapsed:.0f}s")


def test_c7_heterogeneity_ablation(run_cache):
    gap_het = float(np.mean([_gap(run_cache, 0.1, 0.1, s) for s in SEEDS]))
    gap_iid = float(np.mean([_gap(run_cache, 100.0, 0.1, s) for s in SEEDS]))
    assert gap_het > gap_iid
    assert abs(gap_iid) <= 1.0
    _ok("criterion 7 (alpha ablation)",
        f"gap@0.1 {gap_het:+.2f} vs gap@100 {gap_iid:+.2f}")


def test_c8_client_fraction_ablation(run_cache):
    gap_low = float(np.mean([_gap(run_cache, 0.1, 0.05, s) for s in SEEDS]))
    gap_high = float(np.mean([_gap(run_cache, 0.1, 0.5, s) for s in SEEDS]))
    assert gap_low > gap_high
    _ok("criterion 8 (client-fraction ablation)",
        f"gap@p=0.05 {gap_low:+.2f} vs gap@p=0.5 {gap_high:+.2f}")


def test_c9_partition_statistics():
    ds = data.make_synthetic(10, 8, 100, 1.0, seed=2)
    means = []
    for alpha in (0.01, 0.1, 1.0, 100.0):
        vals = []
        for seed in range(50):
            cfg = partition.PartitionConfig(alpha=alpha, num_clients=8, seed=seed)
            shards = partition.dirichlet_partition(ds, cfg)
            size = ds.num_samples // 8
            seen = set()
            for s in shards:
                assert s.n_total == size
                idx = set(s.train_idx) | set(s.val_idx)
                assert not (idx & seen)
                seen |= idx
                counts = np.bincount(s.train_y, minlength=10)
                assert np.array_equal(s.beta, counts / counts.sum())
                nz = s.beta[s.beta > 0]
                vals.append(float(-(nz * np.log(nz)).sum()))
        means.append(float(np.mean(vals)))
    assert all(a <= b for a, b in zip(means, means[1:])), means
    _ok("criterion 9 (partition statistics)",
        f"entropies {[round(m, 3) for m in means]}")


ACCEPT_CFG = """\
dataset.kind = synthetic
dataset.classes = 6
dataset.dim = 8
dataset.per_class = 60
dataset.spread = 1.0
dataset.seed = 2
partition.alpha = 0.3
partition.clients = 5
partition.seed = 4
model.hidden = 8
fed.rounds = 4
fed.client_fraction = 0.6
fed.batch_size = 16
fed.lr = 0.05
fed.seed = 11
fed.loss = wsm
fed.strategy = fedavg
fed.local_epochs = 2
metrics.stride = 2
metrics.window = 2
run.repeats = 2
"""


def test_c10_reproducibility(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(ACCEPT_CFG)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["run", str(cfg_path), "--out", out1]) == 0
    assert cli.main(["run", str(cfg_path), "--out", out2]) == 0
    for r in range(2):
        a = open(os.path.join(out1, f"seed{r}", "round_log.csv"), "rb").read()
        b = open(os.path.join(out2, f"seed{r}", "round_log.csv"), "rb").read()
        assert a == b

    cmp_out = str(tmp_path / "cmp")
    assert cli.main(["compare", str(cfg_path), "--out", cmp_out,
                     "--variants", "fedavg:ce,fedavg:wsm,fedprox:wsm"]) == 0
    with open(os.path.join(cmp_out, "compare_summary.csv")) as f:
        rows = list(csv.DictReader(f))
    hashes = {r["partition_hash"] for r in rows}
    assert len(rows) == 3 and len(hashes) == 1
    _ok("criterion 10 (reproducibility)")
