"""Federated round orchestration: client selection, local SGD under CE or the
re-weighted softmax, and FedAvg / FedProx / SCAFFOLD / FedNova aggregation.

Determinism contract: every random draw comes from a stream keyed by
(seed, domain, round, client_id), so results are independent of client
evaluation order and of any parallelism in local training.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics as metricsmod
from . import nn
from . import rng as rngmod
from .errors import ConfigurationError
from .partition import dirichlet_partition

STRATEGIES = ("fedavg", "fedprox", "scaffold", "fednova")
LOSSES = ("ce", "wsm")


@dataclass
class StrategyConfig:
    name: str = "fedavg"
    mu: float = 0.0   # FedProx proximal coefficient

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.name!r}")
        if self.mu < 0:
            raise ConfigurationError(f"mu must be nonnegative, got {self.mu}")


@dataclass
class FederationConfig:
    num_clients: int
    client_fraction: float
    rounds: int
    batch_size: int
    lr: float
    seed: int
    loss: str = "ce"
    weight_decay: float = 0.0
    local_epochs: int | None = None
    local_iterations: int | None = None
    strategy: StrategyConfig = field(default_factory=StrategyConfig)

    def __post_init__(self):
        if not 0 < self.client_fraction <= 1:
            raise ConfigurationError(
                f"client_fraction must be in (0, 1], got {self.client_fraction}")
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be >= 0, got {self.rounds}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if (self.local_epochs is None) == (self.local_iterations is None):
            raise ConfigurationError(
                "exactly one of local_epochs / local_iterations must be set")
        budget = self.local_epochs if self.local_epochs is not None else self.local_iterations
        if budget < 1:
            raise ConfigurationError("local training budget must be >= 1")


@dataclass
class ServerState:
    params: nn.ModelParams
    round_index: int = 0
    control: np.ndarray | None = None   # SCAFFOLD server control variate (flat)


def select_clients(num_clients, fraction, round_rng):
    """ceil(fraction * K) distinct ids, uniform without replacement, sorted."""
    m = math.ceil(fraction * num_clients)
    ids = round_rng.choice(num_clients, size=m, replace=False)
    return sorted(int(i) for i in ids)


def _batch_indices(n, batch_size, rng, epochs, iterations):
    """Yield shuffled mini-batch index arrays for one local training run."""
    done = 0
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield perm[start:start + batch_size]
            done += 1
            if iterations is not None and done >= iterations:
                return
        if epochs is not None and done >= epochs * math.ceil(n / batch_size):
            return


def local_train(global_params, shard, cfg, client_rng,
                server_control=None, client_control=None):
    """One client's local update starting from a copy of the global model.

    Returns (params, tau, new_client_control). FedProx adds mu * (w - w_global)
    to each gradient; SCAFFOLD adds (c - c_i) and afterwards refreshes the
    client control variate as c_i - c + (w_global - w_i) / (tau * lr).
    """
    if shard.n_train == 0:
        raise ConfigurationError(f"client {shard.client_id} has an empty train split")
    params = global_params.copy()
    strategy = cfg.strategy.name
    beta = shard.beta if cfg.loss == "wsm" else None

    correction = None
    if strategy == "scaffold":
        correction = nn.ModelParams.from_vector(
            params.shapes, server_control - client_control)
    anchor = global_params if strategy == "fedprox" else None

    tau = 0
    for idx in _batch_indices(shard.n_train, cfg.batch_size, client_rng,
                              cfg.local_epochs, cfg.local_iterations):
        _, grad = nn.loss_and_grad(params, shard.train_x[idx], shard.train_y[idx],
                                   loss=cfg.loss, beta=beta)
        if anchor is not None and cfg.strategy.mu != 0.0:
            for g, w, wg in zip(grad.weights, params.weights, anchor.weights):
                g += cfg.strategy.mu * (w - wg)
            for g, b, bg in zip(grad.biases, params.biases, anchor.biases):
                g += cfg.strategy.mu * (b - bg)
        if correction is not None:
            for g, c in zip(grad.weights, correction.weights):
                g += c
            for g, c in zip(grad.biases, correction.biases):
                g += c
        nn.sgd_step(params, grad, cfg.lr, cfg.weight_decay)
        tau += 1

    new_control = None
    if strategy == "scaffold":
        drift = (global_params.to_vector() - params.to_vector()) / (tau * cfg.lr)
        new_control = client_control - server_control + drift
    return params, tau, new_control


@dataclass
class ClientUpdate:
    client_id: int
    params: nn.ModelParams
    tau: int
    n_samples: int
    control_delta: np.ndarray | None = None   # SCAFFOLD c_i+ - c_i


def aggregate(server, updates, cfg):
    """Combine client updates into the next global model (mutates `server`).

    Updates are sorted by client id first, so the floating-point result does
    not depend on the caller's ordering.
    """
    if not updates:
        raise ConfigurationError("aggregate needs at least one client update")
    updates = sorted(updates, key=lambda u: u.client_id)
    shapes = server.params.shapes
    w_global = server.params.to_vector()
    n_total = sum(u.n_samples for u in updates)
    weights = [u.n_samples / n_total for u in updates]

    if cfg.strategy.name == "fednova":
        tau_eff = sum(p * u.tau for p, u in zip(weights, updates))
        step = np.zeros_like(w_global)
        for p, u in zip(weights, updates):
            step += p * (w_global - u.params.to_vector()) / u.tau
        new_global = w_global - tau_eff * step
    else:
        new_global = np.zeros_like(w_global)
        for p, u in zip(weights, updates):
            new_global += p * u.params.to_vector()

    if cfg.strategy.name == "scaffold":
        delta = np.zeros_like(w_global)
        for u in updates:
            delta += u.control_delta
        delta /= len(updates)
        server.control = server.control + (len(updates) / cfg.num_clients) * delta

    server.params = nn.ModelParams.from_vector(shapes, new_global)
    return server.params


def run_federation(dataset, partition_cfg, fed_cfg, hidden=(),
                   metric_stride=0, hooks=None):
    """Partition the dataset and run the full federated protocol."""
    shards = dirichlet_partition(dataset, partition_cfg)
    return run_rounds(dataset, shards, fed_cfg, hidden=hidden,
                      metric_stride=metric_stride, hooks=hooks)


def run_rounds(dataset, shards, cfg, hidden=(), metric_stride=0, hooks=None):
    """Run cfg.rounds federated rounds over pre-built shards.

    Returns a list of RoundReport. When metric_stride > 0 the forgetting
    matrix is computed every metric_stride rounds (and on the final round).
    Hooks is an optional dict with "pre_aggregate"(t, prev_global, models)
    and "post_aggregate"(t, global_params) callables.
    """
    if len(shards) != cfg.num_clients:
        raise ConfigurationError(
            f"{len(shards)} shards for num_clients={cfg.num_clients}")
    for s in shards:
        if s.n_train == 0:
            raise ConfigurationError(f"client {s.client_id} has an empty train split")
    hooks = hooks or {}

    init_rng = rngmod.stream(cfg.seed, rngmod.DOMAIN_INIT)
    params = nn.init_params(dataset.dim, hidden, dataset.num_classes, init_rng)
    server = ServerState(params=params)
    client_controls = None
    if cfg.strategy.name == "scaffold":
        flat_size = params.to_vector().size
        server.control = np.zeros(flat_size)
        client_controls = {s.client_id: np.zeros(flat_size) for s in shards}

    val_x = np.concatenate([s.val_x for s in shards])
    val_y = np.concatenate([s.val_y for s in shards])

    reports = []
    for t in range(1, cfg.rounds + 1):
        server.round_index = t
        selected = select_clients(cfg.num_clients, cfg.client_fraction,
                                  rngmod.stream(cfg.seed, rngmod.DOMAIN_SELECT, t))
        prev_global = server.params

        updates = []
        for cid in selected:
            crng = rngmod.stream(cfg.seed, rngmod.DOMAIN_TRAIN, t, cid)
            c_i = client_controls[cid] if client_controls is not None else None
            w_i, tau, c_new = local_train(prev_global, shards[cid], cfg, crng,
                                          server_control=server.control,
                                          client_control=c_i)
            delta = None
            if c_new is not None:
                delta = c_new - client_controls[cid]
                client_controls[cid] = c_new
            updates.append(ClientUpdate(cid, w_i, tau, shards[cid].n_train, delta))

        client_models = {u.client_id: u.params for u in updates}
        if "pre_aggregate" in hooks:
            hooks["pre_aggregate"](t, prev_global, client_models)

        forgetting = None
        mean_forget = None
        if metric_stride > 0 and (t % metric_stride == 0 or t == cfg.rounds):
            forgetting = metricsmod.forgetting_matrix(prev_global, client_models,
                                                      shards, round_index=t)
            if cfg.num_clients >= 2:
                mean_forget = metricsmod.average_forgetting(forgetting)

        aggregate(server, updates, cfg)
        if "post_aggregate" in hooks:
            hooks["post_aggregate"](t, server.params)

        client_acc = np.array([metricsmod.accuracy(server.params, s.val_x, s.val_y)
                               for s in shards])
        test_acc = (metricsmod.accuracy(server.params, dataset.test_features,
                                        dataset.test_labels)
                    if dataset.test_labels.size else float("nan"))
        reports.append(metricsmod.RoundReport(
            round_index=t,
            global_val_acc=metricsmod.accuracy(server.params, val_x, val_y),
            global_test_acc=test_acc,
            client_accuracies=client_acc,
            forgetting=forgetting,
            mean_client_forgetting=mean_forget,
            control_norm=(float(np.linalg.norm(server.control))
                          if server.control is not None else 0.0),
        ))
    return reports
