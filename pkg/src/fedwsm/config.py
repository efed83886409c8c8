"""Flat key=value experiment configs with a strict schema.

Format: one `section.key = value` per line, `#` starts a comment, unknown
keys are rejected. Scientific parameters (lr, alpha, client fraction, ...)
have no defaults and must be explicit.
"""

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .federation import LOSSES, STRATEGIES, FederationConfig, StrategyConfig
from .partition import PartitionConfig

# key -> (parser, required, default). `None` default means "omitted".
_SCHEMA = {
    "dataset.kind": (str, True, None),
    "dataset.classes": (int, False, None),
    "dataset.dim": (int, False, None),
    "dataset.per_class": (int, False, None),
    "dataset.spread": (float, False, None),
    "dataset.seed": (int, False, None),
    "dataset.images": (str, False, None),
    "dataset.labels": (str, False, None),
    "dataset.path": (str, False, None),
    "dataset.label_column": (str, False, None),
    "partition.alpha": (float, True, None),
    "partition.clients": (int, True, None),
    "partition.seed": (int, True, None),
    "partition.val_fraction": (float, False, 0.1),
    "model.hidden": (str, False, ""),
    "fed.rounds": (int, True, None),
    "fed.client_fraction": (float, True, None),
    "fed.batch_size": (int, True, None),
    "fed.lr": (float, True, None),
    "fed.seed": (int, True, None),
    "fed.loss": (str, True, None),
    "fed.strategy": (str, True, None),
    "fed.mu": (float, False, 0.0),
    "fed.weight_decay": (float, False, 0.0),
    "fed.local_epochs": (int, False, None),
    "fed.local_iterations": (int, False, None),
    "metrics.stride": (int, False, 100),
    "metrics.window": (int, False, 100),
    "run.repeats": (int, False, 1),
    "run.checkpoint_stride": (int, False, 0),
    "run.out": (str, False, None),
}

_SWEEP_KEYS = {
    "sweep.axis": (str, True, None),
    "sweep.values": (str, True, None),
}

SWEEP_AXES = {
    "lr": ("fed.lr", float),
    "alpha": ("partition.alpha", float),
    "client_fraction": ("fed.client_fraction", float),
    "local_iterations": ("fed.local_iterations", int),
}

_DATASET_KEYS = {
    "synthetic": ("dataset.classes", "dataset.dim", "dataset.per_class",
                  "dataset.spread", "dataset.seed"),
    "idx": ("dataset.images", "dataset.labels"),
    "csv": ("dataset.path", "dataset.label_column"),
}


@dataclass
class ExperimentConfig:
    dataset: dict
    partition: PartitionConfig
    federation: FederationConfig
    hidden: tuple = ()
    metric_stride: int = 100
    window: int = 100
    repeats: int = 1
    checkpoint_stride: int = 0
    out: str | None = None
    resolved: dict = field(default_factory=dict)


def parse_kv_file(path):
    """Read a key=value file into an ordered dict of raw strings."""
    raw = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in raw:
                raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value
    return raw


def _typed(raw, schema, path):
    values = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigurationError(f"{path}: unknown key {key!r}")
        parser = schema[key][0]
        try:
            values[key] = parser(value)
        except ValueError:
            raise ConfigurationError(
                f"{path}: key {key!r}: cannot parse {value!r} as {parser.__name__}") from None
    for key, (_, required, default) in schema.items():
        if key not in values:
            if required:
                raise ConfigurationError(f"{path}: missing required key {key!r}")
            if default is not None:
                values[key] = default
    return values


def build_experiment(values, path="<config>"):
    """Validate a typed key dict and construct an ExperimentConfig."""
    kind = values["dataset.kind"]
    if kind not in _DATASET_KEYS:
        raise ConfigurationError(f"{path}: dataset.kind must be one of {sorted(_DATASET_KEYS)}")
    dataset = {"kind": kind}
    for key in _DATASET_KEYS[kind]:
        if key not in values:
            raise ConfigurationError(f"{path}: dataset.kind={kind} requires key {key!r}")
        dataset[key.split(".", 1)[1]] = values[key]

    if values["fed.strategy"] not in STRATEGIES:
        raise ConfigurationError(f"{path}: fed.strategy must be one of {STRATEGIES}")
    if values["fed.loss"] not in LOSSES:
        raise ConfigurationError(f"{path}: fed.loss must be one of {LOSSES}")
    if ("fed.local_epochs" in values) == ("fed.local_iterations" in values):
        raise ConfigurationError(
            f"{path}: exactly one of fed.local_epochs / fed.local_iterations must be set")

    try:
        partition = PartitionConfig(
            alpha=values["partition.alpha"],
            num_clients=values["partition.clients"],
            seed=values["partition.seed"],
            val_fraction=values["partition.val_fraction"],
        )
        federation = FederationConfig(
            num_clients=values["partition.clients"],
            client_fraction=values["fed.client_fraction"],
            rounds=values["fed.rounds"],
            batch_size=values["fed.batch_size"],
            lr=values["fed.lr"],
            seed=values["fed.seed"],
            loss=values["fed.loss"],
            weight_decay=values["fed.weight_decay"],
            local_epochs=values.get("fed.local_epochs"),
            local_iterations=values.get("fed.local_iterations"),
            strategy=StrategyConfig(values["fed.strategy"], mu=values["fed.mu"]),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None

    hidden = tuple(int(h) for h in values["model.hidden"].split(",") if h.strip())
    if any(h < 1 for h in hidden):
        raise ConfigurationError(f"{path}: model.hidden widths must be positive")
    if values["run.repeats"] < 1:
        raise ConfigurationError(f"{path}: run.repeats must be >= 1")
    if values["metrics.window"] < 1:
        raise ConfigurationError(f"{path}: metrics.window must be >= 1")
    # the default window may exceed a short run; clamp it to the round count
    values["metrics.window"] = min(values["metrics.window"], max(values["fed.rounds"], 1))

    resolved = {k: _fmt(v) for k, v in sorted(values.items())}
    return ExperimentConfig(
        dataset=dataset,
        partition=partition,
        federation=federation,
        hidden=hidden,
        metric_stride=values["metrics.stride"],
        window=values["metrics.window"],
        repeats=values["run.repeats"],
        checkpoint_stride=values["run.checkpoint_stride"],
        out=values.get("run.out"),
        resolved=resolved,
    )


def load_experiment(path):
    return build_experiment(_typed(parse_kv_file(path), _SCHEMA, path), path)


def from_resolved(resolved):
    """Rebuild an ExperimentConfig from a resolved key->string dict."""
    return build_experiment(_typed(dict(resolved), _SCHEMA, "<resolved>"), "<resolved>")


def load_sweep(path):
    """Returns (base ExperimentConfig, axis name, list of axis values)."""
    raw = parse_kv_file(path)
    schema = dict(_SCHEMA, **_SWEEP_KEYS)
    values = _typed(raw, schema, path)
    axis = values.pop("sweep.axis")
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"{path}: sweep.axis must be one of {sorted(SWEEP_AXES)}")
    key, caster = SWEEP_AXES[axis]
    try:
        points = [caster(v) for v in values.pop("sweep.values").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"{path}: sweep.values must be a comma list of numbers") from None
    if not points:
        raise ConfigurationError(f"{path}: sweep.values is empty")
    if axis == "local_iterations":
        values.pop("fed.local_epochs", None)
        values["fed.local_iterations"] = points[0]
    base = build_experiment(dict(values, **{key: points[0]}), path)
    return base, axis, points


def apply_override(cfg, overrides):
    """Re-build an ExperimentConfig with some resolved keys replaced."""
    values = dict(cfg.resolved)
    values.update({k: _fmt(v) for k, v in overrides.items()})
    if "fed.local_iterations" in overrides:
        values.pop("fed.local_epochs", None)
    retyped = _typed(values, _SCHEMA, "<override>")
    return build_experiment(retyped, "<override>")


def write_resolved(cfg, path):
    with open(path, "w", newline="\n") as f:
        for key, value in cfg.resolved.items():
            f.write(f"{key} = {value}\n")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)
