"""Accuracy, local client forgetting, trailing-window accuracy, heatmap export.

ForgettingMatrix rows index the *data* of client k, columns the *model* of
client i: F[k, i] = Acc_k(prev_global) - Acc_k(w_i). Columns of clients that
did not train this round are NaN (absent).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from . import nn
from .errors import ConfigurationError, MetricError


@dataclass
class ForgettingMatrix:
    round_index: int
    values: np.ndarray           # [K, K], NaN for absent model columns
    participants: list           # client ids with a model this round
    prev_accuracy: np.ndarray | None = None   # Acc_k(prev_global) per data client


@dataclass
class RoundReport:
    round_index: int
    global_val_acc: float
    global_test_acc: float
    client_accuracies: np.ndarray        # global model on each client's val split
    forgetting: ForgettingMatrix | None = None
    mean_client_forgetting: np.ndarray | None = None   # per-client average, Eq-6 style
    control_norm: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def mean_forgetting(self):
        if self.mean_client_forgetting is None:
            return float("nan")
        return float(np.mean(self.mean_client_forgetting))


def accuracy(params, x, y):
    """Fraction of correct argmax predictions; ties go to the lowest class index."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise MetricError("accuracy of an empty batch is undefined")
    logits, _ = nn.forward(params, x)
    return K.accuracy(logits, y)


def forgetting_matrix(prev_global, client_models, shards, round_index=0):
    """F[k, i] = Acc_k(prev_global) - Acc_k(model_i) on validation data.

    `client_models` maps participating client id -> post-local-training
    parameters. All clients' data rows are evaluated; only participating
    clients' model columns are filled.
    """
    k_total = len(shards)
    f = np.full((k_total, k_total), np.nan)
    prev_acc = np.array([accuracy(prev_global, s.val_x, s.val_y) for s in shards])
    for i, model in sorted(client_models.items()):
        for k in range(k_total):
            f[k, i] = prev_acc[k] - accuracy(model, shards[k].val_x, shards[k].val_y)
    return ForgettingMatrix(round_index, f, sorted(client_models), prev_acc)


def average_forgetting(matrix):
    """Per-client mean of F[k, i] over present model columns i != k."""
    f = matrix.values
    k_total = f.shape[0]
    if k_total < 2:
        raise MetricError("average forgetting needs at least 2 clients")
    out = np.empty(k_total)
    for k in range(k_total):
        row = np.delete(f[k], k)
        row = row[~np.isnan(row)]
        out[k] = row.mean() if row.size else np.nan
    return out


def trailing_accuracy(reports, window):
    """Mean global test accuracy over the final `window` rounds."""
    if window < 1 or window > len(reports):
        raise ConfigurationError(
            f"window {window} out of range for {len(reports)} reports")
    return float(np.mean([r.global_test_acc for r in reports[-window:]]))


def export_heatmap(matrix, csv_path, svg_path=None, kind="forgetting"):
    """Write a matrix as CSV plus an optional SVG grid.

    Forgetting uses a diverging color scale centered at 0 (blue negative,
    red positive); accuracy uses a sequential scale. NaN cells are left
    blank (empty CSV field, unfilled SVG cell).
    """
    values = matrix.values if isinstance(matrix, ForgettingMatrix) else np.asarray(matrix)
    if values.size == 0:
        raise ConfigurationError("cannot export an empty matrix")
    k_rows, k_cols = values.shape
    with open(csv_path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["data_client"] + [f"model_{i}" for i in range(k_cols)])
        for k in range(k_rows):
            row = [k] + ["" if np.isnan(v) else repr(float(v)) for v in values[k]]
            writer.writerow(row)
    if svg_path is not None:
        _write_svg(values, svg_path, kind)


def read_heatmap_csv(path):
    """Inverse of the CSV side of export_heatmap (full float64 round-trip)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        k_cols = len(header) - 1
        rows = []
        for row in reader:
            rows.append([np.nan if v == "" else float(v) for v in row[1:]])
    values = np.array(rows).reshape(-1, k_cols)
    return values


CELL = 24  # px per heatmap cell
_MARGIN = 60
_LEGEND = 40


def _color(v, lo, hi, kind):
    if kind == "forgetting":
        # diverging, centered at 0: blue -> white -> red
        scale = max(abs(lo), abs(hi), 1e-12)
        t = max(-1.0, min(1.0, v / scale))
        if t >= 0:
            r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
        else:
            r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    else:
        # sequential: white -> dark green
        t = 0.0 if hi == lo else (v - lo) / (hi - lo)
        r = round(255 * (1 - 0.8 * t))
        g = round(255 * (1 - 0.4 * t))
        b = round(255 * (1 - 0.8 * t))
    return f"rgb({r},{g},{b})"


def _write_svg(values, path, kind):
    k_rows, k_cols = values.shape
    finite = values[~np.isnan(values)]
    if kind == "forgetting":
        lo, hi = -1.0, 1.0
    else:
        lo = float(finite.min()) if finite.size else 0.0
        hi = float(finite.max()) if finite.size else 1.0
    width = _MARGIN + k_cols * CELL + _LEGEND
    height = _MARGIN + k_rows * CELL + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{_MARGIN + k_cols * CELL / 2}" y="{_MARGIN - 8}" '
        f'text-anchor="middle" font-size="12">model of client i</text>',
        f'<text x="12" y="{_MARGIN + k_rows * CELL / 2}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 12 {_MARGIN + k_rows * CELL / 2})">'
        f'data of client k</text>',
    ]
    for k in range(k_rows):
        for i in range(k_cols):
            x = _MARGIN + i * CELL
            y = _MARGIN + k * CELL
            v = values[k, i]
            if np.isnan(v):
                parts.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                             f'fill="none" stroke="#ccc"/>')
            else:
                parts.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                             f'fill="{_color(v, lo, hi, kind)}" stroke="#888"/>')
    # legend: min / max swatches
    lx = _MARGIN + k_cols * CELL + 8
    parts.append(f'<rect x="{lx}" y="{_MARGIN}" width="16" height="16" '
                 f'fill="{_color(hi, lo, hi, kind)}"/>')
    parts.append(f'<text x="{lx}" y="{_MARGIN + 28}" font-size="9">{hi:.2g}</text>')
    parts.append(f'<rect x="{lx}" y="{_MARGIN + 40}" width="16" height="16" '
                 f'fill="{_color(lo, lo, hi, kind)}"/>')
    parts.append(f'<text x="{lx}" y="{_MARGIN + 68}" font-size="9">{lo:.2g}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(parts))
