"""Bilinear compatibility model, zero-shot prediction and SGD training.

A sample x and a class y are scored by ``x @ W @ phi(y)``.  Training minimises
the unregularised structured hinge objective with the 0/1 margin, one sample at
a time, and regularises only by early stopping on held-out (zero-shot) classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .embeddings import InputEmbeddingSet, OutputEmbeddingTable, SplitSpec
from .errors import ParseError, ValidationError, ZeroShotLeakError

# Delta(y, y') for y != y'; Delta(y, y) = 0.
MARGIN = 1.0


@dataclass(frozen=True)
class CompatibilityModel:
    W: np.ndarray
    eta: float = 0.0
    epochs_run: int = 0
    best_epoch: int = 0
    seed: int = 0
    val_accuracy: float | None = None

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64, copy=True)
        if W.ndim != 2 or min(W.shape) < 1:
            raise ValidationError("W must be a non-empty D x E matrix")
        if not np.all(np.isfinite(W)):
            raise ValidationError("W has non-finite entries")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def D(self):
        return self.W.shape[0]

    @property
    def E(self):
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.01
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    init_scale: float = 1e-3

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("step size must be positive")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        if self.patience < 1:
            raise ValidationError("patience must be positive")
        if self.max_epochs > 0 and self.patience > self.max_epochs:
            raise ValidationError("patience cannot exceed max_epochs")
        if self.init_scale < 0:
            raise ValidationError("init_scale must be non-negative")


def _vec(v, n, what):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValidationError(f"{what} has shape {v.shape}, expected ({n},)")
    return v


def compatibility(x, model: CompatibilityModel, phi) -> float:
    x = _vec(x, model.D, "input embedding")
    phi = _vec(phi, model.E, "output embedding")
    return float(x @ model.W @ phi)


def _candidates(candidates, table):
    cands = sorted(set(int(c) for c in candidates))
    if not cands:
        raise ValidationError("empty candidate set")
    if cands[0] < 0 or cands[-1] >= table.n_classes:
        raise ValidationError("candidate class outside the table")
    return cands


def _check_table(model, table):
    if table.dim != model.E:
        raise ValidationError(f"table dimension {table.dim} does not match model E={model.E}")


def predict(x, model: CompatibilityModel, table: OutputEmbeddingTable, candidates) -> int:
    """Candidate class with the highest compatibility; ties go to the lowest id."""
    _check_table(model, table)
    cands = _candidates(candidates, table)
    x = _vec(x, model.D, "input embedding")
    s = (x @ model.W) @ table.vectors[cands].T
    return cands[int(np.argmax(s))]


def misclassification_losses(x, y_true, W, vectors):
    """Per-class loss Delta + F(x,y) - F(x,y_true) with the true entry pinned to 0."""
    s = (x @ W) @ vectors.T
    loss = MARGIN + s - s[y_true]
    loss[y_true] = 0.0
    return loss


def most_violating_class(x, y_true, model, table, candidates):
    """(class, loss) maximising the misclassification loss over ``candidates``."""
    _check_table(model, table)
    cands = _candidates(candidates, table)
    if y_true not in cands:
        raise ValidationError(f"true class {y_true} is not a candidate")
    x = _vec(x, model.D, "input embedding")
    loss = misclassification_losses(x, cands.index(y_true), model.W, table.vectors[cands])
    j = int(np.argmax(loss))
    return cands[j], float(loss[j])


def sgd_step(model, x, y_true, y_viol, table, eta):
    """W <- W + eta * x (phi(y_true) - phi(y_viol))^T, returned as a new model."""
    _check_table(model, table)
    x = _vec(x, model.D, "input embedding")
    diff = table.vectors[y_true] - table.vectors[y_viol]
    return replace(model, W=model.W + eta * np.outer(x, diff))


def sample_objective(W, x, y_true, vectors):
    """max_y max(0, loss); the per-sample term of the training objective."""
    return max(0.0, float(misclassification_losses(x, y_true, W, vectors).max()))


def objective(model, data, table, classes):
    """Average hinged loss over the samples of ``classes`` (candidates = classes)."""
    ids = sorted(classes)
    sub = data.select(ids)
    vectors = _rows(table, data.class_names, ids)
    local = {c: i for i, c in enumerate(ids)}
    return float(np.mean([sample_objective(model.W, x, local[y], vectors) for x, y in zip(sub.features, sub.labels)]))


# --------------------------------------------------------------------------
# Evaluation


def per_class_accuracy(predicted: Sequence[int], true: Sequence[int]) -> float:
    """Mean over true classes of the fraction of that class predicted correctly."""
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if true.size == 0:
        raise ValidationError("cannot score an empty prediction list")
    if predicted.shape != true.shape:
        raise ValidationError("predicted and true labels differ in length")
    return float(np.mean([np.mean(predicted[true == c] == c) for c in np.unique(true)]))


def _rows(table, class_names, ids):
    """Table rows for dataset class ids, looked up by name."""
    return np.stack([table.vectors[table.index(class_names[c])] for c in ids])


def predict_batch(features, W, vectors, cands):
    """Vectorised argmax over candidates; ``cands`` sorted ascending."""
    s = features @ W @ vectors.T
    return np.asarray(cands)[np.argmax(s, axis=1)]


def evaluate(model, data: InputEmbeddingSet, table, classes):
    """(predicted, true) for all samples of ``classes`` using those classes as candidates."""
    ids = sorted(set(classes))
    sub = data.select(ids)
    pred = predict_batch(sub.features, model.W, _rows(table, data.class_names, ids), ids)
    return pred, sub.labels


def zero_shot_accuracy(model, data, table, classes):
    return per_class_accuracy(*evaluate(model, data, table, classes))


# --------------------------------------------------------------------------
# Training


def init_weights(D, E, scale, rng):
    return rng.uniform(-scale, scale, size=(D, E))


def train(
    data: InputEmbeddingSet,
    table: OutputEmbeddingTable,
    split: SplitSpec,
    cfg: TrainConfig,
    on_update: Callable[[int, int, int], None] | None = None,
) -> CompatibilityModel:
    """Single-sample SGD on training classes with early stopping on val classes.

    ``on_update(sample_index, y_true, y_viol)`` is called before every
    parameter update; indices refer to ``data``.  The returned model holds the
    weights of the epoch with the best per-class val accuracy.
    """
    leaked = set(np.unique(data.labels).tolist()) - (split.train | split.val)
    if leaked & split.test:
        raise ZeroShotLeakError(f"test class {data.class_names[min(leaked & split.test)]!r} in training data")
    if leaked:
        raise ValidationError(f"class {data.class_names[min(leaked)]!r} is in neither train nor val")
    train_ids = sorted(split.train)
    tr_idx = np.flatnonzero(np.isin(data.labels, train_ids))
    if tr_idx.size == 0:
        raise ValidationError("no training samples")
    val_ids = sorted(split.val)
    va_idx = np.flatnonzero(np.isin(data.labels, val_ids))
    if va_idx.size == 0:
        raise ValidationError("no validation samples")

    phi_tr = _rows(table, data.class_names, train_ids)
    phi_va = _rows(table, data.class_names, val_ids)
    local = {c: i for i, c in enumerate(train_ids)}
    X = data.features
    y_local = np.array([local[c] for c in data.labels[tr_idx]])
    X_val, y_val = X[va_idx], data.labels[va_idx]

    rng = np.random.default_rng(cfg.seed)
    W = init_weights(data.dim, phi_tr.shape[1], cfg.init_scale, rng)
    best_W, best_acc, best_epoch = W.copy(), None, 0
    stale, epoch = 0, 0
    eta = cfg.eta
    for epoch in range(1, cfg.max_epochs + 1):
        for j in rng.permutation(tr_idx.size):
            x, t = X[tr_idx[j]], y_local[j]
            loss = misclassification_losses(x, t, W, phi_tr)
            v = int(np.argmax(loss))
            if v != t:
                if on_update is not None:
                    on_update(int(tr_idx[j]), train_ids[t], train_ids[v])
                W += eta * np.outer(x, phi_tr[t] - phi_tr[v])
        if not np.all(np.isfinite(W)):
            raise ValidationError(f"training diverged at epoch {epoch} (eta={eta})")
        acc = per_class_accuracy(predict_batch(X_val, W, phi_va, val_ids), y_val)
        if best_acc is None or acc > best_acc:
            best_W, best_acc, best_epoch, stale = W.copy(), acc, epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return CompatibilityModel(best_W, eta=eta, epochs_run=epoch, best_epoch=best_epoch, seed=cfg.seed, val_accuracy=best_acc)


# --------------------------------------------------------------------------
# Model file


def save_model(model: CompatibilityModel, path):
    lines = [f"D={model.D} E={model.E}"]
    lines += [",".join(repr(float(v)) for v in row) for row in model.W]
    lines.append(f"eta={model.eta!r} seed={model.seed} best_epoch={model.best_epoch}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> CompatibilityModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty model file", path, 1)
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        D, E = int(head["D"]), int(head["E"])
    except (KeyError, ValueError):
        raise ParseError("malformed header, expected 'D=<int> E=<int>'", path, 1) from None
    if len(lines) != D + 2:
        raise ParseError(f"expected {D} weight rows and a metadata line", path)
    rows = []
    for i, text in enumerate(lines[1:D + 1], start=2):
        parts = text.split(",")
        if len(parts) != E:
            raise ParseError(f"row length mismatch at line {i}", path, i)
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"malformed number at line {i}", path, i) from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError(f"non-finite weight at line {i}", path, i)
        rows.append(row)
    try:
        meta = dict(tok.split("=", 1) for tok in lines[-1].split())
        return CompatibilityModel(
            np.array(rows), eta=float(meta["eta"]), seed=int(meta["seed"]), best_epoch=int(meta["best_epoch"])
        )
    except (KeyError, ValueError):
        raise ParseError("malformed metadata line", path, D + 2) from None
