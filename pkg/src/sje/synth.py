"""Planted-model task generator and brute-force oracles used for verification."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .embeddings import InputEmbeddingSet, OutputEmbeddingTable, SplitSpec, make_split
from .errors import ValidationError
from .model import CompatibilityModel, misclassification_losses, sample_objective

MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class PlantedTask:
    M: np.ndarray
    table: OutputEmbeddingTable
    data: InputEmbeddingSet
    split: SplitSpec
    seed: int


def unit_sphere(n, dim, rng):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _separable(M, phi, tol=1e-9):
    # noiseless sample of class y is M phi(y); its scores are phi(y)^T M^T M phi(.)
    G = phi @ M.T @ M @ phi.T
    off = G - np.diag(G)[:, None]
    np.fill_diagonal(off, -np.inf)
    return bool(np.all(off.max(axis=1) < -tol))


def class_names(n):
    width = len(str(n - 1))
    return tuple(f"class{i:0{width}d}" for i in range(n))


def generate_planted_task(
    D=16,
    E=8,
    C=20,
    samples_per_class=50,
    noise=0.0,
    split=(12, 4, 4),
    seed=0,
) -> PlantedTask:
    """Samples x = M phi(y) + noise for a hidden Gaussian map M.

    Class embeddings are drawn uniformly on the unit sphere and redrawn until
    every noiseless sample is ranked first by its own class under M.
    """
    if min(D, E, C) < 2:
        raise ValidationError("D, E and C must all be >= 2")
    if samples_per_class < 1:
        raise ValidationError("samples_per_class must be positive")
    if noise < 0:
        raise ValidationError("noise scale must be non-negative")
    if len(split) != 3:
        raise ValidationError("split must give (train, val, test) class counts")
    n_train, n_val, n_test = split
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((D, E))
    for _ in range(MAX_REJECTIONS):
        phi = unit_sphere(C, E, rng)
        if _separable(M, phi):
            break
    else:
        raise ValidationError(f"no separable class embedding after {MAX_REJECTIONS} draws (C={C}, E={E})")
    names = class_names(C)
    labels = np.repeat(np.arange(C), samples_per_class)
    X = phi[labels] @ M.T
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
    classes = make_split(range(C), n_train=n_train, n_val=n_val, n_test=n_test, seed=seed)
    table = OutputEmbeddingTable(names, phi, "attributes-continuous")
    return PlantedTask(M, table, InputEmbeddingSet(X, labels, names), classes, seed)


def noise_table(task: PlantedTask, dim=None, seed=0) -> OutputEmbeddingTable:
    """A class table unrelated to the planted map, for ensemble tests."""
    rng = np.random.default_rng(seed)
    dim = dim or task.table.dim
    return OutputEmbeddingTable(task.table.class_names, unit_sphere(task.table.n_classes, dim, rng), "word-vector")


# --------------------------------------------------------------------------
# Oracles


class KinkError(ValidationError):
    """The loss argmax is not unique, so the loss is not differentiable there."""


def oracle_loss_gradient(model: CompatibilityModel, x, y_true, table, fd_step=1e-5, candidates=None):
    """Central finite-difference gradient of max_y max(0, loss) w.r.t. every W entry."""
    cands = sorted(candidates) if candidates is not None else list(range(table.n_classes))
    vectors = table.vectors[cands]
    t = cands.index(y_true)
    x = np.asarray(x, dtype=np.float64)
    loss = misclassification_losses(x, t, model.W, vectors)
    top = np.sort(loss)[-2:]
    # one perturbed entry moves each loss by at most 2 * fd_step * |x_i| * max|phi|
    if top[1] - top[0] <= 40 * fd_step * np.abs(x).max() * np.abs(vectors).max():
        raise KinkError("kink: loss argmax is not unique at W")
    W = np.array(model.W)
    grad = np.empty_like(W)
    for idx in np.ndindex(W.shape):
        orig = W[idx]
        W[idx] = orig + fd_step
        up = sample_objective(W, x, t, vectors)
        W[idx] = orig - fd_step
        down = sample_objective(W, x, t, vectors)
        W[idx] = orig
        grad[idx] = (up - down) / (2 * fd_step)
    return grad


def oracle_path_length(tax, u, v) -> int:
    """Breadth-first search distance between two nodes, ignoring edge direction."""
    adj = {n: set() for n in tax.nodes}
    for child, parents in tax.parents.items():
        for p in parents:
            adj[child].add(p)
            adj[p].add(child)
    if u not in adj or v not in adj:
        raise ValidationError("unknown node")
    dist = {u: 0}
    queue = deque([u])
    while queue:
        n = queue.popleft()
        if n == v:
            return dist[n]
        for m in sorted(adj[n]):
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    raise ValidationError(f"nodes {u!r} and {v!r} are disconnected")
