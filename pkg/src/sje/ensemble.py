"""Combining several class embeddings: concatenation (cnc) or weighted scores (cmb)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import InputEmbeddingSet, OutputEmbeddingTable, SplitSpec
from .errors import ParseError, ValidationError
from .model import CompatibilityModel, _candidates, _rows, load_model, per_class_accuracy

MAX_MEMBERS = 4


@dataclass(frozen=True)
class EnsembleModel:
    """K (model, table) members scored as sum_k alpha_k x^T W_k phi_k(y)."""

    members: tuple
    alpha: tuple

    def __post_init__(self):
        members = tuple((m, t) for m, t in self.members)
        alpha = tuple(float(a) for a in self.alpha)
        if not members:
            raise ValidationError("an ensemble needs at least one member")
        if len(alpha) != len(members):
            raise ValidationError("one weight per member required")
        if any(a < 0 for a in alpha) or abs(sum(alpha) - 1.0) > 1e-9:
            raise ValidationError(f"weights must lie on the simplex, got {alpha}")
        if len({m.D for m, _ in members}) != 1:
            raise ValidationError("members disagree on the input dimension")
        for m, t in members:
            if m.E != t.dim:
                raise ValidationError("member model and table dimensions differ")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "alpha", alpha)

    @property
    def K(self):
        return len(self.members)

    @property
    def class_names(self):
        return self.members[0][1].class_names


def _member_vectors(table, class_names, ids):
    if table.class_names == tuple(class_names):
        return table.vectors[list(ids)]
    return _rows(table, class_names, ids)


def member_scores(em: EnsembleModel, features, ids, class_names=None):
    """K x N x C array of per-member compatibilities against classes ``ids``."""
    names = class_names or em.class_names
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.stack([features @ m.W @ _member_vectors(t, names, ids).T for m, t in em.members])


def ensemble_score(x, y, em: EnsembleModel) -> float:
    """Weighted sum of member compatibilities for class ``y`` (looked up by name)."""
    name = em.class_names[y]
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for a, (m, t) in zip(em.alpha, em.members):
        total += a * float(x @ m.W @ t.vectors[t.index(name)])
    return total


def ensemble_predict(x, em: EnsembleModel, candidates) -> int:
    cands = _candidates(candidates, em.members[0][1])
    s = np.tensordot(np.asarray(em.alpha), member_scores(em, x, cands), axes=1)[0]
    return cands[int(np.argmax(s))]


def ensemble_predict_batch(features, em: EnsembleModel, candidates, class_names=None):
    cands = sorted(set(candidates))
    s = np.tensordot(np.asarray(em.alpha), member_scores(em, features, cands, class_names), axes=1)
    return np.asarray(cands)[np.argmax(s, axis=1)]


def concatenate_embeddings(tables) -> OutputEmbeddingTable:
    """Row-wise concatenation in list order; class order follows the first table."""
    tables = list(tables)
    if not tables:
        raise ValidationError("nothing to concatenate")
    if len(tables) == 1:
        return tables[0]
    names = tables[0].class_names
    for t in tables[1:]:
        if set(t.class_names) != set(names):
            raise ValidationError("tables cover different class sets")
    vectors = np.hstack([t.reindex(names).vectors for t in tables])
    return OutputEmbeddingTable(names, vectors, "concatenated")


def stack_models(models) -> CompatibilityModel:
    """Side-by-side W_k, the single model acting on concatenated embeddings."""
    return CompatibilityModel(np.hstack([m.W for m in models]))


def simplex_grid(K, step):
    """All weight vectors with entries in multiples of ``step`` summing to 1, lexicographic order."""
    if not 0 < step <= 1:
        raise ValidationError("grid step must lie in (0, 1]")
    n = round(1 / step)
    if abs(n * step - 1) > 1e-9:
        raise ValidationError(f"grid step {step} does not divide 1")
    if K < 1:
        raise ValidationError("need at least one member")

    def parts(k, total):
        if k == 1:
            yield (total,)
            return
        for i in range(total + 1):
            for rest in parts(k - 1, total - i):
                yield (i,) + rest

    return [tuple(i / n for i in p) for p in parts(K, n)]


def grid_search_alpha(members, data: InputEmbeddingSet, split: SplitSpec, step=0.1):
    """Simplex-grid weights maximising zero-shot per-class accuracy on val classes.

    Ties keep the lexicographically smallest weight vector.  Returns
    ``(alpha, val_accuracy)``.  Cost grows as step**-(K-1), so K is capped.
    """
    members = list(members)
    if len(members) > MAX_MEMBERS:
        raise ValidationError(f"grid search supports at most {MAX_MEMBERS} members")
    grid = simplex_grid(len(members), step)
    ids = sorted(split.val)
    if not np.isin(data.labels, ids).any():
        raise ValidationError("no validation samples")
    sub = data.select(ids)
    em = EnsembleModel(members, (1.0,) + (0.0,) * (len(members) - 1))
    scores = member_scores(em, sub.features, ids, data.class_names)
    best_alpha, best_acc = None, -1.0
    for alpha in grid:
        s = np.tensordot(np.asarray(alpha), scores, axes=1)
        acc = per_class_accuracy(np.asarray(ids)[np.argmax(s, axis=1)], sub.labels)
        if acc > best_acc:
            best_alpha, best_acc = alpha, acc
    return best_alpha, best_acc


def save_ensemble(em: EnsembleModel, model_paths, path):
    if len(model_paths) != em.K:
        raise ValidationError("one model path per member required")
    lines = [f"K={em.K} alpha=" + ",".join(repr(a) for a in em.alpha)]
    lines += [str(p) for p in model_paths]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ensemble(path, tables) -> EnsembleModel:
    """Read an ensemble file; model paths resolve relative to the file."""
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        K = int(head["K"])
        alpha = tuple(float(a) for a in head["alpha"].split(","))
    except (IndexError, KeyError, ValueError):
        raise ParseError("malformed header, expected 'K=<int> alpha=<a1,...,aK>'", path, 1) from None
    if len(lines) != K + 1 or len(alpha) != K:
        raise ParseError(f"expected {K} weights and {K} model paths", path)
    tables = list(tables)
    if len(tables) != K:
        raise ValidationError(f"ensemble has {K} members but {len(tables)} tables were given")
    models = [load_model(path.parent / p) for p in lines[1:]]
    return EnsembleModel(tuple(zip(models, tables)), alpha)
