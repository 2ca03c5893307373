"""Core data types: input features, class embedding tables and class splits.

Classes are identified by dense integer ids ``0..C-1``; every container that
refers to classes carries the ``class_names`` tuple that gives the id <-> name
bijection.  Ties anywhere in the package are broken towards the lowest id, so
the order of ``class_names`` matters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

KINDS = (
    "attributes-binary",
    "attributes-continuous",
    "bow",
    "word-vector",
    "hierarchy",
    "concatenated",
)


class ZeroRowWarning(UserWarning):
    """A class embedding row is all zeros and cannot be normalized."""


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_names(names):
    names = tuple(names)
    for n in names:
        if not isinstance(n, str) or not n:
            raise ValidationError(f"class names must be non-empty strings, got {n!r}")
    seen = set()
    for n in names:
        if n in seen:
            raise ValidationError(f"duplicate class {n!r}")
        seen.add(n)
    return names


@dataclass(frozen=True)
class InputEmbeddingSet:
    """N samples of D-dimensional features with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple

    def __post_init__(self):
        names = _check_names(self.class_names)
        x = _frozen(self.features)
        y = _frozen(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValidationError("features must be an N x D matrix with D >= 1")
        if x.shape[0] < 1:
            raise ValidationError("N >= 1 violated: no samples")
        if y.shape != (x.shape[0],):
            raise ValidationError("one label per sample required")
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite feature value")
        if y.min() < 0 or y.max() >= len(names):
            raise ValidationError("label outside the class id range")
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n_samples(self):
        return self.features.shape[0]

    def select(self, classes: Iterable[int]) -> "InputEmbeddingSet":
        """Samples whose label is in ``classes``; raises if none remain."""
        mask = np.isin(self.labels, np.fromiter(classes, dtype=np.int64))
        return InputEmbeddingSet(self.features[mask], self.labels[mask], self.class_names)

    def relabel(self, class_names: Sequence[str]) -> "InputEmbeddingSet":
        """Re-express labels against another class-name ordering."""
        index = {n: i for i, n in enumerate(class_names)}
        missing = [n for n in self.class_names if n not in index]
        used = {self.class_names[i] for i in np.unique(self.labels)}
        if used & set(missing):
            raise ValidationError(f"unknown class {sorted(used & set(missing))[0]!r}")
        mapping = np.array([index.get(n, -1) for n in self.class_names], dtype=np.int64)
        return InputEmbeddingSet(self.features, mapping[self.labels], tuple(class_names))


@dataclass(frozen=True)
class OutputEmbeddingTable:
    """One E-dimensional vector per class, tagged with the embedding kind."""

    class_names: tuple
    vectors: np.ndarray
    kind: str

    def __post_init__(self):
        names = _check_names(self.class_names)
        v = _frozen(self.vectors)
        if self.kind not in KINDS:
            raise ValidationError(f"unknown embedding kind {self.kind!r}")
        if v.ndim != 2 or v.shape[0] != len(names) or v.shape[1] < 1:
            raise ValidationError("vectors must be a C x E matrix with one row per class")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite embedding value")
        if self.kind == "attributes-binary" and not np.all((v == 0) | (v == 1)):
            raise ValidationError("attributes-binary table has a value outside {0,1}")
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def n_classes(self):
        return self.vectors.shape[0]

    def index(self, name):
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ValidationError(f"class {name!r} missing from table") from None

    def reindex(self, class_names: Sequence[str]) -> "OutputEmbeddingTable":
        """Rows reordered (or subset) to follow ``class_names``."""
        rows = [self.index(n) for n in class_names]
        return OutputEmbeddingTable(tuple(class_names), self.vectors[rows], self.kind)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train / val / test class-id sets."""

    train: frozenset = field(default_factory=frozenset)
    val: frozenset = field(default_factory=frozenset)
    test: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("train", "val", "test"):
            s = frozenset(int(c) for c in getattr(self, name))
            if not s:
                raise ValidationError(f"{name} split is empty")
            object.__setattr__(self, name, s)
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise ValidationError("train, val and test classes must be pairwise disjoint")

    def role(self, cid):
        for name in ("train", "val", "test"):
            if cid in getattr(self, name):
                return name
        return None


# --------------------------------------------------------------------------
# File formats


def _format_float(v):
    return repr(float(v))


def _parse_header(line, keys, path):
    fields = {}
    for tok in line.split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise ParseError(f"malformed header token {tok!r}", path, 1)
        fields[k] = v
    missing = [k for k in keys if k not in fields]
    if missing:
        raise ParseError(f"malformed header, missing {missing[0]!r}", path, 1)
    return fields


def _parse_int(value, what, path, line):
    try:
        n = int(value)
    except ValueError:
        raise ParseError(f"malformed {what} {value!r}", path, line) from None
    if n < 1:
        raise ParseError(f"{what} must be positive", path, line)
    return n


def _parse_row(text, width, path, lineno, sep=","):
    parts = text.split(sep) if sep else text.split()
    if len(parts) != width:
        raise ParseError(f"row length mismatch at line {lineno}: expected {width}, got {len(parts)}", path, lineno)
    try:
        row = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"malformed number at line {lineno}", path, lineno) from None
    if not all(math.isfinite(r) for r in row):
        raise ParseError(f"non-finite value at line {lineno}", path, lineno)
    return row


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _body(lines):
    """(lineno, text) pairs after the header, skipping blank lines."""
    for i, text in enumerate(lines[1:], start=2):
        if text.strip():
            yield i, text


def load_feature_matrix(path, class_names: Sequence[str] | None = None) -> InputEmbeddingSet:
    """Read a ``D=<int>`` feature file of ``name<TAB>v1,...,vD`` rows.

    With ``class_names`` given, labels follow that ordering and an unlisted
    class is an error; otherwise classes are numbered by first appearance.
    """
    lines = _read_lines(path)
    if not lines:
        raise ParseError("malformed header: empty file", path, 1)
    head = _parse_header(lines[0], ["D"], path)
    dim = _parse_int(head["D"], "D", path, 1)
    index = {n: i for i, n in enumerate(class_names)} if class_names is not None else {}
    names = list(class_names) if class_names is not None else []
    rows, labels = [], []
    for lineno, text in _body(lines):
        name, tab, values = text.partition("\t")
        if not tab or not name:
            raise ParseError(f"expected 'class<TAB>values' at line {lineno}", path, lineno)
        if name not in index:
            if class_names is not None:
                raise ParseError(f"unknown class {name!r} at line {lineno}", path, lineno)
            index[name] = len(names)
            names.append(name)
        rows.append(_parse_row(values, dim, path, lineno))
        labels.append(index[name])
    if not rows:
        raise ParseError("N >= 1 violated: no samples", path)
    return InputEmbeddingSet(np.array(rows), np.array(labels), tuple(names))


def save_feature_matrix(data: InputEmbeddingSet, path):
    out = [f"D={data.dim}"]
    for x, y in zip(data.features, data.labels):
        out.append(data.class_names[y] + "\t" + ",".join(_format_float(v) for v in x))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_output_table(path, kind: str | None = None) -> OutputEmbeddingTable:
    """Read an ``E=<int> kind=<tag>`` table; ``kind`` overrides the header tag."""
    lines = _read_lines(path)
    if not lines:
        raise ParseError("malformed header: empty file", path, 1)
    head = _parse_header(lines[0], ["E"], path)
    dim = _parse_int(head["E"], "E", path, 1)
    kind = kind or head.get("kind")
    if kind not in KINDS:
        raise ParseError(f"unknown or missing kind {kind!r}", path, 1)
    names, rows = [], []
    seen = set()
    for lineno, text in _body(lines):
        name, tab, values = text.partition("\t")
        if not tab or not name:
            raise ParseError(f"expected 'class<TAB>values' at line {lineno}", path, lineno)
        if name in seen:
            raise ParseError(f"duplicate class {name!r} at line {lineno}", path, lineno)
        seen.add(name)
        row = _parse_row(values, dim, path, lineno)
        if kind == "attributes-binary" and any(v not in (0.0, 1.0) for v in row):
            raise ParseError(f"non-binary value in attributes-binary table at line {lineno}", path, lineno)
        names.append(name)
        rows.append(row)
    if not rows:
        raise ParseError("table has no classes", path)
    return OutputEmbeddingTable(tuple(names), np.array(rows), kind)


def save_output_table(table: OutputEmbeddingTable, path):
    out = [f"E={table.dim} kind={table.kind}"]
    for name, v in zip(table.class_names, table.vectors):
        out.append(name + "\t" + ",".join(_format_float(x) for x in v))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_split(path, class_names: Sequence[str]) -> SplitSpec:
    """Read ``class_name<TAB>train|val|test`` lines."""
    index = {n: i for i, n in enumerate(class_names)}
    sets = {"train": set(), "val": set(), "test": set()}
    seen = set()
    for lineno, text in enumerate(_read_lines(path), start=1):
        if not text.strip():
            continue
        name, tab, role = text.partition("\t")
        role = role.strip()
        if not tab or role not in sets:
            raise ParseError(f"expected 'class<TAB>train|val|test' at line {lineno}", path, lineno)
        if name not in index:
            raise ParseError(f"unknown class {name!r} at line {lineno}", path, lineno)
        if name in seen:
            raise ParseError(f"class {name!r} assigned twice at line {lineno}", path, lineno)
        seen.add(name)
        sets[role].add(index[name])
    return SplitSpec(frozenset(sets["train"]), frozenset(sets["val"]), frozenset(sets["test"]))


def save_split(split: SplitSpec, class_names: Sequence[str], path):
    out = []
    for cid, name in enumerate(class_names):
        role = split.role(cid)
        if role is not None:
            out.append(f"{name}\t{role}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Transforms


def l2_normalize_rows(table: OutputEmbeddingTable) -> OutputEmbeddingTable:
    """Scale every non-zero row to unit Euclidean norm; zero rows stay zero."""
    v = table.vectors
    peak = np.abs(v).max(axis=1)
    zero = peak == 0
    for i in np.flatnonzero(zero):
        warnings.warn(f"class {table.class_names[i]!r} has an all-zero embedding row", ZeroRowWarning, stacklevel=2)
    # pre-scale by the largest entry so tiny or huge rows neither underflow nor overflow
    v = v / np.where(zero, 1.0, peak)[:, None]
    norms = np.linalg.norm(v, axis=1)
    return OutputEmbeddingTable(table.class_names, v / np.where(zero, 1.0, norms)[:, None], table.kind)


def binarize_attributes(table: OutputEmbeddingTable) -> OutputEmbeddingTable:
    """Threshold each attribute at its mean over classes (strictly greater -> 1)."""
    if table.kind != "attributes-continuous":
        raise ValidationError(f"binarize needs an attributes-continuous table, got {table.kind}")
    v = table.vectors
    binary = (v > v.mean(axis=0, keepdims=True)).astype(np.float64)
    return OutputEmbeddingTable(table.class_names, binary, "attributes-binary")


def make_split(classes: Iterable[int], *, n_train: int, n_val: int, n_test: int, seed: int) -> SplitSpec:
    """Random disjoint class split, deterministic in ``seed``."""
    pool = np.array(sorted(set(int(c) for c in classes)), dtype=np.int64)
    if min(n_train, n_val, n_test) < 1:
        raise ValidationError("every split needs at least one class")
    if n_train + n_val + n_test > len(pool):
        raise ValidationError(f"split counts {n_train}+{n_val}+{n_test} exceed {len(pool)} available classes")
    perm = np.random.default_rng(seed).permutation(pool)
    return SplitSpec(
        frozenset(perm[:n_train].tolist()),
        frozenset(perm[n_train:n_train + n_val].tolist()),
        frozenset(perm[n_train + n_val:n_train + n_val + n_test].tolist()),
    )
