"""Class embeddings mined from per-class text documents.

Two builders live here: bag-of-words histograms over a filtered vocabulary,
and label vectors fine-tuned with a negative-sampling objective where every
context window drawn from a class's document predicts that class.  Word
vectors are pre-trained elsewhere and stay frozen; only the per-class output
vectors are learned.
"""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import OutputEmbeddingTable, ZeroRowWarning
from .errors import ParseError, ValidationError

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; no stemming."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    words: tuple
    doc_freq: tuple

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ValidationError("duplicate vocabulary word")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def index(self, word):
        return self._index[word]


def build_vocabulary(documents, min_df=1, max_df_fraction=1.0, size=None) -> Vocabulary:
    """Most frequent words after dropping too-rare and too-common ones.

    A word survives if ``min_df <= df <= max_df_fraction * n_docs``; survivors
    are ranked by total count (ties alphabetical) and cut to ``size``.
    """
    docs = list(documents.values()) if isinstance(documents, Mapping) else list(documents)
    if not docs:
        raise ValidationError("empty corpus")
    if not 0 < max_df_fraction <= 1:
        raise ValidationError("max_df_fraction must lie in (0, 1]")
    tokens = [tokenize(d) for d in docs]
    df = Counter(w for t in tokens for w in set(t))
    tf = Counter(w for t in tokens for w in t)
    limit = max_df_fraction * len(docs)
    kept = [w for w, n in df.items() if min_df <= n <= limit]
    kept.sort(key=lambda w: (-tf[w], w))
    if size is not None:
        kept = kept[:size]
    if not kept:
        raise ValidationError("empty vocabulary after filtering")
    return Vocabulary(tuple(kept), tuple(df[w] for w in kept))


def bow_embedding(corpus: Mapping[str, str], vocab: Vocabulary, class_names: Sequence[str] | None = None):
    """Per-class word-count histogram in vocabulary order."""
    names = tuple(class_names) if class_names is not None else tuple(corpus)
    rows = np.zeros((len(names), len(vocab)))
    for i, name in enumerate(names):
        if name not in corpus:
            raise ValidationError(f"class {name!r} has no document")
        for w in tokenize(corpus[name]):
            if w in vocab:
                rows[i, vocab.index(w)] += 1
        if not rows[i].any():
            warnings.warn(f"class {name!r} has no vocabulary words; its BoW row is zero", ZeroRowWarning, stacklevel=2)
    return OutputEmbeddingTable(names, rows, "bow")


# --------------------------------------------------------------------------
# Word vectors


@dataclass(frozen=True)
class WordVectorTable:
    words: tuple
    vectors: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] != len(self.words) or v.shape[1] < 1:
            raise ValidationError("word vectors must be a V x d matrix")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite word vector")
        if len(set(self.words)) != len(self.words):
            raise ValidationError("duplicate word in word-vector table")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __contains__(self, word):
        return word in self._index

    def __getitem__(self, word):
        return self.vectors[self._index[word]]

    def ids(self, words):
        return [self._index[w] for w in words if w in self._index]


def load_word_vectors(path) -> WordVectorTable:
    """Read ``V=<int> d=<int>`` followed by ``word v1 ... vd`` lines."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        V, d = int(head["V"]), int(head["d"])
    except (IndexError, KeyError, ValueError):
        raise ParseError("malformed header, expected 'V=<int> d=<int>'", path, 1) from None
    words, rows = [], []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        parts = text.split(" ")
        if len(parts) != d + 1:
            raise ParseError(f"row length mismatch at line {lineno}", path, lineno)
        try:
            rows.append([float(p) for p in parts[1:]])
        except ValueError:
            raise ParseError(f"malformed number at line {lineno}", path, lineno) from None
        words.append(parts[0])
    if len(words) != V:
        raise ParseError(f"header announces {V} words, found {len(words)}", path)
    try:
        return WordVectorTable(tuple(words), np.array(rows).reshape(len(rows), d), str(path))
    except ValidationError as e:
        raise ParseError(str(e), path) from None


def save_word_vectors(wv: WordVectorTable, path):
    lines = [f"V={len(wv.words)} d={wv.dim}"]
    lines += [w + " " + " ".join(repr(float(x)) for x in v) for w, v in zip(wv.words, wv.vectors)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(directory) -> dict[str, str]:
    """One document per class; the filename (minus a ``.txt`` suffix) is the class name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} not found")
    corpus = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and not p.name.startswith("."):
            name = p.name[:-4] if p.name.endswith(".txt") else p.name
            corpus[name] = p.read_text(encoding="utf-8")
    if not corpus:
        raise ValidationError(f"corpus directory {directory} has no documents")
    return corpus


# --------------------------------------------------------------------------
# Weakly-supervised negative sampling


def log_sigmoid(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(log_sigmoid(z))


def context_vector(window: Sequence[str], wv: WordVectorTable):
    """Mean of the window's word vectors; out-of-table words are skipped."""
    ids = wv.ids(window)
    if not ids:
        raise ValidationError("no window word has a word vector")
    return wv.vectors[ids].mean(axis=0)


def ws_w2v_loss(positives, negatives) -> float:
    """sum log s(v_c . v_w) over positives + sum log s(-v_c . v_w') over negatives."""
    total = 0.0
    for v_c, v_w in positives:
        total += float(log_sigmoid(np.dot(v_c, v_w)))
    for v_c, v_n in negatives:
        total += float(log_sigmoid(-np.dot(v_c, v_n)))
    return total


def ws_w2v_gradients(v_c, v_w, v_negs):
    """Gradients of the loss w.r.t. the positive target and each negative target."""
    v_negs = np.atleast_2d(v_negs) if len(v_negs) else np.zeros((0, len(v_c)))
    g_pos = (1.0 - sigmoid(v_c @ v_w)) * v_c
    g_neg = -sigmoid(v_negs @ v_c)[:, None] * v_c
    return g_pos, g_neg


@dataclass(frozen=True)
class FinetuneConfig:
    window: int = 35
    negatives: int = 5
    step: float = 0.025
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.negatives < 0 or self.epochs < 0:
            raise ValidationError("window >= 1, negatives >= 0 and epochs >= 0 required")
        if not self.step > 0:
            raise ValidationError("step must be positive")


def ws_w2v_finetune(
    corpus: Mapping[str, str],
    wv: WordVectorTable,
    cfg: FinetuneConfig = FinetuneConfig(),
    class_names: Sequence[str] | None = None,
) -> OutputEmbeddingTable:
    """Learn one output vector per class by ascending the negative-sampling objective.

    Each step draws a window uniformly from a class document, averages its
    frozen word vectors into a context, rewards the document's own class and
    penalises ``cfg.negatives`` classes drawn uniformly from the others.  An
    epoch draws ``max(1, n_tokens // window)`` windows per class.
    """
    names = tuple(class_names) if class_names is not None else tuple(corpus)
    ids = []
    for name in names:
        if name not in corpus:
            raise ValidationError(f"class {name!r} has no document")
        doc_ids = wv.ids(tokenize(corpus[name]))
        if not doc_ids:
            raise ValidationError(f"document for class {name!r} has no in-vocabulary words")
        ids.append(np.array(doc_ids))
    C, d = len(names), wv.dim
    rng = np.random.default_rng(cfg.seed)
    out = rng.uniform(-0.5 / d, 0.5 / d, size=(C, d))
    schedule = np.concatenate([np.full(max(1, len(t) // cfg.window), c) for c, t in enumerate(ids)])
    for _ in range(cfg.epochs):
        for c in rng.permutation(schedule):
            toks = ids[c]
            start = rng.integers(0, max(0, len(toks) - cfg.window) + 1)
            v_c = wv.vectors[toks[start:start + cfg.window]].mean(axis=0)
            negs = np.empty(0, dtype=np.int64)
            if C > 1 and cfg.negatives:
                negs = rng.integers(0, C - 1, size=cfg.negatives)
                negs = negs + (negs >= c)  # skip the positive class
            g_pos, g_neg = ws_w2v_gradients(v_c, out[c], out[negs])
            out[c] += cfg.step * g_pos
            np.add.at(out, negs, cfg.step * g_neg)
    return OutputEmbeddingTable(names, out, "word-vector")
