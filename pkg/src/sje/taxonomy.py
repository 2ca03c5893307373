"""Class hierarchies, information content, and hierarchy-derived class embeddings.

Similarities are emitted exactly as defined:

    jcn(u, v)  = 2 IC(mscs) - (IC(u) + IC(v))        (<= 0, 0 on the diagonal)
    lin(u, v)  = 2 IC(mscs) / (IC(u) + IC(v))        (in [0, 1])
    path(u, v) = length of the shortest path through a common subsumer

with IC(n) = -ln(count(n) / count(root)), so IC(root) = 0 and IC grows with
specificity.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .embeddings import OutputEmbeddingTable
from .errors import ParseError, ValidationError

SIMILARITY_KINDS = ("jcn", "lin", "path")


@dataclass(frozen=True)
class Taxonomy:
    """Rooted acyclic hierarchy; node ids are positions in ``nodes``."""

    nodes: tuple
    root: str
    parents: Mapping
    children: Mapping
    class_nodes: Mapping
    counts: Mapping
    # node -> {ancestor (inclusive): upward distance}
    up: Mapping
    depth: Mapping

    def node_id(self, n):
        return self._ids[n]

    def __post_init__(self):
        object.__setattr__(self, "_ids", {n: i for i, n in enumerate(self.nodes)})

    def check_node(self, n):
        if n not in self._ids:
            raise ValidationError(f"unknown node {n!r}")
        return n

    def node_of(self, class_name):
        try:
            return self.class_nodes[class_name]
        except KeyError:
            raise ValidationError(f"class {class_name!r} is not mapped to a taxonomy node") from None

    def descendants(self, n):
        seen = {n}
        stack = [n]
        while stack:
            for c in self.children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen


def _upward_distances(n, parents):
    dist = {n: 0}
    queue = deque([n])
    while queue:
        m = queue.popleft()
        for p in parents[m]:
            if p not in dist:
                dist[p] = dist[m] + 1
                queue.append(p)
    return dist


def build_taxonomy(
    edges: Iterable,
    leaves: Mapping[str, str],
    attach: Mapping[str, str] | str | None = None,
    counts: Mapping[str, float] | None = None,
    allow_dag: bool = False,
) -> Taxonomy:
    """Validate a ``(parent, child)`` edge list and map classes onto nodes.

    ``leaves`` maps class names to node names.  A class whose node is absent
    from the hierarchy becomes a new leaf under its ``attach`` ancestor (a
    per-class mapping or one node for all), so all such classes sit at the
    same distance from their immediate ancestor.  Without any edges the
    class nodes themselves form the taxonomy.  ``counts`` gives each node's
    own corpus count; without it every leaf counts once.
    """
    nodes, parents, children = [], {}, {}

    def add(n):
        if not isinstance(n, str) or not n:
            raise ValidationError(f"node names must be non-empty strings, got {n!r}")
        if n not in parents:
            nodes.append(n)
            parents[n] = []
            children[n] = []

    for p, c in edges:
        add(p)
        add(c)
        if p == c:
            raise ValidationError(f"cycle: self-loop on {p!r}")
        if p not in parents[c]:
            parents[c].append(p)
            children[p].append(c)

    has_edges = bool(nodes)
    for cls, node in leaves.items():
        if node in parents:
            continue
        if not has_edges:
            # no hierarchy at all: the class node stands alone (a second one is a second root)
            add(node)
            continue
        anc = attach.get(cls) if isinstance(attach, Mapping) else attach
        if anc is None:
            raise ValidationError(f"orphan class {cls!r}: node {node!r} not in hierarchy and no attachment ancestor")
        if anc not in parents:
            raise ValidationError(f"attachment ancestor {anc!r} for class {cls!r} not in hierarchy")
        add(node)
        parents[node].append(anc)
        children[anc].append(node)

    if not nodes:
        raise ValidationError("empty taxonomy")
    roots = [n for n in nodes if not parents[n]]
    if not roots:
        raise ValidationError("cycle: no root node")
    if len(roots) > 1:
        raise ValidationError(f"multiple roots: {roots[:3]}")
    root = roots[0]
    # Kahn's algorithm: every node must be reachable and the graph acyclic
    indeg = {n: len(parents[n]) for n in nodes}
    depth = {root: 0}
    queue = deque([root])
    order = []
    while queue:
        n = queue.popleft()
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            depth[c] = min(depth.get(c, math.inf), depth[n] + 1)
            if indeg[c] == 0:
                queue.append(c)
    if len(order) != len(nodes):
        raise ValidationError("cycle detected in taxonomy")
    if not allow_dag:
        multi = [n for n in nodes if len(parents[n]) > 1]
        if multi:
            raise ValidationError(f"node {multi[0]!r} has several parents; pass allow_dag=True for DAGs")

    leaf_nodes = [n for n in nodes if not children[n]]
    if counts is None:
        own = {n: (1.0 if not children[n] else 0.0) for n in nodes}
    else:
        unknown = [n for n in counts if n not in parents]
        if unknown:
            raise ValidationError(f"count given for unknown node {unknown[0]!r}")
        own = {n: float(counts.get(n, 0.0)) for n in nodes}
        if any(v < 0 or not math.isfinite(v) for v in own.values()):
            raise ValidationError("counts must be finite and non-negative")
        if any(own[n] == 0 for n in leaf_nodes):
            for n in leaf_nodes:
                own[n] += 1.0

    frozen_parents = {n: tuple(parents[n]) for n in nodes}
    return Taxonomy(
        nodes=tuple(nodes),
        root=root,
        parents=frozen_parents,
        children={n: tuple(children[n]) for n in nodes},
        class_nodes=dict(leaves),
        counts=own,
        up={n: _upward_distances(n, frozen_parents) for n in nodes},
        depth=depth,
    )


@dataclass(frozen=True)
class ICTable:
    values: Mapping

    def __getitem__(self, node):
        try:
            return self.values[node]
        except KeyError:
            raise ValidationError(f"unknown node {node!r}") from None


def information_content(tax: Taxonomy) -> ICTable:
    """IC(n) = -ln(p(n)) with p(n) = subtree count / root count."""
    total = {n: sum(tax.counts[d] for d in tax.descendants(n)) for n in tax.nodes}
    if total[tax.root] <= 0:
        raise ValidationError("zero total count")
    ic = {}
    for n in tax.nodes:
        if total[n] <= 0:
            raise ValidationError(f"node {n!r} has zero count")
        ic[n] = 0.0 if total[n] == total[tax.root] else -math.log(total[n] / total[tax.root])
    return ICTable(ic)


def common_subsumers(tax, u, v):
    return set(tax.up[tax.check_node(u)]) & set(tax.up[tax.check_node(v)])


def mscs(tax: Taxonomy, u, v, ic: ICTable | None = None):
    """Most specific common subsumer: max IC, then max depth, then lowest node id."""
    if ic is None:
        ic = information_content(tax)
    return min(common_subsumers(tax, u, v), key=lambda a: (-ic[a], -tax.depth[a], tax.node_id(a)))


def path_length(tax, u, v):
    """Shortest path between u and v passing through a common subsumer."""
    up_u, up_v = tax.up[tax.check_node(u)], tax.up[tax.check_node(v)]
    return min(up_u[a] + up_v[a] for a in set(up_u) & set(up_v))


def similarity(tax: Taxonomy, ic: ICTable, u, v, kind: str) -> float:
    if kind == "path":
        return float(path_length(tax, u, v))
    if kind not in SIMILARITY_KINDS:
        raise ValidationError(f"unknown similarity {kind!r}")
    s = ic[mscs(tax, u, v, ic)]
    if kind == "jcn":
        return 2 * s - (ic[u] + ic[v])
    denom = ic[u] + ic[v]
    if denom <= 0:
        return 1.0 if u == v else 0.0
    return 2 * s / denom


def build_hierarchy_embedding(
    tax: Taxonomy, ic: ICTable, classes, kind: str, invert: bool = False
) -> OutputEmbeddingTable:
    """Row y holds the similarity of y to every class in ``classes`` (self included).

    ``invert`` turns the distance-like measures into similarity-like ones:
    path -> 1 / (1 + length), jcn -> -jcn.  lin is unaffected.
    """
    classes = tuple(classes)
    nodes = [tax.node_of(c) for c in classes]
    n = len(nodes)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            m[i, j] = m[j, i] = similarity(tax, ic, nodes[i], nodes[j], kind)
    if invert and kind == "path":
        m = 1.0 / (1.0 + m)
    elif invert and kind == "jcn":
        m = -m
    return OutputEmbeddingTable(classes, m + 0.0, "hierarchy")


# --------------------------------------------------------------------------
# Files


def _tab_rows(path, ncols, what):
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh.read().splitlines(), start=1):
            if not text.strip():
                continue
            parts = text.split("\t")
            if len(parts) not in ncols:
                raise ParseError(f"expected {what} at line {lineno}", path, lineno)
            yield lineno, parts


def load_taxonomy(edges_path, leaf_map_path, counts_path=None, attach=None, allow_dag=False) -> Taxonomy:
    """Read ``parent<TAB>child`` edges, ``class<TAB>node[<TAB>ancestor]`` and ``node<TAB>count`` files.

    The optional third leaf-map column names the attachment ancestor for a
    class whose node is not in the hierarchy; ``attach`` is the fallback.
    """
    edges = [tuple(p) for _, p in _tab_rows(edges_path, (2,), "'parent<TAB>child'")]
    leaves, per_class = {}, {}
    for lineno, parts in _tab_rows(leaf_map_path, (2, 3), "'class<TAB>node'"):
        if parts[0] in leaves:
            raise ParseError(f"class {parts[0]!r} mapped twice", leaf_map_path, lineno)
        leaves[parts[0]] = parts[1]
        if len(parts) == 3:
            per_class[parts[0]] = parts[2]
        elif attach is not None:
            per_class[parts[0]] = attach
    counts = None
    if counts_path is not None:
        counts = {}
        for lineno, (node, value) in _tab_rows(counts_path, (2,), "'node<TAB>count'"):
            try:
                counts[node] = float(value)
            except ValueError:
                raise ParseError(f"malformed count at line {lineno}", counts_path, lineno) from None
    return build_taxonomy(edges, leaves, per_class, counts, allow_dag)
