"""Weighted digraphs, Laplacians and strongly-connected-block structure.

Convention used throughout the package: an edge ``(i, j, w)`` stores the
weight ``a_ij = w``, the rate at which agent ``j`` influences agent ``i``.
Influence therefore flows ``j -> i``; row ``i`` of the Laplacian collects
everything node ``i`` listens to.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "GraphError",
    "WeightedDigraph",
    "BlockKind",
    "BlockDecomposition",
    "Connectivity",
    "parse_graph",
    "read_graph",
    "format_edgelist",
    "format_json",
    "build_laplacian",
    "strongly_connected_components",
    "classify_blocks",
    "decompose",
    "frobenius_form",
    "isolated_by_row_sums",
    "is_symmetric",
    "is_balanced",
    "connectivity_kind",
    "undirected_shape_connected",
    "predicts_unconditional_consensus",
]

MAX_DENSE_NODES = 4096


class GraphError(ValueError):
    """Invalid graph data (bad weight, duplicate edge, self-loop, ...)."""


@dataclass(frozen=True)
class WeightedDigraph:
    """Immutable weighted digraph; ``edges`` holds ``(i, j, a_ij)`` triples.

    Zero-weight edges are dropped, the remaining edges are sorted by
    ``(i, j)``.
    """

    n_nodes: int
    edges: tuple = ()

    def __post_init__(self):
        n = self.n_nodes
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise GraphError(f"n_nodes must be a positive integer, got {n!r}")
        seen = set()
        clean = []
        for edge in self.edges:
            i, j, w = edge
            i, j, w = int(i), int(j), float(w)
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for {n} nodes")
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not np.isfinite(w):
                raise GraphError(f"non-finite weight on edge ({i}, {j})")
            if w < 0:
                raise GraphError(f"negative weight {w!r} on edge ({i}, {j})")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            if w > 0:
                clean.append((i, j, w))
        clean.sort()
        object.__setattr__(self, "n_nodes", int(n))
        object.__setattr__(self, "edges", tuple(clean))

    @classmethod
    def from_adjacency(cls, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError("adjacency matrix must be square")
        n = a.shape[0]
        edges = [(i, j, a[i, j]) for i in range(n) for j in range(n) if i != j and a[i, j] != 0]
        return cls(n, tuple(edges))

    @cached_property
    def adjacency(self):
        """Dense ``a_ij`` matrix (read-only)."""
        if self.n_nodes > MAX_DENSE_NODES:
            raise GraphError(f"dense representation limited to {MAX_DENSE_NODES} nodes")
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, j, w in self.edges:
            a[i, j] = w
        a.flags.writeable = False
        return a

    @cached_property
    def influencers(self):
        """``influencers[i]`` = nodes j with a_ij > 0."""
        out = [[] for _ in range(self.n_nodes)]
        for i, j, _ in self.edges:
            out[i].append(j)
        return tuple(tuple(x) for x in out)

    @cached_property
    def followers(self):
        """``followers[j]`` = nodes i with a_ij > 0 (nodes that j influences)."""
        out = [[] for _ in range(self.n_nodes)]
        for i, j, _ in self.edges:
            out[j].append(i)
        return tuple(tuple(x) for x in out)

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_arrays(self):
        """Return ``(i, j, w)`` as numpy arrays."""
        if not self.edges:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        i, j, w = zip(*self.edges)
        return np.array(i, np.int64), np.array(j, np.int64), np.array(w, float)

    def relabel(self, perm):
        """Graph with node ``perm[k]`` renamed to ``k``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.n_nodes)):
            raise GraphError("relabeling must be a permutation of the nodes")
        new = {old: k for k, old in enumerate(perm)}
        return WeightedDigraph(self.n_nodes, tuple((new[i], new[j], w) for i, j, w in self.edges))

    def digest(self):
        """Short content hash, used to tag outputs."""
        return hashlib.sha256(format_edgelist(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Text formats


def _parse_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"invalid JSON graph at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "n" not in doc:
        raise GraphError('JSON graph must be an object with keys "n" and "edges"')
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise GraphError(f'"n" must be a positive integer, got {n!r}')
    edges = []
    for k, item in enumerate(doc.get("edges", [])):
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise GraphError(f"edge #{k} must be [i, j, w]")
        edges.append(tuple(item))
    try:
        return WeightedDigraph(n, tuple(edges))
    except GraphError as exc:
        raise GraphError(f"JSON graph: {exc}") from None


def parse_graph(text):
    """Parse an edge-list or JSON graph document.

    Edge-list: first meaningful line is ``N``, then ``i j a_ij`` per line.
    Blank lines and ``#`` comments are ignored. Errors name the 1-based line.
    """
    if text.lstrip().startswith("{"):
        return _parse_json(text)

    n = None
    edges = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 1:
                raise GraphError(f"expected node count at line {lineno}")
            try:
                n = int(parts[0])
            except ValueError:
                raise GraphError(f"invalid node count at line {lineno}") from None
            if n < 1:
                raise GraphError(f"node count must be positive at line {lineno}")
            continue
        if len(parts) != 3:
            raise GraphError(f"expected 'i j weight' at line {lineno}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2])
        except ValueError:
            raise GraphError(f"malformed edge at line {lineno}") from None
        if not np.isfinite(w):
            raise GraphError(f"non-finite weight at line {lineno}")
        if w < 0:
            raise GraphError(f"negative weight at line {lineno}")
        if i == j:
            raise GraphError(f"self-loop at line {lineno}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"node index out of range at line {lineno}")
        if (i, j) in seen:
            raise GraphError(f"duplicate edge at line {lineno}")
        seen.add((i, j))
        edges.append((i, j, w))
    if n is None:
        raise GraphError("empty graph document")
    return WeightedDigraph(n, tuple(edges))


def read_graph(path):
    with open(path) as fh:
        return parse_graph(fh.read())


def format_edgelist(g):
    lines = [str(g.n_nodes)]
    lines += [f"{i} {j} {w!r}" for i, j, w in g.edges]
    return "\n".join(lines) + "\n"


def format_json(g):
    return json.dumps({"n": g.n_nodes, "edges": [[i, j, w] for i, j, w in g.edges]})


# ---------------------------------------------------------------------------
# Laplacian


def build_laplacian(g):
    """``L_ii = sum_j a_ij``, ``L_ij = -a_ij``. Returned read-only."""
    a = np.array(g.adjacency)
    lap = -a
    np.fill_diagonal(lap, a.sum(axis=1))
    lap.flags.writeable = False
    return lap


# ---------------------------------------------------------------------------
# Block structure


class BlockKind(enum.Enum):
    ISOLATED = "isolated"
    ABSORBING = "absorbing"
    NEITHER = "neither"


@dataclass(frozen=True)
class BlockDecomposition:
    """Strongly connected components in topological (influence) order.

    ``condensation_edges`` holds ``(p, q)`` when block ``p`` influences
    block ``q``; every such edge satisfies ``p < q``. ``permutation[k]`` is
    the original node placed at position ``k`` of the normal form.
    """

    blocks: tuple
    condensation_edges: frozenset
    labels: tuple | None = None
    permutation: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "permutation", tuple(v for b in self.blocks for v in b))

    @property
    def n_blocks(self):
        return len(self.blocks)

    @cached_property
    def block_of(self):
        out = [0] * len(self.permutation)
        for k, b in enumerate(self.blocks):
            for v in b:
                out[v] = k
        return tuple(out)

    def blocks_of_kind(self, kind):
        if self.labels is None:
            raise ValueError("decomposition is not labeled; call classify_blocks first")
        return [b for b, lab in zip(self.blocks, self.labels) if lab is kind]

    @property
    def n_isolated(self):
        return len(self.blocks_of_kind(BlockKind.ISOLATED))

    def to_dict(self):
        return {
            "blocks": [list(b) for b in self.blocks],
            "labels": None if self.labels is None else [lab.value for lab in self.labels],
            "permutation": list(self.permutation),
            "condensation_edges": sorted(list(e) for e in self.condensation_edges),
        }


def _tarjan(n, succ):
    """Iterative Tarjan SCC. Returns a list of components (lists of nodes)."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack = []
    comps = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [(root, 0)]
        while work:
            v, pos = work[-1]
            nbrs = succ[v]
            if pos < len(nbrs):
                work[-1] = (v, pos + 1)
                w = nbrs[pos]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def strongly_connected_components(g):
    """Unlabeled decomposition into SCCs, influencers first.

    Ties between incomparable blocks are broken by smallest node index, so
    the ordering (and the normal form) is deterministic.
    """
    comps = [sorted(c) for c in _tarjan(g.n_nodes, g.followers)]
    comp_of = [0] * g.n_nodes
    for k, c in enumerate(comps):
        for v in c:
            comp_of[v] = k
    dag = set()
    for i, j, _ in g.edges:
        p, q = comp_of[j], comp_of[i]
        if p != q:
            dag.add((p, q))
    indeg = [0] * len(comps)
    out = [[] for _ in comps]
    for p, q in dag:
        indeg[q] += 1
        out[p].append(q)
    heap = [(comps[k][0], k) for k in range(len(comps)) if indeg[k] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, k = heapq.heappop(heap)
        order.append(k)
        for q in out[k]:
            indeg[q] -= 1
            if indeg[q] == 0:
                heapq.heappush(heap, (comps[q][0], q))
    rank = {k: r for r, k in enumerate(order)}
    blocks = tuple(tuple(comps[k]) for k in order)
    edges = frozenset((rank[p], rank[q]) for p, q in dag)
    return BlockDecomposition(blocks, edges)


def classify_blocks(g, d):
    """Label each block Isolated / Absorbing / Neither from the condensation."""
    has_in = {q for _, q in d.condensation_edges}
    has_out = {p for p, _ in d.condensation_edges}
    labels = []
    for k in range(d.n_blocks):
        if k not in has_in:
            labels.append(BlockKind.ISOLATED)
        elif k not in has_out:
            labels.append(BlockKind.ABSORBING)
        else:
            labels.append(BlockKind.NEITHER)
    return BlockDecomposition(d.blocks, d.condensation_edges, tuple(labels))


def decompose(g):
    """SCCs plus labels in one call."""
    return classify_blocks(g, strongly_connected_components(g))


def frobenius_form(g):
    """Return ``(L_perm, decomposition)`` with ``L_perm`` block lower triangular."""
    d = decompose(g)
    lap = build_laplacian(g)
    perm = np.array(d.permutation)
    return lap[np.ix_(perm, perm)], d


def isolated_by_row_sums(lap, d, atol=1e-12):
    """Matrix-side isolation test: every row of the diagonal block sums to 0."""
    lap = np.asarray(lap)
    scale = max(1.0, float(np.abs(lap).max(initial=0.0)))
    out = []
    for b in d.blocks:
        idx = np.array(b)
        sub = lap[np.ix_(idx, idx)]
        out.append(bool(np.all(np.abs(sub.sum(axis=1)) <= atol * scale)))
    return out


# ---------------------------------------------------------------------------
# Predicates


class Connectivity(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    DISCONNECTED = "disconnected"


def is_symmetric(g, rtol=1e-12):
    a = g.adjacency
    return bool(np.all(np.abs(a - a.T) <= rtol * np.maximum(np.abs(a), np.abs(a.T))))


def is_balanced(g, rtol=1e-12):
    """In-weight sum equals out-weight sum at every node."""
    a = g.adjacency
    received = a.sum(axis=1)
    given = a.sum(axis=0)
    scale = np.maximum(1.0, np.maximum(received, given))
    return bool(np.all(np.abs(received - given) <= rtol * scale))


def connectivity_kind(g, d=None):
    """Strong, or Weak when every pair is comparable under reachability.

    In topological order, all pairs of blocks are comparable exactly when
    each consecutive pair is joined by a condensation edge.
    """
    d = d if d is not None else strongly_connected_components(g)
    if d.n_blocks == 1:
        return Connectivity.STRONG
    if all((k, k + 1) in d.condensation_edges for k in range(d.n_blocks - 1)):
        return Connectivity.WEAK
    return Connectivity.DISCONNECTED


def undirected_shape_connected(g):
    """Connectivity of the graph with edge directions ignored."""
    parent = list(range(g.n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in g.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(v) for v in range(g.n_nodes)}) == 1


def predicts_unconditional_consensus(d):
    """Both models reach consensus for every start iff exactly one isolated block."""
    return d.n_isolated == 1
