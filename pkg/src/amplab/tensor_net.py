"""Ordered-multigraph tensor networks and the combinatorial checkers built
on them: definitional value evaluation, an elimination-based contraction
path, Gaussian moment evaluation by pairings, composition-ratio bounds for
tensor families, and the colored-cycle component-count inequality.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ensembles import load_matrix, save_matrix
from .exceptions import BudgetError, DimensionError, NumericError, SpecError
from .rng import RngStream
from .vecmat import split_index

DENSE_MATERIALIZE_CAP = 64  # structured tensors are never densified above this n
DEFAULT_BUDGET_BITS = 30.0  # enumeration allowed while indices * log2(n) <= this


# ---------------------------------------------------------------------------
# Tensors


@dataclass
class DenseTensor:
    """Order-k tensor over [n]^k, stored densely or by structural formula.

    kinds: "dense" (values holds the full array), "diagonal" (values holds the
    length-n diagonal; entries vanish off the repeated-index line),
    "identity" (1 iff all indices agree), "alternating" (the even-order
    matrix-product pattern on vec(R^(M x N)), prefactor N^(1 - k/2)).
    """

    order: int
    n: int
    kind: str = "dense"
    values: Optional[np.ndarray] = None
    M: int = 0
    N: int = 0

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        n = arr.shape[0] if arr.ndim else 1
        if any(s != n for s in arr.shape):
            raise DimensionError("dense tensor must have equal dims")
        return cls(order=arr.ndim, n=n, kind="dense", values=arr)

    @classmethod
    def vector(cls, v) -> "DenseTensor":
        return cls.from_array(np.asarray(v, dtype=np.float64).reshape(-1))

    @classmethod
    def diagonal(cls, values, order: int) -> "DenseTensor":
        values = np.asarray(values, dtype=np.float64)
        if order < 1:
            raise DimensionError("order must be >= 1")
        return cls(order=order, n=values.size, kind="diagonal", values=values)

    @classmethod
    def identity(cls, n: int, order: int) -> "DenseTensor":
        return cls(order=order, n=n, kind="identity")

    @classmethod
    def alternating(cls, k: int, M: int, N: int) -> "DenseTensor":
        if k % 2 != 0 or k < 2:
            raise SpecError("alternating tensors exist for even order k >= 2")
        return cls(order=k, n=M * N, kind="alternating", M=M, N=N)

    def gather(self, idx: Sequence[np.ndarray]) -> np.ndarray:
        """Entries at a batch of index tuples (idx holds one array per slot)."""
        if len(idx) != self.order:
            raise DimensionError(f"expected {self.order} index arrays, got {len(idx)}")
        if self.kind == "dense":
            return self.values[tuple(idx)]
        if self.kind in ("diagonal", "identity"):
            eq = np.ones_like(idx[0], dtype=bool)
            for other in idx[1:]:
                eq &= other == idx[0]
            base = self.values[idx[0]] if self.kind == "diagonal" else 1.0
            return np.where(eq, base, 0.0)
        # alternating: constraints alternate between the column and row labels
        # of the (row, col) pairs, with wraparound to the first slot
        k = self.order
        rows, cols = zip(*(split_index(i, self.M) for i in idx))
        out = np.full(np.shape(idx[0]), float(self.N) ** (1.0 - k / 2.0))
        for p in range(k):
            q = (p + 1) % k
            if p % 2 == 0:
                out = out * (cols[p] == cols[q])
            else:
                out = out * (rows[p] == rows[q])
        return out

    def to_dense(self) -> np.ndarray:
        if self.kind == "dense":
            return self.values
        if self.n > DENSE_MATERIALIZE_CAP:
            raise BudgetError(
                f"refusing to materialize structured tensor with n={self.n} > "
                f"{DENSE_MATERIALIZE_CAP}"
            )
        grids = np.meshgrid(*([np.arange(self.n)] * self.order), indexing="ij")
        return self.gather([g.ravel() for g in grids]).reshape((self.n,) * self.order)

    def entry(self, idx: Sequence[int]) -> float:
        return float(self.gather([np.asarray([i]) for i in idx])[0])


def alternating_tensor(k: int, M: int, N: int) -> DenseTensor:
    return DenseTensor.alternating(k, M, N)


# ---------------------------------------------------------------------------
# Ordered multigraphs and labelings


@dataclass
class OrderedMultigraph:
    """Undirected multigraph, no self-loops or isolated vertices, with a
    declared ordering of the edges incident to each vertex."""

    num_vertices: int
    edges: List[Tuple[int, int]]
    incidence: List[List[int]]

    @classmethod
    def from_edges(cls, num_vertices, edges, incidence=None) -> "OrderedMultigraph":
        edges = [tuple(e) for e in edges]
        if incidence is None:
            incidence = [[] for _ in range(num_vertices)]
            for eid, (a, b) in enumerate(edges):
                incidence[a].append(eid)
                incidence[b].append(eid)
        g = cls(num_vertices=num_vertices, edges=edges, incidence=incidence)
        g.validate()
        return g

    def validate(self):
        counts = [0] * len(self.edges)
        for eid, (a, b) in enumerate(self.edges):
            if a == b:
                raise SpecError(f"edge {eid} is a self-loop")
            if not (0 <= a < self.num_vertices and 0 <= b < self.num_vertices):
                raise SpecError(f"edge {eid} references a missing vertex")
        if len(self.incidence) != self.num_vertices:
            raise SpecError("incidence list length must equal vertex count")
        for v, order in enumerate(self.incidence):
            if not order:
                raise SpecError(f"vertex {v} is isolated")
            for eid in order:
                if v not in self.edges[eid]:
                    raise SpecError(f"vertex {v} lists non-incident edge {eid}")
                counts[eid] += 1
        if any(c != 2 for c in counts):
            raise SpecError("every edge must appear in exactly two vertex orderings")

    def degree(self, v: int) -> int:
        return len(self.incidence[v])


TensorLabeling = Dict[int, DenseTensor]


def _check_labeling(graph: OrderedMultigraph, labeling: TensorLabeling):
    for v in range(graph.num_vertices):
        if v not in labeling:
            raise SpecError(f"vertex {v} has no tensor label")
        if labeling[v].order != graph.degree(v):
            raise SpecError(
                f"vertex {v}: tensor order {labeling[v].order} != degree {graph.degree(v)}"
            )


def _budget_guard(num_indices: int, n: int, budget_bits: float):

    bits = num_indices * np.log2(max(n, 2))
    if bits > budget_bits:
        raise BudgetError(
            f"enumeration over {num_indices} indices of size {n} needs "
            f"{bits:.1f} bits > budget {budget_bits}"
        )


def _iter_assignments(num_indices: int, n: int, chunk: int = 1 << 16):
    """Yield tuples of index arrays covering [n]^num_indices in chunks."""
    total = n**num_indices
    shape = (n,) * num_indices
    start = 0
    while start < total:
        stop = min(start + chunk, total)
        flat = np.arange(start, stop)
        yield np.unravel_index(flat, shape)
        start = stop


def eval_value_bruteforce(
    graph: OrderedMultigraph,
    labeling: TensorLabeling,
    n: int,
    budget_bits: float = DEFAULT_BUDGET_BITS,
) -> float:
    """Definitional value: sum over all edge-index assignments of the product
    of labeled tensor entries, indices read in each vertex's edge order."""
    _check_labeling(graph, labeling)
    num_edges = len(graph.edges)
    _budget_guard(num_edges, n, budget_bits)
    total = 0.0
    for assign in _iter_assignments(num_edges, n):
        prod = None
        for v in range(graph.num_vertices):
            vals = labeling[v].gather([assign[e] for e in graph.incidence[v]])
            prod = vals if prod is None else prod * vals
        total += float(prod.sum())
    return total


def eval_value_contraction(
    graph: OrderedMultigraph, labeling: TensorLabeling, n: int
) -> float:
    """Pairwise-elimination evaluation; agrees with the brute-force value."""
    _check_labeling(graph, labeling)
    if len(graph.edges) > 52:
        raise BudgetError("contraction path supports at most 52 distinct edges")
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    subs = []
    arrays = []
    for v in range(graph.num_vertices):
        subs.append("".join(letters[e] for e in graph.incidence[v]))
        arrays.append(labeling[v].to_dense())
    try:
        return float(np.einsum(",".join(subs) + "->", *arrays, optimize=True))
    except MemoryError as exc:  # pragma: no cover - depends on host memory
        raise NumericError("contraction intermediates exceeded memory") from exc


# ---------------------------------------------------------------------------
# Wick's rule


def _pairings(block: Tuple[int, ...]):
    """All perfect matchings of a tuple, first element paired in index order."""
    if not block:
        yield ()
        return
    head, rest = block[0], block[1:]
    for i, partner in enumerate(rest):
        for sub in _pairings(rest[:i] + rest[i + 1 :]):
            yield ((head, partner),) + sub


def wick_expectation(
    tensor: DenseTensor,
    sigma: Sequence[int],
    n: int,
    budget_bits: float = DEFAULT_BUDGET_BITS,
) -> float:
    """E T[xi_(sigma(1)), ..., xi_(sigma(d))] for i.i.d. standard Gaussian
    vectors xi_1, xi_2, ...: the sum over pairings of [d] refining sigma's
    preimage partition of the identity-contracted tensor sums.

    Returns exactly 0 when some stream appears an odd number of times.
    """
    d = tensor.order
    if len(sigma) != d:
        raise DimensionError("sigma must assign a stream to each tensor slot")
    blocks: Dict[int, List[int]] = {}
    for pos, s in enumerate(sigma):
        blocks.setdefault(s, []).append(pos)
    if any(len(b) % 2 for b in blocks.values()):
        return 0.0
    if d == 0:
        return float(tensor.to_dense())
    _budget_guard(d // 2, n, budget_bits)
    per_block = [list(_pairings(tuple(b))) for b in blocks.values()]
    total = 0.0
    for combo in itertools.product(*per_block):
        pairing = [pair for blockpairs in combo for pair in blockpairs]
        slot_of = {}
        for free, (a, b) in enumerate(pairing):
            slot_of[a] = free
            slot_of[b] = free
        subtotal = 0.0
        for assign in _iter_assignments(d // 2, n):
            subtotal += float(tensor.gather([assign[slot_of[p]] for p in range(d)]).sum())
        total += subtotal
    return total


def wick_expectation_mc(
    tensor: DenseTensor,
    sigma: Sequence[int],
    n: int,
    samples: int,
    rng: RngStream,
    chunk: int = 1 << 14,
) -> Tuple[float, float]:
    """Monte-Carlo estimate of the same Gaussian expectation.

    Returns (mean, standard error) over the requested number of samples.
    """
    d = tensor.order
    if len(sigma) != d:
        raise DimensionError("sigma must assign a stream to each tensor slot")
    streams = sorted(set(sigma))
    d1 = d // 2
    flat = tensor.to_dense().reshape(n**d1, n ** (d - d1))
    gen = rng.generator()
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        draws = {s: gen.standard_normal((b, n)) for s in streams}

        def kron(positions):
            out = np.ones((b, 1))
            for p in positions:
                out = (out[:, :, None] * draws[sigma[p]][:, None, :]).reshape(b, -1)
            return out

        left = kron(range(d1))
        right = kron(range(d1, d))
        vals = np.einsum("bi,bi->b", left @ flat, right)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        done += b
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0)
    return mean, float(np.sqrt(var / samples))


# ---------------------------------------------------------------------------
# Bounded composition queries


@dataclass
class BcpQuery:
    """Index pattern of a composition sum: m tensors of the given orders whose
    slots are mapped onto ell shared indices by the surjection pi."""

    orders: List[int]
    ell: int
    pi: List[int]  # length sum(orders); values in {0, ..., ell-1}

    def __post_init__(self):
        if len(self.pi) != sum(self.orders):
            raise SpecError("pi must map every tensor slot")
        if set(self.pi) != set(range(self.ell)):
            raise SpecError("pi must be surjective onto the index set")

    @property
    def m(self) -> int:
        return len(self.orders)

    def slot_ranges(self):
        out = []
        start = 0
        for k in self.orders:
            out.append(range(start, start + k))
            start += k
        return out


def validate_bcp_query(query: BcpQuery) -> dict:
    """Report whether each index has even multiplicity and whether the
    tensor-index incidence pattern is connected."""
    counts = np.bincount(query.pi, minlength=query.ell)
    even = bool(np.all(counts % 2 == 0))

    parent = list(range(query.m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner: Dict[int, int] = {}
    for a, slots in enumerate(query.slot_ranges()):
        for s in slots:
            j = query.pi[s]
            if j in owner:
                ra, rb = find(a), find(owner[j])
                parent[ra] = rb
            else:
                owner[j] = a
    connected = len({find(a) for a in range(query.m)}) == 1
    return {"even_multiplicity": even, "connected": connected}


def bcp_ratio(
    query: BcpQuery,
    tensors: Sequence[DenseTensor],
    n: int,
    budget_bits: float = DEFAULT_BUDGET_BITS,
) -> float:
    """(1/n) |sum over shared indices of the product of tensor entries|."""
    if len(tensors) != query.m:
        raise SpecError("tensor count must match the query")
    for t, k in zip(tensors, query.orders):
        if t.order != k:
            raise DimensionError(f"tensor order {t.order} != declared {k}")
    _budget_guard(query.ell, n, budget_bits)
    total = 0.0
    ranges = query.slot_ranges()
    for assign in _iter_assignments(query.ell, n):
        prod = None
        for tensor, slots in zip(tensors, ranges):
            vals = tensor.gather([assign[query.pi[s]] for s in slots])
            prod = vals if prod is None else prod * vals
        total += float(prod.sum())
    return abs(total) / n


# ---------------------------------------------------------------------------
# Tensor-represented polynomials


def contract_leading(tensor: DenseTensor, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """T[v_1, ..., v_d, .]: contract the first d slots, leaving the last."""
    d = len(vectors)
    if tensor.order != d + 1:
        raise DimensionError(f"tensor order {tensor.order} != {d} inputs + 1 output")
    if tensor.kind == "diagonal" or tensor.kind == "identity":
        out = np.ones(tensor.n)
        for v in vectors:
            out = out * v
        if tensor.kind == "diagonal":
            out = out * tensor.values
        return out
    if tensor.kind == "alternating":
        k = tensor.order
        mats = [np.asarray(v).reshape((tensor.M, tensor.N), order="F") for v in vectors]
        prod = mats[0]
        for j in range(1, k - 1):
            prod = prod @ (mats[j].T if j % 2 == 1 else mats[j])
        return float(tensor.N) ** (1.0 - k / 2.0) * prod.reshape(-1, order="F")
    letters = "abcdefghijklmnopqrstuvwxyz"
    sub = letters[: d + 1] + "," + ",".join(letters[i] for i in range(d)) + "->" + letters[d]
    return np.einsum(sub, tensor.values, *[np.asarray(v) for v in vectors])


def poly_from_tensors(
    constant: Optional[DenseTensor],
    terms: Sequence[Tuple[Sequence[int], DenseTensor]],
    z: np.ndarray,
) -> np.ndarray:
    """Evaluate a tensor-represented polynomial at the stack z in R^(n x t).

    ``terms`` holds (sigma, tensor) pairs: sigma lists the 0-based columns of
    z fed to the tensor's input slots, and the tensor has order len(sigma)+1.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    out = np.zeros(n) if constant is None else constant.to_dense().astype(float).copy()
    if constant is not None and constant.order != 1:
        raise DimensionError("constant term must be an order-1 tensor")
    for sigma, tensor in terms:
        vectors = [z[:, s] for s in sigma]
        out = out + contract_leading(tensor, vectors)
    return out


# ---------------------------------------------------------------------------
# Colored alternating-cycle multigraphs


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def count(self):
        return len({self.find(x) for x in self.parent})


def alt_cycle_component_bound_check(cycles: Sequence[Sequence[int]]) -> dict:
    """Check c(G_R) + c(G_B) <= |E|/2 - m + 2 c(G) for a union of even-length
    cycles whose edges alternate red/blue (first edge red).

    Each cycle is a vertex sequence v_1, ..., v_L (L even, self-loop steps
    allowed); edge i joins v_i to v_(i+1) with wraparound. Every vertex must
    end up with nonzero even degree in each color.
    """
    if not cycles:
        raise SpecError("need at least one cycle")
    red, blue = [], []
    vertices = set()
    for cyc in cycles:
        cyc = list(cyc)
        if len(cyc) < 2 or len(cyc) % 2 != 0:
            raise SpecError("each cycle must have nonzero even length")
        vertices.update(cyc)
        for i, a in enumerate(cyc):
            b = cyc[(i + 1) % len(cyc)]
            (red if i % 2 == 0 else blue).append((a, b))

    def degrees(edge_list):
        deg = {v: 0 for v in vertices}
        for a, b in edge_list:
            deg[a] += 1
            deg[b] += 1  # a self-loop hits the same vertex twice
        return deg

    for name, edge_list in (("red", red), ("blue", blue)):
        for v, dg in degrees(edge_list).items():
            if dg == 0 or dg % 2 != 0:
                raise SpecError(f"vertex {v} has {name} degree {dg}; need nonzero even")

    def components(edge_list):
        uf = _UnionFind(vertices)
        for a, b in edge_list:
            uf.union(a, b)
        return uf.count()

    c_red = components(red)
    c_blue = components(blue)
    c_all = components(red + blue)
    num_edges = len(red) + len(blue)
    lhs = c_red + c_blue
    rhs = num_edges / 2 - len(cycles) + 2 * c_all
    return {
        "c_red": c_red,
        "c_blue": c_blue,
        "c_graph": c_all,
        "num_edges": num_edges,
        "num_cycles": len(cycles),
        "lhs": lhs,
        "rhs": rhs,
        "holds": lhs <= rhs,
    }


# ---------------------------------------------------------------------------
# Text serialization of networks


def save_network(path: str, graph: OrderedMultigraph, labeling: TensorLabeling):
    """Text format: header, per-vertex ordered edge ids, per-vertex tensor tag
    with payload files stored next to the network file."""
    _check_labeling(graph, labeling)
    base = os.path.splitext(path)[0]
    with open(path, "w", encoding="utf-8") as fh:
        n = labeling[0].n
        fh.write(f"vertices {graph.num_vertices} edges {len(graph.edges)} n {n}\n")
        for a, b in graph.edges:
            fh.write(f"edge {a} {b}\n")
        for v in range(graph.num_vertices):
            fh.write(f"order {v}: " + " ".join(map(str, graph.incidence[v])) + "\n")
        for v in range(graph.num_vertices):
            t = labeling[v]
            if t.kind == "identity":
                fh.write(f"label {v}: identity {t.order}\n")
            elif t.kind == "alternating":
                fh.write(f"label {v}: alternating {t.order} {t.M} {t.N}\n")
            elif t.kind == "diagonal":
                payload = f"{base}.v{v}.txt"
                save_matrix(payload, t.values.reshape(-1, 1))
                fh.write(f"label {v}: diagonal {t.order} {os.path.basename(payload)}\n")
            else:
                payload = f"{base}.v{v}.txt"
                save_matrix(payload, t.values.reshape(-1, 1))
                fh.write(f"label {v}: dense {t.order} {os.path.basename(payload)}\n")


def load_network(path: str) -> Tuple[OrderedMultigraph, TensorLabeling]:
    folder = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().split()
        num_v, num_e, n = int(head[1]), int(head[3]), int(head[5])
        edges = []
        for _ in range(num_e):
            parts = fh.readline().split()
            edges.append((int(parts[1]), int(parts[2])))
        incidence = []
        for _ in range(num_v):
            parts = fh.readline().split(":")[1].split()
            incidence.append([int(x) for x in parts])
        labeling: TensorLabeling = {}
        for _ in range(num_v):
            head, spec = fh.readline().split(":")
            v = int(head.split()[1])
            parts = spec.split()
            kind = parts[0]
            order = int(parts[1])
            if kind == "identity":
                labeling[v] = DenseTensor.identity(n, order)
            elif kind == "alternating":
                labeling[v] = DenseTensor.alternating(order, int(parts[2]), int(parts[3]))
            elif kind == "diagonal":
                vals = load_matrix(os.path.join(folder, parts[2])).reshape(-1)
                labeling[v] = DenseTensor.diagonal(vals, order)
            else:
                vals = load_matrix(os.path.join(folder, parts[2])).reshape(-1)
                labeling[v] = DenseTensor.from_array(vals.reshape((n,) * order))
    graph = OrderedMultigraph.from_edges(num_v, edges, incidence)
    return graph, labeling
