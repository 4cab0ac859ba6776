"""
Graph topology, orientations, orientation flips and edge permutations.

Edges are kept as parallel numpy arrays (``src``, ``dst``, ``directed``) in a
frozen dataclass; every m x m operator elsewhere is indexed by this edge order.
Undirected edges are normalized to ``src < dst`` at construction, so an
orientation is nothing more than one flip bit per edge.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from config import make_rng

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Invalid topology (self-loop, duplicate edge, node out of range)"""
    pass


class GraphFormatError(GraphError):
    """Malformed graph text file"""

    def __init__(self, path: Union[str, Path], line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class DimensionError(ValueError):
    """Signal row count does not match the edge count"""
    pass


class OrientationError(ValueError):
    """Orientation or flip violates direction consistency"""
    pass


class EdgeKind(str, Enum):
    DIRECTED = "D"
    UNDIRECTED = "U"


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    kind: EdgeKind


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Nodes 0..n-1 plus an ordered edge list; immutable after construction"""
    n: int
    src: np.ndarray
    dst: np.ndarray
    directed: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        dst = np.asarray(self.dst, dtype=np.int64).reshape(-1)
        directed = np.asarray(self.directed, dtype=bool).reshape(-1)
        if not (len(src) == len(dst) == len(directed)):
            raise GraphError("src, dst and directed must have equal length")
        if self.n < 0:
            raise GraphError(f"negative node count {self.n}")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or src.max() >= self.n or dst.max() >= self.n:
                raise GraphError(f"edge endpoint out of range for n={self.n}")
            loops = np.flatnonzero(src == dst)
            if len(loops):
                raise GraphError(f"self-loop at edge {loops[0]} (node {src[loops[0]]})")

        # Canonical representative for undirected edges
        swap = ~directed & (src > dst)
        src, dst = np.where(swap, dst, src), np.where(swap, src, dst)

        # Uniqueness: {u,v} for undirected, (u,v) for directed
        und_keys = src[~directed] * self.n + dst[~directed]
        dir_keys = src[directed] * self.n + dst[directed]
        if len(np.unique(und_keys)) != len(und_keys):
            raise GraphError("duplicate undirected edge")
        if len(np.unique(dir_keys)) != len(dir_keys):
            raise GraphError("duplicate directed edge")

        object.__setattr__(self, "src", _readonly(src))
        object.__setattr__(self, "dst", _readonly(dst))
        object.__setattr__(self, "directed", _readonly(directed))

    # ─── Construction ───

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Union[Edge, Tuple[int, int, Union[str, EdgeKind]]]]) -> "Graph":
        graph, _ = cls.from_edges_with_orientation(n, edges)
        return graph

    @classmethod
    def from_edges_with_orientation(cls, n: int, edges) -> Tuple["Graph", "Orientation"]:
        """Build a graph and the orientation that keeps each given (u, v) as reference

        Undirected edges given as (v, u) with v > u are stored canonically and
        the returned orientation flips them back, so signals expressed along
        the input pairs stay valid.
        """
        src, dst, directed = [], [], []
        for item in edges:
            if isinstance(item, Edge):
                u, v, kind = item.u, item.v, item.kind
            else:
                u, v, kind = item
            src.append(int(u))
            dst.append(int(v))
            directed.append(EdgeKind(kind) is EdgeKind.DIRECTED)
        src_a = np.asarray(src, dtype=np.int64)
        dst_a = np.asarray(dst, dtype=np.int64)
        dir_a = np.asarray(directed, dtype=bool)
        graph = cls(n, src_a, dst_a, dir_a)
        flip = ~dir_a & (src_a > dst_a)
        return graph, Orientation(flip)

    @classmethod
    def empty(cls, n: int = 0) -> "Graph":
        return cls(n, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, bool))

    # ─── Views ───

    @property
    def m(self) -> int:
        return int(len(self.src))

    @cached_property
    def num_directed(self) -> int:
        return int(self.directed.sum())

    @property
    def edges(self) -> List[Edge]:
        return [
            Edge(int(u), int(v), EdgeKind.DIRECTED if d else EdgeKind.UNDIRECTED)
            for u, v, d in zip(self.src, self.dst, self.directed)
        ]

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m}, directed={self.num_directed})"

    def reindexed(self, perm: np.ndarray) -> "Graph":
        return Graph(self.n, self.src[perm], self.dst[perm], self.directed[perm])


def disjoint_union(graphs: Sequence[Graph]) -> Tuple[Graph, np.ndarray, np.ndarray]:
    """Block union of graphs; returns the graph plus node and edge offsets"""
    node_off = np.zeros(len(graphs) + 1, dtype=np.int64)
    edge_off = np.zeros(len(graphs) + 1, dtype=np.int64)
    for i, g in enumerate(graphs):
        node_off[i + 1] = node_off[i] + g.n
        edge_off[i + 1] = edge_off[i] + g.m
    src = np.concatenate([g.src + node_off[i] for i, g in enumerate(graphs)]) if graphs else np.zeros(0, np.int64)
    dst = np.concatenate([g.dst + node_off[i] for i, g in enumerate(graphs)]) if graphs else np.zeros(0, np.int64)
    directed = np.concatenate([g.directed for g in graphs]) if graphs else np.zeros(0, bool)
    return Graph(int(node_off[-1]), src, dst, directed), node_off, edge_off


# ─── Orientations ───

@dataclass(frozen=True, eq=False)
class Orientation:
    """flip[e] == True means the stored (u, v) is traversed as (v, u)"""
    flip: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "flip", _readonly(np.asarray(self.flip, dtype=bool).reshape(-1)))

    def __len__(self) -> int:
        return int(len(self.flip))

    def is_direction_consistent(self, g: Graph) -> bool:
        return len(self.flip) == g.m and not bool(np.any(self.flip & g.directed))

    def check(self, g: Graph) -> None:
        if len(self.flip) != g.m:
            raise DimensionError(f"orientation has {len(self.flip)} entries, graph has {g.m} edges")
        bad = np.flatnonzero(self.flip & g.directed)
        if len(bad):
            raise OrientationError(f"directed edge {bad[0]} is flipped against its direction")

    def endpoints(self, g: Graph) -> Tuple[np.ndarray, np.ndarray]:
        """(tail, head) of every edge under this orientation"""
        tail = np.where(self.flip, g.dst, g.src)
        head = np.where(self.flip, g.src, g.dst)
        return tail, head

    def apply(self, f: "OrientationFlip") -> "Orientation":
        return Orientation(self.flip ^ (f.sign < 0))

    def equals(self, other: "Orientation") -> bool:
        return np.array_equal(self.flip, other.flip)


@dataclass(frozen=True, eq=False)
class OrientationFlip:
    """The diagonal +-1 transform between two orientations"""
    sign: np.ndarray

    def __post_init__(self):
        sign = np.asarray(self.sign, dtype=np.int8).reshape(-1)
        if not np.all((sign == 1) | (sign == -1)):
            raise OrientationError("flip signs must be +1 or -1")
        object.__setattr__(self, "sign", _readonly(sign))

    @classmethod
    def identity(cls, m: int) -> "OrientationFlip":
        return cls(np.ones(m, dtype=np.int8))

    @classmethod
    def between(cls, a: Orientation, b: Orientation) -> "OrientationFlip":
        return cls(np.where(a.flip ^ b.flip, -1, 1))

    def check(self, g: Graph) -> None:
        if len(self.sign) != g.m:
            raise DimensionError(f"flip has {len(self.sign)} entries, graph has {g.m} edges")
        bad = np.flatnonzero((self.sign < 0) & g.directed)
        if len(bad):
            raise OrientationError(f"flip touches directed edge {bad[0]}")

    def compose(self, other: "OrientationFlip") -> "OrientationFlip":
        return OrientationFlip(self.sign * other.sign)


@dataclass(frozen=True, eq=False)
class EdgePermutation:
    """New edge i is old edge perm[i]"""
    perm: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64).reshape(-1)
        if not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise GraphError("edge permutation is not a bijection on 0..m-1")
        object.__setattr__(self, "perm", _readonly(perm))

    @classmethod
    def identity(cls, m: int) -> "EdgePermutation":
        return cls(np.arange(m))

    @classmethod
    def random(cls, m: int, seed: int) -> "EdgePermutation":
        return cls(make_rng(seed).permutation(m))

    def inverse(self) -> "EdgePermutation":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return EdgePermutation(inv)

    def permute_rows(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != len(self.perm):
            raise DimensionError(f"signal has {x.shape[0]} rows, permutation has {len(self.perm)}")
        return x[self.perm]

    def permute_flip(self, f: OrientationFlip) -> OrientationFlip:
        return OrientationFlip(self.permute_rows(f.sign))


# ─── Operations ───

def canonical_orientation(g: Graph) -> Orientation:
    return Orientation(np.zeros(g.m, dtype=bool))


def random_orientation_flip(g: Graph, seed: int) -> OrientationFlip:
    """Uniform i.i.d. sign on undirected edges, +1 on directed ones"""
    rng = make_rng(seed)
    coin = rng.integers(0, 2, size=g.m)
    sign = np.where((coin == 1) & ~g.directed, -1, 1)
    return OrientationFlip(sign)


def random_orientation(g: Graph, seed: int) -> Orientation:
    return canonical_orientation(g).apply(random_orientation_flip(g, seed))


def apply_flip(x_equ: np.ndarray, f: OrientationFlip) -> np.ndarray:
    """Multiply row e by sign[e]; only for orientation-equivariant signals"""
    x = np.asarray(x_equ)
    if x.shape[0] != len(f.sign):
        raise DimensionError(f"signal has {x.shape[0]} rows, flip has {len(f.sign)}")
    if x.ndim == 1:
        return x * f.sign
    return x * f.sign[:, None]


def apply_edge_permutation(
    g: Graph,
    orientation: Orientation,
    signals: Sequence[Optional[np.ndarray]],
    p: EdgePermutation,
) -> Tuple[Graph, Orientation, List[Optional[np.ndarray]]]:
    """Reindex edges, flip bits and every signal's rows with the same permutation"""
    if len(p.perm) != g.m:
        raise DimensionError(f"permutation has {len(p.perm)} entries, graph has {g.m} edges")
    new_signals = [None if s is None else p.permute_rows(s) for s in signals]
    return g.reindexed(p.perm), Orientation(orientation.flip[p.perm]), new_signals


def line_graph_pattern(g: Graph) -> sp.csr_matrix:
    """Binary adjacency A of the line graph (edges sharing at least one node)"""
    m = g.m
    if m == 0:
        return sp.csr_matrix((0, 0), dtype=np.float64)
    incidence = sp.csr_matrix(
        (np.ones(2 * m), (np.concatenate([g.src, g.dst]), np.concatenate([np.arange(m), np.arange(m)]))),
        shape=(g.n, m),
    )
    shared = (incidence.T @ incidence).tocsr()
    shared.setdiag(0)
    shared.eliminate_zeros()
    shared.data[:] = 1.0
    shared.sort_indices()
    return shared


def line_graph_adjacency(g: Graph) -> sp.csr_matrix:
    """Line-graph Laplacian D - A over edges; A[e, e'] = 1 iff e != e' share a node"""
    a = line_graph_pattern(g)
    degree = np.asarray(a.sum(axis=1)).reshape(-1)
    lap = (sp.diags(degree) - a).tocsr()
    lap.sort_indices()
    return lap


# ─── Text format ───

def dumps_graph(g: Graph, orientation: Optional[Orientation] = None) -> str:
    """`n m` header then `u v D|U` per edge, written along the orientation"""
    lines = [f"{g.n} {g.m}"]
    if orientation is None:
        tail, head = g.src, g.dst
    else:
        tail, head = orientation.endpoints(g)
    for u, v, d in zip(tail, head, g.directed):
        lines.append(f"{u} {v} {'D' if d else 'U'}")
    return "\n".join(lines) + "\n"


def loads_graph(text: str, path: Union[str, Path] = "<string>") -> Tuple[Graph, Orientation]:
    """Parse the text format; undirected pairs keep their written order as orientation"""
    rows = [(i + 1, line.split("#", 1)[0].strip()) for i, line in enumerate(text.splitlines())]
    rows = [(no, line) for no, line in rows if line]
    if not rows:
        raise GraphFormatError(path, 1, "missing `n m` header")
    header_no, header = rows[0]
    parts = header.split()
    if len(parts) != 2:
        raise GraphFormatError(path, header_no, f"header must be `n m`, got {header!r}")
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphFormatError(path, header_no, f"non-integer header {header!r}")
    if len(rows) - 1 != m:
        raise GraphFormatError(path, header_no, f"header announces {m} edges, found {len(rows) - 1}")

    edges = []
    for line_no, line in rows[1:]:
        fields = line.split()
        if len(fields) != 3:
            raise GraphFormatError(path, line_no, f"expected `u v D|U`, got {line!r}")
        try:
            u, v = int(fields[0]), int(fields[1])
        except ValueError:
            raise GraphFormatError(path, line_no, f"non-integer endpoint in {line!r}")
        if fields[2] not in ("D", "U"):
            raise GraphFormatError(path, line_no, f"edge kind must be D or U, got {fields[2]!r}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(path, line_no, f"node index out of range for n={n}")
        edges.append((u, v, fields[2]))
    try:
        return Graph.from_edges_with_orientation(n, edges)
    except GraphError as e:
        raise GraphFormatError(path, header_no, str(e))


def save_graph(path: Union[str, Path], g: Graph, orientation: Optional[Orientation] = None) -> None:
    Path(path).write_text(dumps_graph(g, orientation))


def load_graph(path: Union[str, Path]) -> Tuple[Graph, Orientation]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph file not found: {path}")
    return loads_graph(path.read_text(), path)


# ─── Random mixed graphs ───

def random_mixed_graph(
    seed: int,
    n_range: Tuple[int, int] = (5, 30),
    p_edge: float = 0.2,
    p_directed: float = 0.5,
    max_edges: Optional[int] = None,
) -> Graph:
    """Erdos-Renyi over unordered pairs, each edge directed w.p. p_directed"""
    rng = make_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p_edge
    u, v = iu[keep], iv[keep]
    if max_edges is not None and len(u) > max_edges:
        sel = np.sort(rng.choice(len(u), size=max_edges, replace=False))
        u, v = u[sel], v[sel]
    directed = rng.random(len(u)) < p_directed
    reverse = rng.random(len(u)) < 0.5
    src = np.where(directed & reverse, v, u)
    dst = np.where(directed & reverse, u, v)
    return Graph(n, src, dst, directed)
