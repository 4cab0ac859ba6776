"""
Boundary operators and magnetic edge Laplacians.

All matrices are ``scipy.sparse.csr_matrix`` with complex128 entries, sorted
indices and no stored entries below ``ZERO_TOL`` in magnitude.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from config import DENSE_MAX_EDGES, ZERO_TOL
from graph_core import DimensionError, Graph, Orientation, line_graph_pattern

logger = logging.getLogger(__name__)

SparseComplexMatrix = sp.csr_matrix


class OperatorError(ValueError):
    """Invalid operator request (bad q, non-square input, too large for dense work)"""
    pass


class NotAdjacentError(OperatorError):
    """Entry oracle queried for two edges that share no node"""
    pass


class Variant(str, Enum):
    EQU = "equ"
    INV = "inv"


@dataclass(frozen=True)
class BoundaryKind:
    variant: Variant
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (0.0 <= float(self.q) <= 1.0):
            raise OperatorError(f"q must lie in [0, 1], got {self.q}")


class LaplacianKind(Enum):
    """(left, right) boundary variants: L = B_left^H B_right"""
    EQU = (Variant.EQU, Variant.EQU)
    INV = (Variant.INV, Variant.INV)
    EQU_TO_INV = (Variant.INV, Variant.EQU)
    INV_TO_EQU = (Variant.EQU, Variant.INV)

    @property
    def left(self) -> Variant:
        return self.value[0]

    @property
    def right(self) -> Variant:
        return self.value[1]

    @property
    def same_modality(self) -> bool:
        return self.left is self.right

    @classmethod
    def parse(cls, name: str) -> "LaplacianKind":
        key = name.strip().lower().replace("-", "_").replace(">", "").replace("→", "_to_")
        aliases = {
            "equ": cls.EQU, "inv": cls.INV,
            "equ_to_inv": cls.EQU_TO_INV, "equ_inv": cls.EQU_TO_INV,
            "inv_to_equ": cls.INV_TO_EQU, "inv_equ": cls.INV_TO_EQU,
        }
        if key not in aliases:
            raise OperatorError(f"unknown Laplacian kind {name!r}")
        return aliases[key]


def default_q(g: Graph) -> float:
    """q = 1/m, the longest possible cycle length"""
    return 1.0 / g.m if g.m else 0.0


def finalize(mat: sp.spmatrix) -> sp.csr_matrix:
    """Sum duplicates, drop |x| < ZERO_TOL, sort column indices"""
    out = sp.csr_matrix(mat, dtype=np.complex128)
    out.sum_duplicates()
    out.data[np.abs(out.data) < ZERO_TOL] = 0
    out.eliminate_zeros()
    out.sort_indices()
    return out


# ─── Boundaries ───

def _incidence_values(g: Graph, variant: Variant, q: float) -> Tuple[np.ndarray, np.ndarray]:
    """Entries at (tail, e) and (head, e) for every edge"""
    phase = np.exp(1j * np.pi * q)
    tail_val = np.ones(g.m, dtype=np.complex128)
    head_val = np.ones(g.m, dtype=np.complex128)
    tail_val[g.directed] = phase
    head_val[g.directed] = np.conj(phase)
    if variant is Variant.EQU:
        tail_val = -tail_val
    return tail_val, head_val


def boundary(g: Graph, o: Orientation, k: BoundaryKind) -> sp.csr_matrix:
    """n x m boundary operator, magnetic when q > 0"""
    o.check(g)
    tail, head = o.endpoints(g)
    tail_val, head_val = _incidence_values(g, k.variant, k.q)
    edges = np.arange(g.m)
    mat = sp.coo_matrix(
        (np.concatenate([tail_val, head_val]), (np.concatenate([tail, head]), np.concatenate([edges, edges]))),
        shape=(g.n, g.m),
    )
    return finalize(mat)


def split_boundaries(g: Graph, o: Orientation, variant: Variant) -> Dict[str, sp.csr_matrix]:
    """Undirected part plus directed-source and directed-target parts (real)

    ``undirected`` keeps the columns of undirected edges, ``source`` has the
    tail entry of each directed edge and ``target`` its head entry.
    """
    o.check(g)
    tail, head = o.endpoints(g)
    und = ~g.directed
    sign_tail = -1.0 if variant is Variant.EQU else 1.0
    edges = np.arange(g.m)

    def _build(rows, cols, vals):
        return finalize(sp.coo_matrix((vals, (rows, cols)), shape=(g.n, g.m)))

    return {
        "undirected": _build(
            np.concatenate([tail[und], head[und]]),
            np.concatenate([edges[und], edges[und]]),
            np.concatenate([np.full(und.sum(), sign_tail), np.ones(und.sum())]),
        ),
        "source": _build(tail[g.directed], edges[g.directed], np.full(g.num_directed, sign_tail)),
        "target": _build(head[g.directed], edges[g.directed], np.ones(g.num_directed)),
    }


# ─── Laplacians ───

def _incidence_buckets(g: Graph, o: Orientation, left: Variant, right: Variant, q: float):
    """Incidences sorted by node: (node, edge, left value, right value)"""
    tail, head = o.endpoints(g)
    lt, lh = _incidence_values(g, left, q)
    rt, rh = _incidence_values(g, right, q)
    nodes = np.concatenate([tail, head])
    edges = np.concatenate([np.arange(g.m), np.arange(g.m)])
    lvals = np.concatenate([lt, lh])
    rvals = np.concatenate([rt, rh])
    order = np.argsort(nodes, kind="stable")
    return nodes[order], edges[order], lvals[order], rvals[order]


def laplacian(g: Graph, o: Orientation, k: LaplacianKind, q: Optional[float] = None) -> sp.csr_matrix:
    """m x m Laplacian B_left^H B_right assembled from node-incidence buckets

    For every node all pairs of incident edges contribute
    conj(B_left[v, e]) * B_right[v, e']. Edges sharing both endpoints
    accumulate two contributions, exactly as the matrix product does.
    """
    o.check(g)
    if q is None:
        q = default_q(g)
    BoundaryKind(Variant.EQU, q)  # validates q
    if g.m == 0:
        return sp.csr_matrix((0, 0), dtype=np.complex128)

    nodes, edges, lvals, rvals = _incidence_buckets(g, o, k.left, k.right, q)
    _, starts, counts = np.unique(nodes, return_index=True, return_counts=True)

    # Pair every incidence with every incidence of its bucket
    group_of = np.repeat(np.arange(len(starts)), counts)
    deg = counts[group_of]
    i_idx = np.repeat(np.arange(len(nodes)), deg)
    pair_start = np.repeat(np.cumsum(deg) - deg, deg)
    j_idx = np.repeat(starts[group_of], deg) + (np.arange(len(i_idx)) - pair_start)

    values = np.conj(lvals[i_idx]) * rvals[j_idx]
    mat = sp.coo_matrix((values, (edges[i_idx], edges[j_idx])), shape=(g.m, g.m))
    return finalize(mat)


def laplacian_entry_oracle(g: Graph, o: Orientation, k: LaplacianKind, q: float, e: int, e_prime: int) -> complex:
    """Closed-form entry by case analysis over shared nodes

    At a shared node each edge is either incoming (side +1) or outgoing
    (side -1). Equivariant variants contribute the side as a sign, so
    consecutive edges re-orient (-1) and aligned ones do not (+1). Directed
    edges add a phase of -side * pi * q, conjugated on the left.
    """
    o.check(g)
    tail, head = o.endpoints(g)
    shared = {int(tail[e]), int(head[e])} & {int(tail[e_prime]), int(head[e_prime])}
    if not shared:
        raise NotAdjacentError(f"edges {e} and {e_prime} share no node")

    def side(edge: int, node: int) -> int:
        return 1 if int(head[edge]) == node else -1

    def sign(variant: Variant, s: int) -> int:
        return s if variant is Variant.EQU else 1

    total = 0j
    for v in sorted(shared):
        s_e, s_f = side(e, v), side(e_prime, v)
        d_e = 1 if g.directed[e] else 0
        d_f = 1 if g.directed[e_prime] else 0
        reorient = sign(k.left, s_e) * sign(k.right, s_f)
        if d_e == 0 and d_f == 0:
            total += reorient
        else:
            total += reorient * np.exp(1j * np.pi * q * (d_e * s_e - d_f * s_f))
    return complex(total)


def dense_boundary(g: Graph, o: Orientation, k: BoundaryKind) -> np.ndarray:
    """Dense n x m boundary written entry by entry from the definition"""
    o.check(g)
    b = np.zeros((g.n, g.m), dtype=np.complex128)
    tail, head = o.endpoints(g)
    for e in range(g.m):
        s, t = int(tail[e]), int(head[e])
        if g.directed[e]:
            out_val = np.exp(1j * np.pi * k.q)
            in_val = np.exp(-1j * np.pi * k.q)
        else:
            out_val, in_val = 1.0 + 0j, 1.0 + 0j
        if k.variant is Variant.EQU:
            out_val = -out_val
        b[s, e] = out_val
        b[t, e] = in_val
    return b


def dense_oracle_laplacian(g: Graph, o: Orientation, k: LaplacianKind, q: Optional[float] = None) -> np.ndarray:
    if g.m > DENSE_MAX_EDGES:
        raise OperatorError(f"dense oracle refuses m={g.m} > {DENSE_MAX_EDGES}")
    if q is None:
        q = default_q(g)
    b_left = dense_boundary(g, o, BoundaryKind(k.left, q))
    b_right = dense_boundary(g, o, BoundaryKind(k.right, q))
    return b_left.conj().T @ b_right


# ─── Normalization and shifts ───

def edge_degrees(lap: sp.csr_matrix) -> np.ndarray:
    """D[e, e] = sum_e' |L[e, e']|"""
    return np.asarray(abs(lap).sum(axis=1)).reshape(-1)


def normalize(b: sp.csr_matrix, g: Graph, o: Orientation, k: LaplacianKind, q: Optional[float] = None) -> sp.csr_matrix:
    """B D^{-1/2} with D from the unnormalized Laplacian of kind k

    Zero degrees are left unscaled.
    """
    if b.shape[1] != g.m:
        raise DimensionError(f"boundary has {b.shape[1]} columns, graph has {g.m} edges")
    degree = edge_degrees(laplacian(g, o, k, q))
    scale = np.ones_like(degree)
    nz = degree > 0
    scale[nz] = degree[nz] ** -0.5
    return finalize(b @ sp.diags(scale))


def normalized_boundary(g: Graph, o: Orientation, variant: Variant, q: float) -> sp.csr_matrix:
    """Boundary scaled by the degree of its same-modality Laplacian"""
    kind = LaplacianKind.EQU if Variant(variant) is Variant.EQU else LaplacianKind.INV
    return normalize(boundary(g, o, BoundaryKind(variant, q)), g, o, kind, q)


def normalized_laplacian(g: Graph, o: Orientation, k: LaplacianKind, q: float) -> sp.csr_matrix:
    b_left = normalized_boundary(g, o, k.left, q)
    b_right = normalized_boundary(g, o, k.right, q)
    return finalize(b_left.conj().T @ b_right)


def gcn_shift(lap: sp.spmatrix) -> sp.csr_matrix:
    """A = I - L/2"""
    if lap.shape[0] != lap.shape[1]:
        raise OperatorError(f"shift needs a square matrix, got {lap.shape}")
    return finalize(sp.identity(lap.shape[0], dtype=np.complex128, format="csr") - 0.5 * lap)


def normalized_line_graph_laplacian(g: Graph) -> sp.csr_matrix:
    """I - D^{-1/2} A D^{-1/2} of the line graph, zero-degree rows left at 0"""
    a = line_graph_pattern(g)
    degree = np.asarray(a.sum(axis=1)).reshape(-1)
    inv_sqrt = np.zeros_like(degree)
    nz = degree > 0
    inv_sqrt[nz] = degree[nz] ** -0.5
    scaled = sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt)
    return sp.csr_matrix(sp.diags(nz.astype(np.float64)) - scaled)


def chebyshev_apply(
    l_hat: sp.spmatrix,
    x: np.ndarray,
    k: int,
    l_cross: Optional[sp.spmatrix] = None,
) -> List[np.ndarray]:
    """Chebyshev terms C^1..C^k of l_hat applied to x

    With ``l_cross`` the input lives in the other modality: C^1 is zero,
    C^2 = l_cross x and the recursion continues with l_hat.
    """
    if k < 1:
        raise OperatorError(f"Chebyshev order must be >= 1, got {k}")
    x = np.asarray(x)
    rows = l_hat.shape[0]
    first = l_cross if l_cross is not None else l_hat
    if first.shape[1] != x.shape[0]:
        raise DimensionError(f"operator has {first.shape[1]} columns, input has {x.shape[0]} rows")

    c1 = np.zeros((rows,) + x.shape[1:], dtype=np.complex128) if l_cross is not None else x.astype(np.complex128)
    terms = [c1]
    if k >= 2:
        terms.append(first @ x)
    for _ in range(2, k):
        terms.append(2 * (l_hat @ terms[-1]) - terms[-2])
    return terms


# ─── Coordinate dump ───

def to_coordinates(mat: sp.spmatrix) -> List[Tuple[int, int, float, float]]:
    """(row, col, re, im) sorted by (row, col)"""
    coo = finalize(mat).tocoo()
    order = np.lexsort((coo.col, coo.row))
    return [
        (int(coo.row[i]), int(coo.col[i]), float(coo.data[i].real), float(coo.data[i].imag))
        for i in order
    ]


def dumps_coordinates(mat: sp.spmatrix) -> str:
    lines = [f"{r} {c} {re:.17g} {im:.17g}" for r, c, re, im in to_coordinates(mat)]
    return "\n".join(lines) + ("\n" if lines else "")
