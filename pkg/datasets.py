"""
Benchmark datasets: RW Comp, LD Cycles, Tri-Flow, electrical circuits and
TNTP traffic networks, plus the denoise / interpolate / simulate tasks.

Every generator is a pure function of (parameters, seed). Graph i draws from
its own Philox stream ``make_rng(seed, i)``, so results do not depend on the
number of worker threads.
"""
import itertools
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from config import DATASET_DEFAULTS, SPLITS, make_rng, resolve_threads
from graph_core import (
    Graph,
    Orientation,
    OrientationFlip,
    apply_flip,
    canonical_orientation,
    dumps_graph,
    loads_graph,
)

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Dataset directory or sample is inconsistent"""
    pass


class GenerationError(RuntimeError):
    """A generator hit its attempt limit"""
    pass


class SingularCircuitError(GenerationError):
    """Nodal system is singular or no consistent diode state exists"""
    pass


class TNTPFormatError(ValueError):
    """Malformed TNTP file"""

    def __init__(self, path: Union[str, Path], line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class Task(str, Enum):
    BINARY = "binary"
    REGRESSION = "regression"


class TaskKind(str, Enum):
    DENOISE = "denoise"
    INTERPOLATE = "interpolate"
    SIMULATE = "simulate"


@dataclass
class LabeledGraphSample:
    graph: Graph
    orientation: Orientation
    x_equ: np.ndarray
    x_inv: np.ndarray
    y: np.ndarray
    task: Task
    mask: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)
    edge_split: Optional[np.ndarray] = None  # 0 train / 1 val / 2 test, single-graph datasets

    def __post_init__(self):
        m = self.graph.m
        self.x_equ = np.asarray(self.x_equ, dtype=np.float64).reshape(m, -1) if np.size(self.x_equ) else np.zeros((m, 0))
        self.x_inv = np.asarray(self.x_inv, dtype=np.float64).reshape(m, -1) if np.size(self.x_inv) else np.zeros((m, 0))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(m, 1)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(m)
        self.task = Task(self.task)
        if len(self.orientation) != m:
            raise DatasetError(f"orientation has {len(self.orientation)} entries, graph has {m} edges")
        if self.edge_split is not None:
            self.edge_split = np.asarray(self.edge_split, dtype=np.int8).reshape(m)

    @property
    def m(self) -> int:
        return self.graph.m

    def reoriented(self, flip: OrientationFlip) -> "LabeledGraphSample":
        """Same sample under another direction-consistent orientation"""
        flip.check(self.graph)
        y = apply_flip(self.y, flip) if self.task is Task.REGRESSION else self.y.copy()
        return replace(
            self,
            orientation=self.orientation.apply(flip),
            x_equ=apply_flip(self.x_equ, flip),
            x_inv=self.x_inv.copy(),
            y=y,
            meta=dict(self.meta),
        )


def _generate(fn: Callable[[np.random.Generator, int], LabeledGraphSample], num_graphs: int, seed: int,
              threads: Optional[int] = None) -> List[LabeledGraphSample]:
    """Run fn(rng_i, i) for every graph; order and streams are fixed by (seed, i)"""
    workers = resolve_threads(threads)
    jobs = [(make_rng(seed, i), i) for i in range(num_graphs)]
    if workers == 1:
        return [fn(rng, i) for rng, i in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


# ─── RW Comp ───

RW_NODES = 50
RW_EXPECTED_EDGES = 200
RW_WALK_LENGTH = 100
RW_REVEAL = 0.2


def transition_probabilities(g: Graph, weights: np.ndarray) -> np.ndarray:
    """Row-normalize per-edge weights over each node's outgoing edges"""
    totals = np.zeros(g.n)
    np.add.at(totals, g.src, weights)
    return weights / np.where(totals[g.src] > 0, totals[g.src], 1.0)


def random_walk_edges(g: Graph, probs: np.ndarray, start: int, length: int, rng: np.random.Generator) -> List[int]:
    """Edge indices traversed by a walk of at most ``length`` steps; stops at sinks"""
    out_edges: Dict[int, np.ndarray] = {v: np.flatnonzero(g.src == v) for v in range(g.n)}
    walk: List[int] = []
    node = start
    for _ in range(length):
        choices = out_edges[node]
        if len(choices) == 0:
            break
        p = probs[choices] / probs[choices].sum()
        edge = int(rng.choice(choices, p=p))
        walk.append(edge)
        node = int(g.dst[edge])
    return walk


def rw_comp_sample(rng: np.random.Generator, n: int = RW_NODES, expected_edges: int = RW_EXPECTED_EDGES,
                   walk_length: int = RW_WALK_LENGTH, reveal: float = RW_REVEAL) -> LabeledGraphSample:
    p = expected_edges / (n * (n - 1))
    adj = rng.random((n, n)) < p
    np.fill_diagonal(adj, False)
    src, dst = np.nonzero(adj)
    g = Graph(n, src, dst, np.ones(len(src), dtype=bool))

    probs = transition_probabilities(g, rng.random(g.m))
    walk = random_walk_edges(g, probs, int(rng.integers(n)), walk_length, rng)

    revealed = np.zeros(g.m, dtype=bool)
    hidden = np.zeros(g.m, dtype=bool)
    if walk:
        k = int(round(reveal * len(walk)))
        positions = rng.choice(len(walk), size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
        shown = np.zeros(len(walk), dtype=bool)
        shown[positions] = True
        walk_arr = np.asarray(walk)
        revealed[walk_arr[shown]] = True
        hidden[walk_arr[~shown]] = True
    target = hidden & ~revealed

    return LabeledGraphSample(
        graph=g,
        orientation=canonical_orientation(g),
        x_equ=np.zeros((g.m, 0)),
        x_inv=np.stack([revealed.astype(np.float64), probs], axis=1),
        y=target.astype(np.float64),
        task=Task.BINARY,
        mask=~revealed,
        meta={"walk_length": len(walk), "revealed_transitions": int(round(reveal * len(walk))) if walk else 0},
    )


def gen_rw_comp(num_graphs: int = 1000, seed: int = 0, threads: Optional[int] = None) -> List[LabeledGraphSample]:
    """Directed ER graphs with a partially revealed random walk"""
    samples = _generate(lambda rng, i: rw_comp_sample(rng), num_graphs, seed, threads)
    logger.info(f"RW Comp: generated {len(samples)} graphs (seed={seed})")
    return samples


# ─── LD Cycles ───

LD_CYCLE_SIZES = (6, 7, 8)
LD_P_DIRECTED = 0.25
LD_MAX_ATTEMPTS = 1000


def directed_cycles(g: Graph, length_bound: Optional[int] = None) -> List[List[int]]:
    """Simple cycles that use directed edges only, as node lists"""
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.n))
    dg.add_edges_from(zip(g.src[g.directed].tolist(), g.dst[g.directed].tolist()))
    return [list(c) for c in nx.simple_cycles(dg, length_bound=length_bound)]


def _ld_component(rng: np.random.Generator, c: int, offset: int, undirected_cycle_edge: bool):
    edges: Dict[frozenset, Tuple[int, int, bool]] = {}
    cycle = [(offset + i, offset + (i + 1) % c) for i in range(c)]
    soft = int(rng.integers(c)) if undirected_cycle_edge else -1
    for i, (u, v) in enumerate(cycle):
        edges[frozenset((u, v))] = (u, v, i != soft)

    free = [pair for pair in itertools.combinations(range(offset, offset + c), 2) if frozenset(pair) not in edges]
    for idx in rng.choice(len(free), size=c, replace=False):
        a, b = free[int(idx)]
        directed = bool(rng.random() < LD_P_DIRECTED)
        if directed and rng.random() < 0.5:
            a, b = b, a
        edges[frozenset((a, b))] = (a, b, directed)
    return list(edges.values()), cycle


def _count_directed_cycles(edges: Sequence[Tuple[int, int, bool]], n: int, length: int) -> int:
    dg = nx.DiGraph()
    dg.add_nodes_from(range(n))
    dg.add_edges_from((u, v) for u, v, d in edges if d)
    return sum(1 for cyc in nx.simple_cycles(dg, length_bound=length) if len(cyc) == length)


def ld_cycles_sample(rng: np.random.Generator, index: int = 0) -> LabeledGraphSample:
    c = int(rng.choice(LD_CYCLE_SIZES))
    n = 2 * c
    for _ in range(LD_MAX_ATTEMPTS):
        comp_a, planted = _ld_component(rng, c, 0, undirected_cycle_edge=False)
        if _count_directed_cycles(comp_a, n, c) != 1:
            continue
        comp_b, _ = _ld_component(rng, c, c, undirected_cycle_edge=True)
        if _count_directed_cycles(comp_b, n, c) != 0:
            continue
        a, b = int(rng.integers(c)), int(c + rng.integers(c))
        bridge_directed = bool(rng.random() < LD_P_DIRECTED)
        if bridge_directed and rng.random() < 0.5:
            a, b = b, a
        edges = comp_a + comp_b + [(a, b, bridge_directed)]

        # The planted cycle must be the unique longest purely-directed cycle
        g, o = Graph.from_edges_with_orientation(n, [(u, v, "D" if d else "U") for u, v, d in edges])
        lengths = [len(cyc) for cyc in directed_cycles(g)]
        if max(lengths, default=0) != c or lengths.count(c) != 1:
            continue
        planted_set = {frozenset(e) for e in planted}
        y = np.array([frozenset((int(u), int(v))) in planted_set and d for u, v, d in zip(g.src, g.dst, g.directed)],
                     dtype=np.float64)
        return LabeledGraphSample(
            graph=g,
            orientation=o,
            x_equ=np.zeros((g.m, 0)),
            x_inv=np.ones((g.m, 1)),
            y=y,
            task=Task.BINARY,
            mask=np.ones(g.m, dtype=bool),
            meta={"cycle_size": c},
        )
    raise GenerationError(f"LD Cycles graph {index}: no valid graph after {LD_MAX_ATTEMPTS} attempts")


def gen_ld_cycles(num_graphs: int = 1000, seed: int = 0, threads: Optional[int] = None) -> List[LabeledGraphSample]:
    """Two cycles of equal size; only the purely-directed one is labeled"""
    samples = _generate(ld_cycles_sample, num_graphs, seed, threads)
    logger.info(f"LD Cycles: generated {len(samples)} graphs (seed={seed})")
    return samples


# ─── Tri-Flow ───

TRI_TRIANGLES = 100
TRI_FILLERS = 100
TRI_TYPE_COUNTS = (50, 25, 25)
TRI_COLORS = 3
TRI_P_DIRECTED = 0.6
TRI_MAGNITUDE = (0.5, 1.5)
TRI_MAX_ATTEMPTS = 100_000


def tri_flow_sample(rng: np.random.Generator, index: int = 0) -> LabeledGraphSample:
    n = 3 * TRI_TRIANGLES
    types = rng.permutation(np.repeat([1, 2, 3], TRI_TYPE_COUNTS))
    pairs: List[Tuple[int, int]] = []      # written along the traversal / chosen direction
    directed: List[bool] = []
    colors: List[int] = []
    target: List[float] = []
    magnitude_in: List[float] = []
    neighbors: List[set] = [set() for _ in range(n)]
    triangles = np.zeros((TRI_TRIANGLES, 3), dtype=np.int64)
    traversal = np.zeros((TRI_TRIANGLES, 3), dtype=np.int64)
    magnitudes = rng.uniform(*TRI_MAGNITUDE, size=TRI_TRIANGLES)

    for t in range(TRI_TRIANGLES):
        a, b, c = (3 * t + rng.permutation(3)).tolist()
        traversal[t] = (a, b, c)
        tri_edges = [(a, b), (b, c), (c, a)]
        kind = int(types[t])
        f = float(magnitudes[t])

        if kind == 1:
            flags = rng.random(3) < TRI_P_DIRECTED
            while not flags.any():
                flags = rng.random(3) < TRI_P_DIRECTED
            color = int(rng.integers(TRI_COLORS))
            edge_colors = [color] * 3
            oriented = tri_edges
            edge_target = [f, f, f]
        elif kind == 2:
            # Two directed edges meeting head-to-head or tail-to-tail at one node
            pivot = int(rng.integers(3))
            inward = bool(rng.random() < 0.5)
            x = (a, b, c)[pivot]
            oriented, flags = [], []
            for u, v in tri_edges:
                if x in (u, v):
                    other = v if u == x else u
                    oriented.append((other, x) if inward else (x, other))
                    flags.append(True)
                else:
                    third_directed = bool(rng.random() < TRI_P_DIRECTED)
                    oriented.append((u, v) if rng.random() < 0.5 else (v, u))
                    flags.append(third_directed)
            color = int(rng.integers(TRI_COLORS))
            edge_colors = [color] * 3
            edge_target = [0.0, 0.0, 0.0]
        else:
            edge_colors = rng.integers(TRI_COLORS, size=3).tolist()
            while len(set(edge_colors)) == 1:
                edge_colors = rng.integers(TRI_COLORS, size=3).tolist()
            flags = rng.random(3) < TRI_P_DIRECTED
            oriented = [(u, v) if rng.random() < 0.5 else (v, u) for u, v in tri_edges]
            edge_target = [0.0, 0.0, 0.0]

        for j, (u, v) in enumerate(oriented):
            triangles[t, j] = len(pairs)
            pairs.append((u, v))
            directed.append(bool(flags[j]))
            colors.append(int(edge_colors[j]))
            target.append(edge_target[j])
            magnitude_in.append(f)
            neighbors[u].add(v)
            neighbors[v].add(u)

    attempts = 0
    added = 0
    while added < TRI_FILLERS:
        attempts += 1
        if attempts > TRI_MAX_ATTEMPTS:
            raise GenerationError(f"Tri-Flow graph {index}: could not place {TRI_FILLERS} filler edges")
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u // 3 == v // 3 or v in neighbors[u] or neighbors[u] & neighbors[v]:
            continue
        pairs.append((u, v))
        directed.append(bool(rng.random() < TRI_P_DIRECTED))
        colors.append(int(rng.integers(TRI_COLORS)))
        target.append(0.0)
        magnitude_in.append(float(rng.uniform(*TRI_MAGNITUDE)))
        neighbors[u].add(v)
        neighbors[v].add(u)
        added += 1

    g, along = Graph.from_edges_with_orientation(n, [(u, v, "D" if d else "U") for (u, v), d in zip(pairs, directed)])
    # Signals so far are expressed along `along`; re-express them in a random orientation
    flip_bits = (rng.random(g.m) < 0.5) & ~g.directed
    orientation = Orientation(flip_bits)
    to_final = OrientationFlip.between(along, orientation)
    y = apply_flip(np.asarray(target), to_final)
    x_flow = np.asarray(magnitude_in) * rng.choice([-1.0, 1.0], size=g.m)

    # Traversal sign of each triangle edge relative to its final orientation
    tail, _ = orientation.endpoints(g)
    trav_sign = np.zeros((TRI_TRIANGLES, 3), dtype=np.int8)
    for t in range(TRI_TRIANGLES):
        for j in range(3):
            e = triangles[t, j]
            trav_sign[t, j] = 1 if int(tail[e]) == int(traversal[t, j]) else -1

    return LabeledGraphSample(
        graph=g,
        orientation=orientation,
        x_equ=x_flow[:, None],
        x_inv=np.eye(TRI_COLORS)[np.asarray(colors)],
        y=y,
        task=Task.REGRESSION,
        mask=np.ones(g.m, dtype=bool),
        meta={
            "triangles": triangles,
            "triangle_type": types.astype(np.int64),
            "traversal": traversal,
            "traversal_sign": trav_sign,
            "flow_magnitude": magnitudes,
        },
    )


def gen_tri_flow(num_graphs: int = 100, seed: int = 0, threads: Optional[int] = None) -> List[LabeledGraphSample]:
    """Planted triangles whose flows must be closed only for type (i)"""
    samples = _generate(tri_flow_sample, num_graphs, seed, threads)
    logger.info(f"Tri-Flow: generated {len(samples)} graphs (seed={seed})")
    return samples


# ─── Circuits ───

class ComponentKind(str, Enum):
    SOURCE = "source"
    RESISTOR = "resistor"
    DIODE = "diode"


@dataclass(frozen=True)
class CircuitComponent:
    kind: ComponentKind
    resistance: Optional[float] = None
    source_voltage: Optional[float] = None

    def __post_init__(self):
        if self.kind is ComponentKind.RESISTOR and not (100.0 <= float(self.resistance or 0) <= 10_000.0):
            raise GenerationError(f"resistance {self.resistance} outside [100, 10000] ohm")
        if self.kind is ComponentKind.SOURCE and self.source_voltage is None:
            raise GenerationError("source without voltage")


@dataclass
class Circuit:
    """Components on the edges of a graph, oriented tail -> head

    A source raises the potential from tail to head by its voltage; a diode
    conducts from tail (anode) to head (cathode) and is a directed edge.
    """
    graph: Graph
    orientation: Orientation
    components: List[CircuitComponent]

    def __post_init__(self):
        if len(self.components) != self.graph.m:
            raise GenerationError("one component per edge required")
        kinds = [c.kind for c in self.components]
        if kinds.count(ComponentKind.SOURCE) != 1:
            raise GenerationError("a circuit has exactly one source")
        for e, c in enumerate(self.components):
            if (c.kind is ComponentKind.DIODE) != bool(self.graph.directed[e]):
                raise GenerationError(f"edge {e}: diodes and only diodes are directed")

    @property
    def diodes(self) -> np.ndarray:
        return np.array([c.kind is ComponentKind.DIODE for c in self.components], dtype=bool)

    @property
    def source_edge(self) -> int:
        return next(e for e, c in enumerate(self.components) if c.kind is ComponentKind.SOURCE)


@dataclass
class DCSolution:
    currents: np.ndarray      # per edge, tail -> head
    potentials: np.ndarray    # node 0 grounded
    diode_on: np.ndarray      # per diode, in edge order
    iterations: int = 0


def solve_dc(circuit: Circuit, diode_on: np.ndarray) -> DCSolution:
    """Modified nodal analysis for a fixed diode state

    On diodes are 0-ohm voltage branches, off diodes are open.
    """
    g = circuit.graph
    tail, head = circuit.orientation.endpoints(g)
    diode_idx = np.flatnonzero(circuit.diodes)
    on = np.zeros(g.m, dtype=bool)
    on[diode_idx[np.asarray(diode_on, dtype=bool)]] = True

    branches = [e for e, c in enumerate(circuit.components) if c.kind is ComponentKind.SOURCE or on[e]]
    nn_ = g.n - 1
    size = nn_ + len(branches)
    a = np.zeros((size, size))
    rhs = np.zeros(size)

    def row(node: int) -> int:
        return node - 1  # node 0 is ground

    for e, comp in enumerate(circuit.components):
        if comp.kind is not ComponentKind.RESISTOR:
            continue
        gval = 1.0 / comp.resistance
        s, t = int(tail[e]), int(head[e])
        for x, y_, sign in ((s, s, 1), (s, t, -1), (t, t, 1), (t, s, -1)):
            if x and y_:
                a[row(x), row(y_)] += sign * gval

    for j, e in enumerate(branches):
        s, t = int(tail[e]), int(head[e])
        k = nn_ + j
        if s:
            a[row(s), k] += 1.0
            a[k, row(s)] -= 1.0
        if t:
            a[row(t), k] -= 1.0
            a[k, row(t)] += 1.0
        comp = circuit.components[e]
        rhs[k] = comp.source_voltage if comp.kind is ComponentKind.SOURCE else 0.0

    if size == 0 or np.linalg.cond(a) > 1e12:
        raise SingularCircuitError("singular nodal system")
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularCircuitError(f"singular nodal system: {e}")

    potentials = np.concatenate([[0.0], sol[:nn_]])
    currents = np.zeros(g.m)
    for e, comp in enumerate(circuit.components):
        if comp.kind is ComponentKind.RESISTOR:
            currents[e] = (potentials[tail[e]] - potentials[head[e]]) / comp.resistance
    for j, e in enumerate(branches):
        currents[e] = sol[nn_ + j]
    return DCSolution(currents, potentials, np.asarray(diode_on, dtype=bool).copy())


def _diode_violations(circuit: Circuit, sol: DCSolution) -> np.ndarray:
    """Signed violation per diode (> 0 means the state is inconsistent)"""
    g = circuit.graph
    tail, head = circuit.orientation.endpoints(g)
    idx = np.flatnonzero(circuit.diodes)
    scale = max(1.0, float(np.abs(sol.potentials).max(initial=0.0)))
    current_scale = max(1e-300, float(np.abs(sol.currents).max(initial=0.0)))
    forward_voltage = sol.potentials[tail[idx]] - sol.potentials[head[idx]]
    current = sol.currents[idx]
    return np.where(sol.diode_on, -current / current_scale, forward_voltage / scale)


def is_consistent(circuit: Circuit, sol: DCSolution, tol: float = 1e-9) -> bool:
    return bool(np.all(_diode_violations(circuit, sol) <= tol))


def solve_circuit(circuit: Circuit) -> DCSolution:
    """Active-set iteration: flip the worst-violating diode until consistent

    A singular diode state or a revisited state hands over to the exhaustive
    search, so SingularCircuitError means no consistent state exists.
    """
    d = int(circuit.diodes.sum())
    state = np.ones(d, dtype=bool)
    seen = set()
    for iteration in range(2 ** d + 1):
        key = state.tobytes()
        if key in seen:
            break
        seen.add(key)
        try:
            sol = solve_dc(circuit, state)
        except SingularCircuitError:
            break
        violation = _diode_violations(circuit, sol)
        if d == 0 or violation.max() <= 1e-9:
            sol.iterations = iteration + 1
            return sol
        worst = int(np.argmax(violation))
        state = state.copy()
        state[worst] = ~state[worst]

    if d > CIRCUIT_ENUMERATE_MAX_DIODES:
        raise SingularCircuitError(f"active set stuck after {len(seen)} states and {d} diodes are too many to enumerate")
    logger.debug(f"active set stuck after {len(seen)} states, enumerating {2 ** d} diode states")
    sol = solve_circuit_enumerate(circuit)
    sol.iterations = len(seen) + 2 ** d
    return sol


def solve_circuit_enumerate(circuit: Circuit) -> DCSolution:
    """Try all 2^d diode states; the consistent ones must agree on currents"""
    d = int(circuit.diodes.sum())
    found: Optional[DCSolution] = None
    for bits in itertools.product([False, True], repeat=d):
        try:
            sol = solve_dc(circuit, np.asarray(bits, dtype=bool))
        except SingularCircuitError:
            continue
        if not is_consistent(circuit, sol):
            continue
        if found is None:
            found = sol
        elif not np.allclose(found.currents, sol.currents, rtol=1e-9, atol=1e-12):
            raise SingularCircuitError("diode states admit different currents")
    if found is None:
        raise SingularCircuitError("no consistent diode state")
    return found


def kcl_residual(circuit: Circuit, currents: np.ndarray) -> float:
    """max_v |sum of currents leaving v| relative to the largest current"""
    g = circuit.graph
    tail, head = circuit.orientation.endpoints(g)
    net = np.zeros(g.n)
    np.add.at(net, tail, currents)
    np.add.at(net, head, -currents)
    scale = max(float(np.abs(currents).max(initial=0.0)), 1e-300)
    return float(np.abs(net).max(initial=0.0) / scale)


CIRCUIT_NODES = (8, 11)
CIRCUIT_P_DIODE = 0.2
CIRCUIT_RESISTANCE = (100.0, 10_000.0)
CIRCUIT_VOLTAGE = (1.0, 10.0)
CIRCUIT_MAX_ATTEMPTS = 200
CIRCUIT_ENUMERATE_MAX_DIODES = 20


def random_circuit(rng: np.random.Generator) -> Circuit:
    """3-cycle grown by attaching nodes through (s, v), (v, t) pairs"""
    n_target = int(rng.integers(CIRCUIT_NODES[0], CIRCUIT_NODES[1] + 1))
    pairs = [(0, 1), (1, 2), (2, 0)]
    n = 3
    while n < n_target:
        s, t = (int(x) for x in rng.choice(n, size=2, replace=False))
        pairs += [(s, n), (n, t)]
        n += 1

    source = int(rng.integers(len(pairs)))
    components, kinds = [], []
    for e, (u, v) in enumerate(pairs):
        if e == source:
            voltage = float(rng.uniform(*CIRCUIT_VOLTAGE)) * float(rng.choice([-1.0, 1.0]))
            components.append(CircuitComponent(ComponentKind.SOURCE, source_voltage=voltage))
            kinds.append("U")
        elif rng.random() < CIRCUIT_P_DIODE:
            if rng.random() < 0.5:
                pairs[e] = (v, u)
            components.append(CircuitComponent(ComponentKind.DIODE))
            kinds.append("D")
        else:
            components.append(CircuitComponent(ComponentKind.RESISTOR, resistance=float(rng.uniform(*CIRCUIT_RESISTANCE))))
            kinds.append("U")

    g = Graph.from_edges(n, [(u, v, k) for (u, v), k in zip(pairs, kinds)])
    return Circuit(g, canonical_orientation(g), components)


def circuit_sample(rng: np.random.Generator, index: int = 0) -> LabeledGraphSample:
    for _ in range(CIRCUIT_MAX_ATTEMPTS):
        circuit = random_circuit(rng)
        try:
            sol = solve_circuit(circuit)
        except SingularCircuitError:
            continue
        g = circuit.graph
        src = circuit.source_edge
        voltage = circuit.components[src].source_voltage
        x_equ = np.zeros((g.m, 1))
        x_equ[src, 0] = np.sign(voltage)
        kinds = [c.kind for c in circuit.components]
        one_hot = np.array([[k is ComponentKind.SOURCE, k is ComponentKind.RESISTOR, k is ComponentKind.DIODE] for k in kinds],
                           dtype=np.float64)
        resistance = np.array([c.resistance or 0.0 for c in circuit.components])
        return LabeledGraphSample(
            graph=g,
            orientation=circuit.orientation,
            x_equ=x_equ,
            x_inv=np.concatenate([one_hot, resistance[:, None]], axis=1),
            y=sol.currents / abs(voltage),
            task=Task.REGRESSION,
            mask=np.ones(g.m, dtype=bool),
            meta={
                "diode": circuit.diodes,
                "resistor": one_hot[:, 1].astype(bool),
                "source_voltage": voltage,
                "raw_currents": sol.currents,
                "solver_iterations": sol.iterations,
            },
        )
    raise GenerationError(f"circuit {index}: no solvable circuit in {CIRCUIT_MAX_ATTEMPTS} attempts")


def normalize_circuits(samples: List[LabeledGraphSample], train_idx: Sequence[int]) -> Dict[str, float]:
    """Scale currents by their training std and standardize resistances in place"""
    train = [samples[i] for i in train_idx] or samples
    current_std = float(np.concatenate([s.y.ravel() for s in train]).std())
    resist = np.concatenate([s.x_inv[s.meta["resistor"], 3] for s in train])
    r_mean = float(resist.mean()) if resist.size else 0.0
    r_std = float(resist.std()) if resist.size else 1.0
    current_std = current_std if current_std > 0 else 1.0
    r_std = r_std if r_std > 0 else 1.0
    for s in samples:
        s.y = s.y / current_std
        col = s.x_inv[:, 3]
        s.x_inv[:, 3] = np.where(s.meta["resistor"], (col - r_mean) / r_std, 0.0)
        s.meta["current_scale"] = current_std
    logger.info(f"Circuits: current std {current_std:.4g}, resistance mean {r_mean:.1f} std {r_std:.1f}")
    return {"current_std": current_std, "resistance_mean": r_mean, "resistance_std": r_std}


def gen_circuits(num_graphs: int = 1000, seed: int = 0, threads: Optional[int] = None,
                 train_idx: Optional[Sequence[int]] = None) -> List[LabeledGraphSample]:
    """Random resistor/diode circuits with DC currents as equivariant targets

    Currents are divided by the source voltage magnitude, then by a global
    std taken over the training graphs (default: the seeded 50/25/25 split).
    """
    samples = _generate(circuit_sample, num_graphs, seed, threads)
    if train_idx is None:
        train_idx = split_indices(num_graphs, SPLITS["circuits"], seed)["train"]
    normalize_circuits(samples, train_idx)
    logger.info(f"Circuits: generated {len(samples)} graphs (seed={seed})")
    return samples


# ─── TNTP traffic networks ───

TNTP_FEATURES = ("capacity", "length", "free_flow_time", "b", "power", "toll", "link_type")
_TNTP_COLUMNS = ("init_node", "term_node", "capacity", "length", "free_flow_time", "b", "power", "speed", "toll", "link_type")
_META_RE = re.compile(r"^<([^>]+)>\s*(.*)$")


def read_tntp_metadata(lines: Sequence[str], path: Union[str, Path]) -> Tuple[Dict[str, str], int]:
    """Parse `<KEY> value` lines up to <END OF METADATA>; returns (metadata, next line index)"""
    meta: Dict[str, str] = {}
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line or line.startswith("~"):
            continue
        match = _META_RE.match(line)
        if not match:
            raise TNTPFormatError(path, i + 1, f"expected `<KEY> value` metadata line, got {line!r}")
        key = match.group(1).strip().upper()
        if key == "END OF METADATA":
            return meta, i + 1
        meta[key] = match.group(2).strip()
    raise TNTPFormatError(path, len(lines), "missing <END OF METADATA>")


def _meta_int(meta: Dict[str, str], key: str, path, default: Optional[int] = None) -> Optional[int]:
    if key not in meta:
        return default
    try:
        return int(float(meta[key]))
    except ValueError:
        raise TNTPFormatError(path, 0, f"metadata <{key}> is not numeric: {meta[key]!r}")


def read_tntp_network(path: Union[str, Path]) -> Tuple[Dict[str, str], List[Tuple[int, Dict[str, float]]]]:
    """Metadata plus (line number, link record) for every link line"""
    path = Path(path)
    lines = path.read_text().splitlines()
    meta, start = read_tntp_metadata(lines, path)
    n_nodes = _meta_int(meta, "NUMBER OF NODES", path)
    if n_nodes is None:
        raise TNTPFormatError(path, 1, "metadata lacks <NUMBER OF NODES>")

    links = []
    for i in range(start, len(lines)):
        line = lines[i].strip()
        if not line or line.startswith("~"):
            continue
        fields = line.rstrip(";").split()
        if len(fields) < len(_TNTP_COLUMNS):
            raise TNTPFormatError(path, i + 1, f"expected {len(_TNTP_COLUMNS)} columns, got {len(fields)}")
        try:
            values = [float(x) for x in fields[:len(_TNTP_COLUMNS)]]
        except ValueError:
            raise TNTPFormatError(path, i + 1, f"non-numeric field in {line!r}")
        record = dict(zip(_TNTP_COLUMNS, values))
        for key in ("init_node", "term_node"):
            node = record[key]
            if node != int(node) or not (1 <= node <= n_nodes):
                raise TNTPFormatError(path, i + 1, f"{key} {node:g} out of range 1..{n_nodes}")
        links.append((i + 1, record))

    expected = _meta_int(meta, "NUMBER OF LINKS", path)
    if expected is not None and expected != len(links):
        logger.warning(f"{path}: metadata announces {expected} links, file has {len(links)}")
    return meta, links


def read_tntp_flows(path: Union[str, Path]) -> Dict[Tuple[int, int], float]:
    """Link volumes keyed by (from, to); header lines are skipped"""
    path = Path(path)
    flows: Dict[Tuple[int, int], float] = {}
    seen_data = False
    for i, raw in enumerate(path.read_text().splitlines()):
        line = raw.strip()
        if not line or line.startswith("~") or line.startswith("<"):
            continue
        fields = [f for f in line.rstrip(";").replace(":", " ").split() if f]
        try:
            u, v, volume = int(float(fields[0])), int(float(fields[1])), float(fields[2])
        except (ValueError, IndexError):
            if not seen_data:
                continue  # column header
            raise TNTPFormatError(path, i + 1, f"malformed flow line {line!r}")
        seen_data = True
        flows[(u, v)] = volume
    return flows


def _standardize(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return np.where(std > 0, (x - mean) / np.where(std > 0, std, 1.0), 0.0)


def load_tntp(net_path: Union[str, Path], flow_path: Union[str, Path]) -> LabeledGraphSample:
    """One traffic graph; anti-parallel links merge into undirected edges"""
    net_path, flow_path = Path(net_path), Path(flow_path)
    for p in (net_path, flow_path):
        if not p.exists():
            raise FileNotFoundError(f"TNTP file not found: {p}")
    meta, links = read_tntp_network(net_path)
    flows = read_tntp_flows(flow_path)
    n_nodes = _meta_int(meta, "NUMBER OF NODES", net_path)
    n_zones = _meta_int(meta, "NUMBER OF ZONES", net_path, 0)
    first_thru = _meta_int(meta, "FIRST THRU NODE", net_path, n_zones + 1)

    records: Dict[Tuple[int, int], Tuple[int, Dict[str, float]]] = {}
    for line_no, rec in links:
        key = (int(rec["init_node"]), int(rec["term_node"]))
        if key[0] == key[1]:
            raise TNTPFormatError(net_path, line_no, f"self-loop link {key}")
        if key in records:
            raise TNTPFormatError(net_path, line_no, f"duplicate link {key}")
        if key not in flows:
            raise TNTPFormatError(flow_path, 0, f"no flow for link {key} (net file line {line_no})")
        records[key] = (line_no, rec)

    edges, feats, flow = [], [], []
    for (u, v), (_, rec) in records.items():
        back = records.get((v, u))
        if back is not None:
            if u > v:
                continue
            merged = [(rec[k] + back[1][k]) / 2.0 for k in TNTP_FEATURES]
            edges.append((u - 1, v - 1, "U"))
            feats.append(merged)
            flow.append(flows[(u, v)] - flows[(v, u)])
        else:
            edges.append((u - 1, v - 1, "D"))
            feats.append([rec[k] for k in TNTP_FEATURES])
            flow.append(flows[(u, v)])

    g, o = Graph.from_edges_with_orientation(n_nodes, edges)
    zone = np.zeros(n_nodes, dtype=bool)
    zone[:max(first_thru - 1, 0)] = True
    terminal = zone[g.src] | zone[g.dst]

    flow_arr = np.asarray(flow, dtype=np.float64)
    scale = float(np.abs(flow_arr).max(initial=0.0)) or 1.0
    x_inv = np.concatenate([_standardize(np.asarray(feats, dtype=np.float64)), terminal[:, None].astype(np.float64)], axis=1)
    logger.info(f"TNTP {net_path.name}: {g.n} nodes, {g.m} edges, {g.num_directed} directed")
    return LabeledGraphSample(
        graph=g,
        orientation=o,
        x_equ=np.zeros((g.m, 0)),
        x_inv=x_inv,
        y=flow_arr / scale,
        task=Task.REGRESSION,
        mask=np.ones(g.m, dtype=bool),
        meta={"force_train": terminal, "flow_scale": scale, "zones": int(zone.sum())},
    )


def write_synthetic_tntp(out_dir: Union[str, Path], n_nodes: int = 416, n_pairs: int = 280, n_single: int = 354,
                         n_zones: int = 38, seed: int = 0, name: str = "Anaheim") -> Tuple[Path, Path]:
    """Write net/flow files with n_pairs anti-parallel link pairs and n_single one-way links"""
    rng = make_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    needed = n_pairs + n_single
    chosen: set = set()
    unordered: List[Tuple[int, int]] = []
    while len(unordered) < needed:
        u, v = (int(x) for x in rng.integers(1, n_nodes + 1, size=2))
        key = (min(u, v), max(u, v))
        if u == v or key in chosen:
            continue
        chosen.add(key)
        unordered.append((u, v))

    links = []
    for i, (u, v) in enumerate(unordered):
        links.append((u, v))
        if i < n_pairs:
            links.append((v, u))

    net_lines = [
        f"<NUMBER OF ZONES> {n_zones}",
        f"<NUMBER OF NODES> {n_nodes}",
        f"<FIRST THRU NODE> {n_zones + 1}",
        f"<NUMBER OF LINKS> {len(links)}",
        "<END OF METADATA>",
        "",
        "",
        "~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \tB\tPower\tSpeed limit \tToll \tType\t;",
    ]
    flow_lines = ["From \tTo \tVolume \tCost "]
    for u, v in links:
        capacity = rng.uniform(1000, 10000)
        length = rng.uniform(500, 5000)
        fft = length / rng.uniform(500, 1500)
        link_type = int(rng.integers(1, 4))
        net_lines.append(f"\t{u}\t{v}\t{capacity:.1f}\t{length:.1f}\t{fft:.6f}\t0.15\t4\t0\t0\t{link_type}\t;")
        flow_lines.append(f"{u} \t{v} \t{rng.uniform(0, 5000):.3f} \t{fft:.6f} ")

    net_path = out_dir / f"{name}_net.tntp"
    flow_path = out_dir / f"{name}_flow.tntp"
    net_path.write_text("\n".join(net_lines) + "\n")
    flow_path.write_text("\n".join(flow_lines) + "\n")
    return net_path, flow_path


# ─── Tasks ───

def make_task(sample: LabeledGraphSample, task: Union[str, TaskKind], seed: int, reveal: float = 0.1) -> LabeledGraphSample:
    """Denoise / interpolate / simulate variant of a regression sample"""
    task = TaskKind(task)
    if sample.task is not Task.REGRESSION:
        raise DatasetError("tasks are defined for regression samples only")
    if task is TaskKind.SIMULATE:
        return replace(sample, meta=dict(sample.meta, task=task.value))

    rng = make_rng(seed)
    y = sample.y[:, 0]
    if task is TaskKind.DENOISE:
        sigma = float(y.std())
        column = y + rng.uniform(-sigma, sigma, size=sample.m)
        return replace(
            sample,
            x_equ=np.concatenate([sample.x_equ, column[:, None]], axis=1),
            meta=dict(sample.meta, task=task.value, noise_sigma=sigma),
        )

    revealed = np.zeros(sample.m, dtype=bool)
    k = int(round(reveal * sample.m))
    if k:
        revealed[rng.choice(sample.m, size=k, replace=False)] = True
    column = np.where(revealed, y, 0.0)
    return replace(
        sample,
        x_equ=np.concatenate([sample.x_equ, column[:, None]], axis=1),
        mask=sample.mask & ~revealed,
        meta=dict(sample.meta, task=task.value, revealed=revealed),
    )


# ─── Splits, statistics and storage ───

def split_indices(num: int, fractions: Tuple[float, float, float], seed: int) -> Dict[str, List[int]]:
    """Seeded shuffle cut into train/val/test"""
    order = make_rng(seed, 0x5EED).permutation(num)
    n_train = int(round(fractions[0] * num))
    n_val = int(round(fractions[1] * num))
    return {
        "train": sorted(order[:n_train].tolist()),
        "val": sorted(order[n_train:n_train + n_val].tolist()),
        "test": sorted(order[n_train + n_val:].tolist()),
    }


def split_edges(sample: LabeledGraphSample, fractions: Tuple[float, float, float], seed: int) -> LabeledGraphSample:
    """Edge-level split for single-graph datasets; forced edges stay in training"""
    parts = split_indices(sample.m, fractions, seed)
    edge_split = np.zeros(sample.m, dtype=np.int8)
    edge_split[parts["val"]] = 1
    edge_split[parts["test"]] = 2
    forced = sample.meta.get("force_train")
    if forced is not None:
        edge_split[np.asarray(forced, dtype=bool)] = 0
    return replace(sample, edge_split=edge_split)


def dataset_statistics(samples: Sequence[LabeledGraphSample]) -> Dict[str, Any]:
    def summary(values):
        arr = np.asarray(values, dtype=np.float64)
        return {"min": float(arr.min()), "max": float(arr.max()), "mean": float(arr.mean())}

    return {
        "graphs": len(samples),
        "nodes": summary([s.graph.n for s in samples]),
        "edges": summary([s.m for s in samples]),
        "directed": summary([s.graph.num_directed for s in samples]),
        "equ_features": int(samples[0].x_equ.shape[1]) if samples else 0,
        "inv_features": int(samples[0].x_inv.shape[1]) if samples else 0,
    }


@dataclass
class Dataset:
    name: str
    samples: List[LabeledGraphSample]
    splits: Dict[str, List[int]]
    transductive: bool = False
    manifest: Dict[str, Any] = field(default_factory=dict)

    def split(self, part: str) -> List[LabeledGraphSample]:
        return [self.samples[i] for i in self.splits[part]]


SYNTHETIC = {
    "rw_comp": gen_rw_comp,
    "ld_cycles": gen_ld_cycles,
    "tri_flow": gen_tri_flow,
}
DATASET_NAMES = ("rw_comp", "ld_cycles", "tri_flow", "circuits", "traffic", "tntp_fixture")


def build_dataset(name: str, seed: int = 0, num_graphs: Optional[int] = None, task: str = "simulate",
                  net_path: Optional[Union[str, Path]] = None, flow_path: Optional[Union[str, Path]] = None,
                  fixture_dir: Optional[Union[str, Path]] = None, threads: Optional[int] = None) -> Dataset:
    """Generate (or load) a dataset together with its seeded split"""
    if name not in DATASET_NAMES:
        raise DatasetError(f"unknown dataset {name!r}; choose from {', '.join(DATASET_NAMES)}")

    manifest: Dict[str, Any] = {"name": name, "seed": seed, "task": task}
    if name in SYNTHETIC:
        num = num_graphs or DATASET_DEFAULTS[name]["num_graphs"]
        samples = SYNTHETIC[name](num, seed, threads)
        splits = split_indices(num, SPLITS["synthetic"], seed)
        if name == "tri_flow":
            manifest["flow_magnitude_range"] = list(TRI_MAGNITUDE)
        if name == "rw_comp":
            manifest["transition_weights"] = "per-edge uniform [0,1], row-normalized"
        return Dataset(name, samples, splits, False, {**manifest, "statistics": dataset_statistics(samples)})

    if name == "circuits":
        num = num_graphs or DATASET_DEFAULTS["circuits"]["num_graphs"]
        splits = split_indices(num, SPLITS["circuits"], seed)
        samples = _generate(circuit_sample, num, seed, threads)
        manifest["normalization"] = normalize_circuits(samples, splits["train"])
        samples = [make_task(s, task, seed + i) for i, s in enumerate(samples)]
        return Dataset(name, samples, splits, False, {**manifest, "statistics": dataset_statistics(samples)})

    if name == "tntp_fixture":
        net_path, flow_path = write_synthetic_tntp(fixture_dir or Path("tntp_fixture"), seed=seed)
    if net_path is None or flow_path is None:
        raise DatasetError("traffic datasets need --net and --flow files")
    sample = make_task(load_tntp(net_path, flow_path), task, seed)
    sample = split_edges(sample, SPLITS["traffic"], seed)
    manifest.update({"net": str(net_path), "flow": str(flow_path), "flow_scale": sample.meta["flow_scale"]})
    return Dataset(name, [sample], {"train": [0], "val": [0], "test": [0]}, True,
                   {**manifest, "statistics": dataset_statistics([sample])})


def _meta_arrays(meta: Dict[str, Any]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    arrays, scalars = {}, {}
    for key, value in meta.items():
        if isinstance(value, np.ndarray):
            arrays[f"meta_{key}"] = value
        elif isinstance(value, (np.floating, np.integer)):
            scalars[key] = value.item()
        else:
            scalars[key] = value
    return arrays, scalars


def save_dataset(ds: Dataset, out_dir: Union[str, Path]) -> Path:
    """manifest.json + graphs/NNNNN.txt + arrays/NNNNN.npz"""
    out_dir = Path(out_dir)
    (out_dir / "graphs").mkdir(parents=True, exist_ok=True)
    (out_dir / "arrays").mkdir(parents=True, exist_ok=True)
    sample_meta = []
    for i, s in enumerate(ds.samples):
        (out_dir / "graphs" / f"{i:05d}.txt").write_text(dumps_graph(s.graph, s.orientation))
        arrays, scalars = _meta_arrays(s.meta)
        payload = {"x_equ": s.x_equ, "x_inv": s.x_inv, "y": s.y, "mask": s.mask, **arrays}
        if s.edge_split is not None:
            payload["edge_split"] = s.edge_split
        np.savez(out_dir / "arrays" / f"{i:05d}.npz", **payload)
        sample_meta.append({"task": s.task.value, "meta": scalars})
    manifest = {
        **ds.manifest,
        "name": ds.name,
        "num_graphs": len(ds.samples),
        "transductive": ds.transductive,
        "splits": ds.splits,
        "samples": sample_meta,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    logger.info(f"Saved dataset {ds.name} ({len(ds.samples)} graphs) to {out_dir}")
    return out_dir


def load_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no dataset at {path} (manifest.json missing)")
    manifest = json.loads(manifest_path.read_text())
    samples = []
    for i, info in enumerate(manifest["samples"]):
        g, o = loads_graph((path / "graphs" / f"{i:05d}.txt").read_text(), path / "graphs" / f"{i:05d}.txt")
        with np.load(path / "arrays" / f"{i:05d}.npz") as data:
            meta = dict(info.get("meta", {}))
            meta.update({k[len("meta_"):]: data[k] for k in data.files if k.startswith("meta_")})
            samples.append(LabeledGraphSample(
                graph=g,
                orientation=o,
                x_equ=data["x_equ"],
                x_inv=data["x_inv"],
                y=data["y"],
                task=Task(info["task"]),
                mask=data["mask"],
                meta=meta,
                edge_split=data["edge_split"] if "edge_split" in data.files else None,
            ))
    splits = {k: list(v) for k, v in manifest["splits"].items()}
    extra = {k: v for k, v in manifest.items() if k not in ("samples", "splits")}
    return Dataset(manifest["name"], samples, splits, bool(manifest.get("transductive", False)), extra)
