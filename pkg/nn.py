"""
EIGN and baseline edge-level models on top of the ``autodiff`` tape.

A model is a ``ModelConfig`` plus an ordered parameter dict. Graph-dependent
operators are prepared once per sample (``prepare_operators``) and may be
stacked block-diagonally for mini-batches (``stack_operators``); the forward
pass itself only sees operators and edge features.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator

import autodiff as ad
from autodiff import Tensor
from config import CHEB_ORDER, DROPOUT, NODE_MLP_HIDDEN, make_rng
from graph_core import Graph, Orientation
from operators import (
    LaplacianKind,
    Variant,
    finalize,
    normalized_boundary,
    normalized_laplacian,
    normalized_line_graph_laplacian,
    split_boundaries,
    edge_degrees,
)

logger = logging.getLogger(__name__)

Params = Dict[str, Tensor]


class ModelConfigError(ValueError):
    """Configuration does not fit the architecture or the provided features"""
    pass


class CheckpointError(ValueError):
    """Unreadable checkpoint or checkpoint written for another configuration"""
    pass


class Architecture(str, Enum):
    EIGN = "EIGN"
    MLP = "MLP"
    LINE_GRAPH = "LineGraph"
    HODGE_GNN = "HodgeGNN"
    HODGE_INV = "HodgeInv"
    HODGE_DIR = "HodgeDir"
    DIR_GNN = "DirGNN"
    EIGN_GCN = "EIGN-GCN"
    EIGN_CHEB = "EIGN-Cheb"

    @property
    def eign_family(self) -> bool:
        return self in (Architecture.EIGN, Architecture.EIGN_GCN, Architecture.EIGN_CHEB, Architecture.DIR_GNN)

    @property
    def hodge_family(self) -> bool:
        return self in (Architecture.HODGE_GNN, Architecture.HODGE_INV, Architecture.HODGE_DIR)


ABLATIONS = ("no_direction", "no_fusion", "no_fusion_conv", "no_node_mlp")


class ModelConfig(BaseModel):
    """Architecture, widths and ablation switches"""
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    architecture: Architecture = Architecture.EIGN
    in_equ: int = Field(0, ge=0)
    in_inv: int = Field(0, ge=0)
    out_equ: int = Field(1, ge=0)
    out_inv: int = Field(1, ge=0)
    layers: int = Field(4, ge=1)
    hidden: int = Field(32, ge=2)
    q: Optional[float] = Field(None, ge=0.0, le=1.0)
    q_scale: float = Field(1.0, ge=0.0)
    dropout: float = Field(DROPOUT, ge=0.0, lt=1.0)
    node_mlp_hidden: int = Field(NODE_MLP_HIDDEN, ge=1)
    cheb_order: int = Field(CHEB_ORDER, ge=1)
    no_direction: bool = False
    no_fusion: bool = False
    no_fusion_conv: bool = False
    no_node_mlp: bool = False

    @field_validator("hidden")
    @classmethod
    def hidden_even(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"hidden width must be even (real/imaginary halves), got {v}")
        return v

    def effective_q(self, m: int) -> float:
        """Phase parameter used for a graph with m edges"""
        if self.no_direction or m == 0:
            return 0.0
        if self.q is not None:
            return float(self.q)
        return float(min(1.0, self.q_scale / m))

    def with_ablation(self, *flags: str) -> "ModelConfig":
        unknown = [f for f in flags if f not in ABLATIONS]
        if unknown:
            raise ModelConfigError(f"unknown ablation flag(s): {unknown}")
        return self.model_copy(update={f: True for f in flags})

    def config_hash(self) -> bytes:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(payload).digest()


# ─── Parameter layout ───

@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    fan_in: int


_EQU_IN = {"equ_equ": True, "inv_equ": False, "inv_inv": False, "equ_inv": True}
_KIND_OF = {
    "equ_equ": LaplacianKind.EQU,
    "inv_inv": LaplacianKind.INV,
    "equ_inv": LaplacianKind.EQU_TO_INV,
    "inv_equ": LaplacianKind.INV_TO_EQU,
}
_DIR_PARTS = ("undirected", "source", "target")


def _conv_names(cfg: ModelConfig) -> List[str]:
    names = ["equ_equ", "inv_inv"]
    if not cfg.no_fusion_conv:
        names += ["inv_equ", "equ_inv"]
    return names


def _uses_node_mlp(cfg: ModelConfig, conv: str) -> bool:
    inter = conv in ("inv_equ", "equ_inv")
    return inter and not cfg.no_node_mlp and cfg.architecture is not Architecture.EIGN_CHEB


def _input_widths(cfg: ModelConfig) -> Tuple[int, int]:
    arch = cfg.architecture
    if arch in (Architecture.MLP, Architecture.LINE_GRAPH, Architecture.HODGE_INV, Architecture.HODGE_DIR):
        return cfg.in_equ + cfg.in_inv, 0
    if arch is Architecture.HODGE_GNN:
        return cfg.in_equ, 0
    return cfg.in_equ, cfg.in_inv


def param_specs(cfg: ModelConfig) -> List[ParamSpec]:
    """Ordered parameter names and shapes; the order defines checkpoints"""
    specs: List[ParamSpec] = []
    d = cfg.hidden
    arch = cfg.architecture

    def w(name, rows, cols_):
        specs.append(ParamSpec(name, (rows, cols_), max(rows, 1)))

    def b(name, size, fan_in):
        specs.append(ParamSpec(name, (size,), max(fan_in, 1)))

    if arch.eign_family:
        d_equ, d_inv = _input_widths(cfg)
        for layer in range(cfg.layers):
            p = f"l{layer}"
            for conv in _conv_names(cfg):
                fan = d_equ if _EQU_IN[conv] else d_inv
                out_inv = conv.endswith("_inv")
                if arch is Architecture.EIGN_CHEB:
                    first = 1 if conv in ("inv_equ", "equ_inv") else 0
                    for k in range(first, cfg.cheb_order):
                        w(f"{p}.{conv}.W{k}", 2 * fan, d)
                elif arch is Architecture.DIR_GNN:
                    for part in _DIR_PARTS:
                        w(f"{p}.{conv}.{part}.W", fan, d)
                else:
                    w(f"{p}.{conv}.W", fan, d // 2)
                if out_inv:
                    b(f"{p}.{conv}.b", d, fan)
                if _uses_node_mlp(cfg, conv):
                    node_width = d
                    w(f"{p}.{conv}.h.W1", node_width, cfg.node_mlp_hidden)
                    b(f"{p}.{conv}.h.b1", cfg.node_mlp_hidden, node_width)
                    w(f"{p}.{conv}.h.W2", cfg.node_mlp_hidden, node_width)
                    b(f"{p}.{conv}.h.b2", node_width, cfg.node_mlp_hidden)
            w(f"{p}.equ.W", d_equ, d)
            w(f"{p}.inv.W", d_inv, d)
            b(f"{p}.inv.b", d, d_inv)
            if not cfg.no_fusion:
                w(f"{p}.fuse_equ_equ.W", d, d)
                w(f"{p}.fuse_inv_equ.W", d, d)
                b(f"{p}.fuse_inv_equ.b", d, d)
                w(f"{p}.fuse_inv_inv.W", d, d)
                b(f"{p}.fuse_inv_inv.b", d, d)
                w(f"{p}.fuse_equ_inv.W", d, d)
            d_equ, d_inv = d, d
        w("out_equ.W", d, cfg.out_equ)
        w("out_inv.W", d, cfg.out_inv)
        b("out_inv.b", cfg.out_inv, d)
        return specs

    width, _ = _input_widths(cfg)
    tag = {Architecture.MLP: "mlp", Architecture.LINE_GRAPH: "lg"}.get(arch, "hodge")
    for layer in range(cfg.layers):
        w(f"{tag}{layer}.W", width, d)
        if not arch.hodge_family:
            b(f"{tag}{layer}.b", d, width)
        width = d
    w("out_equ.W", d, cfg.out_equ)
    if not arch.hodge_family:
        b("out_equ.b", cfg.out_equ, d)
    w("out_inv.W", d, cfg.out_inv)
    if not arch.hodge_family:
        b("out_inv.b", cfg.out_inv, d)
    return specs


def init_params(cfg: ModelConfig, seed: int) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias"""
    rng = make_rng(seed)
    params: Params = {}
    for spec in param_specs(cfg):
        bound = 1.0 / np.sqrt(spec.fan_in)
        params[spec.name] = ad.parameter(rng.uniform(-bound, bound, size=spec.shape), spec.name)
    return params


def count_params(params: Params) -> int:
    return int(sum(p.data.size for p in params.values()))


def flatten_params(params: Params) -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([p.data.reshape(-1) for p in params.values()])


def unflatten_params(cfg: ModelConfig, flat: np.ndarray) -> Params:
    specs = param_specs(cfg)
    total = sum(int(np.prod(s.shape)) for s in specs)
    if flat.size != total:
        raise CheckpointError(f"expected {total} parameters, got {flat.size}")
    params: Params = {}
    offset = 0
    for spec in specs:
        size = int(np.prod(spec.shape))
        params[spec.name] = ad.parameter(flat[offset:offset + size].reshape(spec.shape), spec.name)
        offset += size
    return params


def copy_params(params: Params) -> Params:
    return {name: ad.parameter(p.data.copy(), name) for name, p in params.items()}


# ─── Checkpoints ───

CHECKPOINT_MAGIC = b"EIGNCKPT"
CHECKPOINT_VERSION = 2


def save_checkpoint(path: Union[str, Path], cfg: ModelConfig, params: Params) -> None:
    """magic | version u32 | sha256(config) | len u32 | config json | count u64 | little-endian f64 values"""
    flat = flatten_params(params).astype("<f8")
    config_json = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()
    header = (CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION) + cfg.config_hash()
              + struct.pack("<I", len(config_json)) + config_json + struct.pack("<Q", flat.size))
    Path(path).write_bytes(header + flat.tobytes())


def _read_checkpoint(path: Union[str, Path]) -> Tuple[bytes, ModelConfig, np.ndarray]:
    blob = Path(path).read_bytes()
    fixed = len(CHECKPOINT_MAGIC) + 4 + 32 + 4
    if len(blob) < fixed or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not an EIGN checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", blob, offset)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    digest = blob[offset + 4:offset + 36]
    (config_len,) = struct.unpack_from("<I", blob, offset + 36)
    start = fixed + config_len
    if len(blob) < start + 8:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        cfg = ModelConfig.model_validate(json.loads(blob[fixed:start]))
    except ValueError as e:
        raise CheckpointError(f"{path}: embedded model configuration is invalid: {e}") from e
    if cfg.config_hash() != digest:
        raise CheckpointError(f"{path}: embedded model configuration does not match its digest")
    (count,) = struct.unpack_from("<Q", blob, start)
    values = np.frombuffer(blob, dtype="<f8", offset=start + 8)
    if values.size != count:
        raise CheckpointError(f"{path}: truncated parameter array ({values.size} of {count})")
    return digest, cfg, values.astype(np.float64)


def read_checkpoint_config(path: Union[str, Path]) -> ModelConfig:
    """Model configuration stored inside a checkpoint"""
    return _read_checkpoint(path)[1]


def load_checkpoint(path: Union[str, Path], cfg: Optional[ModelConfig] = None) -> Params:
    digest, stored, values = _read_checkpoint(path)
    if cfg is not None and digest != cfg.config_hash():
        raise CheckpointError(f"{path}: checkpoint was written for a different model configuration")
    return unflatten_params(stored, values)


# ─── Operators ───

class ComplexOperator:
    """Sparse complex operator kept as real and imaginary csr parts"""

    def __init__(self, re: sp.spmatrix, im: Optional[sp.spmatrix] = None):
        self.re = sp.csr_matrix(re, dtype=np.float64)
        self.im = None if im is None or im.nnz == 0 else sp.csr_matrix(im, dtype=np.float64)
        self._adjoint: Optional["ComplexOperator"] = None

    @classmethod
    def from_complex(cls, mat: sp.spmatrix) -> "ComplexOperator":
        mat = sp.csr_matrix(mat)
        if np.iscomplexobj(mat.data):
            return cls(sp.csr_matrix(mat.real), sp.csr_matrix(mat.imag))
        return cls(mat)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.re.shape

    def adjoint(self) -> "ComplexOperator":
        if self._adjoint is None:
            self._adjoint = ComplexOperator(self.re.T.tocsr(), None if self.im is None else (-self.im.T).tocsr())
        return self._adjoint

    def to_complex(self) -> sp.csr_matrix:
        out = self.re.astype(np.complex128)
        if self.im is not None:
            out = out + 1j * self.im
        return sp.csr_matrix(out)


@dataclass
class GraphOperators:
    n: int
    m: int
    ops: Dict[str, ComplexOperator] = field(default_factory=dict)

    def __getitem__(self, key: str) -> ComplexOperator:
        return self.ops[key]


def _split_normalized(g: Graph, o: Orientation, variant: Variant) -> Dict[str, sp.csr_matrix]:
    """Split boundaries, each scaled by the degree of its own Laplacian"""
    out = {}
    for part, b in split_boundaries(g, o, variant).items():
        degree = edge_degrees(b.conj().T @ b)
        scale = np.ones_like(degree)
        nz = degree > 0
        scale[nz] = degree[nz] ** -0.5
        out[part] = finalize(b @ sp.diags(scale))
    return out


def prepare_operators(cfg: ModelConfig, g: Graph, o: Orientation) -> GraphOperators:
    """Every graph operator the configured architecture needs"""
    o.check(g)
    arch = cfg.architecture
    bundle = GraphOperators(g.n, g.m)
    q = cfg.effective_q(g.m)

    if arch in (Architecture.EIGN, Architecture.EIGN_GCN):
        bundle.ops["b_equ"] = ComplexOperator.from_complex(normalized_boundary(g, o, Variant.EQU, q))
        bundle.ops["b_inv"] = ComplexOperator.from_complex(normalized_boundary(g, o, Variant.INV, q))
    elif arch is Architecture.EIGN_CHEB:
        for conv, kind in _KIND_OF.items():
            bundle.ops[f"l_{conv}"] = ComplexOperator.from_complex(normalized_laplacian(g, o, kind, q))
    elif arch is Architecture.DIR_GNN:
        for variant in (Variant.EQU, Variant.INV):
            for part, b in _split_normalized(g, o, variant).items():
                bundle.ops[f"b_{variant.value}_{part}"] = ComplexOperator.from_complex(b)
    elif arch.hodge_family:
        bundle.ops["l_hodge"] = ComplexOperator.from_complex(normalized_laplacian(g, o, LaplacianKind.EQU, 0.0))
    elif arch is Architecture.LINE_GRAPH:
        bundle.ops["l_line"] = ComplexOperator(normalized_line_graph_laplacian(g))
    return bundle


def stack_operators(bundles: Sequence[GraphOperators]) -> GraphOperators:
    """Block-diagonal operators for a mini-batch of disjoint graphs"""
    if len(bundles) == 1:
        return bundles[0]
    out = GraphOperators(sum(b.n for b in bundles), sum(b.m for b in bundles))
    for key in bundles[0].ops:
        parts = [b.ops[key] for b in bundles]
        re = sp.block_diag([p.re for p in parts], format="csr")
        if all(p.im is None for p in parts):
            im = None
        else:
            im = sp.block_diag(
                [p.im if p.im is not None else sp.csr_matrix(p.re.shape) for p in parts], format="csr"
            )
        out.ops[key] = ComplexOperator(re, im)
    return out


# ─── Complex helpers on real pairs ───

Pair = Tuple[Tensor, Optional[Tensor]]


def cspmm(op: ComplexOperator, re: Tensor, im: Optional[Tensor] = None) -> Pair:
    """(A_re + i A_im)(x_re + i x_im) expanded into real sparse products"""
    out_re = ad.spmm(op.re, re)
    out_im = ad.spmm(op.im, re) if op.im is not None else None
    if im is not None:
        if op.im is not None:
            out_re = out_re - ad.spmm(op.im, im)
        extra = ad.spmm(op.re, im)
        out_im = extra if out_im is None else out_im + extra
    return out_re, out_im


def flatten_complex(pair: Pair) -> Tensor:
    """Concatenate real and imaginary parts along the feature axis"""
    re, im = pair
    if im is None:
        im = Tensor(np.zeros(re.shape))
    return ad.concat([re, im], axis=1)


def _pair_lin(a: Optional[Pair], b: Optional[Pair], ca: float, cb: float) -> Optional[Pair]:
    """ca * a + cb * b with None meaning zero"""
    if a is None and b is None:
        return None
    if b is None:
        return ad.scale(a[0], ca), None if a[1] is None else ad.scale(a[1], ca)
    if a is None:
        return ad.scale(b[0], cb), None if b[1] is None else ad.scale(b[1], cb)
    re = ad.scale(a[0], ca) + ad.scale(b[0], cb)
    if a[1] is None and b[1] is None:
        im = None
    elif a[1] is None:
        im = ad.scale(b[1], cb)
    elif b[1] is None:
        im = ad.scale(a[1], ca)
    else:
        im = ad.scale(a[1], ca) + ad.scale(b[1], cb)
    return re, im


@dataclass
class NodeMLP:
    """h: one hidden ReLU layer applied to node rows"""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        hidden = ad.relu(x @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2

    @classmethod
    def from_params(cls, params: Params, prefix: str) -> "NodeMLP":
        return cls(params[f"{prefix}.W1"], params[f"{prefix}.b1"], params[f"{prefix}.W2"], params[f"{prefix}.b2"])


def conv_forward(
    b_left: ComplexOperator,
    b_right: ComplexOperator,
    x: Tensor,
    node_mlp: Optional[NodeMLP] = None,
) -> Tensor:
    """Flattened B_left^H h(B_right X), real width doubled"""
    if b_right.shape[1] != x.shape[0]:
        raise ModelConfigError(f"boundary has {b_right.shape[1]} edges, input has {x.shape[0]} rows")
    if b_left.shape != b_right.shape:
        raise ModelConfigError(f"boundary shapes differ: {b_left.shape} vs {b_right.shape}")
    node = cspmm(b_right, x)
    if node_mlp is not None:
        width = x.shape[1]
        out = node_mlp(flatten_complex(node))
        node = (ad.cols(out, 0, width), ad.cols(out, width, 2 * width))
    edge = cspmm(b_left.adjoint(), *node)
    return flatten_complex(edge)


# ─── EIGN family ───

def _boundary_key(variant: Variant) -> str:
    return f"b_{variant.value}"


def _conv_term(cfg: ModelConfig, params: Params, ops: GraphOperators, prefix: str, conv: str, x: Tensor) -> Tensor:
    """f_kind(X) W for one of the four convolutions (bias included for invariant outputs)"""
    arch = cfg.architecture
    kind = _KIND_OF[conv]
    mlp = NodeMLP.from_params(params, f"{prefix}.{conv}.h") if _uses_node_mlp(cfg, conv) else None

    if arch is Architecture.EIGN_CHEB:
        out = _cheb_term(cfg, params, ops, prefix, conv, x)
    elif arch is Architecture.DIR_GNN:
        out = None
        for part in _DIR_PARTS:
            b_right = ops[f"b_{kind.right.value}_{part}"]
            b_left = ops[f"b_{kind.left.value}_{part}"]
            proj = x @ params[f"{prefix}.{conv}.{part}.W"]
            node = ad.spmm(b_right.re, proj)
            if mlp is not None:
                node = mlp(node)
            term = ad.spmm(b_left.adjoint().re, node)
            out = term if out is None else out + term
    else:
        proj = x @ params[f"{prefix}.{conv}.W"]
        out = conv_forward(ops[_boundary_key(kind.left)], ops[_boundary_key(kind.right)], proj, mlp)
        if arch is Architecture.EIGN_GCN:
            out = ad.scale(out, -0.5)
            if kind.same_modality:
                out = out + flatten_complex((proj, None))

    if kind.left is Variant.INV:
        out = out + params[f"{prefix}.{conv}.b"]
    return out


def _cheb_term(cfg: ModelConfig, params: Params, ops: GraphOperators, prefix: str, conv: str, x: Tensor) -> Tensor:
    kind = _KIND_OF[conv]
    target = {Variant.EQU: "l_equ_equ", Variant.INV: "l_inv_inv"}[kind.left]
    l_hat = ops[target]
    order = cfg.cheb_order

    terms: List[Optional[Pair]]
    if kind.same_modality:
        terms = [(x, None)]
        if order >= 2:
            terms.append(cspmm(l_hat, x))
    else:
        terms = [None]
        if order >= 2:
            terms.append(cspmm(ops[f"l_{conv}"], x))
    while len(terms) < order:
        prev1, prev2 = terms[-1], terms[-2]
        shifted = cspmm(l_hat, *prev1)
        terms.append(_pair_lin(shifted, prev2, 2.0, -1.0))

    out = None
    for k, term in enumerate(terms):
        if term is None:
            continue
        contrib = flatten_complex(term) @ params[f"{prefix}.{conv}.W{k}"]
        out = contrib if out is None else out + contrib
    if out is None:
        out = Tensor(np.zeros((x.shape[0], cfg.hidden)))
    return out


def eign_layer_forward(
    cfg: ModelConfig,
    params: Params,
    ops: GraphOperators,
    layer: int,
    h_equ: Tensor,
    h_inv: Tensor,
) -> Tuple[Tensor, Tensor]:
    """Convolution, residual and fusion for one layer (no dropout)"""
    p = f"l{layer}"
    convs = _conv_names(cfg)

    pre_equ = _conv_term(cfg, params, ops, p, "equ_equ", h_equ) + h_equ @ params[f"{p}.equ.W"]
    pre_inv = _conv_term(cfg, params, ops, p, "inv_inv", h_inv) + (h_inv @ params[f"{p}.inv.W"] + params[f"{p}.inv.b"])
    if "inv_equ" in convs:
        pre_equ = pre_equ + _conv_term(cfg, params, ops, p, "inv_equ", h_inv)
        pre_inv = pre_inv + _conv_term(cfg, params, ops, p, "equ_inv", h_equ)

    z_equ = ad.sign_equ_activation(pre_equ)
    z_inv = ad.relu(pre_inv)
    if cfg.no_fusion:
        return z_equ, z_inv

    gate_inv = z_inv @ params[f"{p}.fuse_inv_equ.W"] + params[f"{p}.fuse_inv_equ.b"]
    out_equ = ad.sign_equ_activation(ad.hadamard(z_equ @ params[f"{p}.fuse_equ_equ.W"], gate_inv) + z_equ)
    gate_equ = ad.abs_op(z_equ @ params[f"{p}.fuse_equ_inv.W"])
    out_inv = ad.relu(ad.hadamard(z_inv @ params[f"{p}.fuse_inv_inv.W"] + params[f"{p}.fuse_inv_inv.b"], gate_equ) + z_inv)
    return out_equ, out_inv


# ─── Forward ───

def _check_inputs(cfg: ModelConfig, ops: GraphOperators, x_equ: np.ndarray, x_inv: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x_equ = np.asarray(x_equ, dtype=np.float64).reshape(ops.m, -1) if np.size(x_equ) else np.zeros((ops.m, 0))
    x_inv = np.asarray(x_inv, dtype=np.float64).reshape(ops.m, -1) if np.size(x_inv) else np.zeros((ops.m, 0))
    if x_equ.shape[1] != cfg.in_equ or x_inv.shape[1] != cfg.in_inv:
        raise ModelConfigError(
            f"{cfg.architecture.value} configured for ({cfg.in_equ}, {cfg.in_inv}) input features, "
            f"got ({x_equ.shape[1]}, {x_inv.shape[1]})"
        )
    return x_equ, x_inv


def forward_with_operators(
    cfg: ModelConfig,
    params: Params,
    ops: GraphOperators,
    x_equ: np.ndarray,
    x_inv: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None,
) -> Tuple[Tensor, Tensor]:
    """(y_equ, y_inv) for prepared operators; ``trace`` collects per-layer hidden states"""
    x_equ, x_inv = _check_inputs(cfg, ops, x_equ, x_inv)
    arch = cfg.architecture
    p = cfg.dropout

    if arch.eign_family:
        h_equ, h_inv = Tensor(x_equ), Tensor(x_inv)
        for layer in range(cfg.layers):
            h_equ, h_inv = eign_layer_forward(cfg, params, ops, layer, h_equ, h_inv)
            if trace is not None:
                trace.append((h_equ.data.copy(), h_inv.data.copy()))
            h_equ = ad.dropout(h_equ, p, rng, training)
            h_inv = ad.dropout(h_inv, p, rng, training)
        y_equ = h_equ @ params["out_equ.W"]
        y_inv = h_inv @ params["out_inv.W"] + params["out_inv.b"]
        return y_equ, y_inv

    if arch is Architecture.HODGE_GNN:
        h = Tensor(x_equ)
    else:
        h = Tensor(np.concatenate([x_equ, x_inv], axis=1))

    for layer in range(cfg.layers):
        if arch is Architecture.MLP:
            h = ad.relu(h @ params[f"mlp{layer}.W"] + params[f"mlp{layer}.b"])
        elif arch is Architecture.LINE_GRAPH:
            h = ad.relu(ad.spmm(ops["l_line"].re, h @ params[f"lg{layer}.W"]) + params[f"lg{layer}.b"])
        else:
            conv = ad.spmm(ops["l_hodge"].re, h @ params[f"hodge{layer}.W"])
            h = ad.relu(conv) if arch is Architecture.HODGE_DIR else ad.sign_equ_activation(conv)
        if trace is not None:
            trace.append((h.data.copy(), h.data.copy()))
        h = ad.dropout(h, p, rng, training)

    if arch.hodge_family:
        return h @ params["out_equ.W"], h @ params["out_inv.W"]
    return h @ params["out_equ.W"] + params["out_equ.b"], h @ params["out_inv.W"] + params["out_inv.b"]


def model_forward(
    cfg: ModelConfig,
    params: Params,
    g: Graph,
    o: Orientation,
    x_equ: np.ndarray,
    x_inv: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None,
) -> Tuple[Tensor, Tensor]:
    ops = prepare_operators(cfg, g, o)
    return forward_with_operators(cfg, params, ops, x_equ, x_inv, training=training, rng=rng, trace=trace)
