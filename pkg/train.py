"""
Optimization loop, metrics, model selection and the hyperparameter grid.
"""
import csv
import itertools
import json
import logging
import math
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field
from scipy.stats import rankdata
from tqdm import tqdm

import autodiff as ad
from autodiff import NonFiniteError
from config import (
    ADAM_BETAS,
    ADAM_EPS,
    DROPOUT,
    GRAD_CLIP_NORM,
    HIDDEN_GRID,
    LAYERS_GRID,
    LR_GRID,
    derive_seed,
    make_rng,
    resolve_threads,
    run_tracker,
)
from datasets import Dataset, DatasetError, LabeledGraphSample, Task
from nn import (
    GraphOperators,
    ModelConfig,
    Params,
    copy_params,
    forward_with_operators,
    init_params,
    prepare_operators,
    save_checkpoint,
    stack_operators,
)

logger = logging.getLogger(__name__)


class TrainingAbortedError(RuntimeError):
    """Non-finite loss or gradient; the run cannot continue"""
    pass


class MetricError(ValueError):
    """Metric undefined for the given inputs"""
    pass


class LossKind(str, Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


class TrainConfig(BaseModel):
    lr: float = Field(0.01, gt=0.0)
    batch_size: int = Field(10, ge=1)
    epochs: int = Field(50, ge=0)
    grad_clip_norm: float = Field(GRAD_CLIP_NORM, gt=0.0)
    dropout: float = Field(DROPOUT, ge=0.0, lt=1.0)
    loss: Optional[LossKind] = None  # derived from the task when unset
    seed: int = 0
    betas: Tuple[float, float] = ADAM_BETAS
    eps: float = Field(ADAM_EPS, gt=0.0)
    checkpoint_path: Optional[str] = None
    progress: bool = True


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_metric: Optional[float]
    seconds: float


class MetricsReport(BaseModel):
    rmse: Optional[float] = None
    mae: Optional[float] = None
    r2: Optional[float] = None
    auc_roc: Optional[float] = None
    direction_violation_rate: Optional[float] = None
    selection_metric: str = "rmse"
    best_epoch: int = 0
    best_val: Optional[float] = None
    history: List[EpochRecord] = Field(default_factory=list)
    checkpoint: Optional[str] = None
    wall_time: float = 0.0
    config_echo: Dict[str, Any] = Field(default_factory=dict)
    train_echo: Dict[str, Any] = Field(default_factory=dict)


# ─── Optimizer ───

@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, grads: Dict[str, np.ndarray], state: AdamState, lr: float,
              betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS) -> Tuple[Params, AdamState]:
    """Bias-corrected Adam update in place, no weight decay"""
    b1, b2 = betas
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            logger.error(f"Non-finite gradient for '{name}' at step {state.step + 1}")
            raise TrainingAbortedError(f"non-finite gradient for parameter '{name}'")
        if g.shape != params[name].data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter '{name}' {params[name].data.shape}")

    state.step += 1
    t = state.step
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        m = b1 * (m if m is not None else np.zeros_like(g)) + (1.0 - b1) * g
        v = b2 * (v if v is not None else np.zeros_like(g)) + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        params[name].data = params[name].data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(math.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    """Rescale all gradients together when their global L2 norm exceeds max_norm"""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}


# ─── Metrics ───

def _masked(pred: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        pred, target = pred[mask], target[mask]
    if pred.size == 0:
        raise MetricError("mask selects no edge")
    return pred, target


def rmse(pred, target, mask=None) -> float:
    p, t = _masked(pred, target, mask)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(pred, target, mask=None) -> float:
    p, t = _masked(pred, target, mask)
    return float(np.mean(np.abs(p - t)))


def r2(pred, target, mask=None) -> Optional[float]:
    """1 - SS_res/SS_tot; None when the masked targets are constant"""
    p, t = _masked(pred, target, mask)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return None
    return 1.0 - float(((t - p) ** 2).sum()) / ss_tot


def auc_roc(scores, labels) -> float:
    """Rank-based AUC (Mann-Whitney U) with midranks for ties"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise MetricError("labels must be binary")
    pos = labels.astype(bool)
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def direction_violation_rate(pred, directed, tol: float = 1e-3) -> Optional[float]:
    """Share of directed edges whose prediction points against the edge direction"""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    directed = np.asarray(directed, dtype=bool).reshape(-1)
    if not directed.any():
        return None
    return float(np.mean(pred[directed] < -tol))


def histogram(values, bins: int = 20, value_range: Optional[Tuple[float, float]] = None) -> Dict[str, List[float]]:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if value_range is None and values.size:
        value_range = (float(values.min()), float(values.max()))
        if value_range[0] == value_range[1]:
            value_range = (value_range[0] - 0.5, value_range[1] + 0.5)
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    return {"edges": edges.tolist(), "counts": counts.astype(int).tolist()}


# ─── Batching and evaluation ───

@dataclass
class Batch:
    ops: GraphOperators
    x_equ: np.ndarray
    x_inv: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    directed: np.ndarray


_PART_CODE = {"train": 0, "val": 1, "test": 2}


def _edge_mask(sample: LabeledGraphSample, part: str, transductive: bool) -> np.ndarray:
    if not transductive:
        return sample.mask
    if sample.edge_split is None:
        raise DatasetError("single-graph dataset lacks an edge split")
    return sample.mask & (sample.edge_split == _PART_CODE[part])


def make_batch(samples: Sequence[LabeledGraphSample], ops: Sequence[GraphOperators], part: str,
               transductive: bool = False) -> Batch:
    """Disjoint union of several samples with block-diagonal operators"""
    return Batch(
        ops=stack_operators(list(ops)),
        x_equ=np.concatenate([s.x_equ for s in samples], axis=0),
        x_inv=np.concatenate([s.x_inv for s in samples], axis=0),
        y=np.concatenate([s.y for s in samples], axis=0),
        mask=np.concatenate([_edge_mask(s, part, transductive) for s in samples]),
        directed=np.concatenate([s.graph.directed for s in samples]),
    )


def default_loss(task: Task) -> LossKind:
    return LossKind.CROSS_ENTROPY if task is Task.BINARY else LossKind.MSE


def batch_loss(loss: LossKind, y_equ: ad.Tensor, y_inv: ad.Tensor, batch: Batch) -> ad.Tensor:
    """Cross-entropy on the invariant head, MSE on the equivariant head"""
    if loss is LossKind.CROSS_ENTROPY:
        return ad.bce_with_logits(ad.cols(y_inv, 0, 1), batch.y, batch.mask)
    return ad.mse_loss(ad.cols(y_equ, 0, 1), batch.y, batch.mask)


@dataclass
class Predictions:
    scores: np.ndarray
    targets: np.ndarray
    directed: np.ndarray


def predict(cfg: ModelConfig, params: Params, samples: Sequence[LabeledGraphSample],
            ops: Sequence[GraphOperators], part: str, loss: LossKind, transductive: bool = False) -> Predictions:
    """Predictions on the masked edges of every sample, in eval mode"""
    scores, targets, directed = [], [], []
    for s, o in zip(samples, ops):
        y_equ, y_inv = forward_with_operators(cfg, params, o, s.x_equ, s.x_inv, training=False)
        head = y_inv if loss is LossKind.CROSS_ENTROPY else y_equ
        mask = _edge_mask(s, part, transductive)
        scores.append(head.data[mask, 0])
        targets.append(s.y[mask, 0])
        directed.append(s.graph.directed[mask])
    if not scores:
        raise DatasetError(f"split '{part}' is empty")
    return Predictions(np.concatenate(scores), np.concatenate(targets), np.concatenate(directed))


def compute_metrics(pred: Predictions, loss: LossKind) -> Dict[str, Optional[float]]:
    if pred.scores.size == 0:
        raise MetricError("no edge to evaluate")
    if loss is LossKind.CROSS_ENTROPY:
        return {"auc_roc": auc_roc(pred.scores, pred.targets)}
    return {
        "rmse": rmse(pred.scores, pred.targets),
        "mae": mae(pred.scores, pred.targets),
        "r2": r2(pred.scores, pred.targets),
        "direction_violation_rate": direction_violation_rate(pred.scores, pred.directed),
    }


def _selection_value(metrics: Dict[str, Optional[float]], loss: LossKind) -> Optional[float]:
    return metrics["auc_roc"] if loss is LossKind.CROSS_ENTROPY else metrics["rmse"]


def _improves(value: Optional[float], best: Optional[float], loss: LossKind) -> bool:
    if value is None:
        return False
    if best is None:
        return True
    return value > best if loss is LossKind.CROSS_ENTROPY else value < best


def _safe_metrics(pred: Predictions, loss: LossKind) -> Dict[str, Optional[float]]:
    try:
        return compute_metrics(pred, loss)
    except MetricError as e:
        logger.warning(f"Metric undefined: {e}")
        return {"auc_roc": None} if loss is LossKind.CROSS_ENTROPY else {"rmse": None}


def _parts(dataset: Dataset) -> Dict[str, List[int]]:
    parts = {}
    for part in ("train", "val", "test"):
        idx = dataset.splits.get(part, [])
        if not idx:
            raise DatasetError(f"dataset {dataset.name}: split '{part}' is empty")
        parts[part] = list(idx)
    return parts


# ─── Training ───

def train_model(cfg: ModelConfig, tcfg: TrainConfig, dataset: Dataset) -> Tuple[MetricsReport, Params]:
    """Fixed-epoch training with best-validation model selection

    Returns the test-set report for the selected parameters and the parameters.
    """
    cfg = cfg.model_copy(update={"dropout": tcfg.dropout})
    parts = _parts(dataset)
    task = dataset.samples[0].task
    loss_kind = tcfg.loss or default_loss(task)
    transductive = dataset.transductive

    run_id = f"train-{cfg.architecture.value}-{uuid.uuid4().hex[:8]}"
    run_tracker.start_run(run_id, "train", {"dataset": dataset.name, "seed": tcfg.seed, "lr": tcfg.lr})
    started = time.perf_counter()

    try:
        params = init_params(cfg, derive_seed(tcfg.seed, 1))
        shuffle_rng = make_rng(tcfg.seed, 2)
        dropout_rng = make_rng(tcfg.seed, 3)
        ops = [prepare_operators(cfg, s.graph, s.orientation) for s in dataset.samples]

        def split(part):
            return [dataset.samples[i] for i in parts[part]], [ops[i] for i in parts[part]]

        val_samples, val_ops = split("val")
        best_params = copy_params(params)
        best_val = _selection_value(
            _safe_metrics(predict(cfg, params, val_samples, val_ops, "val", loss_kind, transductive), loss_kind), loss_kind
        )
        best_epoch = 0
        state = AdamState()
        history: List[EpochRecord] = []

        epochs = tqdm(range(1, tcfg.epochs + 1), desc=f"{cfg.architecture.value}/{dataset.name}",
                      disable=not tcfg.progress, leave=False)
        for epoch in epochs:
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(parts["train"])
            losses = []
            for start in range(0, len(order), tcfg.batch_size):
                idx = order[start:start + tcfg.batch_size].tolist()
                batch = make_batch([dataset.samples[i] for i in idx], [ops[i] for i in idx], "train", transductive)
                if not batch.mask.any():
                    continue
                y_equ, y_inv = forward_with_operators(cfg, params, batch.ops, batch.x_equ, batch.x_inv,
                                                      training=True, rng=dropout_rng)
                loss = batch_loss(loss_kind, y_equ, y_inv, batch)
                grads = ad.backward(loss, params.values())
                grads = clip_grad_norm(grads, tcfg.grad_clip_norm)
                adam_step(params, grads, state, tcfg.lr, tcfg.betas, tcfg.eps)
                losses.append(float(loss.data))

            val_metrics = _safe_metrics(predict(cfg, params, val_samples, val_ops, "val", loss_kind, transductive), loss_kind)
            val = _selection_value(val_metrics, loss_kind)
            if _improves(val, best_val, loss_kind):
                best_val, best_epoch = val, epoch
                best_params = copy_params(params)
            record = EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(losses)) if losses else float("nan"),
                val_metric=val,
                seconds=time.perf_counter() - t0,
            )
            history.append(record)
            logger.info(f"epoch {epoch}/{tcfg.epochs} loss={record.train_loss:.5f} val={val}")
    except NonFiniteError as e:
        logger.error(f"Run {run_id} aborted: {e}")
        run_tracker.end_run(run_id, success=False, error=str(e))
        raise TrainingAbortedError(str(e)) from e
    except Exception as e:
        run_tracker.end_run(run_id, success=False, error=str(e))
        raise

    test_samples, test_ops = split("test")
    test = compute_metrics(predict(cfg, best_params, test_samples, test_ops, "test", loss_kind, transductive), loss_kind)

    checkpoint = None
    if tcfg.checkpoint_path:
        save_checkpoint(tcfg.checkpoint_path, cfg, best_params)
        checkpoint = tcfg.checkpoint_path

    run_tracker.end_run(run_id, success=True)
    report = MetricsReport(
        **test,
        selection_metric="auc_roc" if loss_kind is LossKind.CROSS_ENTROPY else "rmse",
        best_epoch=best_epoch,
        best_val=best_val,
        history=history,
        checkpoint=checkpoint,
        wall_time=time.perf_counter() - started,
        config_echo=cfg.model_dump(mode="json"),
        train_echo={**tcfg.model_dump(mode="json"), "weight_decay": 0.0},
    )
    logger.info(f"Run {run_id} done: best epoch {best_epoch}, test {report.selection_metric}="
                f"{getattr(report, report.selection_metric)}")
    return report, best_params


def evaluate_model(cfg: ModelConfig, params: Params, dataset: Dataset, part: str = "test",
                   loss: Optional[LossKind] = None, bins: int = 0) -> Dict[str, Any]:
    """Metrics on one split; optional histogram of predictions on directed edges"""
    loss = loss or default_loss(dataset.samples[0].task)
    idx = dataset.splits[part]
    samples = [dataset.samples[i] for i in idx]
    ops = [prepare_operators(cfg, s.graph, s.orientation) for s in samples]
    pred = predict(cfg, params, samples, ops, part, loss, dataset.transductive)
    result: Dict[str, Any] = dict(compute_metrics(pred, loss))
    if bins:
        result["histogram_directed"] = histogram(pred.scores[pred.directed], bins)
        result["histogram_undirected"] = histogram(pred.scores[~pred.directed], bins)
    return result


def write_report(report: MetricsReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    return path


# ─── Grid ───

class GridSpec(BaseModel):
    lr: List[float] = Field(default_factory=lambda: list(LR_GRID))
    hidden: List[int] = Field(default_factory=lambda: list(HIDDEN_GRID))
    layers: List[int] = Field(default_factory=lambda: list(LAYERS_GRID))
    repeats: int = Field(1, ge=1)
    seeds: Optional[List[int]] = None

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "GridSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**(yaml.safe_load(f) or {}))

    def cells(self) -> List[Tuple[float, int, int]]:
        return list(itertools.product(self.lr, self.hidden, self.layers))

    def run_seeds(self, base: int) -> List[int]:
        if self.seeds:
            return list(self.seeds[:self.repeats]) if len(self.seeds) >= self.repeats else list(self.seeds)
        return [base + r for r in range(self.repeats)]


class GridRow(BaseModel):
    lr: float
    hidden: int
    layers: int
    metric: str
    mean: Optional[float]
    ci95: float
    values: List[Optional[float]]


def mean_ci(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and 95% normal-approximation half-width"""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))


def run_grid(cfg: ModelConfig, tcfg: TrainConfig, dataset: Dataset, spec: GridSpec,
             threads: Optional[int] = None) -> List[GridRow]:
    """Cartesian lr x hidden x layers grid; rows come back in grid order"""
    seeds = spec.run_seeds(tcfg.seed)
    jobs = [(cell, seed) for cell in spec.cells() for seed in seeds]

    def run(job):
        (lr, hidden, layers), seed = job
        cell_cfg = cfg.model_copy(update={"hidden": hidden, "layers": layers})
        cell_tcfg = tcfg.model_copy(update={"lr": lr, "seed": seed, "progress": False, "checkpoint_path": None})
        report, _ = train_model(cell_cfg, cell_tcfg, dataset)
        return job, report.selection_metric, getattr(report, report.selection_metric)

    workers = resolve_threads(threads)
    if workers == 1:
        results = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))

    by_cell: Dict[Tuple[float, int, int], List[Optional[float]]] = {}
    metric = "rmse"
    for (cell, _), name, value in results:
        by_cell.setdefault(cell, []).append(value)
        metric = name

    rows = []
    for cell in spec.cells():
        values = by_cell[cell]
        finite = [v for v in values if v is not None]
        mean, ci = mean_ci(finite) if finite else (None, 0.0)
        rows.append(GridRow(lr=cell[0], hidden=cell[1], layers=cell[2], metric=metric, mean=mean, ci95=ci, values=values))
    logger.info(f"Grid on {dataset.name}: {len(rows)} cells x {len(seeds)} repeats")
    return rows


def write_table(rows: Sequence[BaseModel], path: Union[str, Path]) -> Path:
    """JSON or CSV depending on the suffix"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [r.model_dump(mode="json") for r in rows]
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(records[0].keys()) if records else [])
            writer.writeheader()
            for rec in records:
                writer.writerow({k: json.dumps(v) if isinstance(v, list) else v for k, v in rec.items()})
    else:
        path.write_text(json.dumps(records, indent=2))
    return path
