"""
Command-line entry point: data generation, training, evaluation, grids,
the invariant suite, operator dumps and table reproduction.

    python cli.py generate-data --dataset ld_cycles --num-graphs 200
    python cli.py train --model EIGN --dataset-dir data/ld_cycles --epochs 50
    python cli.py check-invariants --trials 100
"""
import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from pydantic import BaseModel

from config import (
    DATA_DIR,
    DATASET_DEFAULTS,
    DEFAULT_SEED,
    format_duration,
    run_tracker,
)
from datasets import (
    DATASET_NAMES,
    Dataset,
    DatasetError,
    GenerationError,
    TaskKind,
    TNTPFormatError,
    build_dataset,
    load_dataset,
    make_task,
    save_dataset,
)
from graph_core import GraphError, load_graph
from nn import (
    ABLATIONS,
    Architecture,
    CheckpointError,
    ModelConfig,
    ModelConfigError,
    load_checkpoint,
    read_checkpoint_config,
)
from operators import LaplacianKind, OperatorError, default_q, dumps_coordinates, laplacian, normalized_laplacian
from train import (
    GridSpec,
    MetricError,
    TrainConfig,
    TrainingAbortedError,
    evaluate_model,
    mean_ci,
    run_grid,
    train_model,
    write_report,
    write_table,
)
from verify import run_all, suite_passed

logger = logging.getLogger(__name__)

_HANDLED = (GraphError, OperatorError, DatasetError, GenerationError, TNTPFormatError, ModelConfigError,
            CheckpointError, TrainingAbortedError, MetricError, FileNotFoundError, ValueError)


def _guard(fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except click.exceptions.Exit:
        raise
    except _HANDLED as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise click.ClickException(str(e))


def _write_json(payload: Any, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, default=str)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(text)


def _load(dataset_dir: str) -> Dataset:
    path = Path(dataset_dir)
    if not path.exists():
        raise DatasetError(f"dataset directory {path} does not exist")
    return load_dataset(path)


def _retask(ds: Dataset, task: Optional[str], seed: int) -> Dataset:
    current = ds.manifest.get("task", TaskKind.SIMULATE.value)
    if task is None or task == current:
        return ds
    if current != TaskKind.SIMULATE.value:
        raise DatasetError(f"dataset was generated for task '{current}', cannot switch to '{task}'")
    ds.samples = [make_task(s, task, seed + i) for i, s in enumerate(ds.samples)]
    ds.manifest["task"] = task
    return ds


def build_model_config(model: str, ds: Dataset, hidden: int, layers: int, q: Optional[float] = None,
                       q_scale: float = 1.0, ablate: Sequence[str] = ()) -> ModelConfig:
    sample = ds.samples[0]
    cfg = ModelConfig(
        architecture=Architecture(model),
        in_equ=sample.x_equ.shape[1],
        in_inv=sample.x_inv.shape[1],
        hidden=hidden,
        layers=layers,
        q=q,
        q_scale=q_scale,
    )
    return cfg.with_ablation(*ablate) if ablate else cfg


def _train_config(ds: Dataset, lr: float, epochs: Optional[int], batch_size: Optional[int], seed: int,
                  checkpoint: Optional[str] = None, progress: bool = True) -> TrainConfig:
    defaults = DATASET_DEFAULTS.get(ds.name, DATASET_DEFAULTS["traffic"] if ds.transductive else DATASET_DEFAULTS["circuits"])
    return TrainConfig(
        lr=lr,
        epochs=defaults["epochs"] if epochs is None else epochs,
        batch_size=defaults["batch_size"] if batch_size is None else batch_size,
        seed=seed,
        checkpoint_path=checkpoint,
        progress=progress,
    )


_MODELS = [a.value for a in Architecture]


@click.group()
@click.option("--threads", type=int, default=None, help="Parallelism cap (1 = bitwise deterministic)")
@click.option("--log-level", default=None, help="Override EIGN_LOG_LEVEL")
@click.pass_context
def cli(ctx, threads, log_level):
    """EIGN edge-level graph learning toolkit"""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads
    if log_level:
        logging.getLogger().setLevel(log_level.upper())


@cli.command("generate-data")
@click.option("--dataset", type=click.Choice(DATASET_NAMES), required=True)
@click.option("--num-graphs", type=int, default=None)
@click.option("--seed", type=int, default=DEFAULT_SEED)
@click.option("--task", type=click.Choice([t.value for t in TaskKind]), default=TaskKind.SIMULATE.value)
@click.option("--net", "net_path", type=click.Path(), default=None, help="TNTP network file (traffic)")
@click.option("--flow", "flow_path", type=click.Path(), default=None, help="TNTP flow file (traffic)")
@click.option("--out", type=click.Path(), default=None, help="Dataset directory (default: $EIGN_DATA_DIR/<dataset>)")
@click.pass_context
def generate_data(ctx, dataset, num_graphs, seed, task, net_path, flow_path, out):
    """Generate a dataset directory"""
    out_dir = Path(out) if out else DATA_DIR / dataset

    def run():
        ds = build_dataset(dataset, seed=seed, num_graphs=num_graphs, task=task, net_path=net_path,
                           flow_path=flow_path, fixture_dir=out_dir / "tntp", threads=ctx.obj["threads"])
        save_dataset(ds, out_dir)
        return ds

    ds = _guard(run)
    _write_json(ds.manifest["statistics"], None)
    click.echo(f"{dataset}: {len(ds.samples)} graphs -> {out_dir}", err=True)


def _model_options(fn):
    options = [
        click.option("--model", type=click.Choice(_MODELS), default=Architecture.EIGN.value),
        click.option("--dataset-dir", type=click.Path(), required=True),
        click.option("--task", type=click.Choice([t.value for t in TaskKind]), default=None),
        click.option("--hidden", type=int, default=32),
        click.option("--layers", type=int, default=4),
        click.option("--q", type=float, default=None, help="Phase parameter (default q_scale/m)"),
        click.option("--q-scale", type=float, default=1.0),
        click.option("--ablate", type=click.Choice(ABLATIONS), multiple=True),
        click.option("--seed", type=int, default=DEFAULT_SEED),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@cli.command()
@_model_options
@click.option("--lr", type=float, default=0.01)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None, help="metrics.json")
def train(model, dataset_dir, task, hidden, layers, q, q_scale, ablate, seed, lr, epochs, batch_size, checkpoint, out):
    """Train one model and report test metrics"""

    def run():
        ds = _retask(_load(dataset_dir), task, seed)
        cfg = build_model_config(model, ds, hidden, layers, q, q_scale, ablate)
        tcfg = _train_config(ds, lr, epochs, batch_size, seed, checkpoint)
        report, _ = train_model(cfg, tcfg, ds)
        return report

    report = _guard(run)
    if out:
        write_report(report, out)
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(report.model_dump_json(indent=2))
    click.echo(f"{model}: test {report.selection_metric}={getattr(report, report.selection_metric)} "
               f"(best epoch {report.best_epoch}, {format_duration(report.wall_time)})", err=True)


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--dataset-dir", type=click.Path(), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--histogram", "bins", type=int, default=0, help="Bins for prediction histograms (0 = off)")
@click.option("--out", type=click.Path(), default=None)
def evaluate(checkpoint, dataset_dir, split, bins, out):
    """Metrics of a saved checkpoint on one split"""

    def run():
        cfg = read_checkpoint_config(checkpoint)
        params = load_checkpoint(checkpoint, cfg)
        return evaluate_model(cfg, params, _load(dataset_dir), split, bins=bins)

    _write_json(_guard(run), out)


@cli.command()
@_model_options
@click.option("--grid", "grid_path", type=click.Path(exists=True), default=None, help="YAML grid spec")
@click.option("--repeats", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="results table (.json or .csv)")
@click.pass_context
def grid(ctx, model, dataset_dir, task, hidden, layers, q, q_scale, ablate, seed, grid_path, repeats, epochs, out):
    """Cartesian lr x hidden x layers grid with mean and 95% CI"""

    def run():
        ds = _retask(_load(dataset_dir), task, seed)
        spec = GridSpec.from_yaml(grid_path) if grid_path else GridSpec()
        if repeats is not None:
            spec = spec.model_copy(update={"repeats": repeats})
        cfg = build_model_config(model, ds, hidden, layers, q, q_scale, ablate)
        tcfg = _train_config(ds, 0.01, epochs, None, seed, progress=False)
        return run_grid(cfg, tcfg, ds, spec, threads=ctx.obj["threads"])

    rows = _guard(run)
    if out:
        write_table(rows, out)
        click.echo(f"wrote {out}", err=True)
    else:
        _write_json([r.model_dump(mode="json") for r in rows], None)
    for r in rows:
        click.echo(f"lr={r.lr:<6g} hidden={r.hidden:<3d} layers={r.layers}  {r.metric}={r.mean} ± {r.ci95:.3f}", err=True)


@cli.command("check-invariants")
@click.option("--trials", type=int, default=100)
@click.option("--seed", type=int, default=DEFAULT_SEED)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def check_invariants(ctx, trials, seed, out):
    """Run the invariant suite; exit code 2 on any failure"""
    started = time.perf_counter()
    reports = _guard(lambda: run_all(seed=seed, trials=trials, threads=ctx.obj["threads"]))
    ok = suite_passed(reports)
    _write_json({"passed": ok, "reports": [r.model_dump(mode="json") for r in reports]}, out)
    for r in reports:
        tag = "expected-fail" if r.details.get("expected_failure") else ("pass" if r.passed else "FAIL")
        click.echo(f"{r.name:<40} {tag:<14} max dev {r.max_deviation:.3e} over {r.instances}", err=True)
    click.echo(f"suite {'passed' if ok else 'FAILED'} in {format_duration(time.perf_counter() - started)}", err=True)
    if not ok:
        ctx.exit(2)


@cli.command("dump-laplacian")
@click.option("--graph", "graph_path", type=click.Path(), required=True, help="Graph text file")
@click.option("--kind", default="equ", help="equ | inv | equ_to_inv | inv_to_equ")
@click.option("--q", type=float, default=None, help="Phase parameter (default 1/m)")
@click.option("--normalized", is_flag=True)
@click.option("--out", type=click.Path(), default=None)
def dump_laplacian(graph_path, kind, q, normalized, out):
    """Coordinate listing `row col re im` of one Laplacian"""

    def run():
        g, o = load_graph(graph_path)
        k = LaplacianKind.parse(kind)
        q_val = default_q(g) if q is None else q
        lap = normalized_laplacian(g, o, k, q_val) if normalized else laplacian(g, o, k, q_val)
        return dumps_coordinates(lap)

    text = _guard(run)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(text, nl=False)


# ─── Reproduction ───

SYNTHETIC_TASKS = ("rw_comp", "ld_cycles", "tri_flow")
SYNTHETIC_REFERENCE: Dict[str, Tuple[float, float, float]] = {
    "MLP": (0.720, 0.500, 0.547),
    "LineGraph": (0.758, 0.683, 0.497),
    "HodgeGNN": (0.500, 0.500, 0.458),
    "HodgeInv": (0.811, 0.754, 0.293),
    "HodgeDir": (0.819, 0.799, 0.293),
    "Line-MagNet": (0.729, 0.502, 0.542),
    "DirGNN": (0.757, 0.768, 0.453),
    "EIGN": (0.864, 0.996, 0.022),
}
ABLATION_VARIANTS: Dict[str, Tuple[str, ...]] = {
    "no_direction": ("no_direction",),
    "no_fusion": ("no_fusion",),
    "no_fusion_conv": ("no_fusion_conv",),
    "no_node_mlp": ("no_node_mlp",),
    "full": (),
}
ABLATION_REFERENCE: Dict[str, Tuple[float, float, float, float, float]] = {
    "rw_comp": (0.762, 0.853, 0.845, 0.862, 0.864),
    "ld_cycles": (0.689, 0.987, 0.926, 0.996, 0.996),
    "tri_flow": (0.362, 0.088, 0.074, 0.034, 0.022),
    "Anaheim": (0.289, 0.097, 0.283, 0.099, 0.090),
    "Barcelona": (0.172, 0.139, 0.177, 0.163, 0.133),
    "Chicago": (0.079, 0.093, 0.110, 0.082, 0.078),
    "Winnipeg": (0.132, 0.170, 0.175, 0.138, 0.101),
    "circuits": (0.957, 0.974, 0.727, 0.707, 0.696),
}
TRAFFIC_NETWORKS = ("Anaheim", "Barcelona", "Chicago", "Winnipeg")

# (model or variant, dataset) -> (comparison, bound)
THRESHOLDS: Dict[Tuple[str, str], Tuple[str, Any]] = {
    ("EIGN", "ld_cycles"): ("ge", 0.95),
    ("full", "ld_cycles"): ("ge", 0.95),
    ("no_direction", "ld_cycles"): ("le", 0.80),
    ("EIGN", "rw_comp"): ("ge", 0.80),
    ("full", "rw_comp"): ("ge", 0.80),
    ("HodgeGNN", "rw_comp"): ("between", (0.45, 0.55)),
    ("EIGN", "tri_flow"): ("le", 0.10),
    ("full", "tri_flow"): ("le", 0.10),
    ("no_direction", "tri_flow"): ("ge", 0.30),
    ("HodgeGNN", "tri_flow"): ("ge", 0.40),
}

DESK_GRAPHS = {"rw_comp": 200, "ld_cycles": 200, "tri_flow": 50, "circuits": 200}


class ReproRow(BaseModel):
    table: str
    model: str
    dataset: str
    metric: str
    value: Optional[float] = None
    ci95: float = 0.0
    reference: Optional[float] = None
    threshold: Optional[str] = None
    status: str = "n/a"
    extra: Dict[str, Any] = {}


def _judge(key: Tuple[str, str], value: Optional[float]) -> Tuple[Optional[str], str]:
    rule = THRESHOLDS.get(key)
    if rule is None:
        return None, "n/a"
    op, bound = rule
    if value is None:
        return f"{op} {bound}", "fail"
    if op == "ge":
        ok = value >= bound
    elif op == "le":
        ok = value <= bound
    else:
        ok = bound[0] <= value <= bound[1]
    return f"{op} {bound}", "pass" if ok else "fail"


class _Reproduction:
    def __init__(self, scale: str, seed: int, data_dir: Optional[str], tntp_dir: Optional[str],
                 repeats: int, epochs: Optional[int], threads: Optional[int]):
        self.scale = scale
        self.seed = seed
        self.data_dir = Path(data_dir) if data_dir else None
        self.tntp_dir = Path(tntp_dir) if tntp_dir else None
        self.repeats = repeats
        self.epochs = epochs
        self.threads = threads
        self._cache: Dict[str, Dataset] = {}
        if self.data_dir is not None and not self.data_dir.exists():
            raise DatasetError(f"dataset directory {self.data_dir} does not exist")

    def dataset(self, name: str) -> Optional[Dataset]:
        if name in self._cache:
            return self._cache[name]
        if name in TRAFFIC_NETWORKS:
            ds = self._traffic(name)
        elif self.data_dir is not None:
            path = self.data_dir / name
            if not path.exists():
                raise DatasetError(f"dataset directory {path} does not exist")
            ds = load_dataset(path)
        else:
            num = DESK_GRAPHS[name] if self.scale == "desk" else DATASET_DEFAULTS[name]["num_graphs"]
            ds = build_dataset(name, seed=self.seed, num_graphs=num, threads=self.threads)
        self._cache[name] = ds
        return ds

    def _traffic(self, name: str) -> Optional[Dataset]:
        if self.tntp_dir is None:
            return None
        net, flow = self.tntp_dir / f"{name}_net.tntp", self.tntp_dir / f"{name}_flow.tntp"
        if not (net.exists() and flow.exists()):
            return None
        return build_dataset("traffic", seed=self.seed, net_path=net, flow_path=flow)

    def layers_for(self, name: str) -> int:
        return 8 if name == "ld_cycles" else 4

    def run(self, model: str, ds: Dataset, ablate: Sequence[str] = ()) -> Tuple[Optional[float], float, Dict[str, Any]]:
        values, violations = [], []
        for r in range(self.repeats):
            cfg = build_model_config(model, ds, 32, self.layers_for(ds.name), ablate=ablate)
            tcfg = _train_config(ds, 0.01, self.epochs, None, self.seed + r, progress=False)
            report, _ = train_model(cfg, tcfg, ds)
            values.append(getattr(report, report.selection_metric))
            if report.direction_violation_rate is not None:
                violations.append(report.direction_violation_rate)
        finite = [v for v in values if v is not None]
        mean, ci = mean_ci(finite) if finite else (None, 0.0)
        extra = {"runs": values}
        if violations:
            extra["direction_violation_rate"] = float(np.mean(violations))
        return mean, ci, extra


def _reproduce_synthetic(rep: _Reproduction) -> Tuple[List[ReproRow], List[Dict[str, Any]]]:
    rows = []
    for model, refs in SYNTHETIC_REFERENCE.items():
        for task, ref in zip(SYNTHETIC_TASKS, refs):
            metric = "rmse" if task == "tri_flow" else "auc_roc"
            if model == "Line-MagNet":
                rows.append(ReproRow(table="synthetic", model=model, dataset=task, metric=metric, reference=ref,
                                     status="skipped", extra={"reason": "model not implemented"}))
                continue
            value, ci, extra = rep.run(model, rep.dataset(task))
            threshold, status = _judge((model, task), value)
            rows.append(ReproRow(table="synthetic", model=model, dataset=task, metric=metric, value=value, ci95=ci,
                                 reference=ref, threshold=threshold, status=status, extra=extra))
            logger.info(f"synthetic {model}/{task}: {metric}={value} (reference {ref})")
    return rows, []


def _reproduce_ablation(rep: _Reproduction) -> Tuple[List[ReproRow], List[Dict[str, Any]]]:
    rows: List[ReproRow] = []
    checks: List[Dict[str, Any]] = []
    for dataset, refs in ABLATION_REFERENCE.items():
        metric = "auc_roc" if dataset in ("rw_comp", "ld_cycles") else "rmse"
        ds = rep.dataset(dataset)
        for (variant, flags), ref in zip(ABLATION_VARIANTS.items(), refs):
            if ds is None:
                rows.append(ReproRow(table="ablation", model=variant, dataset=dataset, metric=metric, reference=ref,
                                     status="skipped", extra={"reason": "TNTP files not found"}))
                continue
            value, ci, extra = rep.run("EIGN", ds, flags)
            threshold, status = _judge((variant, dataset), value)
            rows.append(ReproRow(table="ablation", model=variant, dataset=dataset, metric=metric, value=value, ci95=ci,
                                 reference=ref, threshold=threshold, status=status, extra=extra))
            logger.info(f"ablation {variant}/{dataset}: {metric}={value} (reference {ref})")

    def value_of(variant, dataset):
        return next((r for r in rows if r.model == variant and r.dataset == dataset), None)

    full_ld, nodir_ld = value_of("full", "ld_cycles"), value_of("no_direction", "ld_cycles")
    if full_ld and nodir_ld and full_ld.value is not None and nodir_ld.value is not None:
        gap = full_ld.value - nodir_ld.value
        checks.append({"name": "ld_cycles_direction_gap", "value": gap, "threshold": "ge 0.15", "passed": gap >= 0.15})

    circuits = rep.dataset("circuits")
    full_c, nodir_c = value_of("full", "circuits"), value_of("no_direction", "circuits")
    for baseline in ("HodgeGNN", "MLP"):
        value, _, _ = rep.run(baseline, circuits)
        ok = full_c.value is not None and value is not None and full_c.value <= 0.9 * value
        checks.append({"name": f"circuits_eign_beats_{baseline}", "value": full_c.value, "baseline": value,
                       "threshold": "eign <= 0.9 * baseline", "passed": bool(ok)})
    v_full = full_c.extra.get("direction_violation_rate")
    v_nodir = nodir_c.extra.get("direction_violation_rate")
    if v_full is not None and v_nodir is not None:
        checks.append({"name": "circuits_diode_violations", "value": v_full, "baseline": v_nodir,
                       "threshold": "eign < 0.10 and eign < q=0", "passed": v_full < 0.10 and v_full < v_nodir})
    return rows, checks


@cli.command()
@click.option("--table", type=click.Choice(["synthetic", "ablation"]), required=True)
@click.option("--scale", type=click.Choice(["desk", "full"]), default="desk")
@click.option("--seed", type=int, default=DEFAULT_SEED)
@click.option("--data-dir", type=click.Path(), default=None, help="Root holding one directory per dataset")
@click.option("--tntp-dir", type=click.Path(), default=None, help="Directory with <Name>_net.tntp / <Name>_flow.tntp")
@click.option("--repeats", type=int, default=None, help="Runs per cell (desk 1, full 5)")
@click.option("--epochs", type=int, default=None, help="Override per-dataset epochs")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def reproduce(ctx, table, scale, seed, data_dir, tntp_dir, repeats, epochs, out):
    """Model table or ablation table next to the published numbers"""
    started = time.perf_counter()
    repeats = repeats or (1 if scale == "desk" else 5)

    def run():
        rep = _Reproduction(scale, seed, data_dir, tntp_dir, repeats, epochs, ctx.obj["threads"])
        return _reproduce_synthetic(rep) if table == "synthetic" else _reproduce_ablation(rep)

    rows, checks = _guard(run)
    payload = {
        "table": table,
        "scale": {
            "name": scale,
            "repeats": repeats,
            "graphs": DESK_GRAPHS if scale == "desk" else {k: v["num_graphs"] for k, v in DATASET_DEFAULTS.items()},
            "note": "desk scale reduces graph counts and repeats; thresholds are widened accordingly",
        },
        "seed": seed,
        "rows": [r.model_dump(mode="json") for r in rows],
        "checks": checks,
        "runs": run_tracker.get_statistics(),
    }
    _write_json(payload, out)
    for r in rows:
        shown = "-" if r.value is None else f"{r.value:.3f}"
        click.echo(f"{r.model:<16} {r.dataset:<10} {r.metric:<8} {shown:>7} (ref {r.reference:.3f})  {r.status}", err=True)
    for c in checks:
        click.echo(f"{c['name']:<40} {'pass' if c['passed'] else 'fail'}", err=True)
    click.echo(f"done in {format_duration(time.perf_counter() - started)}", err=True)


@cli.command("sweep-q")
@click.option("--dataset-dir", type=click.Path(), required=True)
@click.option("--multipliers", default="0,0.25,0.5,1,2,4", help="Comma-separated q*m values")
@click.option("--hidden", type=int, default=32)
@click.option("--layers", type=int, default=4)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=DEFAULT_SEED)
@click.option("--out", type=click.Path(), default=None)
def sweep_q(dataset_dir, multipliers, hidden, layers, epochs, seed, out):
    """EIGN performance as a function of the relative phase shift q*m"""

    def run():
        ds = _load(dataset_dir)
        rows = []
        for mult in (float(x) for x in multipliers.split(",") if x.strip()):
            cfg = build_model_config("EIGN", ds, hidden, layers, q_scale=mult)
            report, _ = train_model(cfg, _train_config(ds, 0.01, epochs, None, seed, progress=False), ds)
            rows.append({"q_times_m": mult, "metric": report.selection_metric,
                         "value": getattr(report, report.selection_metric)})
            logger.info(f"q*m={mult}: {report.selection_metric}={rows[-1]['value']}")
        return rows

    _write_json(_guard(run), out)


@cli.command()
@click.option("--host", default="0.0.0.0")
@click.option("--port", type=int, default=8080)
def serve(host, port):
    """HTTP surface (operator dumps, invariant checks, run statistics)"""
    from main import serve as run_server

    run_server(host, port)


if __name__ == "__main__":
    cli(obj={})
