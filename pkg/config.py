import os
import asyncio
import logging
import time
from functools import partial
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from dotenv import load_dotenv

# Load .env before reading anything else
load_dotenv()

# Logging setup
LOG_LEVEL = os.getenv("EIGN_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("EIGN_LOG_FILE", "")

_handlers: list = [logging.StreamHandler()]
if LOG_FILE:
    _handlers.append(logging.FileHandler(LOG_FILE))

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=_handlers
)
logger = logging.getLogger(__name__)

# Directories (created lazily by the commands that write into them)
DATA_DIR = Path(os.getenv("EIGN_DATA_DIR", "data"))

# Parallelism and determinism
MAX_THREADS = int(os.getenv("EIGN_THREADS", "1"))
DEFAULT_SEED = int(os.getenv("EIGN_SEED", "0"))
MAX_PARALLEL_REQUESTS = int(os.getenv("EIGN_MAX_PARALLEL_REQUESTS", "2"))
process_semaphore = asyncio.Semaphore(MAX_PARALLEL_REQUESTS)

# Numerics
ZERO_TOL = 1e-15
DENSE_MAX_EDGES = int(os.getenv("EIGN_DENSE_MAX_EDGES", "512"))
LINALG_TOL = 1e-12  # pure linear-algebra identities
FORWARD_TOL = 1e-10  # f64 forward passes

# Model defaults
NODE_MLP_HIDDEN = 32
DROPOUT = 0.1
CHEB_ORDER = 5

# Optimization
GRAD_CLIP_NORM = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
LR_GRID = [0.03, 0.01, 0.003, 0.001]
HIDDEN_GRID = [8, 16, 32]
LAYERS_GRID = [2, 3, 4]

# Splits (train, val, test)
SPLITS = {
    "synthetic": (0.7, 0.1, 0.2),
    "traffic": (0.8, 0.1, 0.1),
    "circuits": (0.5, 0.25, 0.25),
}

# Per-dataset defaults: graphs per batch, epochs
DATASET_DEFAULTS: Dict[str, Dict[str, int]] = {
    "rw_comp": {"batch_size": 10, "epochs": 50, "num_graphs": 1000},
    "ld_cycles": {"batch_size": 10, "epochs": 50, "num_graphs": 1000},
    "tri_flow": {"batch_size": 1, "epochs": 50, "num_graphs": 100},
    "circuits": {"batch_size": 10, "epochs": 200, "num_graphs": 1000},
    "traffic": {"batch_size": 1, "epochs": 500, "num_graphs": 1},
}

def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Seeded Philox generator; extra keys derive independent child streams"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed for (seed, keys), independent of thread count"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])

def resolve_threads(threads: Optional[int]) -> int:
    """Cap requested parallelism at >= 1"""
    if threads is None:
        return max(1, MAX_THREADS)
    return max(1, int(threads))

async def run_blocking(func, *args, **kwargs):
    """Run a blocking call in the default executor under the request semaphore"""
    async with process_semaphore:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, partial(func, *args, **kwargs))

def format_duration(seconds: float) -> str:
    """Human-readable duration"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    if seconds < 3600:
        return f"{seconds / 60:.1f}min"
    return f"{seconds / 3600:.2f}h"

# Run monitoring
class RunTracker:
    """Start/end bookkeeping for training runs and grid cells"""

    def __init__(self):
        self.runs: Dict[str, Dict[str, Any]] = {}

    def start_run(self, run_id: str, run_type: str, metadata: Optional[Dict[str, Any]] = None) -> None:
        """Record that a run started"""
        self.runs[run_id] = {
            "start_time": time.perf_counter(),
            "end_time": None,
            "type": run_type,
            "status": "running",
            "metadata": metadata or {},
            "error": None
        }

    def end_run(self, run_id: str, success: bool = True, error: Optional[str] = None) -> float:
        """Record that a run ended; returns its duration in seconds"""
        run = self.runs.get(run_id)
        if run is None:
            return 0.0
        run["end_time"] = time.perf_counter()
        run["status"] = "success" if success else "error"
        if error:
            run["error"] = error
        run["duration"] = run["end_time"] - run["start_time"]
        return run["duration"]

    def get_statistics(self) -> Dict[str, Any]:
        """Aggregate counts and mean duration, per run type as well"""
        total = len(self.runs)
        if total == 0:
            return {"total": 0, "success_rate": 0, "avg_duration": 0, "runs_by_type": {}}

        success = sum(1 for r in self.runs.values() if r["status"] == "success")
        completed = sum(1 for r in self.runs.values() if r["end_time"] is not None)
        durations = [r["duration"] for r in self.runs.values() if r.get("duration") is not None]
        avg_duration = sum(durations) / len(durations) if durations else 0

        runs_by_type: Dict[str, Dict[str, int]] = {}
        for r in self.runs.values():
            entry = runs_by_type.setdefault(r["type"], {"total": 0, "success": 0})
            entry["total"] += 1
            if r["status"] == "success":
                entry["success"] += 1

        return {
            "total": total,
            "completed": completed,
            "success": success,
            "success_rate": (success / total) * 100,
            "avg_duration": avg_duration,
            "runs_by_type": runs_by_type
        }

# Global tracker instance
run_tracker = RunTracker()
