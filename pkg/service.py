"""
HTTP surface for operator inspection and the invariant suite.
"""
import logging
from typing import Any, Dict, List, Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from config import run_blocking, run_tracker
from graph_core import loads_graph
from nn import Architecture, ModelConfig
from operators import LaplacianKind, default_q, laplacian, normalized_laplacian, to_coordinates
from verify import (
    VerificationReport,
    check_boundary_identities,
    check_joint_equivariance,
    check_joint_invariance,
    check_permutation_equivariance,
    check_zero_lemma,
    default_check_config,
)

logger = logging.getLogger(__name__)

router = APIRouter()


class LaplacianRequest(BaseModel):
    graph: str = Field(..., description="`n m` header followed by `u v D|U` lines")
    kind: str = "equ"
    q: Optional[float] = Field(None, ge=0.0, le=1.0)
    normalized: bool = False


class LaplacianResponse(BaseModel):
    n: int
    m: int
    kind: str
    q: float
    nnz: int
    entries: List[List[float]]


class VerifyRequest(BaseModel):
    architecture: Architecture = Architecture.EIGN
    trials: int = Field(10, ge=1, le=200)
    seed: int = 0
    checks: List[str] = Field(default_factory=lambda: ["equivariance", "invariance", "permutation"])


_CHECKS = ("equivariance", "invariance", "permutation", "boundary", "zero_lemma")


def _laplacian_payload(req: LaplacianRequest) -> LaplacianResponse:
    g, o = loads_graph(req.graph, "<request>")
    kind = LaplacianKind.parse(req.kind)
    q = default_q(g) if req.q is None else req.q
    lap = normalized_laplacian(g, o, kind, q) if req.normalized else laplacian(g, o, kind, q)
    coords = to_coordinates(lap)
    return LaplacianResponse(
        n=g.n, m=g.m, kind=kind.name.lower(), q=q, nnz=len(coords),
        entries=[[float(r), float(c), re, im] for r, c, re, im in coords],
    )


def _verify_payload(req: VerifyRequest) -> List[VerificationReport]:
    cfg: ModelConfig = default_check_config(req.architecture)
    reports = []
    for name in req.checks:
        if name == "equivariance":
            reports.append(check_joint_equivariance(cfg, req.trials, seed=req.seed))
        elif name == "invariance":
            reports.append(check_joint_invariance(cfg, req.trials, seed=req.seed))
        elif name == "permutation":
            reports.append(check_permutation_equivariance(cfg, req.trials, seed=req.seed))
        elif name == "boundary":
            reports.append(check_boundary_identities(req.trials, seed=req.seed))
        elif name == "zero_lemma":
            reports.append(check_zero_lemma(req.trials, seed=req.seed))
    return reports


@router.post("/laplacian", response_model=LaplacianResponse)
async def laplacian_endpoint(req: LaplacianRequest):
    """Coordinate dump of one Laplacian kind"""
    try:
        return await run_blocking(_laplacian_payload, req)
    except ValueError as e:
        logger.error(f"Laplacian request rejected: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Laplacian request failed: {e}")
        raise HTTPException(status_code=500, detail=f"Laplacian computation failed: {str(e)}")


@router.post("/verify", response_model=List[VerificationReport])
async def verify_endpoint(req: VerifyRequest):
    unknown = [c for c in req.checks if c not in _CHECKS]
    if unknown:
        raise HTTPException(status_code=400, detail=f"Unknown check(s): {', '.join(unknown)}")
    try:
        return await run_blocking(_verify_payload, req)
    except Exception as e:
        logger.error(f"Verification failed: {e}")
        raise HTTPException(status_code=500, detail=f"Verification failed: {str(e)}")


@router.get("/stats")
async def stats_endpoint() -> Dict[str, Any]:
    return run_tracker.get_statistics()
