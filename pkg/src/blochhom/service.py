"""HTTP facade over the certification runner.

One endpoint per workflow; the request body mirrors the TOML run
configuration (coefficient paths must be resolvable on the service host).
The service computes, persists results under the configured output directory
and returns the machine-readable summary.
"""

from __future__ import annotations

import os
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import ConfigError, RunConfig
from .runner import run

COMMAND_KINDS = {
    "ahom": "ahom_table",
    "elliptic-sweep": "elliptic",
    "maxwell-sweep": "maxwell",
    "abstract-check": "abstract",
    "properties": "properties",
}


class SpaceModel(BaseModel):
    d: int = Field(1, ge=1, le=3)
    n: int = Field(1, ge=1)
    n_trunc: int = Field(8, ge=1)


class EpsModel(BaseModel):
    start: float = Field(0.3, gt=0)
    stop: float = Field(3e-3, gt=0)
    count: int = Field(5, ge=1)


class RunRequest(BaseModel):
    kind: Optional[str] = None
    space: SpaceModel = SpaceModel()
    coefficients: Dict[str, str] = {}
    theta_points: List[int] = [3]
    eps: EpsModel = EpsModel()
    seed: int = 0
    out_dir: str = "out"
    workers: int = 0
    tolerances: Dict[str, float] = {}
    options: Dict[str, object] = {}


class RunSummary(BaseModel):
    kind: str
    config_digest: str
    all_pass: bool
    slope: Optional[float]
    slope_residual: Optional[float]
    max_err_ratio: Optional[float]
    rows: int
    wall_time: float
    out_dir: str
    csv_path: str
    summary_path: str
    extras: Dict[str, object] = {}


app = FastAPI(
    title="blochhom",
    version=__version__,
    description="Certified spectral homogenisation sweeps on Bloch fibres.",
)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


def _to_config(kind: str, request: RunRequest) -> RunConfig:
    for name, path in request.coefficients.items():
        if not os.path.exists(path):
            raise ConfigError(f"coefficient '{name}' path does not resolve "
                              f"on the service host: {path}")
    return RunConfig(
        kind=kind,
        d=request.space.d,
        n=request.space.n,
        n_trunc=request.space.n_trunc,
        coefficients=dict(request.coefficients),
        theta_points=list(request.theta_points),
        eps_start=request.eps.start,
        eps_stop=request.eps.stop,
        eps_count=request.eps.count,
        seed=request.seed,
        out_dir=request.out_dir,
        workers=request.workers,
        tolerances=dict(request.tolerances),
        options=dict(request.options),
    )


@app.post("/v1/run/{command}", response_model=RunSummary)
def run_command(command: str, request: RunRequest) -> RunSummary:
    kind = COMMAND_KINDS.get(command)
    if kind is None:
        raise HTTPException(status_code=404,
                            detail=f"unknown command '{command}'")
    if request.kind is not None and request.kind != kind:
        raise HTTPException(
            status_code=400,
            detail=f"config kind '{request.kind}' does not match command "
                   f"'{command}'")
    try:
        config = _to_config(kind, request)
        outcome = run(config)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return RunSummary(
        kind=outcome.kind,
        config_digest=outcome.config_digest,
        all_pass=outcome.all_pass,
        slope=outcome.slope,
        slope_residual=outcome.slope_residual,
        max_err_ratio=outcome.max_err_ratio,
        rows=len(outcome.rows),
        wall_time=outcome.wall_time,
        out_dir=config.out_dir,
        csv_path=os.path.join(config.out_dir, "results.csv"),
        summary_path=os.path.join(config.out_dir, "summary.json"),
        extras=dict(outcome.extras),
    )
