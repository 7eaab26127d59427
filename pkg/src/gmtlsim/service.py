"""FastAPI service wrapping the simulator.

The service is stateless: a /simulate call parses the config, loads the
dataset (from a server-readable path or an inline payload), runs every
scheduled simulation synchronously, and returns the metrics CSV / summary /
plot payloads for the client to materialize.  Desk-scale runs take seconds
to minutes, so callers should use a generous timeout.
"""

from __future__ import annotations

import math
import warnings

from fastapi import FastAPI, HTTPException

from . import __version__
from .bounds import BoundInputs, convergence_bound, lr_condition
from .errors import SimError
from .experiment import load_experiment_dataset, parse_config, run_experiment
from .schemas import (
    BoundsRequest,
    BoundsResponse,
    HealthResponse,
    RunPayload,
    SimulateRequest,
    SimulateResponse,
    TopologyRequest,
    TopologyResponse,
)
from .topology import build_topology, mixing_matrix, spectral_gap

app = FastAPI(title="gmtlsim", version=__version__)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest) -> SimulateResponse:
    try:
        overrides = dict(request.overrides)
        if request.dataset_path is not None:
            overrides["dataset"] = request.dataset_path
        spec = parse_config(request.config, overrides)
        manifest, samples = load_experiment_dataset(spec, inline=request.dataset)
        result = run_experiment(spec, manifest, samples)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=400, detail=f"dataset not found: {exc}") from exc
    except SimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return SimulateResponse(
        runs=[
            RunPayload(
                label=r.label,
                algorithm=r.algorithm,
                point=r.point,
                metrics_csv=r.csv_text,
                summary=r.summary,
                error=r.error,
            )
            for r in result.runs
        ],
        summary=result.summary,
        plot_tsv=result.plot_tsv,
        failed=result.failed,
    )


@app.post("/bounds", response_model=BoundsResponse)
def bounds(request: BoundsRequest) -> BoundsResponse:
    try:
        inputs = BoundInputs(
            eta=request.eta,
            L=request.L,
            tau=request.tau,
            zeta=request.zeta,
            sigma_sq=request.sigma_sq,
            K=request.K,
            T=request.T,
            f_init=request.f_init,
            f_inf=request.f_inf,
            beta=request.beta,
        )
        cond = lr_condition(inputs)
        value = convergence_bound(inputs)
    except SimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return BoundsResponse(
        feasible=cond.feasible,
        lr_condition_lhs=cond.lhs,
        reason=cond.reason,
        bound=None if math.isinf(value) else value,
    )


@app.post("/topology/inspect", response_model=TopologyResponse)
def inspect_topology(request: TopologyRequest) -> TopologyResponse:
    try:
        conn = build_topology(request.kind, request.K, request.n_neighbors, request.seed)
        mix = mixing_matrix(conn, "uniform" if request.uniform_weights else "metropolis")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            zeta = spectral_gap(mix)
    except SimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return TopologyResponse(
        kind=request.kind,
        K=request.K,
        zeta=zeta,
        connected=conn.connected,
        mixing=[[float(x) for x in row] for row in mix.weights],
    )
