"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class SimulateRequest(BaseModel):
    config: dict = Field(default_factory=dict)
    dataset_path: str | None = None
    dataset: dict | None = None  # inline graph JSON payload
    overrides: dict = Field(default_factory=dict)


class RunPayload(BaseModel):
    label: str
    algorithm: str
    point: dict
    metrics_csv: str
    summary: dict
    error: str | None = None


class SimulateResponse(BaseModel):
    runs: list[RunPayload]
    summary: dict
    plot_tsv: str
    failed: bool


class BoundsRequest(BaseModel):
    eta: float
    L: float
    tau: int
    zeta: float
    sigma_sq: float
    K: int
    T: int
    f_init: float = 1.0
    f_inf: float = 0.0
    beta: float = 0.0


class BoundsResponse(BaseModel):
    feasible: bool
    lr_condition_lhs: float | None
    reason: str | None = None
    bound: float | None  # None encodes an unbounded (zeta == 1) result


class TopologyRequest(BaseModel):
    kind: str
    K: int
    n_neighbors: int = 2
    seed: int = 0
    uniform_weights: bool = False


class TopologyResponse(BaseModel):
    kind: str
    K: int
    zeta: float
    connected: bool
    mixing: list[list[float]]


class HealthResponse(BaseModel):
    status: str
    version: str
