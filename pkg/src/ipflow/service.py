"""Solve service: pydantic request/response models and the FastAPI app.

The handler functions are the single execution path for solves; the CLI
invokes them in-process by default, and the HTTP endpoints expose the same
contracts to remote clients.
"""
from __future__ import annotations

import time
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import io as ipio
from .errors import IpflowError, ParseError
from .flow import solve_generalized_mcf, solve_max_flow, solve_min_cost_flow
from .linalg import Backend
from .pathfollow import SolverParams, lp_solve

SCHEMA_VERSION = 1


class SolveOptions(BaseModel):
    eps: float = Field(default=1e-4, gt=0.0)
    mode: Literal["paper", "practical"] = "practical"
    seed: int = 0
    backend: Optional[Literal["direct", "cg"]] = None
    max_iters: int = Field(default=200_000, gt=0)

    def solver_params(self) -> SolverParams:
        backend = None if self.backend is None else Backend(self.backend)
        return SolverParams(mode=self.mode, backend=backend, max_iters=self.max_iters)


class LPRequest(BaseModel):
    """Boxed LP in the JSON file schema, wrapped for transport."""

    lp_json: str
    options: SolveOptions = SolveOptions()


class FlowRequest(BaseModel):
    """Flow problem as DIMACS text; target is only used by gen-mcf."""

    dimacs: str
    target: Optional[float] = None
    options: SolveOptions = SolveOptions(eps=0.05)


class Report(BaseModel):
    """Machine-readable solve report; schema versioned."""

    schema_version: int = Field(default=SCHEMA_VERSION, alias="schema")
    command: str
    objective: Optional[float] = None
    value: Optional[float] = None
    cost: Optional[float] = None
    iterations: int = 0
    solves: int = 0
    final_delta: float = 0.0
    gap_bound: float = 0.0
    infeasibility: float = 0.0
    mode: str = "practical"
    wall_time_ms: float = 0.0
    x: Optional[list] = None
    flow: Optional[list] = None

    model_config = {"populate_by_name": True}

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, exclude_none=True)


def handle_solve_lp(req: LPRequest) -> Report:
    lp, x0 = ipio.parse_lp_json(req.lp_json)
    if x0 is None:
        raise ParseError(
            "this LP file has no x0; supply an interior feasible start "
            "(initial-point synthesis is the caller's job)"
        )
    t0 = time.perf_counter()
    x, rep = lp_solve(lp, x0, eps=req.options.eps, sp=req.options.solver_params(),
                      seed=req.options.seed)
    return Report(
        command="solve-lp", objective=rep.objective, iterations=rep.iterations,
        solves=rep.solves, final_delta=rep.final_delta, gap_bound=rep.gap_bound,
        infeasibility=rep.infeasibility, mode=rep.mode,
        wall_time_ms=1e3 * (time.perf_counter() - t0), x=[float(v) for v in x],
    )


def _flow_report(command, sol, t0) -> Report:
    rep = sol.report
    return Report(
        command=command, objective=sol.cost, value=sol.value, cost=sol.cost,
        iterations=rep.iterations, solves=rep.solves, final_delta=rep.final_delta,
        gap_bound=rep.gap_bound, infeasibility=rep.infeasibility, mode=rep.mode,
        wall_time_ms=1e3 * (time.perf_counter() - t0),
        flow=[float(v) for v in sol.flow],
    )


def handle_max_flow(req: FlowRequest) -> Report:
    net = ipio.parse_dimacs_flow(req.dimacs)
    t0 = time.perf_counter()
    sol = solve_max_flow(net, eps=req.options.eps, sp=req.options.solver_params(),
                         seed=req.options.seed)
    return _flow_report("max-flow", sol, t0)


def handle_min_cost_flow(req: FlowRequest) -> Report:
    net = ipio.parse_dimacs_flow(req.dimacs)
    t0 = time.perf_counter()
    sol = solve_min_cost_flow(net, eps=req.options.eps,
                              sp=req.options.solver_params(), seed=req.options.seed)
    return _flow_report("min-cost-flow", sol, t0)


def handle_gen_mcf(req: FlowRequest) -> Report:
    net = ipio.parse_dimacs_flow(req.dimacs)
    target = req.target if req.target is not None else net.supply
    if target is None:
        raise ParseError("gen-mcf needs a flow target (request field or DIMACS supply)")
    t0 = time.perf_counter()
    sol = solve_generalized_mcf(net, float(target), eps=req.options.eps,
                                sp=req.options.solver_params(), seed=req.options.seed)
    return _flow_report("gen-mcf", sol, t0)


def create_app() -> FastAPI:
    app = FastAPI(title="ipflow solve service", version="0.1.0")

    def _wrap(handler, req):
        try:
            return handler(req)
        except ParseError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except IpflowError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "schema": SCHEMA_VERSION}

    @app.post("/solve-lp", response_model=Report, response_model_exclude_none=True)
    def solve_lp_ep(req: LPRequest):
        return _wrap(handle_solve_lp, req)

    @app.post("/max-flow", response_model=Report, response_model_exclude_none=True)
    def max_flow_ep(req: FlowRequest):
        return _wrap(handle_max_flow, req)

    @app.post("/min-cost-flow", response_model=Report, response_model_exclude_none=True)
    def min_cost_flow_ep(req: FlowRequest):
        return _wrap(handle_min_cost_flow, req)

    @app.post("/gen-mcf", response_model=Report, response_model_exclude_none=True)
    def gen_mcf_ep(req: FlowRequest):
        return _wrap(handle_gen_mcf, req)

    return app


app = create_app()
