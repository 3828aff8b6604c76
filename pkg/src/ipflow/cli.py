"""Command-line frontend: a thin client over the solve service.

Commands run in-process through the service handlers by default; pass
``--server URL`` to send the same request to a running service instead.
Exit codes: 0 success, 2 parse/input error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import IpflowError, ParseError
from .service import (
    FlowRequest,
    LPRequest,
    Report,
    SolveOptions,
    handle_gen_mcf,
    handle_max_flow,
    handle_min_cost_flow,
    handle_solve_lp,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ipflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, default_eps):
        p.add_argument("input", help="problem file path ('-' for stdin)")
        p.add_argument("--eps", type=float, default=default_eps)
        p.add_argument("--mode", choices=["paper", "practical"], default="practical")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--backend", choices=["direct", "cg"], default=None)
        p.add_argument("--format", choices=["json", "text"], default="json")
        p.add_argument("--max-iters", type=int, default=200_000)
        p.add_argument("--server", default=None, help="POST to this service URL")

    common(sub.add_parser("solve-lp", help="solve a boxed LP from JSON"), 1e-4)
    common(sub.add_parser("max-flow", help="exact max flow from DIMACS"), 0.05)
    common(sub.add_parser("min-cost-flow", help="exact min-cost max flow"), 0.05)
    p = sub.add_parser("gen-mcf", help="approximate generalized min-cost flow")
    common(p, 1e-3)
    p.add_argument("--flow-target", type=float, default=None,
                   help="units to deliver at the sink (defaults to DIMACS supply)")

    b = sub.add_parser("bench", help="iteration scaling over random flow families")
    b.add_argument("--sizes", default="16,32,64,128",
                   help="comma-separated vertex counts")
    b.add_argument("--eps", type=float, default=1e-2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--reps", type=int, default=1, help="instances per size")

    s = sub.add_parser("serve", help="run the HTTP solve service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    return ap


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}")


def _options(args) -> SolveOptions:
    return SolveOptions(
        eps=args.eps, mode=args.mode, seed=args.seed,
        backend=args.backend, max_iters=args.max_iters,
    )


def _post(server: str, route: str, payload: dict) -> Report:
    import httpx

    resp = httpx.post(server.rstrip("/") + route, json=payload, timeout=None)
    if resp.status_code == 400:
        raise ParseError(resp.json().get("detail", "bad request"))
    if resp.status_code != 200:
        raise IpflowError(resp.json().get("detail", f"HTTP {resp.status_code}"))
    return Report.model_validate(resp.json())


def _emit(report: Report, fmt: str) -> None:
    if fmt == "json":
        print(report.to_json())
        return
    pairs = report.model_dump(by_alias=True, exclude_none=True)
    pairs.pop("x", None)
    pairs.pop("flow", None)
    for key, val in pairs.items():
        print(f"{key}: {val}")


def _run_solve(args) -> int:
    text = _read_input(args.input)
    opts = _options(args)
    if args.command == "solve-lp":
        req = LPRequest(lp_json=text, options=opts)
        route, handler = "/solve-lp", handle_solve_lp
    else:
        target = getattr(args, "flow_target", None)
        req = FlowRequest(dimacs=text, target=target, options=opts)
        route, handler = {
            "max-flow": ("/max-flow", handle_max_flow),
            "min-cost-flow": ("/min-cost-flow", handle_min_cost_flow),
            "gen-mcf": ("/gen-mcf", handle_gen_mcf),
        }[args.command]
    if args.server:
        report = _post(args.server, route, json.loads(req.model_dump_json()))
    else:
        report = handler(req)
    _emit(report, args.format)
    return EXIT_OK


def generate_mcf_instance(n: int, seed: int):
    """Deterministic random min-cost-flow instance with about 4n edges."""
    import numpy as np

    from .flow import FlowEdge, FlowNetwork

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    edges = []
    for i in range(n - 1):
        edges.append(FlowEdge(int(perm[i]), int(perm[i + 1]),
                              int(rng.integers(1, 21)), int(rng.integers(0, 21))))
    while len(edges) < 4 * n:
        a, b = rng.integers(0, n, size=2)
        if a == b:
            continue
        edges.append(FlowEdge(int(a), int(b), int(rng.integers(1, 21)),
                              int(rng.integers(0, 21))))
    return FlowNetwork(n, edges, int(perm[0]), int(perm[-1]))


def _run_bench(args) -> int:
    from .flow import solve_min_cost_flow
    from .pathfollow import SolverParams

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    print("n,m,iterations,solves")
    for n in sizes:
        for rep_i in range(args.reps):
            net = generate_mcf_instance(n, seed=args.seed + 1000 * rep_i + n)
            sol = solve_min_cost_flow(
                net, eps=args.eps, sp=SolverParams(), seed=args.seed
            )
            print(f"{n},{net.m},{sol.report.iterations},{sol.report.solves}")
            sys.stdout.flush()
    return EXIT_OK


def _run_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            return _run_bench(args)
        if args.command == "serve":
            return _run_serve(args)
        return _run_solve(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except IpflowError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
