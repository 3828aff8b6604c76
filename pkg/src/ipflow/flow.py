"""Generalized minimum-cost flow via reduction to a boxed LP.

A lossy network (capacities c_e, costs q_e, multipliers 0 < gamma_e <= 1)
with flow target F reduces to

    min q^T x + M (1^T y + 1^T z)   s.t.  N x + y - z = F 1_t,
    0 <= x <= c,  0 <= y, z <= ybox

where N is the vertex(minus source)-by-edge incidence matrix with +gamma
at heads and -1 at tails.  The x = c/2 point extends to an exactly
feasible interior start.  Max flow and min-cost max flow (gamma = 1) are
circulation specializations with a high-capacity return edge.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    BadTarget,
    Disconnected,
    InvalidShape,
    MalformedNetwork,
    MinEps,
    RoundingFailed,
    TargetInfeasible,
)
from .linalg import SparseMat
from .pathfollow import BoxedLP, SolveReport, SolverParams, lp_solve


@dataclass(frozen=True)
class FlowEdge:
    tail: int
    head: int
    capacity: int
    cost: int = 0
    gamma: Fraction = Fraction(1)


@dataclass
class FlowNetwork:
    """Directed multigraph with integer capacities and rational loss
    multipliers; ``supply`` optionally carries a parsed flow target."""

    n: int
    edges: list
    source: int
    sink: int
    supply: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise MalformedNetwork("need at least two vertices")
        if not (0 <= self.source < self.n and 0 <= self.sink < self.n):
            raise MalformedNetwork("source/sink out of range")
        if self.source == self.sink:
            raise MalformedNetwork("source and sink must differ")
        if not self.edges:
            raise MalformedNetwork("network has no edges")
        for e in self.edges:
            if e.tail == e.head:
                raise MalformedNetwork(f"self-loop at vertex {e.tail}")
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise MalformedNetwork("edge endpoint out of range")
            if int(e.capacity) != e.capacity or e.capacity < 1:
                raise MalformedNetwork("capacities must be integers >= 1")
            g = Fraction(e.gamma)
            if not (0 < g <= 1):
                raise MalformedNetwork("multipliers must satisfy 0 < gamma <= 1")
        self._check_connected()

    def _check_connected(self):
        adj = [[] for _ in range(self.n)]
        for e in self.edges:
            adj[e.tail].append(e.head)
            adj[e.head].append(e.tail)
        seen = {self.source}
        queue = deque([self.source])
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
        if len(seen) != self.n:
            raise Disconnected("flow network is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    def width(self) -> int:
        """max of capacities, |costs|, and multiplier numerators/denominators."""
        u = 1
        for e in self.edges:
            g = Fraction(e.gamma)
            u = max(u, int(e.capacity), abs(int(e.cost)), g.numerator, g.denominator)
        return u

    def unit_gamma(self) -> bool:
        return all(Fraction(e.gamma) == 1 for e in self.edges)


@dataclass
class ReducedLP:
    """Boxed LP encoding of a flow instance plus its interior start."""

    lp: BoxedLP
    x0: np.ndarray
    penalty: float
    target: float
    n_edges: int
    vertex_cols: list  # column index of each vertex (source -> None)


@dataclass
class FlowSolution:
    flow: np.ndarray
    value: float
    cost: float
    approximate: bool
    eps: float
    report: SolveReport = None


def build_incidence(net: FlowNetwork) -> SparseMat:
    """Edge-by-(vertex minus source) incidence matrix: +gamma at the head,
    -1 at the tail, source contributions dropped."""
    cols = {}
    k = 0
    for v in range(net.n):
        if v != net.source:
            cols[v] = k
            k += 1
    rows, ccols, vals = [], [], []
    for i, e in enumerate(net.edges):
        if e.head != net.source:
            rows.append(i)
            ccols.append(cols[e.head])
            vals.append(float(Fraction(e.gamma)))
        if e.tail != net.source:
            rows.append(i)
            ccols.append(cols[e.tail])
            vals.append(-1.0)
    A = SparseMat(net.m, net.n - 1, rows, ccols, vals, check_rank=False)
    A._vertex_cols = cols
    return A


def build_flow_lp(net: FlowNetwork, F: float, eps: float, mode: str = "practical") -> ReducedLP:
    """Assemble the penalized boxed LP with slack columns and interior start.

    Paper mode uses the literal offsets/boxes/penalty (2mU^2, 4mU^2,
    256 m^5 U^5 / eps^2); practical mode sizes them to the instance so the
    LP stays well scaled in double precision.
    """
    m, U = net.m, net.width()
    if not (0.0 <= F <= m * U**2):
        raise BadTarget(f"flow target must lie in [0, mU^2] = [0, {m * U**2}]")
    if eps <= 0:
        raise BadTarget("eps must be positive")
    if mode == "practical" and eps < 1e-3 / (m**3 * U**3):
        raise MinEps(
            f"eps={eps} below the double-precision floor 1e-3/(m^3 U^3)"
        )
    inc = build_incidence(net)
    nv = net.n - 1
    caps = np.array([float(e.capacity) for e in net.edges])
    q = np.array([float(e.cost) for e in net.edges])
    x_half = caps / 2.0
    u_net = inc.rmatvec(x_half)  # net inflow at non-source vertices
    cols = inc._vertex_cols
    t_col = cols[net.sink]
    e_t = np.zeros(nv)
    e_t[t_col] = 1.0

    if mode == "paper":
        off = np.full(nv, 2.0 * m * U**2)
        ybox = 4.0 * m * U**2
        penalty = 256.0 * m**5 * U**5 / eps**2
    else:
        off = 1.0 + np.abs(u_net) + F
        ybox = 4.0 * float(np.max(off))
        # One unit of slack can buy at most one unit of flow along a simple
        # path, worth at most the sum of absolute edge costs.
        penalty = 4.0 * (1.0 + float(np.sum(np.abs(q))))
    y0 = off - np.minimum(u_net, 0.0) + F * e_t
    z0 = off + np.maximum(u_net, 0.0)

    # Stack [x; y; z] as LP rows; constraint matrix columns are vertices.
    rows = list(inc.csc.tocoo().row)
    ccols = list(inc.csc.tocoo().col)
    vals = list(inc.csc.tocoo().data)
    for i in range(nv):
        rows.append(m + i)
        ccols.append(i)
        vals.append(1.0)
        rows.append(m + nv + i)
        ccols.append(i)
        vals.append(-1.0)
    A = SparseMat(m + 2 * nv, nv, rows, ccols, vals, check_rank=False)
    bounds = [(0.0, float(c)) for c in caps]
    bounds += [(0.0, float(ybox))] * (2 * nv)
    cost = np.concatenate([q, np.full(2 * nv, penalty)])
    b = F * e_t
    lp = BoxedLP(A, b, cost, bounds)
    x0 = np.concatenate([x_half, y0, z0])
    res = A.rmatvec(x0) - b
    if np.max(np.abs(res)) > 1e-9 * max(1.0, F, float(np.max(np.abs(u_net)))):
        raise InvalidShape("interior start failed the exact-feasibility check")
    if not lp.barriers.is_interior(x0):
        raise InvalidShape("interior start is not strictly inside its box")
    red = ReducedLP(lp=lp, x0=x0, penalty=penalty, target=float(F),
                    n_edges=m, vertex_cols=cols)
    return red


def _delivered_value(net: FlowNetwork, flow: np.ndarray) -> float:
    val = 0.0
    for f, e in zip(flow, net.edges):
        if e.head == net.sink:
            val += float(Fraction(e.gamma)) * f
        if e.tail == net.sink:
            val -= f
    return val


def solve_generalized_mcf(
    net: FlowNetwork, F: float, eps: float, sp: SolverParams | None = None,
    seed: int = 0,
) -> FlowSolution:
    """Approximate min-cost flow delivering F units at the sink.

    Solves the penalized LP and drops the slack columns; raises
    TargetInfeasible when residual slack shows F exceeds the max flow.
    """
    if sp is None:
        sp = SolverParams()
    red = build_flow_lp(net, F, eps, mode=sp.mode)
    x, report = lp_solve(red.lp, red.x0, eps=eps, sp=sp, seed=seed)
    m = red.n_edges
    flow = x[:m]
    slack = x[m:]
    slack_tol = max(eps, 1e-7 * (1.0 + abs(F)))
    if float(np.max(slack, initial=0.0)) > slack_tol:
        raise TargetInfeasible(
            f"target {F} unreachable: residual slack {np.max(slack):.3e}"
        )
    cost = float(math.fsum(float(e.cost) * f for e, f in zip(net.edges, flow)))
    return FlowSolution(
        flow=flow, value=_delivered_value(net, flow), cost=cost,
        approximate=True, eps=eps, report=report,
    )


def _with_return_edge(net: FlowNetwork, cost: int, zero_costs: bool) -> FlowNetwork:
    U = net.width()
    edges = [
        FlowEdge(e.tail, e.head, e.capacity, 0 if zero_costs else e.cost, e.gamma)
        for e in net.edges
    ]
    edges.append(FlowEdge(net.sink, net.source, net.m * U + 1, cost, Fraction(1)))
    return FlowNetwork(net.n, edges, net.source, net.sink, supply=net.supply)


def solve_max_flow(
    net: FlowNetwork, eps: float = 0.05, sp: SolverParams | None = None,
    seed: int = 0,
) -> FlowSolution:
    """Exact max flow for unit multipliers and integer capacities.

    One circulation solve: a return edge of capacity mU+1 and cost -1 is
    added, the LP is solved at target 0, and the result is rounded to an
    integral conserving flow whose value is read off the return edge.
    """
    if not net.unit_gamma():
        raise MalformedNetwork("max flow requires unit multipliers")
    circ = _with_return_edge(net, cost=-1, zero_costs=True)
    sol = solve_generalized_mcf(circ, 0.0, eps, sp=sp, seed=seed)
    rounded = round_flow(sol.flow, circ, protect_edges={circ.m - 1})
    flow = rounded[: net.m]
    value = float(rounded[-1])
    return FlowSolution(
        flow=flow, value=value,
        cost=float(math.fsum(float(e.cost) * f for e, f in zip(net.edges, flow))),
        approximate=False, eps=eps, report=sol.report,
    )


def solve_min_cost_flow(
    net: FlowNetwork, eps: float = 0.05, sp: SolverParams | None = None,
    seed: int = 0,
) -> FlowSolution:
    """Exact min-cost max-flow for unit multipliers and integer data.

    The return edge gets a reward dominating any path cost, so value is
    maximized first and cost minimized second in a single solve.
    """
    if not net.unit_gamma():
        raise MalformedNetwork("min-cost flow requires unit multipliers")
    q = np.array([float(e.cost) for e in net.edges])
    # Rewarding delivered value beyond any simple path cost makes the
    # optimum maximize value first, then minimize cost.
    reward = int(4 * (1 + np.sum(np.abs(q))))
    circ = _with_return_edge(net, cost=-reward, zero_costs=False)
    sol = solve_generalized_mcf(circ, 0.0, eps, sp=sp, seed=seed)
    rounded = round_flow(sol.flow, circ, protect_edges={circ.m - 1})
    flow = rounded[: net.m]
    value = float(rounded[-1])
    return FlowSolution(
        flow=flow, value=value,
        cost=float(math.fsum(float(e.cost) * f for e, f in zip(net.edges, flow))),
        approximate=False, eps=eps, report=sol.report,
    )


def _residual_arcs(edges, flow, caps, protect):
    """Residual arcs as (from, to, edge index, direction, unit cost)."""
    arcs = []
    for i, e in enumerate(edges):
        if i in protect:
            continue
        if flow[i] < caps[i]:
            arcs.append((e.tail, e.head, i, +1, float(e.cost)))
        if flow[i] > 0:
            arcs.append((e.head, e.tail, i, -1, -float(e.cost)))
    return arcs


def _min_cost_walk(n, arcs, sources, sinks):
    """Hop-limited Bellman-Ford; returns arc list of a cheapest unit-push
    walk from any source to any sink, or None."""
    INF = float("inf")
    dist = [INF] * n
    parent = [None] * n
    for s in sources:
        dist[s] = 0.0
    for _ in range(n):
        changed = False
        for arc in arcs:
            a, b = arc[0], arc[1]
            alt = dist[a] + arc[4]
            if alt < dist[b] - 1e-12:
                dist[b] = alt
                parent[b] = arc
                changed = True
        if not changed:
            break
    best, best_v = INF, None
    for v in sinks:
        if dist[v] < best:
            best, best_v = dist[v], v
    if best_v is None:
        return None
    path, v, used = [], best_v, set()
    while parent[v] is not None and v not in sources:
        arc = parent[v]
        key = (arc[2], arc[3])
        if key in used:  # negative-cycle artifact; caller falls back to BFS
            return None
        used.add(key)
        path.append(arc)
        v = arc[0]
        if len(path) > len(arcs):
            return None
    if v not in sources:
        return None
    return list(reversed(path))


def _bfs_walk(n, arcs, sources, sinks):
    from_v = {}
    adj = {}
    for arc in arcs:
        adj.setdefault(arc[0], []).append(arc)
    queue = deque(sorted(sources))
    seen = set(sources)
    while queue:
        v = queue.popleft()
        if v in sinks and v not in sources:
            path = []
            while v in from_v:
                arc = from_v[v]
                path.append(arc)
                v = arc[0]
            return list(reversed(path))
        for arc in adj.get(v, []):
            if arc[1] not in seen:
                seen.add(arc[1])
                from_v[arc[1]] = arc
                queue.append(arc)
    return None


def round_flow(x_lp, net: FlowNetwork, protect_edges=None) -> np.ndarray:
    """Round a near-integral unit-multiplier flow to an exact integral one.

    Nearest-integer rounding, then conservation repair by cheapest
    unit pushes between surplus and deficit vertices in the residual
    graph, then residual negative-cycle cancelling, both within a combined
    budget of m iterations.  ``protect_edges`` (e.g. a circulation's return
    edge) are never touched by the repair, so the value read from them is
    exactly the rounded LP value.
    """
    if not net.unit_gamma():
        raise MalformedNetwork("integral rounding requires unit multipliers")
    x_lp = np.asarray(x_lp, dtype=float)
    if x_lp.shape != (net.m,):
        raise InvalidShape("one flow value per edge required")
    protect = set(protect_edges or ())
    caps = np.array([float(e.capacity) for e in net.edges])
    flow = np.clip(np.rint(x_lp), 0.0, caps)

    def imbalance():
        r = np.zeros(net.n)
        for f, e in zip(flow, net.edges):
            r[e.head] += f
            r[e.tail] -= f
        return r

    budget = net.m + 8
    for _ in range(budget):
        r = imbalance()
        surplus = [v for v in range(net.n) if r[v] > 0.5]
        deficit = [v for v in range(net.n) if r[v] < -0.5]
        if not surplus:
            break
        arcs = _residual_arcs(net.edges, flow, caps, protect)
        # A unit leaves a surplus vertex and arrives at a deficit vertex.
        walk = _min_cost_walk(net.n, arcs, surplus, deficit)
        if walk is None:
            walk = _bfs_walk(net.n, arcs, surplus, deficit)
        if walk is None:
            raise RoundingFailed("conservation repair found no residual path")
        for arc in walk:
            flow[arc[2]] += arc[3]
    else:
        raise RoundingFailed("conservation repair exceeded its budget")

    # Cancel residual negative cycles (improves cost only; value untouched
    # because protected edges stay out of the residual graph).
    for _ in range(budget):
        arcs = _residual_arcs(net.edges, flow, caps, protect)
        cycle = _find_negative_cycle(net.n, arcs)
        if cycle is None:
            break
        for arc in cycle:
            flow[arc[2]] += arc[3]
    r = imbalance()
    interior = [v for v in range(net.n) if abs(r[v]) > 1e-9]
    if interior:
        raise RoundingFailed(f"conservation still violated at vertices {interior}")
    return flow


def _find_negative_cycle(n, arcs):
    INF = float("inf")
    dist = [0.0] * n
    parent = [None] * n
    marked = None
    for it in range(n):
        marked = None
        for arc in arcs:
            a, b = arc[0], arc[1]
            if dist[a] + arc[4] < dist[b] - 1e-9:
                dist[b] = dist[a] + arc[4]
                parent[b] = arc
                marked = b
        if marked is None:
            return None
    # Walk back n steps to land inside the cycle, then extract it.
    v = marked
    for _ in range(n):
        v = parent[v][0]
    cycle, start, seen = [], v, set()
    while True:
        arc = parent[v]
        key = (arc[2], arc[3])
        if key in seen:
            return None  # degenerate; treat as no usable cycle
        seen.add(key)
        cycle.append(arc)
        v = arc[0]
        if v == start:
            break
    return list(reversed(cycle))
