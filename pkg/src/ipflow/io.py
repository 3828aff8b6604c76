"""Problem-file parsing and emission.

Two formats: DIMACS max-flow / min-cost-flow text (with an optional
two-column multiplier extension on arc lines), and a JSON schema for boxed
LPs (triplet matrix, bounds with null marking an infinite side, optional
start point).  Emit-then-parse is the identity on the data model.
"""
from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from .errors import ParseError, ShapeMismatch, UnsupportedFeature
from .flow import FlowEdge, FlowNetwork
from .linalg import SparseMat
from .pathfollow import BoxedLP


def parse_dimacs_flow(text: str) -> FlowNetwork:
    """Parse DIMACS ``p max`` / ``p min`` problems.

    Node lines are ``n <id> s|t`` for max flow and ``n <id> <flow>`` for
    min cost flow (positive flow marks the source).  Arc lines are
    ``a <tail> <head> <cap>`` (max) or ``a <tail> <head> <low> <cap> <cost>
    [<gamma_num> <gamma_den>]`` (min); nonzero ``low`` is unsupported.
    """
    problem = None
    n_vertices = 0
    n_arcs = 0
    source = sink = None
    supply = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "p":
            if problem is not None:
                raise ParseError("duplicate problem line", lineno)
            if len(fields) != 4 or fields[1] not in ("max", "min"):
                raise ParseError("expected 'p max|min <nodes> <arcs>'", lineno)
            problem = fields[1]
            try:
                n_vertices, n_arcs = int(fields[2]), int(fields[3])
            except ValueError:
                raise ParseError("node/arc counts must be integers", lineno)
        elif tag == "n":
            if problem is None:
                raise ParseError("node line before problem line", lineno)
            if problem == "max":
                if len(fields) != 3 or fields[2] not in ("s", "t"):
                    raise ParseError("expected 'n <id> s|t'", lineno)
                vid = _vertex(fields[1], n_vertices, lineno)
                if fields[2] == "s":
                    source = vid
                else:
                    sink = vid
            else:
                if len(fields) != 3:
                    raise ParseError("expected 'n <id> <flow>'", lineno)
                vid = _vertex(fields[1], n_vertices, lineno)
                try:
                    flow = float(fields[2])
                except ValueError:
                    raise ParseError("flow value must be numeric", lineno)
                if flow > 0:
                    source = vid
                    supply = flow
                elif flow < 0:
                    sink = vid
                else:
                    raise ParseError("node flow must be nonzero", lineno)
        elif tag == "a":
            if problem is None:
                raise ParseError("arc line before problem line", lineno)
            if problem == "max":
                if len(fields) != 4:
                    raise ParseError("expected 'a <tail> <head> <cap>'", lineno)
                tail = _vertex(fields[1], n_vertices, lineno)
                head = _vertex(fields[2], n_vertices, lineno)
                cap = _int(fields[3], "capacity", lineno)
                edges.append(FlowEdge(tail, head, cap))
            else:
                if len(fields) not in (6, 8):
                    raise ParseError(
                        "expected 'a <tail> <head> <low> <cap> <cost> "
                        "[<gnum> <gden>]'", lineno,
                    )
                tail = _vertex(fields[1], n_vertices, lineno)
                head = _vertex(fields[2], n_vertices, lineno)
                low = _int(fields[3], "lower bound", lineno)
                if low != 0:
                    raise UnsupportedFeature("nonzero arc lower bounds", lineno)
                cap = _int(fields[4], "capacity", lineno)
                cost = _int(fields[5], "cost", lineno)
                gamma = Fraction(1)
                if len(fields) == 8:
                    num = _int(fields[6], "multiplier numerator", lineno)
                    den = _int(fields[7], "multiplier denominator", lineno)
                    if den == 0:
                        raise ParseError("multiplier denominator is zero", lineno)
                    gamma = Fraction(num, den)
                edges.append(FlowEdge(tail, head, cap, cost, gamma))
        else:
            raise ParseError(f"unknown line tag {tag!r}", lineno)
    if problem is None:
        raise ParseError("missing problem line")
    if source is None or sink is None:
        raise ParseError("source and sink must both be designated")
    if len(edges) != n_arcs:
        raise ParseError(f"declared {n_arcs} arcs, found {len(edges)}")
    try:
        return FlowNetwork(n_vertices, edges, source, sink, supply=supply)
    except Exception as exc:
        raise ParseError(str(exc))


def _vertex(tok, n, lineno):
    try:
        vid = int(tok)
    except ValueError:
        raise ParseError(f"vertex id {tok!r} not an integer", lineno)
    if not (1 <= vid <= n):
        raise ParseError(f"vertex id {vid} outside 1..{n}", lineno)
    return vid - 1


def _int(tok, what, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what} {tok!r} not an integer", lineno)


def emit_dimacs_flow(net: FlowNetwork, problem: str = "min") -> str:
    """Inverse of parse_dimacs_flow for the given problem flavor."""
    lines = [f"p {problem} {net.n} {net.m}"]
    if problem == "max":
        lines.append(f"n {net.source + 1} s")
        lines.append(f"n {net.sink + 1} t")
        for e in net.edges:
            lines.append(f"a {e.tail + 1} {e.head + 1} {e.capacity}")
    else:
        supply = net.supply if net.supply is not None else 1
        lines.append(f"n {net.source + 1} {supply:g}")
        lines.append(f"n {net.sink + 1} {-supply:g}")
        for e in net.edges:
            g = Fraction(e.gamma)
            base = f"a {e.tail + 1} {e.head + 1} 0 {e.capacity} {e.cost}"
            if g != 1:
                base += f" {g.numerator} {g.denominator}"
            lines.append(base)
    return "\n".join(lines) + "\n"


def parse_lp_json(text: str):
    """Parse the boxed-LP JSON schema; returns (BoxedLP, x0 or None).

    Required fields: m, n, A (list of [row, col, value] triplets), b, c,
    l, u (arrays with null marking -inf / +inf).  Optional: x0.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}")
    if not isinstance(obj, dict):
        raise ParseError("top-level JSON value must be an object")
    for key in ("m", "n", "A", "b", "c", "l", "u"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}")
    m, n = obj["m"], obj["n"]
    if not (isinstance(m, int) and isinstance(n, int) and m > 0 and n > 0):
        raise ParseError("m and n must be positive integers")
    trips = obj["A"]
    if not isinstance(trips, list):
        raise ParseError("A must be a list of [row, col, value] triplets")
    rows, cols, vals = [], [], []
    for k, t in enumerate(trips):
        if not (isinstance(t, list) and len(t) == 3):
            raise ParseError(f"A[{k}] is not a [row, col, value] triplet")
        rows.append(t[0])
        cols.append(t[1])
        vals.append(t[2])
    b = _vector(obj["b"], n, "b")
    c = _vector(obj["c"], m, "c")
    lo = _bound_vector(obj["l"], m, "l")
    up = _bound_vector(obj["u"], m, "u")
    x0 = None
    if obj.get("x0") is not None:
        x0 = _vector(obj["x0"], m, "x0")
    try:
        A = SparseMat(m, n, rows, cols, vals)
        lp = BoxedLP(A, b, c, list(zip(lo, up)))
    except ShapeMismatch:
        raise
    except Exception as exc:
        raise ParseError(str(exc))
    return lp, x0


def _vector(val, size, name):
    if not isinstance(val, list) or len(val) != size:
        raise ShapeMismatch(f"{name} must be a list of length {size}")
    try:
        return np.asarray([float(v) for v in val])
    except (TypeError, ValueError):
        raise ParseError(f"{name} contains a non-numeric entry")


def _bound_vector(val, size, name):
    if not isinstance(val, list) or len(val) != size:
        raise ShapeMismatch(f"{name} must be a list of length {size}")
    out = []
    for v in val:
        if v is None:
            out.append(None)
        else:
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                raise ParseError(f"{name} contains a non-numeric entry")
    return out


def emit_lp_json(lp: BoxedLP, x0=None) -> str:
    """Inverse of parse_lp_json; triplets in column-major order."""
    coo = lp.A.csc.tocoo()
    trips = [
        [int(r), int(c), float(v)] for r, c, v in zip(coo.row, coo.col, coo.data)
    ]
    trips.sort(key=lambda t: (t[1], t[0]))
    obj = {
        "m": lp.A.m,
        "n": lp.A.n,
        "A": trips,
        "b": [float(v) for v in lp.b],
        "c": [float(v) for v in lp.c],
        "l": [None if l is None else float(l) for l, _ in lp.bounds],
        "u": [None if u is None else float(u) for _, u in lp.bounds],
    }
    if x0 is not None:
        obj["x0"] = [float(v) for v in x0]
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
