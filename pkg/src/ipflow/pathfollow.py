"""Path-following loop, two-phase LP driver, and feasibility maintenance.

Two constant regimes share the same code paths.  Paper mode runs the
literal schedule: one centering call per parameter step, multiplicative
parameter updates of size 1/(1e5 c_k^4 log(400m) sqrt(rank)), and strict
per-iteration invariant tracking.  Its step size makes full two-phase
solves astronomically long, so it is used for invariant validation on
bounded segments.  Practical mode recenters to a fixed target, takes
parameter steps of size 0.05/sqrt(rank), and terminates on a duality-gap
certificate.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .barrier import CoordinateBarriers
from .centering import (
    PathPoint,
    centering_inexact,
    centrality,
    centrality_exact,
    eta_star,
    make_point,
    mixed_norm,
    potential_phi,
)
from .errors import (
    CenteringStalled,
    InfeasibleStart,
    InvalidShape,
    IterationBudgetExceeded,
    PaperInvariantViolation,
    RepairHypothesisViolated,
)
from .linalg import Backend, NormalEquations, SparseMat
from .weights import (
    WeightParams,
    compute_initial_weight,
    weight_function_oracle,
    weight_params,
)


@dataclass
class BoxedLP:
    """min c^T x subject to A^T x = b and l <= x <= u (open box interior)."""

    A: SparseMat
    b: np.ndarray
    c: np.ndarray
    bounds: list
    barriers: CoordinateBarriers = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.b.shape != (self.A.n,):
            raise InvalidShape(f"b must have length {self.A.n}")
        if self.c.shape != (self.A.m,):
            raise InvalidShape(f"c must have length {self.A.m}")
        if len(self.bounds) != self.A.m:
            raise InvalidShape("one (l, u) pair per variable required")
        if self.A.m < self.A.n:
            raise InvalidShape("need at least as many variables as constraints")
        # Normalize: infinite float bounds become explicit None markers.
        self.bounds = [
            (
                None if (l is None or not np.isfinite(l)) else float(l),
                None if (u is None or not np.isfinite(u)) else float(u),
            )
            for l, u in self.bounds
        ]
        if self.barriers is None:
            self.barriers = CoordinateBarriers.from_bounds(self.bounds)

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def n(self) -> int:
        return self.A.n


@dataclass(frozen=True)
class WidthU:
    """Instance conditioning parameter entering the log factors."""

    u_width: float


def width_u(lp: BoxedLP, x0: np.ndarray) -> WidthU:
    """max of bound-ratio and magnitude terms; infinite sides contribute
    through the start point's distance to their finite partner."""
    lo, up = lp.barriers.lower, lp.barriers.upper
    span = np.where(
        np.isfinite(lo) & np.isfinite(up),
        up - lo,
        np.maximum(
            1.0,
            2.0 * np.where(np.isfinite(lo), x0 - lo, up - x0),
        ),
    )
    terms = [1.0, float(np.max(span)), float(np.max(np.abs(lp.c)))]
    fin_up = np.isfinite(up)
    if np.any(fin_up):
        terms.append(float(np.max(span[fin_up] / (up[fin_up] - x0[fin_up]))))
    fin_lo = np.isfinite(lo)
    if np.any(fin_lo):
        terms.append(float(np.max(span[fin_lo] / (x0[fin_lo] - lo[fin_lo]))))
    return WidthU(max(terms))


@dataclass
class SolverParams:
    """Mode flag, solver accuracy, and the practical-regime knobs."""

    mode: str = "practical"
    eps_s: float | None = None
    backend: Backend | None = None
    delta_target: float = 0.05
    t_step_coeff: float = 0.05
    K: float = 0.05
    max_newton: int = 4
    max_iters: int = 200_000
    collect_trace: bool = False
    strict_invariants: bool = False

    def effective_eps_s(self, m: int) -> float:
        if self.eps_s is not None:
            return self.eps_s
        return m ** (-8.0) if self.mode == "paper" else 1e-10


@dataclass
class SolveReport:
    iterations: int = 0
    solves: int = 0
    final_delta: float = 0.0
    gap_bound: float = 0.0
    infeasibility: float = 0.0
    mode: str = "practical"
    objective: float = 0.0
    wall_time: float = 0.0


@dataclass
class PaperTrace:
    """Per-iteration invariant checks recorded by a paper-mode run."""

    entry_delta: list = field(default_factory=list)
    entry_delta_bound: float = 0.0
    psi_inf: list = field(default_factory=list)
    psi_potential: list = field(default_factory=list)
    infeas_growth: list = field(default_factory=list)  # (before, after, bound)
    drift: list = field(default_factory=list)
    slack_floor: list = field(default_factory=list)  # (observed, floor)
    eta_quality: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def note(self, ok: bool, label: str, strict: bool):
        if not ok:
            self.violations.append(label)
            if strict:
                raise PaperInvariantViolation(label)


def infeasibility(A: SparseMat, point: PathPoint, b, eps_s=1e-10) -> float:
    """Dual-norm size of the equality residual: ||A^T x - b|| in the
    (A_x^T W^{-1} A_x)^{-1} norm."""
    r = A.rmatvec(point.x) - np.asarray(b, dtype=float)
    if not np.any(r):
        return 0.0
    ne = point.normal_equations(A)
    sol = ne.solve(r, eps_s=eps_s).solution
    return float(np.sqrt(max(r @ sol, 0.0)))


def repair_feasibility(
    A: SparseMat, barriers: CoordinateBarriers, point: PathPoint, b,
    eps_s=1e-10, check_hypothesis=True,
) -> PathPoint:
    """Project the iterate back toward the affine constraint set.

    Valid only for small infeasibility (<= 0.01/m); reduces it by roughly
    the solver accuracy while moving x by O(m * I) in the local metric.
    """
    cur = infeasibility(A, point, b, eps_s=eps_s)
    if check_hypothesis and cur > 0.01 / A.m:
        raise RepairHypothesisViolated(
            f"infeasibility {cur:.3e} above repair threshold {0.01 / A.m:.3e}"
        )
    r = A.rmatvec(point.x) - np.asarray(b, dtype=float)
    if not np.any(r):
        return point
    ne = point.normal_equations(A)
    sol = ne.solve(r, eps_s=eps_s).solution
    x_new = point.x - A.matvec(sol) / (point.w * point.d2)
    return make_point(A, barriers, x_new, point.w, point.t, eta=point.eta)


def progress_certificate(
    point: PathPoint, c, wp: WeightParams, mode: str = "practical",
    delta_hat: float | None = None,
) -> float:
    """Certified optimality bound: duality-gap term plus distance slack.

    The distance factor is the contraction-based constant in paper mode and
    the quadratic-convergence constant (4) in practical mode.
    """
    gap = float(np.sum(point.w)) / point.t
    if delta_hat is None:
        return gap
    factor = 16.0 * wp.c_gamma * wp.c_k if mode == "paper" else 4.0
    reach = float(np.sum(np.abs(c) / np.sqrt(point.d2)))
    return gap + factor * delta_hat * reach


def _record_paper_invariants(
    A, barriers, cost, b, point, wp, eps_s, trace: PaperTrace, strict: bool,
    state: dict,
):
    reading = centrality(A, cost, point, wp.c_norm, eps_s=eps_s)
    bound = 1.0 / (960.0 * wp.c_k**2 * math.log(400.0 * A.m))
    delta = reading.delta_hat
    if delta > bound:
        delta = centrality_exact(A, cost, point, wp.c_norm)
    trace.entry_delta.append(delta)
    trace.entry_delta_bound = bound
    trace.note(delta <= bound * (1 + 1e-9), f"entry delta {delta:.3e} > {bound:.3e}", strict)

    g = weight_function_oracle(A, point.d2, wp, tol=1e-11, w_start=state.get("g_prev"))
    state["g_prev"] = g
    psi = np.log(g) - np.log(point.w)
    psi_inf = float(np.max(np.abs(psi)))
    pot = potential_phi(psi, wp.mu)
    trace.psi_inf.append(psi_inf)
    trace.psi_potential.append(pot)
    trace.note(psi_inf <= wp.K * (1 + 1e-9), f"||Psi||_inf {psi_inf:.3e} > K {wp.K:.3e}", strict)
    trace.note(
        pot <= (400.0 * A.m) ** 2 * (1 + 1e-9),
        f"potential {pot:.3e} > (400m)^2", strict,
    )

    eta_opt = eta_star(A, cost, point, eps_s=1e-13)
    diff = A.matvec(point.eta - eta_opt) / (point.w * np.sqrt(point.d2))
    quality = float(np.sqrt(diff @ (point.w * diff)))
    trace.eta_quality.append(quality)
    trace.note(quality <= 1.0 + 1e-6, f"eta quality {quality:.3e} > 1", strict)

    d_vec = np.log(1.0 / (point.w * point.d2))
    if "d_prev" in state:
        drift = float(np.max(np.abs(d_vec - state["d_prev"])))
        trace.drift.append(drift)
        trace.note(drift <= 0.1 + 1e-9, f"system drift {drift:.3e} > 0.1", strict)
    state["d_prev"] = d_vec

    s_min = float(np.min(barriers.slack(point.x)))
    state["t_max"] = max(state.get("t_max", point.t), point.t)
    state["t_min"] = min(state.get("t_min", point.t), point.t)
    floor = (
        state["s0_min"] * wp.beta
        / (4.0 * (state["t_max"] / state["t_min"]) * float(np.sum(point.w)) * A.m)
    )
    trace.slack_floor.append((s_min, floor))
    trace.note(s_min >= floor, f"slack {s_min:.3e} below floor {floor:.3e}", strict)


def path_following(
    lp: BoxedLP, cost, point: PathPoint, t_start: float, t_end: float,
    eps: float, sp: SolverParams, wp: WeightParams | None = None,
    seed: int = 0, trace: PaperTrace | None = None, report: SolveReport | None = None,
):
    """Move a centered point from t_start to t_end, ending with centrality
    at most eps.

    Feasibility is checked every iteration and repaired once the dual-norm
    residual exceeds min(1/m^2, eps/10).
    """
    A, barriers = lp.A, lp.barriers
    if wp is None:
        wp = weight_params(A.m, A.n, sp.mode)
    eps_s = sp.effective_eps_s(A.m)
    cost = np.asarray(cost, dtype=float)
    if report is None:
        report = SolveReport(mode=sp.mode)
    state = {"s0_min": float(np.min(barriers.slack(point.x)))}
    point = make_point(A, barriers, point.x, point.w, t_start, eta=point.eta)
    increasing = t_end >= t_start
    if sp.mode == "paper":
        step = 1.0 / (1e5 * wp.c_k**4 * math.log(400.0 * A.m) * math.sqrt(wp.rank))
        factor = 1.0 + step if increasing else 1.0 - step
    else:
        step = sp.t_step_coeff / math.sqrt(wp.rank)
        factor = 1.0 + step if increasing else 1.0 / (1.0 + step)

    repair_level = min(1.0 / A.m**2, eps / 10.0)
    stall = 0
    last_entry = np.inf
    while (point.t < t_end) if increasing else (point.t > t_end):
        if report.iterations >= sp.max_iters:
            raise IterationBudgetExceeded(
                f"path following exceeded {sp.max_iters} iterations "
                f"(t={point.t:.3e}, target {t_end:.3e})"
            )
        if trace is not None:
            i_before = infeasibility(A, point, lp.b, eps_s=eps_s)
            _record_paper_invariants(
                A, barriers, cost, lp.b, point, wp, eps_s, trace,
                sp.strict_invariants, state,
            )
        point, info = centering_inexact(
            A, barriers, cost, point, sp.K if sp.mode == "practical" else wp.K,
            wp, seed=seed + report.iterations, eps_s=eps_s, mode=sp.mode,
            delta_target=sp.delta_target, max_newton=sp.max_newton,
        )
        report.iterations += max(info["newton_steps"], 1)
        report.solves += info["solves"]
        if trace is not None:
            i_after = infeasibility(A, point, lp.b, eps_s=eps_s)
            bound = 2.0 * i_before + 3.0 * eps_s
            trace.infeas_growth.append((i_before, i_after, bound))
            trace.note(
                i_after <= bound + 1e-12,
                f"infeasibility growth {i_after:.3e} > {bound:.3e}",
                sp.strict_invariants,
            )
        if sp.mode == "practical":
            entry = info.get("delta_entry", np.inf)
            stall = stall + 1 if entry >= last_entry and entry > sp.delta_target else 0
            last_entry = entry
            if stall >= 10:
                raise CenteringStalled("centrality failed to decrease for 10 calls")
            cur_i = infeasibility(A, point, lp.b, eps_s=eps_s)
            report.solves += 1
            if cur_i > repair_level:
                point = repair_feasibility(A, barriers, point, lp.b, eps_s=eps_s)
                report.solves += 1
        t_next = point.t * factor
        if (increasing and t_next > t_end) or (not increasing and t_next < t_end):
            t_next = t_end
        point = make_point(A, barriers, point.x, point.w, t_next, eta=point.eta)

    # Final centering at t_end.
    if sp.mode == "paper":
        rounds = int(math.ceil(4.0 * wp.c_k * math.log(1.0 / eps)))
        for k in range(rounds):
            if trace is not None:
                _record_paper_invariants(
                    A, barriers, cost, lp.b, point, wp, eps_s, trace,
                    sp.strict_invariants, state,
                )
            point, info = centering_inexact(
                A, barriers, cost, point, wp.K, wp, seed=seed + report.iterations,
                eps_s=eps_s, mode="paper",
            )
            report.iterations += 1
            report.solves += info["solves"]
    else:
        for k in range(400):
            reading = centrality(A, cost, point, wp.c_norm, eps_s=eps_s)
            report.solves += 1
            if reading.delta_hat <= eps:
                break
            point, info = centering_inexact(
                A, barriers, cost, point, sp.K, wp, seed=seed + report.iterations,
                eps_s=eps_s, mode="practical", delta_target=eps,
                max_newton=sp.max_newton,
            )
            report.iterations += max(info["newton_steps"], 1)
            report.solves += info["solves"]
            if info["newton_steps"] == 0:
                break
        else:
            raise CenteringStalled(f"could not reach centrality {eps} at t_end")
    return point, report


def _practical_phase_a(lp, point, d_cost, sp, wp, seed, report):
    """Drive t down under the synthetic cost until switching to the true
    cost is cheap, halving t and recentering each stage."""
    A, barriers = lp.A, lp.barriers
    eps_s = sp.effective_eps_s(A.m)
    for stage in range(2000):
        probe = make_point(A, barriers, point.x, point.w, point.t, eta=None)
        delta_c = centrality(A, lp.c, probe, wp.c_norm, eps_s=eps_s).delta_hat
        report.solves += 1
        if delta_c <= 0.5:
            break
        point = make_point(
            A, barriers, point.x, point.w, point.t * 0.5, eta=point.eta
        )
        for _ in range(40):
            reading = centrality(A, d_cost, point, wp.c_norm, eps_s=eps_s)
            report.solves += 1
            if reading.delta_hat <= sp.delta_target:
                break
            point, info = centering_inexact(
                A, barriers, d_cost, point, sp.K, wp, seed=seed,
                eps_s=eps_s, mode="practical", delta_target=sp.delta_target,
                max_newton=sp.max_newton,
            )
            report.iterations += max(info["newton_steps"], 1)
            report.solves += info["solves"]
        if report.iterations >= sp.max_iters:
            raise IterationBudgetExceeded("phase A exceeded the iteration budget")
    else:
        raise CenteringStalled("cost switch never became affordable")
    return point


def lp_solve(
    lp: BoxedLP, x0, eps: float, sp: SolverParams | None = None, seed: int = 0,
):
    """Two-phase weighted path following from an interior feasible start.

    Phase A follows a synthetic cost (making x0 exactly central at t=1)
    down to a small parameter; phase B follows the true cost up until the
    optimality certificate reaches eps.  Returns (x, SolveReport).
    """
    t0 = time.perf_counter()
    if sp is None:
        sp = SolverParams()
    A, barriers = lp.A, lp.barriers
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (A.m,):
        raise InfeasibleStart(f"x0 must have length {A.m}")
    if not barriers.is_interior(x0):
        raise InfeasibleStart("x0 is not strictly interior to the box")
    res = A.rmatvec(x0) - lp.b
    if np.linalg.norm(res) > 1e-9 * max(1.0, np.linalg.norm(lp.b)):
        raise InfeasibleStart("A^T x0 != b beyond tolerance")

    wp = weight_params(A.m, A.n, sp.mode)
    eps_s = sp.effective_eps_s(A.m)
    U = width_u(lp, x0).u_width
    report = SolveReport(mode=sp.mode)

    k_init = (
        1.0 / (1e5 * math.log(400.0 * A.m) ** 5) if sp.mode == "paper" else 0.02
    )
    phi2_0 = barriers.derivs(x0)[2]
    w0 = compute_initial_weight(A, phi2_0, k_init, wp, seed=seed)
    d1_0 = barriers.derivs(x0)[1]
    d_cost = -w0 * d1_0

    point = make_point(A, barriers, x0, w0, 1.0, eta=None)
    m = A.m
    t1 = 1.0 / (1e10 * U**2 * m**3)
    t2 = 3.0 * m / eps
    eps1 = 1.0 / (2000.0 * wp.c_k**2 * math.log(400.0 * m))
    eps2 = eps / (100.0**3 * m**3 * U**2)

    if sp.mode == "paper":
        point, report = path_following(
            lp, d_cost, point, 1.0, t1, eps1, sp, wp, seed=seed, report=report
        )
        point.eta = None
        point, report = path_following(
            lp, lp.c, point, t1, t2, eps2, sp, wp, seed=seed, report=report
        )
        final_delta = centrality(A, lp.c, point, wp.c_norm, eps_s=eps_s).delta_hat
    else:
        point = _practical_phase_a(lp, point, d_cost, sp, wp, seed, report)
        point.eta = None
        point = _practical_phase_b(lp, point, eps, t2, sp, wp, seed, report)
        final_delta = centrality(A, lp.c, point, wp.c_norm, eps_s=eps_s).delta_hat

    report.final_delta = final_delta
    report.gap_bound = float(np.sum(point.w)) / point.t
    report.infeasibility = infeasibility(A, point, lp.b, eps_s=eps_s)
    report.objective = float(math.fsum(lp.c * point.x))
    report.wall_time = time.perf_counter() - t0
    return point.x, report


def _practical_phase_b(lp, point, eps, t_cap, sp, wp, seed, report):
    """Advance t under the true cost until the certificate reaches eps."""
    A, barriers = lp.A, lp.barriers
    eps_s = sp.effective_eps_s(A.m)
    step = sp.t_step_coeff / math.sqrt(wp.rank)
    repair_level = min(1.0 / A.m**2, eps / 10.0)
    # Recover from the cost switch before stepping t.
    point = _recenter(lp, point, sp, wp, seed, report, sp.delta_target)
    while True:
        if report.iterations >= sp.max_iters:
            raise IterationBudgetExceeded("phase B exceeded the iteration budget")
        reading = centrality(A, lp.c, point, wp.c_norm, eps_s=eps_s)
        report.solves += 1
        gap = float(np.sum(point.w)) / point.t
        if gap <= eps / 2.0 or point.t >= t_cap:
            # Polish centrality until the distance slack is negligible too.
            for _ in range(60):
                cert = progress_certificate(
                    point, lp.c, wp, mode="practical", delta_hat=reading.delta_hat
                )
                if cert <= max(gap * 1.5, eps * 0.98) or reading.delta_hat <= 1e-12:
                    break
                point, info = centering_inexact(
                    A, barriers, lp.c, point, sp.K, wp, seed=seed,
                    eps_s=eps_s, mode="practical",
                    delta_target=max(reading.delta_hat / 8.0, 1e-12),
                    max_newton=sp.max_newton,
                )
                report.iterations += max(info["newton_steps"], 1)
                report.solves += info["solves"]
                reading = centrality(A, lp.c, point, wp.c_norm, eps_s=eps_s)
                report.solves += 1
            cur_i = infeasibility(A, point, lp.b, eps_s=eps_s)
            report.solves += 1
            if cur_i > min(repair_level, eps):
                point = repair_feasibility(A, barriers, point, lp.b, eps_s=eps_s)
                report.solves += 1
            return point
        point = make_point(
            A, barriers, point.x, point.w, point.t * (1.0 + step), eta=point.eta
        )
        point, info = centering_inexact(
            A, barriers, lp.c, point, sp.K, wp, seed=seed + report.iterations,
            eps_s=eps_s, mode="practical", delta_target=sp.delta_target,
            max_newton=sp.max_newton,
        )
        report.iterations += max(info["newton_steps"], 1)
        report.solves += info["solves"]
        cur_i = infeasibility(A, point, lp.b, eps_s=eps_s)
        report.solves += 1
        if cur_i > repair_level:
            point = repair_feasibility(A, barriers, point, lp.b, eps_s=eps_s)
            report.solves += 1


def _recenter(lp, point, sp, wp, seed, report, target):
    A, barriers = lp.A, lp.barriers
    eps_s = sp.effective_eps_s(A.m)
    for _ in range(600):
        reading = centrality(A, lp.c, point, wp.c_norm, eps_s=eps_s)
        report.solves += 1
        if reading.delta_hat <= target:
            return point
        point, info = centering_inexact(
            A, barriers, lp.c, point, sp.K, wp, seed=seed, eps_s=eps_s,
            mode="practical", delta_target=target, max_newton=sp.max_newton,
        )
        report.iterations += max(info["newton_steps"], 1)
        report.solves += info["solves"]
    raise CenteringStalled("recentering after the cost switch did not converge")
