"""Centrality measurement and the combined x/w centering step.

A point on (or near) the weighted central path is tracked by its iterate x,
weights w, path parameter t and the maintained equality multiplier eta
("normal force").  Centrality is the mixed-norm size of the projected
gradient residual; one centering call performs a stable projected Newton
step on x and a softmax-potential game move on log w.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize as sopt

from .barrier import CoordinateBarriers
from .errors import InvalidShape, StepLeftDomain
from .linalg import NormalEquations, SparseMat
from .weights import WeightParams, compute_weight, reweighted_leverage

# Practical-mode Newton steps are capped at this multiplicative Hessian
# change; below 1 the step provably cannot leave the domain.
MAX_REL_STEP = 0.5


@dataclass
class PathPoint:
    """Iterate, weights, path parameter and cached barrier derivatives."""

    x: np.ndarray
    w: np.ndarray
    t: float
    eta: np.ndarray | None = None
    phi: np.ndarray | None = None
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None
    _ne: NormalEquations | None = field(default=None, repr=False)

    def normal_equations(self, A: SparseMat) -> NormalEquations:
        if self._ne is None:
            self._ne = NormalEquations(A, 1.0 / (self.w * self.d2))
        return self._ne


def make_point(
    A: SparseMat, barriers: CoordinateBarriers, x, w, t, eta=None
) -> PathPoint:
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (A.m,) or w.shape != (A.m,):
        raise InvalidShape("x and w must have one entry per matrix row")
    if np.any(w <= 0):
        raise InvalidShape("weights must be strictly positive")
    if t <= 0:
        raise InvalidShape("path parameter t must be positive")
    phi, d1, d2, d3 = barriers.derivs(x)
    return PathPoint(x=x, w=w, t=float(t), eta=eta, phi=phi, d1=d1, d2=d2, d3=d3)


@dataclass(frozen=True)
class CentralityReading:
    """Measured centrality split into its sup-norm and weighted parts."""

    delta_hat: float
    inf_part: float
    w_part: float


@dataclass(frozen=True)
class StepReport:
    delta_before: float
    scale: float
    step_inf: float  # || sqrt(phi'') * dx ||_inf
    solves: int


def mixed_norm(y, w, c_norm: float) -> float:
    """||y||_inf + c_norm * sqrt(sum_i w_i y_i^2)."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    w = np.asarray(w, dtype=float)
    return float(np.max(np.abs(y)) + c_norm * np.sqrt(y @ (w * y)))


def gradient(c, point: PathPoint) -> np.ndarray:
    return point.t * np.asarray(c, dtype=float) + point.w * point.d1


def residual(c, point: PathPoint, A: SparseMat, eta=None) -> np.ndarray:
    """(grad f_t - A eta) / (w sqrt(phi''))."""
    if eta is None:
        eta = point.eta
    g = gradient(c, point)
    if eta is not None:
        g = g - A.matvec(eta)
    return g / (point.w * np.sqrt(point.d2))


def eta_star(A: SparseMat, c, point: PathPoint, eps_s=1e-10) -> np.ndarray:
    """Weighted least-squares multiplier absorbing the normal force.

    Minimizes the W-norm of the scaled residual; the centrality measured
    with it overestimates the true value by at most a factor 2.
    """
    ne = point.normal_equations(A)
    rhs = A.rmatvec(gradient(c, point) / (point.w * point.d2))
    return ne.solve(rhs, eps_s=eps_s).solution


def centrality(
    A: SparseMat, c, point: PathPoint, c_norm: float, eps_s=1e-10,
    refresh_eta=False,
) -> CentralityReading:
    """Measure centrality with the maintained eta (refreshed if absent)."""
    if point.eta is None or refresh_eta:
        point.eta = eta_star(A, c, point, eps_s=eps_s)
    r = residual(c, point, A)
    inf_part = float(np.max(np.abs(r)))
    w_part = float(np.sqrt(r @ (point.w * r)))
    return CentralityReading(inf_part + c_norm * w_part, inf_part, w_part)


def centrality_exact(
    A: SparseMat, c, point: PathPoint, c_norm: float, eps_s=1e-12
) -> float:
    """Small-instance oracle: minimize the mixed norm over all multipliers.

    Epigraph form of the sup part solved with SLSQP, warm started from the
    weighted least-squares multiplier.  Never returns more than the value
    measured at the warm start.
    """
    ws = point.w * np.sqrt(point.d2)
    B = A.dense() / ws[:, None]
    v = gradient(c, point) / ws
    eta0 = eta_star(A, c, point, eps_s=eps_s)
    w = point.w

    def val_at(eta):
        r = v - B @ eta
        return float(np.max(np.abs(r)) + c_norm * np.sqrt(r @ (w * r)))

    base = val_at(eta0)
    n = A.n

    def objective(z):
        eta, s = z[:n], z[n]
        r = v - B @ eta
        return s + c_norm * np.sqrt(r @ (w * r) + 1e-300)

    def cons_f(z):
        eta, s = z[:n], z[n]
        r = v - B @ eta
        return np.concatenate([s - r, s + r])

    z0 = np.concatenate([eta0, [np.max(np.abs(v - B @ eta0)) + 1e-12]])
    try:
        res = sopt.minimize(
            objective, z0, constraints=[{"type": "ineq", "fun": cons_f}],
            method="SLSQP", options={"maxiter": 200, "ftol": 1e-12},
        )
        if res.success or res.status in (4, 8):
            cand = val_at(res.x[:n])
            return min(base, cand)
    except Exception:
        pass
    return base


def newton_step(
    A: SparseMat, barriers: CoordinateBarriers, c, point: PathPoint,
    c_norm: float, eps_s=1e-10, scale=1.0,
):
    """Stable projected Newton step sharing one solve with the eta update.

    Returns (new point, report).  Raises StepLeftDomain when the scaled
    step would exit the open box; callers shrink and retry.
    """
    if point.eta is None:
        point.eta = eta_star(A, c, point, eps_s=eps_s)
    ne = point.normal_equations(A)
    g = gradient(c, point) - A.matvec(point.eta)
    r = g / (point.w * point.d2)
    sol = ne.solve(A.rmatvec(r), eps_s=eps_s).solution
    dx = scale * (-r + A.matvec(sol) / (point.w * point.d2))
    eta_new = point.eta + sol
    x_new = point.x + dx
    bad = ~barriers.interior_mask(x_new)
    if np.any(bad):
        # Noise-level displacements of coordinates already hugging the
        # boundary guard are dropped rather than failing the whole step.
        slack = barriers.slack(point.x)
        noise = np.abs(dx) <= 1e-6 * slack
        x_new[bad & noise] = point.x[bad & noise]
        if np.any(bad & ~noise) or not barriers.is_interior(x_new):
            raise StepLeftDomain("Newton step crossed a coordinate bound")
    rr = residual(c, point, A)
    delta_before = mixed_norm(rr, point.w, c_norm)
    step_inf = float(np.max(np.abs(np.sqrt(point.d2) * dx))) if dx.size else 0.0
    new_point = make_point(A, barriers, x_new, point.w, point.t, eta=eta_new)
    return new_point, StepReport(delta_before, scale, step_inf, 1)


def potential_phi(y, mu: float) -> float:
    """Softmax potential sum_i (e^{mu y_i} + e^{-mu y_i}), overflow guarded."""
    if mu <= 0:
        raise InvalidShape("mu must be positive")
    y = np.asarray(y, dtype=float)
    z = mu * y
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    if peak <= 500.0:
        return float(np.sum(np.exp(z) + np.exp(-z)))
    # log-sum-exp with the peak factored out; overflows to inf only when the
    # true value exceeds the double range.
    log_terms = np.concatenate([z - peak, -z - peak])
    log_phi = peak + np.log(np.sum(np.exp(log_terms)))
    with np.errstate(over="ignore"):
        return float(np.exp(log_phi))


def softmax_gradient_direction(y, mu: float) -> np.ndarray:
    """Direction of grad Phi_mu(y), computed with the peak factored out."""
    y = np.asarray(y, dtype=float)
    z = mu * y
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    if peak == 0.0:
        return np.zeros_like(y)
    return np.exp(z - peak) - np.exp(-z - peak)


def project_onto_ball_box(a, l) -> np.ndarray:
    """argmax <a, x> over the unit ball intersected with the box |x_i| <= l_i.

    Water-filling form: coordinates with the largest |a_i|/l_i sorted first
    are clamped to the box, the rest scaled onto the sphere.  Ties break by
    ascending index; a = 0 returns 0.
    """
    a = np.asarray(a, dtype=float)
    l = np.asarray(l, dtype=float)
    if a.shape != l.shape or a.ndim != 1:
        raise InvalidShape("a and l must be equal-length vectors")
    if np.any(l <= 0):
        raise InvalidShape("box radii must be strictly positive")
    nrm = float(np.linalg.norm(a))
    if nrm == 0.0:
        return np.zeros_like(a)
    ah = a / nrm
    ratio = np.abs(ah) / l
    order = np.lexsort((np.arange(a.size), -ratio))
    la = np.abs(ah[order])
    ll = l[order]
    m = a.size
    # Inclusive prefix sums; index p stands for "first p coordinates clamped".
    L = np.concatenate(([0.0], np.cumsum(ll**2)))
    Aa = np.concatenate(([0.0], np.cumsum(la**2)))
    B = np.concatenate(([0.0], np.cumsum(la * ll)))
    rem_l = 1.0 - L
    rem_a = np.maximum(1.0 - Aa, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sqrt(np.maximum(rem_l, 0.0) / np.where(rem_a > 0, rem_a, 1.0))
    s = np.where(rem_a > 0, s, 0.0)
    feasible = rem_l >= -1e-15
    # Suffix box feasibility: the first unclamped coordinate must fit.
    fits = np.ones(m + 1, dtype=bool)
    fits[:m] = s[:m] * la <= ll * (1.0 + 1e-12)
    valid = feasible & fits
    value = np.where(valid, B + s * rem_a, -np.inf)
    p = int(np.argmax(value))
    x_sorted = np.empty(m)
    x_sorted[:p] = np.sign(ah[order[:p]]) * ll[:p]
    x_sorted[p:] = s[p] * ah[order[p:]]
    x = np.empty(m)
    x[order] = x_sorted
    return x


def project_onto_mixed_norm_ball(a, l) -> np.ndarray:
    """argmax <a, x> over {||x||_2 + max_i |x_i|/l_i <= 1}.

    Splits the budget between the sup part (t) and the ball part (1 - t);
    for each clamp-prefix the optimal t has a closed form, and the prefix
    intervals partition the t-range, so an O(m log m) sweep finds the
    global maximizer.
    """
    a = np.asarray(a, dtype=float)
    l = np.asarray(l, dtype=float)
    if a.shape != l.shape or a.ndim != 1:
        raise InvalidShape("a and l must be equal-length vectors")
    if np.any(l <= 0):
        raise InvalidShape("box radii must be strictly positive")
    nrm = float(np.linalg.norm(a))
    if nrm == 0.0:
        return np.zeros_like(a)
    ah = a / nrm
    ratio = np.abs(ah) / l
    order = np.lexsort((np.arange(a.size), -ratio))
    la = np.abs(ah[order])
    ll = l[order]
    m = a.size
    L = np.concatenate(([0.0], np.cumsum(ll**2)))
    Aa = np.minimum(np.concatenate(([0.0], np.cumsum(la**2))), 1.0)
    B = np.concatenate(([0.0], np.cumsum(la * ll)))
    rem_a = np.maximum(1.0 - Aa, 0.0)

    # Box-scale breakpoints: prefix p is active for u in [tau_{p+1}, tau_p].
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = la / np.sqrt(ll**2 * rem_a[1:] + la**2 * L[1:])
    tau = np.nan_to_num(tau, nan=0.0, posinf=np.inf)
    hi = np.concatenate(([np.inf], tau))   # tau_p for p = 0..m (tau_0 = inf)
    lo = np.concatenate((tau, [0.0]))      # tau_{p+1} for p = 0..m

    def V(u, p):
        h = np.maximum(1.0 - u**2 * L[p], 0.0)
        return (u * B[p] + np.sqrt(h * rem_a[p])) / (1.0 + u)

    best_val, best_p, best_u = -np.inf, 0, 0.0
    for p in range(m + 1):
        u_lo = lo[p]
        u_hi = hi[p]
        if not (u_lo <= u_hi):
            continue
        cands = []
        if np.isfinite(u_lo):
            cands.append(u_lo)
        if np.isfinite(u_hi):
            cands.append(u_hi)
        Bp, Lp, Rp = B[p], L[p], rem_a[p]
        denom = Bp**2 * Lp + Rp * Lp**2
        if denom > 0 and Rp > 0:
            disc = Lp * (Rp * (Lp - 1.0) + Bp**2)
            if disc >= 0:
                u_star = (-Lp * Rp + Bp * np.sqrt(disc)) / denom
                if np.isfinite(u_star) and u_lo <= u_star <= u_hi:
                    cands.append(u_star)
        elif Rp == 0 and np.isfinite(u_hi):
            cands.append(u_hi)  # pure clamp value increases with u
        if not cands and u_lo == 0.0:
            cands.append(0.0)
        for u in cands:
            val = V(u, p)
            if val > best_val + 1e-15:
                best_val, best_p, best_u = val, p, u
    t = best_u / (1.0 + best_u)
    p = best_p
    x_sorted = np.empty(m)
    x_sorted[:p] = np.sign(ah[order[:p]]) * t * ll[:p]
    if rem_a[p] > 0:
        h = max((1.0 - t) ** 2 - t**2 * L[p], 0.0)
        x_sorted[p:] = np.sqrt(h / rem_a[p]) * ah[order[p:]]
    else:
        x_sorted[p:] = 0.0
    x = np.empty(m)
    x[order] = x_sorted
    return x


def chasing_zero_move(z, w, C: float, c_norm: float, mu: float, eps: float) -> np.ndarray:
    """One player move of the potential-descent game on the tracking error z.

    Returns (1+eps) times the minimizer of <grad Phi_mu(z), u> over the
    mixed-norm ball of radius C, computed by a change of variables that
    reduces to the Euclidean-ball/sup-box projection.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if C < 0:
        raise InvalidShape("ball radius C must be nonnegative")
    if C == 0.0 or z.size == 0:
        return np.zeros_like(z)
    g = softmax_gradient_direction(z, mu)
    if not np.any(g):
        return np.zeros_like(z)
    scale = c_norm * np.sqrt(w)
    a = -g / scale
    y = project_onto_mixed_norm_ball(a, scale)
    return (1.0 + eps) * C * y / scale


def practical_weight_step(
    A: SparseMat, point: PathPoint, p: WeightParams, max_rel=1.0 / 16.0
) -> np.ndarray:
    """One damped fixed-point step of w toward the weight function.

    Cheap tracking update used by practical mode: a single exact leverage
    computation, clipped to a multiplicative band around the current w.
    """
    sigma = reweighted_leverage(A, point.d2, point.w, p.alpha)
    target = 0.75 * point.w + 0.25 * (sigma + p.beta)
    return np.clip(target, (1.0 - max_rel) * point.w, (1.0 + max_rel) * point.w)


def centering_inexact(
    A: SparseMat, barriers: CoordinateBarriers, c, point: PathPoint,
    K: float, p: WeightParams, seed: int = 0, eps_s: float = 1e-10,
    mode: str = "paper", delta_target: float = 0.05, max_newton: int = 4,
):
    """One centering call: Newton step(s) on x plus a weight update.

    Paper mode performs exactly one stable Newton step, approximates the
    log-weights of the new iterate to within R, and moves log w by the
    potential-game step over the shrunken mixed-norm ball.  Practical mode
    repeats damped Newton steps (at most ``max_newton``) until the measured
    centrality reaches ``delta_target`` and applies a single projected
    fixed-point weight step.

    Returns (new point, info dict).
    """
    info = {"solves": 0, "newton_steps": 0}
    if mode == "paper":
        reading = centrality(A, c, point, p.c_norm, eps_s=eps_s)
        new_pt, rep = newton_step(A, barriers, c, point, p.c_norm, eps_s=eps_s)
        info["solves"] += rep.solves + 1
        info["newton_steps"] += 1
        info["delta_entry"] = reading.delta_hat
        # Approximate log g(x_new) to within R, then play the game move.
        w_apx = compute_weight(
            A, new_pt.d2, point.w, min(p.R / 2.0, 0.5), p, seed=seed
        )
        z = np.log(w_apx) - np.log(point.w)
        radius = (1.0 - 7.0 / (8.0 * p.c_k)) * reading.delta_hat
        eps_game = 1.0 / (2.0 * p.c_k)
        move = chasing_zero_move(z, point.w, radius, p.c_norm, p.mu, eps_game)
        w_new = np.exp(np.log(point.w) + move)
        out = make_point(A, barriers, new_pt.x, w_new, point.t, eta=new_pt.eta)
        return out, info

    # Practical mode.
    cur = point
    for _ in range(max_newton):
        reading = centrality(A, c, cur, p.c_norm, eps_s=eps_s)
        info["solves"] += 1
        if "delta_entry" not in info:
            info["delta_entry"] = reading.delta_hat
        if reading.delta_hat <= delta_target:
            break
        scale = 1.0
        # Keep the multiplicative Hessian change bounded so the step cannot
        # leave the domain.
        r = residual(c, cur, A)
        rough = float(np.max(np.abs(r)))
        if rough > MAX_REL_STEP:
            scale = MAX_REL_STEP / rough
        for _halving in range(30):
            try:
                cur, rep = newton_step(
                    A, barriers, c, cur, p.c_norm, eps_s=eps_s, scale=scale
                )
                break
            except StepLeftDomain:
                scale *= 0.5
        else:
            raise StepLeftDomain("Newton step kept leaving the domain")
        info["solves"] += rep.solves
        info["newton_steps"] += 1
    w_new = practical_weight_step(A, cur, p)
    info["solves"] += 1
    out = make_point(A, barriers, cur.x, w_new, cur.t, eta=cur.eta)
    return out, info
