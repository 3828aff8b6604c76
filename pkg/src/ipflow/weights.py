"""Regularized log-det weight function and its approximate computation.

The weight vector g(x) is the minimizer over w > 0 of

    1^T w + (1/alpha) log det(A_x^T W^{-alpha} A_x) - beta * sum_i log w_i

with A_x = diag(phi'')^{-1/2} A.  Its fixed-point characterization
g = sigma(g^{-alpha}) + beta (sigma = leverage scores of A_x under row
weights g^{-alpha}) drives both the production computation and the
brute-force oracle used in tests.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidShape, NoConvergence
from .linalg import NormalEquations, SparseMat

ALPHA_CAP = 2.0 - 1e-9


@dataclass(frozen=True)
class WeightParams:
    """Constants that parameterize the weight function and centering.

    ``c_k = 1/(1 - c_gamma*c_delta)``; ``K``, ``mu`` and ``R`` are the
    weight-tracking tolerance, softmax-potential temperature and
    approximation radius used by the centering game.
    """

    m: int
    rank: int
    mode: str
    alpha: float
    beta: float
    c_norm: float
    c_k: float
    c_gamma: float
    c_delta: float
    K: float
    mu: float
    R: float

    def with_beta(self, beta: float) -> "WeightParams":
        return WeightParams(
            self.m, self.rank, self.mode, self.alpha, beta, self.c_norm,
            self.c_k, self.c_gamma, self.c_delta, self.K, self.mu, self.R,
        )


def weight_params(m: int, rank: int, mode: str = "practical") -> WeightParams:
    """Derive all weight/centering constants from the instance shape.

    Practical mode keeps alpha and beta but caps c_norm at 64 so the mixed
    norm stays usable at desk scale.
    """
    if rank <= 0 or rank > m:
        raise InvalidShape(f"need 1 <= rank <= m, got rank={rank}, m={m}")
    if mode not in ("paper", "practical"):
        raise InvalidShape(f"unknown mode {mode!r}")
    lg = math.log2(2.0 * m / rank)
    alpha = 1.0 + 1.0 / lg
    if alpha >= 2.0:
        warnings.warn(
            "square constraint matrix: clamping barrier-weight exponent "
            f"alpha from {alpha} to {ALPHA_CAP}",
            RuntimeWarning,
            stacklevel=2,
        )
        alpha = ALPHA_CAP
    beta = rank / (2.0 * m)
    c_norm = 18.0 * lg
    if mode == "practical":
        c_norm = min(c_norm, 64.0)
    c_k = 9.0 * lg
    c_gamma = 1.0 + 1.0 / (9.0 * lg)
    c_delta = 1.0 - 2.0 / (9.0 * lg)
    K = 1.0 / (20.0 * c_k)
    mu = 2.0 * math.log(400.0 * m) / K
    R = K / (48.0 * c_k * math.log(400.0 * m))
    return WeightParams(
        m=int(m), rank=int(rank), mode=mode, alpha=alpha, beta=beta,
        c_norm=c_norm, c_k=c_k, c_gamma=c_gamma, c_delta=c_delta,
        K=K, mu=mu, R=R,
    )


def _check_positive(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidShape(f"{name} must be finite and strictly positive")
    return w


def reweighted_leverage(
    A: SparseMat, phi2, w, alpha: float, theta: float | None = None, seed: int = 0
) -> np.ndarray:
    """Leverage scores of A_x under row weights w^{-alpha}.

    A sketched estimate is only worthwhile when it needs fewer probe solves
    than there are rows; below that break-even point the exact computation
    is used regardless of ``theta``.
    """
    phi2 = _check_positive(phi2, "phi2")
    w = _check_positive(w, "w")
    d = w ** (-alpha) / phi2
    ne = NormalEquations(A, d)
    if theta is not None:
        k = int(np.ceil(24.0 * np.log(max(A.m, 2)) / theta**2))
        if k < A.m:
            return ne.leverage_sketched(theta, seed)
    return ne.leverage_exact()


def fhat_value(A: SparseMat, phi2, w, p: WeightParams) -> float:
    """Objective value whose minimizer over w is the weight function."""
    phi2 = _check_positive(phi2, "phi2")
    w = _check_positive(w, "w")
    d = w ** (-p.alpha) / phi2
    Ad = A.dense()
    M = Ad.T @ (Ad * d[:, None])
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise InvalidShape("normal matrix not positive definite")
    return float(np.sum(w) + logdet / p.alpha - p.beta * np.sum(np.log(w)))


def fhat_grad(A: SparseMat, phi2, w, p: WeightParams) -> np.ndarray:
    """Gradient of the weight objective: 1 - sigma(w^{-alpha})/w - beta/w."""
    w = _check_positive(w, "w")
    sigma = reweighted_leverage(A, phi2, w, p.alpha)
    return 1.0 - sigma / w - p.beta / w


def _fixed_point_residual(A, phi2, w, p, theta=None, seed=0):
    sigma = reweighted_leverage(A, phi2, w, p.alpha, theta=theta, seed=seed)
    return sigma + p.beta - w, sigma


def compute_weight(
    A: SparseMat, phi2, w0, K: float, p: WeightParams, seed: int = 0,
    theta: float | None = None,
) -> np.ndarray:
    """Projected gradient refinement of a warm-started weight vector.

    The iterate stays inside the multiplicative 1/48-box around ``w0`` and
    stops once the relative fixed-point residual drops below K/3, which
    lands the result within K of the true weights in relative sup norm.
    Caller is responsible for ``w0`` being within 1/48 of the target.
    """
    if not (0.0 < K < 1.0):
        raise InvalidShape(f"need 0 < K < 1, got K={K}")
    w0 = _check_positive(w0, "w0")
    if theta is None:
        theta = K / 8.0
    lo = (1.0 - 1.0 / 48.0) * w0
    hi = (1.0 + 1.0 / 48.0) * w0
    w = w0.copy()
    max_iter = max(60, int(200.0 * math.log(1.0 / K)))
    pinned = 0
    for it in range(max_iter):
        resid, sigma = _fixed_point_residual(A, phi2, w, p, theta=theta, seed=seed + it)
        if np.max(np.abs(resid) / w) <= K / 3.0:
            return w
        w_next = np.clip(0.75 * w + 0.25 * (sigma + p.beta), lo, hi)
        # Outside the admissible warm-start ball the projection can pin the
        # iterate to the box; return the pinned point so the caller can
        # re-center the box around it.
        pinned = pinned + 1 if np.max(np.abs(w_next - w) / w) <= K / 50.0 else 0
        w = w_next
        if pinned >= 3:
            return w
    resid, _ = _fixed_point_residual(A, phi2, w, p)
    if np.max(np.abs(resid) / w) <= K:
        return w
    raise NoConvergence(f"weight refinement stalled after {max_iter} iterations")


def _tracked_refinement(
    A, phi2, w, K, p, seed=0, theta=None, cap=1.0 / 48.0, max_iter=600,
):
    """Projected-gradient weight refinement with a per-step trust box.

    Equivalent to chaining box-projected refinements while re-centering the
    box on every step; returns once the relative fixed-point residual is
    below K/3.
    """
    for it in range(max_iter):
        resid, sigma = _fixed_point_residual(A, phi2, w, p, theta=theta, seed=seed + it)
        if np.max(np.abs(resid) / w) <= K / 3.0:
            return w
        w = np.clip(
            0.75 * w + 0.25 * (sigma + p.beta), (1.0 - cap) * w, (1.0 + cap) * w
        )
    raise NoConvergence(f"tracked weight refinement stalled after {max_iter} steps")


def compute_initial_weight(
    A: SparseMat, phi2, K: float, p: WeightParams, seed: int = 0,
    theta: float | None = None,
) -> np.ndarray:
    """Cold-start weight computation by a homotopy in the regularizer.

    Starts from the heavily regularized problem (where the all-100 vector
    is a provably good warm start), then geometrically shrinks the
    regularizer toward its target, re-running the warm-started refinement
    at each stage.
    """
    if not (0.0 < K < 1.0):
        raise InvalidShape(f"need 0 < K < 1, got K={K}")
    phi2 = _check_positive(phi2, "phi2")
    beta_target = p.beta
    beta_cur = 100.0
    w = np.full(A.m, 100.0)
    shrink = 1.0 - 1.0 / (2.0 * math.sqrt(p.rank))
    stage_K = min(1.0 / 96.0, 4.0 * K)
    max_stages = int(4.0 * math.sqrt(p.rank) * math.log(200.0 / beta_target)) + 8
    for _ in range(max_stages):
        p_stage = p.with_beta(beta_cur)
        target_K = K if beta_cur == beta_target else stage_K
        w = _tracked_refinement(
            A, phi2, w, target_K, p_stage, seed=seed, theta=theta
        )
        if beta_cur == beta_target:
            return w
        beta_cur = max(beta_target, beta_cur * shrink)
    raise NoConvergence("homotopy did not reach the target regularizer")


def weight_function_oracle(
    A: SparseMat, phi2, p: WeightParams, tol: float = 1e-10, w_start=None
) -> np.ndarray:
    """Brute-force fixed point of w = sigma(w^{-alpha}) + beta.

    Exact leverage scores, plain fixed-point iteration with step halving
    whenever the residual grows (the pure iteration is only locally
    contractive and can cycle on small instances).  Test oracle; intended
    for m up to a few hundred.
    """
    phi2 = _check_positive(phi2, "phi2")
    if w_start is None:
        w = np.full(A.m, 1.0 + p.beta)
    else:
        w = _check_positive(w_start, "w_start").copy()
    # The full fixed-point map has local Jacobian -alpha * Lambda W^{-1},
    # whose spectral radius can exceed 1; the quarter step is contractive
    # for every admissible alpha, so fall back to it once the fast path
    # stops making progress (limit cycles do occur on small instances).
    damp = 1.0
    best = np.inf
    since_best = 0
    for _ in range(100_000):
        sigma = reweighted_leverage(A, phi2, w, p.alpha)
        target = sigma + p.beta
        change = float(np.max(np.abs(target - w)))
        if change <= tol:
            return target
        if change < 0.97 * best:
            best = change
            since_best = 0
        else:
            since_best += 1
            if since_best >= 12 and damp > 0.26:
                damp *= 0.5
                since_best = 0
        w = w + damp * (target - w)
    raise NoConvergence("weight oracle fixed point did not converge")
