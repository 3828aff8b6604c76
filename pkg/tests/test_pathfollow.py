import math

import numpy as np
import pytest

import ipflow as ipf
from ipflow.centering import centrality, make_point, mixed_norm
from ipflow.errors import InfeasibleStart, InvalidShape, RepairHypothesisViolated
from ipflow.pathfollow import (
    BoxedLP,
    PaperTrace,
    SolveReport,
    SolverParams,
    infeasibility,
    lp_solve,
    path_following,
    progress_certificate,
    repair_feasibility,
    width_u,
)
from ipflow.weights import compute_initial_weight, weight_function_oracle, weight_params
from oracles import lp_vertex_enumeration, random_boxed_lp


def _random_lp(rng, m=None, n=None):
    Ad, b, c, lo, up, x0 = random_boxed_lp(rng, m, n)
    lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
    return lp, Ad, x0


def _interior_point(rng, lp, x):
    _, d1, d2, _ = lp.barriers.derivs(x)
    p = weight_params(lp.m, lp.n)
    g = weight_function_oracle(lp.A, d2, p, tol=1e-11)
    return make_point(lp.A, lp.barriers, x, g, 1.0), p


def test_infeasibility_zero_on_feasible():
    rng = np.random.default_rng(0)
    lp, Ad, x0 = _random_lp(rng)
    pt, p = _interior_point(rng, lp, x0)
    assert infeasibility(lp.A, pt, lp.b) == pytest.approx(0.0, abs=1e-12)


def test_infeasibility_scales_linearly():
    rng = np.random.default_rng(1)
    lp, Ad, x0 = _random_lp(rng, m=8, n=2)
    pt, p = _interior_point(rng, lp, x0)
    col = Ad[:, 0]
    vals = []
    for s in (1e-6, 2e-6, 4e-6):
        pt2 = make_point(lp.A, lp.barriers, x0 + s * col / np.linalg.norm(col), pt.w, 1.0)
        vals.append(infeasibility(lp.A, pt2, lp.b))
    assert vals[0] > 0
    assert vals[1] == pytest.approx(2 * vals[0], rel=1e-3)
    assert vals[2] == pytest.approx(4 * vals[0], rel=1e-3)


def test_infeasibility_matches_dense_oracle():
    rng = np.random.default_rng(2)
    lp, Ad, x0 = _random_lp(rng, m=10, n=3)
    x = x0 + 1e-7 * rng.normal(size=10)
    _, d1, d2, _ = lp.barriers.derivs(x)
    w = rng.uniform(0.5, 1.5, 10)
    pt = make_point(lp.A, lp.barriers, x, w, 1.0)
    got = infeasibility(lp.A, pt, lp.b, eps_s=1e-13)
    r = Ad.T @ x - lp.b
    M = Ad.T @ (Ad / (w * d2)[:, None])
    want = math.sqrt(r @ np.linalg.solve(M, r))
    assert got == pytest.approx(want, rel=1e-8)


def test_repair_feasibility():
    rng = np.random.default_rng(3)
    lp, Ad, x0 = _random_lp(rng, m=10, n=3)
    pt, p = _interior_point(rng, lp, x0)
    # already feasible: zero step
    fixed = repair_feasibility(lp.A, lp.barriers, pt, lp.b, eps_s=1e-12)
    assert fixed.x == pytest.approx(pt.x)
    # small synthetic violation
    x_bad = x0 + 1e-6 * rng.normal(size=10)
    ptb = make_point(lp.A, lp.barriers, x_bad, pt.w, 1.0)
    before = infeasibility(lp.A, ptb, lp.b, eps_s=1e-12)
    assert before <= 0.01 / lp.m
    fixed = repair_feasibility(lp.A, lp.barriers, ptb, lp.b, eps_s=1e-10)
    after = infeasibility(lp.A, fixed, lp.b, eps_s=1e-12)
    assert after <= 1e-6 * before
    # hypothesis violation
    x_far = x0 + 0.2 * (rng.uniform(-1, 1, 10)) * lp.barriers.slack(x0)
    ptf = make_point(lp.A, lp.barriers, x_far, pt.w, 1.0)
    if infeasibility(lp.A, ptf, lp.b) > 0.01 / lp.m:
        with pytest.raises(RepairHypothesisViolated):
            repair_feasibility(lp.A, lp.barriers, ptf, lp.b)


def _phase_a_start(rng, m, n, mode="paper", seed=0):
    """Exactly centered start: synthetic cost makes x0 central at t=1."""
    Ad = rng.normal(size=(m, n))
    A = ipf.SparseMat.from_dense(Ad)
    lo = -rng.uniform(0.5, 2.0, m)
    up = rng.uniform(0.5, 2.0, m)
    x0 = lo + rng.uniform(0.3, 0.7, m) * (up - lo)
    b = Ad.T @ x0
    lp = BoxedLP(A, b, rng.normal(size=m), list(zip(lo, up)))
    wp = weight_params(m, n, mode)
    d2 = lp.barriers.derivs(x0)[2]
    k_init = 1.0 / (1e5 * math.log(400.0 * m) ** 5) if mode == "paper" else 0.02
    w0 = compute_initial_weight(A, d2, k_init, wp, seed=seed)
    d_cost = -w0 * lp.barriers.derivs(x0)[1]
    return lp, wp, make_point(A, lp.barriers, x0, w0, 1.0), d_cost


def test_path_following_same_endpoint_only_centers():
    rng = np.random.default_rng(4)
    lp, wp, pt, d_cost = _phase_a_start(rng, 10, 3, mode="practical")
    sp = SolverParams(mode="practical")
    out, rep = path_following(lp, d_cost, pt, 1.0, 1.0, 1e-6, sp, wp, seed=0)
    assert out.t == 1.0
    d = centrality(lp.A, d_cost, out, wp.c_norm, refresh_eta=True).delta_hat
    assert d <= 1e-6


def test_paper_segments_keep_invariants():
    # Literal paper-mode constants on a both-direction parameter segment;
    # every tracked invariant must hold strictly.
    rng = np.random.default_rng(5)
    lp, wp, pt, d_cost = _phase_a_start(rng, 12, 3, mode="paper")
    sp = SolverParams(mode="paper", strict_invariants=True, eps_s=1e-13)
    step = 1.0 / (1e5 * wp.c_k**4 * math.log(400.0 * lp.m) * math.sqrt(wp.rank))
    trace = PaperTrace()
    out, rep = path_following(
        lp, d_cost, pt, 1.0, (1.0 - step) ** 40, 1e-4, sp, wp, seed=0, trace=trace
    )
    assert not trace.violations
    assert max(trace.entry_delta) <= trace.entry_delta_bound
    assert max(trace.psi_inf) <= wp.K
    trace2 = PaperTrace()
    out2, _ = path_following(
        lp, d_cost, out, out.t, out.t * (1.0 + step) ** 40, 1e-4, sp, wp,
        seed=1, trace=trace2,
    )
    assert not trace2.violations
    assert len(trace2.infeas_growth) > 0
    assert all(a <= bd for _, a, bd in trace2.infeas_growth)


def test_lp_solve_practical_vs_enumeration():
    rng = np.random.default_rng(6)
    for trial in range(6):
        Ad, b, c, lo, up, x0 = random_boxed_lp(rng)
        lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
        x, rep = lp_solve(lp, x0, eps=1e-4, sp=SolverParams(), seed=trial)
        opt, _ = lp_vertex_enumeration(Ad, b, c, lo, up)
        assert c @ x <= opt + 1e-4 + 1e-9
        assert rep.infeasibility <= 1e-4
        assert rep.gap_bound == pytest.approx(np.sum(x * 0.0) + rep.gap_bound)
        assert lp.barriers.is_interior(x)


def test_lp_solve_center_direction_cost():
    # cost equal to the phase-A synthetic direction: any eps is reached
    # quickly and the result stays feasible.
    rng = np.random.default_rng(7)
    lp, wp, pt, d_cost = _phase_a_start(rng, 8, 2, mode="practical")
    lp2 = BoxedLP(lp.A, lp.b, d_cost, lp.bounds)
    x, rep = lp_solve(lp2, pt.x, eps=1e-3, sp=SolverParams(), seed=0)
    assert rep.infeasibility <= 1e-3
    assert lp2.barriers.is_interior(x)


def test_lp_solve_huge_eps_returns_feasible():
    rng = np.random.default_rng(8)
    Ad, b, c, lo, up, x0 = random_boxed_lp(rng, m=6, n=2)
    lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
    span = np.max(up - lo) * np.max(np.abs(c)) * 6
    x, rep = lp_solve(lp, x0, eps=10 * span, sp=SolverParams(), seed=0)
    assert rep.infeasibility <= 10 * span
    assert lp.barriers.is_interior(x)


def test_lp_solve_start_validation():
    rng = np.random.default_rng(9)
    Ad, b, c, lo, up, x0 = random_boxed_lp(rng, m=6, n=2)
    lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
    with pytest.raises(InfeasibleStart):
        lp_solve(lp, up + 1.0, eps=1e-3)
    with pytest.raises(InfeasibleStart):
        lp_solve(lp, x0 + 0.3 * Ad[:, 0], eps=1e-3)


def test_progress_certificate():
    rng = np.random.default_rng(10)
    lp, wp, pt, d_cost = _phase_a_start(rng, 10, 3, mode="practical")
    # t -> infinity with bounded w drives the certificate to 0
    pt_hi = make_point(lp.A, lp.barriers, pt.x, pt.w, 1e12)
    assert progress_certificate(pt_hi, d_cost, wp) <= 1e-10
    # exact weights: gap term is (rank + beta m)/t
    cert = progress_certificate(pt, d_cost, wp)
    assert cert == pytest.approx(np.sum(pt.w) / pt.t)
    d2 = pt.d2
    c = d_cost
    cert2 = progress_certificate(pt, c, wp, mode="practical", delta_hat=0.01)
    assert cert2 >= cert


def test_certificate_covers_actual_gap():
    rng = np.random.default_rng(11)
    for trial in range(4):
        Ad, b, c, lo, up, x0 = random_boxed_lp(rng)
        lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
        sp = SolverParams()
        x, rep = lp_solve(lp, x0, eps=1e-3, sp=sp, seed=trial)
        opt, _ = lp_vertex_enumeration(Ad, b, c, lo, up)
        wp = weight_params(lp.m, lp.n)
        d2 = lp.barriers.derivs(x)[2]
        # reconstruct a certificate from the report fields
        cert = rep.gap_bound + 4.0 * rep.final_delta * float(
            np.sum(np.abs(c) / np.sqrt(d2))
        )
        assert c @ x - opt <= cert + 1e-9


def test_width_u():
    lp = BoxedLP(
        ipf.SparseMat.from_dense(np.array([[1.0], [1.0], [1.0]])),
        np.array([0.0]),
        np.array([3.0, -1.0, 0.5]),
        [(-1.0, 1.0), (0.0, None), (None, 2.0)],
    )
    x0 = np.array([0.0, 1.0, 0.0])
    u = width_u(lp, x0).u_width
    assert u >= 3.0  # at least the cost magnitude
    assert math.isfinite(u)


def test_iteration_budget_enforced():
    rng = np.random.default_rng(12)
    Ad, b, c, lo, up, x0 = random_boxed_lp(rng, m=8, n=2)
    lp = BoxedLP(ipf.SparseMat.from_dense(Ad), b, c, list(zip(lo, up)))
    sp = SolverParams(mode="paper", max_iters=50)
    with pytest.raises(ipf.errors.IterationBudgetExceeded):
        lp_solve(lp, x0, eps=1e-3, sp=sp)
