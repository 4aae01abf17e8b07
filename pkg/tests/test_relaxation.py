import numpy as np
import pytest

from etr.errors import InvalidInput
from etr.linalg import eig_sym
from etr.model import TrustRegionProblem, evaluate, is_feasible
from etr.oracle import brute_force_min
from etr.relaxation import (
    build_matrices,
    build_sdrp,
    extract_candidate,
    rank_one_reformulate,
    solve_relaxation,
)
from etr.sdp import solve as conic_solve

from helpers import (
    ep1_problem,
    ep_problem,
    gp_problem,
    random_dimension_condition_problem,
)


def lift(x):
    xt = np.append(np.asarray(x, float), 1.0)
    return np.outer(xt, xt)


def test_matrices_ep1():
    mats = build_matrices(ep1_problem())
    assert np.allclose(mats.M, [[-1.0, 0.5], [0.5, 0.0]])
    assert np.allclose(mats.H0, [[1.0, 0.0], [0.0, -1.0]])
    # g1(x) = -x, i.e. b1 = -1: the off-diagonal entries carry b1/2
    assert np.allclose(mats.H[0], [[0.0, -0.5], [-0.5, 0.0]])


def test_lifted_traces_match_evaluation():
    rng = np.random.default_rng(23)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(0, 3))
        g = rng.normal(size=(n, n))
        curvature = None
        if rng.random() < 0.4:
            curvature = rng.normal(size=(int(rng.integers(1, 3)), n))
        p = TrustRegionProblem(
            A=0.5 * (g + g.T),
            a=rng.normal(size=n),
            x0=rng.normal(size=n) * 0.5,
            alpha=0.5 + rng.random(),
            constraints=[
                (rng.normal(size=n), float(rng.normal())) for _ in range(m)
            ],
            gamma=float(rng.normal()),
            curvature=curvature,
        )
        x = rng.normal(size=n)
        X = lift(x)
        mats = build_matrices(p)
        ev = evaluate(p, x)
        assert np.tensordot(mats.M, X) + p.gamma == pytest.approx(
            ev.objective, abs=1e-10 * (1 + abs(ev.objective))
        )
        assert np.tensordot(mats.H0, X) == pytest.approx(
            -ev.ball_slack, abs=1e-10 * (1 + abs(ev.ball_slack))
        )
        for i, Hi in enumerate(mats.H):
            assert np.tensordot(Hi, X) == pytest.approx(
                -ev.constraint_slacks[i],
                abs=1e-10 * (1 + abs(ev.constraint_slacks[i])),
            )


def test_sdrp_convex_ball_only():
    p = TrustRegionProblem(A=np.eye(3), a=np.zeros(3), x0=np.zeros(3), alpha=1.0)
    sol = conic_solve(build_sdrp(p))
    assert sol.status == "optimal"
    assert sol.primal_value == pytest.approx(0.0, abs=1e-7)


def test_relaxation_ep():
    res = solve_relaxation(ep_problem())
    assert res.sdp_value == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(res.candidate, 0.0, atol=1e-5)
    assert res.exact
    assert res.dimension.holds


def test_relaxation_ep1_gap():
    res = solve_relaxation(ep1_problem())
    assert res.sdp_value == pytest.approx(-1.0, abs=1e-6)
    assert res.candidate_value == pytest.approx(0.0, abs=1e-6)
    assert not res.exact
    assert res.gap == pytest.approx(1.0, abs=1e-5)
    assert not res.dimension.holds


def test_relaxation_gp():
    res = solve_relaxation(gp_problem())
    assert res.sdp_value == pytest.approx(-1.0, abs=1e-6)
    assert res.exact
    assert res.candidate_value == pytest.approx(-1.0, abs=1e-6)


def test_extract_rank_one():
    p = ep_problem()
    x = np.zeros(3)
    got = extract_candidate(lift(x), p)
    assert np.allclose(got, x, atol=1e-9)


def test_extract_purifies_rank_two_mixture():
    # two sphere minimizers of a ball-only instance, mixed into a rank-2 X
    p = TrustRegionProblem(
        A=np.diag([-1.0, -1.0, 0.5]), a=np.zeros(3), x0=np.zeros(3), alpha=1.0
    )
    x1 = np.array([1.0, 0.0, 0.0])
    x2 = np.array([0.0, 1.0, 0.0])
    X = 0.5 * (lift(x1) + lift(x2))
    got = extract_candidate(X, p)
    ev = evaluate(p, got)
    assert ev.objective == pytest.approx(-1.0, abs=1e-9)
    assert ev.ball_slack == pytest.approx(0.0, abs=1e-9)


def test_relaxation_lower_bounds_oracle():
    rng = np.random.default_rng(31)
    for _ in range(10):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(0, 3))
        g = rng.normal(size=(n, n))
        x0 = rng.normal(size=n) * 0.3
        p = TrustRegionProblem(
            A=0.5 * (g + g.T),
            a=rng.normal(size=n),
            x0=x0,
            alpha=0.5 + rng.random(),
            constraints=[
                (rng.normal(size=n), float(rng.normal() + 1.0)) for _ in range(m)
            ],
        )
        try:
            oracle = brute_force_min(p, budget=41**n)
        except Exception:
            continue
        res = solve_relaxation(p)
        assert res.sdp_value <= oracle.value + 1e-6


def test_relaxation_exact_under_dimension_condition():
    rng = np.random.default_rng(37)
    for _ in range(5):
        p = random_dimension_condition_problem(rng, 4, 2)
        res = solve_relaxation(p)
        assert res.dimension.holds
        oracle = brute_force_min(p, method="multistart")
        assert abs(res.sdp_value - oracle.value) <= 1e-4 * (1 + abs(oracle.value))
        assert res.exact


def test_rank_one_reformulate_examples():
    b = np.array([1.0, 0.0])
    base = dict(A=-np.eye(2), a=[0.0, 0.0], x0=[0.0, 0.0], alpha=4.0)
    p = TrustRegionProblem(
        **base, constraints=[([0.0, 0.0], 1.0)], curvature=b.reshape(1, 2)
    )
    ref = rank_one_reformulate(p)
    assert ref.curvature is None
    assert ref.m == 2
    assert np.allclose(ref.constraints[0].b, b)
    assert ref.constraints[0].beta == pytest.approx(1.0)
    assert np.allclose(ref.constraints[1].b, -b)

    zero = TrustRegionProblem(
        **base, constraints=[([0.0, 0.0], 0.0)], curvature=b.reshape(1, 2)
    )
    ref0 = rank_one_reformulate(zero)
    assert ref0.constraints[0].beta == 0.0 and ref0.constraints[1].beta == 0.0

    bad = TrustRegionProblem(
        **base, constraints=[([0.0, 0.0], -1.0)], curvature=b.reshape(1, 2)
    )
    with pytest.raises(InvalidInput):
        rank_one_reformulate(bad)


def test_rank_one_reformulation_matches_grid_oracle():
    rng = np.random.default_rng(41)
    for _ in range(5):
        n = 2
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        A = q @ np.diag([-1.0, -1.0]) @ q.T  # multiplicity 2
        b = rng.normal(size=n)
        p = TrustRegionProblem(
            A=A,
            a=rng.normal(size=n),
            x0=rng.normal(size=n) * 0.2,
            alpha=1.0,
            constraints=[(np.zeros(n), 0.5 + rng.random())],
            curvature=b.reshape(1, n),
        )
        ref = rank_one_reformulate(p)
        res = solve_relaxation(ref)
        oracle = brute_force_min(ref, budget=121**2)
        assert abs(res.sdp_value - oracle.value) <= 1e-4 * (1 + abs(oracle.value))
