import numpy as np
import pytest

from etr.errors import InvalidInput
from etr.model import (
    TrustRegionProblem,
    check_dimension_condition,
    check_slater,
    evaluate,
    is_feasible,
    problem_from_json,
    problem_to_json,
)

from helpers import (
    ep1_problem,
    ep_problem,
    gp_problem,
    random_dimension_condition_problem,
    random_orthogonal,
)


def test_record_validation():
    with pytest.raises(InvalidInput):
        TrustRegionProblem(A=np.eye(2), a=[1.0], x0=[0.0, 0.0], alpha=1.0)
    with pytest.raises(InvalidInput):
        TrustRegionProblem(A=np.eye(2), a=[0.0, 0.0], x0=[0.0, 0.0], alpha=-1.0)
    p = TrustRegionProblem(A=np.eye(2), a=[0.0, 0.0], x0=[0.0, 0.0], alpha=1.0)
    assert p.n == 2 and p.m == 0


def test_evaluate_ep_origin():
    p = ep_problem()
    ev = evaluate(p, np.zeros(3))
    assert ev.objective == pytest.approx(0.0)
    assert ev.ball_slack == pytest.approx(0.0)
    assert np.all(ev.constraint_slacks >= 0.0)


def test_evaluate_center_slack():
    p = ep_problem()
    assert evaluate(p, p.x0).ball_slack == pytest.approx(p.alpha)


def test_evaluate_gp_minimizer():
    p = gp_problem()
    ev = evaluate(p, [0.0, 1.0, 0.0])
    assert ev.objective == pytest.approx(-1.0)
    assert ev.ball_slack >= -1e-12
    assert np.all(ev.constraint_slacks >= -1e-12)
    assert is_feasible(p, [0.0, 1.0, 0.0])


def test_dimension_condition_ep():
    rep = check_dimension_condition(ep_problem())
    assert rep.lambda_min == pytest.approx(-1.0)
    assert rep.multiplicity == 3
    assert rep.span_dim == 2
    assert rep.holds and not rep.extended


def test_dimension_condition_ep1_fails():
    rep = check_dimension_condition(ep1_problem())
    assert rep.multiplicity == 1
    assert rep.span_dim == 1
    assert not rep.holds


def test_dimension_condition_gp_joint_kernel():
    rep = check_dimension_condition(gp_problem())
    assert rep.extended
    assert rep.multiplicity == 2
    assert rep.span_dim == 1
    assert rep.holds


def test_dimension_condition_ball_only_always_holds():
    rng = np.random.default_rng(2)
    for _ in range(10):
        g = rng.normal(size=(4, 4))
        p = TrustRegionProblem(
            A=0.5 * (g + g.T), a=rng.normal(size=4), x0=np.zeros(4), alpha=1.0
        )
        assert check_dimension_condition(p).holds


def test_dimension_condition_invariances():
    rng = np.random.default_rng(3)
    p = random_dimension_condition_problem(rng, 4, 2)
    base = check_dimension_condition(p)

    scaled = TrustRegionProblem(
        A=p.A, a=p.a, x0=p.x0, alpha=p.alpha,
        constraints=[(3.5 * c.b, 3.5 * c.beta) for c in p.constraints],
    )
    assert check_dimension_condition(scaled).holds == base.holds

    q = random_orthogonal(rng, 4)
    rotated = TrustRegionProblem(
        A=q @ p.A @ q.T, a=q @ p.a, x0=q @ p.x0, alpha=p.alpha,
        constraints=[(q @ c.b, c.beta) for c in p.constraints],
    )
    rot = check_dimension_condition(rotated)
    assert rot.holds == base.holds
    assert rot.multiplicity == base.multiplicity
    assert rot.span_dim == base.span_dim


def test_slater_fails_on_ep():
    rep = check_slater(ep_problem())
    assert not rep.holds
    assert rep.margin >= -1e-9


def test_slater_holds_on_gp():
    rep = check_slater(gp_problem())
    assert rep.holds
    assert np.linalg.norm(rep.witness - np.array([-0.5, 0.0, 0.0])) <= 0.5
    assert rep.margin < -1e-9


def test_slater_ball_only():
    p = TrustRegionProblem(A=np.eye(2), a=[0.0, 0.0], x0=[0.0, 0.0], alpha=1.0)
    rep = check_slater(p)
    assert rep.holds
    assert rep.margin == pytest.approx(-1.0, abs=1e-6)


def test_json_round_trip():
    for p in (ep_problem(), gp_problem()):
        q = problem_from_json(problem_to_json(p))
        assert np.array_equal(q.A, p.A)
        assert np.array_equal(q.a, p.a)
        assert q.alpha == p.alpha and q.m == p.m
        if p.curvature is None:
            assert q.curvature is None
        else:
            assert np.array_equal(q.curvature, p.curvature)
    with pytest.raises(InvalidInput):
        problem_from_json({"A": [[1.0]]})
