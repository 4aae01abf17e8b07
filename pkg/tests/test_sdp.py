import itertools

import numpy as np
import pytest

from etr.errors import InvalidInput
from etr.sdp import (
    ConicProgram,
    block_zeros,
    dump_program,
    residuals,
    solve,
)


def trivial_program():
    # min Tr(X) s.t. X11 = 1 over the 1x1 cone
    return ConicProgram(
        blocks=(1,),
        objective=(np.array([[1.0]]),),
        constraints=(((np.array([[1.0]]),), 1.0),),
    )


def ep1_sdrp_program():
    # lifted relaxation of: min x - x^2, x^2 <= 1, -x <= 0 (value -1)
    M = np.array([[-1.0, 0.5], [0.5, 0.0]])
    H0 = np.array([[1.0, 0.0], [0.0, -1.0]])
    H1 = np.array([[0.0, -0.5], [-0.5, 0.0]])
    corner = np.array([[0.0, 0.0], [0.0, 1.0]])
    z2, z1 = np.zeros((2, 2)), np.zeros((1, 1))
    one = np.ones((1, 1))
    return ConicProgram(
        blocks=(2, 1, 1),
        objective=(M, z1, z1),
        constraints=(
            ((H0, one, z1), 0.0),
            ((H1, z1, one), 0.0),
            ((corner, z1, z1), 1.0),
        ),
    )


def diagonal_program(c, A, b):
    """LP min c'x s.t. Ax = b, x >= 0 encoded with order-1 blocks."""
    n = len(c)
    blocks = tuple([1] * n)
    obj = tuple(np.array([[float(ci)]]) for ci in c)
    cons = []
    for row, rhs in zip(A, b):
        cons.append((tuple(np.array([[float(v)]]) for v in row), float(rhs)))
    return ConicProgram(blocks=blocks, objective=obj, constraints=tuple(cons))


def lp_vertex_minimum(c, A, b):
    """Brute-force oracle: enumerate basic feasible points of Ax=b, x>=0."""
    n, p = len(c), len(b)
    best = np.inf
    for basis in itertools.combinations(range(n), p):
        sub = A[:, basis]
        try:
            xb = np.linalg.solve(sub, b)
        except np.linalg.LinAlgError:
            continue
        if np.min(xb) < -1e-9:
            continue
        x = np.zeros(n)
        x[list(basis)] = xb
        best = min(best, float(c @ x))
    return best


def test_trivial_program():
    sol = solve(trivial_program())
    assert sol.status == "optimal"
    assert sol.primal_value == pytest.approx(1.0, abs=1e-7)
    res = residuals(trivial_program(), sol)
    assert res.primal_infeas <= 1e-8
    assert res.dual_infeas <= 1e-8
    assert res.gap <= 1e-8


def test_ep1_sdrp_value():
    sol = solve(ep1_sdrp_program())
    assert sol.status == "optimal"
    assert sol.primal_value == pytest.approx(-1.0, abs=1e-6)
    assert residuals(ep1_sdrp_program(), sol).gap <= 1e-7


def test_residuals_detect_perturbation():
    prog = trivial_program()
    sol = solve(prog)
    sol.X = (sol.X[0] + np.array([[1e-3]]),)
    res = residuals(prog, sol)
    assert 1e-4 <= res.primal_infeas <= 5e-3


def test_diagonal_programs_match_lp_oracle():
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(100):
        A = np.vstack([np.ones(3), rng.normal(size=3)])
        x_feas = rng.random(3) + 0.2
        b = A @ x_feas
        c = rng.normal(size=3)
        expected = lp_vertex_minimum(c, A, b)
        sol = solve(diagonal_program(c, A, b))
        assert sol.status == "optimal"
        assert sol.primal_value == pytest.approx(expected, abs=1e-7)
        checked += 1
    assert checked == 100


def test_weak_duality_along_feasible_iterates():
    for prog in (trivial_program(), ep1_sdrp_program()):
        sol = solve(prog)
        for rec in sol.trace:
            if rec.primal_infeas <= 1e-7 and rec.dual_infeas <= 1e-7:
                assert rec.primal_value >= rec.dual_value - 1e-9 * (
                    1.0 + abs(rec.primal_value)
                )


def test_deterministic_iterates():
    a = solve(ep1_sdrp_program())
    b = solve(ep1_sdrp_program())
    assert len(a.trace) == len(b.trace)
    for ra, rb in zip(a.trace, b.trace):
        assert ra == rb  # bitwise identical records


def test_unbounded_detection():
    # min -Tr over X11 free direction: only constraint pins X22
    prog = ConicProgram(
        blocks=(2,),
        objective=(np.diag([-1.0, 0.0]),),
        constraints=(((np.diag([0.0, 1.0]),), 1.0),),
    )
    sol = solve(prog)
    assert sol.status == "unbounded"


def test_infeasible_detection():
    # X11 = 1 and X11 + 1e-3 X22 = 0.5 force X22 = -500, impossible in the cone
    e11 = np.diag([1.0, 0.0])
    both = np.diag([1.0, 1e-3])
    prog = ConicProgram(
        blocks=(2,),
        objective=(np.zeros((2, 2)),),
        constraints=(((e11,), 1.0), ((both,), 0.5)),
    )
    sol = solve(prog)
    assert sol.status == "infeasible"


def test_rejects_dependent_constraints():
    e = np.array([[1.0]])
    prog_args = dict(
        blocks=(1,),
        objective=(e,),
        constraints=(((e,), 1.0), ((2.0 * e,), 2.0)),
    )
    with pytest.raises(InvalidInput):
        solve(ConicProgram(**prog_args))


def test_dump_format_round():
    text = dump_program(ep1_sdrp_program())
    lines = text.strip().splitlines()
    assert lines[0] == "blocks: 2 1 1"
    assert any(line.startswith("-1 0 0 0 ") for line in lines)
    assert sum(line.startswith("rhs ") for line in lines) == 3
