"""Shared fixture problems and small generators for the test suite."""

import numpy as np

from etr.model import TrustRegionProblem


def ep_problem():
    """3-d instance whose only feasible point is the origin."""
    return TrustRegionProblem(
        A=-np.eye(3),
        a=[3.0, 2.0, 2.0],
        x0=[1.0, 0.0, 0.0],
        alpha=1.0,
        constraints=[([1.0, 0.0, 0.0], 0.0), ([1.0, 1.0, 1.0], 0.0)],
    )


def ep1_problem():
    """1-d instance: minimize x - x^2 on [0, 1]."""
    return TrustRegionProblem(
        A=[[-1.0]], a=[1.0], x0=[0.0], alpha=1.0, constraints=[([-1.0], 0.0)]
    )


def gp_problem():
    """3-d instance with a quadratic-curvature cut; optimal value -1."""
    B = np.zeros((3, 3))
    B[0, 0] = 1.0
    return TrustRegionProblem(
        A=-np.eye(3),
        a=[-2.0, 0.0, 0.0],
        x0=[-0.5, 0.0, 0.0],
        alpha=1.25,
        constraints=[([1.0, 0.0, 0.0], 0.0)],
        curvature=B,
    )


def degenerate_line_problem():
    """1-d nonnegativity query data: objective x over the point ball {0}."""
    return TrustRegionProblem(A=[[0.0]], a=[1.0], x0=[0.0], alpha=0.0)


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def random_dimension_condition_problem(rng, n, m, extra_mult=0):
    """Instance with mult(lambda_min) >= span{b_i} + 1 and a Slater point.

    The b_i are generic, so their span has dimension m; the smallest
    eigenvalue is planted with multiplicity m + 1 + extra_mult and the
    cuts pass strictly through x0.
    """
    mult = min(n, m + 1 + extra_mult)
    lam_min = -(0.5 + rng.random())
    rest = lam_min + 0.4 + rng.random(n - mult) * 2.0
    eigs = np.concatenate([np.full(mult, lam_min), rest])
    q = random_orthogonal(rng, n)
    A = q @ np.diag(eigs) @ q.T
    x0 = rng.normal(size=n) * 0.3
    alpha = 0.5 + rng.random()
    constraints = []
    for _ in range(m):
        b = rng.normal(size=n)
        constraints.append((b, float(b @ x0) + 0.2 + 0.5 * rng.random()))
    return TrustRegionProblem(
        A=A, a=rng.normal(size=n), x0=x0, alpha=alpha, constraints=constraints
    )
