"""Problem record for quadratic minimization over a ball with linear cuts.

The model is

    minimize    x' A x + a' x + gamma
    subject to  ||x - x0||^2 <= alpha
                ||B x||^2 + b_i' x <= beta_i,   i = 1..m,

with the optional curvature factor ``B`` shared by every inequality
(``B`` absent means plain linear cuts).  Records are immutable; the JSON
schema used by the CLI lives here too.

``alpha`` may be zero, which degenerates the ball to the single point
``x0``.  That case is useless for solving but keeps nonnegativity queries
(certificate searches with an arbitrary quadratic "ball") on one record
type.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidInput
from .linalg import as_symmetric, min_eig_multiplicity, nullspace, span_rank


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise InvalidInput(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


class LinearConstraint(NamedTuple):
    b: np.ndarray
    beta: float


@dataclass(frozen=True)
class TrustRegionProblem:
    A: np.ndarray
    a: np.ndarray
    x0: np.ndarray
    alpha: float
    constraints: tuple[LinearConstraint, ...] = ()
    gamma: float = 0.0
    curvature: Optional[np.ndarray] = None

    def __post_init__(self):
        A = as_symmetric(self.A)
        n = A.shape[0]
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", _frozen_array(self.a, (n,)))
        object.__setattr__(self, "x0", _frozen_array(self.x0, (n,)))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.alpha < 0:
            raise InvalidInput("alpha must be nonnegative")
        cons = []
        for b, beta in self.constraints:
            cons.append(LinearConstraint(_frozen_array(b, (n,)), float(beta)))
        object.__setattr__(self, "constraints", tuple(cons))
        if self.curvature is not None:
            B = np.array(self.curvature, dtype=float)
            if B.ndim != 2 or B.shape[1] != n:
                raise InvalidInput(f"curvature must have {n} columns")
            B.setflags(write=False)
            object.__setattr__(self, "curvature", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.constraints)

    def curvature_gram(self) -> np.ndarray:
        """B'B, or the zero matrix when no curvature factor is present."""
        if self.curvature is None:
            return np.zeros((self.n, self.n))
        return self.curvature.T @ self.curvature


class Evaluation(NamedTuple):
    objective: float
    ball_slack: float
    constraint_slacks: np.ndarray


def evaluate(problem: TrustRegionProblem, x) -> Evaluation:
    """Objective value plus slack of the ball and of every inequality."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise InvalidInput(f"x must have shape ({problem.n},)")
    obj = float(x @ problem.A @ x + problem.a @ x + problem.gamma)
    d = x - problem.x0
    ball = problem.alpha - float(d @ d)
    curve = 0.0
    if problem.curvature is not None:
        bx = problem.curvature @ x
        curve = float(bx @ bx)
    slacks = np.array(
        [c.beta - curve - float(c.b @ x) for c in problem.constraints]
    )
    return Evaluation(obj, ball, slacks)


def max_violation(problem: TrustRegionProblem, x) -> float:
    """Largest constraint violation at ``x`` (negative means strictly inside)."""
    ev = evaluate(problem, x)
    worst = -ev.ball_slack
    if ev.constraint_slacks.size:
        worst = max(worst, float(np.max(-ev.constraint_slacks)))
    return worst


def is_feasible(problem: TrustRegionProblem, x, tol: float = 1e-9) -> bool:
    return max_violation(problem, x) <= tol


@dataclass(frozen=True)
class DimensionReport:
    lambda_min: float
    multiplicity: int
    span_dim: int
    holds: bool
    extended: bool

    def to_json(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "multiplicity": self.multiplicity,
            "span_dim": self.span_dim,
            "holds": self.holds,
            "extended": self.extended,
        }


def check_dimension_condition(
    problem: TrustRegionProblem, tol: float = 1e-8
) -> DimensionReport:
    """Test whether mult(lambda_min(A)) >= dim span{b_i} + 1.

    With a curvature factor the multiplicity is replaced by the dimension of
    Ker(A - lambda_min I) intersected with Ker(B), computed as the numerical
    null space of the stacked matrix.
    """
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    lam_min, mult, _ = min_eig_multiplicity(problem.A, tol)
    extended = problem.curvature is not None
    if extended:
        shifted = problem.A - lam_min * np.eye(problem.n)
        stacked = np.vstack([shifted, problem.curvature])
        mult = nullspace(stacked, tol).shape[1]
    s = span_rank([c.b for c in problem.constraints], tol)
    return DimensionReport(lam_min, mult, s, mult >= s + 1, extended)


@dataclass(frozen=True)
class SlaterReport:
    holds: bool
    witness: Optional[np.ndarray]
    margin: float
    boundary: bool

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "witness": None if self.witness is None else list(self.witness),
            "margin": self.margin,
            "boundary": self.boundary,
        }


def check_slater(
    problem: TrustRegionProblem,
    iterations: int = 300,
    margin_tol: float = 1e-9,
) -> SlaterReport:
    """Search for a strictly feasible point.

    Minimizes the max-violation phi(x) = max(||x-x0||^2 - alpha, g_i(x)),
    which is convex, by subgradient descent from a handful of starts, with
    a simplex polish at small dimension.  phi below ``-margin_tol`` yields a
    witness; a best value within ``margin_tol`` of zero is reported as a
    boundary (inconclusive) case rather than a confident verdict.
    """
    n = problem.n
    root = np.sqrt(max(problem.alpha, 1e-12))
    gram2 = 2.0 * problem.curvature_gram()

    def phi(x):
        return max_violation(problem, x)

    def subgrad(x):
        ev = evaluate(problem, x)
        pieces = [(-ev.ball_slack, 2.0 * (x - problem.x0))]
        for slack, con in zip(ev.constraint_slacks, problem.constraints):
            pieces.append((-slack, gram2 @ x + con.b))
        return max(pieces, key=lambda p: p[0])[1]

    starts = [problem.x0.copy()]
    for i in range(min(n, 5)):
        e = np.zeros(n)
        e[i] = 0.3 * root
        starts.append(problem.x0 + e)
        starts.append(problem.x0 - e)

    best_x = problem.x0.copy()
    best_phi = phi(best_x)
    for x in starts:
        x = x.copy()
        val = phi(x)
        if val < best_phi:
            best_phi, best_x = val, x.copy()
        for k in range(iterations):
            g = subgrad(x)
            norm = np.linalg.norm(g)
            if norm <= 1e-14:
                break
            x = x - (0.5 * root / np.sqrt(k + 1.0)) * g / norm
            val = phi(x)
            if val < best_phi:
                best_phi, best_x = val, x.copy()
    if n <= 8:
        res = minimize(
            phi, best_x, method="Nelder-Mead",
            options={"maxiter": 400 * n, "xatol": 1e-12, "fatol": 1e-12},
        )
        if res.fun < best_phi:
            best_phi, best_x = float(res.fun), res.x

    boundary = abs(best_phi) <= margin_tol
    holds = best_phi < -margin_tol
    return SlaterReport(
        holds=holds,
        witness=best_x if holds else None,
        margin=float(best_phi),
        boundary=boundary,
    )


def problem_to_json(problem: TrustRegionProblem) -> dict:
    doc = {
        "A": [list(row) for row in problem.A],
        "a": list(problem.a),
        "gamma": problem.gamma,
        "x0": list(problem.x0),
        "alpha": problem.alpha,
        "constraints": [
            {"b": list(c.b), "beta": c.beta} for c in problem.constraints
        ],
    }
    if problem.curvature is not None:
        doc["B"] = [list(row) for row in problem.curvature]
    return doc


def problem_from_json(doc: dict) -> TrustRegionProblem:
    try:
        constraints = tuple(
            (np.asarray(c["b"], dtype=float), float(c["beta"]))
            for c in doc.get("constraints", [])
        )
        return TrustRegionProblem(
            A=np.asarray(doc["A"], dtype=float),
            a=np.asarray(doc["a"], dtype=float),
            x0=np.asarray(doc["x0"], dtype=float),
            alpha=float(doc["alpha"]),
            constraints=constraints,
            gamma=float(doc.get("gamma", 0.0)),
            curvature=None if doc.get("B") is None else np.asarray(doc["B"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed problem document: {exc}") from exc
