"""Lifted semidefinite relaxation: build, solve, extract, report tightness.

The quadratic data is lifted to (n+1) x (n+1) matrices

    M  = [[A, a/2], [a'/2, 0]]
    H0 = [[I, -x0], [-x0', ||x0||^2 - alpha]]
    H_i = [[B'B, b_i/2], [b_i'/2, -beta_i]]

so that with X = xt xt' and xt = (x', 1)' the traces <M, X>, <H0, X>,
<H_i, X> evaluate the objective and the constraint functions.  Dropping the
rank-one requirement on X gives the relaxation solved here; its optimal
value lower-bounds the problem and matches it exactly whenever the
eigenvalue-multiplicity condition of :func:`etr.model.check_dimension_condition`
holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ExtractionFailure, InvalidInput, SolverFailure
from .linalg import eig_sym, min_eig_multiplicity, nullspace
from .model import (
    DimensionReport,
    TrustRegionProblem,
    check_dimension_condition,
    evaluate,
    max_violation,
)
from .sdp import ConicProgram, ConicSolution, solve as conic_solve

FEASIBILITY_TOL = 1e-7
EXACTNESS_TOL = 1e-6


@dataclass(frozen=True)
class RelaxationMatrices:
    M: np.ndarray
    H0: np.ndarray
    H: tuple[np.ndarray, ...]


def build_matrices(problem: TrustRegionProblem) -> RelaxationMatrices:
    n = problem.n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = problem.A
    M[:n, n] = M[n, :n] = 0.5 * problem.a

    H0 = np.zeros((n + 1, n + 1))
    H0[:n, :n] = np.eye(n)
    H0[:n, n] = H0[n, :n] = -problem.x0
    H0[n, n] = float(problem.x0 @ problem.x0) - problem.alpha

    gram = problem.curvature_gram()
    hs = []
    for b, beta in problem.constraints:
        Hi = np.zeros((n + 1, n + 1))
        Hi[:n, :n] = gram
        Hi[:n, n] = Hi[n, :n] = 0.5 * b
        Hi[n, n] = -beta
        hs.append(Hi)
    return RelaxationMatrices(M=M, H0=H0, H=tuple(hs))


def build_sdrp(problem: TrustRegionProblem) -> ConicProgram:
    """Conic program for the relaxation.

    One PSD block of order n+1 plus one order-1 slack per inequality;
    <H, X> <= 0 becomes <H, X> + s = 0 and the corner entry is pinned to 1.
    """
    mats = build_matrices(problem)
    n, m = problem.n, problem.m
    blocks = tuple([n + 1] + [1] * (m + 1))

    def lifted(main, slack_index=None):
        out = [np.zeros((d, d)) for d in blocks]
        out[0] = main
        if slack_index is not None:
            out[1 + slack_index] = np.ones((1, 1))
        return tuple(out)

    corner = np.zeros((n + 1, n + 1))
    corner[n, n] = 1.0
    constraints = [(lifted(mats.H0, 0), 0.0)]
    for i, Hi in enumerate(mats.H):
        constraints.append((lifted(Hi, 1 + i), 0.0))
    constraints.append((lifted(corner), 1.0))
    return ConicProgram(
        blocks=blocks, objective=lifted(mats.M), constraints=tuple(constraints)
    )


def _kernel_directions(problem: TrustRegionProblem, tol: float = 1e-8) -> np.ndarray:
    """Basis of Ker(A - lambda_min I) ∩ Ker(B) ∩ (∩ b_i^perp)."""
    lam, _, kernel = min_eig_multiplicity(problem.A, tol)
    rows = [problem.A - lam * np.eye(problem.n)]
    if problem.curvature is not None:
        rows.append(problem.curvature)
    for b, _ in problem.constraints:
        rows.append(b.reshape(1, -1))
    return nullspace(np.vstack(rows), tol)


def _sphere_roots(problem, base, direction):
    """Both t with ||base + t*direction - x0||^2 = alpha (may be empty)."""
    d = base - problem.x0
    aa = float(direction @ direction)
    if aa <= 1e-16:
        return []
    bb = 2.0 * float(direction @ d)
    cc = float(d @ d) - problem.alpha
    disc = bb * bb - 4.0 * aa * cc
    if disc < 0.0:
        return []
    root = math.sqrt(disc)
    return [(-bb - root) / (2.0 * aa), (-bb + root) / (2.0 * aa)]


def extract_candidate(
    X: np.ndarray,
    problem: TrustRegionProblem,
    feas_tol: float = FEASIBILITY_TOL,
    gap_tol: float = EXACTNESS_TOL,
) -> np.ndarray:
    """Recover a vector minimizer candidate from a PSD solution.

    Stage 1 reads the last column of X (always feasible when X is feasible
    for the relaxation).  If its value does not reach <M, X>, stage 2 tries
    the dominant eigenvector rescaled to unit corner, and stage 3 pushes the
    best point to the sphere along directions in the minimal eigenspace that
    are orthogonal to every cut (which changes neither the cuts nor, on
    arrival, the objective for the worse).  Raises ExtractionFailure with
    the best attempt when nothing feasible emerges.
    """
    X = np.asarray(X, dtype=float)
    n = problem.n
    if X.shape != (n + 1, n + 1):
        raise InvalidInput(f"X must have order {n + 1}")
    corner = X[n, n]
    if abs(corner - 1.0) > 1e-6:
        raise InvalidInput(f"corner entry of X must be 1, got {corner:g}")

    mats = build_matrices(problem)
    target = float(np.tensordot(mats.M, X)) + problem.gamma

    def matches(x):
        return evaluate(problem, x).objective - target <= gap_tol * (1.0 + abs(target))

    candidates = [X[:n, n] / corner]
    w, v = eig_sym(X)
    top = v[:, -1] * np.sqrt(max(w[-1], 0.0))
    if abs(top[n]) > 1e-6:
        candidates.append(top[:n] / top[n])

    directions = _kernel_directions(problem)
    for base in list(candidates):
        if max_violation(problem, base) > feas_tol:
            continue
        current = base.copy()
        moved = False
        for k in range(directions.shape[1]):
            d = directions[:, k]
            options = []
            for t in _sphere_roots(problem, current, d):
                pt = current + t * d
                options.append((evaluate(problem, pt).objective, t, pt))
            if not options:
                continue
            best = min(options, key=lambda o: o[0])
            if best[0] <= evaluate(problem, current).objective + 1e-12:
                current = best[2]
                moved = True
        if moved:
            candidates.append(current)

    feasible = [c for c in candidates if max_violation(problem, c) <= feas_tol]
    for cand in feasible:
        if matches(cand):
            return cand
    if feasible:
        return min(feasible, key=lambda c: evaluate(problem, c).objective)
    best_attempt = min(candidates, key=lambda c: max_violation(problem, c))
    raise ExtractionFailure(
        "no feasible candidate within tolerance", best_attempt=best_attempt
    )


@dataclass(frozen=True)
class RelaxationResult:
    sdp_value: float
    X: np.ndarray
    candidate: Optional[np.ndarray]
    candidate_value: Optional[float]
    exact: bool
    gap: float
    dimension: DimensionReport
    multipliers: np.ndarray  # lambda_0..lambda_m recovered from the conic dual
    status: str

    def to_json(self) -> dict:
        return {
            "sdp_value": self.sdp_value,
            "candidate": None if self.candidate is None else list(self.candidate),
            "candidate_value": self.candidate_value,
            "exact": self.exact,
            "gap": self.gap,
            "dimension_condition": self.dimension.to_json(),
        }


def solve_relaxation(
    problem: TrustRegionProblem,
    tol: float = 1e-8,
    eig_tol: float = 1e-8,
) -> RelaxationResult:
    prog = build_sdrp(problem)
    sol = conic_solve(prog, tol=tol)
    if sol.status != "optimal":
        raise SolverFailure(
            f"relaxation solve ended with status {sol.status}: {sol.message}"
        )
    X = sol.X[0]
    corner = X[problem.n, problem.n]
    if abs(corner - 1.0) > 1e-6:
        raise SolverFailure(f"corner of the lifted solution drifted to {corner:g}")
    X = X / corner
    sdp_value = sol.primal_value / corner + problem.gamma
    dimension = check_dimension_condition(problem, eig_tol)
    # multipliers: slack-paired constraints enter the dual as -y_j >= 0
    lam = np.maximum(0.0, -sol.y[: problem.m + 1])

    candidate = None
    candidate_value = None
    exact = False
    gap = float("nan")
    try:
        candidate = extract_candidate(X, problem)
        candidate_value = evaluate(problem, candidate).objective
        gap = candidate_value - sdp_value
        exact = (
            max_violation(problem, candidate) <= FEASIBILITY_TOL
            and gap <= EXACTNESS_TOL * (1.0 + abs(sdp_value))
        )
    except ExtractionFailure as failure:
        if failure.best_attempt is not None:
            candidate = np.asarray(failure.best_attempt, dtype=float)
            candidate_value = evaluate(problem, candidate).objective
            gap = candidate_value - sdp_value
    return RelaxationResult(
        sdp_value=sdp_value,
        X=X,
        candidate=candidate,
        candidate_value=candidate_value,
        exact=exact,
        gap=gap,
        dimension=dimension,
        multipliers=lam,
        status=sol.status,
    )


def rank_one_reformulate(problem: TrustRegionProblem) -> TrustRegionProblem:
    """Split a squared-linear cut (b'x)^2 <= r into the pair +-b'x <= sqrt(r).

    Expects the cut in curvature form: a single row factor B = b' with a
    zero linear part, so the one constraint reads ||Bx||^2 <= r.
    """
    if problem.curvature is None or problem.curvature.shape[0] != 1:
        raise InvalidInput("expected a single rank-one curvature row")
    if problem.m != 1:
        raise InvalidInput("expected exactly one constraint")
    con = problem.constraints[0]
    if np.any(con.b != 0.0):
        raise InvalidInput("the squared cut must have a zero linear part")
    r = con.beta
    if r < 0.0:
        raise InvalidInput("the bound on (b'x)^2 must be nonnegative")
    b = problem.curvature[0]
    root = math.sqrt(r)
    return TrustRegionProblem(
        A=problem.A,
        a=problem.a,
        x0=problem.x0,
        alpha=problem.alpha,
        constraints=[(b, root), (-b, root)],
        gamma=problem.gamma,
    )
