"""Global-optimality certificates, Lagrangian duality, multiplier searches.

A certificate is a nonnegative multiplier vector (lam_0 for the ball,
lam_1..lam_m for the cuts).  ``verify_global_optimality`` checks the three
conditions that make a feasible point globally optimal:

    stationarity     grad L(x*, lam) = 0,
    complementarity  lam_0 * g_0(x*) = 0 and lam_i * g_i(x*) = 0,
    curvature        A + lam_0 I + (sum lam_i) B'B  PSD,

where L is the Lagrangian of the model.  The multiplier searches pose
"some nonnegative combination makes the lifted matrix PSD" as conic
programs for :mod:`etr.sdp` and post-validate the returned multipliers by a
direct eigenvalue check, so a returned certificate is always sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificateSearchError, InvalidInput, SolverFailure
from .linalg import eig_sym
from .model import (
    TrustRegionProblem,
    check_dimension_condition,
    check_slater,
    evaluate,
    max_violation,
)
from .oracle import brute_force_min
from .relaxation import build_matrices, solve_relaxation
from .sdp import ConicProgram, solve as conic_solve

_MULTIPLIER_CAP = 1e6
_PSD_TOL = 1e-8


@dataclass(frozen=True)
class OptimalityCertificate:
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).copy()
        if lam.ndim != 1:
            raise InvalidInput("multipliers must form a vector")
        if np.min(lam, initial=0.0) < -1e-12:
            raise InvalidInput("multipliers must be nonnegative")
        lam[lam < 0.0] = 0.0
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def to_json(self) -> dict:
        return {"lambda": list(self.lam)}


@dataclass(frozen=True)
class CertificateVerdict:
    kkt_residual: float
    complementarity_residual: float
    second_order_min_eig: float
    valid: bool

    def to_json(self) -> dict:
        return {
            "kkt_residual": self.kkt_residual,
            "complementarity_residual": self.complementarity_residual,
            "second_order_min_eig": self.second_order_min_eig,
            "valid": self.valid,
        }


def _lagrangian_pieces(problem: TrustRegionProblem, lam: np.ndarray):
    """Quadratic form Q(lam), linear part l(lam) and constant of L."""
    if lam.shape != (problem.m + 1,):
        raise InvalidInput(f"expected {problem.m + 1} multipliers")
    gram = problem.curvature_gram()
    q = problem.A + lam[0] * np.eye(problem.n) + float(np.sum(lam[1:])) * gram
    lin = problem.a - 2.0 * lam[0] * problem.x0
    const = problem.gamma + lam[0] * (
        float(problem.x0 @ problem.x0) - problem.alpha
    )
    for li, (b, beta) in zip(lam[1:], problem.constraints):
        lin = lin + li * b
        const -= li * beta
    return q, lin, const


def verify_global_optimality(
    problem: TrustRegionProblem,
    x_star,
    certificate: OptimalityCertificate,
    kkt_tol: float = 1e-6,
    comp_tol: float = 1e-6,
    psd_tol: float = _PSD_TOL,
    feas_tol: float = 1e-7,
) -> CertificateVerdict:
    x_star = np.asarray(x_star, dtype=float)
    worst = max_violation(problem, x_star)
    if worst > feas_tol:
        raise InvalidInput(
            f"x* is infeasible: max constraint violation {worst:g}"
        )
    lam = certificate.lam
    q, lin, _ = _lagrangian_pieces(problem, lam)
    kkt = float(np.linalg.norm(2.0 * q @ x_star + lin))

    ev = evaluate(problem, x_star)
    comp = abs(lam[0] * ev.ball_slack)
    for li, slack in zip(lam[1:], ev.constraint_slacks):
        comp = max(comp, abs(li * slack))

    min_eig = float(eig_sym(q).eigenvalues[0])
    valid = kkt <= kkt_tol and comp <= comp_tol and min_eig >= -psd_tol
    return CertificateVerdict(
        kkt_residual=kkt,
        complementarity_residual=float(comp),
        second_order_min_eig=min_eig,
        valid=valid,
    )


def dual_function(problem: TrustRegionProblem, lam) -> float:
    """inf_x L(x, lam) in closed form; -inf when the Lagrangian is unbounded."""
    lam = np.asarray(lam, dtype=float)
    if np.min(lam, initial=0.0) < 0.0:
        raise InvalidInput("multipliers must be nonnegative")
    q, lin, const = _lagrangian_pieces(problem, lam)
    w, v = eig_sym(q)
    scale = 1.0 + float(np.max(np.abs(w)))
    if w[0] < -1e-10 * scale:
        return -math.inf
    # pseudo-inverse with relative threshold; l must lie in range(Q)
    keep = w > 1e-10 * scale
    coeffs = v.T @ lin
    resid = float(np.linalg.norm(coeffs[~keep]))
    if resid > 1e-8 * (1.0 + float(np.linalg.norm(lin))):
        return -math.inf
    return const - 0.25 * float(np.sum(coeffs[keep] ** 2 / w[keep]))


def _coordinate_ascent(problem, lam, rounds=50, cap=_MULTIPLIER_CAP):
    """Golden-section ascent of the (concave) dual, one coordinate at a time."""
    lam = np.clip(np.asarray(lam, dtype=float), 0.0, cap)
    best = dual_function(problem, lam)
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(rounds):
        improved = False
        for i in range(lam.size):
            radius = max(1.0, abs(lam[i]))
            lo = max(0.0, lam[i] - radius)
            hi = min(cap, lam[i] + radius)
            a, b = lo, hi
            c = b - phi * (b - a)
            d = a + phi * (b - a)
            for _ in range(40):
                fc = dual_function(problem, _with(lam, i, c))
                fd = dual_function(problem, _with(lam, i, d))
                if fc >= fd:
                    b, d = d, c
                    c = b - phi * (b - a)
                else:
                    a, c = c, d
                    d = a + phi * (b - a)
            candidate = 0.5 * (a + b)
            val = dual_function(problem, _with(lam, i, candidate))
            if val > best + 1e-14:
                lam = _with(lam, i, candidate)
                best = val
                improved = True
        if not improved:
            break
    return lam, best


def _with(vec, i, value):
    out = vec.copy()
    out[i] = value
    return out


@dataclass(frozen=True)
class StrongDualityReport:
    primal: float
    dual: float
    gap: float
    attained: bool
    multipliers: np.ndarray
    oracle_value: Optional[float]

    def to_json(self) -> dict:
        return {
            "primal": self.primal,
            "dual": self.dual,
            "gap": self.gap,
            "attained": self.attained,
            "multipliers": list(self.multipliers),
            "oracle_value": self.oracle_value,
        }


def strong_duality_report(
    problem: TrustRegionProblem, tol: float = 1e-8
) -> StrongDualityReport:
    """Primal value, refined Lagrangian dual value, and attainment verdict.

    The dual search seeds coordinate ascent with the conic multipliers,
    clipped into [0, 1e6]: a maximizing sequence escaping every bounded box
    is the numerical signature of an unattained supremum, so values reached
    only near the cap do not count as attainment.
    """
    result = solve_relaxation(problem, tol=tol)
    primal = result.sdp_value
    oracle_value = None
    if problem.n <= 4:
        try:
            oracle_value = brute_force_min(problem).value
        except Exception:
            oracle_value = None
    lam, dual = _coordinate_ascent(problem, result.multipliers)
    gap = primal - dual
    attained = gap <= 1e-6 * (1.0 + abs(primal)) and bool(
        np.max(lam, initial=0.0) < 0.99 * _MULTIPLIER_CAP
    )
    return StrongDualityReport(
        primal=primal,
        dual=dual,
        gap=gap,
        attained=attained,
        multipliers=lam,
        oracle_value=oracle_value,
    )


# ------------------------------------------------- nonnegativity certificates


def _lifted_objective(problem: TrustRegionProblem) -> np.ndarray:
    mats = build_matrices(problem)
    lifted = mats.M.copy()
    lifted[problem.n, problem.n] += problem.gamma
    return lifted


def _psd_certificate_value(problem, lam, epsilon=0.0) -> float:
    mats = build_matrices(problem)
    f = _lifted_objective(problem) + lam[0] * mats.H0
    for li, hi in zip(lam[1:], mats.H):
        f = f + li * hi
    f[problem.n, problem.n] += epsilon
    return float(eig_sym(f).eigenvalues[0])


def _margin_program(problem, epsilon):
    """max t  s.t.  lifted(f + eps) + sum lam_i H_i >= t I,  lam >= 0, t <= 1."""
    mats = build_matrices(problem)
    n, m = problem.n, problem.m
    blocks = tuple([n + 1] + [1] * (m + 1) + [1])
    hs = [mats.H0, *mats.H]

    def lifted(main, order1=None):
        out = [np.zeros((d, d)) for d in blocks]
        out[0] = main
        if order1 is not None:
            idx, val = order1
            out[idx] = np.array([[val]])
        return tuple(out)

    cmain = _lifted_objective(problem)
    cmain[n, n] += epsilon
    objective = list(lifted(cmain))
    objective[-1] = np.array([[1.0]])  # slack block for t <= 1
    constraints = []
    for i, hi in enumerate(hs):
        constraints.append((lifted(-hi, (1 + i, -1.0)), 0.0))
    constraints.append((lifted(np.eye(n + 1), (m + 2, 1.0)), 1.0))
    return ConicProgram(
        blocks=blocks, objective=tuple(objective), constraints=tuple(constraints)
    )


def _minimal_multiplier_program(problem, epsilon):
    """min sum lam  s.t.  lifted(f + eps) + sum lam_i H_i >= 0,  lam >= 0."""
    mats = build_matrices(problem)
    n, m = problem.n, problem.m
    blocks = tuple([n + 1] + [1] * (m + 1))
    hs = [mats.H0, *mats.H]

    def lifted(main, order1=None):
        out = [np.zeros((d, d)) for d in blocks]
        out[0] = main
        if order1 is not None:
            idx, val = order1
            out[idx] = np.array([[val]])
        return tuple(out)

    cmain = _lifted_objective(problem)
    cmain[n, n] += epsilon
    constraints = []
    for i, hi in enumerate(hs):
        constraints.append((lifted(-hi, (1 + i, -1.0)), -1.0))
    return ConicProgram(
        blocks=blocks, objective=lifted(cmain), constraints=tuple(constraints)
    )


def _search_multipliers(problem, epsilon, psd_tol=_PSD_TOL):
    """Return a validated multiplier vector or None."""
    margin = conic_solve(_margin_program(problem, epsilon))
    lam_margin = np.maximum(0.0, margin.y[: problem.m + 1])
    candidates = []
    if _psd_certificate_value(problem, lam_margin, epsilon) >= -psd_tol:
        candidates.append(lam_margin)
        polish = conic_solve(_minimal_multiplier_program(problem, epsilon))
        if polish.status == "optimal":
            lam_min = np.maximum(0.0, polish.y)
            lam_min[lam_min <= 1e-9 * (1.0 + np.max(lam_min))] = 0.0
            if _psd_certificate_value(problem, lam_min, epsilon) >= -psd_tol:
                candidates.insert(0, lam_min)
    if not candidates:
        return None
    return candidates[0]


def slemma_certificate(
    problem: TrustRegionProblem, psd_tol: float = _PSD_TOL
) -> Optional[OptimalityCertificate]:
    """Nonnegative multipliers making the lifted aggregate PSD, if any exist.

    A present certificate proves f >= 0 on the feasible set unconditionally;
    absence implies nonnegativity fails only under the strict-feasibility
    and eigenvalue-multiplicity hypotheses (which callers check via
    :func:`etr.model.check_slater` and
    :func:`etr.model.check_dimension_condition`).
    """
    lam = _search_multipliers(problem, 0.0, psd_tol)
    if lam is None:
        return None
    return OptimalityCertificate(lam)


def asymptotic_certificate(
    problem: TrustRegionProblem,
    epsilon: float,
    psd_tol: float = _PSD_TOL,
) -> OptimalityCertificate:
    """Multipliers certifying f + epsilon >= 0 over the feasible set.

    The multipliers are taken as small as the conic solve allows, so the
    returned vector tracks the minimal certificate as epsilon shrinks.
    Raises CertificateSearchError carrying the smallest workable slack
    (found by doubling and bisection) when the requested one is infeasible.
    """
    if epsilon <= 0.0:
        raise InvalidInput("epsilon must be positive")
    lam = _search_multipliers(problem, epsilon, psd_tol)
    if lam is not None:
        return OptimalityCertificate(lam)

    hi = epsilon
    for _ in range(40):
        hi *= 2.0
        if _search_multipliers(problem, hi, psd_tol) is not None:
            break
    else:
        raise CertificateSearchError(
            f"no certificate found for any slack up to {hi:g}",
            feasible_epsilon=None,
        )
    lo = epsilon
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if _search_multipliers(problem, mid, psd_tol) is not None:
            hi = mid
        else:
            lo = mid
    raise CertificateSearchError(
        f"no certificate at slack {epsilon:g}; smallest feasible slack found "
        f"is {hi:g}",
        feasible_epsilon=hi,
    )


def recover_certificate(
    problem: TrustRegionProblem,
    x_star,
    seed_multipliers,
    active_tol: float = 1e-6,
) -> OptimalityCertificate:
    """Refine conic dual multipliers into a stationarity-exact certificate.

    The conic multipliers identify which constraints are active; the exact
    values are then re-solved from the stationarity equations restricted to
    the active columns (a tiny nonnegative least-squares polish), which
    strips the interior-point smearing off the certificate.
    """
    x_star = np.asarray(x_star, dtype=float)
    seed = np.maximum(0.0, np.asarray(seed_multipliers, dtype=float))
    ev = evaluate(problem, x_star)
    slacks = np.concatenate([[ev.ball_slack], ev.constraint_slacks])
    scale = 1.0 + float(np.linalg.norm(x_star))
    active = [
        i
        for i in range(problem.m + 1)
        if slacks[i] <= active_tol * scale or seed[i] > 1e-5
    ]
    if not active:
        return OptimalityCertificate(np.zeros(problem.m + 1))

    gram = problem.curvature_gram()
    columns = []
    for i in active:
        if i == 0:
            columns.append(2.0 * (x_star - problem.x0))
        else:
            b = problem.constraints[i - 1].b
            columns.append(2.0 * gram @ x_star + b)
    mat = np.stack(columns, axis=1)
    rhs = -(2.0 * problem.A @ x_star + problem.a)
    coef, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    lam = np.zeros(problem.m + 1)
    for i, c in zip(active, coef):
        lam[i] = max(0.0, float(c))
    return OptimalityCertificate(lam)
