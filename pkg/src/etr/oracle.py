"""Brute-force ground truth at desk scale.

``brute_force_min`` minimizes the quadratic model over its feasible set by
lattice search (n <= 4) or seeded multistart, both followed by a polish
stage: projected gradient descent plus, for problems without a curvature
factor, exact minimization over every face of the feasible set (the face
restrictions are quadratics over affine subspaces or spheres, which are
solved by eigendecomposition and a secular-equation root find).  The polish
makes the reported value trustworthy at the 1e-4 tolerances the validation
suite uses, which bare descent from a lattice cannot certify.

``membership_in_U`` and ``convexity_probe`` decide membership in the lifted
image set {(f(x), g_0(x), ..., g_m(x))} + nonnegative orthant by minimizing
the max violation over x: any point with nonpositive max violation is a
certificate of membership, so "member" answers are sound; "not a member"
answers within 1e-3 of the boundary are flagged indeterminate instead of
being trusted, which keeps lattice resolution from manufacturing
counterexamples.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import InfeasibleProblem, InvalidInput
from .linalg import nullspace
from .model import TrustRegionProblem, evaluate, max_violation

_GRID_MAX_N = 4
_GRID_DEFAULT_POINTS_PER_AXIS = 201
_GRID_DEFAULT_BUDGET_CAP = 2_000_000
_MULTISTART_COUNT = 64
_POLISH_STEPS = 200
_BOUNDARY_BAND = 1e-3
# the image set is closed, so points on its boundary are members; margins
# this close to zero are treated as boundary witnesses rather than misses
_MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class OracleResult:
    value: float
    argmin: np.ndarray
    evaluations: int
    method: str  # grid | multistart


# ---------------------------------------------------------------- projections


def _project_ball(x, center, alpha):
    d = x - center
    nrm = float(np.linalg.norm(d))
    root = math.sqrt(max(alpha, 0.0))
    if nrm <= root or nrm == 0.0:
        return x
    return center + d * (root / nrm)


def _project_halfspace(x, b, beta):
    viol = float(b @ x) - beta
    if viol <= 0.0:
        return x
    return x - viol * b / float(b @ b)


def _project_quadratic_cut(x, gram, b, beta):
    """Metric projection onto {z : z'Gz + b'z <= beta} with G psd."""
    if float(x @ gram @ x + b @ x) <= beta:
        return x

    def point(mu):
        mat = np.eye(len(x)) + 2.0 * mu * gram
        return np.linalg.solve(mat, x - mu * b)

    def g(mu):
        z = point(mu)
        return float(z @ gram @ z + b @ z) - beta

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if g(hi) <= 0.0:
            break
        hi *= 2.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return point(hi)


def _project_feasible(problem: TrustRegionProblem, x, sweeps: int = 40):
    """Dykstra's scheme over ball and cut projections."""
    gram = problem.curvature_gram()
    curved = problem.curvature is not None
    pieces = [lambda z: _project_ball(z, problem.x0, problem.alpha)]
    for b, beta in problem.constraints:
        if curved:
            pieces.append(
                lambda z, b=b, beta=beta: _project_quadratic_cut(z, gram, b, beta)
            )
        else:
            pieces.append(lambda z, b=b, beta=beta: _project_halfspace(z, b, beta))
    increments = [np.zeros_like(x) for _ in pieces]
    z = x.astype(float).copy()
    for _ in range(sweeps):
        for i, proj in enumerate(pieces):
            y = proj(z + increments[i])
            increments[i] = z + increments[i] - y
            z = y
        if max_violation(problem, z) <= 1e-12:
            break
    return z


def _projected_gradient(problem: TrustRegionProblem, x, steps=_POLISH_STEPS):
    lip = 2.0 * float(np.linalg.norm(problem.A, 2)) + 1e-6
    step = 1.0 / lip
    x = _project_feasible(problem, np.asarray(x, dtype=float))
    best = x
    best_val = evaluate(problem, x).objective
    for _ in range(steps):
        x = _project_feasible(problem, x - step * (2.0 * problem.A @ x + problem.a))
        val = evaluate(problem, x).objective
        if val < best_val:
            best_val, best = val, x
    return best


# ---------------------------------------------------- exact face minimization


def _sphere_quadratic_min(H, c, radius):
    """Global minimizer of w'Hw + c'w over the sphere ||w|| = radius."""
    if radius <= 0.0:
        return np.zeros(len(c))
    w_eigs, V = np.linalg.eigh(0.5 * (H + H.T))
    ct = V.T @ c
    lam1 = float(w_eigs[0])
    scale = 1.0 + float(np.max(np.abs(w_eigs)))
    cluster = w_eigs - lam1 <= 1e-10 * scale
    nu0 = -lam1
    r2 = radius * radius

    def norm2(nu):
        den = 2.0 * (w_eigs + nu)
        return float(np.sum((ct / den) ** 2))

    def assemble(nu):
        w = V @ (-ct / (2.0 * (w_eigs + nu)))
        nrm = float(np.linalg.norm(w))
        return w * (radius / nrm) if nrm > 0 else w

    hard = bool(np.all(np.abs(ct[cluster]) <= 1e-11 * (1.0 + np.linalg.norm(ct))))
    if hard:
        coef = np.zeros_like(ct)
        free = ~cluster
        coef[free] = -ct[free] / (2.0 * (w_eigs[free] + nu0))
        w0 = V @ coef
        n0 = float(w0 @ w0)
        if n0 <= r2 * (1.0 + 1e-12):
            tau = math.sqrt(max(r2 - n0, 0.0))
            v1 = V[:, 0]
            options = [w0 + tau * v1, w0 - tau * v1]
            return min(options, key=lambda w: float(w @ H @ w + c @ w))
    lo = nu0 + max(1e-14 * scale, 1e-300)
    hi = nu0 + scale
    for _ in range(400):
        if norm2(hi) <= r2:
            break
        hi = nu0 + 2.0 * (hi - nu0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm2(mid) > r2:
            lo = mid
        else:
            hi = mid
    return assemble(0.5 * (lo + hi))


def _face_candidates(problem: TrustRegionProblem):
    """Exact minimizers over every active-set face (no curvature factor)."""
    n, m = problem.n, problem.m
    rows = np.array([c.b for c in problem.constraints]).reshape(m, n)
    rhs = np.array([c.beta for c in problem.constraints])
    out = []
    for mask in range(2 ** m):
        active = [i for i in range(m) if mask >> i & 1]
        if active:
            Ba, ba = rows[active], rhs[active]
            xp, *_ = np.linalg.lstsq(Ba, ba, rcond=None)
            if np.linalg.norm(Ba @ xp - ba) > 1e-9 * (1.0 + np.linalg.norm(ba)):
                continue
            Z = nullspace(Ba)
        else:
            xp, Z = np.zeros(n), np.eye(n)
        d = Z.shape[1]
        if d == 0:
            out.append(xp)
            continue
        H = Z.T @ problem.A @ Z
        g = Z.T @ (2.0 * problem.A @ xp + problem.a)
        eigs = np.linalg.eigvalsh(H)
        if eigs[0] >= -1e-10 * (1.0 + float(np.max(np.abs(eigs)))):
            z, *_ = np.linalg.lstsq(2.0 * H, -g, rcond=None)
            out.append(xp + Z @ z)
        center = Z.T @ (problem.x0 - xp)
        offset = (problem.x0 - xp) - Z @ center
        residual_alpha = problem.alpha - float(offset @ offset)
        if residual_alpha < -1e-12:
            continue
        if residual_alpha <= 0.0:
            out.append(xp + Z @ center)
            continue
        w = _sphere_quadratic_min(
            H, g + 2.0 * H @ center, math.sqrt(residual_alpha)
        )
        out.append(xp + Z @ (center + w))
    return out


def _nudge_feasible(problem, x, tol=1e-9):
    """Pull a boundary point the last few ulps inside the ball if needed."""
    ev = evaluate(problem, x)
    if ev.ball_slack < 0.0 and ev.ball_slack > -1e-7:
        d = x - problem.x0
        nrm = float(np.linalg.norm(d))
        if nrm > 0:
            x = problem.x0 + d * (math.sqrt(problem.alpha) / nrm)
    return x if max_violation(problem, x) <= tol else None


def _points_per_axis(n, budget):
    if budget is None:
        budget = min(
            _GRID_DEFAULT_POINTS_PER_AXIS ** n, _GRID_DEFAULT_BUDGET_CAP
        )
    per_axis = int(budget ** (1.0 / n))
    per_axis = min(per_axis, _GRID_DEFAULT_POINTS_PER_AXIS)
    if per_axis % 2 == 0:
        per_axis -= 1  # odd counts keep the ball center on the lattice
    return max(per_axis, 3)


def _grid_feasible_points(problem, per_axis, chunk=200_000):
    n = problem.n
    root = math.sqrt(problem.alpha)
    axes = [
        np.linspace(problem.x0[i] - root, problem.x0[i] + root, per_axis)
        for i in range(n)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    gram = problem.curvature_gram()
    best = []
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        d = block - problem.x0
        feas = np.einsum("ij,ij->i", d, d) <= problem.alpha + 1e-9
        if problem.m:
            curve = np.einsum("ij,jk,ik->i", block, gram, block)
            for b, beta in problem.constraints:
                feas &= curve + block @ b <= beta + 1e-9
        sel = block[feas]
        if sel.size:
            vals = (
                np.einsum("ij,jk,ik->i", sel, problem.A, sel)
                + sel @ problem.a
                + problem.gamma
            )
            order = np.argsort(vals, kind="stable")[:8]
            best.extend((float(vals[i]), sel[i]) for i in order)
    best.sort(key=lambda t: t[0])
    return [x for _, x in best[:8]], pts.shape[0]


def _multistart_points(problem):
    n = problem.n
    root = math.sqrt(max(problem.alpha, 1e-12))
    sampler = qmc.Halton(d=n, scramble=False)
    unit = sampler.random(_MULTISTART_COUNT)
    return problem.x0 + (2.0 * unit - 1.0) * root


def brute_force_min(
    problem: TrustRegionProblem,
    budget: Optional[int] = None,
    method: Optional[str] = None,
) -> OracleResult:
    """Ground-truth minimization; see the module docstring for the scheme.

    ``method`` is "grid" (n <= 4), "multistart", or None for automatic
    choice.  Raises InfeasibleProblem when no feasible point can be found.
    """
    if method is None:
        method = "grid" if problem.n <= _GRID_MAX_N else "multistart"
    if method not in ("grid", "multistart"):
        raise InvalidInput(f"unknown oracle method {method!r}")
    if method == "grid" and problem.n > _GRID_MAX_N:
        raise InvalidInput("grid mode supports n <= 4 only")

    evaluations = 0
    if method == "grid":
        per_axis = _points_per_axis(problem.n, budget)
        starts, scanned = _grid_feasible_points(problem, per_axis)
        evaluations += scanned
    else:
        starts = list(_multistart_points(problem))
        evaluations += len(starts)

    candidates = []
    for x in starts:
        candidates.append(_projected_gradient(problem, x))
        evaluations += _POLISH_STEPS
    if problem.curvature is None:
        candidates.extend(_face_candidates(problem))

    feasible = []
    for x in candidates:
        fixed = _nudge_feasible(problem, x)
        if fixed is not None:
            feasible.append(fixed)
    if not feasible:
        from .model import check_slater  # late import to avoid a cycle at load

        rescue = check_slater(problem)
        if rescue.margin <= 1e-9:
            seed = rescue.witness
            if seed is None:
                seed = _project_feasible(problem, problem.x0.copy())
            fixed = _nudge_feasible(problem, _projected_gradient(problem, seed))
            if fixed is not None:
                feasible.append(fixed)
    if not feasible:
        raise InfeasibleProblem("no feasible point found at oracle resolution")

    scored = [(evaluate(problem, x).objective, tuple(x), x) for x in feasible]
    scored.sort(key=lambda t: (t[0], t[1]))  # lexicographic tie-break
    value, _, argmin = scored[0]
    return OracleResult(
        value=float(value),
        argmin=argmin,
        evaluations=evaluations,
        method=method,
    )


# ------------------------------------------------------- lifted image queries


class MembershipResult(NamedTuple):
    member: bool
    margin: float
    indeterminate: bool

    def __bool__(self) -> bool:  # noqa: D105 - truthiness is membership
        return self.member


class _ImageGrid:
    """Precomputed images of a lattice, reused across membership queries."""

    def __init__(self, problem: TrustRegionProblem, per_axis: int = 41, pad: float = 1.3):
        if problem.n > 3:
            raise InvalidInput("membership queries support n <= 3 only")
        self.problem = problem
        root = pad * math.sqrt(max(problem.alpha, 0.25))
        axes = [
            np.linspace(problem.x0[i] - root, problem.x0[i] + root, per_axis)
            for i in range(problem.n)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        pts = self.points
        gram = problem.curvature_gram()
        self.f = (
            np.einsum("ij,jk,ik->i", pts, problem.A, pts)
            + pts @ problem.a
            + problem.gamma
        )
        d = pts - problem.x0
        self.g0 = np.einsum("ij,ij->i", d, d) - problem.alpha
        curve = np.einsum("ij,jk,ik->i", pts, gram, pts)
        self.g = [curve + pts @ b - beta for b, beta in problem.constraints]

    def margin(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.problem.m + 2,):
            raise InvalidInput(
                f"point must have length {self.problem.m + 2}"
            )
        worst = np.maximum(self.f - point[0], self.g0 - point[1])
        for i, gi in enumerate(self.g):
            worst = np.maximum(worst, gi - point[2 + i])
        idx = int(np.argmin(worst))
        grid_margin = float(worst[idx])
        if grid_margin <= 0.0:
            return grid_margin  # the lattice point itself certifies membership

        problem = self.problem

        def max_violation_at(x):
            ev = evaluate(problem, x)
            worst_local = max(ev.objective - point[0], -ev.ball_slack - point[1])
            for i, s in enumerate(ev.constraint_slacks):
                worst_local = max(worst_local, -s - point[2 + i])
            return worst_local

        res = minimize(
            max_violation_at,
            self.points[idx],
            method="Nelder-Mead",
            options={"maxiter": 300 * problem.n, "xatol": 1e-10, "fatol": 1e-10},
        )
        return min(grid_margin, float(res.fun))


def membership_in_U(point, problem: TrustRegionProblem) -> MembershipResult:
    """Decide whether ``point`` lies in the lifted image set.

    Sound on "member" (a witness x is found); "not a member" within the
    1e-3 boundary band is marked indeterminate.
    """
    grid = _ImageGrid(problem)
    margin = grid.margin(point)
    member = margin <= _MEMBER_TOL
    return MembershipResult(
        member=member,
        margin=margin,
        indeterminate=(not member) and margin <= _BOUNDARY_BAND,
    )


class ProbeViolation(NamedTuple):
    midpoint: np.ndarray
    margin: float
    first: np.ndarray
    second: np.ndarray


def _image(problem, x):
    ev = evaluate(problem, x)
    return np.concatenate(
        [[ev.objective], [-ev.ball_slack], -ev.constraint_slacks]
    )


def convexity_probe(
    problem: TrustRegionProblem,
    num_midpoints: int = 1000,
    seed: int = 0,
) -> list[ProbeViolation]:
    """Midpoint test of convexity of the lifted image set.

    Pairs of member points are drawn two ways: deterministic zero-offset
    images over a coarse anchor lattice (so the classic witnesses are always
    covered), then seeded random images with random nonnegative offsets.
    Every midpoint failing the membership test beyond the indeterminate band
    is returned; an empty list is consistent with convexity.
    """
    rng = np.random.default_rng(seed)
    grid = _ImageGrid(problem)
    root = math.sqrt(max(problem.alpha, 0.25))

    anchors = [problem.x0.copy()]
    for i in range(problem.n):
        for scale in (1.0, 0.5):
            e = np.zeros(problem.n)
            e[i] = scale * root
            anchors.append(problem.x0 + e)
            anchors.append(problem.x0 - e)
    pairs = [
        (_image(problem, u), _image(problem, v))
        for u, v in itertools.combinations(anchors, 2)
    ]
    pairs = pairs[: max(num_midpoints // 2, 1)]
    while len(pairs) < num_midpoints:
        x1 = problem.x0 + rng.uniform(-root, root, size=problem.n)
        x2 = problem.x0 + rng.uniform(-root, root, size=problem.n)
        off1 = rng.uniform(0.0, 0.5, size=problem.m + 2)
        off2 = rng.uniform(0.0, 0.5, size=problem.m + 2)
        pairs.append((_image(problem, x1) + off1, _image(problem, x2) + off2))

    violations = []
    for z1, z2 in pairs:
        mid = 0.5 * (z1 + z2)
        margin = grid.margin(mid)
        if margin > _BOUNDARY_BAND:
            violations.append(ProbeViolation(mid, margin, z1, z2))
    return violations
