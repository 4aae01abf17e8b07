"""Robust least squares and robust SOCP under norm-plus-polyhedral uncertainty.

An uncertainty set collects matrices (A0, a0) + Delta where Delta ranges
over a Frobenius ball of radius rho centered at Delta_bar, intersected with
polyhedral cuts (w_j)' vec(Delta) <= beta_j.  Robust feasibility of
"worst-case residual of (A x - a) below a bound" over such a set is an
eigenvalue-multiplicity-friendly trust-region problem in u = vec(Delta)
(the quadratic form is -(xt xt' kron I_k), so its bottom eigenvalue has
multiplicity k), which is what makes the single linear-matrix-inequality
reformulation built here tight whenever k >= s + 1 and the set has an
interior point.

Conventions, kept local to this module: the homogenizing vector is
xt = (x', -1)' (the relaxation module uses trailing +1 instead); vec is
column-major, matching :func:`etr.linalg.vec`, and the cut vectors w_j act
on vec(Delta) in that order.  The corner of the LMI carries
``bound - lam0 * (rho^2 - ||vec(Delta_bar)||^2) - sum lam_j beta_j``: the
coefficient of lam0 is exactly the ``gamma`` the uncertainty set derives.

Hypothesis violations (k < s + 1, or no strict interior) only cost the
exactness guarantee; the LMI still certifies an upper bound on the worst
case, so the solvers proceed and warn instead of refusing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleProblem, InvalidInput, SolverFailure
from .linalg import span_rank, vec
from .model import SlaterReport, TrustRegionProblem, check_slater
from .relaxation import solve_relaxation
from .sdp import ConicProgram, solve as conic_solve


class RobustHypothesisWarning(UserWarning):
    """Tightness hypotheses of the LMI reformulation are not satisfied."""


@dataclass(frozen=True)
class MatrixUncertaintySet:
    A0: np.ndarray
    a0: np.ndarray
    Delta_bar: np.ndarray
    rho: float
    cuts: tuple[tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        a0 = np.asarray(self.a0, dtype=float).ravel()
        k, n = A0.shape
        if a0.shape != (k,):
            raise InvalidInput(f"a0 must have length {k}")
        bar = np.asarray(self.Delta_bar, dtype=float)
        if bar.shape != (k, n + 1):
            raise InvalidInput(f"Delta_bar must have shape {(k, n + 1)}")
        if self.rho < 0:
            raise InvalidInput("rho must be nonnegative")
        cuts = []
        for w, beta in self.cuts:
            w = np.asarray(w, dtype=float).ravel()
            if w.shape != (k * (n + 1),):
                raise InvalidInput(f"cut vectors must have length {k * (n + 1)}")
            cuts.append((w, float(beta)))
        for arr in (A0, a0, bar):
            arr.setflags(write=False)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "Delta_bar", bar)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "cuts", tuple(cuts))

    @property
    def k(self) -> int:
        return self.A0.shape[0]

    @property
    def n(self) -> int:
        return self.A0.shape[1]

    @property
    def dim(self) -> int:
        return self.k * (self.n + 1)

    @property
    def b(self) -> np.ndarray:
        """vec of the ball center."""
        return vec(self.Delta_bar)

    @property
    def gamma(self) -> float:
        """rho^2 - ||Delta_bar||_F^2, the lam0 coefficient in the LMI corner."""
        return self.rho**2 - float(np.sum(self.Delta_bar**2))


@dataclass(frozen=True)
class RobustLspProblem:
    uncertainty: MatrixUncertaintySet


@dataclass(frozen=True)
class RobustSocpProblem:
    objective: np.ndarray
    constraints: tuple[tuple[MatrixUncertaintySet, float], ...]

    def __post_init__(self):
        a = np.asarray(self.objective, dtype=float).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "objective", a)
        cons = []
        for unc, d in self.constraints:
            if not isinstance(unc, MatrixUncertaintySet):
                raise InvalidInput("constraints must carry MatrixUncertaintySet")
            if unc.n != a.shape[0]:
                raise InvalidInput("uncertainty column count must match objective")
            if d < 0:
                raise InvalidInput("cone bounds d_i must be nonnegative")
            cons.append((unc, float(d)))
        object.__setattr__(self, "constraints", tuple(cons))


@dataclass(frozen=True)
class UncertaintyHypotheses:
    k: int
    s: int
    dimension_ok: bool
    strict_feasibility: SlaterReport

    @property
    def satisfied(self) -> bool:
        return self.dimension_ok and self.strict_feasibility.holds

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "s": self.s,
            "dimension_ok": self.dimension_ok,
            "strictly_feasible": self.strict_feasibility.holds,
            "satisfied": self.satisfied,
        }


def _delta_space_problem(unc: MatrixUncertaintySet) -> TrustRegionProblem:
    """The uncertainty set as a ball-plus-cuts region in u = vec(Delta)."""
    dim = unc.dim
    return TrustRegionProblem(
        A=np.zeros((dim, dim)),
        a=np.zeros(dim),
        x0=unc.b,
        alpha=unc.rho**2,
        constraints=[(w, beta) for w, beta in unc.cuts],
    )


def hypothesis_report(unc: MatrixUncertaintySet) -> UncertaintyHypotheses:
    s = span_rank([w for w, _ in unc.cuts])
    slater = check_slater(_delta_space_problem(unc))
    return UncertaintyHypotheses(
        k=unc.k, s=s, dimension_ok=unc.k >= s + 1, strict_feasibility=slater
    )


def _warn_on_hypotheses(unc: MatrixUncertaintySet) -> UncertaintyHypotheses:
    hyp = hypothesis_report(unc)
    if not hyp.dimension_ok:
        warnings.warn(
            f"k = {hyp.k} < s + 1 = {hyp.s + 1}: the LMI stays a sound upper "
            "bound but tightness is no longer guaranteed",
            RobustHypothesisWarning,
            stacklevel=3,
        )
    if not hyp.strict_feasibility.holds:
        warnings.warn(
            "no strictly interior perturbation found: the LMI stays a sound "
            "upper bound but tightness is no longer guaranteed",
            RobustHypothesisWarning,
            stacklevel=3,
        )
    return hyp


@dataclass(frozen=True)
class FeasibilityLmi:
    """Affine map (x, bound, lam0, lam_cuts) -> symmetric matrix of the LMI.

    Order is k + k(n+1) + 1.  ``const`` holds the variable-free part (top-left
    identity, the constant column of the homogenized x block, minus the
    nominal offset); the remaining fields are the coefficient matrices of the
    scalar variables.  The worst-case bound enters only through the corner.
    """

    order: int
    const: np.ndarray
    x_coeffs: tuple[np.ndarray, ...]
    bound_coeff: np.ndarray
    lam0_coeff: np.ndarray
    cut_coeffs: tuple[np.ndarray, ...]
    hypotheses: UncertaintyHypotheses

    def assemble(self, x, bound, lam0, cut_lams=()) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.const + bound * self.bound_coeff + lam0 * self.lam0_coeff
        for xi, fx in zip(x, self.x_coeffs):
            out = out + xi * fx
        for lj, fj in zip(cut_lams, self.cut_coeffs):
            out = out + lj * fj
        return out


def build_feasibility_lmi(unc: MatrixUncertaintySet) -> FeasibilityLmi:
    """Assemble the robust-feasibility LMI for ||(A0+dA)x - (a0+da)||^2 <= bound."""
    hyp = _warn_on_hypotheses(unc)
    k, n = unc.k, unc.n
    K = k * (n + 1)
    N = k + K + 1
    top = slice(0, k)
    mid = slice(k, k + K)
    last = N - 1

    const = np.zeros((N, N))
    const[top, top] = np.eye(k)
    # column-major u: group j of the middle indices multiplies xt_j; the
    # homogenizing entry xt_n = -1 is constant
    group_n = slice(k + n * k, k + (n + 1) * k)
    const[top, group_n] = -np.eye(k)
    const[group_n, top] = -np.eye(k)
    const[top, last] = -unc.a0
    const[last, top] = -unc.a0

    x_coeffs = []
    for i in range(n):
        fx = np.zeros((N, N))
        group_i = slice(k + i * k, k + (i + 1) * k)
        fx[top, group_i] = np.eye(k)
        fx[group_i, top] = np.eye(k)
        fx[top, last] = unc.A0[:, i]
        fx[last, top] = unc.A0[:, i]
        x_coeffs.append(fx)

    bound_coeff = np.zeros((N, N))
    bound_coeff[last, last] = 1.0

    lam0_coeff = np.zeros((N, N))
    lam0_coeff[mid, mid] = np.eye(K)
    lam0_coeff[mid, last] = -unc.b
    lam0_coeff[last, mid] = -unc.b
    lam0_coeff[last, last] = -unc.gamma

    cut_coeffs = []
    for w, beta in unc.cuts:
        fj = np.zeros((N, N))
        fj[mid, last] = 0.5 * w
        fj[last, mid] = 0.5 * w
        fj[last, last] = -beta
        cut_coeffs.append(fj)

    return FeasibilityLmi(
        order=N,
        const=const,
        x_coeffs=tuple(x_coeffs),
        bound_coeff=bound_coeff,
        lam0_coeff=lam0_coeff,
        cut_coeffs=tuple(cut_coeffs),
        hypotheses=hyp,
    )


def _lmi_blockset(lmi: FeasibilityLmi, fixed_bound: Optional[float]):
    """Coefficient matrices of the LMI block per optimization variable.

    Returns (const, per-x list, bound entry or None, lam0, cuts).  When
    ``fixed_bound`` is given it is folded into the constant part.
    """
    const = lmi.const.copy()
    bound = lmi.bound_coeff
    if fixed_bound is not None:
        const = const + fixed_bound * lmi.bound_coeff
        bound = None
    return const, list(lmi.x_coeffs), bound, lmi.lam0_coeff, list(lmi.cut_coeffs)


@dataclass(frozen=True)
class RlspSolution:
    x: np.ndarray
    worst_case_bound: float
    lam0: float
    cut_multipliers: np.ndarray
    hypotheses: UncertaintyHypotheses

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "worst_case_bound": self.worst_case_bound,
            "lam0": self.lam0,
            "cut_multipliers": list(self.cut_multipliers),
            "hypotheses": self.hypotheses.to_json(),
        }


def solve_rlsp(problem: RobustLspProblem, tol: float = 1e-8) -> RlspSolution:
    """Minimize the worst-case squared residual over the uncertainty set.

    Optimizes (x, bound, lam0, lam_cuts) against the feasibility LMI through
    the conic engine (the LMI problem is posed as the dual of a trace-form
    program).  A zero radius collapses the set to the single matrix
    Delta_bar, where plain least squares on the shifted data is the answer.
    """
    unc = problem.uncertainty
    if unc.rho == 0.0:
        for w, beta in unc.cuts:
            if float(w @ unc.b) > beta + 1e-12:
                raise InvalidInput("empty uncertainty set: cuts exclude Delta_bar")
        a_eff = unc.A0 + unc.Delta_bar[:, : unc.n]
        rhs_eff = unc.a0 + unc.Delta_bar[:, unc.n]
        x, *_ = np.linalg.lstsq(a_eff, rhs_eff, rcond=None)
        resid = a_eff @ x - rhs_eff
        return RlspSolution(
            x=x,
            worst_case_bound=float(resid @ resid),
            lam0=0.0,
            cut_multipliers=np.zeros(len(unc.cuts)),
            hypotheses=hypothesis_report(unc),
        )

    lmi = build_feasibility_lmi(unc)
    n, l = unc.n, len(unc.cuts)
    const, xs, bound, lam0c, cutc = _lmi_blockset(lmi, None)
    # engine dual variables: (x_1..x_n, bound, lam0, lam_1..lam_l)
    blocks = tuple([lmi.order] + [1] * (1 + l))

    def lifted(main, sign_index=None):
        out = [np.zeros((d, d)) for d in blocks]
        out[0] = main
        if sign_index is not None:
            out[1 + sign_index] = np.array([[-1.0]])
        return tuple(out)

    constraints = []
    rhs = []
    for fx in xs:
        constraints.append(lifted(-fx))
        rhs.append(0.0)
    constraints.append(lifted(-bound))
    rhs.append(-1.0)  # maximize -bound, i.e. minimize the worst case
    constraints.append(lifted(-lam0c, 0))
    rhs.append(0.0)
    for j, fj in enumerate(cutc):
        constraints.append(lifted(-fj, 1 + j))
        rhs.append(0.0)

    prog = ConicProgram(
        blocks=blocks,
        objective=lifted(const),
        constraints=tuple(zip(constraints, rhs)),
    )
    sol = conic_solve(prog, tol=tol)
    if sol.status != "optimal":
        raise SolverFailure(
            f"robust least-squares solve ended with status {sol.status}: {sol.message}"
        )
    y = sol.y
    return RlspSolution(
        x=y[:n].copy(),
        worst_case_bound=float(y[n]),
        lam0=max(0.0, float(y[n + 1])),
        cut_multipliers=np.maximum(0.0, y[n + 2 :]),
        hypotheses=lmi.hypotheses,
    )


@dataclass(frozen=True)
class RsocpSolution:
    status: str  # optimal | infeasible
    x: Optional[np.ndarray]
    objective_value: Optional[float]
    multipliers: tuple[np.ndarray, ...]
    hypotheses: tuple[UncertaintyHypotheses, ...]

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "x": None if self.x is None else list(self.x),
            "objective_value": self.objective_value,
            "multipliers": [list(m) for m in self.multipliers],
            "hypotheses": [h.to_json() for h in self.hypotheses],
        }


def _nominal_soc_block(unc: MatrixUncertaintySet, d: float):
    """LMI encoding ||B x - b|| <= d for the zero-radius set (SOC as PSD)."""
    b_eff = unc.A0 + unc.Delta_bar[:, : unc.n]
    rhs_eff = unc.a0 + unc.Delta_bar[:, unc.n]
    k, n = unc.k, unc.n
    order = k + 1
    const = np.zeros((order, order))
    const[:k, :k] = d * np.eye(k)
    const[:k, k] = -rhs_eff
    const[k, :k] = -rhs_eff
    const[k, k] = d
    xs = []
    for i in range(n):
        fx = np.zeros((order, order))
        fx[:k, k] = b_eff[:, i]
        fx[k, :k] = b_eff[:, i]
        xs.append(fx)
    return order, const, xs


def solve_rsocp(problem: RobustSocpProblem, tol: float = 1e-8) -> RsocpSolution:
    """Minimize a'x subject to every robust second-order-cone constraint.

    One feasibility LMI per constraint with the corner bound fixed at d_i^2;
    zero-radius constraints degrade to the plain cone membership block.
    """
    a = problem.objective
    n = a.shape[0]
    block_specs = []  # (order, const, xs, lam0c or None, cutc)
    hyps = []
    for unc, d in problem.constraints:
        if unc.rho == 0.0:
            for w, beta in unc.cuts:
                if float(w @ unc.b) > beta + 1e-12:
                    raise InvalidInput("empty uncertainty set: cuts exclude Delta_bar")
            order, const, xs = _nominal_soc_block(unc, d)
            block_specs.append((order, const, xs, None, []))
            hyps.append(hypothesis_report(unc))
        else:
            lmi = build_feasibility_lmi(unc)
            const, xs, _, lam0c, cutc = _lmi_blockset(lmi, d * d)
            block_specs.append((lmi.order, const, xs, lam0c, cutc))
            hyps.append(lmi.hypotheses)

    sign_count = sum(
        (0 if lam0c is None else 1) + len(cutc)
        for _, _, _, lam0c, cutc in block_specs
    )
    blocks = tuple([spec[0] for spec in block_specs] + [1] * sign_count)
    mcount = len(block_specs)

    def empty():
        return [np.zeros((dd, dd)) for dd in blocks]

    objective = empty()
    for ib, (_, const, _, _, _) in enumerate(block_specs):
        objective[ib] = const

    constraints = []
    rhs = []
    for i in range(n):  # one dual variable per coordinate of x
        mats = empty()
        for ib, (_, _, xs, _, _) in enumerate(block_specs):
            mats[ib] = -xs[i]
        constraints.append(tuple(mats))
        rhs.append(-float(a[i]))  # maximize -a'x
    sign_at = mcount
    multiplier_slices = []
    for ib, (_, _, _, lam0c, cutc) in enumerate(block_specs):
        start = len(constraints)
        if lam0c is not None:
            mats = empty()
            mats[ib] = -lam0c
            mats[sign_at] = np.array([[-1.0]])
            sign_at += 1
            constraints.append(tuple(mats))
            rhs.append(0.0)
            for fj in cutc:
                mats = empty()
                mats[ib] = -fj
                mats[sign_at] = np.array([[-1.0]])
                sign_at += 1
                constraints.append(tuple(mats))
                rhs.append(0.0)
        multiplier_slices.append(slice(start, len(constraints)))

    prog = ConicProgram(
        blocks=blocks,
        objective=tuple(objective),
        constraints=tuple(zip(constraints, rhs)),
    )
    sol = conic_solve(prog, tol=tol)
    if sol.status == "unbounded":
        # the engine's primal diverging below means no (x, lam) satisfies
        # every LMI: the robust program is infeasible
        return RsocpSolution("infeasible", None, None, (), tuple(hyps))
    if sol.status != "optimal":
        raise SolverFailure(
            f"robust SOCP solve ended with status {sol.status}: {sol.message}"
        )
    x = sol.y[:n].copy()
    multipliers = tuple(
        np.maximum(0.0, sol.y[sl]) for sl in multiplier_slices
    )
    return RsocpSolution(
        status="optimal",
        x=x,
        objective_value=float(a @ x),
        multipliers=multipliers,
        hypotheses=tuple(hyps),
    )


def worst_case_residual(x, unc: MatrixUncertaintySet, tol: float = 1e-8) -> float:
    """max over the set of ||(A0+dA)x - (a0+da)||^2, via the exact relaxation.

    The inner maximization is a trust-region problem in u = vec(Delta) whose
    quadratic form -(xt xt' kron I_k) has bottom-eigenvalue multiplicity k,
    so the relaxation of the negated problem is tight whenever k >= s + 1.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (unc.n,):
        raise InvalidInput(f"x must have length {unc.n}")
    xt = np.append(x, -1.0)
    c = unc.A0 @ x - unc.a0
    if unc.rho == 0.0:
        resid = c + unc.Delta_bar @ xt
        return float(resid @ resid)
    K = unc.dim
    p_mat = np.kron(xt[None, :], np.eye(unc.k))  # k x K, column-major u
    inner = TrustRegionProblem(
        A=-np.kron(np.outer(xt, xt), np.eye(unc.k)),
        a=-2.0 * p_mat.T @ c,
        x0=unc.b,
        alpha=unc.rho**2,
        constraints=[(w, beta) for w, beta in unc.cuts],
        gamma=-float(c @ c),
    )
    result = solve_relaxation(inner, tol=tol)
    return -result.sdp_value


# ----------------------------------------------------------------- sampling


def sample_scenarios(
    unc: MatrixUncertaintySet,
    count: int,
    seed: int = 0,
    min_acceptance: float = 1e-3,
) -> np.ndarray:
    """Draw perturbations uniformly from the ball, rejecting cut violations.

    Returns an array of shape (count, k, n+1).  Aborts when the polyhedral
    acceptance rate falls below ``min_acceptance`` (degenerate cut systems).
    """
    rng = np.random.default_rng(seed)
    dim = unc.dim
    kept = []
    drawn = accepted = 0
    while accepted < count:
        batch = max(count, 4096)
        direction = rng.normal(size=(batch, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = unc.rho * rng.random(batch) ** (1.0 / dim)
        u = unc.b + direction * radius[:, None]
        mask = np.ones(batch, dtype=bool)
        for w, beta in unc.cuts:
            mask &= u @ w <= beta
        drawn += batch
        sel = u[mask]
        accepted += sel.shape[0]
        kept.append(sel)
        if drawn >= 20_000 and accepted < min_acceptance * drawn:
            raise SolverFailure(
                f"scenario acceptance rate {accepted / drawn:.2e} too low",
                residual=accepted / max(drawn, 1),
            )
    u = np.concatenate(kept, axis=0)[:count]
    return u.reshape(count, unc.n + 1, unc.k).transpose(0, 2, 1)


def scenario_residuals(x, unc: MatrixUncertaintySet, deltas: np.ndarray) -> np.ndarray:
    """Squared residuals of x under a batch of sampled perturbations."""
    x = np.asarray(x, dtype=float)
    xt = np.append(x, -1.0)
    c = unc.A0 @ x - unc.a0
    shifted = c[None, :] + deltas @ xt
    return np.einsum("ij,ij->i", shifted, shifted)


def worst_sampled_residual(
    x, unc: MatrixUncertaintySet, count: int = 10_000, seed: int = 0
) -> float:
    deltas = sample_scenarios(unc, count, seed=seed)
    return float(np.max(scenario_residuals(x, unc, deltas)))


# ------------------------------------------------------------- constructors


def make_uncertainty(
    kind: str,
    A0,
    a0,
    rho: float,
    w=None,
    ws: Optional[Sequence] = None,
    Delta_bar=None,
    cuts: Optional[Sequence] = None,
) -> MatrixUncertaintySet:
    """Build the standard uncertainty sets.

    kind = "matrix_norm":   plain Frobenius ball (one vacuous cut, s = 0).
    kind = "two_ellipsoid": ball plus -1 <= w' vec(Delta) <= 1 (needs k >= 2).
    kind = "many_ellipsoid": ball plus -1 <= w_l' vec(Delta) <= 1 for the
                             k-1 vectors in ``ws``.
    kind = "general":       explicit Delta_bar and cut list.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    a0 = np.asarray(a0, dtype=float).ravel()
    k, n = A0.shape
    dim = k * (n + 1)
    zero_bar = np.zeros((k, n + 1))
    if kind == "matrix_norm":
        if rho <= 0:
            raise InvalidInput("matrix_norm uncertainty needs rho > 0")
        return MatrixUncertaintySet(
            A0, a0, zero_bar, rho, cuts=((np.zeros(dim), 1.0),)
        )
    if kind == "two_ellipsoid":
        if rho <= 0:
            raise InvalidInput("two_ellipsoid uncertainty needs rho > 0")
        w = np.asarray(w, dtype=float).ravel()
        if w.shape != (dim,):
            raise InvalidInput(f"w must have length {dim}")
        if k < 2:
            raise InvalidInput("two_ellipsoid uncertainty needs k >= 2")
        return MatrixUncertaintySet(
            A0, a0, zero_bar, rho, cuts=((w, 1.0), (-w, 1.0))
        )
    if kind == "many_ellipsoid":
        if rho <= 0:
            raise InvalidInput("many_ellipsoid uncertainty needs rho > 0")
        ws = [np.asarray(v, dtype=float).ravel() for v in (ws or [])]
        if len(ws) != k - 1:
            raise InvalidInput(f"many_ellipsoid uncertainty needs k - 1 = {k - 1} cut vectors")
        pairs = []
        for v in ws:
            if v.shape != (dim,):
                raise InvalidInput(f"cut vectors must have length {dim}")
            pairs.append((v, 1.0))
            pairs.append((-v, 1.0))
        return MatrixUncertaintySet(A0, a0, zero_bar, rho, cuts=tuple(pairs))
    if kind == "general":
        bar = zero_bar if Delta_bar is None else np.asarray(Delta_bar, dtype=float)
        return MatrixUncertaintySet(
            A0, a0, bar, rho, cuts=tuple(cuts or ())
        )
    raise InvalidInput(f"unknown uncertainty kind {kind!r}")
