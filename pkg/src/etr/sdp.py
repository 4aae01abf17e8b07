"""Primal-dual interior-point solver for small dense block-diagonal SDPs.

Programs are stated in primal trace form

    minimize    <C, X>
    subject to  <A_j, X> = b_j,   j = 1..m,    X in product of PSD cones,

whose conic dual is  max b'y  s.t.  C - sum_j y_j A_j  PSD.  Callers that
really want to optimize over an LMI in variables y (certificate searches,
the robust reformulations) build the primal whose dual is that LMI and read
the multipliers off ``ConicSolution.y``.  Inequalities <H, X> <= 0 are
pre-encoded by the caller through order-1 slack blocks, so the solver only
ever sees equalities.

The search direction is HKM with a Mehrotra predictor-corrector step and a
0.98 fraction to the cone boundary.  Everything is deterministic: fixed
initialization X = S = tau*I with tau = 1 + max row norm of the data, no
randomized pivoting, so identical inputs produce identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInput

BlockMatrix = tuple[np.ndarray, ...]

_NORM_CAP = 1e8
_DIVERGING_OBJECTIVE = 1e6


def block_zeros(orders: Sequence[int]) -> BlockMatrix:
    return tuple(np.zeros((d, d)) for d in orders)


def block_eye(orders: Sequence[int], scale: float = 1.0) -> BlockMatrix:
    return tuple(scale * np.eye(d) for d in orders)


def block_dot(a: BlockMatrix, b: BlockMatrix) -> float:
    return float(sum(np.tensordot(x, y) for x, y in zip(a, b)))


def block_norm(a: BlockMatrix) -> float:
    return float(np.sqrt(sum(float(np.sum(x * x)) for x in a)))


def block_combine(blocks: BlockMatrix, coeffs, mats: Sequence[BlockMatrix]) -> BlockMatrix:
    out = [b.copy() for b in blocks]
    for c, mat in zip(coeffs, mats):
        if c == 0.0:
            continue
        for o, mb in zip(out, mat):
            o += c * mb
    return tuple(out)


def _normalize_blocks(orders, mat, what: str) -> BlockMatrix:
    if len(mat) != len(orders):
        raise InvalidInput(f"{what}: expected {len(orders)} blocks, got {len(mat)}")
    out = []
    for d, blk in zip(orders, mat):
        arr = np.atleast_2d(np.asarray(blk, dtype=float))
        if arr.shape != (d, d):
            raise InvalidInput(f"{what}: block of order {d} has shape {arr.shape}")
        out.append(0.5 * (arr + arr.T))
    return tuple(out)


@dataclass(frozen=True)
class ConicProgram:
    """Block-diagonal SDP data in primal trace form."""

    blocks: tuple[int, ...]
    objective: BlockMatrix
    constraints: tuple[tuple[BlockMatrix, float], ...]

    def __post_init__(self):
        orders = tuple(int(d) for d in self.blocks)
        if any(d < 1 for d in orders):
            raise InvalidInput("block orders must be positive")
        object.__setattr__(self, "blocks", orders)
        object.__setattr__(
            self, "objective", _normalize_blocks(orders, self.objective, "objective")
        )
        cons = tuple(
            (_normalize_blocks(orders, mat, f"constraint {j}"), float(rhs))
            for j, (mat, rhs) in enumerate(self.constraints)
        )
        object.__setattr__(self, "constraints", cons)

    @property
    def total_order(self) -> int:
        return sum(self.blocks)


class IterateRecord(NamedTuple):
    iteration: int
    mu: float
    primal_value: float
    dual_value: float
    primal_infeas: float
    dual_infeas: float


@dataclass
class ConicSolution:
    X: BlockMatrix
    y: np.ndarray
    S: BlockMatrix
    primal_value: float
    dual_value: float
    gap: float
    status: str  # optimal | infeasible | unbounded | max_iter
    iterations: int
    trace: list[IterateRecord] = field(default_factory=list)
    message: str = ""


def _check_independence(prog: ConicProgram, tol: float = 1e-10) -> None:
    m = len(prog.constraints)
    if m == 0:
        return
    gram = np.empty((m, m))
    for i, (ai, _) in enumerate(prog.constraints):
        for j in range(i, m):
            gram[i, j] = gram[j, i] = block_dot(ai, prog.constraints[j][0])
    w = np.linalg.eigvalsh(gram)
    if w[0] <= tol * max(w[-1], 1.0):
        raise InvalidInput(
            "constraint matrices are linearly dependent "
            f"(Gram eigenvalue ratio {w[0] / max(w[-1], 1e-300):g})"
        )


def _initial_scale(prog: ConicProgram) -> float:
    worst = 0.0
    mats = [prog.objective] + [mat for mat, _ in prog.constraints]
    for mat in mats:
        for blk in mat:
            if blk.size:
                worst = max(worst, float(np.max(np.sqrt(np.sum(blk * blk, axis=1)))))
    return 1.0 + worst


def _chol_blocks(mat: BlockMatrix) -> Optional[list[np.ndarray]]:
    out = []
    for blk in mat:
        try:
            out.append(np.linalg.cholesky(blk))
        except np.linalg.LinAlgError:
            return None
    return out


def _max_step(mat: BlockMatrix, chol: list[np.ndarray], direction: BlockMatrix) -> float:
    """sup {alpha : mat + alpha * direction PSD}."""
    step = np.inf
    for blk, L, d in zip(mat, chol, direction):
        if blk.shape[0] == 1:
            if d[0, 0] < 0.0:
                step = min(step, -blk[0, 0] / d[0, 0])
            continue
        w = scipy.linalg.solve_triangular(L, d, lower=True)
        k = scipy.linalg.solve_triangular(L, w.T, lower=True).T
        lam = float(np.linalg.eigvalsh(0.5 * (k + k.T))[0])
        if lam < 0.0:
            step = min(step, -1.0 / lam)
    return step


def solve(prog: ConicProgram, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    """Run the predictor-corrector path following iteration.

    Declares ``optimal`` once the relative primal/dual infeasibilities and
    the relative duality gap all drop below ``tol`` (or, when progress
    stalls, below the looser 1e-7 documented for ConicSolution).  Iterates
    diverging past the 1e8 norm cap yield ``unbounded`` (primal objective
    falling without bound) or ``infeasible`` (dual objective rising without
    bound, i.e. a primal infeasibility certificate direction).
    """
    _check_independence(prog)
    orders = prog.blocks
    nu = prog.total_order
    m = len(prog.constraints)
    if m == 0:
        raise InvalidInput("program must carry at least one constraint")
    amats = [mat for mat, _ in prog.constraints]
    b = np.array([rhs for _, rhs in prog.constraints])
    C = prog.objective
    bnorm = 1.0 + float(np.linalg.norm(b))
    cnorm = 1.0 + block_norm(C)

    tau = _initial_scale(prog)
    X = block_eye(orders, tau)
    S = block_eye(orders, tau)
    y = np.zeros(m)

    trace: list[IterateRecord] = []
    status, message = "max_iter", "iteration limit reached"
    it = 0
    small_steps = 0

    def residuals(Xc, yc, Sc):
        ax = np.array([block_dot(a, Xc) for a in amats])
        rp = b - ax
        rd = tuple(
            cb - sum(yc[j] * amats[j][ib] for j in range(m)) - sb
            for ib, (cb, sb) in enumerate(zip(C, Sc))
        )
        return rp, rd

    pv = dv = 0.0
    for it in range(1, max_iter + 1):
        pv = block_dot(C, X)
        dv = float(y @ b)
        rp, rd = residuals(X, y, S)
        pinf = float(np.linalg.norm(rp)) / bnorm
        dinf = block_norm(rd) / cnorm
        mu = block_dot(X, S) / nu
        gap_rel = abs(pv - dv) / (1.0 + abs(pv) + abs(dv))
        trace.append(IterateRecord(it, mu, pv, dv, pinf, dinf))

        if pinf <= tol and dinf <= tol and gap_rel <= tol:
            status, message = "optimal", "converged"
            break

        stalled = small_steps >= 3
        capped_x = block_norm(X) > _NORM_CAP
        capped_y = float(np.max(np.abs(y))) > _NORM_CAP if m else False
        if stalled or capped_x or capped_y:
            if pinf <= 1e-7 and dinf <= 1e-7 and abs(pv - dv) <= 1e-7 * (1.0 + abs(pv)):
                status, message = "optimal", "converged at reduced precision"
            elif capped_x and pv < -_DIVERGING_OBJECTIVE:
                status, message = "unbounded", "primal iterate diverged with objective -> -inf"
            elif capped_y and dv > _DIVERGING_OBJECTIVE:
                status, message = "infeasible", "dual objective diverged: primal infeasible"
            else:
                status, message = "max_iter", "progress stalled"
            break

        Lx = _chol_blocks(X)
        Ls = _chol_blocks(S)
        if Lx is None or Ls is None:
            status, message = "max_iter", "iterate left the cone (numerical breakdown)"
            break
        Sinv = tuple(
            scipy.linalg.cho_solve((L, True), np.eye(L.shape[0])) for L in Ls
        )

        # Schur complement M[i, j] = <A_i, X A_j S^{-1}>
        Z = [
            tuple(Xb @ Ab @ Sib for Xb, Ab, Sib in zip(X, a, Sinv))
            for a in amats
        ]
        M = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                M[i, j] = sum(
                    np.tensordot(ab, zb, axes=([0, 1], [1, 0]))
                    for ab, zb in zip(amats[i], Z[j])
                )
        M = 0.5 * (M + M.T)
        ridge = 0.0
        cho = None
        for _ in range(6):
            try:
                cho = scipy.linalg.cho_factor(M + ridge * np.eye(m))
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 10.0, 1e-14 * (1.0 + float(np.max(np.abs(M)))))
        if cho is None:
            status, message = "max_iter", "Schur complement not factorizable"
            break

        xrs = tuple(Xb @ Rb @ Sib for Xb, Rb, Sib in zip(X, rd, Sinv))

        def solve_direction(target_scale, cross):
            rhs = np.empty(m)
            for i in range(m):
                acc = b[i]
                for ab, xb, sib in zip(amats[i], xrs, Sinv):
                    acc += np.tensordot(ab, xb, axes=([0, 1], [1, 0]))
                    if target_scale != 0.0:
                        acc -= target_scale * np.tensordot(ab, sib, axes=([0, 1], [1, 0]))
                if cross is not None:
                    for ab, cb in zip(amats[i], cross):
                        acc += np.tensordot(ab, cb, axes=([0, 1], [1, 0]))
                rhs[i] = acc
            dy = scipy.linalg.cho_solve(cho, rhs)
            dS = tuple(
                rb - sum(dy[j] * amats[j][ib] for j in range(m))
                for ib, rb in enumerate(rd)
            )
            dX = []
            for ib in range(len(orders)):
                blk = -X[ib] - X[ib] @ dS[ib] @ Sinv[ib]
                if target_scale != 0.0:
                    blk = blk + target_scale * Sinv[ib]
                if cross is not None:
                    blk = blk - cross[ib]
                dX.append(0.5 * (blk + blk.T))
            return dy, tuple(dX), dS

        # predictor (affine scaling)
        dy_a, dX_a, dS_a = solve_direction(0.0, None)
        ap_a = min(1.0, 0.98 * _max_step(X, Lx, dX_a))
        ad_a = min(1.0, 0.98 * _max_step(S, Ls, dS_a))
        Xa = tuple(xb + ap_a * db for xb, db in zip(X, dX_a))
        Sa = tuple(sb + ad_a * db for sb, db in zip(S, dS_a))
        mu_aff = block_dot(Xa, Sa) / nu
        sigma = float(np.clip((mu_aff / mu) ** 3, 1e-8, 0.999)) if mu > 0 else 0.1

        # corrector with second-order term dX_a dS_a S^{-1}
        cross = tuple(
            dxb @ dsb @ sib for dxb, dsb, sib in zip(dX_a, dS_a, Sinv)
        )
        dy, dX, dS = solve_direction(sigma * mu, cross)
        ap = min(1.0, 0.98 * _max_step(X, Lx, dX))
        ad = min(1.0, 0.98 * _max_step(S, Ls, dS))

        for _ in range(30):
            Xn = tuple(0.5 * ((xb + ap * db) + (xb + ap * db).T) for xb, db in zip(X, dX))
            Sn = tuple(0.5 * ((sb + ad * db) + (sb + ad * db).T) for sb, db in zip(S, dS))
            if _chol_blocks(Xn) is not None and _chol_blocks(Sn) is not None:
                break
            ap *= 0.8
            ad *= 0.8
        X, S = Xn, Sn
        y = y + ad * dy
        small_steps = small_steps + 1 if max(ap, ad) < 1e-4 else 0

    pv = block_dot(C, X)
    dv = float(y @ b)
    return ConicSolution(
        X=X,
        y=y,
        S=S,
        primal_value=pv,
        dual_value=dv,
        gap=abs(pv - dv),
        status=status,
        iterations=it,
        trace=trace,
        message=message,
    )


class Residuals(NamedTuple):
    primal_infeas: float
    dual_infeas: float
    gap: float


def residuals(prog: ConicProgram, sol: ConicSolution) -> Residuals:
    """KKT residuals of a solution against its program.

    Primal infeasibility is the norm of <A_j, X> - b_j scaled by 1 + ||b||,
    dual infeasibility the norm of C - sum y_j A_j - S scaled by 1 + ||C||,
    and the gap is |<C, X> - b'y| / (1 + |primal| + |dual|).
    """
    m = len(prog.constraints)
    ax = np.array([block_dot(mat, sol.X) for mat, _ in prog.constraints])
    b = np.array([rhs for _, rhs in prog.constraints])
    pinf = float(np.linalg.norm(ax - b)) / (1.0 + float(np.linalg.norm(b)))
    rd = tuple(
        cb - sum(sol.y[j] * prog.constraints[j][0][ib] for j in range(m)) - sb
        for ib, (cb, sb) in enumerate(zip(prog.objective, sol.S))
    )
    dinf = block_norm(rd) / (1.0 + block_norm(prog.objective))
    pv = block_dot(prog.objective, sol.X)
    dv = float(sol.y @ b)
    gap = abs(pv - dv) / (1.0 + abs(pv) + abs(dv))
    return Residuals(pinf, dinf, gap)


def dump_program(prog: ConicProgram) -> str:
    """Plain-text dump for cross-checking against external solvers.

    First line lists the block orders; every following line is a
    ``j block row col value`` quintuple over the upper triangle, with
    ``j = -1`` denoting the objective and ``j >= 0`` constraint j (its
    right-hand side is appended on a ``rhs`` line).
    """
    lines = ["blocks: " + " ".join(str(d) for d in prog.blocks)]

    def emit(j, mat):
        for ib, blk in enumerate(mat):
            for r in range(blk.shape[0]):
                for c in range(r, blk.shape[0]):
                    if blk[r, c] != 0.0:
                        lines.append(f"{j} {ib} {r} {c} {blk[r, c]!r}")

    emit(-1, prog.objective)
    for j, (mat, rhs) in enumerate(prog.constraints):
        emit(j, mat)
        lines.append(f"rhs {j} {rhs!r}")
    return "\n".join(lines) + "\n"
