"""Complex linear-algebra kernels and the convex QCQP subsolver.

The beamformer subproblem of every strategy is a QCQP with per-user
Hermitian quadratic objectives and diagonal quadratic constraints:

    minimize    sum_k  w_k^H A_k w_k - Re(b_k^H w_k)
    subject to  sum_k sum_i  u[j,k] * v[j,i] * |w[k,i]|^2  <=  bound_j

It is solved in the dual: for fixed multipliers each user decouples into a
Hermitian solve  w_k = (A_k + diag(load_k))^{-1} b_k / 2, and the multipliers
of the few constraints are found by quasi-Newton ascent (L-BFGS-B) on the
smooth concave dual. The batched solves run on the compiled kernel when it
is available (see `_backend`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from . import _backend

RIDGE_REL = 1e-12
_SMALL = 1e-300


class NumericsError(RuntimeError):
    """Numerical failure in a solver kernel."""


def solve_hpd(M: np.ndarray, v: np.ndarray, *, allow_ridge: bool = True) -> np.ndarray:
    """Solve M x = v for Hermitian positive-definite M via Cholesky.

    Adds a relative ridge and retries once if the factorization breaks down;
    raises NumericsError if the matrix is still not positive definite or the
    solution is inaccurate.
    """
    M = np.asarray(M, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    n = M.shape[0]
    try:
        c = cho_factor(M, lower=True, check_finite=False)
        x = cho_solve(c, v, check_finite=False)
    except np.linalg.LinAlgError:
        if not allow_ridge:
            raise NumericsError("matrix is not positive definite")
        ridge = RIDGE_REL * max(float(np.trace(M).real) / n, np.abs(M).max(), 1e-100)
        try:
            c = cho_factor(M + ridge * np.eye(n), lower=True, check_finite=False)
            x = cho_solve(c, v, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericsError("matrix is not positive definite after ridge") from exc
    resid = np.linalg.norm(M @ x - v)
    if resid > 1e-9 * max(np.linalg.norm(v), 1e-300):
        raise NumericsError(f"HPD solve residual too large ({resid:.3e})")
    return x


@dataclass
class HermitianForm:
    """Quadratic objective block for one user: w^H A w - Re(b^H w)."""

    A: np.ndarray  # (n, n) complex Hermitian PSD
    b: np.ndarray  # (n,) complex

    def validate(self, tol: float = 1e-10) -> None:
        if np.abs(self.A - self.A.conj().T).max() > tol * max(1.0, np.abs(self.A).max()):
            raise NumericsError("A is not Hermitian")
        eigs = np.linalg.eigvalsh(self.A)
        if eigs.min() < -tol * max(1.0, eigs.max()):
            raise NumericsError("A is not positive semidefinite")


@dataclass
class QuadraticConstraint:
    """Diagonal quadratic constraint sum_k u_k * sum_i v_i |w_{k,i}|^2 <= bound."""

    user_weights: Union[np.ndarray, float]  # (K,) or scalar, >= 0
    coef_weights: np.ndarray                # (n,), >= 0
    bound: float                            # >= 0 (may be +inf)
    kind: str = "power"                     # "power" | "backhaul"


@dataclass
class QcqpSolution:
    w: np.ndarray                 # (K, n) beamformers
    objective: float              # on the original (unridged) forms
    usage: np.ndarray             # (J,) per input constraint, unscaled LHS
    bounds: np.ndarray            # (J,) per input constraint
    multipliers: np.ndarray       # (J,) >= 0, original scale (0 for dropped constraints)
    max_violation_rel: float
    comp_slackness: float         # max_j lambda_scaled_j * |usage/bound - 1|
    stationarity: float           # relative residual of the stationarity system
    n_dual_evals: int
    converged: bool
    warm: Optional[np.ndarray] = field(default=None, repr=False)  # scaled multipliers for restart


_LAMBDA_MAX = 1e10  # multipliers above this make the stacked Hessians lose PD to roundoff


def lbfgsb_nonneg(fun_and_grad, x0: np.ndarray, max_fun: int, pgtol: float):
    """Minimize a smooth function over the (bounded) nonnegative orthant."""
    res = minimize(fun_and_grad, np.minimum(x0, _LAMBDA_MAX), jac=True, method="L-BFGS-B",
                   bounds=[(0.0, _LAMBDA_MAX)] * len(x0),
                   options={"maxfun": int(max_fun), "maxiter": int(max_fun),
                            "ftol": 1e-13, "gtol": pgtol})
    return np.asarray(res.x, dtype=float), int(res.nfev), res.status == 0


def _stack_forms(forms) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(forms, tuple):
        A, b = forms
        return np.asarray(A, dtype=np.complex128), np.asarray(b, dtype=np.complex128)
    A = np.stack([np.asarray(f.A, dtype=np.complex128) for f in forms])
    b = np.stack([np.asarray(f.b, dtype=np.complex128) for f in forms])
    return A, b


def solve_qcqp(forms, constraints: Sequence[QuadraticConstraint], *,
               pins: Optional[np.ndarray] = None,
               warm: Optional[np.ndarray] = None,
               start: Optional[np.ndarray] = None,
               dual_max_iter: int = 500,
               feas_tol: float = 1e-6,
               prox_eps_rel: float = 1e-6,
               prox_passes: int = 4) -> QcqpSolution:
    """Minimize the separable quadratic objective under diagonal quadratic constraints.

    `pins` is an optional (K, n) boolean mask of coefficients forced to zero.
    `warm` restarts the dual from a previous solution's ``warm`` field and
    `start` supplies a proximal center (e.g. the previous WMMSE iterate).

    Rank-deficient A_k leave the primal optimum non-unique and the plain dual
    non-smooth, so each dual solve carries a proximal term eps*||w - center||^2
    and the center is re-anchored until it is a fixed point; the fixed point
    satisfies the unregularized KKT system.
    """
    A0, b0 = _stack_forms(forms)
    K, n, _ = A0.shape
    J = len(constraints)

    pins = np.zeros((K, n), dtype=bool) if pins is None else pins.copy()

    # constraints with zero bound pin every coefficient they touch
    uw_list, cw_list, bounds_in = [], [], np.empty(J)
    active_idx = []
    for j, c in enumerate(constraints):
        uw = np.broadcast_to(np.asarray(c.user_weights, dtype=float), (K,))
        cw = np.asarray(c.coef_weights, dtype=float)
        if uw.min() < 0 or cw.min() < 0 or c.bound < 0:
            raise NumericsError("constraint weights and bounds must be nonnegative")
        bounds_in[j] = c.bound
        if not np.isfinite(c.bound):
            continue
        if c.bound == 0.0:
            pins |= (uw[:, None] * cw[None, :]) > 0
            continue
        uw_list.append(uw)
        cw_list.append(cw)
        active_idx.append(j)

    if np.all(np.abs(b0) == 0):
        w = np.zeros((K, n), dtype=np.complex128)
        usage = _constraint_usage(constraints, K, np.zeros((K, n)))
        return QcqpSolution(w=w, objective=0.0, usage=usage, bounds=bounds_in,
                            multipliers=np.zeros(J), max_violation_rel=0.0,
                            comp_slackness=0.0, stationarity=0.0,
                            n_dual_evals=0, converged=True,
                            warm=np.zeros(len(active_idx)))

    # scale the objective to O(1) (the QCQP is covariant in (A, b) -> (sA, sb))
    tr = np.einsum("kii->k", A0).real / n
    ref = float(tr.max())
    if ref <= 0.0:
        ref = float(np.abs(b0).max())
    s = 1.0 / ref
    A = A0 * s
    bhalf = b0 * (0.5 * s)

    # pins: zero the row/col and decouple with a unit diagonal (scaled units)
    if pins.any():
        A = A.copy()
        for k in range(K):
            pk = pins[k]
            if pk.any():
                A[k][pk, :] = 0.0
                A[k][:, pk] = 0.0
                A[k][pk, pk] = 1.0
                bhalf[k][pk] = 0.0

    # proximal strong convexity: eps*||w - center||^2 in scaled units
    eps = max(prox_eps_rel, RIDGE_REL)
    idx = np.arange(n)
    A[:, idx, idx] += eps

    center = np.zeros((K, n), dtype=np.complex128)
    if start is not None and start.shape == (K, n):
        center = np.where(pins, 0.0, start).astype(np.complex128)

    nJ = len(active_idx)
    nfev = 0

    if nJ == 0:
        w = center
        for _ in range(max(prox_passes, 1)):
            w = _backend.loaded_solve(A, np.zeros((K, n)), bhalf + eps * center)
            nfev += 1
            if np.linalg.norm(w - center) <= 1e-9 * max(np.linalg.norm(w), _SMALL):
                break
            center = w
        w[pins] = 0.0
        usage = _constraint_usage(constraints, K, np.abs(w) ** 2)
        stat = _stationarity(A, np.zeros((K, n)), bhalf + eps * center, w)
        return QcqpSolution(w=w, objective=_objective(A0, b0, w), usage=usage,
                            bounds=bounds_in, multipliers=np.zeros(J),
                            max_violation_rel=_max_violation(usage, bounds_in),
                            comp_slackness=0.0, stationarity=stat,
                            n_dual_evals=nfev, converged=True, warm=np.zeros(0))

    UWs = np.stack(uw_list) / np.array([bounds_in[j] for j in active_idx])[:, None]  # (J', K)
    CW = np.stack(cw_list)                                                           # (J', n)

    lam = np.zeros(nJ) if warm is None or len(warm) != nJ else np.maximum(np.asarray(warm, float), 0.0)
    w = center
    ok = False
    for _ in range(max(prox_passes, 1)):
        bh_eff = bhalf + eps * center

        def eval_point(lam):
            nonlocal nfev
            nfev += 1
            load = np.einsum("j,jk,ji->ki", lam, UWs, CW)
            w = _backend.loaded_solve(A, load, bh_eff)
            y = np.abs(w) ** 2
            usage = np.einsum("jk,ji,ki->j", UWs, CW, y)
            # dual value of the proximal problem (constant eps*||c||^2 omitted)
            f = float(np.sum(bh_eff.conj() * w).real) + float(lam.sum())
            return f, w, y, usage

        def neg_dual(lam):
            f, _, _, usage = eval_point(lam)
            return f, 1.0 - usage

        # bracketing: walk violated multipliers up multiplicatively so L-BFGS
        # starts from a nearly feasible, well-conditioned point
        f, w, y, usage_scaled = eval_point(lam)
        for _ in range(60):
            if usage_scaled.max() <= 4.0 or nfev >= dual_max_iter:
                break
            viol = usage_scaled > 1.0
            grow = np.clip(np.sqrt(usage_scaled[viol]), 2.0, 1e3)
            lam[viol] = np.maximum(lam[viol], 1e-8) * grow
            f, w, y, usage_scaled = eval_point(lam)

        for _ in range(3):
            if nfev >= dual_max_iter:
                break
            lam, _, _ = lbfgsb_nonneg(neg_dual, lam, dual_max_iter - nfev, feas_tol)
            f, w, y, usage_scaled = eval_point(lam)
            gap = float(np.sum(lam * (1.0 - usage_scaled)))
            ok = usage_scaled.max(initial=0.0) <= 1.0 + feas_tol and abs(gap) <= 1e-5 * max(1.0, abs(f))
            if ok:
                break

        shift = np.linalg.norm(w - center)
        center = w
        if shift <= 1e-7 * max(np.linalg.norm(w), _SMALL) or nfev >= dual_max_iter:
            break

    w = w.copy()
    w[pins] = 0.0
    load = np.einsum("j,jk,ji->ki", lam, UWs, CW)
    stat = _stationarity(A, load, bhalf + eps * center, w)

    # feasibility backstop: shrink toward the (always feasible) origin
    worst = usage_scaled.max(initial=0.0)
    if worst > 1.0 + feas_tol:
        c = np.sqrt((1.0 - 1e-12) / worst)
        w *= c
        y = np.abs(w) ** 2
        usage_scaled = np.einsum("jk,ji,ki->j", UWs, CW, y)

    usage = _constraint_usage(constraints, K, y)
    mult = np.zeros(J)
    for pos, j in enumerate(active_idx):
        mult[j] = lam[pos] / (s * bounds_in[j])
    comp = float(np.max(lam * np.abs(usage_scaled - 1.0), initial=0.0))

    return QcqpSolution(
        w=w,
        objective=_objective(A0, b0, w),
        usage=usage,
        bounds=bounds_in,
        multipliers=mult,
        max_violation_rel=_max_violation(usage, bounds_in),
        comp_slackness=comp,
        stationarity=stat,
        n_dual_evals=nfev,
        converged=bool(ok),
        warm=lam,
    )


def _objective(A0, b0, w) -> float:
    quad = np.einsum("ki,kij,kj->", w.conj(), A0, w).real
    lin = np.sum(b0.conj() * w).real
    return float(quad - lin)


def _constraint_usage(constraints, K, y) -> np.ndarray:
    usage = np.empty(len(constraints))
    for j, c in enumerate(constraints):
        uw = np.broadcast_to(np.asarray(c.user_weights, dtype=float), (K,))
        usage[j] = float(np.einsum("k,i,ki->", uw, c.coef_weights, y))
    return usage


def _max_violation(usage, bounds) -> float:
    viol = 0.0
    for u, b in zip(usage, bounds):
        if not np.isfinite(b):
            continue
        if b == 0.0:
            viol = max(viol, u)
        else:
            viol = max(viol, (u - b) / b)
    return float(max(viol, 0.0))


def _stationarity(A, load, bhalf, w) -> float:
    idx = np.arange(A.shape[1])
    r = np.einsum("kij,kj->ki", A, w)
    r += load * w
    r -= bhalf
    denom = max(float(np.linalg.norm(bhalf)), 1e-300)
    return float(np.linalg.norm(r) / denom)
