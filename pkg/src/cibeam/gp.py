"""Gradient-projection solver for the dual of the CI power minimization.

The dual has only nonnegativity bounds, so each iterate is
``max(x - a * grad, 0)`` with an Armijo backtracking step.  The matrix
``(I + beta diag(c~) beta^T)^{-1}`` is never formed: one Cholesky
factorization per evaluation point solves the linear systems.

Note on primal recovery: substituting the stationarity condition of the
Lagrangian gives w2 = +(1/2) M A lambda with A = [h_bar*tan(psi) - b,
h_bar*tan(psi) + b]; the positive sign is the one consistent with the
single-user closed form and is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .ci import BeamformingSolution, CiProblem, InfeasibleError, recover_solution

__all__ = [
    "GpOptions",
    "DualState",
    "dual_value_and_gradient",
    "solve_gp",
    "fast_path",
]


@dataclass(frozen=True)
class GpOptions:
    """Solver knobs; the defaults satisfy the library-wide feasibility
    tolerances (projected-residual 1e-9 leaves constraint violations below
    1e-8 on the recovered primal point)."""

    tol: float = 1e-9
    max_iter: int = 40000
    armijo_init: float = 1.0
    armijo_shrink: float = 0.5
    armijo_c1: float = 1e-4
    armijo_max_backtracks: int = 50
    infeasible_factor: float = 1e9
    seed: int = 0


@dataclass
class DualState:
    lam: np.ndarray          # [u; v], length 2K
    c: np.ndarray            # length M
    dual_objective: float    # value of the maximization form (= primal power)
    iterations: int
    residual: float          # inf-norm projected-gradient fixed-point residual
    converged: bool
    trajectory: np.ndarray = None  # accepted-iterate dual objectives


class _DualWork:
    """Cached per-problem arrays shared by all dual evaluations."""

    def __init__(self, p: CiProblem):
        self.p = p
        self.A = p.dual_matrix()                       # (2N, 2K)
        n2 = 2 * p.n
        self.beta_flat = p.beta.transpose(1, 0, 2).reshape(n2, 2 * p.m)
        self.tg = np.tan(p.psi) * np.concatenate(
            [np.sqrt(p.gamma_t), np.sqrt(p.gamma_t)])
        self.rr = p.sigma_r2 * p.r_cap
        self.eye = np.eye(n2)

    def value_grad(self, lam: np.ndarray, c: np.ndarray):
        """f(lam, c) of the minimization form and its gradient."""
        al = self.A @ lam
        if self.p.m and np.any(c):
            ct = np.repeat(c, 2)
            P = self.eye + (self.beta_flat * ct) @ self.beta_flat.T
            y = cho_solve(cho_factor(P, lower=True, check_finite=False), al,
                          check_finite=False)
        else:
            y = al
        val = 0.25 * float(al @ y) - float(self.tg @ lam) + float(self.rr @ c)
        g_lam = 0.5 * (self.A.T @ y) - self.tg
        if self.p.m:
            proj = self.beta_flat.T @ y                # (2M,)
            g_c = -0.25 * np.sum(proj.reshape(-1, 2) ** 2, axis=1) + self.rr
        else:
            g_c = np.zeros(0)
        return val, np.concatenate([g_lam, g_c]), y

    def primal_w2(self, lam: np.ndarray, c: np.ndarray) -> np.ndarray:
        _, _, y = self.value_grad(lam, c)
        return 0.5 * y

    def value_grad_hess(self, lam: np.ndarray, c: np.ndarray):
        """As value_grad, plus the full dual Hessian (used by the
        second-order polish once the projection loop is near the optimum).

        With y = M A lam and v_m = beta_m^T y:
          H_ll        = (1/2) A^T M A
          H_l,cm      = -(1/2) A^T M beta_m v_m
          H_cm,cm'    = (1/2) v_m^T (beta_m^T M beta_m') v_m'
        """
        al = self.A @ lam
        m = self.p.m
        if m and np.any(c):
            ct = np.repeat(c, 2)
            P = self.eye + (self.beta_flat * ct) @ self.beta_flat.T
            factor = cho_factor(P, lower=True, check_finite=False)
            y = cho_solve(factor, al, check_finite=False)
            MA = cho_solve(factor, self.A, check_finite=False)
            MB = cho_solve(factor, self.beta_flat, check_finite=False)
        else:
            y = al
            MA = self.A
            MB = self.beta_flat
        val = 0.25 * float(al @ y) - float(self.tg @ lam) + float(self.rr @ c)
        g_lam = 0.5 * (self.A.T @ y) - self.tg
        n_lam = self.A.shape[1]
        H = np.zeros((n_lam + m, n_lam + m))
        H[:n_lam, :n_lam] = 0.5 * self.A.T @ MA
        if m:
            v = self.beta_flat.T @ y                       # (2M,)
            g_c = -0.25 * np.sum(v.reshape(-1, 2) ** 2, axis=1) + self.rr
            U = self.A.T @ MB                              # (2K, 2M)
            H_lc = -0.5 * (U * v[None, :]).reshape(n_lam, m, 2).sum(axis=2)
            S = self.beta_flat.T @ MB                      # (2M, 2M)
            T = S * np.outer(v, v)
            H_cc = 0.5 * T.reshape(m, 2, m, 2).sum(axis=(1, 3))
            H[:n_lam, n_lam:] = H_lc
            H[n_lam:, :n_lam] = H_lc.T
            H[n_lam:, n_lam:] = H_cc
            grad = np.concatenate([g_lam, g_c])
        else:
            grad = g_lam
        return val, grad, H, y


def dual_value_and_gradient(p: CiProblem, lam: np.ndarray, c: np.ndarray):
    """Objective and gradient of the (minimization-form) dual function.

    Value is (1/4) lam^T A^T M A lam - tan(psi) sqrt(gamma)^T 1^T lam
    + sigma_R^2 R^T c with M = (I + beta diag(c~) beta^T)^{-1}.
    """
    lam = np.asarray(lam, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(lam < 0) or np.any(c < 0):
        raise ValueError("dual variables must be nonnegative")
    val, grad, _ = _DualWork(p).value_grad(lam, c)
    return val, grad


def _project(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _run_projection(work: _DualWork, x0: np.ndarray, opts: GpOptions,
                    n_lam: int, infeas_bound: float):
    """Projected gradient with Armijo backtracking on f; returns the final
    point, diagnostics, and the accepted-objective trajectory."""

    x = x0.copy()
    f, g, _ = work.value_grad(x[:n_lam], x[n_lam:])
    traj = [-f]
    residual = np.inf
    a = opts.armijo_init
    for it in range(1, opts.max_iter + 1):
        residual = np.max(np.abs(x - _project(x - g)))
        if residual < opts.tol:
            return x, f, it - 1, residual, True, traj
        a = min(a / opts.armijo_shrink, opts.armijo_init)
        accepted = False
        for _ in range(opts.armijo_max_backtracks):
            x_new = _project(x - a * g)
            step = x_new - x
            f_new, g_new, _ = work.value_grad(x_new[:n_lam], x_new[n_lam:])
            if f_new <= f + opts.armijo_c1 * float(g @ step):
                accepted = True
                break
            a *= opts.armijo_shrink
        if not accepted:
            # step collapsed below line-search resolution: treat as converged
            return x, f, it, residual, residual < np.sqrt(opts.tol), traj
        x, f, g = x_new, f_new, g_new
        traj.append(-f)
        if -f > infeas_bound:
            raise InfeasibleError(
                f"dual objective exceeded {infeas_bound:.3e}; "
                "the primal CI problem is infeasible (INR caps too tight)")
    return x, f, opts.max_iter, residual, False, traj


def _polish(work: _DualWork, x: np.ndarray, opts: GpOptions, n_lam: int,
            f_in: float, traj: list):
    """Two-metric projected Newton refinement.

    Near the optimum the projection loop crawls; a Newton step restricted
    to the free variables (active bounds follow the negative gradient)
    converges superlinearly and pushes the fixed-point residual to the
    tight tolerance the recovered primal point needs."""
    f = f_in
    residual = np.inf
    for it in range(200):
        val, g, H, _ = work.value_grad_hess(x[:n_lam], x[n_lam:])
        f = val
        residual = np.max(np.abs(x - _project(x - g)))
        if residual < opts.tol:
            return x, f, it, residual, True
        eps = min(1e-6, residual)
        active = (x <= eps) & (g > 0)
        free = ~active
        d = -g.copy()
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            scale = max(float(np.trace(Hff)) / max(1, Hff.shape[0]), 1e-30)
            for reg in (0.0, 1e-12, 1e-8, 1e-4):
                try:
                    step = np.linalg.solve(
                        Hff + reg * scale * np.eye(Hff.shape[0]), -g[free])
                except np.linalg.LinAlgError:
                    continue
                if float(g[free] @ step) < 0:
                    d[free] = step
                    break
        a = 1.0
        improved = False
        noise = 1e-12 * (1.0 + abs(f))   # resolution limit of f in doubles
        for _ in range(opts.armijo_max_backtracks):
            x_new = _project(x + a * d)
            f_new, g_new, _ = work.value_grad(x_new[:n_lam], x_new[n_lam:])
            if f_new <= f + opts.armijo_c1 * float(g @ (x_new - x)):
                improved = True
                break
            # near the optimum the decrease drowns in rounding; fall back
            # to contraction of the fixed-point residual
            res_new = np.max(np.abs(x_new - _project(x_new - g_new)))
            if f_new <= f + noise and res_new <= 0.9 * residual:
                improved = True
                break
            a *= opts.armijo_shrink
        if not improved:
            return x, f, it, residual, False
        x, f = x_new, min(f, f_new)
        traj.append(-f)
    return x, f, 200, residual, residual < opts.tol


def _drive(work: _DualWork, x0: np.ndarray, opts: GpOptions, n_lam: int,
           bound: float):
    """Projection bursts interleaved with Newton polish until the
    fixed-point residual meets tol or the iteration budget runs out."""
    x = x0
    total = 0
    f = np.inf
    res = np.inf
    traj = None
    burst = 300
    while total < opts.max_iter:
        stage = GpOptions(**{**opts.__dict__, "tol": max(opts.tol, 1e-3),
                             "max_iter": min(burst, opts.max_iter - total)})
        x, f, it, res, ok, tr = _run_projection(work, x, stage, n_lam, bound)
        traj = tr if traj is None else traj + tr[1:]
        total += max(it, 1)
        x, f, extra, res2, ok2 = _polish(work, x, opts, n_lam, f, traj)
        total += extra
        if -f > bound:
            raise InfeasibleError(
                f"dual objective exceeded {bound:.3e}; "
                "the primal CI problem is infeasible (INR caps too tight)")
        if ok2:
            return x, f, total, res2, True, traj
        if extra == 0 and it == 0:
            # neither stage can move: numerically at the achievable floor
            return x, f, total, min(res, res2), min(res, res2) < 1e2 * opts.tol, traj
        res = min(res, res2)
        burst *= 2
    return x, f, total, res, res < opts.tol, traj


def solve_gp(p: CiProblem, opts: GpOptions = GpOptions()):
    """Solve the CI power minimization through its dual (Algorithm-1 style).

    Returns (DualState, BeamformingSolution).  Raises InfeasibleError when
    the dual diverges; a non-converged state is returned flagged when the
    iteration budget runs out.
    """
    work = _DualWork(p)
    n_lam = 2 * p.k
    rng = np.random.default_rng(opts.seed)
    x0 = rng.random(n_lam + p.m) / (n_lam + p.m)
    bound = opts.infeasible_factor * float(np.sum(p.gamma_t))
    x, f, iters, res, ok, traj = _drive(work, x0, opts, n_lam, bound)
    lam, c = x[:n_lam], x[n_lam:]
    w2 = work.primal_w2(lam, c)
    state = DualState(lam=lam, c=c, dual_objective=-f, iterations=iters,
                      residual=res, converged=ok,
                      trajectory=np.asarray(traj))
    return state, recover_solution(p, w2)


def fast_path(p: CiProblem, opts: GpOptions = GpOptions()):
    """Corollary-1 shortcut: solve the INR-unconstrained dual and return its
    primal point when every INR cap turns out inactive, else None."""
    relaxed = CiProblem(
        h_bar=p.h_bar, b=p.b, beta=np.zeros((0, 2 * p.n, 2)), Pi=p.Pi,
        gamma_t=p.gamma_t, r_cap=np.zeros(0), sigma_r2=p.sigma_r2,
        psi=p.psi, phases=p.phases)
    work = _DualWork(relaxed)
    n_lam = 2 * p.k
    rng = np.random.default_rng(opts.seed)
    x0 = rng.random(n_lam) / max(n_lam, 1)
    bound = opts.infeasible_factor * float(np.sum(p.gamma_t))
    x, f, iters, res, ok, traj = _drive(work, x0, opts, n_lam, bound)
    w2 = work.primal_w2(x, np.zeros(0))
    if not np.all(p.inr_values(w2) < p.r_cap * p.sigma_r2):
        return None
    state = DualState(lam=x, c=np.zeros(p.m), dual_objective=-f,
                      iterations=iters, residual=res, converged=ok,
                      trajectory=np.asarray(traj))
    return state, recover_solution(p, w2)
