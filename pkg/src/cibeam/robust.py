"""Worst-case robust CI power minimization under norm-bounded CSI errors.

The SINR cone constraints pick up a norm term delta_h * ||w1 -/+ w2*tan(psi)||
(the worst case of the error inner product over the ball) and an inflated
target using (||f_hat|| + delta_f)^2; the INR constraints are tightened by
(2*delta_g^2 + 4*delta_g*||g_bar||) * ||w2||^2.  With delta = 0 every
constructor reproduces the nominal problem coefficients exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ci import (BeamformingSolution, CiProblem, InfeasibleError, db_to_lin,
                 build_ci_problem, recover_solution)
from .qcqp import (QcqpInfeasibleError, QcqpOptions, QcqpSpec, QuadIneq,
                   SocIneq, solve)
from .scene import ChannelSet

__all__ = [
    "RobustCiProblem",
    "worst_case_gamma",
    "robust_inr_constraint",
    "robust_sinr_constraints",
    "build_robust_problem",
    "solve_robust",
]


def worst_case_gamma(gamma_lin: float, f_hat: np.ndarray, delta_f: float,
                     sigma_c2: float, p_r: float) -> float:
    """Inflated effective target Gamma*(sigma_C^2 + P_R*(||f_hat||+delta_f)^2)."""
    if delta_f < 0:
        raise ValueError("delta_f must be nonnegative")
    return gamma_lin * (sigma_c2 + p_r * (np.linalg.norm(f_hat) + delta_f) ** 2)


def robust_inr_constraint(g_bar: np.ndarray, delta_g: float, r_cap: float,
                          sigma_r2: float, Pi: np.ndarray) -> QuadIneq:
    """Quadratic constraint on w2 encoding the worst-case INR bound:
    |g_bar^T w2|^2 + |g_bar^T w1|^2 + (2 d^2 + 4 d ||g_bar||) ||w2||^2 <= R s^2
    with w1 = Pi w2."""
    if delta_g < 0:
        raise ValueError("delta_g must be nonnegative")
    n2 = g_bar.shape[0]
    g1 = Pi.T @ g_bar                 # (g_bar^T Pi w2) = (Pi^T g_bar)^T w2
    Q = np.outer(g_bar, g_bar) + np.outer(g1, g1)
    if delta_g > 0:
        Q = Q + (2.0 * delta_g ** 2
                 + 4.0 * delta_g * np.linalg.norm(g_bar)) * np.eye(n2)
    return QuadIneq(Q, np.zeros(n2), r_cap * sigma_r2)


def robust_sinr_constraints(h_bar_hat: np.ndarray, delta_h: float,
                            gamma_wc: float, psi: float,
                            Pi: np.ndarray) -> tuple:
    """The two worst-case CI cone constraints as second-order cones on w2.

    +/- h^T w1 - h^T w2 tan(psi) + delta_h ||w1 -/+ w2 tan(psi)||
      + sqrt(gamma_wc) tan(psi) <= 0, with w1 = Pi w2.
    """
    if delta_h < 0:
        raise ValueError("delta_h must be nonnegative")
    n2 = h_bar_hat.shape[0]
    t = np.tan(psi)
    b_hat = Pi.T @ h_bar_hat
    offset = -np.sqrt(gamma_wc) * t
    # ||d (Pi - tI) w2|| <= (t h - b)^T w2 - sqrt(g) t
    upper = SocIneq(B=delta_h * (Pi - t * np.eye(n2)), e=np.zeros(n2),
                    f=t * h_bar_hat - b_hat, g=offset)
    # ||d (Pi + tI) w2|| <= (t h + b)^T w2 - sqrt(g) t
    lower = SocIneq(B=delta_h * (Pi + t * np.eye(n2)), e=np.zeros(n2),
                    f=t * h_bar_hat + b_hat, g=offset)
    return upper, lower


@dataclass(frozen=True)
class RobustCiProblem:
    """Nominal problem built from the channel estimates plus the error
    bounds and the worst-case-inflated targets."""

    nominal: CiProblem
    delta_h: float
    delta_g: float
    delta_f: float
    gamma_wc: np.ndarray          # inflated effective targets, (K,)

    @property
    def n(self):
        return self.nominal.n


def build_robust_problem(cs: ChannelSet, phases: np.ndarray, order: int,
                         gamma_db, r_db, *, sigma_c2: float = 1.0,
                         sigma_r2: float = 1.0, p_r: float = 1.0,
                         delta_h: float = None, delta_g: float = None,
                         delta_f: float = None) -> RobustCiProblem:
    """Assemble the robust problem from the estimated channels of ``cs``.

    Error bounds default to the ones recorded on the channel set.
    """
    delta_h = cs.delta_h if delta_h is None else delta_h
    delta_g = cs.delta_g if delta_g is None else delta_g
    delta_f = cs.delta_f if delta_f is None else delta_f
    nominal = build_ci_problem(cs, phases, order, gamma_db, r_db,
                               sigma_c2=sigma_c2, sigma_r2=sigma_r2,
                               p_r=p_r, estimated=True)
    gamma = np.broadcast_to(db_to_lin(gamma_db), (cs.k,))
    gamma_wc = np.array([
        worst_case_gamma(gamma[i], cs.F_est[:, i], delta_f, sigma_c2, p_r)
        for i in range(cs.k)])
    return RobustCiProblem(nominal=nominal, delta_h=delta_h,
                           delta_g=delta_g, delta_f=delta_f,
                           gamma_wc=gamma_wc)


def solve_robust(rp: RobustCiProblem, opts: QcqpOptions = None
                 ) -> BeamformingSolution:
    """Solve the worst-case robust power minimization (in w2 alone)."""
    p = rp.nominal
    n2 = 2 * p.n
    soc = []
    for i in range(p.k):
        soc.extend(robust_sinr_constraints(p.h_bar[i], rp.delta_h,
                                           rp.gamma_wc[i], p.psi, p.Pi))
    quad = tuple(
        robust_inr_constraint(p.beta[m][:, 0], rp.delta_g, p.r_cap[m],
                              p.sigma_r2, p.Pi)
        for m in range(p.m))
    spec = QcqpSpec(n=n2, q0=np.eye(n2), l0=np.zeros(n2),
                    linear=(), quadratic=quad, soc=tuple(soc))
    try:
        res = solve(spec, opts or QcqpOptions())
    except QcqpInfeasibleError as exc:
        raise InfeasibleError(
            "robust problem infeasible: error bounds too large for the "
            "requested targets") from exc
    return recover_solution(p, res.x, objective=res.objective)
