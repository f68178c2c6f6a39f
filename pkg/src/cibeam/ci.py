"""Constructive-interference problem construction and bookkeeping.

Builds the real-valued power-minimization data (rotated channels, the
permutation that swaps real and imaginary blocks, the per-antenna radar
matrices) from a channel set and one symbol slot, and recovers complex
precoders and performance numbers from a real solution vector.

Conventions: SINR/INR targets enter in dB and are converted as
10**(dB/10); powers are in mW throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ChannelSet

__all__ = [
    "CiProblem",
    "BeamformingSolution",
    "db_to_lin",
    "lin_to_db",
    "dbm_to_mw",
    "rotate_channels",
    "realify",
    "build_ci_problem",
    "recover_solution",
    "evaluate",
    "InfeasibleError",
]


class InfeasibleError(RuntimeError):
    """Raised when the requested targets cannot be met."""


def db_to_lin(x_db) -> float:
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x) -> float:
    return 10.0 * np.log10(x)


def dbm_to_mw(x_dbm) -> float:
    return 10.0 ** (np.asarray(x_dbm, dtype=float) / 10.0)


@dataclass(frozen=True)
class CiProblem:
    """Real representation of the CI power-minimization data.

    h_bar : (K, 2N) realified rotated user channels [Re h~; Im h~]
    b     : (K, 2N) rotated-imaginary vectors, b_i = Pi^T h_bar_i
    beta  : (M, 2N, 2) per-radar-antenna matrices
    Pi    : (2N, 2N) block permutation with Pi @ Pi = -I
    gamma_t : (K,) effective SINR targets (mW, linear)
    r_cap   : (M,) INR caps (linear)
    """

    h_bar: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    Pi: np.ndarray
    gamma_t: np.ndarray
    r_cap: np.ndarray
    sigma_r2: float
    psi: float
    phases: np.ndarray = None   # the symbol slot (K,), kept for recovery

    @property
    def n(self) -> int:
        return self.h_bar.shape[1] // 2

    @property
    def k(self) -> int:
        return self.h_bar.shape[0]

    @property
    def m(self) -> int:
        return self.beta.shape[0]

    def dual_matrix(self) -> np.ndarray:
        """A = [h_bar*tan(psi) - b, h_bar*tan(psi) + b], shape (2N, 2K)."""
        t = np.tan(self.psi)
        return np.concatenate([(t * self.h_bar - self.b).T,
                               (t * self.h_bar + self.b).T], axis=1)

    def ci_residuals(self, w2: np.ndarray) -> np.ndarray:
        """The 2K cone constraint values (feasible iff all <= 0)."""
        t = np.tan(self.psi)
        lin_u = self.b @ w2 - t * (self.h_bar @ w2)
        lin_v = -self.b @ w2 - t * (self.h_bar @ w2)
        off = np.sqrt(self.gamma_t) * t
        return np.concatenate([lin_u + off, lin_v + off])

    def inr_values(self, w2: np.ndarray) -> np.ndarray:
        """Per-antenna interference power |g~_m^T w|^2 = ||beta_m^T w2||^2."""
        proj = np.einsum("mnc,n->mc", self.beta, w2)
        return np.sum(proj ** 2, axis=1)


@dataclass(frozen=True)
class BeamformingSolution:
    """Complex precoding solution and its achieved performance."""

    w: np.ndarray           # common (virtual multicast) vector, (N,)
    t: np.ndarray           # per-user precoders, (N, K)
    power: float            # instantaneous transmit power ||w||^2, mW
    inr: np.ndarray = None  # per-antenna INR (linear)
    sinr: np.ndarray = None
    ci_margin: np.ndarray = None
    objective: float = None  # solver objective (power or interference, mW)


def rotate_channels(cs: ChannelSet, phases: np.ndarray, gamma_db,
                    p_r: float = 1.0, sigma_c2: float = 1.0,
                    estimated: bool = False):
    """Rotate channels into the reference-symbol frame of one slot.

    Returns (h_tilde (N, K), g_tilde (N, M), gamma_t (K,)), where
    h~_i = h_i * exp(j(phi_1 - phi_i)), g~_m = g_m * exp(j phi_1) and
    gamma_t_i = Gamma_i * (sigma_C^2 + P_R ||f_i||^2).
    """
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (cs.k,):
        raise ValueError(f"expected {cs.k} phases, got shape {phases.shape}")
    H = cs.H_est if estimated else cs.H
    G = cs.G_est if estimated else cs.G
    F = cs.F_est if estimated else cs.F
    rot = np.exp(1j * (phases[0] - phases))
    h_t = H * rot[np.newaxis, :]
    g_t = G * np.exp(1j * phases[0])
    gamma = np.broadcast_to(db_to_lin(gamma_db), (cs.k,))
    gamma_t = gamma * (sigma_c2 + p_r * np.sum(np.abs(F) ** 2, axis=0))
    return h_t, g_t, gamma_t


def _perm_matrix(n: int) -> np.ndarray:
    eye = np.eye(n)
    top = np.concatenate([np.zeros((n, n)), -eye], axis=1)
    bot = np.concatenate([eye, np.zeros((n, n))], axis=1)
    return np.concatenate([top, bot], axis=0)


def realify(h_t: np.ndarray, g_t: np.ndarray, gamma_t: np.ndarray,
            r_cap: np.ndarray, sigma_r2: float, psi: float,
            phases: np.ndarray = None) -> CiProblem:
    """Assemble the real-valued problem data from rotated complex channels."""
    n = h_t.shape[0]
    Pi = _perm_matrix(n)
    h_bar = np.concatenate([h_t.real, h_t.imag], axis=0).T      # (K, 2N)
    b = h_bar @ Pi                                              # b_i = Pi^T h_bar_i
    m = g_t.shape[1]
    beta = np.empty((m, 2 * n, 2))
    beta[:, :n, 0] = g_t.real.T
    beta[:, n:, 0] = g_t.imag.T
    beta[:, :n, 1] = g_t.imag.T
    beta[:, n:, 1] = -g_t.real.T
    return CiProblem(
        h_bar=h_bar, b=b, beta=beta, Pi=Pi,
        gamma_t=np.asarray(gamma_t, dtype=float),
        r_cap=np.asarray(r_cap, dtype=float),
        sigma_r2=sigma_r2, psi=psi,
        phases=None if phases is None else np.asarray(phases, dtype=float),
    )


def build_ci_problem(cs: ChannelSet, phases: np.ndarray, order: int,
                     gamma_db, r_db, *, sigma_c2: float = 1.0,
                     sigma_r2: float = 1.0, p_r: float = 1.0,
                     estimated: bool = False) -> CiProblem:
    """One-call construction of the real CI problem for a symbol slot."""
    h_t, g_t, gamma_t = rotate_channels(cs, phases, gamma_db, p_r=p_r,
                                        sigma_c2=sigma_c2, estimated=estimated)
    if r_db is None:
        r_cap = np.full((cs.m,), np.inf)   # uncapped (budgeted problems)
    else:
        r_cap = np.broadcast_to(db_to_lin(r_db), (cs.m,))
    return realify(h_t, g_t, gamma_t, r_cap, sigma_r2, np.pi / order,
                   phases=phases)


def recover_solution(problem: CiProblem, w2: np.ndarray,
                     objective: float = None) -> BeamformingSolution:
    """Reassemble w from w2 = [w_R; -w_I] and the per-user precoders."""
    n, k = problem.n, problem.k
    w = w2[:n] - 1j * w2[n:]
    if problem.phases is None:
        t = np.tile(w[:, None] / k, (1, k))
    else:
        rot = np.exp(1j * (problem.phases[0] - problem.phases))
        t = w[:, None] * rot[None, :] / k
    power = float(np.vdot(w, w).real)
    return BeamformingSolution(
        w=w, t=t, power=power,
        inr=problem.inr_values(w2) / problem.sigma_r2,
        ci_margin=-problem.ci_residuals(w2).reshape(2, k).max(axis=0),
        objective=power if objective is None else objective,
    )


def evaluate(cs: ChannelSet, phases: np.ndarray, solution: BeamformingSolution,
             *, order: int, gamma_db=None, p_r: float = 1.0,
             sigma_c2: float = 1.0, sigma_r2: float = 1.0) -> dict:
    """Performance report for precoders on the true channels of one slot.

    Returns the classical per-user SINR, the per-antenna INR with the
    actual symbols, the instantaneous transmit power and, when a target is
    given, the CI constraint slack per user.
    """
    phases = np.asarray(phases, dtype=float)
    d = np.exp(1j * phases)
    t = solution.t
    # SINR per user
    hv = cs.H.T @ t                      # (K, K): hv[i, k] = h_i^T t_k
    sig = np.abs(np.diag(hv)) ** 2
    interf = np.sum(np.abs(hv) ** 2, axis=1) - sig
    radar_leak = p_r * np.sum(np.abs(cs.F) ** 2, axis=0)
    sinr = sig / (interf + radar_leak + sigma_c2)
    # INR per radar antenna with the actual slot symbols
    x = t @ d                            # transmit vector sum_k t_k d_k
    inr = np.abs(cs.G.T @ x) ** 2 / sigma_r2
    # instantaneous power of the slot
    w_slot = t @ np.exp(1j * (phases - phases[0]))
    power = float(np.vdot(w_slot, w_slot).real)
    report = {"sinr": sinr, "inr": inr, "power_mw": power}
    if gamma_db is not None:
        h_t, _, gamma_t = rotate_channels(cs, phases, gamma_db, p_r=p_r,
                                          sigma_c2=sigma_c2)
        z = h_t.T @ w_slot
        psi = np.pi / order
        report["ci_margin"] = ((z.real - np.sqrt(gamma_t)) * np.tan(psi)
                               - np.abs(z.imag))
    return report


def build_p5_qcqp(problem: CiProblem):
    """The real CI power minimization as a generic QCQP instance."""
    from .qcqp import LinearIneq, QcqpSpec, QuadIneq

    n2 = 2 * problem.n
    t = np.tan(problem.psi)
    off = np.sqrt(problem.gamma_t) * t
    linear = []
    for i in range(problem.k):
        linear.append(LinearIneq(problem.b[i] - t * problem.h_bar[i], -off[i]))
        linear.append(LinearIneq(-problem.b[i] - t * problem.h_bar[i], -off[i]))
    quad = tuple(
        QuadIneq(problem.beta[m] @ problem.beta[m].T, np.zeros(n2),
                 problem.r_cap[m] * problem.sigma_r2)
        for m in range(problem.m))
    return QcqpSpec(n=n2, q0=np.eye(n2), l0=np.zeros(n2),
                    linear=tuple(linear), quadratic=quad)


def solve_p5_ipm(problem: CiProblem, opts=None) -> BeamformingSolution:
    """Cross-check path: solve the power minimization with the generic
    interior-point engine instead of the dual projection."""
    from .qcqp import QcqpInfeasibleError, QcqpOptions, solve

    spec = build_p5_qcqp(problem)
    try:
        res = solve(spec, opts or QcqpOptions())
    except QcqpInfeasibleError as exc:
        raise InfeasibleError(str(exc)) from exc
    return recover_solution(problem, res.x, objective=res.objective)


def solve_interf_min(problem: CiProblem, p_budget_mw: float,
                     opts=None) -> BeamformingSolution:
    """Minimize total interference to radar under CI constraints and a
    transmit-power budget (the interference-minimization problem)."""
    from .qcqp import LinearIneq, QcqpInfeasibleError, QcqpOptions, QuadIneq, \
        QcqpSpec, solve

    if p_budget_mw <= 0:
        raise ValueError("power budget must be positive")
    n2 = 2 * problem.n
    t = np.tan(problem.psi)
    off = np.sqrt(problem.gamma_t) * t
    linear = []
    for i in range(problem.k):
        linear.append(LinearIneq(problem.b[i] - t * problem.h_bar[i], -off[i]))
        linear.append(LinearIneq(-problem.b[i] - t * problem.h_bar[i], -off[i]))
    q0 = np.zeros((n2, n2))
    for m in range(problem.m):
        q0 += problem.beta[m] @ problem.beta[m].T
    budget = QuadIneq(np.eye(n2), np.zeros(n2), p_budget_mw)
    spec = QcqpSpec(n=n2, q0=q0, l0=np.zeros(n2),
                    linear=tuple(linear), quadratic=(budget,))
    try:
        res = solve(spec, opts or QcqpOptions())
    except QcqpInfeasibleError as exc:
        raise InfeasibleError(
            f"SINR targets unreachable within budget {p_budget_mw} mW") from exc
    return recover_solution(problem, res.x, objective=res.objective)
