"""Small log-barrier interior-point solver for convex QCQPs.

Handles objectives ``x^T Q0 x + l0^T x`` with linear inequalities,
convex quadratic inequalities, and second-order-cone constraints
``||B x + e|| <= f^T x + g`` (needed by the robust CI formulation, whose
worst-case SINR constraints carry a norm term).  Problem sizes here are a
few dozen variables, so a dense Newton method with a standard barrier is
both simple and robust.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearIneq",
    "QuadIneq",
    "SocIneq",
    "QcqpSpec",
    "QcqpOptions",
    "QcqpResult",
    "QcqpInfeasibleError",
    "NumericalFailureError",
    "solve",
]


class QcqpInfeasibleError(RuntimeError):
    """Phase-1 could not produce a strictly feasible point."""


class NumericalFailureError(RuntimeError):
    """Newton iterations failed to make progress."""


@dataclass(frozen=True)
class LinearIneq:
    """a^T x <= b"""
    a: np.ndarray
    b: float


@dataclass(frozen=True)
class QuadIneq:
    """x^T Q x + q^T x <= r with Q symmetric PSD"""
    Q: np.ndarray
    q: np.ndarray
    r: float


@dataclass(frozen=True)
class SocIneq:
    """||B x + e|| <= f^T x + g"""
    B: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: float


@dataclass(frozen=True)
class QcqpSpec:
    n: int
    q0: np.ndarray
    l0: np.ndarray
    linear: tuple = ()
    quadratic: tuple = ()
    soc: tuple = ()

    def validate(self):
        if not np.all(np.isfinite(self.q0)) or not np.all(np.isfinite(self.l0)):
            raise ValueError("objective coefficients must be finite")
        _assert_psd(self.q0, "objective")
        for j, con in enumerate(self.quadratic):
            _assert_psd(con.Q, f"quadratic constraint {j}")

    @property
    def barrier_complexity(self) -> float:
        # self-concordance parameter: 1 per scalar inequality, 3 per cone
        # (the cone barrier -log(t^2 - ||u||^2) - log(t))
        return len(self.linear) + len(self.quadratic) + 3 * len(self.soc)


def _assert_psd(mat, label):
    mat = np.asarray(mat)
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{label}: matrix not symmetric")
    w = np.linalg.eigvalsh(mat)
    if w.min() < -1e-9 * max(1.0, w.max()):
        raise ValueError(f"{label}: matrix not PSD (min eig {w.min():.3e})")


@dataclass(frozen=True)
class QcqpOptions:
    gap_tol: float = 1e-9
    mu: float = 10.0
    t0: float = 1.0
    newton_tol: float = 1e-11     # on the squared Newton decrement / 2
    max_newton: int = 200
    phase1_margin: float = 1e-6


@dataclass
class QcqpResult:
    x: np.ndarray
    objective: float
    status: str
    gap: float
    kkt_residual: float
    newton_iterations: int


def _slacks(spec: QcqpSpec, x: np.ndarray) -> np.ndarray:
    vals = []
    for con in spec.linear:
        vals.append(con.b - float(con.a @ x))
    for con in spec.quadratic:
        vals.append(con.r - float(x @ (con.Q @ x)) - float(con.q @ x))
    for con in spec.soc:
        t = float(con.f @ x) + con.g
        u = con.B @ x + con.e
        vals.append(t - float(np.linalg.norm(u)))
    return np.array(vals) if vals else np.array([np.inf])


class _Eval:
    """Precompiled barrier evaluator: vectorized linear block plus loops
    over the (few) quadratic/cone constraints; a value-only path keeps the
    line searches cheap."""

    def __init__(self, spec: QcqpSpec):
        self.spec = spec
        self.n = spec.n
        if spec.linear:
            self.AL = np.array([c.a for c in spec.linear], dtype=float)
            self.bL = np.array([c.b for c in spec.linear], dtype=float)
        else:
            self.AL = None
        self.quads = [(c.Q, 2.0 * c.Q, np.asarray(c.q, float), float(c.r))
                      for c in spec.quadratic]
        self.socs = [(np.asarray(c.B, float), np.asarray(c.e, float),
                      np.asarray(c.f, float), float(c.g),
                      2.0 * c.B.T @ c.B) for c in spec.soc]

    def value(self, x: np.ndarray):
        """Barrier value phi(x); None when x is not strictly feasible."""
        phi = 0.0
        if self.AL is not None:
            s = self.bL - self.AL @ x
            if s.min() <= 0:
                return None
            phi = -float(np.sum(np.log(s)))
        for Q, _, q, r in self.quads:
            s = r - float(x @ (Q @ x)) - float(q @ x)
            if s <= 0:
                return None
            phi -= np.log(s)
        for B, e, f, g, _ in self.socs:
            t = float(f @ x) + g
            u = B @ x + e
            psi = t * t - float(u @ u)
            if t <= 0 or psi <= 0:
                return None
            phi -= np.log(psi) + np.log(t)
        return phi

    def full(self, x: np.ndarray):
        """(phi, grad, hess) of the barrier; None when infeasible."""
        n = self.n
        phi = 0.0
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        if self.AL is not None:
            s = self.bL - self.AL @ x
            if s.min() <= 0:
                return None
            phi -= float(np.sum(np.log(s)))
            grad += self.AL.T @ (1.0 / s)
            scaled = self.AL / s[:, None]
            hess += scaled.T @ scaled
        for Q, Q2, q, r in self.quads:
            gq = Q2 @ x + q
            s = r - float(x @ (Q @ x)) - float(q @ x)
            if s <= 0:
                return None
            phi -= np.log(s)
            grad += gq / s
            hess += np.outer(gq, gq) / s ** 2 + Q2 / s
        for B, e, f, g, BtB2 in self.socs:
            t = float(f @ x) + g
            u = B @ x + e
            psi = t * t - float(u @ u)
            if t <= 0 or psi <= 0:
                return None
            dpsi = 2.0 * t * f - 2.0 * (B.T @ u)
            phi -= np.log(psi) + np.log(t)
            grad += -dpsi / psi - f / t
            hess += (np.outer(dpsi, dpsi) / psi ** 2
                     - (2.0 * np.outer(f, f) - BtB2) / psi
                     + np.outer(f, f) / t ** 2)
        return phi, grad, hess


def _barrier(spec: QcqpSpec, x: np.ndarray):
    """phi(x), grad, hess of the full barrier; None when x is infeasible."""
    return _Eval(spec).full(x)


def _center(ev: _Eval, x: np.ndarray, t: float, opts: QcqpOptions,
            stop_cb=None):
    """Newton minimization of t*f0 + phi from a strictly feasible x."""
    spec = ev.spec
    iters = 0
    reg = 0.0
    eye = np.eye(spec.n)
    for _ in range(opts.max_newton):
        bar = ev.full(x)
        if bar is None:
            raise NumericalFailureError("iterate left the feasible region")
        phi, bgrad, bhess = bar
        f0 = float(x @ (spec.q0 @ x)) + float(spec.l0 @ x)
        val = t * f0 + phi
        grad = t * (2.0 * spec.q0 @ x + spec.l0) + bgrad
        hess = 2.0 * t * spec.q0 + bhess
        hscale = max(float(np.trace(hess)) / spec.n, 1e-30)
        moved = False
        # the phase-1 Hessian can be singular (zero objective curvature),
        # so regularize adaptively until the damped step makes progress
        for _ in range(40):
            try:
                dx = np.linalg.solve(hess + reg * hscale * eye, -grad)
            except np.linalg.LinAlgError:
                dx = None
            decrement = float(-grad @ dx) if dx is not None else -1.0
            if dx is None or not np.isfinite(decrement) or decrement <= 0:
                reg = max(reg * 100.0, 1e-14)
                continue
            if decrement / 2.0 < opts.newton_tol and reg == 0.0:
                return x, iters
            step = 1.0
            for _ in range(60):
                x_new = x + step * dx
                phi_new = ev.value(x_new)
                if phi_new is not None:
                    f0n = float(x_new @ (spec.q0 @ x_new)) \
                        + float(spec.l0 @ x_new)
                    if t * f0n + phi_new <= val - 0.25 * step * decrement:
                        moved = True
                        break
                step *= 0.5
            if moved:
                if decrement / 2.0 < opts.newton_tol:
                    # damped step at near-zero decrement: accept and stop
                    x = x_new
                    return x, iters + 1
                reg = 0.0 if reg < 1e-13 else reg / 100.0
                break
            reg = max(reg * 100.0, 1e-14)
        if not moved:
            return x, iters  # no damping level makes progress
        x = x_new
        iters += 1
        if stop_cb is not None and stop_cb(x):
            return x, iters
    return x, iters


def _shifted_spec(spec: QcqpSpec) -> QcqpSpec:
    """Phase-1 problem in (x, s): minimize s with every constraint relaxed
    by s, plus s >= -1 to keep the problem bounded."""
    n = spec.n
    lin = [LinearIneq(np.concatenate([c.a, [-1.0]]), c.b) for c in spec.linear]
    lin.append(LinearIneq(np.concatenate([np.zeros(n), [-1.0]]), 1.0))
    quad = []
    for c in spec.quadratic:
        Q = np.zeros((n + 1, n + 1))
        Q[:n, :n] = c.Q
        quad.append(QuadIneq(Q, np.concatenate([c.q, [-1.0]]), c.r))
    soc = [SocIneq(np.concatenate([c.B, np.zeros((c.B.shape[0], 1))], axis=1),
                   c.e, np.concatenate([c.f, [1.0]]), c.g) for c in spec.soc]
    l0 = np.zeros(n + 1)
    l0[n] = 1.0
    # tiny tether on x: without objective curvature the feasibility
    # iterates can drift to enormous norms along flat directions
    return QcqpSpec(n=n + 1, q0=1e-6 * np.eye(n + 1), l0=l0,
                    linear=tuple(lin), quadratic=tuple(quad), soc=tuple(soc))


def _phase1(spec: QcqpSpec, opts: QcqpOptions, x0: np.ndarray) -> np.ndarray:
    shifted = _shifted_spec(spec)
    ev = _Eval(shifted)
    viol = -_slacks(spec, x0)
    s0 = max(float(np.max(viol)), -0.5) + 1.0
    z = np.concatenate([x0, [s0]])
    margin = opts.phase1_margin

    def done(zz):
        return zz[-1] < -margin

    t = 1.0
    while shifted.barrier_complexity / t > margin / 10.0:
        z, _ = _center(ev, z, t, opts, stop_cb=done)
        if done(z):
            return z[:-1]
        t *= opts.mu
    raise QcqpInfeasibleError(
        f"phase-1 stalled at infeasibility {z[-1]:.3e}; no strictly "
        "feasible point found")


def solve(spec: QcqpSpec, opts: QcqpOptions = QcqpOptions(),
          x0: np.ndarray | None = None) -> QcqpResult:
    """Barrier method with Newton inner iterations.

    Raises QcqpInfeasibleError when no strictly feasible point exists and
    NumericalFailureError when Newton cannot make progress.
    """
    spec.validate()
    if x0 is None or np.min(_slacks(spec, np.asarray(x0, dtype=float))) <= 0:
        start = np.zeros(spec.n) if x0 is None else np.asarray(x0, dtype=float)
        if np.min(_slacks(spec, start)) <= opts.phase1_margin:
            x = _phase1(spec, opts, start)
        else:
            x = start
    else:
        x = np.asarray(x0, dtype=float)

    ev = _Eval(spec)
    m_nu = max(spec.barrier_complexity, 1.0)
    t = opts.t0
    total_newton = 0
    while True:
        x, it = _center(ev, x, t, opts)
        total_newton += it
        if m_nu / t <= opts.gap_tol:
            break
        t *= opts.mu

    bar = ev.full(x)
    grad = 2.0 * spec.q0 @ x + spec.l0 + bar[1] / t
    objective = float(x @ (spec.q0 @ x)) + float(spec.l0 @ x)
    return QcqpResult(
        x=x, objective=objective, status="optimal", gap=m_nu / t,
        kkt_residual=float(np.linalg.norm(grad)),
        newton_iterations=total_newton,
    )
