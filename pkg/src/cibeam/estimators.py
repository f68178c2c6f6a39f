"""Estimator-style front end over the functional solvers.

Each precoder follows the fit/transform convention: ``fit`` takes the
channel state and per-user targets, ``transform`` maps a frame of symbol
phases to per-slot transmit vectors.  Parameters are plain constructor
arguments so ``get_params``/``set_params`` work for grid sweeps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import ci, gp
from .qcqp import QcqpOptions
from .robust import build_robust_problem, solve_robust
from .scene import ChannelSet

__all__ = [
    "CiPowerMinBeamformer",
    "CiInterferenceMinBeamformer",
    "RobustCiBeamformer",
]


def _check_channels(channels) -> ChannelSet:
    if not isinstance(channels, ChannelSet):
        raise TypeError("channels must be a ChannelSet")
    return channels


class _CiBase(BaseEstimator):

    def _fit_done(self):
        if not hasattr(self, "solution_"):
            raise RuntimeError("call fit() before transform/predict")

    def fit(self, channels: ChannelSet, phases: np.ndarray):
        phases = np.asarray(phases, dtype=float)
        if phases.ndim != 1:
            raise ValueError("fit expects one slot of phases, shape (K,)")
        sol = self._solve(channels, phases)
        self.channels_ = channels
        self.solution_ = sol
        self.t_ = sol.t
        self.phases_fit_ = phases
        return self

    def transform(self, phases: np.ndarray) -> np.ndarray:
        """Per-slot transmit vectors (N, L) for a frame of phases (K, L).

        The optimum depends on the slot phases only through the
        differences to user 1, with the common phase re-applied as a plain
        rotation, so slots sharing a difference pattern are solved once.
        """
        self._fit_done()
        phases = np.asarray(phases, dtype=float)
        if phases.ndim == 1:
            phases = phases[:, None]
        diffs = phases - phases[:1, :]
        cache = {}
        n = self.t_.shape[0]
        out = np.empty((n, phases.shape[1]), dtype=complex)
        for l in range(phases.shape[1]):
            key = tuple(np.round(diffs[:, l], 12))
            if key not in cache:
                # virtual multicast vector at zero common phase
                cache[key] = self._solve(self.channels_, diffs[:, l]).w
            out[:, l] = cache[key] * np.exp(1j * phases[0, l])
        return out

    def predict(self, phases: np.ndarray) -> np.ndarray:
        return self.transform(phases)

    @property
    def w_(self):
        return self.solution_.w

    @property
    def power_(self):
        return self.solution_.power


class CiPowerMinBeamformer(_CiBase):
    """Symbol-level precoder minimizing transmit power subject to
    constructive-interference SINR regions and radar-band INR caps.

    Solver ``"gp"`` runs the dual projected-gradient method with the
    cap-free fast path; ``"ipm"`` runs the interior-point engine on the
    primal QCQP directly.
    """

    def __init__(self, gamma_db=10.0, r_db=0.0, order=4, sigma_c2=1.0,
                 sigma_r2=1.0, p_r=1.0, solver="gp", tol=None,
                 max_iter=40000, seed=0, use_estimates=False):
        self.gamma_db = gamma_db
        self.r_db = r_db
        self.order = order
        self.sigma_c2 = sigma_c2
        self.sigma_r2 = sigma_r2
        self.p_r = p_r
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.use_estimates = use_estimates

    def _problem(self, channels, phases):
        return ci.build_ci_problem(
            _check_channels(channels), np.asarray(phases, float),
            order=self.order, gamma_db=self.gamma_db, r_db=self.r_db,
            sigma_c2=self.sigma_c2, sigma_r2=self.sigma_r2, p_r=self.p_r,
            estimated=self.use_estimates)

    def _solve(self, channels, phases):
        problem = self._problem(channels, phases)
        if self.solver == "gp":
            opts = gp.GpOptions(max_iter=self.max_iter, seed=self.seed)
            if self.tol is not None:
                opts = gp.GpOptions(tol=self.tol, max_iter=self.max_iter,
                                    seed=self.seed)
            state, sol = gp.solve_gp(problem, opts)
            self.dual_state_ = state
        elif self.solver == "ipm":
            opts = QcqpOptions()
            if self.tol is not None:
                opts = QcqpOptions(gap_tol=self.tol)
            sol = ci.solve_p5_ipm(problem, opts)
            self.dual_state_ = None
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.problem_ = problem
        return sol


class CiInterferenceMinBeamformer(_CiBase):
    """Minimize total radar-band interference under the CI SINR regions
    and a transmit power budget."""

    def __init__(self, gamma_db=10.0, p_budget_mw=100.0, order=4,
                 sigma_c2=1.0, sigma_r2=1.0, p_r=1.0, tol=None, seed=0,
                 use_estimates=False):
        self.gamma_db = gamma_db
        self.p_budget_mw = p_budget_mw
        self.order = order
        self.sigma_c2 = sigma_c2
        self.sigma_r2 = sigma_r2
        self.p_r = p_r
        self.tol = tol
        self.seed = seed
        self.use_estimates = use_estimates

    def _solve(self, channels, phases):
        problem = ci.build_ci_problem(
            _check_channels(channels), np.asarray(phases, float),
            order=self.order, gamma_db=self.gamma_db, r_db=None,
            sigma_c2=self.sigma_c2, sigma_r2=self.sigma_r2, p_r=self.p_r,
            estimated=self.use_estimates)
        opts = QcqpOptions() if self.tol is None else QcqpOptions(
            gap_tol=self.tol)
        self.problem_ = problem
        return ci.solve_interf_min(problem, self.p_budget_mw, opts)


class RobustCiBeamformer(_CiBase):
    """Worst-case robust power minimization under norm-bounded channel
    estimation errors (communication users, radar cross links, and the
    radar-to-user interference channel)."""

    def __init__(self, gamma_db=10.0, r_db=0.0, order=4, sigma_c2=1.0,
                 sigma_r2=1.0, p_r=1.0, delta_h=None, delta_g=None,
                 delta_f=None, tol=None):
        self.gamma_db = gamma_db
        self.r_db = r_db
        self.order = order
        self.sigma_c2 = sigma_c2
        self.sigma_r2 = sigma_r2
        self.p_r = p_r
        self.delta_h = delta_h
        self.delta_g = delta_g
        self.delta_f = delta_f
        self.tol = tol

    def _solve(self, channels, phases):
        problem = build_robust_problem(
            _check_channels(channels), np.asarray(phases, float),
            order=self.order, gamma_db=self.gamma_db, r_db=self.r_db,
            sigma_c2=self.sigma_c2, sigma_r2=self.sigma_r2, p_r=self.p_r,
            delta_h=self.delta_h, delta_g=self.delta_g,
            delta_f=self.delta_f)
        opts = QcqpOptions() if self.tol is None else QcqpOptions(
            gap_tol=self.tol)
        self.problem_ = problem
        return solve_robust(problem, opts)
