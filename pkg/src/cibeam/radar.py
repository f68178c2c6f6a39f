"""Radar-side consequences of a precoding policy.

Matched-filter statistics, interference covariance, the GLRT detector for
a point target with unknown (alpha, theta), its false-alarm threshold and
detection probability, the DoA Cramer-Rao bound, and a Monte Carlo
simulation of the whole detection chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import (RadarScene, steering_outer, steering_outer_derivative,
                    steering_vector)

__all__ = [
    "InterferenceCovariance",
    "DetectionReport",
    "CrbReport",
    "DegenerateGeometryError",
    "matched_filter",
    "interference_covariance",
    "glrt_statistic",
    "detection_threshold",
    "noncentrality",
    "detection_probability",
    "marcum_q1",
    "crb",
    "crb_schur",
    "wilson_interval",
    "monte_carlo_detection",
]


class DegenerateGeometryError(RuntimeError):
    """CRB denominator vanished (e.g. single-element array)."""


@dataclass(frozen=True)
class InterferenceCovariance:
    """J (Hermitian PSD, mW) and its noise-regularized form J + sigma^2 I."""

    J: np.ndarray
    sigma_r2: float

    @property
    def regularized(self) -> np.ndarray:
        return self.J + self.sigma_r2 * np.eye(self.J.shape[0])


@dataclass
class DetectionReport:
    rho: float
    eta: float
    p_fa: float
    p_d_analytic: float
    p_d_empirical: float = None
    p_fa_empirical: float = None
    trials: int = 0
    ci_low: float = None
    ci_high: float = None
    snr_db: float = None


@dataclass
class CrbReport:
    crb: float              # rad^2
    rmse: float             # rad
    xi_tt: float
    xi_ta: np.ndarray
    xi_aa: np.ndarray


def matched_filter(frames: np.ndarray, waveform: np.ndarray) -> np.ndarray:
    """Sufficient statistic Y~ = (1/sqrt(L)) * sum_l y_l s_l^H.

    ``frames`` is (M, L) (or (T, M, L) for a batch of trials)."""
    length = waveform.shape[1]
    if frames.shape[-1] != length:
        raise ValueError("frames and waveform lengths differ")
    return frames @ waveform.conj().T / np.sqrt(length)


def interference_covariance(G: np.ndarray, w_seq: np.ndarray,
                            sigma_r2: float = 1.0) -> InterferenceCovariance:
    """Covariance of the BS interference seen at the radar receiver.

    ``w_seq`` is either a single transmit vector (N,) giving
    J = G^T w w^H G^*, or a per-slot sequence (N, L) that is averaged over
    the frame (the CI precoder changes symbol by symbol)."""
    w_seq = np.asarray(w_seq)
    if w_seq.ndim == 1:
        w_seq = w_seq[:, None]
    v = G.T @ w_seq                         # (M, L)
    J = (v @ v.conj().T) / w_seq.shape[1]
    J = 0.5 * (J + J.conj().T)              # enforce exact Hermitian symmetry
    return InterferenceCovariance(J=J, sigma_r2=sigma_r2)


def glrt_statistic(Y: np.ndarray, theta_hat: float, positions: np.ndarray,
                   J_reg: np.ndarray) -> float:
    """GLRT statistic |tr(Y A^H J~^-1)|^2 / tr(A A^H J~^-1)."""
    A = steering_outer(theta_hat, positions)
    Ji = np.linalg.inv(J_reg)
    num = np.abs(np.trace(Y @ A.conj().T @ Ji)) ** 2
    den = np.trace(A @ A.conj().T @ Ji).real
    return float(num / den)


def detection_threshold(p_fa: float) -> float:
    """CFAR threshold for the central chi-squared(2) statistic: -2 ln P_FA."""
    if not 0.0 < p_fa < 1.0:
        raise ValueError("P_FA must lie in (0, 1)")
    return -2.0 * math.log(p_fa)


def noncentrality(snr_lin: float, sigma_r2: float, A: np.ndarray,
                  J_reg: np.ndarray) -> float:
    """rho = SNR_R * sigma_R^2 * tr(A A^H J~^-1)."""
    Ji = np.linalg.inv(J_reg)
    return float(snr_lin * sigma_r2 * np.trace(A @ A.conj().T @ Ji).real)


def marcum_q1(rho: float, eta: float, rel_tol: float = 1e-12) -> float:
    """Upper tail of the noncentral chi-squared(2, rho) distribution at eta,
    i.e. Q_1(sqrt(rho), sqrt(eta)).

    Series over the Poisson mixture: sum_k Pois(k; rho/2) * P[Pois(eta/2) <= k],
    truncated when the remaining Poisson mass is below ``rel_tol``.
    """
    if rho < 0 or eta < 0:
        raise ValueError("rho and eta must be nonnegative")
    if eta == 0.0:
        return 1.0
    x = rho / 2.0
    y = eta / 2.0
    # start the Poisson recursion in the log domain so large rho is safe
    k0 = 0 if x < 1.0 else int(max(0, math.floor(x - 12.0 * math.sqrt(x) - 30)))
    log_p = k0 * math.log(x) - x - math.lgamma(k0 + 1) if k0 > 0 else -x
    p_k = math.exp(log_p)
    # Poisson(y) CDF at k0
    q_j = math.exp(-y)
    cdf = q_j
    for j in range(1, k0 + 1):
        q_j *= y / j
        cdf += q_j
    total = 0.0
    mass = 0.0
    k = k0
    while True:
        total += p_k * cdf
        mass += p_k
        if 1.0 - mass < rel_tol * max(mass, 1e-300) and k > x:
            break
        if k - x > 40 * math.sqrt(x + 1) + 200:
            break
        k += 1
        p_k *= x / k
        q_j *= y / k
        cdf += q_j
    return min(1.0, total + (1.0 - mass))  # unsummed Poisson tail has cdf ~ 1


def detection_probability(rho: float, p_fa: float = None,
                          eta: float = None) -> float:
    """P_D = Q_1(sqrt(rho), sqrt(eta)) with eta from P_FA unless given."""
    if eta is None:
        eta = detection_threshold(p_fa)
    return marcum_q1(rho, eta)


def crb(theta: float, positions: np.ndarray, J_reg: np.ndarray,
        snr_lin: float, sigma_r2: float) -> CrbReport:
    """Closed-form DoA Cramer-Rao bound.

    CRB = tr(AA^H J~^-1) / (2 SNR_R sigma_R^2 *
          [tr(dA dA^H J~^-1) tr(AA^H J~^-1) - |tr(A dA^H J~^-1)|^2]).
    """
    A = steering_outer(theta, positions)
    dA = steering_outer_derivative(theta, positions)
    Ji = np.linalg.inv(J_reg)
    taa = np.trace(A @ A.conj().T @ Ji).real
    tdd = np.trace(dA @ dA.conj().T @ Ji).real
    tad = np.trace(A @ dA.conj().T @ Ji)
    denom = tdd * taa - np.abs(tad) ** 2
    if denom <= 1e-12:
        raise DegenerateGeometryError(
            f"CRB denominator {denom:.3e} is non-positive")
    value = taa / (2.0 * snr_lin * sigma_r2 * denom)
    # Fisher blocks, expressed with |alpha|^2 L P_R = SNR_R sigma_R^2
    scale = 2.0 * snr_lin * sigma_r2
    xi_tt = scale * tdd
    xi_aa = scale * taa * np.eye(2)
    xi_ta = scale * np.array([tad.real, -tad.imag])
    return CrbReport(crb=value, rmse=math.sqrt(value), xi_tt=xi_tt,
                     xi_ta=xi_ta, xi_aa=xi_aa)


def crb_schur(theta: float, positions: np.ndarray, J_reg: np.ndarray,
              alpha: complex, length: int, p_r: float) -> float:
    """Independent CRB path: explicit FIM blocks and 2x2 Schur complement."""
    A = steering_outer(theta, positions)
    dA = steering_outer_derivative(theta, positions)
    Ji = np.linalg.inv(J_reg)
    lp = length * p_r
    xi_tt = 2.0 * abs(alpha) ** 2 * lp * np.trace(dA @ dA.conj().T @ Ji).real
    taa = np.trace(A @ A.conj().T @ Ji).real
    xi_aa = 2.0 * lp * taa * np.eye(2)
    tad = np.trace(A @ dA.conj().T @ Ji)
    z = np.conj(alpha) * tad
    xi_ta = 2.0 * lp * np.array([z.real, (1j * z).real])
    schur = xi_tt - xi_ta @ np.linalg.inv(xi_aa) @ xi_ta
    if schur <= 1e-12:
        raise DegenerateGeometryError("degenerate Fisher information")
    return float(1.0 / schur)


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z ** 2 / trials
    center = (phat + z ** 2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials
                         + z ** 2 / (4 * trials ** 2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _grid_steering(theta_grid: np.ndarray, positions: np.ndarray) -> np.ndarray:
    phase = positions @ np.stack([np.sin(theta_grid), np.cos(theta_grid)])
    return np.exp(-2j * np.pi * phase)        # (M, G)


def _batch_glrt(Y_batch: np.ndarray, J_reg: np.ndarray,
                positions: np.ndarray, theta_grid: np.ndarray,
                refine: bool = True):
    """Max over the grid of the GLRT statistic for a batch of Y~ matrices.

    Uses stat(theta) = |a^H Ji Y a*|^2 / (M * a^H Ji a) with A = a a^T.
    Returns (stat_max, theta_hat) per trial.
    """
    m = positions.shape[0]
    Ji = np.linalg.inv(J_reg)
    A_grid = _grid_steering(theta_grid, positions)
    Bc = A_grid.conj()                        # columns a*(theta)
    den = m * np.einsum("mg,mn,ng->g", A_grid.conj(), Ji, A_grid).real
    K = np.einsum("mn,tnp->tmp", Ji, Y_batch)          # (T, M, M)
    num = np.abs(np.einsum("mg,tmn,ng->tg", Bc, K, Bc)) ** 2
    stats = num / den[None, :]
    idx = np.argmax(stats, axis=1)
    best = stats[np.arange(len(idx)), idx]
    theta_hat = theta_grid[idx]
    if refine:
        inner = (idx > 0) & (idx < len(theta_grid) - 1)
        if np.any(inner):
            i = idx[inner]
            y0 = stats[inner, i - 1]
            y1 = stats[inner, i]
            y2 = stats[inner, i + 1]
            denom = y0 - 2 * y1 + y2
            shift = np.where(np.abs(denom) > 1e-30,
                             0.5 * (y0 - y2) / np.where(denom == 0, 1, denom),
                             0.0)
            shift = np.clip(shift, -1.0, 1.0)
            step = theta_grid[1] - theta_grid[0]
            theta_ref = theta_grid[i] + shift * step
            # one exact re-evaluation at the interpolated angle
            a_ref = np.exp(-2j * np.pi * (positions
                                          @ np.stack([np.sin(theta_ref),
                                                      np.cos(theta_ref)])))
            bc = a_ref.conj()                 # (M, T_inner)
            den_ref = m * np.einsum("mt,mn,nt->t", a_ref.conj(), Ji, a_ref).real
            num_ref = np.abs(np.einsum("mt,tmn,nt->t", bc, K[inner], bc)) ** 2
            val_ref = num_ref / den_ref
            improve = val_ref > best[inner]
            b = best[inner]
            th = theta_hat[inner]
            b[improve] = val_ref[improve]
            th[improve] = theta_ref[improve]
            best[inner] = b
            theta_hat[inner] = th
    return best, theta_hat


def monte_carlo_detection(scene: RadarScene, G: np.ndarray,
                          w_seq: np.ndarray, trials: int, *,
                          p_fa: float = None, eta: float = None,
                          theta_grid: np.ndarray = None, seed: int = 0,
                          estimate_theta: bool = True,
                          with_target: bool = True,
                          interference: str = "slots",
                          batch: int = 4000) -> DetectionReport:
    """Simulate the binary detection problem and compare with the analytic
    detection probability at the matched noncentrality.

    ``w_seq`` is the per-slot BS transmit sequence (N, L) already including
    the symbol phases (for a fixed SDR precoder pass the constant sequence).
    Under H1 a target at ``scene.theta`` is present; the empirical rate of
    the no-target hypothesis is reported when ``with_target`` is False.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if eta is None:
        eta = detection_threshold(p_fa)
    else:
        p_fa = math.exp(-eta / 2.0)
    if theta_grid is None:
        theta_grid = np.linspace(-np.pi / 2, np.pi / 2, 723)[1:-1]
    S = scene.waveform
    m, length = S.shape
    w_seq = np.asarray(w_seq)
    if w_seq.ndim == 1:
        w_seq = np.tile(w_seq[:, None], (1, length))
    cov = interference_covariance(G, w_seq, scene.sigma_r2)
    J_reg = cov.regularized
    A = steering_outer(scene.theta, scene.positions)
    # The log-GLRT value is asymptotically chi2(2)-distributed only after
    # doubling (two real degrees of freedom in the complex amplitude); the
    # matched non-centrality of the doubled statistic is then 2*rho.  Using
    # the calibrated pair keeps the empirical false-alarm rate equal to the
    # requested P_FA.
    rho = 2.0 * noncentrality(scene.snr_r, scene.sigma_r2, A, J_reg)
    target = scene.alpha * math.sqrt(scene.p_r) * (A @ S) if with_target else 0.0
    interf = G.T @ w_seq                       # (M, L) per-slot interference
    if interference not in ("slots", "gaussian"):
        raise ValueError("interference must be 'slots' or 'gaussian'")
    if interference == "gaussian":
        # surrogate: CN(0, J) per slot, matching the averaged covariance
        evals, evecs = np.linalg.eigh(cov.J)
        half = evecs * np.sqrt(np.clip(evals, 0.0, None))

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        t = min(batch, trials - done)
        z = (rng.standard_normal((t, m, length))
             + 1j * rng.standard_normal((t, m, length))) \
            * math.sqrt(scene.sigma_r2 / 2.0)
        if interference == "gaussian":
            u = (rng.standard_normal((t, m, length))
                 + 1j * rng.standard_normal((t, m, length))) / math.sqrt(2.0)
            frames = target + np.einsum("mn,tnl->tml", half, u) + z
        else:
            # redraw the (uniform) reference-symbol phase of every slot so
            # the interference is zero-mean over trials with covariance J
            scramble = np.exp(2j * np.pi * rng.random((t, 1, length)))
            frames = target + interf * scramble + z
        Y = matched_filter(frames, S)
        if estimate_theta:
            stat, _ = _batch_glrt(Y, J_reg, scene.positions, theta_grid)
        else:
            a = steering_vector(scene.theta, scene.positions)
            Ji = np.linalg.inv(J_reg)
            bc = a.conj()
            num = np.abs(np.einsum("m,tmn,n->t", bc,
                                   np.einsum("mn,tnp->tmp", Ji, Y), bc)) ** 2
            stat = num / (m * (a.conj() @ Ji @ a).real)
        hits += int(np.sum(2.0 * stat > eta))
        done += t
    rate = hits / trials
    lo, hi = wilson_interval(hits, trials)
    return DetectionReport(
        rho=rho, eta=eta, p_fa=p_fa,
        p_d_analytic=marcum_q1(rho, eta) if with_target else p_fa,
        p_d_empirical=rate if with_target else None,
        p_fa_empirical=None if with_target else rate,
        trials=trials, ci_low=lo, ci_high=hi,
    )
