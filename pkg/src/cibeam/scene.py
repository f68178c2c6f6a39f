"""Channel, symbol, and radar-scene generators.

Everything here is a pure function of its seed: the same arguments always
produce bit-identical outputs, and the returned containers are treated as
read-only by the rest of the library.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ChannelSet",
    "SymbolFrame",
    "RadarScene",
    "gen_channels",
    "psk_frame",
    "ula_positions",
    "steering_vector",
    "steering_derivative",
    "steering_outer",
    "steering_outer_derivative",
    "radar_waveform",
    "perturb_channels",
]


@dataclass(frozen=True)
class ChannelSet:
    """Channel matrices for the coexistence scene.

    H : (N, K) complex, BS -> downlink users (columns h_i)
    G : (N, M) complex, BS -> radar receive antennas (columns g_m)
    F : (M, K) complex, radar transmitter -> downlink users (columns f_i)

    When built by :func:`perturb_channels` the ``*_est`` fields hold the
    estimates available to the BS and ``delta_*`` the error-ball radii;
    otherwise the estimates equal the true channels and the radii are zero.
    """

    H: np.ndarray
    G: np.ndarray
    F: np.ndarray
    H_est: np.ndarray = None
    G_est: np.ndarray = None
    F_est: np.ndarray = None
    delta_h: float = 0.0
    delta_g: float = 0.0
    delta_f: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.H_est is None:
            object.__setattr__(self, "H_est", self.H)
        if self.G_est is None:
            object.__setattr__(self, "G_est", self.G)
        if self.F_est is None:
            object.__setattr__(self, "F_est", self.F)
        n, k = self.H.shape
        if self.G.shape[0] != n:
            raise ValueError("H and G must share the antenna dimension N")
        m = self.G.shape[1]
        if self.F.shape != (m, k):
            raise ValueError(f"F must be (M, K) = ({m}, {k}), got {self.F.shape}")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class SymbolFrame:
    """PSK symbol phases for one frame: ``phases`` is (K, L) in radians."""

    phases: np.ndarray
    order: int

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("PSK order must be >= 2")
        if self.phases.ndim != 2 or self.phases.shape[1] < 1:
            raise ValueError("phases must be (K, L) with L >= 1")

    @property
    def psi(self) -> float:
        """Half-angle of the constructive region, pi / order."""
        return np.pi / self.order

    @property
    def k(self) -> int:
        return self.phases.shape[0]

    @property
    def length(self) -> int:
        return self.phases.shape[1]

    def symbols(self) -> np.ndarray:
        """Unit-modulus symbols d_k[l] = exp(j phi_k[l])."""
        return np.exp(1j * self.phases)


@dataclass(frozen=True)
class RadarScene:
    """Geometry and signal parameters of the MIMO radar.

    positions are in carrier wavelengths (the 2*pi/lambda factor of the
    array response is absorbed into the coordinates).
    """

    positions: np.ndarray            # (M, 2), wavelength units
    theta: float                     # target angle, radians
    alpha: complex = 1.0             # complex path loss
    p_r: float = 1.0                 # radar transmit power, mW
    waveform: np.ndarray = None      # (M, L) complex
    sigma_c2: float = 1.0            # user noise power, mW
    sigma_r2: float = 1.0            # radar noise power, mW

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.waveform.shape[1]

    @property
    def snr_r(self) -> float:
        """Radar SNR |alpha|^2 * L * P_R / sigma_R^2 (linear)."""
        return abs(self.alpha) ** 2 * self.length * self.p_r / self.sigma_r2


def gen_channels(n: int, k: int, m: int, seed: int) -> ChannelSet:
    """Draw i.i.d. unit-variance circularly-symmetric Gaussian channels."""
    if min(n, k, m) < 1:
        raise ValueError("n, k, m must all be >= 1")
    rng = np.random.default_rng(seed)

    def cgauss(rows, cols):
        return (rng.standard_normal((rows, cols))
                + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)

    return ChannelSet(H=cgauss(n, k), G=cgauss(n, m), F=cgauss(m, k), seed=seed)


def psk_frame(k: int, length: int, order: int, seed: int) -> SymbolFrame:
    """Uniform i.i.d. PSK phases, phi in {2*pi*q/order : q = 0..order-1}."""
    if order < 2:
        raise ValueError("PSK order must be >= 2")
    if length < 1:
        raise ValueError("frame length must be >= 1")
    rng = np.random.default_rng(seed)
    q = rng.integers(0, order, size=(k, length))
    return SymbolFrame(phases=2.0 * np.pi * q / order, order=order)


def ula_positions(m: int) -> np.ndarray:
    """Half-wavelength ULA along the x axis: x_i = [(i-1)/2; 0] wavelengths."""
    pos = np.zeros((m, 2))
    pos[:, 0] = 0.5 * np.arange(m)
    return pos


def steering_vector(theta: float, positions: np.ndarray) -> np.ndarray:
    """Array response a(theta), element i = exp(-j*2*pi*[sin t; cos t]^T x_i)."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] < 1:
        raise ValueError("positions must be a nonempty (M, 2) array")
    phase = positions @ np.array([np.sin(theta), np.cos(theta)])
    return np.exp(-2j * np.pi * phase)


def steering_derivative(theta: float, positions: np.ndarray) -> np.ndarray:
    """Analytic da/dtheta, elementwise phase derivative of a(theta)."""
    positions = np.asarray(positions, dtype=float)
    a = steering_vector(theta, positions)
    dphase = positions @ np.array([np.cos(theta), -np.sin(theta)])
    return -2j * np.pi * dphase * a


def steering_outer(theta: float, positions: np.ndarray) -> np.ndarray:
    """A(theta) = a(theta) a(theta)^T (plain transpose, collocated array)."""
    a = steering_vector(theta, positions)
    return np.outer(a, a)


def steering_outer_derivative(theta: float, positions: np.ndarray) -> np.ndarray:
    """dA/dtheta = da a^T + a da^T."""
    a = steering_vector(theta, positions)
    da = steering_derivative(theta, positions)
    return np.outer(da, a) + np.outer(a, da)


# maximal-length LFSR taps (Fibonacci form), indexed by register degree
_MSEQ_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5),
    7: (7, 6), 8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7),
}


def _msequence(degree: int) -> np.ndarray:
    """0/1 maximal LFSR sequence of length 2**degree - 1."""
    taps = _MSEQ_TAPS[degree]
    state = [1] * degree
    out = []
    for _ in range(2 ** degree - 1):
        out.append(state[-1])
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return np.array(out, dtype=int)


def radar_waveform(m: int, length: int, mode: str = "orthonormal",
                   seed: int = 0) -> np.ndarray:
    """Radar waveform matrix S of shape (M, L).

    ``orthonormal``: random +/-1 rows, orthogonalized and rescaled so that
    (1/L) S S^H = I exactly.  ``msequence``: rows are distinct cyclic shifts
    of a maximal LFSR sequence truncated to L (approximately orthogonal).
    """
    if mode == "orthonormal":
        if length < m:
            raise ValueError("orthonormal mode requires L >= M")
        rng = np.random.default_rng(seed)
        x = rng.choice([-1.0, 1.0], size=(m, length))
        q, _ = np.linalg.qr(x.T)
        return np.sqrt(length) * q.T.astype(complex)
    if mode == "msequence":
        degree = 2
        while 2 ** degree - 1 < max(length, m + 1):
            degree += 1
        if degree not in _MSEQ_TAPS:
            raise ValueError(f"m-sequence degree {degree} not supported")
        seq = 1.0 - 2.0 * _msequence(degree)  # 0/1 -> +1/-1
        period = len(seq)
        shift = max(1, period // m)
        rows = [np.roll(seq, -i * shift)[:length] for i in range(m)]
        return np.array(rows, dtype=complex)
    raise ValueError(f"unknown waveform mode {mode!r}")


def _ball_errors(rng: np.random.Generator, rows: int, cols: int,
                 radius: float) -> np.ndarray:
    """Per-column errors drawn uniformly inside the complex norm ball."""
    if radius == 0.0:
        return np.zeros((rows, cols), dtype=complex)
    v = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    v /= np.linalg.norm(v, axis=0, keepdims=True)
    # uniform in a ball of real dimension 2*rows
    r = radius * rng.random(cols) ** (1.0 / (2 * rows))
    return v * r


def perturb_channels(cs: ChannelSet, delta_h: float, delta_g: float,
                     delta_f: float, seed: int) -> ChannelSet:
    """Treat ``cs`` as the estimated channels and add bounded errors.

    True channels = estimates + errors drawn uniformly inside the norm
    balls of radii (delta_h, delta_g, delta_f); both are stored.
    """
    if min(delta_h, delta_g, delta_f) < 0:
        raise ValueError("error bounds must be nonnegative")
    rng = np.random.default_rng(seed)
    eh = _ball_errors(rng, cs.n, cs.k, delta_h)
    eg = _ball_errors(rng, cs.n, cs.m, delta_g)
    ef = _ball_errors(rng, cs.m, cs.k, delta_f)
    return ChannelSet(
        H=cs.H + eh, G=cs.G + eg, F=cs.F + ef,
        H_est=cs.H, G_est=cs.G, F_est=cs.F,
        delta_h=delta_h, delta_g=delta_g, delta_f=delta_f,
        seed=cs.seed,
    )
