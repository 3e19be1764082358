"""Misalignment statistics, channel-matrix assembly and the square-law
IM/DD receiver model.

Matrix convention: ``H[k, i]`` couples transmitted mode ``i`` into fiber
mode ``k``, so the received amplitude vector is ``H @ s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .beam_math import FiberSpec, ModeIndex
from .coupling import ApertureSpec, OverlapEngine, ENGINE_SPEC, _omega, validate_mode


@dataclass(frozen=True)
class MisalignmentStats:
    """Rayleigh scales of transmitter orientation jitter and receiver AOA.

    ``sigma_orient`` and ``sigma_aoa`` are in radians, ``distance`` in
    metres; the pointing-error scale is ``distance * sigma_orient``.
    """

    sigma_orient: float
    sigma_aoa: float
    distance: float

    def __post_init__(self):
        if self.sigma_orient < 0 or self.sigma_aoa < 0:
            raise ValueError("misalignment scales must be >= 0")
        if self.distance < 0:
            raise ValueError("distance must be >= 0")

    @property
    def sigma_d(self) -> float:
        return self.distance * self.sigma_orient


@dataclass(frozen=True)
class Misalignment:
    d: float
    eps: float
    laser_phases: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.d < 0 or self.eps < 0:
            raise ValueError("d and eps must be >= 0")


def rayleigh_draws(stats: MisalignmentStats, n: int, seed: int):
    """Arrays (d, eps) of ``n`` independent Rayleigh draws.

    Inverse-CDF sampling d = sigma sqrt(-2 ln U); the d and eps streams are
    separate children of ``seed`` so either can be changed alone.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    ss_d, ss_e = np.random.SeedSequence(seed).spawn(2)
    u_d = 1.0 - np.random.default_rng(ss_d).random(n)
    u_e = 1.0 - np.random.default_rng(ss_e).random(n)
    d = stats.sigma_d * np.sqrt(-2.0 * np.log(u_d))
    eps = stats.sigma_aoa * np.sqrt(-2.0 * np.log(u_e))
    return d, eps


def laser_phase_draws(n: int, n_modes: int, seed: int):
    """Independent uniform [0, 2 pi) phases, one row per realization."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    return rng.uniform(0.0, 2.0 * math.pi, size=(n, n_modes))


def sample_misalignment(stats: MisalignmentStats, n: int, seed: int, n_modes=0, random_phases=False):
    d, eps = rayleigh_draws(stats, n, seed)
    if random_phases and n_modes:
        phases = laser_phase_draws(n, n_modes, seed)
    else:
        phases = np.zeros((n, n_modes))
    return [Misalignment(float(a), float(b), tuple(p)) for a, b, p in zip(d, eps, phases)]


@dataclass
class ChannelMatrix:
    H: np.ndarray
    H_est: np.ndarray
    mode_set: tuple
    fiber_modes: tuple

    @property
    def n(self) -> int:
        return self.H.shape[0]


def estimate_channel(H: np.ndarray) -> np.ndarray:
    """Magnitudes with phases taken relative to the diagonal entry of each row.

    Works on a single (N, N) matrix or a stack (..., N, N).  H equals
    diag(exp(j arg H_kk)) @ H_est.
    """
    H = np.asarray(H, dtype=complex)
    diag = np.diagonal(H, axis1=-2, axis2=-1)
    ref = np.exp(-1j * np.angle(diag))[..., :, None]
    est = H * ref
    n = H.shape[-1]
    idx = np.arange(n)
    est[..., idx, idx] = np.abs(diag)
    return est


def build_channel_matrix(
    mode_set: Sequence[ModeIndex],
    fiber: FiberSpec,
    geoms,
    ap: ApertureSpec,
    m: Misalignment,
    fiber_modes=None,
    spec=ENGINE_SPEC,
    engine: OverlapEngine | None = None,
) -> ChannelMatrix:
    """Assemble H and its estimate for one misalignment realization.

    ``geoms`` holds one BeamGeometry per transmitted mode.  When
    ``fiber_modes`` is omitted each transmitted (0, l) pairs with the fiber
    mode (0, l).
    """
    mode_set = tuple(mode_set)
    if fiber_modes is None:
        fiber_modes = tuple(ModeIndex(0, t.l) for t in mode_set)
    fiber_modes = tuple(fiber_modes)
    if len(fiber_modes) != len(mode_set):
        raise ValueError(f"dimension mismatch: {len(mode_set)} transmitted vs {len(fiber_modes)} fiber modes")
    if len(mode_set) > len(fiber.supported_modes):
        raise ValueError("more transmitted modes than the fiber supports")
    missing = [f for f in fiber_modes if f not in fiber.supported_modes]
    if missing:
        raise ValueError(f"fiber does not support {missing}")
    for t in mode_set:
        validate_mode(t)
    if len(geoms) != len(mode_set):
        raise ValueError("need one beam geometry per transmitted mode")
    engine = engine or OverlapEngine(ap.diameter, spec)
    h, _ = engine.overlaps(list(mode_set), list(geoms), list(fiber_modes), _omega(fiber), [m.d], [m.eps])
    phases = np.asarray(m.laser_phases, dtype=float) if m.laser_phases else np.zeros(len(mode_set))
    if phases.size != len(mode_set):
        raise ValueError("need one laser phase per transmitted mode")
    H = h[0].T * np.exp(1j * phases)[None, :]
    return ChannelMatrix(H, estimate_channel(H), mode_set, fiber_modes)


def received_current(H, s, responsivity, noise_sigma=0.0, seed=None):
    """Y = R |H s|^2 + Z with Z ~ N(0, noise_sigma^2) per detector."""
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("signal amplitudes must be non-negative")
    y = responsivity * np.abs(H @ s) ** 2
    if noise_sigma > 0:
        y = y + np.random.default_rng(seed).normal(0.0, noise_sigma, size=y.shape)
    return y


class MeanCurrent(NamedTuple):
    signal: np.ndarray
    interference: np.ndarray
    beat: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.signal + self.interference + self.beat

    @property
    def impairment(self) -> np.ndarray:
        return self.interference + self.beat


def mean_received_current(H, power_alloc, responsivity) -> MeanCurrent:
    """Average detector currents for independent Rayleigh amplitudes.

    Uses <s_i^2> = xi_i and <s_i> = sqrt(pi xi_i)/2; the beat term weights
    pairs by sqrt(xi_i xi_n).  Accepts a stack of matrices (..., N, N).
    """
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    xi = np.asarray(power_alloc, dtype=float)
    if np.any(xi < 0):
        raise ValueError("power allocation must be non-negative")
    n = H.shape[-1]
    xi = np.broadcast_to(xi, H.shape[:-2] + (n,))
    mag2 = np.abs(H) ** 2
    diag = np.diagonal(mag2, axis1=-2, axis2=-1)
    signal = diag * xi
    interference = np.einsum("...ki,...i->...k", mag2, xi) - signal
    amp = np.sqrt(xi)
    a = H * amp[..., None, :]
    # sum_{i != n} h_ik conj(h_nk) sqrt(xi_i xi_n) = |sum_i a_ki|^2 - sum_i |a_ki|^2
    total = a.sum(axis=-1)
    cross = total * np.conj(total) - (np.abs(a) ** 2).sum(axis=-1)
    scale = max(1.0, float(np.max(np.abs(cross))) if cross.size else 1.0)
    if np.max(np.abs(cross.imag), initial=0.0) > 1e-12 * scale:
        raise ArithmeticError("beat term has a non-vanishing imaginary part")
    beat = 0.25 * math.pi * cross.real
    return MeanCurrent(responsivity * signal, responsivity * interference, responsivity * beat)


class ChannelEnsemble:
    """Channel matrices of every realization for a full transmitted-mode universe.

    All tx/fiber overlaps are computed once for a fixed aperture; any
    mode subset is then a cheap index selection.  ``H`` has shape
    (realizations, fiber modes, tx modes).
    """

    def __init__(self, tx_modes, fiber_modes, geoms, omega, diameter, d, eps, phases=None, spec=ENGINE_SPEC, engine=None):
        self.tx_modes = tuple(tx_modes)
        self.fiber_modes = tuple(fiber_modes)
        self.diameter = float(diameter)
        d = np.atleast_1d(np.asarray(d, dtype=float))
        eps = np.broadcast_to(np.atleast_1d(np.asarray(eps, dtype=float)), d.shape)
        engine = engine or OverlapEngine(diameter, spec)
        h, p_a = engine.overlaps(list(self.tx_modes), list(geoms), list(self.fiber_modes), omega, d, eps)
        H = h.transpose(0, 2, 1)
        if phases is not None:
            H = H * np.exp(1j * np.asarray(phases, dtype=float))[:, None, :]
        self.H = H
        self.aperture_power = p_a
        self.d = d
        self.eps = eps

    @property
    def size(self) -> int:
        return self.H.shape[0]

    def _index(self, mode_set):
        tx_pos = {m: i for i, m in enumerate(self.tx_modes)}
        fib_pos = {m: i for i, m in enumerate(self.fiber_modes)}
        ti, fi = [], []
        for m in mode_set:
            m = m if isinstance(m, ModeIndex) else ModeIndex(0, int(m))
            if m not in tx_pos:
                raise ValueError(f"mode {m} not in the ensemble")
            partner = ModeIndex(0, m.l)
            if partner not in fib_pos:
                raise ValueError(f"no fiber mode pairs with {m}")
            ti.append(tx_pos[m])
            fi.append(fib_pos[partner])
        return np.array(fi), np.array(ti)

    def matrices(self, mode_set) -> np.ndarray:
        """Stack (M, N, N) for the transmitted modes ``mode_set``.

        Entries of ``mode_set`` may be ModeIndex or bare azimuthal orders.
        """
        fi, ti = self._index(mode_set)
        return self.H[:, fi[:, None], ti[None, :]]
