"""Achievable rates of the coherent IM/DD link with and without
zero-forcing beamforming (ZFBF)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import k as BOLTZMANN

from .channel import ChannelMatrix, estimate_channel, mean_received_current
from .errors import FractionSingular, NegativeBudgetDenominator, SingularChannel

SINGULAR_PIVOT = 1e-12
RATE_FACTOR = math.e / (2.0 * math.pi)


def dbm_to_watts(p_dbm):
    return 1e-3 * np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


@dataclass(frozen=True)
class DetectorConfig:
    responsivity: float = 0.7
    feedback_resistor: float = 500.0
    noise_figure_db: float = 5.0
    temperature: float = 300.0
    bandwidth: float = 10e9
    boltzmann: float = BOLTZMANN

    def __post_init__(self):
        for name in ("responsivity", "feedback_resistor", "temperature", "bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def noise_figure(self) -> float:
        return 10.0 ** (self.noise_figure_db / 10.0)

    @property
    def noise_variance(self) -> float:
        """Thermal noise variance 4 k_b T F_n B / R_f in A^2."""
        return 4.0 * self.boltzmann * self.temperature * self.noise_figure * self.bandwidth / self.feedback_resistor


@dataclass(frozen=True)
class PowerBudget:
    total: float
    per_channel: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.total < 0:
            raise ValueError("total power must be >= 0")
        if self.per_channel and sum(self.per_channel) > self.total * (1 + 1e-12):
            raise ValueError("per-channel allocation exceeds the total budget")

    @classmethod
    def from_dbm(cls, p_dbm: float) -> "PowerBudget":
        return cls(float(dbm_to_watts(p_dbm)))

    def uniform(self, n: int) -> np.ndarray:
        return np.full(n, self.total / n)


@dataclass
class CapacityReport:
    per_channel_rate: np.ndarray
    aggregate: float
    snr: np.ndarray
    scheme: str
    condition: float = float("nan")
    power_per_channel: float = float("nan")

    def __post_init__(self):
        if np.any(self.per_channel_rate < 0):
            raise ValueError("negative rate")


def rate_from_snr(snr, bandwidth):
    """r = B/2 log2(1 + snr e / (2 pi)) in bit/s."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0):
        raise ValueError("SNR must be >= 0")
    out = 0.5 * bandwidth * np.log2(1.0 + snr * RATE_FACTOR)
    return out if out.ndim else float(out)


def _matrix(H):
    return H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)


def sinr_no_zfbf(H, det: DetectorConfig, budget: PowerBudget):
    """Per-channel SINR under uniform allocation xi_t / N.

    The impairment current X_k (interference plus beat, mean value) is
    squared and added to the thermal noise variance.
    """
    H = _matrix(H)
    n = H.shape[-1]
    xi = np.full(n, budget.total / n)
    parts = mean_received_current(H, xi, det.responsivity)
    diag2 = np.abs(np.diagonal(H, axis1=-2, axis2=-1)) ** 2
    sig = det.responsivity * (budget.total / n) * diag2
    return sig**2 / (det.noise_variance + parts.impairment**2)


def capacity_no_zfbf(H, det: DetectorConfig, budget: PowerBudget) -> CapacityReport:
    snr = sinr_no_zfbf(H, det, budget)
    rates = np.atleast_1d(rate_from_snr(snr, det.bandwidth))
    return CapacityReport(rates, float(rates.sum()), np.atleast_1d(snr), "no_zfbf")


def invert_with_pivots(A):
    """Gauss-Jordan inversion with partial pivoting.

    ``A`` is (N, N) or a stack (M, N, N).  Returns the inverse and the
    pivot magnitudes (..., N) in elimination order.
    """
    A = np.array(A, dtype=complex)
    single = A.ndim == 2
    if single:
        A = A[None]
    m, n, n2 = A.shape
    if n != n2:
        raise ValueError("matrix must be square")
    aug = np.concatenate([A, np.broadcast_to(np.eye(n, dtype=complex), (m, n, n))], axis=2)
    rows = np.arange(m)
    pivots = np.empty((m, n))
    for c in range(n):
        p = c + np.argmax(np.abs(aug[:, c:, c]), axis=1)
        swap = p != c
        if np.any(swap):
            tmp = aug[rows[swap], c].copy()
            aug[rows[swap], c] = aug[rows[swap], p[swap]]
            aug[rows[swap], p[swap]] = tmp
        piv = aug[:, c, c].copy()
        pivots[:, c] = np.abs(piv)
        piv = np.where(piv == 0, 1.0, piv)
        aug[:, c] /= piv[:, None]
        factors = aug[:, :, c].copy()
        factors[:, c] = 0.0
        aug -= factors[:, :, None] * aug[:, c][:, None, :]
    inv = aug[:, :, n:]
    return (inv[0], pivots[0]) if single else (inv, pivots)


def pivot_condition(pivots):
    pivots = np.asarray(pivots)
    big = pivots.max(axis=-1)
    small = pivots.min(axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(small > 0, big / np.where(small > 0, small, 1.0), np.inf)


def zfbf_precoder(H_est):
    """Inverse of the estimated channel and a pivot-ratio condition number."""
    inv, piv = invert_with_pivots(H_est)
    cond = float(pivot_condition(piv))
    if piv.min() <= SINGULAR_PIVOT * piv.max():
        raise SingularChannel(f"estimated channel is singular (pivot ratio {cond:.3g})", cond)
    return inv, cond


def power_denominator(precoder):
    """sum_k sum_i (|I_ik|^2 + pi/4 sum_{n != i} Re I_ik conj(I_nk)).

    Here I_ik is ``precoder[k, i]`` (the weight of stream i on transmitter
    k); stacks (..., N, N) are supported.
    """
    P = np.asarray(precoder, dtype=complex)
    sq = (np.abs(P) ** 2).sum(axis=(-2, -1))
    row = P.sum(axis=-1)
    cross = (np.abs(row) ** 2).sum(axis=-1) - sq
    return sq + 0.25 * math.pi * cross


def zfbf_power_allocation(precoder, total_power: float) -> float:
    """Per-stream power xi_un that puts the mean transmitted power at the budget."""
    den = float(power_denominator(precoder))
    if not den > 1e-12:
        raise NegativeBudgetDenominator(f"power normalisation denominator {den:.3g} <= 1e-12")
    return total_power / den


def capacity_zfbf(H, H_est, det: DetectorConfig, budget: PowerBudget) -> CapacityReport:
    """Aggregate rate with the estimated-channel inverse as precoder."""
    H = _matrix(H)
    if H_est is None:
        H_est = estimate_channel(H)
    precoder, cond = zfbf_precoder(H_est)
    n = H.shape[-1]
    xi_un = zfbf_power_allocation(precoder, budget.total)
    snr = (det.responsivity * xi_un) ** 2 / det.noise_variance
    rates = np.full(n, rate_from_snr(snr, det.bandwidth))
    return CapacityReport(rates, float(rates.sum()), np.full(n, snr), "zfbf", cond, xi_un)


# ------------------------------------------------------------- batched forms


def capacity_no_zfbf_batch(H, det: DetectorConfig, total_power):
    """Aggregate C_I for a stack of channel matrices (M, N, N)."""
    snr = sinr_no_zfbf(H, det, PowerBudget(float(total_power)))
    return rate_from_snr(snr, det.bandwidth).sum(axis=-1)


def capacity_zfbf_batch(H, det: DetectorConfig, total_power):
    """Aggregate C_ZF per realization; NaN where the channel is singular.

    Returns (capacity (M,), singular mask (M,), condition (M,)).
    """
    H = np.asarray(H, dtype=complex)
    est = estimate_channel(H)
    inv, piv = invert_with_pivots(est)
    singular = piv.min(axis=-1) <= SINGULAR_PIVOT * piv.max(axis=-1)
    den = power_denominator(inv)
    bad = singular | ~(den > 1e-12)
    xi_un = np.where(bad, 0.0, total_power / np.where(bad, 1.0, den))
    snr = (det.responsivity * xi_un) ** 2 / det.noise_variance
    n = H.shape[-1]
    cap = n * rate_from_snr(snr, det.bandwidth)
    cap = np.where(bad, np.nan, cap)
    return cap, bad, pivot_condition(piv)


@dataclass(frozen=True)
class EnsembleResult:
    mean: float
    std_error: float
    n_singular: int
    n_total: int


MAX_SINGULAR_FRACTION = 0.10


def capacities(scheme: str, H, det: DetectorConfig, total_power):
    """Per-realization aggregate capacity and singular mask for a stack."""
    if scheme == "zfbf":
        cap, bad, _ = capacity_zfbf_batch(H, det, total_power)
        return cap, bad
    if scheme == "no_zfbf":
        cap = capacity_no_zfbf_batch(H, det, total_power)
        return cap, np.zeros(cap.shape, bool)
    raise ValueError(f"unknown scheme {scheme!r}; expected 'zfbf' or 'no_zfbf'")


def summarize_capacities(cap, bad, max_fraction=MAX_SINGULAR_FRACTION) -> EnsembleResult:
    """Mean and standard error over the non-singular realizations."""
    n = cap.size
    n_bad = int(np.count_nonzero(bad))
    if n_bad > max_fraction * n:
        raise FractionSingular(f"{n_bad} of {n} realizations are singular (limit {max_fraction:.0%})", n_bad, n)
    good = cap[~bad]
    if good.size == 0:
        return EnsembleResult(float("nan"), float("nan"), n_bad, n)
    se = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else 0.0
    return EnsembleResult(float(good.mean()), se, n_bad, n)


def ensemble_capacity(
    scheme: str,
    config,
    stats=None,
    n_realizations: int = 2000,
    seed: int = 0,
    mode_set=(0,),
    diameter=None,
    average_channel: bool = False,
    ensemble=None,
) -> EnsembleResult:
    """Monte-Carlo mean capacity over misalignment realizations.

    ``config`` is a LinkConfig.  Singular ZFBF realizations are excluded
    from the mean and counted.  With ``average_channel`` the capacity of
    the realization-averaged channel matrix is returned instead (standard
    error 0).
    """
    if n_realizations < 100:
        raise ValueError("ensemble_capacity needs at least 100 realizations")
    if ensemble is None:
        D = config.aperture().diameter if diameter is None else diameter
        ensemble = config.channel_ensemble(D, n_realizations, seed, stats)
    H = ensemble.matrices(mode_set)
    det = config.detector()
    if average_channel:
        cap, bad = capacities(scheme, H.mean(axis=0)[None], det, config.total_power)
        if bad[0]:
            raise SingularChannel("averaged channel is singular")
        return EnsembleResult(float(cap[0]), 0.0, 0, H.shape[0])
    cap, bad = capacities(scheme, H, det, config.total_power)
    return summarize_capacities(cap, bad)
