"""Fast property checks behind ``smmlink selftest``.

Each check returns (passed, detail).  The whole suite runs in well under
two minutes on one core.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import special, stats as sstats

from .beam_math import OAM_FMF, SIX_MODE_FMF, ModeIndex, fiber_mode_backprop, laguerre_assoc, propagate_geometry
from .capacity import power_denominator, zfbf_precoder
from .channel import MisalignmentStats, estimate_channel, mean_received_current, rayleigh_draws, received_current
from .coupling import (
    ApertureSpec,
    OverlapEngine,
    aperture_power,
    beam_geometries,
    coupling_coefficient,
    far_field_smf_efficiency,
    far_field_smf_efficiency_quadrature,
)
from .quadrature import QuadratureSpec, aperture_grid, gauss_legendre_nodes, integrate_2d

LAMBDA = 1550e-9
WAIST = 800e-6
Z = 10.0


def check_laguerre():
    x = np.linspace(0.0, 12.0, 97)
    worst = 0.0
    for a in range(6):
        closed = {
            0: np.ones_like(x),
            1: 1.0 + a - x,
            2: 0.5 * (x * x - 2 * (a + 2) * x + (a + 1) * (a + 2)),
        }
        for p, ref in closed.items():
            worst = max(worst, float(np.max(np.abs(laguerre_assoc(p, a, x) - ref))))
        for p in range(3, 8):
            ref = special.eval_genlaguerre(p, a, x)
            worst = max(worst, float(np.max(np.abs(laguerre_assoc(p, a, x) - ref) / np.maximum(1.0, np.abs(ref)))))
    return worst < 1e-10, f"max deviation {worst:.2e}"


def check_fiber_orthonormality():
    omega = 1e-3
    modes = list(SIX_MODE_FMF) + [ModeIndex(0, l) for l in range(3, 6)]
    spec = QuadratureSpec(256, 64, max_doublings=0)
    x, wx, th, wt = aperture_grid(spec)
    a = 8.0 * omega
    r = x[:, None] * a
    fields = [fiber_mode_backprop(m, omega, r, th[None, :]) for m in modes]
    w = (wx * x * a * a)[:, None] * wt[None, :]
    gram = np.array([[np.sum(f * np.conj(g) * w) for g in fields] for f in fields])
    err = float(np.max(np.abs(gram - np.eye(len(modes)))))
    return err < 1e-8, f"max |G - I| = {err:.2e}"


def check_rayleigh_ks(seed=1, alpha=1e-3):
    """Kolmogorov-Smirnov test of both Rayleigh streams at n = 10^4."""
    st = MisalignmentStats(1.25e-4, 1.25e-4, Z)
    d, eps = rayleigh_draws(st, 10_000, seed)
    r_d = sstats.kstest(d, "rayleigh", args=(0.0, st.sigma_d))
    r_e = sstats.kstest(eps, "rayleigh", args=(0.0, st.sigma_aoa))
    ok = min(r_d.pvalue, r_e.pvalue) > alpha
    return ok, f"KS distance d={r_d.statistic:.4f} (p={r_d.pvalue:.3f}), eps={r_e.statistic:.4f} (p={r_e.pvalue:.3f})"


def check_direction_invariance():
    geom = propagate_geometry(LAMBDA, WAIST, Z, ModeIndex(0, 1))
    ap = ApertureSpec(6e-3, 6e-3)
    spec = QuadratureSpec(64, 128, max_doublings=0)
    worst = 0.0
    for tx, fib in [(ModeIndex(0, 1), ModeIndex(0, 1)), (ModeIndex(0, 1), ModeIndex(0, 0)), (ModeIndex(0, 1), ModeIndex(0, 2))]:
        ref = abs(coupling_coefficient(tx, fib, geom, 1.5e-3, ap, 1e-3, 1e-4, spec, 0.0))
        for psi in (0.25 * math.pi, 0.5 * math.pi, 1.3, math.pi):
            val = abs(coupling_coefficient(tx, fib, geom, 1.5e-3, ap, 1e-3, 1e-4, spec, psi))
            worst = max(worst, abs(val - ref) / max(ref, 1e-12))
    return worst < 1e-8, f"max relative change of |h| {worst:.2e}"


def check_power_conservation():
    modes = OAM_FMF
    geoms = beam_geometries(modes, LAMBDA, WAIST, Z)
    worst = -np.inf
    for D in (3e-3, 8e-3, 16e-3):
        eng = OverlapEngine(D, QuadratureSpec(128, 256, max_doublings=0))
        rng = np.random.default_rng(3)
        d = rng.rayleigh(1.25e-3, 16)
        eps = rng.rayleigh(1.25e-4, 16)
        h, p_a = eng.overlaps(list(modes), geoms, list(modes), D / 2.5, d, eps)
        worst = max(worst, float(np.max((np.abs(h) ** 2).sum(axis=2) - p_a)))
    return worst <= 1e-9, f"max(sum_k |h_ik|^2 - P_A) = {worst:.2e}"


def check_polynomial_exactness():
    worst = 0.0
    for n in (8, 16, 32):
        x, w = gauss_legendre_nodes(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            worst = max(worst, abs(float(w @ x**k) - exact))
    spec = QuadratureSpec(8, 16, max_doublings=0)
    # x^15 cos^2(3 theta): degree 15 radial, trig degree 6
    val = integrate_2d(lambda x, th: x**15 * np.cos(3 * th) ** 2, spec).value
    worst = max(worst, abs(val - math.pi / 16))
    return worst < 1e-12, f"max error {worst:.2e}"


def check_far_field_oracle():
    betas = np.linspace(0.1, 4.0, 40)
    diff = max(abs(far_field_smf_efficiency_quadrature(b) - far_field_smf_efficiency(b)) for b in betas)
    return diff < 1e-10, f"closed form vs quadrature {diff:.2e}"


def check_current_moments(seed=0):
    rng = np.random.default_rng(seed)
    H = np.array([[0.8, 0.25 + 0.1j, 0.05], [0.2j, 0.7, 0.15], [0.1, -0.12, 0.6 + 0.2j]])
    xi = np.array([1.0, 0.5, 2.0])
    n = 100_000
    s = rng.rayleigh(np.sqrt(xi / 2.0), size=(n, 3))
    y = (np.abs(s @ H.T) ** 2).mean(axis=0)
    ref = mean_received_current(H, xi, 1.0).total
    err = float(np.max(np.abs(y - ref) / ref))
    return err < 0.01, f"max relative deviation {err:.2e}"


def check_zfbf_identity(seed=0):
    modes = OAM_FMF[:4]
    geoms = beam_geometries(modes, LAMBDA, WAIST, Z)
    eng = OverlapEngine(10e-3)
    st = MisalignmentStats(1.25e-4, 1.25e-4, Z)
    d, eps = rayleigh_draws(st, 50, seed)
    h, _ = eng.overlaps(list(modes), geoms, list(modes), 4e-3, d, eps)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for H in h.transpose(0, 2, 1):
        inv, _ = zfbf_precoder(estimate_channel(H))
        s = rng.rayleigh(1.0, 4)
        y = received_current(H @ inv, s, 1.0)
        worst = max(worst, float(np.max(np.abs(y - s * s)) / (s @ s)))
    return worst < 1e-8, f"max relative error {worst:.2e}"


def check_power_budget(seed=0):
    H = np.array([[0.7, 0.2 + 0.1j], [0.15, 0.5]])
    inv, _ = zfbf_precoder(estimate_channel(H))
    xi_t = 0.01
    xi = xi_t / float(power_denominator(inv))
    s = np.random.default_rng(seed).rayleigh(math.sqrt(xi / 2.0), size=(100_000, 2))
    tx = np.abs(s @ inv.T) ** 2
    mean_power = float(tx.sum(axis=1).mean())
    err = abs(mean_power - xi_t) / xi_t
    return err < 0.01, f"relative budget error {err:.2e}"


def check_seed_determinism():
    st = MisalignmentStats(1.25e-4, 1.25e-4, Z)
    a = rayleigh_draws(st, 1000, 42)
    b = rayleigh_draws(st, 1000, 42)
    c = rayleigh_draws(st, 1000, 43)
    same = all(np.array_equal(x, y) for x, y in zip(a, b))
    differ = not np.array_equal(a[0], c[0])
    return same and differ, "identical seeds reproduce draws bit for bit"


def check_aperture_power():
    geom = propagate_geometry(LAMBDA, WAIST, Z)
    ap = ApertureSpec(2 * 4 * geom.spot_radius, 1.0)
    p = aperture_power(ModeIndex(0, 0), geom, ap, spec=QuadratureSpec(64, 16))
    ref = 1.0 - math.exp(-2.0 * 16.0)
    return abs(p - ref) < 1e-10, f"P_A - (1 - exp(-2 a^2)) = {p - ref:.2e}"


CHECKS = [
    ("laguerre_recurrence", check_laguerre),
    ("fiber_orthonormality", check_fiber_orthonormality),
    ("rayleigh_ks", check_rayleigh_ks),
    ("direction_invariance", check_direction_invariance),
    ("power_conservation", check_power_conservation),
    ("quadrature_exactness", check_polynomial_exactness),
    ("far_field_closed_form", check_far_field_oracle),
    ("aperture_power_closed_form", check_aperture_power),
    ("current_moments_mc", check_current_moments),
    ("zfbf_identity", check_zfbf_identity),
    ("zfbf_power_budget", check_power_budget),
    ("seed_determinism", check_seed_determinism),
]


def run_selftest(out=print):
    """Run all checks; returns (all_passed, rows) with rows (name, ok, detail, seconds)."""
    rows = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        rows.append((name, bool(ok), detail, dt))
        if out:
            out(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({dt:.2f}s)")
    return all(r[1] for r in rows), rows
