"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL`` line (collected into the pytest
terminal summary) and then asserts the same condition.  ``INFO`` and
``ADVISORY`` lines carry extra numbers that do not decide the outcome.
"""

import math
import time

import numpy as np
import pytest
from scipy import optimize as sopt

from conftest import ACCEPTANCE_LINES
from smmlink.beam_math import ModeIndex, SIX_MODE_FMF
from smmlink.capacity import (
    capacity_no_zfbf,
    capacity_zfbf,
    invert_with_pivots,
    pivot_condition,
    PowerBudget,
    SINGULAR_PIVOT,
    zfbf_power_allocation,
)
from smmlink.channel import ChannelEnsemble, estimate_channel, received_current
from smmlink.config import LinkConfig
from smmlink.coupling import OverlapEngine, expected_efficiency_matrix, ENGINE_SPEC
from smmlink.coupling import far_field_smf_efficiency, far_field_smf_efficiency_quadrature
from smmlink.optimize import (
    EnsembleCache,
    evaluate_cell,
    parse_range_values,
    search_mode_set_at,
    sweep_aperture,
    sweep_beta,
    sweep_power,
)
from smmlink.selftest import run_selftest

LP01, LP02, LP11, LP21 = SIX_MODE_FMF
LG00, LG01, LG02 = ModeIndex(0, 0), ModeIndex(0, 1), ModeIndex(0, 2)
SCHEMES = ("zfbf", "no_zfbf")
N_VALUES = range(1, 7)


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append((n, line))
    print(line)
    assert ok, line


def note(n, kind, detail):
    line = f"{kind} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append((n, line))
    print(line)


def within(x, target, tol):
    return abs(x - target) <= tol


@pytest.fixture(scope="module")
def cfg():
    return LinkConfig()


@pytest.fixture(scope="module")
def pipeline(cfg):
    """Aperture sweeps, mode-set searches and final optima for both schemes."""
    t0 = time.perf_counter()
    grid = parse_range_values(2.0, 30.0, 1.0) * 1e-3
    cache = EnsembleCache(cfg, cfg.realizations, cfg.seed)
    cache.prefetch(grid)
    sweeps = {(s, n): sweep_aperture(cfg, tuple(range(n)), grid, s, cache=cache) for s in SCHEMES for n in N_VALUES}
    opt_d = {k: sw.argmax()[0] for k, sw in sweeps.items()}
    search = {(s, n): search_mode_set_at(cfg, n, s, opt_d[(s, n)], cache) for s in SCHEMES for n in N_VALUES}
    final_cache = EnsembleCache(cfg, cfg.final_realizations, cfg.seed)
    final = {k: evaluate_cell(final_cache, opt_d[k], search[k].best_config, k[0]) for k in search}
    return {
        "grid": grid,
        "cache": cache,
        "sweeps": sweeps,
        "opt_d": opt_d,
        "search": search,
        "final": final,
        "seconds": time.perf_counter() - t0,
    }


def test_criterion_1_far_field_oracle():
    t0 = time.perf_counter()
    res = sopt.minimize_scalar(lambda b: -far_field_smf_efficiency(b), bounds=(0.1, 4.0), method="bounded", options={"xatol": 1e-8})
    beta, peak = res.x, -res.fun
    diff = max(abs(far_field_smf_efficiency_quadrature(b) - far_field_smf_efficiency(b)) for b in np.linspace(0.1, 4.0, 391))
    dt = time.perf_counter() - t0
    ok = within(peak, 0.8145, 5e-5) and within(beta, 1.1209, 5e-4)
    ok = ok and within(peak, 0.81, 0.005) and within(beta, 1.12, 0.005) and diff < 1e-10 and dt < 1.0
    report(1, ok, f"max eta={peak:.5f} at beta={beta:.4f}; quadrature vs closed form {diff:.1e}; {dt:.2f}s")


def test_criterion_2_aligned_curves(cfg):
    betas = parse_range_values(0.1, 4.0, 0.01)
    omega = cfg.fiber_backprop_radius
    t0 = time.perf_counter()
    g00 = sweep_beta(LG00, SIX_MODE_FMF, cfg.geometries([LG00])[0], betas, omega=omega)
    t1 = time.perf_counter()
    g01 = sweep_beta(LG01, SIX_MODE_FMF, cfg.geometries([LG01])[0], betas, omega=omega)
    t2 = time.perf_counter()
    b01, e01 = g00.argmax(SIX_MODE_FMF.index(LP01))
    b02, e02 = g00.argmax(SIX_MODE_FMF.index(LP02))
    b11, e11 = g01.argmax(SIX_MODE_FMF.index(LP11))
    cross = max(
        np.max(g00.column(LP11)),
        np.max(g00.column(LP21)),
        np.max(g01.column(LP01)),
        np.max(g01.column(LP02)),
        np.max(g01.column(LP21)),
    )
    checks = {
        "LP01": within(e01, 0.74, 0.02) and within(b01, 1.01, 0.05),
        "LP02": within(e02, 0.166, 0.01) and within(b02, 2.2, 0.1),
        "LP11": within(e11, 0.71, 0.02) and within(b11, 1.33, 0.05),
        "cross": cross < 1e-8,
        "runtime": max(t1 - t0, t2 - t1) < 60,
    }
    failed = [k for k, v in checks.items() if not v]
    report(
        2,
        not failed,
        f"LG00->LP01 {e01:.3f}@{b01:.2f} (0.74@1.01), LG00->LP02 {e02:.3f}@{b02:.2f} (0.166@2.2), "
        f"LG01->LP11 {e11:.3f}@{b11:.2f} (0.71@1.33), max cross-azimuthal eta {cross:.1e}, "
        f"{t1 - t0:.1f}s/{t2 - t1:.1f}s per curve" + (f"; failing: {', '.join(failed)}" if failed else ""),
    )


def test_criterion_3_misaligned_expected_efficiency(cfg):
    betas = parse_range_values(0.1, 4.0, 0.01)
    omega = cfg.fiber_backprop_radius
    st = cfg.stats()
    tx = [LG00, LG01, LG02]
    geoms = cfg.geometries(tx)
    t0 = time.perf_counter()
    eta = np.array(
        [
            expected_efficiency_matrix(
                OverlapEngine(2 * b * omega, ENGINE_SPEC), tx, geoms, SIX_MODE_FMF, omega, st.sigma_d, st.sigma_aoa, cfg.rayleigh_order
            )
            for b in betas
        ]
    )
    dt = time.perf_counter() - t0

    def peak(t, k):
        i = int(np.argmax(eta[:, t, k]))
        return betas[i], eta[i, t, k], i

    b00, e00, i00 = peak(0, SIX_MODE_FMF.index(LP01))
    b11, e11, _ = peak(1, SIX_MODE_FMF.index(LP11))
    b21, e21, _ = peak(2, SIX_MODE_FMF.index(LP21))
    leak11 = eta[i00, 0, SIX_MODE_FMF.index(LP11)]
    leak21 = eta[i00, 0, SIX_MODE_FMF.index(LP21)]
    checks = {
        "LP01": within(e00, 0.29, 0.03) and within(b00, 0.77, 0.1),
        "LP11": within(e11, 0.20, 0.02) and within(b11, 1.28, 0.1),
        "LP21": within(e21, 0.15, 0.02) and within(b21, 1.63, 0.1),
        "leak_LP11": within(leak11, 0.11, 0.02),
        "leak_LP21": within(leak21, 0.05, 0.02),
        "runtime": dt < 600,
    }
    failed = [k for k, v in checks.items() if not v]
    report(
        3,
        not failed,
        f"LG00->LP01 {e00:.3f}@{b00:.2f} (0.29@0.77), LG01->LP11 {e11:.3f}@{b11:.2f} (0.20@1.28), "
        f"LG02->LP21 {e21:.3f}@{b21:.2f} (0.15@1.63), leakage LP11 {leak11:.1%} (11%) LP21 {leak21:.1%} (5%), "
        f"{dt:.0f}s" + (f"; failing: {', '.join(failed)}" if failed else ""),
    )


def test_criterion_4_zfbf_identity(cfg):
    n_real, D = 1000, 7e-3
    ens = cfg.channel_ensemble(D, n_real, cfg.seed)
    H = ens.matrices((0, 1, 2, 3))
    inv, piv = invert_with_pivots(estimate_channel(H))
    ok_mask = piv.min(axis=-1) > SINGULAR_PIVOT * piv.max(axis=-1)
    rng = np.random.default_rng(cfg.seed)
    worst_id, worst_pow, xi_t = 0.0, 0.0, cfg.total_power
    for j in np.flatnonzero(ok_mask):
        s = rng.rayleigh(1.0, 4)
        y = received_current(H[j] @ inv[j], s, 1.0)
        worst_id = max(worst_id, float(np.max(np.abs(y - s * s)) / (s @ s)))
        xi = zfbf_power_allocation(inv[j], xi_t)
        # 10^6 draws keep the sampling error near 0.1%, well inside the 1% bound
        tx = 0.0
        for _ in range(4):
            amp = rng.rayleigh(math.sqrt(xi / 2.0), size=(250_000, 4))
            tx += float((np.abs(amp @ inv[j].T) ** 2).sum(axis=1).sum())
        tx /= 1_000_000
        worst_pow = max(worst_pow, abs(tx - xi_t) / xi_t)
    n_ok = int(ok_mask.sum())
    cond = pivot_condition(piv[ok_mask])
    ok = worst_id < 1e-8 and worst_pow < 0.01
    report(
        4,
        ok,
        f"{n_ok}/{n_real} invertible N=4 realizations at D=7 mm; max identity error {worst_id:.1e} x |s|^2; "
        f"max Monte-Carlo power error {worst_pow:.2%} (1e6 draws each); median pivot condition {np.median(cond):.1f}",
    )


def test_criterion_5_aligned_orthogonality(cfg):
    modes = [ModeIndex(0, l) for l in range(6)]
    rows, ok = [], True
    for D in (6e-3, 12e-3, 24e-3):
        ens = ChannelEnsemble(modes, modes, cfg.geometries(modes), cfg.fiber(D).backprop_radius, D, [0.0], [0.0], spec=cfg.quadrature())
        H = ens.matrices(range(6))[0]
        off = float(np.max(np.abs(H - np.diag(np.diag(H)))))
        czf = capacity_zfbf(H, None, cfg.detector(), cfg.budget()).aggregate
        ci = capacity_no_zfbf(H, cfg.detector(), cfg.budget()).aggregate
        rel = abs(czf - ci) / ci
        ok = ok and off < 1e-8 and rel < 1e-3
        rows.append(f"D={D * 1e3:.0f} mm off-diag {off:.1e}, C_ZF/C_I-1 {czf / ci - 1:+.2%}")
    report(5, ok, "; ".join(rows))


def test_criterion_6_optimal_aperture(cfg, pipeline):
    opt = [pipeline["opt_d"][("zfbf", n)] * 1e3 for n in N_VALUES]
    target = [6, 12, 15, 19, 22, 24]
    increasing = all(b > a for a, b in zip(opt, opt[1:]))
    close = all(within(o, t, 3.0) for o, t in zip(opt, target))
    c_start = pipeline["sweeps"][("zfbf", 1)].mean[0] / 1e12
    magnitude = 0.05 <= c_start <= 0.5
    peaks = [pipeline["sweeps"][("zfbf", n)].argmax()[1] / 1e12 for n in N_VALUES]
    note(6, "INFO", f"linear form: peak C_ZF (Tb/s) by N {np.round(peaks, 3).tolist()}; pipeline {pipeline['seconds']:.0f}s")
    std = cfg.with_updates(spot_model="standard")
    std_cache = EnsembleCache(std, 600, cfg.seed)
    std_opt = [sweep_aperture(std, tuple(range(n)), pipeline["grid"], "zfbf", cache=std_cache).argmax()[0] * 1e3 for n in N_VALUES]
    note(6, "INFO", f"standard form (600 realizations): optimal D (mm) by N {[round(x) for x in std_opt]}")
    report(
        6,
        increasing and close and magnitude,
        f"optimal D (mm) by N {[round(x) for x in opt]} (target {target} +/-3, strictly increasing: {increasing}); "
        f"C_ZF(N=1, D=2 mm) = {c_start:.3f} Tb/s (0.05-0.5)",
    )


def test_criterion_7_mode_set_search(pipeline):
    search = pipeline["search"]
    zf_sets = {n: search[("zfbf", n)].best_config for n in N_VALUES}
    hard = all(0 in s for s in zf_sets.values())
    expected = {("zfbf", 2): (0, 1), ("no_zfbf", 3): (0, 4, 5), ("no_zfbf", 4): (0, 3, 4, 5)}
    for key, want in expected.items():
        got = search[key].best_config
        note(7, "ADVISORY", f"{key[0]} N={key[1]}: {got} (expected {want}) {'match' if got == want else 'mismatch'}")
    report(7, hard, f"ZFBF optimal sets by N {[zf_sets[n] for n in N_VALUES]}; mode 0 in every set: {hard}")


def test_criterion_8_gain_and_saturation(cfg, pipeline):
    final, search, opt_d = pipeline["final"], pipeline["search"], pipeline["opt_d"]
    gains = {n: final[("zfbf", n)].mean / final[("no_zfbf", n)].mean - 1 for n in N_VALUES if n >= 2}
    gain_ok = all(g > 0 for g in gains.values()) and gains[3] >= 0.25 and gains[6] >= 1.0
    setups = {s: {n: (search[(s, n)].best_config, opt_d[(s, n)]) for n in N_VALUES} for s in SCHEMES}
    cache = pipeline["cache"]
    ci = sweep_power(cfg, [25.0, 30.0], setups["no_zfbf"], "no_zfbf", cache)
    growth = {n: ci.mean[1, j] / ci.mean[0, j] - 1 for j, n in enumerate(ci.n_values) if n >= 3}
    sat_ok = all(g < 0.05 for g in growth.values())
    powers = parse_range_values(-15.0, 30.0, 1.0)
    zf = sweep_power(cfg, powers, setups["zfbf"], "zfbf", cache)
    mono_ok = bool(np.all(np.diff(zf.mean, axis=0) > 0))
    seq = [zf.best_n()[0]] + [b for _, _, b in zf.crossovers]
    note(
        8,
        "ADVISORY",
        f"ZFBF best-N sequence {seq} at {[round(x, 1) for x, _, _ in zf.crossovers]} dBm (expected [1, 2, 4, 5] at [4, 9, 11])",
    )
    report(
        8,
        gain_ok and sat_ok and mono_ok,
        f"C_ZF/C_I-1 by N {{{', '.join(f'{n}: {g:+.0%}' for n, g in gains.items())}}} (>0, N=3 >=25%, N=6 >=100%); "
        f"C_I growth 25->30 dBm {{{', '.join(f'{n}: {g:.1%}' for n, g in growth.items())}}} (<5%); "
        f"C_ZF strictly increasing -15..30 dBm: {mono_ok}",
    )


def test_criterion_9_selftest():
    t0 = time.perf_counter()
    ok, rows = run_selftest(out=None)
    dt = time.perf_counter() - t0
    names = {r[0] for r in rows}
    required = {
        "laguerre_recurrence",
        "fiber_orthonormality",
        "rayleigh_ks",
        "direction_invariance",
        "power_conservation",
        "quadrature_exactness",
        "current_moments_mc",
        "seed_determinism",
    }
    failed = [r[0] for r in rows if not r[1]]
    report(
        9,
        ok and required <= names and dt < 120,
        f"{len(rows)} checks in {dt:.1f}s" + (f"; failing: {failed}" if failed else "; all pass"),
    )
