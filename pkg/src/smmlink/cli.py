"""Command-line entry point.

Tables go to CSV (``--out``, default stdout) preceded by ``# key=value``
provenance lines; summaries go to JSON (``--summary``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .beam_math import SIX_MODE_FMF, ModeIndex, propagate_geometry
from .config import LinkConfig, load_config
from .coupling import ApertureSpec, coupling_result, expected_efficiency
from .errors import SmmLinkError
from .optimize import (
    EnsembleCache,
    parse_range,
    search_mode_set_at,
    search_mode_set_per_subset,
    sweep_aperture,
    sweep_beta,
    sweep_power,
)
from .quadrature import QuadratureSpec

log = logging.getLogger("smmlink")

DEFAULT_APERTURES_MM = "2:30:1"


def _mode_set(text):
    return tuple(int(t) for t in text.replace("|", ",").split(",") if t.strip())


def _set_label(modes):
    return "|".join(str(m) for m in modes)


class Output:
    """CSV table writer with a provenance preamble."""

    def __init__(self, path, config: LinkConfig, command: str):
        self.path = path
        self.fh = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.command = command
        for key, value in provenance(config, command).items():
            self.fh.write(f"# {key}={value}\n")

    def header(self, cols):
        self.writer.writerow(cols)

    def row(self, values):
        self.writer.writerow([_cell(v) for v in values])
        self.fh.flush()

    def close(self):
        if self.fh is not sys.stdout:
            self.fh.close()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def provenance(config: LinkConfig, command: str) -> dict:
    return {
        "tool": "smmlink",
        "version": __version__,
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "quadrature": f"{config.radial_order}x{config.angular_order}",
        "rayleigh_order": config.rayleigh_order,
        "realizations": config.realizations,
        "spot_model": config.spot_model,
    }


def _effective_config(args) -> LinkConfig:
    cfg = load_config(args.config) if args.config else LinkConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.realizations is not None:
        updates["realizations"] = args.realizations
    if args.spot_model is not None:
        updates["spot_model"] = args.spot_model
    if getattr(args, "power_dbm", None) is not None and not isinstance(args.power_dbm, str):
        updates["total_dbm"] = args.power_dbm
    return cfg.with_updates(**updates) if updates else cfg


# ------------------------------------------------------------------ commands


def cmd_efficiency(args, cfg, out):
    tx, fib = ModeIndex.parse(args.tx), ModeIndex.parse(args.fiber)
    geom = propagate_geometry(cfg.wavelength, cfg.waist, cfg.distance_m, tx, cfg.spot_model)
    omega = cfg.fiber_backprop_radius
    ap = ApertureSpec.from_beta(args.beta, omega)
    res = coupling_result(tx, fib, geom, omega, ap, args.d_mm * 1e-3, args.eps_mrad * 1e-3, QuadratureSpec(cfg.radial_order, cfg.angular_order))
    out.header(["tx", "fiber", "beta", "d_m", "eps_rad", "h_re", "h_im", "coupled_power", "aperture_power", "eta", "quadrature_error"])
    out.row([str(tx), str(fib), args.beta, args.d_mm * 1e-3, args.eps_mrad * 1e-3, res.h.real, res.h.imag, res.coupled_power, res.aperture_power, res.efficiency, res.quadrature_error])
    return {"eta": res.efficiency, "h_abs": abs(res.h)}


def cmd_expected_efficiency(args, cfg, out):
    tx, fib = ModeIndex.parse(args.tx), ModeIndex.parse(args.fiber)
    geom = propagate_geometry(cfg.wavelength, cfg.waist, cfg.distance_m, tx, cfg.spot_model)
    omega = cfg.fiber_backprop_radius
    ap = ApertureSpec.from_beta(args.beta, omega)
    n = args.samples or (cfg.rayleigh_order if args.estimator == "quadrature" else 10_000)
    mean, err = expected_efficiency(tx, fib, geom, omega, ap, cfg.stats(), args.estimator, n, cfg.seed, cfg.quadrature())
    out.header(["tx", "fiber", "beta", "estimator", "samples_or_order", "mean_eta", "std_error"])
    out.row([str(tx), str(fib), args.beta, args.estimator, n, mean, err])
    return {"mean_eta": mean, "std_error": err}


def cmd_sweep_beta(args, cfg, out):
    tx = ModeIndex.parse(args.tx)
    geom = propagate_geometry(cfg.wavelength, cfg.waist, cfg.distance_m, tx, cfg.spot_model)
    betas = parse_range(args.beta)
    res = sweep_beta(tx, SIX_MODE_FMF, geom, betas, args.misaligned, cfg.stats(), cfg.fiber_backprop_radius, cfg.quadrature(), cfg.rayleigh_order)
    out.header(["beta"] + [f"eta_{m.lp_label}" for m in SIX_MODE_FMF])
    for b, row in zip(res.betas, res.eta):
        out.row([b] + list(row))
    summary = {}
    for k, m in enumerate(SIX_MODE_FMF):
        b, e = res.argmax(k)
        summary[f"argmax_{m.lp_label}"] = {"beta": b, "eta": e}
    return summary


def _apertures(args):
    return parse_range(args.aperture_mm or DEFAULT_APERTURES_MM) * 1e-3


def cmd_sweep_aperture(args, cfg, out):
    modes = _mode_set(args.modes) if args.modes else tuple(range(args.n))
    cache = EnsembleCache(cfg, cfg.realizations, cfg.seed)
    res = sweep_aperture(cfg, modes, _apertures(args), args.scheme, cache=cache)
    out.header(["D_mm", "mean_bps", "std_error_bps"])
    for D, m, e in zip(res.diameters, res.mean, res.std_error):
        out.row([D * 1e3, m, e])
    D, c = res.argmax()
    return {"modes": _set_label(modes), "scheme": args.scheme, "best_D_mm": D * 1e3, "best_mean_bps": c}


def cmd_capacity(args, cfg, out):
    from .capacity import ensemble_capacity

    modes = _mode_set(args.modes)
    D = (args.aperture_mm if args.aperture_mm else cfg.aperture_mm) * 1e-3
    res = ensemble_capacity(args.scheme, cfg, None, cfg.realizations, cfg.seed, modes, float(D), args.average_channel)
    out.header(["modes", "scheme", "D_mm", "mean_bps", "std_error_bps", "n_singular", "n_total"])
    out.row([_set_label(modes), args.scheme, D * 1e3, res.mean, res.std_error, res.n_singular, res.n_total])
    return {"mean_bps": res.mean, "std_error_bps": res.std_error, "n_singular": res.n_singular}


def _optimal_aperture(cfg, cache, n, scheme, diameters):
    sw = sweep_aperture(cfg, tuple(range(n)), diameters, scheme, cache=cache)
    return sw.argmax()[0]


def cmd_search_modeset(args, cfg, out):
    cache = EnsembleCache(cfg, cfg.realizations, cfg.seed)
    diameters = _apertures(args)
    if args.per_subset:
        res = search_mode_set_per_subset(cfg, args.n, args.scheme, diameters, cache)
        out.header(["modes", "mean_bps", "std_error_bps", "D_mm"])
        for s, v, e, D in res.table:
            out.row([_set_label(s), v, e, D * 1e3])
        D = None
    else:
        D = diameters[0] if len(diameters) == 1 else _optimal_aperture(cfg, cache, args.n, args.scheme, diameters)
        res = search_mode_set_at(cfg, args.n, args.scheme, D, cache)
        out.header(["modes", "mean_bps", "std_error_bps"])
        for s, v, e in res.table:
            out.row([_set_label(s), v, e])
    best = _set_label(res.best_config)
    print(f"best_set={best}", file=sys.stderr)
    summary = {"best_set": best, "best_mean_bps": res.best_value, "best_std_error_bps": res.best_std_error}
    if D is not None:
        summary["D_mm"] = float(D) * 1e3
    return summary


def cmd_sweep_power(args, cfg, out):
    powers = parse_range(args.power_dbm)
    ns = [int(v) for v in parse_range(args.n_values)]
    cache = EnsembleCache(cfg, cfg.realizations, cfg.seed)
    diameters = _apertures(args)
    setups = {}
    for n in ns:
        D = _optimal_aperture(cfg, cache, n, args.scheme, diameters)
        if args.prefix_sets:
            modes = tuple(range(n))
        else:
            modes = search_mode_set_at(cfg, n, args.scheme, D, cache).best_config
        setups[n] = (modes, D)
    res = sweep_power(cfg, powers, setups, args.scheme, cache)
    out.header(["power_dbm"] + [f"mean_bps_N{n}" for n in res.n_values] + ["best_N"])
    for p, row, b in zip(res.powers_dbm, res.mean, res.best_n()):
        out.row([p] + list(row) + [b])
    return {
        "setups": {str(n): {"modes": _set_label(m), "D_mm": D * 1e3} for n, (m, D) in setups.items()},
        "crossovers": [{"power_dbm": x, "from_N": a, "to_N": b} for x, a, b in res.crossovers],
    }


def cmd_selftest(args, cfg, out):
    from .selftest import run_selftest

    ok, rows = run_selftest(out=lambda s: print(s, file=sys.stderr))
    out.header(["check", "passed", "detail", "seconds"])
    for name, passed, detail, dt in rows:
        out.row([name, "true" if passed else "false", detail, dt])
    if not ok:
        raise SelftestFailed(f"{sum(not r[1] for r in rows)} checks failed")
    return {"checks": len(rows)}


class SelftestFailed(SmmLinkError):
    pass


COMMANDS = {
    "efficiency": cmd_efficiency,
    "expected-efficiency": cmd_expected_efficiency,
    "sweep-beta": cmd_sweep_beta,
    "sweep-aperture": cmd_sweep_aperture,
    "capacity": cmd_capacity,
    "search-modeset": cmd_search_modeset,
    "sweep-power": cmd_sweep_power,
    "selftest": cmd_selftest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--summary", help="JSON summary path")
    common.add_argument("--seed", type=int)
    common.add_argument("--realizations", type=int)
    common.add_argument("--spot-model", choices=("linear", "standard"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="smmlink", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("efficiency", "expected-efficiency"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--tx", default="0,0", help="transmitted mode 'p,l' or LP label")
        s.add_argument("--fiber", default="0,0", help="fiber mode 'p,l' or LP label")
        s.add_argument("--beta", type=float, default=1.0)
        if name == "efficiency":
            s.add_argument("--d-mm", type=float, default=0.0)
            s.add_argument("--eps-mrad", type=float, default=0.0)
        else:
            s.add_argument("--estimator", choices=("quadrature", "monte_carlo"), default="monte_carlo")
            s.add_argument("--samples", type=int, help="Rayleigh order or Monte-Carlo sample count")

    s = sub.add_parser("sweep-beta", parents=[common])
    s.add_argument("--tx", default="0,0")
    s.add_argument("--beta", default="0.1:4:0.01", help="start:stop:step")
    s.add_argument("--misaligned", action="store_true")

    s = sub.add_parser("sweep-aperture", parents=[common])
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--modes", help="comma or | separated azimuthal orders (default 0..N-1)")
    s.add_argument("--scheme", choices=("zfbf", "no_zfbf"), default="zfbf")
    s.add_argument("--aperture-mm", help="start:stop:step in mm")

    s = sub.add_parser("capacity", parents=[common])
    s.add_argument("--modes", default="0")
    s.add_argument("--scheme", choices=("zfbf", "no_zfbf"), default="zfbf")
    s.add_argument("--aperture-mm", type=float)
    s.add_argument("--power-dbm", type=float)
    s.add_argument("--average-channel", action="store_true", help="capacity of the mean channel matrix")

    s = sub.add_parser("search-modeset", parents=[common])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--scheme", choices=("zfbf", "no_zfbf"), default="zfbf")
    s.add_argument("--aperture-mm", help="fixed D, or start:stop:step grid for the per-N optimum")
    s.add_argument("--per-subset", action="store_true", help="re-optimize D for every subset")
    s.add_argument("--power-dbm", type=float)

    s = sub.add_parser("sweep-power", parents=[common])
    s.add_argument("--power-dbm", default="-15:30:1", help="start:stop:step")
    s.add_argument("--n-values", default="1:6:1")
    s.add_argument("--scheme", choices=("zfbf", "no_zfbf"), default="zfbf")
    s.add_argument("--aperture-mm", help="D grid for the per-N optimum")
    s.add_argument("--prefix-sets", action="store_true", help="use modes 0..N-1 instead of searching")

    sub.add_parser("selftest", parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    summary = {"command": args.command, "status": "ok"}
    out = None
    t0 = time.perf_counter()
    try:
        cfg = _effective_config(args)
        log.info("effective configuration:\n%s", cfg.to_text())
        summary["provenance"] = provenance(cfg, args.command)
        out = Output(args.out, cfg, args.command)
        summary["result"] = COMMANDS[args.command](args, cfg, out)
        code = 0
    except (SmmLinkError, ValueError, OSError) as exc:
        summary["status"] = f"error: {type(exc).__name__}: {exc}"
        print(f"smmlink {args.command}: {exc}", file=sys.stderr)
        code = 1
    finally:
        if out is not None:
            out.close()
    summary["elapsed_s"] = time.perf_counter() - t0
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, default=_json_default, allow_nan=True)
            fh.write("\n")
    return code


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


if __name__ == "__main__":
    sys.exit(main())
