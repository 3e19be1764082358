"""Experiment drivers: beta and aperture sweeps, mode-set search and
power-budget sweeps with crossover detection."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .beam_math import ModeIndex
from .capacity import EnsembleResult, capacities, dbm_to_watts, summarize_capacities
from .coupling import (
    ENGINE_SPEC,
    DegenerateAperture,
    OverlapEngine,
    efficiency_matrix,
    expected_efficiency_matrix,
)

THREADS_ENV = "SMMLINK_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items, threads=None):
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepGrid:
    axis: str
    values: tuple
    constraint: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError("a sweep grid needs at least two values")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_range(cls, axis, start, stop, step, constraint=""):
        return cls(axis, tuple(parse_range_values(start, stop, step)), constraint)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def parse_range_values(start: float, stop: float, step: float) -> np.ndarray:
    """Values start, start+step, ... not exceeding stop (small slack for round-off)."""
    if step <= 0:
        raise ValueError("range step must be positive")
    if stop < start:
        raise ValueError("range stop must be >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def parse_range(text: str) -> np.ndarray:
    """Parse ``start:stop:step`` (or a single number)."""
    parts = text.split(":")
    if len(parts) == 1:
        return np.array([float(parts[0])])
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:step, got {text!r}")
    return parse_range_values(*(float(p) for p in parts))


@dataclass
class SearchResult:
    best_value: float
    best_config: object
    table: list = field(default_factory=list)
    best_std_error: float = 0.0


def first_argmax(values) -> int:
    """Index of the maximum; ties go to the first (smallest) entry."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty table")
    return int(np.nanargmax(values))


# ---------------------------------------------------------------- beta sweep


@dataclass
class BetaSweep:
    betas: np.ndarray
    fiber_modes: tuple
    eta: np.ndarray  # (n_beta, n_fiber)

    def argmax(self, k: int = 0):
        i = first_argmax(self.eta[:, k])
        return float(self.betas[i]), float(self.eta[i, k])

    def column(self, mode: ModeIndex) -> np.ndarray:
        return self.eta[:, self.fiber_modes.index(mode)]


def sweep_beta(
    tx: ModeIndex,
    fiber_modes: Sequence[ModeIndex],
    geom,
    betas,
    misaligned: bool = False,
    stats=None,
    omega: float = 1.75e-3,
    spec=ENGINE_SPEC,
    order: int = 32,
    threads=None,
) -> BetaSweep:
    """Coupling efficiency into every fiber mode versus beta at fixed omega.

    The aperture diameter follows from D = 2 beta omega.  With
    ``misaligned`` the Rayleigh-averaged efficiency is returned.
    """
    betas = np.asarray(betas, dtype=float)
    if np.any(betas <= 0):
        raise ValueError("beta values must be positive")
    fiber_modes = tuple(fiber_modes)
    if not fiber_modes:
        return BetaSweep(betas, (), np.zeros((betas.size, 0)))
    if misaligned and stats is None:
        raise ValueError("misaligned sweep needs misalignment statistics")

    def one(beta):
        engine = OverlapEngine(2.0 * beta * omega, spec)
        if misaligned:
            return expected_efficiency_matrix(
                engine, [tx], [geom], fiber_modes, omega, stats.sigma_d, stats.sigma_aoa, order
            )[0]
        return efficiency_matrix(engine, [tx], [geom], fiber_modes, omega)[0]

    rows = _map(one, list(betas), threads)
    return BetaSweep(betas, fiber_modes, np.array(rows))


# ------------------------------------------------------------ aperture sweep


class EnsembleCache:
    """Channel ensembles of one configuration keyed by aperture diameter.

    Every diameter reuses the same misalignment draws (common random
    numbers), so differences between apertures are not masked by
    sampling noise.
    """

    def __init__(self, config, n_realizations: int, seed: int, stats=None, max_items: int = 64):
        self.config = config
        self.n = n_realizations
        self.seed = seed
        self.stats = stats
        self.max_items = max_items
        self._items = {}

    def get(self, diameter: float):
        key = round(float(diameter), 12)
        ens = self._items.get(key)
        if ens is None:
            ens = self.config.channel_ensemble(key, self.n, self.seed, self.stats)
            if len(self._items) >= self.max_items:
                self._items.pop(next(iter(self._items)))
            self._items[key] = ens
        return ens

    def prefetch(self, diameters, threads=None):
        todo = [D for D in diameters if round(float(D), 12) not in self._items]
        built = _map(lambda D: self.config.channel_ensemble(round(float(D), 12), self.n, self.seed, self.stats), todo, threads)
        for D, ens in zip(todo, built):
            self._items[round(float(D), 12)] = ens


def evaluate_cell(cache: EnsembleCache, diameter, mode_set, scheme, total_power=None) -> EnsembleResult:
    cfg = cache.config
    H = cache.get(diameter).matrices(mode_set)
    power = cfg.total_power if total_power is None else total_power
    cap, bad = capacities(scheme, H, cfg.detector(), power)
    return summarize_capacities(cap, bad)


@dataclass
class ApertureSweep:
    diameters: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    mode_set: tuple
    scheme: str

    def argmax(self):
        i = first_argmax(self.mean)
        return float(self.diameters[i]), float(self.mean[i])


def sweep_aperture(
    config,
    mode_set,
    diameters,
    scheme: str = "zfbf",
    n_realizations=None,
    seed=None,
    cache: EnsembleCache | None = None,
    threads=None,
) -> ApertureSweep:
    """Mean capacity versus aperture diameter with f = D."""
    diameters = np.atleast_1d(np.asarray(diameters, dtype=float))
    if np.any(diameters <= 0):
        raise ValueError("aperture diameters must be positive")
    if cache is None:
        cache = EnsembleCache(
            config,
            n_realizations or config.realizations,
            config.seed if seed is None else seed,
        )
    cache.prefetch(diameters, threads)
    res = [evaluate_cell(cache, D, mode_set, scheme) for D in diameters]
    return ApertureSweep(
        diameters,
        np.array([r.mean for r in res]),
        np.array([r.std_error for r in res]),
        tuple(mode_set),
        scheme,
    )


def refine_aperture(config, mode_set, scheme, cache, coarse: ApertureSweep, step: float, threads=None):
    """Re-sweep around the coarse optimum on a finer step."""
    d0, _ = coarse.argmax()
    lo = max(step, d0 - 2 * (coarse.diameters[1] - coarse.diameters[0]) if len(coarse.diameters) > 1 else d0)
    hi = d0 + 2 * (coarse.diameters[1] - coarse.diameters[0]) if len(coarse.diameters) > 1 else d0
    fine = parse_range_values(lo, hi, step)
    return sweep_aperture(config, mode_set, fine, scheme, cache=cache, threads=threads)


# ---------------------------------------------------------- mode-set search


def mode_subsets(n: int, universe=range(6)):
    universe = sorted(universe)
    if not 1 <= n <= len(universe):
        raise ValueError(f"N must be in [1, {len(universe)}]")
    return list(itertools.combinations(universe, n))


def search_mode_set(
    n: int,
    scheme: str,
    evaluate: Callable[[tuple], EnsembleResult],
    universe=range(6),
) -> SearchResult:
    """Exhaustive search over the n-subsets of ``universe``.

    ``evaluate(subset)`` returns an EnsembleResult; subsets are visited in
    lexicographic order and ties keep the earlier subset.
    """
    rows = []
    best = None
    for subset in mode_subsets(n, universe):
        r = evaluate(subset)
        rows.append((subset, r.mean, r.std_error))
        if best is None or r.mean > best[1]:
            best = (subset, r.mean, r.std_error)
    return SearchResult(best[1], best[0], rows, best[2])


def search_mode_set_at(config, n, scheme, diameter, cache=None, universe=range(6)) -> SearchResult:
    """Mode-set search with every subset evaluated at one aperture."""
    cache = cache or EnsembleCache(config, config.realizations, config.seed)
    return search_mode_set(n, scheme, lambda s: evaluate_cell(cache, diameter, s, scheme), universe)


def search_mode_set_per_subset(config, n, scheme, diameters, cache=None, universe=range(6)) -> SearchResult:
    """Mode-set search re-optimizing the aperture for every subset."""
    cache = cache or EnsembleCache(config, config.realizations, config.seed)
    cache.prefetch(diameters)
    where = {}

    def evaluate(subset):
        sw = sweep_aperture(config, subset, diameters, scheme, cache=cache)
        i = first_argmax(sw.mean)
        where[subset] = float(sw.diameters[i])
        return EnsembleResult(float(sw.mean[i]), float(sw.std_error[i]), 0, cache.n)

    res = search_mode_set(n, scheme, evaluate, universe)
    res.table = [(s, v, e, where[s]) for s, v, e in res.table]
    return res


# ------------------------------------------------------------- power sweep


@dataclass
class PowerSweep:
    powers_dbm: np.ndarray
    n_values: tuple
    mean: np.ndarray  # (n_power, n_N)
    crossovers: list  # (power_dbm, from_N, to_N)

    def best_n(self):
        return [self.n_values[first_argmax(row)] for row in self.mean]


def find_crossovers(powers, table, labels):
    """Powers where the best column changes, by linear interpolation of the
    capacity difference between the two neighbouring grid points."""
    powers = np.asarray(powers, dtype=float)
    best = [first_argmax(row) for row in table]
    out = []
    for j in range(1, len(powers)):
        a, b = best[j - 1], best[j]
        if a == b:
            continue
        d0 = table[j - 1][b] - table[j - 1][a]
        d1 = table[j][b] - table[j][a]
        if d1 == d0 or not (math.isfinite(powers[j - 1]) and math.isfinite(powers[j])):
            x = powers[j]
        else:
            x = powers[j - 1] + (powers[j] - powers[j - 1]) * (-d0) / (d1 - d0)
        out.append((float(x), labels[a], labels[b]))
    return out


def sweep_power(config, powers_dbm, setups, scheme, cache: EnsembleCache | None = None) -> PowerSweep:
    """Mean capacity for each power and each N.

    ``setups`` maps N to ``(mode_set, diameter)``.  Channel ensembles do
    not depend on the power, so each one is built once.
    """
    powers_dbm = np.asarray(powers_dbm, dtype=float)
    if np.any(powers_dbm[np.isfinite(powers_dbm)] > 60):
        raise ValueError("power outside the supported range")
    cache = cache or EnsembleCache(config, config.realizations, config.seed)
    ns = tuple(sorted(setups))
    det = config.detector()
    table = np.zeros((powers_dbm.size, len(ns)))
    for c, n in enumerate(ns):
        mode_set, D = setups[n]
        H = cache.get(D).matrices(mode_set)
        for r, p in enumerate(powers_dbm):
            cap, bad = capacities(scheme, H, det, float(dbm_to_watts(p)))
            table[r, c] = summarize_capacities(cap, bad).mean
    return PowerSweep(powers_dbm, ns, table, find_crossovers(powers_dbm, table, ns))
