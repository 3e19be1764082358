import itertools
import random

import numpy as np
import pytest

from smmlink.beam_math import ModeIndex, SIX_MODE_FMF, propagate_geometry
from smmlink.capacity import EnsembleResult
from smmlink.channel import MisalignmentStats
from smmlink.config import LinkConfig
from smmlink.optimize import (
    EnsembleCache,
    SweepGrid,
    find_crossovers,
    first_argmax,
    mode_subsets,
    parse_range,
    search_mode_set,
    search_mode_set_at,
    sweep_aperture,
    sweep_beta,
    sweep_power,
)

GEOM = propagate_geometry(1550e-9, 800e-6, 10.0)


def test_parse_range():
    assert np.allclose(parse_range("0.1:0.5:0.1"), [0.1, 0.2, 0.3, 0.4, 0.5])
    assert np.allclose(parse_range("-15:-13:1"), [-15, -14, -13])
    assert np.allclose(parse_range("2:3:0.4"), [2.0, 2.4, 2.8])
    assert parse_range("7").tolist() == [7.0]
    for bad in ("1:2", "1:0:1", "0:1:0"):
        with pytest.raises(ValueError):
            parse_range(bad)


def test_sweep_grid_validation():
    assert len(SweepGrid.from_range("D", 2e-3, 4e-3, 1e-3, "f=D")) == 3
    with pytest.raises(ValueError):
        SweepGrid("beta", (1.0,))
    with pytest.raises(ValueError):
        SweepGrid("beta", (1.0, 1.0))


def test_first_argmax_ties():
    assert first_argmax([1, 3, 3, 2]) == 1
    assert first_argmax([np.nan, 2, 1]) == 1


def test_sweep_beta_aligned_and_empty():
    betas = np.arange(0.5, 2.01, 0.25)
    sw = sweep_beta(ModeIndex(0, 0), SIX_MODE_FMF, GEOM, betas)
    assert sw.eta.shape == (betas.size, 4)
    assert np.max(np.abs(sw.column(ModeIndex(0, 1)))) < 1e-8
    b, v = sw.argmax(0)
    assert v == sw.eta[:, 0].max() and b in betas
    empty = sweep_beta(ModeIndex(0, 0), [], GEOM, betas)
    assert empty.eta.shape == (betas.size, 0)
    with pytest.raises(ValueError):
        sweep_beta(ModeIndex(0, 0), SIX_MODE_FMF, GEOM, [0.0, 1.0])


def test_sweep_beta_threads_identical(monkeypatch):
    betas = [0.8, 1.0, 1.2]
    st = MisalignmentStats(1.25e-4, 1.25e-4, 10.0)
    a = sweep_beta(ModeIndex(0, 0), SIX_MODE_FMF, GEOM, betas, True, st, order=8, threads=1)
    b = sweep_beta(ModeIndex(0, 0), SIX_MODE_FMF, GEOM, betas, True, st, order=8, threads=3)
    assert np.array_equal(a.eta, b.eta)


def test_search_matches_brute_force():
    rng = random.Random(11)
    scores = {s: EnsembleResult(rng.random(), 0.01, 0, 100) for s in itertools.combinations(range(3), 2)}
    res = search_mode_set(2, "zfbf", lambda s: scores[s], universe=range(3))
    order = list(scores)
    rng.shuffle(order)
    best = max(order, key=lambda s: (scores[s].mean, [-x for x in s]))
    assert res.best_config == best and res.best_value == scores[best].mean
    assert [r[0] for r in res.table] == sorted(scores)


def test_search_tie_breaks_lexicographically():
    res = search_mode_set(2, "zfbf", lambda s: EnsembleResult(1.0, 0.0, 0, 100), universe=range(4))
    assert res.best_config == (0, 1)


def test_mode_subsets():
    assert mode_subsets(6) == [(0, 1, 2, 3, 4, 5)]
    assert len(mode_subsets(3)) == 20
    with pytest.raises(ValueError):
        mode_subsets(0)


def test_crossovers():
    p = np.array([0.0, 1.0, 2.0, 3.0])
    table = np.array([[2.0, 1.0], [2.0, 1.5], [2.0, 2.5], [2.0, 3.0]])
    xs = find_crossovers(p, table, (1, 2))
    assert len(xs) == 1
    x, a, b = xs[0]
    assert (a, b) == (1, 2) and x == pytest.approx(1.5)
    assert find_crossovers(p, np.zeros((4, 3)), (1, 2, 3)) == []


@pytest.fixture(scope="module")
def small():
    cfg = LinkConfig(realizations=120)
    return cfg, EnsembleCache(cfg, 120, 4)


def test_sweep_aperture_single_value_and_determinism(small):
    cfg, cache = small
    one = sweep_aperture(cfg, (0,), [5e-3], cache=cache)
    assert one.argmax()[0] == 5e-3
    a = sweep_aperture(cfg, (0, 1), [4e-3, 6e-3], cache=cache)
    b = sweep_aperture(cfg, (0, 1), [4e-3, 6e-3], n_realizations=120, seed=4)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std_error, b.std_error)


def test_search_full_set_is_unique(small):
    cfg, cache = small
    res = search_mode_set_at(cfg, 6, "zfbf", 12e-3, cache)
    assert res.best_config == (0, 1, 2, 3, 4, 5) and len(res.table) == 1


def test_sweep_power_zero_power(small):
    cfg, cache = small
    res = sweep_power(cfg, [-np.inf, -np.inf], {1: ((0,), 6e-3), 2: ((0, 1), 6e-3)}, "zfbf", cache)
    assert np.all(res.mean == 0) and res.crossovers == []
