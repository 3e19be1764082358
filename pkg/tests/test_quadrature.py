import math
import warnings

import numpy as np
import pytest

from smmlink.beam_math import ModeIndex, OAM_FMF, propagate_geometry
from smmlink.coupling import ApertureSpec, coupling_coefficient
from smmlink.errors import NonConvergence
from smmlink.quadrature import QuadratureSpec, gauss_legendre_nodes, integrate_2d, rayleigh_nodes


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(radial_order=100)
    with pytest.raises(ValueError):
        QuadratureSpec(angular_order=4)
    assert QuadratureSpec(4096, 4096).doubled().radial_order == 4096


def test_gauss_legendre_examples():
    x, w = gauss_legendre_nodes(2)
    assert np.allclose(x, [-1 / math.sqrt(3), 1 / math.sqrt(3)])
    assert np.allclose(w, [1, 1])
    x, w = gauss_legendre_nodes(3)
    assert np.allclose(x, [-math.sqrt(0.6), 0, math.sqrt(0.6)], atol=1e-15)
    assert np.allclose(w, [5 / 9, 8 / 9, 5 / 9])
    for n in (8, 64, 512):
        x, w = gauss_legendre_nodes(n)
        assert abs(w.sum() - 2) < 1e-13
        assert np.allclose(x, -x[::-1], atol=1e-15)


@pytest.mark.parametrize("n", [4, 10, 33])
def test_polynomial_exactness(n):
    x, w = gauss_legendre_nodes(n)
    for k in range(2 * n):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(w @ x**k - exact) <= 1e-12 * max(1.0, exact)


def test_integrate_examples():
    assert integrate_2d(lambda x, th: 1.0 + 0 * x * th).value == pytest.approx(2 * math.pi)
    assert integrate_2d(lambda x, th: x + 0 * th).value == pytest.approx(math.pi)
    assert abs(integrate_2d(lambda x, th: np.exp(1j * th) + 0 * x).value) < 1e-12


def test_gauss_angular_rule():
    spec = QuadratureSpec(16, 64, angular_rule="gauss")
    assert integrate_2d(lambda x, th: x * np.cos(th) ** 2, spec).value == pytest.approx(math.pi / 2, rel=1e-10)


def test_nonconvergence_is_soft():
    spec = QuadratureSpec(8, 8, rel_tol=1e-15, max_doublings=1)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        res = integrate_2d(lambda x, th: np.exp(40j * x**2) + 0 * th, spec)
    assert not res.converged
    assert any(issubclass(w.category, NonConvergence) for w in rec)
    assert np.isfinite(res.value)


def test_rayleigh_nodes_moments():
    # exact moments of Rayleigh(1) truncated at 5
    a = 5.0
    mass = 1.0 - math.exp(-a * a / 2)
    m1 = (-a * math.exp(-a * a / 2) + math.sqrt(math.pi / 2) * math.erf(a / math.sqrt(2))) / mass
    m2 = (2.0 - (a * a + 2.0) * math.exp(-a * a / 2)) / mass
    t, w = rayleigh_nodes(32)
    assert w.sum() == pytest.approx(1.0)
    assert w @ t == pytest.approx(m1, rel=1e-10)
    assert w @ t**2 == pytest.approx(m2, rel=1e-10)
    assert w @ t == pytest.approx(math.sqrt(math.pi / 2), rel=2e-5)


def test_refinement_at_worst_case_point():
    # D = 24 mm, d = 3 sigma_d, eps = 3 sigma_eps
    mode = ModeIndex(0, 3)
    geom = propagate_geometry(1550e-9, 800e-6, 10.0, mode)
    ap = ApertureSpec(24e-3, 24e-3)
    args = (mode, mode, geom, 24e-3 / 2.0, ap, 3 * 1.25e-3, 3 * 1.25e-4)
    a = coupling_coefficient(*args, spec=QuadratureSpec(128, 256, max_doublings=0))
    b = coupling_coefficient(*args, spec=QuadratureSpec(256, 256, max_doublings=0))
    assert abs(abs(a) - abs(b)) / abs(b) < 1e-6
