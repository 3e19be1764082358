"""Tensor-product quadrature over the normalised aperture x in [0, 1],
theta in [0, 2 pi).

The radial axis uses Gauss-Legendre nodes, the angular axis the periodic
trapezoidal rule (or Gauss-Legendre on request).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonConvergence

_MIN_ORDER = 8
_MAX_ORDER = 4096


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class QuadratureSpec:
    radial_order: int = 128
    angular_order: int = 256
    rel_tol: float = 1e-8
    max_doublings: int = 4
    angular_rule: str = "trapezoid"
    abs_tol: float = 1e-14

    def __post_init__(self):
        for name in ("radial_order", "angular_order"):
            n = getattr(self, name)
            if not (_is_pow2(n) and _MIN_ORDER <= n <= _MAX_ORDER):
                raise ValueError(f"{name} must be a power of two in [8, 4096], got {n}")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_doublings < 0:
            raise ValueError("max_doublings must be >= 0")
        if self.angular_rule not in ("trapezoid", "gauss"):
            raise ValueError(f"unknown angular rule {self.angular_rule!r}")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(
            min(2 * self.radial_order, _MAX_ORDER),
            min(2 * self.angular_order, _MAX_ORDER),
            self.rel_tol,
            self.max_doublings,
            self.angular_rule,
            self.abs_tol,
        )


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float
    converged: bool
    radial_order: int
    angular_order: int


@lru_cache(maxsize=64)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_nodes(order: int):
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on [-1, 1]."""
    if order < 2:
        raise ValueError("Gauss-Legendre order must be >= 2")
    return _leggauss(int(order))


@lru_cache(maxsize=64)
def _grid(radial_order: int, angular_order: int, angular_rule: str):
    xr, wr = gauss_legendre_nodes(radial_order)
    x = 0.5 * (xr + 1.0)
    wx = 0.5 * wr
    if angular_rule == "trapezoid":
        th = np.arange(angular_order) * (2.0 * math.pi / angular_order)
        wt = np.full(angular_order, 2.0 * math.pi / angular_order)
    else:
        xa, wa = gauss_legendre_nodes(angular_order)
        th = math.pi * (xa + 1.0)
        wt = math.pi * wa
    for a in (x, wx, th, wt):
        a.setflags(write=False)
    return x, wx, th, wt


def aperture_grid(spec: QuadratureSpec):
    """Return (x, wx, theta, wtheta) for the unit-aperture tensor rule."""
    return _grid(spec.radial_order, spec.angular_order, spec.angular_rule)


def _apply(f, spec: QuadratureSpec) -> complex:
    x, wx, th, wt = aperture_grid(spec)
    vals = np.asarray(f(x[:, None], th[None, :]))
    vals = np.broadcast_to(vals, (x.size, th.size))
    return complex(wx @ vals @ wt)


def integrate_2d(f, spec: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """Integrate ``f(x, theta)`` over [0, 1] x [0, 2 pi).

    ``f`` must broadcast over an ``(n_x, 1)`` and a ``(1, n_theta)``
    array.  The order is doubled until two consecutive estimates agree to
    ``rel_tol``; if the budget runs out a :class:`NonConvergence` warning is
    issued and the finest estimate is returned with ``converged=False``.
    """
    cur = spec
    prev = _apply(f, cur)
    if spec.max_doublings == 0:
        return QuadratureResult(prev, float("nan"), True, cur.radial_order, cur.angular_order)
    err = float("inf")
    for _ in range(spec.max_doublings):
        nxt = cur.doubled()
        if nxt == cur:
            break
        val = _apply(f, nxt)
        err = abs(val - prev)
        prev, cur = val, nxt
        if err <= spec.rel_tol * abs(val) or err <= spec.abs_tol:
            return QuadratureResult(val, err, True, cur.radial_order, cur.angular_order)
    warnings.warn(
        NonConvergence(
            f"integrate_2d: no convergence to rel_tol={spec.rel_tol} after "
            f"{spec.max_doublings} doublings (error estimate {err:.3g})",
            estimate=prev,
            error=err,
        )
    )
    return QuadratureResult(prev, err, False, cur.radial_order, cur.angular_order)


def rayleigh_nodes(order: int, truncation: float = 5.0):
    """Nodes t and normalised weights for E[f(T)] with T ~ Rayleigh(1).

    Gauss-Legendre on [0, truncation] with the Rayleigh density folded
    into the weights; weights are renormalised to sum to one.
    """
    t, w = gauss_legendre_nodes(order)
    t = 0.5 * truncation * (t + 1.0)
    w = 0.5 * truncation * w * t * np.exp(-0.5 * t * t)
    return t, w / w.sum()
