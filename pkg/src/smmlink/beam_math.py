"""Laguerre-Gaussian beams, back-propagated fiber modes and the special
functions behind them.

All lengths are in metres and all angles in radians.  Field evaluators
accept numpy arrays for the transverse coordinates and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPOT_MODELS = ("linear", "standard")


@dataclass(frozen=True, order=True)
class ModeIndex:
    """Radial order ``p`` and azimuthal order ``l`` of an LG field.

    The fiber mode LP_{l,p+1} is approximated by LG_{p,l}, so the same
    index labels both sides of the link.
    """

    p: int
    l: int

    def __post_init__(self):
        if int(self.p) != self.p or int(self.l) != self.l:
            raise ValueError(f"mode orders must be integers, got ({self.p}, {self.l})")
        if self.p < 0:
            raise ValueError(f"radial order must be >= 0, got {self.p}")

    @property
    def lp_label(self) -> str:
        return f"LP{abs(self.l)}{self.p + 1}"

    @property
    def lg_label(self) -> str:
        return f"LG{self.p}{self.l}"

    @classmethod
    def parse(cls, text: str) -> "ModeIndex":
        """Parse ``"p,l"`` or an ``LPlm`` label such as ``"LP21"``."""
        text = text.strip()
        if text.upper().startswith("LP"):
            digits = text[2:]
            if len(digits) != 2 or not digits.isdigit():
                raise ValueError(f"cannot parse LP label {text!r}")
            return cls(p=int(digits[1]) - 1, l=int(digits[0]))
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError(f"expected 'p,l', got {text!r}")
        return cls(p=int(parts[0]), l=int(parts[1]))

    def __str__(self):
        return f"({self.p},{self.l})"


@dataclass(frozen=True)
class BeamGeometry:
    """Parameters of a propagated LG beam at distance ``distance``."""

    wavelength: float
    waist: float
    distance: float
    rayleigh_range: float
    spot_radius: float
    curvature: float
    gouy: float
    wavenumber: float
    mode: ModeIndex = ModeIndex(0, 0)
    spot_model: str = "linear"

    @property
    def mode_gouy_phase(self) -> float:
        return (2 * self.mode.p + abs(self.mode.l) + 1) * self.gouy


@dataclass(frozen=True)
class FiberSpec:
    """Few-mode fiber behind a focusing lens.

    ``backprop_radius`` is the fiber mode radius imaged back onto the
    aperture plane, lambda*f/(pi*w_a).
    """

    mode_field_radius: float
    focal_length: float
    wavelength: float
    supported_modes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode_field_radius <= 0 or self.focal_length <= 0 or self.wavelength <= 0:
            raise ValueError("fiber radius, focal length and wavelength must be positive")
        modes = tuple(self.supported_modes)
        if not modes:
            raise ValueError("a fiber must support at least one mode")
        if len(set(modes)) != len(modes):
            raise ValueError("duplicate fiber modes")
        object.__setattr__(self, "supported_modes", modes)

    @property
    def backprop_radius(self) -> float:
        return self.wavelength * self.focal_length / (math.pi * self.mode_field_radius)

    @classmethod
    def with_backprop_radius(cls, omega, wavelength, supported_modes, focal_length=1.0):
        """Build a fiber whose back-propagated radius equals ``omega``."""
        w_a = wavelength * focal_length / (math.pi * omega)
        return cls(w_a, focal_length, wavelength, tuple(supported_modes))

    def with_focal_length(self, focal_length: float) -> "FiberSpec":
        return FiberSpec(self.mode_field_radius, focal_length, self.wavelength, self.supported_modes)


SIX_MODE_FMF = (ModeIndex(0, 0), ModeIndex(1, 0), ModeIndex(0, 1), ModeIndex(0, 2))
OAM_FMF = tuple(ModeIndex(0, l) for l in range(6))


def laguerre_assoc(p: int, a: int, x):
    """Associated Laguerre polynomial L_p^a(x) by upward recurrence."""
    if p < 0 or a < 0:
        raise ValueError("laguerre_assoc needs p >= 0 and a >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if p == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + a - x
    for k in range(1, p):
        prev, cur = cur, ((2 * k + 1 + a - x) * cur - (k + a) * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


def lg_normalization(p: int, l: int) -> float:
    """B_pl = sqrt(2 p! / (pi (|l| + p)!))."""
    if p < 0:
        raise ValueError("radial order must be >= 0")
    n = abs(l) + p
    if n > 20:
        return math.exp(0.5 * (math.log(2.0 / math.pi) + _log_factorial(p) - _log_factorial(n)))
    return math.sqrt(2.0 * math.factorial(p) / (math.pi * math.factorial(n)))


def spot_radius(waist, distance, rayleigh_range, mode: ModeIndex, spot_model="linear"):
    order = 1 + 2 * mode.p + abs(mode.l)
    if spot_model == "linear":
        return waist * math.sqrt(order * (1.0 + distance / rayleigh_range))
    if spot_model == "standard":
        return waist * math.sqrt(1.0 + (distance / rayleigh_range) ** 2) * math.sqrt(order)
    raise ValueError(f"unknown spot model {spot_model!r}; expected one of {SPOT_MODELS}")


def propagate_geometry(wavelength, waist, distance, mode=ModeIndex(0, 0), spot_model="linear"):
    """Beam radius, wavefront curvature and Gouy phase after ``distance``."""
    if wavelength <= 0 or waist <= 0:
        raise ValueError("wavelength and waist must be positive")
    if distance < 0:
        raise ValueError(f"propagation distance must be >= 0, got {distance}")
    z_r = math.pi * waist**2 / wavelength
    curvature = math.inf if distance == 0 else distance * (1.0 + (z_r / distance) ** 2)
    return BeamGeometry(
        wavelength=wavelength,
        waist=waist,
        distance=distance,
        rayleigh_range=z_r,
        spot_radius=spot_radius(waist, distance, z_r, mode, spot_model),
        curvature=curvature,
        gouy=math.atan(distance / z_r),
        wavenumber=2.0 * math.pi / wavelength,
        mode=mode,
        spot_model=spot_model,
    )


def displaced_radius(r, theta, d):
    """Distance from the beam centre, displaced by ``d`` along x, to (r, theta)."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    g2 = r * r + d * d - 2.0 * r * d * np.cos(theta)
    g = np.sqrt(np.maximum(g2, 0.0))
    return g if g.ndim else float(g)


def displaced_azimuth(r, theta, d):
    """Azimuth of (r, theta) seen from a beam centre displaced by ``d``.

    Upper half plane uses pi - arccos(c), lower half pi + arccos(c) with
    c = (d - r cos theta) / g.  At the singular point g = 0 the result is 0.
    """
    r = np.asarray(r, dtype=float)
    theta = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
    g = np.asarray(displaced_radius(r, theta, d))
    safe = g > 0
    c = np.where(safe, (d - r * np.cos(theta)) / np.where(safe, g, 1.0), 1.0)
    acos = np.arccos(np.clip(c, -1.0, 1.0))
    out = np.where(theta <= np.pi, np.pi - acos, np.pi + acos)
    if d == 0:
        # both branches collapse to theta; avoid arccos round-off
        out = theta.copy() if theta.ndim else theta
    out = np.where(safe, out, 0.0)
    return out if out.ndim else float(out)


def _radial_profile(mode: ModeIndex, rho, width):
    """B/w (sqrt2 rho/w)^|l| L_p^|l|(2 rho^2/w^2) exp(-rho^2/w^2)."""
    al = abs(mode.l)
    u = rho / width
    amp = lg_normalization(mode.p, mode.l) / width * np.exp(-u * u)
    if al:
        amp = amp * (math.sqrt(2.0) * u) ** al
    if mode.p:
        amp = amp * laguerre_assoc(mode.p, al, 2.0 * u * u)
    return amp


def _static_phase(geom: BeamGeometry) -> float:
    # exp(-j nu z) with nu*z reduced modulo 2 pi before exponentiation
    axial = math.fmod(geom.wavenumber * geom.distance, 2.0 * math.pi)
    return geom.mode_gouy_phase - axial


def lg_field_misaligned(mode: ModeIndex, geom: BeamGeometry, r, theta, d=0.0, eps=0.0, psi=0.0):
    """Incident LG field on the aperture under pointing error and AOA tilt.

    ``d`` is the lateral displacement of the beam centre, ``eps`` the
    angle-of-arrival deviation and ``psi`` the azimuth of the displacement
    (the displacement is along x for ``psi = 0``).
    """
    theta = np.asarray(theta, dtype=float) - psi
    g = np.asarray(displaced_radius(r, theta, d))
    vt = np.asarray(displaced_azimuth(r, theta, d))
    amp = _radial_profile(mode, g, geom.spot_radius)
    nu = geom.wavenumber
    curv = 0.0 if math.isinf(geom.curvature) else nu / (2.0 * geom.curvature)
    phase = _static_phase(geom) - curv * g * g - nu * eps * g - mode.l * vt
    out = amp * np.exp(1j * phase)
    return out if out.ndim else complex(out)


def lg_field(mode: ModeIndex, geom: BeamGeometry, r, theta):
    """Aligned incident field (no displacement, no tilt)."""
    return lg_field_misaligned(mode, geom, r, theta, 0.0, 0.0)


def fiber_mode_backprop(mode: ModeIndex, omega, r, theta):
    """Fiber mode imaged onto the aperture plane with radius ``omega``.

    ``omega`` may also be a FiberSpec, in which case its back-propagated
    radius is used.
    """
    if isinstance(omega, FiberSpec):
        omega = omega.backprop_radius
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = _radial_profile(mode, r, omega) * np.exp(-1j * mode.l * theta)
    return out if out.ndim else complex(out)


def modes_from_labels(labels: Sequence[str]):
    return tuple(ModeIndex.parse(s) for s in labels)
