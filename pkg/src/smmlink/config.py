"""Link configuration: defaults, a small key-value file format, validation
and round-trip serialization.

File format (UTF-8 text, one entry per line)::

    # comment
    [link]
    distance_m = 10
    power.total_dbm = 12      # fully qualified keys work anywhere

Keys are ``section.name``; a bare ``name`` belongs to the most recent
``[section]`` header.  Values are decimal numbers, ``true``/``false`` or
bare words.  Units are part of the key name.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace

from .beam_math import OAM_FMF, SPOT_MODELS, FiberSpec
from .capacity import DetectorConfig, PowerBudget, dbm_to_watts
from .channel import ChannelEnsemble, MisalignmentStats, laser_phase_draws, rayleigh_draws
from .coupling import ApertureSpec, beam_geometries
from .errors import ParseError, ValidationError
from .quadrature import QuadratureSpec


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _pow2(v):
    return 8 <= v <= 4096 and (v & (v - 1)) == 0


# name -> (section, type, default, check, bound text)
_SCHEMA = {
    "wavelength_nm": ("link", float, 1550.0, _positive, "> 0"),
    "waist_um": ("link", float, 800.0, _positive, "> 0"),
    "distance_m": ("link", float, 10.0, _positive, "> 0"),
    "spot_model": ("link", str, "linear", lambda v: v in SPOT_MODELS, f"one of {SPOT_MODELS}"),
    "aperture_mm": ("receiver", float, 6.0, _positive, "> 0"),
    "beta": ("receiver", float, 1.0, _positive, "> 0"),
    "fiber_backprop_mm": ("receiver", float, 1.75, _positive, "> 0"),
    "orient_mrad": ("misalignment", float, 0.125, _nonneg, ">= 0"),
    "aoa_mrad": ("misalignment", float, 0.125, _nonneg, ">= 0"),
    "random_phases": ("misalignment", bool, False, lambda v: True, "true/false"),
    "total_dbm": ("power", float, 10.0, lambda v: -60.0 <= v <= 60.0, "in [-60, 60]"),
    "responsivity_a_per_w": ("detector", float, 0.7, _positive, "> 0"),
    "feedback_ohm": ("detector", float, 500.0, _positive, "> 0"),
    "noise_figure_db": ("detector", float, 5.0, _nonneg, ">= 0"),
    "temperature_k": ("detector", float, 300.0, _positive, "> 0"),
    "bandwidth_ghz": ("detector", float, 10.0, _positive, "> 0"),
    "radial_order": ("quadrature", int, 64, _pow2, "power of two in [8, 4096]"),
    "angular_order": ("quadrature", int, 128, _pow2, "power of two in [8, 4096]"),
    "rayleigh_order": ("quadrature", int, 32, lambda v: 2 <= v <= 512, "in [2, 512]"),
    "realizations": ("montecarlo", int, 2000, lambda v: v >= 100, ">= 100"),
    "final_realizations": ("montecarlo", int, 10000, lambda v: v >= 100, ">= 100"),
    "seed": ("montecarlo", int, 1, _nonneg, ">= 0"),
}

SECTIONS = ("link", "receiver", "misalignment", "power", "detector", "quadrature", "montecarlo")


@dataclass(frozen=True)
class LinkConfig:
    wavelength_nm: float = 1550.0
    waist_um: float = 800.0
    distance_m: float = 10.0
    spot_model: str = "linear"
    aperture_mm: float = 6.0
    beta: float = 1.0
    fiber_backprop_mm: float = 1.75
    orient_mrad: float = 0.125
    aoa_mrad: float = 0.125
    random_phases: bool = False
    total_dbm: float = 10.0
    responsivity_a_per_w: float = 0.7
    feedback_ohm: float = 500.0
    noise_figure_db: float = 5.0
    temperature_k: float = 300.0
    bandwidth_ghz: float = 10.0
    radial_order: int = 64
    angular_order: int = 128
    rayleigh_order: int = 32
    realizations: int = 2000
    final_realizations: int = 10000
    seed: int = 1

    def __post_init__(self):
        for f in fields(self):
            section, typ, _, check, bound = _SCHEMA[f.name]
            v = getattr(self, f.name)
            if typ is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise ValidationError(f"{section}.{f.name}", f"expected a finite number, got {v!r}")
                object.__setattr__(self, f.name, float(v))
            elif typ is int and (isinstance(v, bool) or not isinstance(v, int)):
                raise ValidationError(f"{section}.{f.name}", f"expected an integer, got {v!r}")
            elif typ is bool and not isinstance(v, bool):
                raise ValidationError(f"{section}.{f.name}", f"expected true/false, got {v!r}")
            if not check(getattr(self, f.name)):
                raise ValidationError(f"{section}.{f.name}", f"value {v!r} out of range (must be {bound})")

    # -- SI views ----------------------------------------------------------
    @property
    def wavelength(self) -> float:
        return self.wavelength_nm * 1e-9

    @property
    def waist(self) -> float:
        return self.waist_um * 1e-6

    @property
    def total_power(self) -> float:
        return float(dbm_to_watts(self.total_dbm))

    @property
    def fiber_backprop_radius(self) -> float:
        return self.fiber_backprop_mm * 1e-3

    def detector(self) -> DetectorConfig:
        return DetectorConfig(
            responsivity=self.responsivity_a_per_w,
            feedback_resistor=self.feedback_ohm,
            noise_figure_db=self.noise_figure_db,
            temperature=self.temperature_k,
            bandwidth=self.bandwidth_ghz * 1e9,
        )

    def budget(self) -> PowerBudget:
        return PowerBudget(self.total_power)

    def stats(self) -> MisalignmentStats:
        return MisalignmentStats(self.orient_mrad * 1e-3, self.aoa_mrad * 1e-3, self.distance_m)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(self.radial_order, self.angular_order, max_doublings=0)

    def geometries(self, modes=OAM_FMF):
        return beam_geometries(modes, self.wavelength, self.waist, self.distance_m, self.spot_model)

    def aperture(self, diameter=None) -> ApertureSpec:
        """Aperture with focal length equal to its diameter."""
        D = self.aperture_mm * 1e-3 if diameter is None else diameter
        return ApertureSpec(D, D)

    def fiber(self, diameter=None, modes=OAM_FMF) -> FiberSpec:
        """Fiber whose back-propagated radius gives ``beta`` when f = D.

        With f = D the mode field radius w_a = 2 beta lambda / pi does not
        depend on D.
        """
        ap = self.aperture(diameter)
        w_a = 2.0 * self.beta * self.wavelength / math.pi
        return FiberSpec(w_a, ap.focal_length, self.wavelength, tuple(modes))

    def channel_ensemble(self, diameter, n, seed, stats=None, modes=OAM_FMF) -> ChannelEnsemble:
        stats = stats or self.stats()
        d, eps = rayleigh_draws(stats, n, seed)
        phases = laser_phase_draws(n, len(modes), seed) if self.random_phases else None
        fib = self.fiber(diameter, modes)
        return ChannelEnsemble(
            modes, modes, self.geometries(modes), fib.backprop_radius, diameter, d, eps, phases, self.quadrature()
        )

    # -- serialization -----------------------------------------------------
    def to_text(self) -> str:
        out = []
        for section in SECTIONS:
            out.append(f"[{section}]")
            for f in fields(self):
                if _SCHEMA[f.name][0] == section:
                    out.append(f"{f.name} = {_format(getattr(self, f.name))}")
            out.append("")
        return "\n".join(out)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_updates(self, **kw) -> "LinkConfig":
        return replace(self, **kw)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return repr(v)


def _convert(name, raw, line):
    section, typ, *_ = _SCHEMA[name]
    key = f"{section}.{name}"
    if typ is bool:
        low = raw.lower()
        if low not in ("true", "false"):
            raise ParseError(f"expected true or false, got {raw!r}", line, key)
        return low == "true"
    if typ is str:
        return raw
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ParseError(f"cannot parse {raw!r} as {typ.__name__}", line, key) from None


def parse_config(text: str) -> LinkConfig:
    values = {}
    section = None
    for no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", no)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ParseError(f"unknown section [{section}]", no)
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", no)
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." in key:
            sec, name = key.split(".", 1)
        else:
            if section is None:
                raise ParseError("bare key outside any section", no, key)
            sec, name = section, key
        if name not in _SCHEMA or _SCHEMA[name][0] != sec:
            raise ParseError("unknown key", no, f"{sec}.{name}")
        if not raw:
            raise ParseError("missing value", no, f"{sec}.{name}")
        if name in values:
            raise ParseError("duplicate key", no, f"{sec}.{name}")
        values[name] = _convert(name, raw, no)
    return LinkConfig(**values)


def load_config(path) -> LinkConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
