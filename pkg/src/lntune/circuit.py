"""
Analytical model of the capacitive L-network.

The network is a shunt capacitor ``cp`` at the source port followed by a
series capacitor ``cs`` towards the load. All quantities are SI (farads,
hertz, ohms); picofarads only appear at file and CLI boundaries.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

_TINY = 1e-300
DISCRIMINANT_ZERO = 1e-15


class CircuitDomainError(ValueError):
    """Raised when the circuit equations hit a degenerate point."""


@dataclass(frozen=True)
class CircuitParams:
    cp: float
    cs: float
    f: float
    rs: float = 50.0

    def __post_init__(self):
        for name in ("cp", "cs", "f", "rs"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise CircuitDomainError(f"{name} must be positive and finite, got {value!r}")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f


def _check_load(zl: complex) -> None:
    if not (cmath.isfinite(zl) and zl.real > 0):
        raise CircuitDomainError(f"load impedance must be finite with positive real part, got {zl!r}")


def input_impedance(params: CircuitParams, zl: complex) -> complex:
    """Impedance seen from the source through the L-network terminated in ``zl``."""
    _check_load(zl)
    w = params.omega
    bp = w * params.cp
    bs = w * params.cs
    z_series = zl + 1.0 / (1j * bs)
    if abs(z_series) < _TINY:
        raise CircuitDomainError("series branch impedance vanishes")
    y = 1j * bp + 1.0 / z_series
    if abs(y) < _TINY:
        raise CircuitDomainError("input admittance vanishes")
    return 1.0 / y


def reflection_coefficient(zin: complex, rs: float = 50.0) -> complex:
    den = zin + rs
    if abs(den) < _TINY:
        raise CircuitDomainError("zin + rs is zero")
    return (zin - rs) / den


def gamma(params: CircuitParams, zl: complex) -> complex:
    """Input reflection coefficient of the tuned network."""
    return reflection_coefficient(input_impedance(params, zl), params.rs)


def gamma_magnitude(cp, cs, f, zl, rs: float = 50.0):
    """Vectorised ``|Gamma|`` over broadcastable arrays of cp, cs (F), f (Hz) and zl.

    No domain checks; intended for landscapes and population-based searches
    where every point is already known to be inside the valid box.
    """
    w = 2.0 * np.pi * np.asarray(f, dtype=float)
    bp = w * np.asarray(cp, dtype=float)
    bs = w * np.asarray(cs, dtype=float)
    zin = 1.0 / (1j * bp + 1.0 / (zl - 1j / bs))
    return np.abs((zin - rs) / (zin + rs))


def load_from_optimal_caps(cp_opt, cs_opt, f, rs: float = 50.0):
    """Load impedance that the network with ``(cp_opt, cs_opt)`` matches to ``rs`` exactly.

    Works element-wise on arrays as well as on scalars.
    """
    w = 2.0 * np.pi * np.asarray(f, dtype=float)
    bp = w * np.asarray(cp_opt, dtype=float)
    bs = w * np.asarray(cs_opt, dtype=float)
    zl = 1.0 / (1.0 / rs - 1j * bp) + 1j / bs
    if np.ndim(zl) == 0:
        return complex(zl)
    return zl


def closed_form_caps(zl: complex, f: float, rs: float = 50.0) -> list[tuple[float, float]]:
    """All positive (cp, cs) pairs that match ``zl`` to ``rs`` at frequency ``f``.

    Both sign branches of the closed-form solution are evaluated and pairs with
    a non-positive element are dropped. A load with no real solution (or the
    already-matched load ``zl == rs``, where the formula degenerates) gives an
    empty list.
    """
    rl, xl = zl.real, zl.imag
    w = 2.0 * math.pi * f
    disc = rl * rs - rl * rl
    if abs(disc) <= DISCRIMINANT_ZERO:
        disc = 0.0
    if disc < 0:
        return []
    q = math.sqrt(disc)
    branches = (1.0, -1.0) if q > 0 else (1.0,)
    out: list[tuple[float, float]] = []
    for sign in branches:
        cp_den = w * (rl * xl * rs + sign * rl * rs * q)
        cs_den = w * (rl * rl + xl * xl - rl * rs)
        if abs(cp_den) < _TINY or abs(cs_den) < _TINY:
            continue
        cp = (disc + sign * xl * q) / cp_den
        cs = (xl + sign * q) / cs_den
        if not (cp > 0 and cs > 0 and math.isfinite(cp) and math.isfinite(cs)):
            continue
        if any(_close(cp, a) and _close(cs, b) for a, b in out):
            continue
        out.append((cp, cs))
    return out


def _close(a: float, b: float, rel: float = 1e-12) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b))


def closed_form_caps_array(zl: np.ndarray, f: np.ndarray, rs: float = 50.0):
    """Vectorised positive-branch solution; NaN where no valid pair exists.

    Of the two sign branches only ``+`` can give ``cp > 0`` (the ``-`` branch
    makes ``cp = -q / (w rl rs)``), so this returns at most one pair per load.
    """
    zl = np.asarray(zl, dtype=complex)
    rl, xl = zl.real, zl.imag
    w = 2.0 * np.pi * np.asarray(f, dtype=float)
    disc = rl * rs - rl * rl
    disc = np.where(np.abs(disc) <= DISCRIMINANT_ZERO, 0.0, disc)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.sqrt(disc)
        cp = (disc + xl * q) / (w * (rl * xl * rs + rl * rs * q))
        cs = (xl + q) / (w * (rl * rl + xl * xl - rl * rs))
    bad = ~((disc >= 0) & (cp > 0) & (cs > 0) & np.isfinite(cp) & np.isfinite(cs))
    cp = np.where(bad, np.nan, cp)
    cs = np.where(bad, np.nan, cs)
    return cp, cs


def gamma_magnitude_gradient(params: CircuitParams, zl: complex) -> tuple[float, float]:
    """Exact ``(d|Gamma|/dCp, d|Gamma|/dCs)`` in 1/F.

    Chain rule through ``Gamma(Zin)``, ``Zin = 1/Y`` and
    ``Y = j w Cp + 1/(Zl - j/(w Cs))``. Raises :class:`CircuitDomainError` at
    ``|Gamma| < 1e-12`` where the magnitude is not differentiable.
    """
    _check_load(zl)
    w = params.omega
    bs = w * params.cs
    z_series = zl - 1j / bs
    y = 1j * w * params.cp + 1.0 / z_series
    zin = 1.0 / y
    g = (zin - params.rs) / (zin + params.rs)
    mag = abs(g)
    if mag < 1e-12:
        raise CircuitDomainError("|Gamma| is not differentiable at a perfect match")
    dg_dzin = 2.0 * params.rs / (zin + params.rs) ** 2
    dzin_dy = -1.0 / (y * y)
    dy_dcp = 1j * w
    # d(1/z_series)/dCs = -(1/z_series^2) * d(z_series)/dCs, d(z_series)/dCs = j w / bs^2
    dy_dcs = -(1.0 / (z_series * z_series)) * (1j * w / (bs * bs))
    gc = g.conjugate()
    d_cp = (gc * dg_dzin * dzin_dy * dy_dcp).real / mag
    d_cs = (gc * dg_dzin * dzin_dy * dy_dcs).real / mag
    return d_cp, d_cs
