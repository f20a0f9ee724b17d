"""Scattering data and the asymptotic profiles built from them.

The modified profile is
``V(t) = exp(-i d pi/4) M(t) D(t) [uhat_plus * exp(i phase(t, xi))]``
with ``phase = -lam |uhat_plus|^{2/d} log t`` in the constant-coefficient case.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from ._validation import check_dimension, check_positive
from .spectral import (
    Field,
    Grid,
    apply_D,
    apply_M,
    fourier,
    free_propagate,
    inverse_fourier,
    norms,
)

DATUM_KINDS = ("gauss", "bump", "gridded")
SIGMA_NODES = 64


@dataclass(frozen=True)
class ScatteringDatum:
    """A final state ``u_plus`` known in closed form or on a grid.

    ``gauss``: ``uhat = A exp(-|xi|^2 / 2 sigma^2)``.
    ``bump``: ``uhat = A exp(1 - 1/(1 - |xi|^2/r^2))`` for ``|xi| < r``, else 0.
    ``gridded``: ``u_plus`` given as a :class:`Field` in physical space.
    """

    d: int
    kind: str = "gauss"
    amplitude: float = 1.0
    width: float = 1.0
    u_plus_field: Field | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        check_dimension(self.d)
        if self.kind not in DATUM_KINDS:
            raise ValueError(f"unknown datum kind {self.kind!r}; expected one of {DATUM_KINDS}")
        check_positive(self.width, "width")
        if self.kind == "gridded":
            if self.u_plus_field is None or self.u_plus_field.grid.d != self.d:
                raise ValueError("a gridded datum needs a Field of matching dimension")
        if not np.isfinite(self.regularity):
            raise ValueError("datum has infinite weighted norm")

    @classmethod
    def gauss(cls, d: int = 1, amplitude: float = 1.0, sigma: float = 1.0):
        return cls(d, "gauss", float(amplitude), float(sigma))

    @classmethod
    def bump(cls, d: int = 1, amplitude: float = 1.0, radius: float = 2.0):
        return cls(d, "bump", float(amplitude), float(radius))

    @classmethod
    def gridded(cls, u_plus: Field):
        return cls(u_plus.grid.d, "gridded", 1.0, 1.0, u_plus)

    @property
    def is_closed_form(self) -> bool:
        return self.kind != "gridded"

    def scaled(self, factor: float) -> "ScatteringDatum":
        if self.kind == "gridded":
            return ScatteringDatum.gridded(self.u_plus_field * factor)
        return ScatteringDatum(self.d, self.kind, self.amplitude * factor, self.width)

    def fourier_rule(self, *xi) -> np.ndarray:
        """Closed-form ``uhat_plus`` at the given frequency coordinates."""
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in xi)
        if self.kind == "gauss":
            return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))
        if self.kind == "bump":
            z = r2 / self.width**2
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                out = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - z))
            return np.where(z < 1.0, out, 0.0)
        raise ValueError("gridded data have no closed-form transform; use fourier_field")

    @property
    def frequency_extent(self) -> float:
        """Radius beyond which ``|uhat_plus|`` is below ``1e-10`` of its peak (sup-norm)."""
        if self.kind == "gauss":
            return self.width * np.sqrt(2.0 * np.log(1e10))
        if self.kind == "bump":
            return self.width
        fh = self.fourier_field()
        a = np.abs(fh.values)
        big = a > 1e-10 * a.max() if a.max() > 0 else a > 0
        return float(fh.grid.sup_radius()[big].max()) if big.any() else 0.0

    @property
    def spatial_extent(self) -> float:
        """Radius beyond which ``|u_plus|`` is negligible (closed forms) or the grid half-width."""
        if self.kind == "gauss":
            return np.sqrt(2.0 * np.log(1e10)) / self.width
        if self.kind == "bump":
            return 400.0 / self.width
        return self.u_plus_field.grid.half_width

    def native_grid(self) -> Grid:
        """A physical-space grid resolving ``u_plus``."""
        if self.kind == "gridded":
            return self.u_plus_field.grid
        xi = self.frequency_extent
        h = np.pi / (1.5 * xi)
        # headroom for the spatial spread of phase-modulated transforms
        half = max(4.0 * self.spatial_extent, 8.0 * h)
        n = int(2 ** np.ceil(np.log2(2.0 * half / h)))
        n = max(n, 64)
        return Grid(self.d, n * h / 2.0, n)

    def fourier_field(self, grid: Grid | None = None) -> Field:
        """``uhat_plus`` on the dual of a physical grid (default: the native grid)."""
        grid = self.native_grid() if grid is None else grid
        if self.kind == "gridded":
            if grid != self.u_plus_field.grid:
                raise ValueError("a gridded datum is only available on its own grid")
            return fourier(self.u_plus_field)
        return grid.dual().sample(self.fourier_rule)

    def u_plus(self, grid: Grid | None = None) -> Field:
        grid = self.native_grid() if grid is None else grid
        if self.kind == "gridded":
            if grid != self.u_plus_field.grid:
                raise ValueError("a gridded datum is only available on its own grid")
            return self.u_plus_field
        if self.kind == "gauss":
            a, s = self.amplitude, self.width
            return grid.sample(lambda *x: a * s**self.d * np.exp(-0.5 * s**2 * sum(c**2 for c in x)))
        return inverse_fourier(self.fourier_field(grid))

    @property
    def l2(self) -> float:
        if self.kind == "gauss":
            return float(abs(self.amplitude) * (np.pi * self.width**2) ** (self.d / 4.0))
        return self.fourier_field().l2()

    def fourier_lp(self, p: float) -> float:
        return self.fourier_field().lp(p)

    @property
    def regularity(self) -> float:
        """``|| <x>^{d/(d+2)} u_plus ||_2``."""
        if "regularity" not in self._cache:
            s = self.d / (self.d + 2.0)
            self._cache["regularity"] = norms(self.u_plus(), sobolev_orders=[(0, s)]).sobolev[(0, s)]
        return self._cache["regularity"]


@dataclass(frozen=True)
class PhaseCorrection:
    """Phase ``phase(t, xi)`` multiplying ``uhat_plus`` inside the profile.

    ``constant``: ``-lam |uhat_plus(xi)|^{2/d} log t``.
    ``general``: a user rule ``phi(t, *xi)``; ``oscillation_declared`` records the
    user's claim that the rule keeps the non-resonant modes oscillating.  It is
    never verified.
    """

    kind: str = "constant"
    lam: float = 0.0
    phi: Callable | None = None
    oscillation_declared: bool = False
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "general"):
            raise ValueError("kind must be 'constant' or 'general'")
        if self.kind == "general" and self.phi is None:
            raise ValueError("a general phase needs a rule phi(t, *xi)")
        if not np.isfinite(self.lam):
            raise ValueError("lam must be finite")

    @classmethod
    def constant(cls, lam: float = 0.0):
        return cls("constant", float(lam))

    @classmethod
    def general(cls, phi, oscillation_declared: bool = False, name: str | None = None):
        return cls("general", 0.0, phi, oscillation_declared, name)

    @classmethod
    def adversarial(cls):
        """``phi(t, x) = -t |x|^2`` on the unit ball, 0 outside; cancels the M(t) oscillation there."""

        def phi(t, *xi):
            r2 = sum(np.asarray(c, dtype=float) ** 2 for c in xi)
            return np.where(r2 <= 1.0, -t * r2, 0.0)

        return cls("general", 0.0, phi, False, "adversarial")

    def phase(self, t: float, xi: tuple, uhat_abs: np.ndarray, d: int) -> np.ndarray:
        if self.kind == "constant":
            if self.lam == 0:
                return np.zeros_like(uhat_abs)
            return -self.lam * uhat_abs ** (2.0 / d) * np.log(t)
        raw = np.asarray(self.phi(t, *xi))
        if np.iscomplexobj(raw):
            raise ValueError("phase rule must be real-valued")
        return raw.astype(float) * np.ones_like(uhat_abs)


def _phase_factor(d: int) -> complex:
    return np.exp(-1j * d * np.pi / 4.0)


def modulated_transform(t: float, datum: ScatteringDatum, phase: PhaseCorrection, xi_grid: Grid) -> Field:
    """``uhat_plus * exp(i phase(t, .))`` on a frequency grid (dual of the datum grid for gridded data)."""
    if datum.is_closed_form:
        uh = xi_grid.sample(datum.fourier_rule)
    else:
        uh = datum.fourier_field()
        if uh.grid != xi_grid:
            raise ValueError("a gridded datum is only available on its own dual grid")
    ph = phase.phase(t, xi_grid.coords(), np.abs(uh.values), datum.d)
    return uh * np.exp(1j * ph)


def eval_profile(t: float, datum: ScatteringDatum, phase: PhaseCorrection, grid: Grid, route: str = "auto") -> Field:
    """The profile at time ``t`` sampled on ``grid``.

    ``route='direct'`` evaluates the closed form at ``x/2t``; ``route='dilation'``
    builds the modulated transform on the datum's frequency grid and applies
    ``D(t)`` then ``M(t)``.  ``auto`` uses the direct route when it exists.
    """
    check_positive(t, "t")
    if route == "auto":
        route = "direct" if datum.is_closed_form else "dilation"
    if route == "direct":
        if not datum.is_closed_form:
            raise ValueError("direct route needs a closed-form datum")
        xi = tuple(c / (2.0 * t) for c in grid.coords())
        uh = datum.fourier_rule(*xi)
        ph = phase.phase(t, xi, np.abs(uh), datum.d)
        w = uh * np.exp(1j * ph) * (2.0 * t) ** (-datum.d / 2.0)
        return apply_M(Field(grid, w), t) * _phase_factor(datum.d)
    if route != "dilation":
        raise ValueError("route must be 'auto', 'direct' or 'dilation'")
    w = modulated_transform(t, datum, phase, datum.native_grid().dual())
    return apply_M(apply_D(w, t, out_grid=grid), t) * _phase_factor(datum.d)


def _sigma_rule():
    x, w = leggauss(SIGMA_NODES)
    return 1.5 + 0.5 * x, 0.5 * w


def eval_G(datum: ScatteringDatum, grid: Grid, scale: float = 1.0) -> Field:
    """``G(x) = int_1^2 (2 s)^{-1-d/2} |uhat_plus(x / 2 s)|^{1+2/d} ds``.

    With ``scale = c`` the result is ``G`` evaluated at ``x / c`` (no amplitude factor).
    """
    d = datum.d
    p = 1.0 + 2.0 / d
    nodes, weights = _sigma_rule()
    out = np.zeros(grid.shape)
    if datum.is_closed_form:
        coords = grid.coords()
        for s, w in zip(nodes, weights):
            xi = tuple(c / (2.0 * s * scale) for c in coords)
            out += w * (2.0 * s) ** (-1.0 - d / 2.0) * np.abs(datum.fourier_rule(*xi)) ** p
        return Field(grid, out)
    uh = datum.fourier_field()
    for s, w in zip(nodes, weights):
        out += w * np.abs(apply_D(uh, s * scale, out_grid=grid).values) ** p * scale ** (d / 2.0 * p)
    return Field(grid, out)


def eval_H(t: float, datum: ScatteringDatum, grid: Grid) -> Field:
    """``H(t) = -i D(t/2) G``, i.e. ``-i t^{-d/2} G(x/t)``.

    This is the dilation for which ``H(t) = -i int_t^{2t} F_0(V(s)) ds`` holds
    exactly for every profile ``V``; ``H(1) = -i G``.
    """
    check_positive(t, "t")
    g = eval_G(datum, grid, scale=t)
    return g * (-1j * t ** (-datum.d / 2.0))


def free_minus_profile_decay(datum: ScatteringDatum, times, grid_for=None) -> list[tuple[float, float]]:
    """``|| U(t) u_plus - V_0(t) ||_2`` computed in physical space on a per-time grid."""
    times = [float(t) for t in times]
    if any(t < 1 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be increasing and >= 1")
    grid_for = grid_for or (lambda t: profile_grid(datum, t))
    out = []
    for t in times:
        grid = grid_for(t)
        free = free_propagate(datum.u_plus(grid), t)
        v0 = eval_profile(t, datum, PhaseCorrection.constant(0.0), grid)
        out.append((t, (free - v0).l2()))
    return out


def free_minus_profile_identity(datum: ScatteringDatum, times) -> list[tuple[float, float]]:
    """Same table from ``|| (U(-1/4t) - 1) uhat_plus ||_2`` on the frequency grid."""
    uh = datum.fourier_field()
    out = []
    for t in times:
        out.append((float(t), (free_propagate(uh, -1.0 / (4.0 * t)) - uh).l2()))
    return out


def profile_grid(datum: ScatteringDatum, t: float, shell: float = 0.85, oversample: float = 1.5,
                 min_points: int = 64) -> Grid:
    """Smallest power-of-two grid holding the profile at time ``t`` inside the boundary shell."""
    xi = datum.frequency_extent
    h = np.pi / (oversample * xi)
    half = max(2.0 * t * xi, datum.spatial_extent) / shell
    n = max(int(2 ** np.ceil(np.log2(2.0 * half / h))), min_points)
    return Grid(datum.d, n * h / 2.0, n)
