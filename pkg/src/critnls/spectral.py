"""Periodic grids, the unitary Fourier transform, the free group and the M/D factors.

Conventions
-----------
* Grid points per axis are ``x_j = (j - N/2) h`` with ``h = 2L/N``.
* ``fourier`` approximates ``(2 pi)^{-d/2} \\int exp(-i x.xi) u(x) dx`` and returns a
  Field on the dual grid, whose half-width is ``pi/h`` (same ``N``).
* ``free_propagate(u, t)`` applies the multiplier ``exp(-i t |xi|^2)``.
* ``apply_M(u, t)`` multiplies by ``exp(i |x|^2 / 4t)``; ``apply_D(u, t)`` evaluates
  ``(2t)^{-d/2} u(x / 2t)`` by band-limited interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_dimension, check_power_of_two
from .errors import DomainOverflowError, UndersampledError

BOUNDARY_SHELL = 0.9
DEFAULT_OVERFLOW_CAP = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)^d``."""

    d: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        check_dimension(self.d)
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError("half_width must be positive and finite")
        check_power_of_two(self.points_per_axis, "points_per_axis")
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def axis(self) -> np.ndarray:
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        ax = self.axis
        if self.d == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def radius_squared(self) -> np.ndarray:
        ax2 = self.axis**2
        if self.d == 1:
            return ax2
        return ax2[:, None] + ax2[None, :]

    def sup_radius(self) -> np.ndarray:
        a = np.abs(self.axis)
        if self.d == 1:
            return a
        return np.maximum(a[:, None], a[None, :])

    def wavenumbers_squared(self) -> np.ndarray:
        """``|k|^2`` in unshifted FFT order."""
        k2 = (2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.h)) ** 2
        if self.d == 1:
            return k2
        return k2[:, None] + k2[None, :]

    def dual(self) -> "Grid":
        return Grid(self.d, np.pi / self.h, self.points_per_axis)

    def scaled(self, factor: float) -> "Grid":
        return Grid(self.d, self.half_width * factor, self.points_per_axis)

    def refined(self) -> "Grid":
        return Grid(self.d, self.half_width, 2 * self.points_per_axis)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape, dtype=complex))

    def sample(self, rule) -> "Field":
        """Field with values ``rule(*coords)``."""
        return Field(self, np.asarray(rule(*self.coords()), dtype=complex) * np.ones(self.shape))

    def to_json(self) -> dict:
        return {"d": self.d, "half_width": self.half_width, "points_per_axis": self.points_per_axis}


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a :class:`Grid`; the value array is read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def conj(self) -> "Field":
        return self.with_values(np.conj(self.values))

    def mass(self) -> float:
        return float(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2))

    def l2(self) -> float:
        return float(np.sqrt(self.mass()))

    def lp(self, p: float) -> float:
        if np.isinf(p):
            return self.linf()
        return float((self.grid.cell_volume * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True)
class NormReport:
    l2: float
    lp: dict = dc_field(default_factory=dict)
    sobolev: dict = dc_field(default_factory=dict)
    linf: float = 0.0


def inner(f: Field, g: Field) -> complex:
    """``(f, g) = \\int f conj(g) dx`` on the common grid."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return complex(f.grid.cell_volume * np.vdot(g.values, f.values))


def _centered_fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(values)))


def _centered_ifft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(values)))


def fourier(f: Field) -> Field:
    """Unitary transform onto the dual grid."""
    g = f.grid
    scale = g.cell_volume * (2.0 * np.pi) ** (-g.d / 2.0)
    return Field(g.dual(), scale * _centered_fft(f.values))


def inverse_fourier(fhat: Field) -> Field:
    """Inverse of :func:`fourier`; ``fhat`` lives on a dual grid."""
    g = fhat.grid
    n = g.points_per_axis
    scale = (n * g.h) ** g.d * (2.0 * np.pi) ** (-g.d / 2.0)
    return Field(g.dual(), scale * _centered_ifft(fhat.values))


def free_propagate(f: Field, t: float) -> Field:
    """``U(t) f`` with multiplier ``exp(-i t |xi|^2)``."""
    if t == 0:
        return f
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    mult = np.exp(-1j * t * f.grid.wavenumbers_squared())
    return f.with_values(np.fft.ifftn(mult * np.fft.fftn(f.values)))


def apply_M(f: Field, t: float) -> Field:
    if t == 0:
        raise ValueError("M(t) requires t != 0")
    return f.with_values(f.values * np.exp(1j * f.grid.radius_squared() / (4.0 * t)))


def _chirp_eval(coeffs: np.ndarray, alpha: float, n_out: int, axis: int) -> np.ndarray:
    """``X[q] = sum_m c[m] exp(i alpha m q)`` for centred ``m`` and ``q`` along ``axis``.

    Bluestein's identity ``m q = (m^2 + q^2 - (q - m)^2) / 2`` turns the sum into a
    convolution, evaluated with zero-padded FFTs.
    """
    c = np.moveaxis(coeffs, axis, -1)
    n_in = c.shape[-1]
    m = np.arange(n_in, dtype=np.int64) - n_in // 2
    q = np.arange(n_out, dtype=np.int64) - n_out // 2
    a = c * np.exp(0.5j * alpha * (m * m))
    size = 1 << int(np.ceil(np.log2(n_in + n_out - 1)))
    # r = q' - m' ranges over [-(n_in - 1), n_out - 1]; l = q - m = r + offset
    offset = n_in // 2 - n_out // 2
    r = np.concatenate([np.arange(0, n_out), np.arange(-(n_in - 1), 0)]).astype(np.int64)
    l = r + offset
    kern = np.zeros(size, dtype=complex)
    kern[r % size] = np.exp(-0.5j * alpha * (l * l))
    pad = np.zeros(c.shape[:-1] + (size,), dtype=complex)
    pad[..., :n_in] = a
    conv = np.fft.ifft(np.fft.fft(pad, axis=-1) * np.fft.fft(kern), axis=-1)[..., :n_out]
    out = conv * np.exp(0.5j * alpha * (q * q))
    return np.moveaxis(out, -1, axis)


def _mass_outside(values: np.ndarray, radius: np.ndarray, cutoff: float) -> float:
    w = np.abs(values) ** 2
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[radius > cutoff].sum() / total)


def apply_D(f: Field, t: float, out_grid: Grid | None = None, cap: float = DEFAULT_OVERFLOW_CAP) -> Field:
    """``(2t)^{-d/2} f(x / 2t)`` sampled on ``out_grid`` (default: the source grid).

    The source is read as its trigonometric interpolant.  Target points that map
    outside the source box get 0.  Raises :class:`DomainOverflowError` when more
    than ``cap`` of the mass falls outside the target box, or when more than
    ``cap`` of the spectral mass would alias on the target grid.
    """
    if t == 0 or not np.isfinite(t):
        raise ValueError("D(t) requires finite t != 0")
    src = f.grid
    out = src if out_grid is None else out_grid
    if out.d != src.d:
        raise ValueError("source and target grids differ in dimension")
    d = src.d
    s = 1.0 / (2.0 * t)
    amp = complex(2.0 * t) ** (-d / 2.0) if t < 0 else (2.0 * t) ** (-d / 2.0)

    # target box |x| < L_out covers |y| < |s| L_out on the source side
    reach = abs(s) * out.half_width
    lost = _mass_outside(f.values, src.sup_radius(), reach)
    if lost > cap:
        raise DomainOverflowError(
            f"D({t:g}) maps {lost:.3g} of the mass outside the target domain (cap {cap:g})"
        )

    ratio = abs(s) * out.h / src.h
    n_in, n_out = src.points_per_axis, out.points_per_axis
    if abs(ratio - round(ratio)) < 1e-12 and round(ratio) >= 1:
        step = int(round(ratio)) * (1 if s > 0 else -1)
        idx = n_in // 2 + step * (np.arange(n_out) - n_out // 2)
        ok = (idx >= 0) & (idx < n_in)
        take = np.where(ok, idx, 0)
        vals = f.values
        for axis in range(d):
            vals = np.take(vals, take, axis=axis)
            mask_shape = [1] * d
            mask_shape[axis] = n_out
            vals = vals * ok.reshape(mask_shape)
        return Field(out, amp * vals)

    coeffs = _centered_fft(f.values) / n_in**d
    nyq = np.pi / (abs(s) * out.h)
    kappa_radius = np.abs(np.pi / src.half_width * (np.arange(n_in) - n_in // 2))
    if d == 2:
        kappa_radius = np.maximum(kappa_radius[:, None], kappa_radius[None, :])
    aliased = _mass_outside(coeffs, kappa_radius, nyq)
    if aliased > cap:
        raise DomainOverflowError(
            f"D({t:g}) needs a finer target grid: {aliased:.3g} of the spectral mass aliases"
        )

    alpha = 2.0 * np.pi * s * out.h / (n_in * src.h)
    vals = coeffs
    for axis in range(d):
        vals = _chirp_eval(vals, alpha, n_out, axis)
    inside = np.abs(s * out.axis) < src.half_width
    if d == 1:
        vals = vals * inside
    else:
        vals = vals * (inside[:, None] & inside[None, :])
    return Field(out, amp * vals)


def profile_of(u: Field, t: float) -> Field:
    """``e^{i d pi/4} (M(t) D(t))^{-1} u``, read on the grid ``Grid(L/2t, N)``.

    ``(M D)^{-1} = D(1/4t) M(-t)`` and the target grid is chosen so that the
    dilation is a pure relabelling of samples.
    """
    if t <= 0:
        raise ValueError("profile_of requires t > 0")
    g = u.grid
    target = g.scaled(1.0 / (2.0 * t))
    w = apply_D(apply_M(u, -t), 1.0 / (4.0 * t), out_grid=target, cap=np.inf)
    return w * np.exp(1j * g.d * np.pi / 4.0)


def norms(f: Field, ps: Iterable[float] = (), sobolev_orders: Iterable[tuple[float, float]] = ()) -> NormReport:
    """L^p norms and weighted Sobolev norms ``|| <i grad>^m <x>^s f ||_2``."""
    lp = {}
    for p in ps:
        if p < 2:
            raise ValueError("only p >= 2 is supported")
        lp[p] = f.lp(p)
    sob = {}
    for m, s in sobolev_orders:
        weighted = f * (1.0 + f.grid.radius_squared()) ** (s / 2.0)
        if m == 0:
            sob[(m, s)] = weighted.l2()
            continue
        fh = fourier(weighted)
        sob[(m, s)] = (fh * (1.0 + fh.grid.radius_squared()) ** (m / 2.0)).l2()
    return NormReport(l2=f.l2(), lp=lp, sobolev=sob, linf=f.linf())


def strichartz_exponent(d: int) -> float:
    return 2.0 * (d + 2) / d


def strichartz_norm(times: Sequence[float], fields: Sequence[Field], d: int | None = None) -> float:
    """Trapezoid-in-time ``L^q_t L^q_x`` norm with ``q = 2(d+2)/d``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size != len(fields):
        raise ValueError("times and fields must be matching 1-D sequences")
    if times.size < 4:
        raise UndersampledError(f"Strichartz quadrature needs at least 4 samples, got {times.size}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    d = fields[0].grid.d if d is None else check_dimension(d)
    q = strichartz_exponent(d)
    vals = np.array([f.lp(q) ** q for f in fields])
    return float(np.trapezoid(vals, times) ** (1.0 / q))


def boundary_fraction(f: Field, shell: float = BOUNDARY_SHELL) -> float:
    """Share of the L^2 mass with sup-norm radius beyond ``shell * L``."""
    return _mass_outside(f.values, f.grid.sup_radius(), shell * f.grid.half_width)


def dealias_mask(grid: Grid) -> np.ndarray:
    """Boolean 2/3-rule mask in unshifted FFT order."""
    n = grid.points_per_axis
    k = np.abs(np.fft.fftfreq(n) * n)
    keep = k < n / 3.0
    if grid.d == 1:
        return keep
    return keep[:, None] & keep[None, :]
