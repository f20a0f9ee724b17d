"""Homogeneous nonlinearities of critical degree and their angular Fourier modes.

A nonlinearity ``F`` homogeneous of degree ``1 + 2/d`` is fixed by its values on
the unit circle, ``g(theta) = F(exp(i theta))``, so that
``F(z) = |z|**(1 + 2/d) * g(arg z)``.  Expanding ``g`` in a Fourier series gives
the mode decomposition ``F = sum_n g_n F_n`` with ``F_n(z) = |z|**(1+2/d-n) z**n``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dimension, check_power_of_two
from .errors import ResolutionError, UndersampledError

TWO_PI = 2.0 * np.pi

# relative floor below which DFT coefficients are treated as round-off
COEFF_FLOOR = 1e-13


def _gauge(theta):
    return np.exp(1j * theta)


def _modulus(theta):
    return np.ones_like(theta, dtype=complex)


def _resq(theta):
    return (2.0 * np.cos(theta) ** 2).astype(complex)


def _sqrtcos(theta):
    return np.sqrt(np.abs(np.cos(theta))).astype(complex)


BUILTIN_PROFILES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gauge": _gauge,
    "modulus": _modulus,
    "resq": _resq,
    "sqrtcos": _sqrtcos,
}


def degree(d: int) -> float:
    """Critical homogeneity degree ``1 + 2/d``."""
    return 1.0 + 2.0 / check_dimension(d)


@dataclass(frozen=True)
class AngularProfile:
    """Uniform samples of ``g(theta) = F(exp(i theta))`` on ``[0, 2 pi)``."""

    theta_samples: np.ndarray
    values: np.ndarray
    closed_form_id: str | None = None

    def __post_init__(self):
        check_power_of_two(self.values.size, "sample count", minimum=8)
        if self.theta_samples.shape != self.values.shape:
            raise ValueError("theta_samples and values must have the same shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile values must be finite")

    @property
    def n_samples(self) -> int:
        return self.values.size

    @classmethod
    def from_callable(cls, g, n_samples: int = 4096, closed_form_id: str | None = None):
        check_power_of_two(n_samples, "n_samples", minimum=8)
        theta = TWO_PI * np.arange(n_samples) / n_samples
        values = np.asarray(g(theta), dtype=complex) * np.ones(n_samples)
        return cls(theta, values, closed_form_id)

    @classmethod
    def from_id(cls, name: str, d: int = 1, n_samples: int = 4096):
        if name not in BUILTIN_PROFILES:
            raise ValueError(
                f"unknown profile id {name!r}; expected one of {sorted(BUILTIN_PROFILES)}"
            )
        if name == "resq" and d != 2:
            raise ValueError("profile 'resq' (F(u) = 2 (Re u)^2) is defined for d = 2 only")
        return cls.from_callable(BUILTIN_PROFILES[name], n_samples, closed_form_id=name)


@dataclass(frozen=True)
class CoefficientSpectrum:
    """Truncated Fourier coefficients ``{g_n : |n| <= n_max}`` of an angular profile.

    Only nonzero coefficients are stored.  ``tail_bound`` is a nonnegative
    estimate of ``sum_{|n| > n_max} |g_n|``.
    """

    d: int
    coefficients: Mapping[int, complex]
    n_max: int
    tail_bound: float = 0.0

    def __post_init__(self):
        check_dimension(self.d)
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")
        bad = [n for n in self.coefficients if abs(n) > self.n_max]
        if bad:
            raise ValueError(f"indices {bad} exceed n_max={self.n_max}")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")
        clean = {int(n): complex(c) for n, c in sorted(self.coefficients.items()) if c != 0}
        object.__setattr__(self, "coefficients", clean)

    def __getitem__(self, n: int) -> complex:
        return self.coefficients.get(n, 0j)

    @property
    def indices(self) -> np.ndarray:
        return np.array(sorted(self.coefficients), dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.coefficients[n] for n in sorted(self.coefficients)], dtype=complex)

    @property
    def l1_norm(self) -> float:
        return float(sum(abs(c) for c in self.coefficients.values()))

    @property
    def is_empty(self) -> bool:
        return not self.coefficients

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "n_max": self.n_max,
            "coeffs": [[n, c.real, c.imag] for n, c in self.coefficients.items()],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "CoefficientSpectrum":
        coeffs = {int(n): complex(re, im) for n, re, im in doc["coeffs"]}
        return cls(int(doc["d"]), coeffs, int(doc["n_max"]))


def compute_coefficients(profile: AngularProfile, n_max: int = 64, d: int = 1) -> CoefficientSpectrum:
    """Fourier coefficients of the sampled profile by the discrete transform.

    ``g_n = (1/K) sum_j g(theta_j) exp(-i n theta_j)``; this is the exact
    coefficient integral whenever ``g`` is band-limited below ``K/2``.
    """
    K = profile.n_samples
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if n_max >= K // 2:
        raise ResolutionError(
            f"n_max={n_max} is too close to the Nyquist index {K // 2} of {K} samples"
        )
    raw = np.fft.fft(profile.values) / K
    scale = np.max(np.abs(raw)) if raw.size else 0.0
    floor = COEFF_FLOOR * scale
    re = np.where(np.abs(raw.real) > floor, raw.real, 0.0)
    im = np.where(np.abs(raw.imag) > floor, raw.imag, 0.0)
    raw = re + 1j * im

    coeffs = {}
    for n in range(-n_max, n_max + 1):
        c = raw[n % K]
        if c != 0:
            coeffs[n] = complex(c)

    # crude surrogate: largest coefficient in the top quarter times the number of truncated modes
    top = [abs(coeffs.get(n, 0.0)) for n in range(-n_max, n_max + 1) if abs(n) >= 0.75 * n_max and n != 0]
    truncated = 2 * (K // 2 - n_max)
    tail = max(top, default=0.0) * truncated if n_max > 0 else 0.0
    return CoefficientSpectrum(d, coeffs, n_max, float(tail))


def reconstruct_profile(spectrum: CoefficientSpectrum, theta):
    """``sum_n g_n exp(i n theta)`` over the stored indices."""
    theta = np.asarray(theta, dtype=float)
    if spectrum.is_empty:
        return np.zeros_like(theta, dtype=complex)
    n = spectrum.indices
    lo = n.min()
    # Horner in exp(i theta) over the dense index range
    dense = np.zeros(n.max() - lo + 1, dtype=complex)
    dense[n - lo] = spectrum.values
    z = np.exp(1j * theta)
    acc = np.zeros_like(z)
    for c in dense[::-1]:
        acc = acc * z + c
    return acc * np.exp(1j * lo * theta)


def evaluate_mode(n: int, z, d: int):
    """``F_n(z) = |z|**(1+2/d-n) z**n``, continuous at ``z = 0`` with value 0."""
    z = np.asarray(z, dtype=complex)
    p = degree(d)
    r = np.abs(z)
    out = r**p * np.exp(1j * n * np.angle(z))
    return np.where(r > 0, out, 0.0)


@dataclass(frozen=True)
class NonlinearitySpec:
    """A critical homogeneous nonlinearity, by closed-form profile or by spectrum."""

    d: int
    profile: Callable[[np.ndarray], np.ndarray] | None = None
    spectrum: CoefficientSpectrum | None = None
    closed_form_id: str | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        check_dimension(self.d)
        if self.profile is None and self.spectrum is None:
            raise ValueError("a nonlinearity needs a profile or a coefficient spectrum")
        if self.spectrum is not None and self.spectrum.d != self.d:
            raise ValueError("spectrum dimension does not match d")

    @classmethod
    def from_id(cls, name: str, d: int = 1, n_max: int = 64, n_samples: int = 4096):
        prof = AngularProfile.from_id(name, d, n_samples)
        spec = compute_coefficients(prof, n_max, d)
        return cls(d, BUILTIN_PROFILES[name], spec, name)

    @classmethod
    def from_spectrum(cls, spectrum: CoefficientSpectrum):
        return cls(spectrum.d, None, spectrum, None)

    @classmethod
    def zero(cls, d: int = 1):
        return cls(d, None, CoefficientSpectrum(d, {}, 0), "zero")

    @property
    def degree(self) -> float:
        return degree(self.d)

    @property
    def coefficient_spectrum(self) -> CoefficientSpectrum:
        if self.spectrum is not None:
            return self.spectrum
        if "spectrum" not in self._cache:
            prof = AngularProfile.from_callable(self.profile)
            self._cache["spectrum"] = compute_coefficients(prof, 64, self.d)
        return self._cache["spectrum"]

    @property
    def mu(self) -> float:
        return mu_margin(self.coefficient_spectrum, warn=False)

    def g(self, theta):
        if self.profile is not None:
            return np.asarray(self.profile(np.asarray(theta, dtype=float)), dtype=complex)
        return reconstruct_profile(self.spectrum, theta)

    @property
    def is_zero(self) -> bool:
        return self.profile is None and self.spectrum.is_empty

    @property
    def gauge_coefficient(self) -> float | None:
        """Real ``g_1`` when ``F = g_1 |u|^{2/d} u`` exactly, else None."""
        if self.closed_form_id == "gauge":
            return 1.0
        if self.profile is None and set(self.spectrum.coefficients) == {1}:
            g1 = self.spectrum[1]
            if g1.imag == 0:
                return g1.real
        return None

    @property
    def is_polynomial(self) -> bool:
        """True when every mode ``F_n`` is a polynomial in ``u`` and its conjugate."""
        p = self.degree
        for n in self.coefficient_spectrum.coefficients:
            k = (p - abs(n)) / 2.0
            if k < 0 or k != int(k):
                return False
        return True


def evaluate(spec: NonlinearitySpec, z):
    """Pointwise ``F(z) = |z|**(1+2/d) g(arg z)``, with ``F(0) = 0``."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    out = r**spec.degree * spec.g(np.angle(z))
    return np.where(r > 0, out, 0.0)


def mu_margin(spectrum: CoefficientSpectrum, warn: bool = True) -> float:
    """Conservative ``Re g_0 - sum_{n != 0} |g_n| - tail_bound``."""
    g0 = spectrum[0]
    if warn and abs(g0.imag) > 1e-8 * max(abs(g0), 1e-300):
        warnings.warn(
            f"g_0 = {g0} has a significant imaginary part; the blowup argument assumes "
            "a spectrum normalised to g_0 = 1",
            stacklevel=2,
        )
    rest = sum(abs(c) for n, c in spectrum.coefficients.items() if n != 0)
    return float(g0.real - rest - spectrum.tail_bound)


DECAY_NOISE_FLOOR = 1e-9


def decay_fit(spectrum: CoefficientSpectrum) -> tuple[float, float]:
    """Slope of ``log|g_n|`` against ``log|n|`` over ``|n| >= 2``, with r^2.

    Entries below ``DECAY_NOISE_FLOOR`` times the largest coefficient are
    sampling round-off (e.g. the odd modes of an even profile) and are skipped.
    """
    vals = spectrum.coefficients
    floor = DECAY_NOISE_FLOOR * max((abs(c) for c in vals.values()), default=0.0)
    pts = [(abs(n), abs(c)) for n, c in vals.items() if abs(n) >= 2 and abs(c) > floor]
    if len(pts) < 8:
        raise UndersampledError(
            f"decay fit needs at least 8 nonzero coefficients with |n| >= 2, got {len(pts)}"
        )
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


class CoefficientDecomposer(BaseEstimator):
    """Fit the mode decomposition of a homogeneous nonlinearity.

    ``fit`` takes a built-in profile id, a callable ``g(theta)`` or an
    :class:`AngularProfile`.  ``transform`` maps complex values to the mode
    features ``F_n(z)`` and ``predict`` recombines them into ``F(z)``.

    Parameters
    ----------
    d : int
        Spatial dimension (fixes the degree ``1 + 2/d``).
    n_max : int
        Truncation order.
    n_samples : int
        Angular samples used by the quadrature (power of two).
    """

    def __init__(self, d: int = 1, n_max: int = 64, n_samples: int = 4096):
        self.d = d
        self.n_max = n_max
        self.n_samples = n_samples

    def fit(self, profile, y=None):
        check_dimension(self.d)
        if isinstance(profile, str):
            profile = AngularProfile.from_id(profile, self.d, self.n_samples)
        elif callable(profile):
            profile = AngularProfile.from_callable(profile, self.n_samples)
        self.profile_ = profile
        self.spectrum_ = compute_coefficients(profile, self.n_max, self.d)
        self.modes_ = self.spectrum_.indices
        self.coef_ = self.spectrum_.values
        self.mu_ = mu_margin(self.spectrum_)
        return self

    def transform(self, z):
        check_is_fitted(self, "spectrum_")
        z = np.asarray(z, dtype=complex).ravel()
        if self.modes_.size == 0:
            return np.zeros((z.size, 0), dtype=complex)
        return np.stack([evaluate_mode(n, z, self.d) for n in self.modes_], axis=1)

    def predict(self, z):
        return self.transform(z) @ self.coef_

    def decay_exponent(self) -> tuple[float, float]:
        check_is_fitted(self, "spectrum_")
        return decay_fit(self.spectrum_)


def spectrum_from_terms(d: int, terms: Mapping[int, complex], n_max: int | None = None) -> CoefficientSpectrum:
    """Build a spectrum from explicit ``{n: g_n}`` (e.g. a config's custom coefficients)."""
    if n_max is None:
        n_max = max((abs(n) for n in terms), default=0)
    return CoefficientSpectrum(d, dict(terms), int(n_max))


def critical_exponent_ratio(d: int) -> float:
    """``d / (d + 2)``, the Hölder exponent that recurs in the blowup bounds."""
    return d / (d + 2.0)


__all__ = [
    "AngularProfile",
    "BUILTIN_PROFILES",
    "CoefficientDecomposer",
    "CoefficientSpectrum",
    "NonlinearitySpec",
    "compute_coefficients",
    "critical_exponent_ratio",
    "decay_fit",
    "degree",
    "evaluate",
    "evaluate_mode",
    "mu_margin",
    "reconstruct_profile",
    "spectrum_from_terms",
]
