"""Test-function machinery for finite-time blowup and blowup-time sweeps.

The test function is ``psi_R(t, x) = eta(t / R^2) phi(x / R)`` with
``phi(x) = exp(1 - sqrt(1 + |a x|^2))`` normalised to unit integral and
``eta(t) = (1 - t)^theta`` on ``[0, 1]``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dimension, check_positive
from .errors import UndersampledError
from .evolution import BlowupCaps, DtPolicy, SimulationConfig, Trajectory, run
from .nonlinearity import NonlinearitySpec, evaluate, evaluate_mode, mu_margin
from .spectral import Field, Grid


def _phi_radial(r, a):
    return np.exp(1.0 - np.sqrt(1.0 + (a * r) ** 2))


def phi_integral(a: float, d: int) -> float:
    """``int_{R^d} exp(1 - sqrt(1 + |a x|^2)) dx`` by radial quadrature."""
    surface = 2.0 if d == 1 else 2.0 * np.pi
    val, _ = integrate.quad(lambda r: surface * r ** (d - 1) * _phi_radial(r, a), 0.0, np.inf,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


@dataclass(frozen=True)
class TestFunctions:
    d: int
    a: float
    theta: float
    M: float
    N: float
    R: float = 1.0

    __test__ = False  # not a pytest class

    def with_R(self, R: float) -> "TestFunctions":
        return replace(self, R=check_positive(R, "R"))

    def phi(self, *x):
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in x)
        return np.exp(1.0 - np.sqrt(1.0 + self.a**2 * r2))

    def laplacian_phi(self, *x):
        """Closed form ``phi (|grad rho|^2 - Laplacian rho)`` with ``rho = sqrt(1 + a^2 |x|^2)``."""
        a2 = self.a**2
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in x)
        rho = np.sqrt(1.0 + a2 * r2)
        grad2 = a2 * a2 * r2 / rho**2
        lap = self.d * a2 / rho - a2 * a2 * r2 / rho**3
        return np.exp(1.0 - rho) * (grad2 - lap)

    def eta(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0) & (s <= 1), np.clip(1.0 - s, 0.0, 1.0) ** self.theta, 0.0)

    def eta_prime(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0) & (s <= 1), -self.theta * np.clip(1.0 - s, 0.0, 1.0) ** (self.theta - 1), 0.0)

    def phi_R(self, grid: Grid) -> np.ndarray:
        return self.phi(*(c / self.R for c in grid.coords()))

    def laplacian_phi_R(self, grid: Grid) -> np.ndarray:
        return self.laplacian_phi(*(c / self.R for c in grid.coords())) / self.R**2

    def eta_R(self, t):
        return self.eta(np.asarray(t, dtype=float) / self.R**2)

    def eta_R_prime(self, t):
        return self.eta_prime(np.asarray(t, dtype=float) / self.R**2) / self.R**2

    @property
    def majorant_constant(self) -> float:
        """``C_{d,M,N} = M + N`` from ``|d_t psi| + |Laplacian psi| <= (M+N) R^-2 eta_R^{d/(d+2)} phi_R``."""
        return self.M + self.N


def calibrate_test_functions(d: int, grid: Grid | None = None, theta: float = 2.0, R: float = 1.0) -> TestFunctions:
    """Normalise ``phi``, bound ``|Laplacian phi| / phi`` on ``grid`` and set ``N = theta``."""
    d = check_dimension(d)
    if theta < 1.0 + d / 2.0:
        raise ValueError(f"theta={theta} is below the admissible threshold 1 + d/2 = {1 + d / 2}")
    # a -> int phi_a is decreasing; bracket and bisect
    a = optimize.brentq(lambda a: phi_integral(a, d) - 1.0, 1e-3, 1e3, xtol=1e-15, rtol=1e-15)
    grid = grid or Grid(d, 8.0, 1024 if d == 1 else 512)
    probe = TestFunctions(d, a, theta, 0.0, theta, R)
    coords = grid.coords()
    phi = probe.phi(*coords)
    k2 = grid.wavenumbers_squared()
    lap = np.real(np.fft.ifftn(-k2 * np.fft.fftn(phi)))
    # deep in the tail the ratio is dominated by round-off in the spectral derivative
    keep = phi > 1e-8
    M = float(np.max(np.abs(lap[keep]) / phi[keep])) * (1.0 + 1e-9)
    return TestFunctions(d, float(a), float(theta), M, float(theta), float(R))


@dataclass(frozen=True)
class BlowupDatum:
    """``f(x) = -i c (R0^2 + |x|^2)^{-k/2}`` with ``c = 2^{k/2}``, so ``-Im f >= |x|^{-k}`` for ``|x| > R0``."""

    d: int
    k: float
    R0: float = 1.0
    c: float | None = None

    def __post_init__(self):
        check_dimension(self.d)
        check_positive(self.R0, "R0")
        if not 0 < self.k <= self.d:
            raise ValueError("k must lie in (0, d]")
        if self.c is None:
            object.__setattr__(self, "c", 2.0 ** (self.k / 2.0))

    def rule(self, *x):
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in x)
        return -1j * self.c * (self.R0**2 + r2) ** (-self.k / 2.0)

    def field(self, grid: Grid, eps: float = 1.0) -> Field:
        f = grid.sample(self.rule) * eps
        self.check(grid)
        return f

    def check(self, grid: Grid) -> bool:
        vals = -np.imag(grid.sample(self.rule).values)
        r = np.sqrt(grid.radius_squared())
        outer = r > self.R0
        ok = np.all(vals >= 0) and np.all(vals[outer] >= r[outer] ** (-self.k) * (1 - 1e-12))
        if not ok:
            raise ValueError("datum violates -Im f >= |x|^-k outside R0 on this grid")
        return True

    @property
    def regime(self) -> str:
        return "exp" if self.k == self.d else "power"

    @property
    def target_exponent(self) -> float | None:
        return None if self.k == self.d else -2.0 / (self.d - self.k)


def _steps(traj: Trajectory):
    if traj.step_times is not None:
        return traj.step_times, traj.step_fields
    return traj.times, traj.fields


def _covering(traj: Trajectory, horizon: float):
    times, fields = _steps(traj)
    if len(times) == 0 or times[0] > 1e-12:
        raise UndersampledError("trajectory must start at t = 0")
    cover = np.nonzero(times >= horizon * (1 - 1e-12))[0]
    if cover.size == 0:
        raise UndersampledError(f"trajectory ends at {times[-1]:g} before R^2 = {horizon:g}")
    last = int(cover[0])
    return times[: last + 1], fields[: last + 1]


def weak_residual(traj: Trajectory, spec: NonlinearitySpec | None, tf: TestFunctions, u0: Field,
                  include_nonlinear: bool = True) -> complex:
    """``int int u (-i d_t psi + Laplacian psi) - i int u0 psi(0) - int int F(u) psi`` over ``[0, R^2]``.

    With ``include_nonlinear=False`` the ``F`` term is dropped (linear consistency).
    """
    grid = u0.grid
    times, fields = _covering(traj, tf.R**2)
    phi = tf.phi_R(grid)
    lap = tf.laplacian_phi_R(grid)
    vol = grid.cell_volume
    vals = np.empty(len(times), dtype=complex)
    for j, (t, u) in enumerate(zip(times, fields)):
        if u.grid != grid:
            raise ValueError("trajectory and initial data live on different grids")
        e, de = float(tf.eta_R(t)), float(tf.eta_R_prime(t))
        lin = u.values * (-1j * de * phi + e * lap)
        if include_nonlinear and spec is not None and not spec.is_zero:
            lin = lin - evaluate(spec, u.values) * (e * phi)
        vals[j] = vol * np.sum(lin)
    total = np.trapezoid(vals, times)
    return complex(total - 1j * vol * np.sum(u0.values * phi))


def functionals(traj: Trajectory, spec: NonlinearitySpec, tf: TestFunctions, f: Field | None = None):
    """``(J, {n: I_n}, I_0)`` with ``J = int f phi_R`` and ``I_n = int int F_n(u) psi_R``."""
    times, fields = _covering(traj, tf.R**2)
    grid = fields[0].grid
    f = fields[0] if f is None else f
    phi = tf.phi_R(grid)
    vol = grid.cell_volume
    J = complex(vol * np.sum(f.values * phi))
    modes = sorted(set(spec.coefficient_spectrum.coefficients) | {0})
    eta = tf.eta_R(times)
    I = {}
    for n in modes:
        vals = np.array([vol * np.sum(evaluate_mode(n, u.values, spec.d) * phi) for u in fields]) * eta
        I[n] = complex(np.trapezoid(vals, times))
    return J, I, float(I[0].real)


def majorant_peak(C1: float, mu: float, d: int) -> tuple[float, float]:
    """Maximiser and maximum of ``s -> C1 s^{d/(d+2)} - mu s`` on ``s >= 0``, found numerically."""
    if mu <= 0:
        raise ValueError("the majorant is unbounded unless mu > 0")
    r = d / (d + 2.0)
    if C1 <= 0:
        return 0.0, 0.0
    upper = (C1 / mu) ** (1.0 / (1.0 - r))  # majorant is negative beyond this point
    s = optimize.brentq(lambda s: C1 * r * s ** (r - 1.0) - mu, upper * 1e-12, upper, xtol=1e-300, rtol=1e-15)
    return float(s), float(C1 * s**r - mu * s)


def admissible_radii(traj: Trajectory, start: float = 2.0) -> list[float]:
    """``R in {2, 4, 8, ...}`` with ``R^2`` strictly inside the trajectory horizon."""
    horizon = float(traj.termination.get("time", traj.times[-1] if len(traj) else 0.0))
    out, R = [], start
    while R * R < horizon:
        out.append(R)
        R *= 2.0
    return out


def lemma51_check(traj: Trajectory, spec: NonlinearitySpec, tf: TestFunctions, eps: float, f: Field):
    """``lhs = -eps int Im f phi_R`` against the peak ``C*`` of the majorant; returns ``(lhs, bound_ok)``."""
    mu = mu_margin(spec.coefficient_spectrum, warn=False)
    if mu <= 0:
        raise ValueError(f"mu margin {mu:.3g} must be positive")
    horizon = float(traj.termination.get("time", traj.times[-1] if len(traj) else 0.0))
    if len(traj) and tf.R**2 >= horizon:
        raise ValueError(f"R^2 = {tf.R ** 2:g} is not inside the trajectory horizon {horizon:g}")
    phi = tf.phi_R(f.grid)
    lhs = float(-eps * f.grid.cell_volume * np.sum(np.imag(f.values) * phi))
    _, cstar = majorant_peak(tf.majorant_constant, mu, tf.d)
    return lhs, bool(lhs <= cstar)


def lower_bound_integral(k: float, R0: float, R: float, tf: TestFunctions) -> float:
    """``int_{|x| >= R0/R} |x|^{-k} phi dx`` by radial quadrature."""
    d = tf.d
    surface = 2.0 if d == 1 else 2.0 * np.pi
    val, _ = integrate.quad(lambda r: surface * r ** (d - 1 - k) * _phi_radial(r, tf.a), R0 / R, np.inf,
                            epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


# --------------------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepTemplate:
    """Per-run simulation settings shared by every epsilon in a sweep."""

    grid: Grid | None = None
    t_end: float = 1e3
    dt_policy: DtPolicy = field(default_factory=DtPolicy)
    blowup_caps: BlowupCaps = field(default_factory=BlowupCaps)
    boundary_cap: float = 1e-8
    boundary_action: str = "terminate"
    synthetic: dict | None = None

    def refined(self) -> "SweepTemplate":
        pol = self.dt_policy
        pol = DtPolicy.fixed(pol.dt / 2) if pol.mode == "fixed" else DtPolicy.adaptive(pol.cfl / 2, pol.dt_max / 2)
        return replace(self, grid=self.grid.refined(), dt_policy=pol)


@dataclass(frozen=True)
class SweepResult:
    rows: list
    fit: dict
    monotone: bool
    # base-resolution trajectories keyed by epsilon (scalars only, no snapshots)
    trajectories: dict = field(default_factory=dict, compare=False, repr=False)


def _synthetic_time(law: dict, eps: float) -> float:
    kind = law.get("law", "power")
    if kind == "power":
        return float(eps ** law["exponent"])
    if kind == "exp":
        return float(math.exp(law["rate"] / eps))
    raise ValueError(f"unknown synthetic law {kind!r}")


def _single_run(args):
    eps, datum, spec, template, tag = args
    if template.synthetic is not None:
        row = {"eps": eps, "t_detected": _synthetic_time(template.synthetic, eps), "trigger": "synthetic",
               "resolution": tag, "excluded": False}
        return row, None
    grid = template.grid
    cfg = SimulationConfig(grid, spec, datum.field(grid, eps), t_end=template.t_end, t0=0.0,
                           dt_policy=template.dt_policy, blowup_caps=template.blowup_caps,
                           boundary_cap=template.boundary_cap, boundary_action=template.boundary_action)
    traj = run(cfg)
    term = traj.termination
    row = {"eps": eps, "resolution": tag, "excluded": False}
    if term["kind"] == "blowup":
        row.update(t_detected=float(term["time"]), trigger=term["trigger"])
    elif term["kind"] == "domain-overflow":
        row.update(t_detected=float("nan"), trigger="domain-overflow", excluded=True)
    else:
        row.update(t_detected=float("inf"), trigger="none")
    return row, traj


def fit_blowup_law(eps, times, regime: str) -> dict:
    """Least-squares fit of ``log t`` against ``log eps`` (power) or ``1/eps`` (exp)."""
    eps = np.asarray(eps, dtype=float)
    t = np.asarray(times, dtype=float)
    ok = np.isfinite(t) & (t > 0)
    if ok.sum() < 2:
        return {"regime": regime, "slope_or_rate": float("nan"), "intercept": float("nan"), "r_squared": float("nan")}
    x = np.log(eps[ok]) if regime == "power" else 1.0 / eps[ok]
    y = np.log(t[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else float("nan")
    out = {"regime": regime, "slope_or_rate": float(slope), "intercept": float(intercept), "r_squared": float(r2)}
    if regime == "exp":
        # smallest C with every detected time below exp(C / eps)
        out["envelope_rate"] = float(np.max(eps[ok] * y))
        out["below_envelope"] = bool(np.all(y <= out["envelope_rate"] / eps[ok] + 1e-12))
    return out


def sweep(eps_list: Sequence[float], datum: BlowupDatum, spec: NonlinearitySpec, template: SweepTemplate,
          threads: int = 1, resolution_check: bool = False) -> SweepResult:
    """Run one simulation per epsilon with ``u0 = eps f`` and fit the blowup-time law."""
    mu = mu_margin(spec.coefficient_spectrum, warn=False)
    if mu <= 0:
        raise ValueError(f"mu margin {mu:.3g} must be positive for a blowup sweep")
    eps_sorted = sorted(float(e) for e in eps_list)
    if len(eps_sorted) < 6 or eps_sorted[-1] / eps_sorted[0] < 10 * (1 - 1e-9):
        raise ValueError("a sweep needs at least 6 epsilons spanning one decade")
    if template.synthetic is None and template.grid is None:
        raise ValueError("a simulated sweep needs a grid")

    jobs = [(e, datum, spec, template, "base") for e in eps_sorted]
    if resolution_check and template.synthetic is None:
        fine = template.refined()
        jobs += [(e, datum, spec, fine, "twin") for e in eps_sorted]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_single_run, jobs))
    else:
        outcomes = [_single_run(j) for j in jobs]
    results = [row for row, _ in outcomes]
    trajs = {row["eps"]: tr for row, tr in outcomes if row["resolution"] == "base" and tr is not None}

    base = sorted((r for r in results if r["resolution"] == "base"), key=lambda r: r["eps"])
    twins = {r["eps"]: r for r in results if r["resolution"] == "twin"}
    rows = []
    for r in base:
        row = dict(r)
        if r["eps"] in twins:
            tw = twins[r["eps"]]["t_detected"]
            row["twin_t_detected"] = tw
            row["twin_rel_diff"] = abs(tw - r["t_detected"]) / r["t_detected"] if np.isfinite(r["t_detected"]) else float("nan")
        rows.append(row)

    kept = [r for r in rows if not r["excluded"]]
    fit = fit_blowup_law([r["eps"] for r in kept], [r["t_detected"] for r in kept], datum.regime)
    fit["target"] = datum.target_exponent
    fit["caveat"] = ("detected times are cap-trigger times: an upper-bound proxy for numerical divergence, "
                     "not the maximal existence time")
    t = np.array([r["t_detected"] for r in kept])
    monotone = bool(np.all(np.diff(t) < 0)) if t.size > 1 else True
    return SweepResult(rows, fit, monotone, trajs)


class BlowupRateRegressor(RegressorMixin, BaseEstimator):
    """Regress detected blowup times on epsilon.

    ``regime='power'`` fits ``log t = b log eps + c``; ``regime='exp'`` fits
    ``log t = b / eps + c``.
    """

    def __init__(self, regime: str = "power"):
        self.regime = regime

    def fit(self, eps, t):
        if self.regime not in ("power", "exp"):
            raise ValueError("regime must be 'power' or 'exp'")
        eps = np.asarray(eps, dtype=float).ravel()
        t = np.asarray(t, dtype=float).ravel()
        if eps.shape != t.shape:
            raise ValueError("eps and t differ in length")
        res = fit_blowup_law(eps, t, self.regime)
        self.slope_ = res["slope_or_rate"]
        self.intercept_ = res["intercept"]
        self.r_squared_ = res["r_squared"]
        return self

    def predict(self, eps):
        check_is_fitted(self, "slope_")
        eps = np.asarray(eps, dtype=float).ravel()
        x = np.log(eps) if self.regime == "power" else 1.0 / eps
        return np.exp(self.slope_ * x + self.intercept_)

    def score(self, eps, t, sample_weight=None):
        """r^2 in log-time space."""
        pred = np.log(self.predict(eps))
        y = np.log(np.asarray(t, dtype=float).ravel())
        return float(1.0 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2))
