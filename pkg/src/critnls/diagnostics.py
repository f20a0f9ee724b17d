"""Scattering metrics, phase-law fitting, pairing functionals and verdicts.

Distances to profiles are computed in profile coordinates: ``profile_of(u, t)``
undoes ``M(t) D(t)`` by relabelling samples, so comparing against many phase
corrections costs one transform per snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import UndersampledError
from .evolution import Trajectory
from .nonlinearity import CoefficientSpectrum, evaluate_mode
from .profiles import PhaseCorrection, ScatteringDatum, eval_H, eval_profile
from .spectral import Field, free_propagate, inner, profile_of, strichartz_exponent

CLASSIFICATIONS = ("free-scattering", "modified-scattering", "non-scattering", "blowup", "inconclusive")
UNWRAP_LIMIT = 0.75 * np.pi
MIN_WINDOW_NODES = 16
HORIZON_NOTE = (
    "finite-horizon evidence, not proof: limits as t -> infinity are inferred from trends "
    "up to the last snapshot; tail norms use the window [t, T_end]"
)


def default_lambda_grid() -> np.ndarray:
    return np.linspace(-2.0, 2.0, 41)


@dataclass(frozen=True)
class ScatteringMetrics:
    times: np.ndarray
    l2_distance: np.ndarray
    tail_strichartz: np.ndarray
    lambda_used: float
    reference_norm: float
    lambda_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grid_distances: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    tail_label: str = "finite-horizon tail"


@dataclass(frozen=True)
class Verdict:
    classification: str
    lambda_hat: float | None
    evidence: dict

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")

    @property
    def label(self) -> str:
        if self.classification == "modified-scattering":
            return f"modified-scattering({self.lambda_hat:.4g})"
        return self.classification

    def to_json(self) -> dict:
        return {"classification": self.classification, "label": self.label,
                "lambda_hat": self.lambda_hat, "evidence": self.evidence}


def _profile_target(datum: ScatteringDatum, phase: PhaseCorrection, t: float, grid) -> np.ndarray:
    xi = grid.coords()
    uh = datum.fourier_rule(*xi)
    return uh * np.exp(1j * phase.phase(t, xi, np.abs(uh), datum.d))


def _distances(u: Field, t: float, datum: ScatteringDatum, phases: Sequence[PhaseCorrection], q: float):
    """``(||u - V||_2, ||u - V||_q)`` for each phase, both in physical-space units."""
    d = datum.d
    if datum.is_closed_form:
        w = profile_of(u, t)
        cell = w.grid.cell_volume
        # D(t) rescales L^q norms by (2t)^{-d(1/2 - 1/q)}
        lq_scale = (2.0 * t) ** (-d * (0.5 - 1.0 / q))
        out = []
        for ph in phases:
            diff = np.abs(w.values - _profile_target(datum, ph, t, w.grid))
            out.append((float(np.sqrt(cell * np.sum(diff**2))),
                        float(lq_scale * (cell * np.sum(diff**q)) ** (1.0 / q))))
        return out
    out = []
    for ph in phases:
        diff = u - eval_profile(t, datum, ph, u.grid, route="dilation")
        out.append((diff.l2(), diff.lp(q)))
    return out


def scattering_metrics(traj: Trajectory, datum: ScatteringDatum, phase: PhaseCorrection,
                       lambda_grid: Sequence[float] | None = None) -> ScatteringMetrics:
    """Distance and finite-window tail Strichartz series against the profile of ``phase``.

    When ``lambda_grid`` is given, distances to the constant-phase profiles at
    each grid value are also recorded (columns of ``grid_distances``).
    """
    if traj.blew_up:
        raise ValueError("scattering metrics need a trajectory that reached t_end")
    n = len(traj)
    if n < 4:
        raise UndersampledError(f"need at least 4 snapshots, got {n}")
    d = datum.d
    q = strichartz_exponent(d)
    lam_grid = np.zeros(0) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    phases = [phase] + [PhaseCorrection.constant(l) for l in lam_grid]

    l2 = np.empty(n)
    lq = np.empty(n)
    grid_d = np.empty((n, lam_grid.size))
    for i in range(n):
        res = _distances(traj.field(i), float(traj.times[i]), datum, phases, q)
        l2[i], lq[i] = res[0]
        grid_d[i] = [r[0] for r in res[1:]]

    # reverse cumulative trapezoid of ||u - V||_q^q on [t_i, T_end]
    t = traj.times
    f = lq**q
    seg = 0.5 * (f[1:] + f[:-1]) * np.diff(t)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    remaining = np.arange(n)[::-1] + 1
    tail_s = np.where(remaining >= 4, t ** (d / (2.0 * (d + 2))) * tail ** (1.0 / q), np.nan)
    return ScatteringMetrics(t.copy(), l2, tail_s, float(phase.lam), datum.l2, lam_grid, grid_d)


def default_probes(datum: ScatteringDatum) -> list[tuple[float, ...]]:
    d = datum.d
    if datum.kind == "gauss":
        radii = [0.0, 0.5 * datum.width, datum.width]
    elif datum.kind == "bump":
        radii = [0.0, 0.3 * datum.width, 0.5 * datum.width]
    else:
        fh = datum.fourier_field()
        a = np.abs(fh.values)
        idx = np.unravel_index(np.argmax(a), a.shape)
        peak = tuple(fh.grid.axis[i] for i in idx)
        step = 2 * fh.grid.h
        return [peak, (peak[0] + step,) + peak[1:], (peak[0] - step,) + peak[1:]]
    return [(r,) + (0.0,) * (d - 1) for r in radii]


def _sample_at(w: Field, points: np.ndarray) -> np.ndarray:
    axes = (w.grid.axis,) * w.grid.d
    interp = RegularGridInterpolator(axes, w.values, method="linear")
    return interp(points)


def phase_series(traj: Trajectory, datum: ScatteringDatum, probes, t_min: float | None = None,
                 t_max: float | None = None):
    """Unwrapped phase of ``profile_of(u, t)`` at each probe, with the selected times."""
    times = traj.times
    sel = [i for i, t in enumerate(times)
           if (t_min is None or t >= t_min * (1 - 1e-12)) and (t_max is None or t <= t_max * (1 + 1e-12))]
    pts = np.atleast_2d(np.asarray(probes, dtype=float))
    if pts.shape[1] != datum.d:
        pts = pts.reshape(-1, datum.d)
    raw = np.empty((len(sel), pts.shape[0]))
    for k, i in enumerate(sel):
        raw[k] = np.angle(_sample_at(profile_of(traj.field(i), float(times[i])), pts))
    jumps = np.angle(np.exp(1j * np.diff(raw, axis=0)))
    if jumps.size and np.max(np.abs(jumps)) > UNWRAP_LIMIT:
        raise UndersampledError(
            f"phase increment {np.max(np.abs(jumps)):.3f} rad between snapshots exceeds "
            f"{UNWRAP_LIMIT:.3f}; record snapshots more densely"
        )
    return times[sel], np.unwrap(raw, axis=0), pts


def lambda_fit(traj: Trajectory, datum: ScatteringDatum, probe_freqs=None, t_min: float | None = None,
               t_max: float | None = None, decades: float = 1.5) -> tuple[float, float]:
    """Fit the logarithmic phase law and return ``(lambda_hat, r_squared)``.

    The phase at each probe is regressed on ``[1, log t, 1/t]``; the ``1/t``
    column absorbs the free-flow correction ``U(-1/4t)``.  The log-slopes are
    combined as ``lambda = -sum(b_k a_k) / sum(a_k^2)`` with ``a_k = |uhat(xi_k)|^{2/d}``.
    By default the last ``decades`` decades of snapshots are used.
    """
    times = traj.times
    if times.size < 4:
        raise UndersampledError("lambda fit needs at least 4 snapshots")
    if t_min is None:
        t_min = times[-1] / 10.0**decades
    if np.log10(times[-1] / times[0]) < decades - 1e-9:
        raise UndersampledError(f"trajectory spans fewer than {decades} decades of time")
    probes = default_probes(datum) if probe_freqs is None else probe_freqs
    t, ph, pts = phase_series(traj, datum, probes, t_min, t_max)
    if t.size < 4:
        raise UndersampledError("fewer than 4 snapshots inside the fit window")
    if datum.is_closed_form:
        uh = datum.fourier_rule(*pts.T)
    else:
        uh = _sample_at(datum.fourier_field(), pts)
    a = np.abs(uh) ** (2.0 / datum.d)
    if np.any(a <= 1e-8 * np.max(a)) or np.max(a) == 0:
        raise ValueError("probe frequencies must avoid zeros of the transform")

    X = np.column_stack([np.ones_like(t), np.log(t), 1.0 / t])
    coef, *_ = np.linalg.lstsq(X, ph, rcond=None)
    slopes = coef[1]
    lam = float(-np.sum(slopes * a) / np.sum(a * a))

    # refit intercept and 1/t terms with the slopes tied to lambda_hat
    detrended = ph + lam * a[None, :] * np.log(t)[:, None]
    Xr = X[:, [0, 2]]
    c2, *_ = np.linalg.lstsq(Xr, detrended, rcond=None)
    resid = detrended - Xr @ c2
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ph - ph.mean(axis=0)) ** 2))
    r2 = float("nan") if ss_tot <= 1e-24 * max(1.0, np.sum(ph**2)) else 1.0 - ss_res / ss_tot
    return lam, r2


def _window(traj: Trajectory, t: float, factor: float = 2.0) -> list[int]:
    idx = traj.window(t, factor * t)
    if len(idx) < MIN_WINDOW_NODES:
        raise UndersampledError(
            f"window [{t:g}, {factor * t:g}] has {len(idx)} snapshots; need {MIN_WINDOW_NODES}"
        )
    tol = 1e-9 * factor * t
    if abs(traj.times[idx[0]] - t) > tol or abs(traj.times[idx[-1]] - factor * t) > tol:
        raise UndersampledError(f"snapshots do not cover both ends of [{t:g}, {factor * t:g}]")
    return idx


def _window_integral(traj: Trajectory, t: float, integrand) -> complex:
    idx = _window(traj, t)
    s = traj.times[idx]
    vals = np.array([integrand(traj.field(i), float(traj.times[i])) for i in idx])
    return complex(np.trapezoid(vals, s))


def pairing_key1(traj: Trajectory, datum: ScatteringDatum, phase: PhaseCorrection | None, t: float) -> complex:
    """``(-i int_t^{2t} U(-s) F_0(u(s)) ds, H(t))``."""
    d = datum.d

    def integrand(u, s):
        h = free_propagate(eval_H(t, datum, u.grid), s)
        return inner(u.with_values(evaluate_mode(0, u.values, d)), h)

    return -1j * _window_integral(traj, t, integrand)


def pairing_key2(traj: Trajectory, datum: ScatteringDatum, phase: PhaseCorrection | None, t: float,
                 sigma: float = 1.0) -> complex:
    """``(U(-sigma t) u(sigma t), H(t))``."""
    if sigma not in (1, 2, 1.0, 2.0):
        raise ValueError("sigma must be 1 or 2")
    target = sigma * t
    hits = traj.window(target, target)
    if not hits:
        raise UndersampledError(f"no snapshot at t = {target:g}")
    u = traj.field(hits[0])
    return inner(free_propagate(u, -target), eval_H(t, datum, u.grid))


def pairing_key3(traj: Trajectory, datum: ScatteringDatum, phase: PhaseCorrection | None, t: float,
                 spectrum: CoefficientSpectrum) -> complex:
    """``sum_{n != 0} g_n (int_t^{2t} U(-s) F_n(u(s)) ds, H(t))``."""
    terms = {n: c for n, c in spectrum.coefficients.items() if n != 0}
    if not terms:
        return 0j
    d = datum.d

    def integrand(u, s):
        h = free_propagate(eval_H(t, datum, u.grid), s)
        total = np.zeros(u.grid.shape, dtype=complex)
        for n, c in terms.items():
            total += c * evaluate_mode(n, u.values, d)
        return inner(u.with_values(total), h)

    return _window_integral(traj, t, integrand)


def barab_pairing(traj: Trajectory, datum: ScatteringDatum, t: float) -> complex:
    """``(int_t^{2t} U(-s) F_1(u(s)) ds, u_plus)``."""
    d = datum.d

    def integrand(u, s):
        up = free_propagate(datum.u_plus(u.grid), s)
        return inner(u.with_values(evaluate_mode(1, u.values, d)), up)

    return _window_integral(traj, t, integrand)


def barab_limit(datum: ScatteringDatum) -> float:
    """``(log 2)/2 * ||uhat_plus||_{2(d+1)/d}^{2(d+1)/d}``."""
    p = 2.0 * (datum.d + 1) / datum.d
    return 0.5 * np.log(2.0) * datum.fourier_lp(p) ** p


def _loglog_slope(t: np.ndarray, y: np.ndarray) -> float:
    good = (y > 0) & np.isfinite(y)
    if good.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[good]), np.log(y[good]), 1)[0])


def classify(metrics: ScatteringMetrics | None, fit: tuple[float, float] | None, traj: Trajectory,
             theta_s: float = 0.05, theta_n: float = 0.2, free_tol: float = 0.02,
             floor: float = 1e-6) -> Verdict:
    """Finite-horizon verdict from distance trends.

    ``metrics`` must be computed against the constant profile at ``fit[0]`` and
    should carry a lambda grid for the non-scattering test.  A final distance
    below ``floor * ||u_plus||`` counts as converged whatever its trend, since
    the lambda fit itself is only resolved to about that level.
    """
    term = traj.termination
    if term.get("kind") == "blowup":
        return Verdict("blowup", None, {"termination": term, "note": HORIZON_NOTE})
    if term.get("kind") == "domain-overflow" or metrics is None:
        return Verdict("inconclusive", None, {"termination": term, "note": HORIZON_NOTE})

    lam_hat = None if fit is None else float(fit[0])
    r2 = None if fit is None else fit[1]
    t = metrics.times
    ref = metrics.reference_norm
    last = t >= t[-1] / 10.0
    evidence = {
        "termination": term,
        "note": HORIZON_NOTE,
        "tail_label": metrics.tail_label,
        "horizon": float(t[-1]),
        "lambda_r_squared": r2,
        "theta_s": theta_s,
        "theta_n": theta_n,
    }

    dist = metrics.l2_distance
    slope = _loglog_slope(t[last], dist[last])
    final_rel = float(dist[-1] / ref) if ref > 0 else 0.0
    evidence.update({"distance_slope_last_decade": slope, "final_distance_rel": final_rel})
    decreasing = (np.isfinite(slope) and slope < 0) or dist[-1] <= floor * max(ref, 1e-300)

    if metrics.grid_distances.size:
        means = metrics.grid_distances[last].mean(axis=0)
        j = int(np.argmin(means))
        inf_rel = float(means[j] / ref) if ref > 0 else 0.0
        inf_slope = _loglog_slope(t[last], metrics.grid_distances[last, j])
        evidence.update({"inf_mean_distance_rel": inf_rel, "argmin_lambda": float(metrics.lambda_grid[j]),
                         "inf_distance_slope": inf_slope})
    else:
        inf_rel, inf_slope = None, None

    if ref == 0:
        return Verdict("free-scattering", 0.0, evidence)
    if lam_hat is not None and decreasing and final_rel < theta_s:
        if abs(lam_hat) < free_tol:
            return Verdict("free-scattering", lam_hat, evidence)
        return Verdict("modified-scattering", lam_hat, evidence)
    if inf_rel is not None and inf_rel > theta_n and not (inf_slope < 0):
        return Verdict("non-scattering", lam_hat, evidence)
    return Verdict("inconclusive", lam_hat, evidence)


def diagnose(traj: Trajectory, datum: ScatteringDatum, lambda_grid=None, probe_freqs=None,
             **thresholds) -> tuple[Verdict, ScatteringMetrics | None, tuple[float, float] | None]:
    """Fit lambda, compute metrics at the fitted value and classify.

    A trajectory too short or too coarse for the phase fit gets an
    ``inconclusive`` verdict whose evidence names the reason.
    """
    if traj.termination.get("kind") != "t_end":
        return classify(None, None, traj, **thresholds), None, None
    traj = traj.positive_times()
    try:
        fit = lambda_fit(traj, datum, probe_freqs)
    except UndersampledError as exc:
        evidence = {"termination": traj.termination, "note": HORIZON_NOTE, "undersampled": str(exc)}
        return Verdict("inconclusive", None, evidence), None, None
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    grid = np.unique(np.append(grid, fit[0]))
    metrics = scattering_metrics(traj, datum, PhaseCorrection.constant(fit[0]), grid)
    return classify(metrics, fit, traj, **thresholds), metrics, fit


class LambdaEstimator(BaseEstimator):
    """Estimate the phase-correction constant from a trajectory.

    ``fit(traj, datum)`` sets ``lambda_`` and ``r_squared_``.
    """

    def __init__(self, probe_freqs=None, t_min=None, t_max=None, decades=1.5):
        self.probe_freqs = probe_freqs
        self.t_min = t_min
        self.t_max = t_max
        self.decades = decades

    def fit(self, traj, datum):
        self.lambda_, self.r_squared_ = lambda_fit(traj, datum, self.probe_freqs, self.t_min,
                                                   self.t_max, self.decades)
        return self

    def predict_phase(self, datum, t, xi):
        """Predicted phase drift ``-lambda |uhat(xi)|^{2/d} log t``."""
        check_is_fitted(self, "lambda_")
        a = np.abs(datum.fourier_rule(*np.atleast_2d(xi).T)) ** (2.0 / datum.d)
        return -self.lambda_ * a * np.log(t)


class ScatteringClassifier(BaseEstimator):
    """Classify the long-time behaviour of a trajectory against a scattering datum."""

    def __init__(self, theta_s=0.05, theta_n=0.2, free_tol=0.02, lambda_grid=None, probe_freqs=None):
        self.theta_s = theta_s
        self.theta_n = theta_n
        self.free_tol = free_tol
        self.lambda_grid = lambda_grid
        self.probe_freqs = probe_freqs

    def fit(self, traj, datum):
        self.verdict_, self.metrics_, self.fit_ = diagnose(
            traj, datum, self.lambda_grid, self.probe_freqs,
            theta_s=self.theta_s, theta_n=self.theta_n, free_tol=self.free_tol,
        )
        self.classification_ = self.verdict_.classification
        return self

    def predict(self, traj=None):
        check_is_fitted(self, "verdict_")
        return self.classification_
