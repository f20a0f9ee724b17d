"""Strang split-step integration of ``i u_t + Laplacian u = F(u)`` with blowup detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import StiffnessError
from .nonlinearity import NonlinearitySpec, evaluate
from .profiles import PhaseCorrection, ScatteringDatum, eval_profile, profile_grid
from .spectral import Field, Grid, boundary_fraction, dealias_mask, free_propagate

# per-substep relative change budget for the pointwise RK4 integrator
SUBSTEP_BUDGET = 0.1
MAX_SUBCYCLES = 10_000


@dataclass(frozen=True)
class BlowupCaps:
    mass_growth: float = 1e3
    linf: float = 1e6
    nan: bool = True


@dataclass(frozen=True)
class DtPolicy:
    """Fixed step ``dt``, or adaptive ``dt = cfl / (1 + |u|_inf^{2/d})`` capped by ``dt_max``."""

    mode: str = "adaptive"
    dt: float = 0.01
    cfl: float = 0.1
    dt_max: float = 0.1

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError("dt mode must be 'fixed' or 'adaptive'")
        if self.dt <= 0 or self.cfl <= 0 or self.dt_max <= 0:
            raise ValueError("dt, cfl and dt_max must be positive")

    @classmethod
    def fixed(cls, dt: float):
        return cls("fixed", dt=float(dt))

    @classmethod
    def adaptive(cls, cfl: float = 0.1, dt_max: float = 0.1):
        return cls("adaptive", cfl=float(cfl), dt_max=float(dt_max))

    def step(self, linf: float, d: int) -> float:
        if self.mode == "fixed":
            return self.dt
        return min(self.dt_max, self.cfl / (1.0 + linf ** (2.0 / d)))


@dataclass
class SimulationConfig:
    grid: Grid
    nonlinearity: NonlinearitySpec
    initial: Field
    t_end: float
    t0: float = 0.0
    dt_policy: DtPolicy = field(default_factory=DtPolicy)
    snapshot_times: Sequence[float] = ()
    blowup_caps: BlowupCaps = field(default_factory=BlowupCaps)
    boundary_cap: float = 1e-8
    # effective cap is max(boundary_cap, boundary_growth * initial fraction)
    boundary_growth: float = 2.0
    boundary_action: str = "terminate"
    dealias: bool | None = None
    store_steps: bool = False
    mass_identity_tol: float = 1e-6

    def __post_init__(self):
        if self.initial.grid != self.grid:
            raise ValueError("initial field must live on the configured grid")
        if self.nonlinearity.d != self.grid.d:
            raise ValueError("nonlinearity dimension does not match the grid")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if self.boundary_action not in ("terminate", "flag"):
            raise ValueError("boundary_action must be 'terminate' or 'flag'")
        snaps = np.asarray(self.snapshot_times, dtype=float)
        if snaps.size and (np.any(np.diff(snaps) <= 0) or snaps[0] < self.t0 or snaps[-1] > self.t_end):
            raise ValueError("snapshot_times must be strictly increasing inside [t0, t_end]")

    @property
    def dealias_enabled(self) -> bool:
        return self.nonlinearity.is_polynomial if self.dealias is None else bool(self.dealias)


@dataclass(frozen=True)
class BlowupReport:
    t_detected: float
    trigger: str
    growth_curve: tuple[np.ndarray, np.ndarray]


class Trajectory:
    """Time-stamped fields plus per-step scalar series.

    ``termination`` is a dict with ``kind`` in ``{"t_end", "blowup", "domain-overflow"}``
    and, for early stops, ``time`` and ``trigger``.
    """

    def __init__(self, times, fields, scalars=None, termination=None, d=None, metadata=None,
                 step_times=None, step_fields=None):
        times = np.asarray(times, dtype=float)
        if times.size != len(fields):
            raise ValueError("times and fields differ in length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        self.times = times
        self._fields = list(fields)
        self.scalars = scalars or {}
        self.termination = termination or {"kind": "t_end"}
        self.d = d if d is not None else (fields[0].grid.d if fields else 1)
        self.metadata = metadata or {}
        self.step_times = None if step_times is None else np.asarray(step_times, dtype=float)
        self.step_fields = step_fields

    def __len__(self) -> int:
        return self.times.size

    def field(self, i: int) -> Field:
        return self._fields[i]

    @property
    def fields(self) -> list[Field]:
        return [self.field(i) for i in range(len(self))]

    def window(self, a: float, b: float, rtol: float = 1e-9) -> list[int]:
        tol = rtol * max(1.0, abs(b))
        return [i for i, t in enumerate(self.times) if a - tol <= t <= b + tol]

    @property
    def blew_up(self) -> bool:
        return self.termination.get("kind") == "blowup"

    @property
    def blowup_report(self) -> BlowupReport | None:
        if not self.blew_up:
            return None
        t = np.asarray(self.scalars.get("t", []))
        m = np.sqrt(np.asarray(self.scalars.get("mass", [])))
        return BlowupReport(self.termination["time"], self.termination["trigger"], (t, m))

    def positive_times(self) -> "Trajectory":
        """The snapshots with ``t > 0``; profile diagnostics are undefined at ``t = 0``."""
        keep = [i for i, t in enumerate(self.times) if t > 0]
        if len(keep) == len(self):
            return self
        return Trajectory(self.times[keep], [self.field(i) for i in keep], dict(self.scalars),
                          dict(self.termination), self.d, dict(self.metadata))

    def scaled(self, c: complex) -> "Trajectory":
        return Trajectory(self.times, [f * c for f in self.fields], dict(self.scalars),
                          dict(self.termination), self.d, dict(self.metadata))


class LazyTrajectory(Trajectory):
    """Trajectory whose fields are produced on demand by ``make(t)``."""

    def __init__(self, times, make: Callable[[float], Field], d: int, metadata=None, cache_size: int = 64):
        times = np.asarray(times, dtype=float)
        super().__init__(times, [None] * times.size, {}, {"kind": "t_end"}, d, metadata)
        self._make = lru_cache(maxsize=cache_size)(make)

    def field(self, i: int) -> Field:
        return self._make(float(self.times[i]))


def manufactured_trajectory(datum: ScatteringDatum, phase: PhaseCorrection, times,
                            grid_for: Callable[[float], Grid] | None = None) -> LazyTrajectory:
    """Exact profile samples ``V(t)`` at the given times, each on a grid sized for ``t``."""
    grid_for = grid_for or (lambda t: profile_grid(datum, t))
    return LazyTrajectory(times, lambda t: eval_profile(t, datum, phase, grid_for(t)), datum.d,
                          {"source": "profile", "lam": phase.lam})


def free_trajectory(datum: ScatteringDatum, times, grid_for: Callable[[float], Grid] | None = None) -> LazyTrajectory:
    """Free evolution ``U(t) u_plus`` at the given times."""
    grid_for = grid_for or (lambda t: profile_grid(datum, t))
    return LazyTrajectory(times, lambda t: free_propagate(datum.u_plus(grid_for(t)), t), datum.d,
                          {"source": "free"})


def _rhs(spec: NonlinearitySpec, w: np.ndarray) -> np.ndarray:
    return -1j * evaluate(spec, w)


def nonlinear_substep(u: Field, dt: float, spec: NonlinearitySpec, max_cycles: int = MAX_SUBCYCLES) -> Field:
    """Advance every grid value through ``w' = -i F(w)`` over ``dt``."""
    if spec.is_zero or dt == 0:
        return u
    w = u.values
    d = spec.d
    g1 = spec.gauge_coefficient
    if g1 is not None:
        return u.with_values(w * np.exp(-1j * g1 * np.abs(w) ** (2.0 / d) * dt))
    rate = spec.coefficient_spectrum.l1_norm + spec.coefficient_spectrum.tail_bound
    if spec.profile is not None:
        rate = max(rate, float(np.max(np.abs(spec.g(np.linspace(0, 2 * np.pi, 257))))))
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    if not np.isfinite(peak):
        return u.with_values(w * np.nan)
    n_sub = max(1, math.ceil(abs(dt) * rate * peak ** (2.0 / d) / SUBSTEP_BUDGET))
    if n_sub > max_cycles:
        raise StiffnessError(f"nonlinear substep needs {n_sub} cycles (cap {max_cycles})")
    h = dt / n_sub
    for _ in range(n_sub):
        k1 = _rhs(spec, w)
        k2 = _rhs(spec, w + 0.5 * h * k1)
        k3 = _rhs(spec, w + 0.5 * h * k2)
        k4 = _rhs(spec, w + h * k3)
        w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u.with_values(w)


def step_strang(u: Field, dt: float, spec: NonlinearitySpec, mask: np.ndarray | None = None) -> Field:
    """Half free step, pointwise nonlinear step, half free step."""
    if spec.is_zero:
        return free_propagate(u, dt)
    v = free_propagate(u, 0.5 * dt)
    v = nonlinear_substep(v, dt, spec)
    if mask is not None:
        v = v.with_values(np.fft.ifftn(mask * np.fft.fftn(v.values)))
    return free_propagate(v, 0.5 * dt)


def mass_rate(u: Field, spec: NonlinearitySpec) -> float:
    """``d/dt ||u||^2 = 2 int Im(conj(u) F(u))`` for the exact flow."""
    if spec.is_zero or spec.gauge_coefficient is not None:
        # a real gauge coefficient makes conj(u) F(u) real
        return 0.0
    return float(2.0 * u.grid.cell_volume * np.sum(np.imag(np.conj(u.values) * evaluate(spec, u.values))))


def run(config: SimulationConfig) -> Trajectory:
    """Integrate from ``t0`` to ``t_end``, stopping early on blowup or boundary overflow."""
    spec = config.nonlinearity
    d = config.grid.d
    caps = config.blowup_caps
    mask = dealias_mask(config.grid) if config.dealias_enabled else None

    u = config.initial
    t = float(config.t0)
    mass0 = u.mass()
    bf0 = boundary_fraction(u)
    bcap = max(config.boundary_cap, config.boundary_growth * bf0)

    snaps = list(np.asarray(config.snapshot_times, dtype=float))
    snap_t, snap_f = [], []
    if snaps and abs(snaps[0] - t) <= 1e-12 * max(1.0, abs(t)):
        snap_t.append(t)
        snap_f.append(u)
        snaps.pop(0)

    ts, masses, linfs, bfs, defects = [t], [mass0], [u.linf()], [bf0], [0.0]
    step_t, step_f = ([t], [u]) if config.store_steps else (None, None)
    termination = {"kind": "t_end", "time": float(config.t_end)}
    boundary_flags = 0
    rate_before = mass_rate(u, spec)

    while t < config.t_end:
        stop = min(config.t_end, snaps[0]) if snaps else config.t_end
        dt = config.dt_policy.step(linfs[-1], d)
        hit = t + dt >= stop - 1e-12 * max(1.0, abs(stop))
        if hit:
            dt = stop - t
        try:
            u_new = step_strang(u, dt, spec, mask)
        except StiffnessError:
            termination = {"kind": "blowup", "time": t, "trigger": "stiffness"}
            break
        t_new = stop if hit else t + dt

        mass = u_new.mass()
        linf = u_new.linf()
        trigger = None
        if not (np.isfinite(mass) and np.isfinite(linf)):
            trigger = "nan" if caps.nan else None
            if trigger is None:
                raise FloatingPointError("non-finite field with NaN detection disabled")
        elif mass > caps.mass_growth * mass0 and mass0 > 0:
            trigger = "mass"
        elif linf > caps.linf:
            trigger = "linf"
        if trigger is not None:
            termination = {"kind": "blowup", "time": t_new, "trigger": trigger}
            break

        rate_after = mass_rate(u_new, spec)
        defect = abs(mass - masses[-1] - 0.5 * dt * (rate_before + rate_after)) / mass if mass > 0 else 0.0
        bf = boundary_fraction(u_new)

        u, t, rate_before = u_new, t_new, rate_after
        ts.append(t)
        masses.append(mass)
        linfs.append(linf)
        bfs.append(bf)
        defects.append(defect)
        if config.store_steps:
            step_t.append(t)
            step_f.append(u)
        if hit and snaps and stop == snaps[0]:
            snap_t.append(t)
            snap_f.append(u)
            snaps.pop(0)

        if bf > bcap:
            boundary_flags += 1
            if config.boundary_action == "terminate":
                termination = {"kind": "domain-overflow", "time": t, "trigger": "boundary"}
                break

    scalars = {
        "t": np.array(ts),
        "mass": np.array(masses),
        "linf": np.array(linfs),
        "boundary_fraction": np.array(bfs),
        "mass_identity_defect": np.array(defects),
    }
    metadata = {
        "dealias": config.dealias_enabled,
        "boundary_cap_effective": bcap,
        "boundary_flags": boundary_flags,
        "mass_identity_violations": int(np.sum(scalars["mass_identity_defect"] > config.mass_identity_tol)),
        "steps": len(ts) - 1,
    }
    return Trajectory(snap_t, snap_f, scalars, termination, d, metadata, step_t, step_f)
