"""Batch command-line front end.

Usage: ``critnls --config run.json [--out DIR] [--threads N] [--resolution-check]``.
The command kind (coeffs, simulate, diagnose, blowup-sweep) comes from the config.
Exit codes: 0 success, 2 config error, 3 blowup-terminated run, 4 domain overflow.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .blowup import (
    BlowupDatum,
    SweepTemplate,
    admissible_radii,
    calibrate_test_functions,
    lemma51_check,
    sweep,
)
from .diagnostics import (
    barab_pairing,
    diagnose,
    pairing_key1,
    pairing_key2,
    pairing_key3,
)
from .errors import ConfigError, CritNLSError, UndersampledError
from .evolution import BlowupCaps, DtPolicy, SimulationConfig, free_trajectory, manufactured_trajectory, run
from .io import (
    content_hash,
    load_trajectory,
    read_field,
    save_trajectory,
    write_csv,
    write_json,
    write_scalars,
)
from .nonlinearity import AngularProfile, compute_coefficients, decay_fit, mu_margin
from .profiles import PhaseCorrection
from .spectral import free_propagate

log = logging.getLogger("critnls")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_OVERFLOW = 0, 2, 3, 4
DIAG_COLUMNS = ("t", "l2_distance", "tail_strichartz", "key1_re", "key1_im", "key2", "key3", "barab")


def _dt_policy(sim: dict) -> DtPolicy:
    dt = sim["dt"]
    if dt["mode"] == "fixed":
        return DtPolicy.fixed(dt["dt"])
    return DtPolicy.adaptive(dt["cfl"], dt["dt_max"])


def _initial(cfg: dict, grid, base_dir: Path):
    ini = cfg["initial"]
    kind = ini["type"]
    if kind == "zero":
        return grid.zeros()
    if kind == "free-datum":
        datum = cfgmod.build_datum(cfg).scaled(ini["eps"])
        return free_propagate(datum.u_plus(grid), cfg["simulation"]["t0"])
    if kind == "blowup":
        try:
            return BlowupDatum(grid.d, ini["k"], ini["R0"]).field(grid, ini["eps"])
        except ValueError as exc:
            raise ConfigError(f"initial: {exc}") from None
    if kind == "gauss":
        a, w, ph = ini["amplitude"], ini["width"], ini["phase"]
        return grid.sample(lambda *x: a * np.exp(1j * ph) * np.exp(-sum(c**2 for c in x) / (2 * w**2)))
    path = Path(ini["path"])
    path = path if path.is_absolute() else base_dir / path
    if not path.exists():
        raise ConfigError(f"initial field {path} not found")
    f = read_field(path)
    if f.grid != grid:
        raise ConfigError("initial field grid differs from the configured grid")
    return f


def _sim_config(cfg: dict, base_dir: Path, refine: bool = False) -> SimulationConfig:
    sim = cfg["simulation"]
    grid = cfgmod.build_grid(cfg)
    policy = _dt_policy(sim)
    if refine:
        grid = grid.refined()
        policy = DtPolicy.fixed(policy.dt / 2) if policy.mode == "fixed" else DtPolicy.adaptive(policy.cfl / 2, policy.dt_max / 2)
    initial = _initial(cfg, grid, base_dir) if not refine or cfg["initial"]["type"] != "field" else None
    if initial is None:
        raise ConfigError("--resolution-check cannot refine a gridded initial field")
    caps = sim["caps"]
    try:
        return SimulationConfig(
            grid, cfgmod.build_nonlinearity(cfg), initial, t_end=sim["t_end"], t0=sim["t0"],
            dt_policy=policy, snapshot_times=cfgmod.expand_times(sim["snapshots"]),
            blowup_caps=BlowupCaps(caps["mass_growth"], caps["linf"], caps["nan"]),
            boundary_cap=sim["boundary_cap"], boundary_growth=sim["boundary_growth"],
            boundary_action=sim["boundary_action"], dealias=sim["dealias"],
        )
    except ValueError as exc:
        raise ConfigError(f"simulation: {exc}") from None


def cmd_coeffs(cfg: dict, out: Path, args) -> tuple[int, dict, list]:
    nl = cfg["nonlinearity"]
    spec = cfgmod.build_nonlinearity(cfg)
    spectrum = spec.coefficient_spectrum
    if nl["profile"] not in ("custom", "zero"):
        prof = AngularProfile.from_id(nl["profile"], nl["d"], nl["n_samples"])
        spectrum = compute_coefficients(prof, nl["n_max"], nl["d"])
    report = {"mu": mu_margin(spectrum, warn=False), "l1_norm": spectrum.l1_norm, "tail_bound": spectrum.tail_bound}
    try:
        exponent, r2 = decay_fit(spectrum)
        report.update(decay_exponent=exponent, decay_r_squared=r2)
    except UndersampledError as exc:
        report.update(decay_exponent=None, decay_r_squared=None, decay_note=str(exc))
    write_json(out / "spectrum.json", spectrum.to_json())
    write_json(out / "report.json", report)
    return EXIT_OK, {"kind": "completed"}, ["spectrum.json", "report.json"]


def _termination_code(term: dict) -> int:
    return {"blowup": EXIT_BLOWUP, "domain-overflow": EXIT_OVERFLOW}.get(term["kind"], EXIT_OK)


def cmd_simulate(cfg: dict, out: Path, args) -> tuple[int, dict, list]:
    base_dir = Path(args.config).resolve().parent
    config = _sim_config(cfg, base_dir)
    traj = run(config)
    write_scalars(out / "scalars.csv", traj.scalars)
    files = ["scalars.csv"] + [f"trajectory/{n}" for n in save_trajectory(out / "trajectory", traj)]
    term = dict(traj.termination)
    term["metadata"] = traj.metadata
    if args.resolution_check:
        twin = run(_sim_config(cfg, base_dir, refine=True))
        write_scalars(out / "scalars_twin.csv", twin.scalars)
        files.append("scalars_twin.csv")
        a, b = traj.scalars, twin.scalars
        check = {"twin_termination": twin.termination}
        if traj.blew_up and twin.blew_up:
            check["rel_diff_t_detected"] = abs(twin.termination["time"] - term["time"]) / term["time"]
        else:
            check["rel_diff_final_mass"] = abs(b["mass"][-1] - a["mass"][-1]) / max(a["mass"][-1], 1e-300)
        term["resolution_check"] = check
    return _termination_code(traj.termination), term, files


PAIRING_NODES = 33


def _generated(src: dict, datum, times):
    if src["source"] == "manufactured":
        return manufactured_trajectory(datum, PhaseCorrection.constant(src["lam"]), times)
    return free_trajectory(datum, times)


def _diag_trajectories(cfg: dict, datum, base_dir: Path):
    """Main trajectory plus the one the pairings integrate over.

    Generated sources get a dedicated pairing trajectory with
    ``PAIRING_NODES`` uniform nodes on each window ``[t, 2t]``.
    """
    dg = cfg["diagnostics"]
    src = dg["trajectory"]
    if src["source"] == "path":
        path = Path(src["path"])
        path = path if path.is_absolute() else base_dir / path
        try:
            traj = load_trajectory(path)
        except FileNotFoundError as exc:
            raise ConfigError(f"missing trajectory: {exc}") from None
        return traj, traj
    pair_t = np.asarray(dg["pairing_times"], dtype=float)
    times = np.union1d(cfgmod.expand_times(src["times"]), pair_t)
    if times.size < 4:
        raise ConfigError("diagnostics.trajectory.times needs at least 4 entries")
    if not pair_t.size:
        traj = _generated(src, datum, times)
        return traj, traj
    dense = np.unique(np.concatenate([np.linspace(t, 2 * t, PAIRING_NODES) for t in pair_t]))
    return _generated(src, datum, times), _generated(src, datum, dense)


def _safe(fn, *a):
    try:
        return fn(*a)
    except UndersampledError:
        return complex("nan")


def cmd_diagnose(cfg: dict, out: Path, args) -> tuple[int, dict, list]:
    dg = cfg["diagnostics"]
    datum = cfgmod.build_datum(cfg)
    traj, pair_traj = _diag_trajectories(cfg, datum, Path(args.config).resolve().parent)
    verdict, metrics, fit = diagnose(
        traj, datum, cfgmod.expand_times(dg["lambda_grid"]), dg["probes"],
        theta_s=dg["theta_s"], theta_n=dg["theta_n"], free_tol=dg["free_tol"],
    )
    spectrum = cfgmod.build_nonlinearity(cfg).coefficient_spectrum
    pair_t = [float(t) for t in dg["pairing_times"]]
    rows = []
    if metrics is not None:
        phase = PhaseCorrection.constant(fit[0])
        for i, t in enumerate(metrics.times):
            k1 = k2 = k3 = bb = complex("nan")
            if any(abs(t - p) <= 1e-9 * max(1.0, p) for p in pair_t):
                k1 = _safe(pairing_key1, pair_traj, datum, phase, t)
                k2 = _safe(pairing_key2, pair_traj, datum, phase, t, 1.0)
                k3 = _safe(pairing_key3, pair_traj, datum, phase, t, spectrum)
                bb = _safe(barab_pairing, pair_traj, datum, t)
            rows.append((t, metrics.l2_distance[i], metrics.tail_strichartz[i], k1.real, k1.imag,
                         abs(k2), abs(k3), bb.real))
    write_csv(out / "diagnostics.csv", DIAG_COLUMNS, rows)
    doc = verdict.to_json()
    if fit is not None:
        doc["lambda_fit"] = {"lambda_hat": fit[0], "r_squared": fit[1]}
    write_json(out / "verdict.json", doc)
    return EXIT_OK, {"kind": "completed", "classification": verdict.classification}, ["diagnostics.csv", "verdict.json"]


def cmd_blowup_sweep(cfg: dict, out: Path, args) -> tuple[int, dict, list]:
    sw = cfg["sweep"]
    spec = cfgmod.build_nonlinearity(cfg)
    mu = mu_margin(spec.coefficient_spectrum, warn=False)
    if mu <= 0:
        raise ConfigError(f"blowup sweep needs a positive mu margin, got {mu:.4g}")
    d = cfg["nonlinearity"]["d"]
    try:
        datum = BlowupDatum(d, sw["k"], sw["R0"])
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from None
    sim = cfg["simulation"]
    caps = sim["caps"]
    synthetic = sw["synthetic"]
    template = SweepTemplate(
        grid=None if synthetic else cfgmod.build_grid(cfg), t_end=sim["t_end"], dt_policy=_dt_policy(sim),
        blowup_caps=BlowupCaps(caps["mass_growth"], caps["linf"], caps["nan"]),
        boundary_cap=sim["boundary_cap"], boundary_action=sim["boundary_action"], synthetic=synthetic,
    )
    try:
        result = sweep(cfgmod.expand_times(sw["eps"]), datum, spec, template, threads=args.threads,
                       resolution_check=args.resolution_check)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from None
    cols = ["eps", "t_detected", "trigger", "resolution", "excluded"]
    if args.resolution_check and not synthetic:
        cols += ["twin_t_detected", "twin_rel_diff"]
    write_csv(out / "sweep.csv", cols, [[r.get(c, "") for c in cols] for r in result.rows])
    fit = dict(result.fit)
    fit["monotone_decreasing"] = result.monotone
    write_json(out / "fit.json", fit)
    files = ["sweep.csv", "fit.json"]
    if sw["check_lemma51"] and not synthetic:
        tf0 = calibrate_test_functions(d, theta=sw["theta"])
        grid = template.grid
        rows = []
        for eps, traj in sorted(result.trajectories.items()):
            f = datum.field(grid)
            for R in admissible_radii(traj):
                lhs, ok = lemma51_check(traj, spec, tf0.with_R(R), eps, f)
                rows.append((eps, R, lhs, ok))
        write_csv(out / "lemma51.csv", ["eps", "R", "lhs", "bound_ok"], rows)
        files.append("lemma51.csv")
    return EXIT_OK, {"kind": "completed"}, files


COMMANDS = {
    "coeffs": cmd_coeffs,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "blowup-sweep": cmd_blowup_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critnls", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--resolution-check", action="store_true",
                   help="also run a twin with halved dt and doubled resolution and report agreement")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out or cfg.get("output_dir") or "critnls-out")
        out.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        code, termination, files = COMMANDS[cfg["kind"]](cfg, out, args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except CritNLSError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    manifest = {
        "config": cfg,
        "config_hash": content_hash(cfg),
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "termination": termination,
        "files": sorted(files),
    }
    write_json(out / "manifest.json", manifest)
    log.info("%s finished (%s), exit code %d", cfg["kind"], termination.get("kind"), code)
    return code


if __name__ == "__main__":
    sys.exit(main())
