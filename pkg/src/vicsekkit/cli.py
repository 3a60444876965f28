"""Command-line orchestration: experiments in, tables and manifests out.

Every run writes a manifest.json echoing the fully resolved
configuration plus the artifact version, and plain comma-separated
tables with exact header rows (the column contract consumed by the
plotting frontend).  All randomness derives from the master seed, so a
rerun with the same configuration is byte-identical.
"""

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import constants_report
from .config import parse_config
from .errors import ConfigError, SingularFluxError, VicsekError
from .kinetic import (
    flux_floor_check,
    free_energy_and_dissipation,
    lp_growth_check,
    solve_nonlinear,
)
from .meanfield import chaos_sweep, coupled_run
from .particles import run_particles

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_CHECK_FAILED = 4
EXIT_ERROR = 1


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_payload(report):
    return {
        "M0": report.M0, "J0": report.J0, "C1M": report.C1M,
        "C2M": report.C2M, "K_inf": report.K_inf, "sigma0": report.sigma0,
        "psi_lip": report.psi_lip, "Cp": report.Cp, "p": report.p,
        "T0": report.T0, "T1": report.T1,
        "lambda_T1": report.lambda_of(report.T1),
        "c_star_T1": report.c_star(report.T1),
        "note": report.note,
    }


def write_manifest(outdir, command, cfg, constants=None, extra=None):
    payload = {
        "artifact_version": __version__,
        "command": command,
        "config": cfg.raw,
    }
    if constants is not None:
        payload["constants"] = _report_payload(constants)
    if extra:
        payload.update(extra)
    write_json(outdir / "manifest.json", payload)


def _map_replicas(fn, n_replicas, threads):
    """Replica map with a deterministic merge order."""
    if threads <= 1 or n_replicas <= 1:
        return [fn(r) for r in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_replicas)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    report = constants_report(cfg.kinetic_initial(), coeffs)
    write_manifest(outdir, "constants", cfg, constants=report)
    write_json(outdir / "constants.json", _report_payload(report))
    for key, val in _report_payload(report).items():
        if key != "note":
            print(f"{key} = {val}")
    return EXIT_OK


def cmd_particles(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    sim = cfg.sim_config()
    spec = cfg.initial_spec()
    n = cfg["particles"]["N"]
    replicas = cfg["particles"]["replicas"]
    records = _map_replicas(
        lambda r: run_particles(sim, coeffs, reg, spec, n, replica=r),
        replicas, threads,
    )
    d = cfg["d"]
    header = (
        ["replica", "t", "i"]
        + [f"x_{k + 1}" for k in range(d)]
        + [f"v_{k + 1}" for k in range(d)]
        + ["flux_norm"]
    )

    def traj_rows():
        for rec in records:
            for s, t in enumerate(rec.times):
                for i in range(n):
                    yield (
                        [rec.replica, float(t), i]
                        + [float(v) for v in rec.X[s, i]]
                        + [float(v) for v in rec.V[s, i]]
                        + [float(rec.flux_norm[s, i])]
                    )

    write_table(outdir / "particles_trajectory.csv", header, traj_rows())
    write_table(
        outdir / "particles_summary.csv",
        ["replica", "t", "mean_v_norm", "min_flux_norm", "free_energy",
         "dissipation"],
        (
            [rec.replica, float(t), float(np.linalg.norm(rec.mean_velocity[s])),
             float(rec.min_flux[s]), math.nan, math.nan]
            for rec in records
            for s, t in enumerate(rec.times)
        ),
    )
    write_manifest(outdir, "particles", cfg)
    print(f"wrote {replicas} replica(s) of N={n} to {outdir}")
    return EXIT_OK


def _solve_from_config(cfg, coeffs, reg, report=None):
    kin = cfg["kinetic"]
    return solve_nonlinear(
        cfg.kinetic_initial(), coeffs,
        T=kin["T"], dt=kin["dt"], mode=kin["mode"], reg=reg,
        theta_method=kin["theta_method"],
        snapshot_stride=kin["snapshot_stride"], report=report,
    )


def cmd_kinetic(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    report = constants_report(cfg.kinetic_initial(), coeffs)
    traj = _solve_from_config(cfg, coeffs, reg, report)
    energy = free_energy_and_dissipation(traj, coeffs, reg=reg)

    def snap_rows():
        for s in traj.states:
            f2d = np.atleast_2d(s.f)
            for ix in range(f2d.shape[0]):
                for it in range(f2d.shape[1]):
                    yield [float(s.t), ix, it, float(f2d[ix, it])]

    write_table(
        outdir / "kinetic_snapshots.csv",
        ["t", "x_index", "theta_index", "f"],
        snap_rows(),
    )
    m0 = traj.states[0].mass()
    mins = np.interp(
        traj.times, traj.step_times, traj.min_flux_raw
    )
    residual_padded = np.concatenate([[math.nan], energy.residual])
    write_table(
        outdir / "kinetic_diagnostics.csv",
        ["t", "mass", "l2", "linf", "min_flux", "F", "D", "residual"],
        (
            [float(s.t), s.mass(), s.l2_norm(), s.linf_norm(), float(mins[i]),
             float(energy.F[i]), float(energy.D[i]), float(residual_padded[i])]
            for i, s in enumerate(traj.states)
        ),
    )
    floor = flux_floor_check(traj, report, coeffs)
    growth2 = lp_growth_check(traj, 2, report)
    growth_inf = lp_growth_check(traj, math.inf, report)
    mass_drift = max(abs(s.mass() - m0) for s in traj.states)
    min_f = min(float(np.min(s.f)) for s in traj.states)
    checks = {
        "flux_floor_ok": floor.ok,
        "flux_floor_margin": floor.margin,
        "flux_floor_first_violation": floor.first_violation,
        "lp2_growth_ok": growth2.ok,
        "lpinf_growth_ok": growth_inf.ok,
        "mass_ok": mass_drift <= 1e-10,
        "mass_drift": mass_drift,
        "positivity_ok": min_f >= -1e-12,
        "min_f": min_f,
    }
    write_json(outdir / "checks.json", checks)
    write_manifest(outdir, "kinetic", cfg, constants=report)
    failed = [k for k, v in checks.items() if k.endswith("_ok") and not v]
    if failed:
        print(f"invariant checks failed: {failed}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"kinetic solve ok: {len(traj.states)} snapshots, "
          f"mass drift {mass_drift:.2e}")
    return EXIT_OK


def cmd_energy(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    traj = _solve_from_config(cfg, coeffs, reg)
    energy = free_energy_and_dissipation(traj, coeffs, reg=reg)
    residual_padded = np.concatenate([[math.nan], energy.residual])
    write_table(
        outdir / "energy.csv",
        ["t", "F", "D", "entropy", "correction", "residual"],
        (
            [float(energy.t[i]), float(energy.F[i]), float(energy.D[i]),
             float(energy.entropy[i]), float(energy.correction_integral[i]),
             float(residual_padded[i])]
            for i in range(len(energy.t))
        ),
    )
    monotone = bool(np.all(np.diff(energy.F) <= 1e-10 * (1.0 + np.abs(energy.F[:-1]))))
    resid_ok = bool(
        np.all(energy.residual <= 5e-3 * (1.0 + 0.5 * (energy.D[1:] + energy.D[:-1])))
    )
    checks = {
        "energy_monotone": monotone,
        "energy_residual_ok": resid_ok,
        "max_relative_residual": energy.max_relative_residual(),
    }
    write_json(outdir / "checks.json", checks)
    write_manifest(outdir, "energy", cfg)
    if not (monotone and resid_ok):
        print("energy checks failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"energy identity ok: max relative residual "
          f"{energy.max_relative_residual():.2e}")
    return EXIT_OK


def _kinetic_path_solve(cfg, coeffs, reg, T_needed, report=None):
    kin = cfg["kinetic"]
    return solve_nonlinear(
        cfg.kinetic_initial(), coeffs,
        T=T_needed, dt=kin["dt"], mode=kin["mode"], reg=reg,
        theta_method=kin["theta_method"],
        snapshot_stride=kin["snapshot_stride"], report=report,
    )


def cmd_coupling(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    p = cfg["particles"]
    traj = _kinetic_path_solve(cfg, coeffs, reg, p["T"] + 2 * p["dt"])
    entry = coupled_run(
        p["N"], p["T"], p["dt"], coeffs, reg, cfg.initial_spec(), traj,
        seed=cfg["seed"], scheme=p["scheme"], domain=p["domain"],
        snapshot_stride=p["snapshot_stride"],
    )
    write_table(
        outdir / "coupling.csv",
        ["t", "msd"],
        ([float(t), float(m)] for t, m in zip(entry.times, entry.msd)),
    )
    write_manifest(outdir, "coupling", cfg, extra={
        "coupling": {
            "N": entry.n, "sup_t_msd": entry.sup_t_msd,
            "min_flux": entry.min_flux, "w2_final": entry.w2_final,
        },
    })
    print(f"coupled run N={entry.n}: sup_t msd {entry.sup_t_msd:.4g}, "
          f"min flux {entry.min_flux:.4g}")
    return EXIT_OK


def cmd_sweep(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    sw = cfg["sweep"]
    traj = _kinetic_path_solve(cfg, coeffs, reg, sw["T"] + 2 * sw["dt"])
    records = chaos_sweep(
        sw["Ns"], sw["replicas"], sw["T"], sw["dt"], coeffs, reg,
        cfg.initial_spec(), traj, seed=cfg["seed"],
        domain=cfg["particles"]["domain"],
        snapshot_stride=sw["snapshot_stride"], compute_w2=True,
    )
    eps0 = reg.eps0
    write_table(
        outdir / "sweep_results.csv",
        ["N", "replica", "sup_t_msd", "w2_final", "min_flux", "flux_ok_flag"],
        (
            [rec.n, e.replica, e.sup_t_msd, e.w2_final, e.min_flux,
             int(e.min_flux > eps0)]
            for rec in records
            for e in rec.entries
        ),
    )
    report = constants_report(cfg.kinetic_initial(), coeffs)
    c_star = report.c_star(sw["T"])
    write_table(
        outdir / "sweep_aggregate.csv",
        ["N", "eps_hat_median", "eps_hat_iqr", "prob_empirical", "prob_floor"],
        (
            [rec.n, rec.median_msd(), rec.iqr_msd(), rec.min_flux_prob(eps0),
             1.0 - rec.median_msd() / (c_star - eps0)
             if 0 < eps0 < c_star else math.nan]
            for rec in records
        ),
    )
    medians = [rec.median_msd() for rec in records]
    monotone = all(b <= a * (1.0 + 1e-12) for a, b in zip(medians, medians[1:]))
    halved = medians[-1] <= 0.5 * medians[0]
    checks = {
        "sweep_monotone": monotone,
        "sweep_halved": halved,
        "medians": medians,
    }
    write_json(outdir / "checks.json", checks)
    write_manifest(outdir, "sweep", cfg, constants=report)
    if not monotone:
        print("coupling deviation is not monotone in N", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("sweep medians:", ", ".join(f"{m:.4g}" for m in medians))
    return EXIT_OK


def cmd_fluxprob(cfg, outdir, threads):
    coeffs = cfg.coeffs()
    reg = cfg.reg()
    fp = cfg["fluxprob"]
    report = constants_report(cfg.kinetic_initial(), coeffs)
    T = fp["T"] if fp["T"] is not None else 0.5 * report.T1
    dt = fp["dt"] if fp["dt"] is not None else T / 25.0
    c_star = report.c_star(T)
    eps0 = fp["eps0_factor"] * c_star
    # the horizon can sit far below the configured kinetic step; solve
    # the driving kinetic path at the coupling resolution instead
    kin = cfg["kinetic"]
    traj = solve_nonlinear(
        cfg.kinetic_initial(), coeffs, T=T + 2 * dt, dt=dt,
        mode=kin["mode"], reg=reg, theta_method=kin["theta_method"],
        snapshot_stride=1, report=report,
    )
    rows = []
    by_n = {}
    for s in range(fp["seed_sets"]):
        seed = cfg["seed"] + 1000 * s
        for n in fp["Ns"]:
            entries = _map_replicas(
                lambda r, n=n, seed=seed: coupled_run(
                    n, T, dt, coeffs, reg, cfg.initial_spec(), traj,
                    seed=seed, replica=r, domain=cfg["particles"]["domain"],
                    compute_w2=False,
                ),
                fp["replicas"], threads,
            )
            minima = np.array([e.min_flux for e in entries])
            prob = float(np.mean(minima > eps0))
            eps_hat = float(np.median([e.sup_t_msd for e in entries]))
            floor = 1.0 - eps_hat / (c_star - eps0)
            rows.append([n, s, prob, floor, eps0, c_star, T])
            by_n.setdefault(n, []).append(prob)
    write_table(
        outdir / "fluxprob.csv",
        ["N", "seed_set", "prob_empirical", "prob_floor", "eps0", "c_star", "T"],
        rows,
    )
    med = {n: float(np.median(v)) for n, v in by_n.items()}
    ns_sorted = sorted(med)
    nondecreasing = all(
        med[b] >= med[a] - 1e-12 for a, b in zip(ns_sorted, ns_sorted[1:])
    )
    checks = {"fluxprob_nondecreasing": nondecreasing, "prob_medians": med}
    write_json(outdir / "checks.json", checks)
    write_manifest(outdir, "fluxprob", cfg, constants=report)
    print("flux probability medians:", med)
    return EXIT_OK if nondecreasing else EXIT_CHECK_FAILED


COMMANDS = {
    "constants": cmd_constants,
    "particles": cmd_particles,
    "kinetic": cmd_kinetic,
    "energy": cmd_energy,
    "coupling": cmd_coupling,
    "sweep": cmd_sweep,
    "fluxprob": cmd_fluxprob,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vicsekkit",
        description="Vicsek collective dynamics: simulation and verification",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument(
        "--threads", type=int, default=1,
        help="replica workers (results are independent of this)",
    )
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.raw["seed"] = args.seed
        if args.out is not None:
            cfg.raw["out"] = args.out
        outdir = Path(cfg.raw["out"])
        outdir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, outdir, args.threads)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularFluxError as exc:
        print(f"singular flux: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except VicsekError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
