"""
Batch command line.

Exit codes: 0 ok, 1 configuration error, 2 overflow (or divergent Picard
iteration), 3 certificate check failed, 4 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import certificate, oracle
from .config import ConfigError, RunConfig
from .diagnostics import norm_report
from .io import atomic_write_text, csv_text, dump_json, encode_snapshot, atomic_write_bytes
from .models import chandrasekhar_terms
from .solver import COMPLETED, SolverConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_OVERFLOW, EXIT_CERTIFICATE, EXIT_ORACLE = 0, 1, 2, 3, 4
ORACLE_TOL = 1e-6

log = logging.getLogger("nlpde")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_simulate(args) -> int:
    try:
        cfg = RunConfig.load(args.config).validate()
        grid = cfg.grid.build()
        spec = cfg.model.build(grid.d)
        u0 = cfg.initial.build(grid, spec.m, cfg.seed)
        scfg = cfg.solver_config()
        besov = cfg.diagnostics.besov_config()
    except (ConfigError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(cfg.output_dir)

    def diag(f):
        return norm_report(f, cfg.diagnostics.thetas, cfg.diagnostics.pm_indices, besov)

    t0 = time.perf_counter()
    traj = run(spec, u0, scfg, diagnostics=diag)
    wall = time.perf_counter() - t0

    reports = traj.diagnostics
    header = reports[0].header()
    atomic_write_text(out / "norms.csv", csv_text(header, [r.row() for r in reports]))
    for i, f in enumerate(traj.fields):
        atomic_write_bytes(out / "snapshots" / f"snap_{i:05d}.nlpf", encode_snapshot(f))
    summary = {
        "status": traj.status,
        "final_time": traj.final_time,
        "max_coeff": traj.last.max_abs(),
        "wallclock": wall,
        "snapshots": len(traj.fields),
        "mass_drift": float(np.max(np.abs(traj.last.zero_mode() - traj.fields[0].zero_mode()))),
        "config": cfg.to_dict(),
    }
    atomic_write_text(out / "run_summary.json", dump_json(summary))
    print(f"{traj.status} t={traj.final_time:.6g} max|u_hat|={summary['max_coeff']:.3e}")
    return EXIT_OK if traj.status == COMPLETED else EXIT_OVERFLOW


def cmd_certify(args) -> int:
    A = args.A
    if A != "auto":
        try:
            A = float(A)
        except ValueError:
            _err(f"--A must be a number or 'auto', got {A!r}")
            return EXIT_CONFIG
    try:
        rep = certificate.certify(args.dim, args.kmax, A=A, a=args.a, mode=args.mode,
                                  points_per_octave=args.points_per_octave,
                                  kernel=args.kernel, n=args.n, period=args.period,
                                  dt=args.dt, t_end=args.t_end)
    except (ValueError, certificate.CertificateError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    atomic_write_text(args.out, dump_json(rep.to_dict()))
    print(f"A*={rep.A_star:.6g} closed_form={rep.A_closed_form:.6g} A={rep.A:.6g} pass={rep.passed}")
    for name, ok in sorted(rep.checks.items()):
        print(f"  {name}: {'ok' if ok else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


def _k_decay_csv(level: int) -> tuple:
    coarse = oracle.kernel_convolution_quadrature(level=level)
    fine = oracle.kernel_convolution_quadrature(level=level + 1)
    rows = []
    for a, b in zip(coarse.rows, fine.rows):
        rows.append([a[0], a[1], b[1], a[2], b[2], abs(b[2] / a[2] - 1) if a[2] else 0.0])
    header = ["r", "value", "value_fine", "weighted", "weighted_fine", "rel_change"]
    split = {k: v * 16 for k, v in oracle.kernel_split(oracle.decay_profile(2.0), 16.0).items()}
    summary = {"ratio": coarse.ratios["ratio"], "ratio_fine": fine.ratios["ratio"],
               "rel_change": oracle.refinement_change(coarse.ratios, fine.ratios, ["ratio"]),
               "split_times_r_at_16": split}
    return header, rows, summary


def _duhamel_csv(level: int) -> tuple:
    coarse = oracle.duhamel_operator_quadrature(level=level)
    fine = oracle.duhamel_operator_quadrature(level=level + 1)
    rows = [a[:3] + [b[2], a[3], a[4]] for a, b in zip(coarse.rows, fine.rows)]
    header = ["r", "t", "value", "value_fine", "space_weighted", "time_weighted"]
    keys = ["ratio_space", "ratio_time"]
    summary = {"coarse": coarse.ratios, "fine": fine.ratios,
               "rel_change": oracle.refinement_change(coarse.ratios, fine.ratios, keys),
               "G_l1_at_t1": oracle.heat_derivative_l1(1.0)}
    return header, rows, summary


def _chandrasekhar_csv() -> tuple:
    rows = []
    for d in (3, 4):
        for r in np.geomspace(0.05, 50.0, 25):
            lap, tr = chandrasekhar_terms(d, float(r))
            rows.append([d, float(r), lap, tr, abs(lap + tr)])
    worst = max(row[4] for row in rows)
    return ["d", "r", "laplacian", "transport", "residual"], rows, {"max_residual": worst}


def cmd_lemmas(args) -> int:
    try:
        if args.which == "k_decay":
            header, rows, summary = _k_decay_csv(args.level)
        elif args.which == "duhamel":
            header, rows, summary = _duhamel_csv(args.level)
        else:
            header, rows, summary = _chandrasekhar_csv()
    except (ValueError, ArithmeticError) as exc:
        _err(f"quadrature failed: {exc}")
        return EXIT_CONFIG
    if not all(math.isfinite(v) for row in rows for v in row):
        _err("quadrature produced non-finite values")
        return EXIT_CONFIG
    atomic_write_text(args.out, csv_text(header, rows))
    print(json.dumps(summary, sort_keys=True, default=float))
    return EXIT_OK


def compare_oracle(cfg: RunConfig) -> dict:
    """Run the spectral solver and picard_direct from the same data; returns the discrepancy."""
    grid = cfg.grid.build()
    spec = cfg.model.build(grid.d)
    u0 = cfg.initial.build(grid, spec.m, cfg.seed).field
    R = int(cfg.oracle.get("R", 8))
    if R > 10:
        raise ConfigError("oracle comparisons need R <= 10")
    scfg = cfg.solver_config()
    scfg = SolverConfig(**{**scfg.__dict__, "snapshot_every": 10**9})
    steps = int(cfg.oracle.get("steps", scfg.nsteps))
    lat = oracle.SmallLattice.from_field(u0, R)
    # the reference starts from the truncated data
    u0 = lat.to_field(grid)
    traj = run(spec, u0, scfg)
    ref = oracle.picard_direct(spec, lat, scfg.t_end, steps)
    if ref.status != "completed" or traj.status != COMPLETED:
        return {"status": "diverged", "discrepancy": math.inf}
    d = oracle.sup_discrepancy(traj.last, ref.states[-1].to_field(grid))
    return {"status": "completed", "discrepancy": d, "R": R, "steps": steps,
            "solver_cutoff": scfg.dealias_cutoff}


def cmd_compare_oracle(args) -> int:
    try:
        cfg = RunConfig.load(args.config).validate()
        res = compare_oracle(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(f"max sup discrepancy: {res['discrepancy']:.3e}")
    return EXIT_OK if res["discrepancy"] <= ORACLE_TOL else EXIT_ORACLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlpde", description=__doc__.strip().splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the spectral solver from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="build and check the blow-up ladder")
    c.add_argument("--dim", type=int, default=2)
    c.add_argument("--kmax", type=int, default=6)
    c.add_argument("--A", default="auto")
    c.add_argument("--a", type=float, default=0.0)
    c.add_argument("--mode", choices=certificate.MODES, default="recursion_only")
    c.add_argument("--out", required=True, help="report JSON path")
    c.add_argument("--points-per-octave", type=int, default=32)
    c.add_argument("--kernel", choices=certificate.KERNELS, default="first_component")
    c.add_argument("--n", type=int, default=512)
    c.add_argument("--period", type=float, default=32 * math.pi)
    c.add_argument("--dt", type=float, default=1e-3)
    c.add_argument("--t-end", type=float, default=0.25)
    c.set_defaults(func=cmd_certify)

    lm = sub.add_parser("lemmas", help="quadrature sweeps for the kernel and Duhamel estimates")
    lm.add_argument("--which", choices=("k_decay", "duhamel", "chandrasekhar"), required=True)
    lm.add_argument("--out", required=True, help="CSV path")
    lm.add_argument("--level", type=int, default=0, help="base refinement level")
    lm.set_defaults(func=cmd_lemmas)

    o = sub.add_parser("compare-oracle", help="spectral solver vs direct mode sums")
    o.add_argument("--config", required=True)
    o.set_defaults(func=cmd_compare_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
