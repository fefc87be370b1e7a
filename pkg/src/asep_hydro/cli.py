"""Command line entry point: ``asep-hydro <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed acceptance check (only with ``--check``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .fields import _jsonable, write_field

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("asep_hydro")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.replicas is not None:
        if args.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        cfg.replicas = args.replicas
    if args.out is not None:
        cfg.output = Path(args.out)
    return cfg


def _dump(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def cmd_simulate(args) -> int:
    from .dynamics import replica_streams, sample_initial, Configuration, EventSource, run_until, dump_snapshot
    from .harness import ensemble_fields, write_manifest
    from .lattice import LatticeSpec
    from .observables import BlockSpec, default_block_radius

    cfg = _load(args)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.params()
    for inv_eps in cfg.inv_eps:
        lattice = LatticeSpec(inv_eps, cfg.dim)
        block = BlockSpec(default_block_radius(lattice.eps, cfg.dim, cfg.block_ell), cfg.dim)
        for t, (field, se) in zip(cfg.times, ensemble_fields(cfg, params, lattice, block, "truncate")):
            write_field(out / f"sim_eps{inv_eps}_t{t:g}.csv", field,
                        block_radius=block.radius, mean_stderr=float(np.nanmean(se)))
        if args.snapshot:
            init, waits, picks = replica_streams(cfg.seed, inv_eps, 0)
            c = Configuration(lattice, params, sample_initial(lattice, cfg.m0, init))
            run = run_until(c, EventSource(waits, picks), cfg.times[-1])
            dump_snapshot(out / f"replica0_eps{inv_eps}.snap", lattice, run.final, cfg.seed, c.time)
    write_manifest(out, cfg, "simulate")
    return EXIT_OK


def cmd_pde(args) -> int:
    from .harness import resolve_diffusion
    from .lattice import LatticeSpec
    from .pde import PdeProblem, solve

    cfg = _load(args)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    D = resolve_diffusion(cfg)
    delta = cfg.params().delta
    grids = [args.nodes] if args.nodes else [LatticeSpec(n, cfg.dim).side for n in cfg.inv_eps]
    for n in grids:
        problem = PdeProblem((n,) * cfg.dim, delta, D, cfg.b_left, cfg.b_right, cfg.m0,
                             horizon=cfg.times[-1])
        for t, f in zip(cfg.times, solve(problem, cfg.times)):
            write_field(out / f"pde_n{n}_t{t:g}.csv", f, D=D.tolist())
    return EXIT_OK


def cmd_converge(args) -> int:
    from .harness import run_convergence_study

    report = run_convergence_study(_load(args))
    for row in report.rows:
        print(f"eps=1/{row.inv_eps} t={row.time:g} L1={row.l1:.4f} L2={row.l2:.4f} "
              f"sup={row.sup:.4f} mc_se={row.mc_stderr:.4f}")
    print(f"monotone={report.monotone} small={report.small} slope={report.slope}")
    return EXIT_CHECK if args.check and not report.passed else EXIT_OK


def cmd_stationary(args) -> int:
    from .harness import run_stationarity_check

    report = run_stationarity_check(_load(args))
    if report.insufficient_data:
        print("insufficient data: empty averaging window")
        return EXIT_CHECK if args.check else EXIT_OK
    print(f"global z={report.z_global:+.3f} max |slice z|={report.max_slice_z:.3f}")
    return EXIT_CHECK if args.check and not report.passed else EXIT_OK


def cmd_steady(args) -> int:
    from .harness import run_steady_check

    report = run_steady_check(_load(args))
    print(f"sup error on {report.window}: {report.sup_error:.4f} (tolerance {report.tolerance})")
    return EXIT_CHECK if args.check and not report.passed else EXIT_OK


def cmd_estimate_d(args) -> int:
    from .diffusion import estimate_diffusion

    cfg = _load(args)
    est, rates = estimate_diffusion(cfg.params().delta, cfg.estimator_inv_eps, cfg.dim,
                                    cfg.replicas if args.replicas else cfg.estimator_replicas,
                                    cfg.estimator_amplitude, cfg.seed)
    payload = est.to_json()
    payload["probes"] = [{"q": list(r.q), "rate": r.rate, "stderr": r.stderr, "r2": r.r2,
                          "accepted": r.accepted} for r in rates]
    _dump(payload, Path(cfg.output), "D.json")
    print(np.array2string(est.D, precision=4))
    print(f"positive definite: {est.positive_definite}")
    if not est.positive_definite:
        print(f"numerical failure: minimum eigenvalue {est.eigenvalues.min():.4g}", file=sys.stderr)
        return EXIT_NUMERICAL
    ok = all(r.accepted for r in rates)
    return EXIT_CHECK if args.check and not ok else EXIT_OK


def cmd_oracle(args) -> int:
    from . import oracles

    out = Path(args.out) if args.out else None
    if args.tool == "generator":
        Q = oracles.chain_rate_matrix(args.p_plus, 2.0 - args.p_plus, args.sites, args.eps,
                                      args.b_left, args.b_right, reversible=args.reversible,
                                      speedup_exponent=args.speedup_exponent)
        _dump({"Q": Q.tolist(), "jump_chain": oracles.jump_chain(Q).tolist()}, out, "generator.json")
    elif args.tool == "block":
        table = oracles.block_current_enumeration(args.k, args.dim, args.delta)
        _dump({str(n): v for n, v in table.items()}, out, "block.json")
    else:
        u, m = oracles.steady_profile_shooting(args.delta1, args.d11, args.b_left, args.b_right,
                                               np.linspace(-1, 1, args.points))
        _dump({"u": u.tolist(), "m": m.tolist()}, out, "steady.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asep-hydro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help_text, check=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--out", type=Path)
        if check:
            p.add_argument("--check", action="store_true", help="exit 4 when the check fails")
        p.set_defaults(func=fn)
        return p

    p = with_config("simulate", cmd_simulate, "ensemble-mean block fields at the snapshot times",
                    check=False)
    p.add_argument("--snapshot", action="store_true", help="also dump replica 0's final occupancy")
    p = with_config("pde", cmd_pde, "solve the PDE and write the fields", check=False)
    p.add_argument("--nodes", type=int, help="nodes per axis (default: one grid per lattice)")
    with_config("converge", cmd_converge, "eps-ladder convergence study")
    with_config("stationary", cmd_stationary, "stationarity of the flat profile")
    with_config("steady", cmd_steady, "long-time profile against the 1D steady state")
    with_config("estimate-d", cmd_estimate_d, "estimate D from mode relaxation")

    o = sub.add_parser("oracle", help="brute-force reference tools")
    o.add_argument("tool", choices=["generator", "block", "shooting"])
    o.add_argument("--out", type=Path)
    o.add_argument("--sites", type=int, default=3)
    o.add_argument("--p-plus", type=float, default=1.2)
    o.add_argument("--eps", type=float, default=1.0)
    o.add_argument("--b-left", type=float, default=0.0)
    o.add_argument("--b-right", type=float, default=0.0)
    o.add_argument("--reversible", action="store_true")
    o.add_argument("--speedup-exponent", type=float, default=2.0)
    o.add_argument("--k", type=int, default=1)
    o.add_argument("--dim", type=int, default=1)
    o.add_argument("--delta", type=float, default=1.0)
    o.add_argument("--delta1", type=float, default=0.4)
    o.add_argument("--d11", type=float, default=1.0)
    o.add_argument("--points", type=int, default=201)
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    from .pde import NumericalFailure
    from .harness import ReplicaFailure

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ReplicaFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
