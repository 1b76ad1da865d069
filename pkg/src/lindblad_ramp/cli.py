"""Command line front end for ramped-dissipation defect studies.

Subcommands map onto the library layers: ``evolve`` integrates a single
momentum mode and writes its coherence-vector history, ``defect-profile``
scans the residual excitation across momentum at fixed ramp time,
``density-sweep`` integrates the defect density over momentum for a list
of ramp times and optionally fits the decay exponent, ``series`` reports
the growth of the slow-expansion coefficients, ``collapse`` tests the
universal rescaling of conditioned-ramp profiles near the exceptional
point, and ``fit`` extracts a power law from a previously written sweep
table.

Every output file records the effective configuration: CSV files in
'#'-prefixed header lines, JSON files under a "config" key, one object
per file.  A JSON config file passed with --config supplies defaults
that explicit flags override.  Runs are deterministic for a fixed
configuration; --threads only distributes independent ramp times and
never changes the reduction order.

Exit codes: 0 on success, 1 on numerical failure (one machine-readable
``error: <Type>: <message>`` line on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import LindbladRampError
from .nojump import scaling_collapse
from .params import ModeParams
from .propagate import (IntegrationControls, defect_full_batch,
                        defect_nojump_batch, evolve)
from .series import coefficients_gapless, coefficients_gapped, convergence_report
from .sweep import (DensityRecord, QuadratureSpec, SweepPlan,
                    default_quadrature, fit_exponent, tau_sweep)


def _float_list(raw, parser, flag):
    """Comma string or JSON list -> list of floats."""
    if isinstance(raw, (list, tuple)):
        toks = list(raw)
    else:
        toks = [t for t in str(raw).split(",") if t.strip()]
    try:
        vals = [float(t) for t in toks]
    except (TypeError, ValueError):
        parser.error(f"{flag} expects comma-separated numbers")
    if not vals:
        parser.error(f"{flag} needs at least one value")
    return vals


def _apply_config(args, parser):
    """Layer config-file values under explicit flags (flags win)."""
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a single JSON object")
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest in ("config", "func") or not hasattr(args, dest):
            parser.error(f"unknown config key {key!r}")
        if getattr(args, dest) is None:
            setattr(args, dest, val)


def _require(args, parser, *names):
    for name in names:
        if getattr(args, name) is None:
            parser.error(f"--{name.replace('_', '-')} is required")


def _fill(args, **defaults):
    for name, value in defaults.items():
        if getattr(args, name) is None:
            setattr(args, name, value)


def _config_dict(args, names):
    return {name.replace("_", "-"): getattr(args, name) for name in names}


def _config_line(cfg):
    return "# config: " + json.dumps(cfg, sort_keys=True)


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def _write_json(path, obj):
    fh, close = _open_out(path)
    try:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    finally:
        if close:
            fh.close()


def _threads(args, parser):
    n = args.threads if args.threads is not None else (os.cpu_count() or 1)
    n = int(n)
    if n < 1:
        parser.error("--threads must be at least 1")
    return n


# ---------------------------------------------------------------------------
# subcommands

def cmd_evolve(args, parser):
    _apply_config(args, parser)
    _require(args, parser, "p", "tau")
    _fill(args, delta=1.0, gamma0=1.0, kind="full")
    cfg = _config_dict(args, ("p", "delta", "gamma0", "tau", "kind",
                              "steps", "tol", "out"))
    params = ModeParams(p=args.p, delta=args.delta, gamma0=args.gamma0,
                        tau=args.tau)
    kw = {}
    if args.tol is not None:
        kw.update(rtol=float(args.tol), atol=float(args.tol) * 1e-2)
    if args.steps is not None:
        kw.update(method="rk4", steps=int(args.steps))
    controls = IntegrationControls(**kw)
    traj = evolve(params, kind=args.kind, controls=controls)
    fh, close = _open_out(args.out)
    try:
        fh.write(_config_line(cfg) + "\n")
        traj.to_csv(fh)
    finally:
        if close:
            fh.close()
    return 0


def _leading_tau_nz(kind, case, scale, epsilon, x_end, y):
    """Leading large-tau prediction for tau * n_z at scaled momentum y."""
    if kind == "full":
        if case == "gapped":
            c1 = coefficients_gapped(1, epsilon)[0][0]
        else:
            c1 = coefficients_gapless(1)[0][0]
        return 2.0 * np.asarray(c1(1.0, y), dtype=float) / scale
    # conditioned ramp: slow-expansion head, valid outside the crossover
    if case == "gapped":
        denom = 1.0 + y ** 2 - x_end ** 2
    else:
        denom = y ** 2 - x_end ** 2
    with np.errstate(divide="ignore"):
        out = np.where(denom > 0.0, -1.0 / (2.0 * denom * scale), np.nan)
    return out


def cmd_defect_profile(args, parser):
    _apply_config(args, parser)
    _fill(args, kind="full", delta=1.0, gamma0=1.0, p_min=0.0, p_max=5.0,
          p_count=101, x_end=1.0)
    if args.kind not in ("full", "nojump"):
        parser.error("--kind must be full or nojump")
    if int(args.p_count) < 2:
        parser.error("--p-count must be at least 2")
    if args.collapse:
        # rescaled overlay of conditioned profiles across several ramp times
        if args.kind != "nojump":
            parser.error("--collapse needs --kind nojump")
        if args.tau_list is None:
            parser.error("--collapse needs --tau-list")
        taus = _float_list(args.tau_list, parser, "--tau-list")
        if len(taus) < 2:
            parser.error("--collapse needs at least two ramp times")
        cfg = _config_dict(args, ("kind", "delta", "p_min", "p_max",
                                  "p_count", "x_end", "out"))
        cfg["tau-list"] = taus
        grid = np.linspace(float(args.p_min), float(args.p_max),
                           int(args.p_count))
        result = scaling_collapse(float(args.delta), taus, grid,
                                  x_end=float(args.x_end))
        fh, close = _open_out(args.out)
        try:
            fh.write(_config_line(cfg) + "\n")
            result.to_csv(fh)
        finally:
            if close:
                fh.close()
        print(f"exponent={result.exponent:.6f} "
              f"residual={result.residual:.4f}")
        return 0
    _require(args, parser, "tau")
    cfg = _config_dict(args, ("kind", "delta", "gamma0", "tau", "p_min",
                              "p_max", "p_count", "x_end", "out"))
    delta, gamma0, tau = float(args.delta), float(args.gamma0), float(args.tau)
    case = "gapped" if delta > 0.0 else "gapless"
    scale = delta if case == "gapped" else gamma0
    if scale <= 0.0:
        parser.error("need delta > 0 or gamma0 > 0 to set the mode scale")
    grid = np.linspace(float(args.p_min), float(args.p_max), int(args.p_count))
    if args.kind == "full":
        nz = defect_full_batch(grid, delta, gamma0, tau)[:, 2]
    else:
        controls = IntegrationControls(reference="none")
        nz = defect_nojump_batch(grid, delta, gamma0, tau,
                                 x_end=float(args.x_end),
                                 controls=controls)[:, 2]
    lead = _leading_tau_nz(args.kind, case, scale,
                           gamma0 / delta if case == "gapped" else None,
                           float(args.x_end), grid / scale)
    fh, close = _open_out(args.out)
    try:
        fh.write(_config_line(cfg) + "\n")
        fh.write("# columns: p, tau_nz, tau_nz_leading\n")
        for p, v, l in zip(grid, tau * nz, lead):
            fh.write(f"{p:.12g},{v:.12g},{l:.12g}\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_density_sweep(args, parser):
    _apply_config(args, parser)
    _require(args, parser, "tau_list")
    _fill(args, kind="full", case="gapped", delta=1.0, epsilon=1.0,
          gamma0=1.0, x_end=1.0, step_budget=40_000)
    if args.kind not in ("full", "nojump"):
        parser.error("--kind must be full or nojump")
    taus = _float_list(args.tau_list, parser, "--tau-list")
    dq = default_quadrature(args.kind, args.case)
    _fill(args, nodes=dq.nodes, max_nodes=dq.max_nodes, qtol=dq.tol)
    cfg = _config_dict(args, ("kind", "case", "delta", "epsilon", "gamma0",
                              "x_end", "step_budget", "nodes", "max_nodes",
                              "qtol", "threads", "out", "fit_out"))
    cfg["tau-list"] = taus
    spec = QuadratureSpec(nodes=int(args.nodes), max_nodes=int(args.max_nodes),
                          tol=float(args.qtol))
    plan = SweepPlan(kind=args.kind, case=args.case, tau_list=tuple(taus),
                     delta=float(args.delta), epsilon=float(args.epsilon),
                     gamma0=float(args.gamma0), x_end=float(args.x_end),
                     step_budget=int(args.step_budget), quadrature=spec)
    records = tau_sweep(plan, threads=_threads(args, parser))
    fh, close = _open_out(args.out)
    try:
        fh.write(_config_line(cfg) + "\n")
        fh.write("# columns: tau, n_z, quadrature_error\n")
        flagged = [r.tau for r in records if r.flagged]
        if flagged:
            fh.write("# flagged tau: " +
                     " ".join(f"{t:g}" for t in flagged) + "\n")
        for r in records:
            fh.write(f"{r.tau:.12g},{r.n_z_integrated:.12g},"
                     f"{r.quadrature_error_estimate:.12g}\n")
    finally:
        if close:
            fh.close()
    if args.fit_out is not None:
        fit = fit_exponent(records)
        _write_json(args.fit_out, {"config": cfg, **fit.to_json_dict()})
        print(f"exponent={fit.exponent:.6f} stderr={fit.stderr:.2e} "
              f"n_used={fit.n_used}")
    return 0


def cmd_series(args, parser):
    _apply_config(args, parser)
    _require(args, parser, "orders")
    _fill(args, case="gapped", epsilon=1.0, y_list="0,1,2")
    if args.case not in ("gapped", "gapless"):
        parser.error("--case must be gapped or gapless")
    K = int(args.orders)
    if K < 1:
        parser.error("--orders must be a positive integer")
    y_values = _float_list(args.y_list, parser, "--y-list")
    cfg = _config_dict(args, ("case", "epsilon", "orders", "y_list", "out"))
    cfg["y-list"] = y_values
    if args.case == "gapped":
        table = coefficients_gapped(K, float(args.epsilon))
    else:
        table = coefficients_gapless(K)
    c_at_edge = {f"{y:g}": [float(c(1.0, y)) for c, _ in table]
                 for y in y_values}
    out = {"config": cfg, "case": args.case, "orders": K,
           "c_at_x1": c_at_edge, "report": None}
    if K >= 6:
        eps = float(args.epsilon) if args.case == "gapped" else None
        rep = convergence_report(args.case, epsilon=eps,
                                 y_values=tuple(y_values), K=K)
        out["report"] = {"y_values": list(rep.y_values),
                         "orders": list(rep.orders),
                         "log_abs_ck": rep.log_abs_ck.tolist(),
                         "growth_rate": rep.growth_rate.tolist(),
                         "radius_estimate": rep.radius_estimate.tolist()}
        for y, g, r in zip(rep.y_values, rep.growth_rate,
                           rep.radius_estimate):
            print(f"y={y:g} growth_rate={g:.4f} radius_estimate={r:.2f}")
    if args.out is not None:
        _write_json(args.out, out)
    return 0


def cmd_collapse(args, parser):
    _apply_config(args, parser)
    _require(args, parser, "tau_list")
    _fill(args, delta=1.0, exponent=1.0 / 3.0, x_end=1.0, p_count=56)
    taus = _float_list(args.tau_list, parser, "--tau-list")
    if len(taus) < 2:
        parser.error("--tau-list needs at least two ramp times")
    delta = float(args.delta)
    if args.p_max is None:
        # smallest tau bounds the overlap window of the rescaled axis
        args.p_max = 5.0 * delta / (delta * min(taus)) ** float(args.exponent)
    cfg = _config_dict(args, ("delta", "exponent", "x_end", "p_max",
                              "p_count", "out", "summary_out"))
    cfg["tau-list"] = taus
    grid = np.linspace(0.0, float(args.p_max), int(args.p_count))
    result = scaling_collapse(delta, taus, grid,
                              exponent=float(args.exponent),
                              x_end=float(args.x_end))
    fh, close = _open_out(args.out)
    try:
        fh.write(_config_line(cfg) + "\n")
        result.to_csv(fh)
    finally:
        if close:
            fh.close()
    print(f"exponent={result.exponent:.6f} residual={result.residual:.4f}")
    if args.summary_out is not None:
        _write_json(args.summary_out,
                    {"config": cfg, "exponent": result.exponent,
                     "residual": result.residual, "tau-list": taus})
    return 0


def cmd_fit(args, parser):
    _apply_config(args, parser)
    _require(args, parser, "infile")
    cfg = _config_dict(args, ("infile", "out"))
    data = np.loadtxt(args.infile, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("input table needs columns tau, n_z[, err]")
    records = [DensityRecord(tau=float(row[0]), n_z_integrated=float(row[1]),
                             quadrature_error_estimate=(float(row[2])
                                                        if data.shape[1] > 2
                                                        else 0.0))
               for row in data]
    fit = fit_exponent(records)
    print(f"exponent={fit.exponent:.6f} stderr={fit.stderr:.2e} "
          f"n_used={fit.n_used}")
    if args.out is not None:
        _write_json(args.out, {"config": cfg, **fit.to_json_dict()})
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(sp):
    sp.add_argument("--config", help="JSON file with default flag values")
    sp.add_argument("--threads", type=int,
                    help="cap on worker threads (default: cpu count)")
    sp.add_argument("--out", help="output path ('-' or omitted: stdout)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lindblad-ramp",
        description="Defect production under slowly ramped dissipative "
                    "coupling: single-mode evolution, momentum-integrated "
                    "density scaling, slow-series diagnostics, and "
                    "exceptional-point collapse tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("evolve", help="integrate one momentum mode")
    _add_common(sp)
    sp.add_argument("--p", type=float, help="momentum of the mode")
    sp.add_argument("--delta", type=float, help="gap scale (default 1)")
    sp.add_argument("--gamma0", type=float,
                    help="final coupling rate (default 1)")
    sp.add_argument("--tau", type=float, help="ramp time")
    sp.add_argument("--kind", choices=("full", "nojump"),
                    help="full dissipator or conditioned dynamics")
    sp.add_argument("--steps", type=int,
                    help="fixed step count (default: adaptive)")
    sp.add_argument("--tol", type=float,
                    help="relative tolerance of the adaptive stepper")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("defect-profile",
                        help="residual excitation vs momentum at fixed tau")
    _add_common(sp)
    sp.add_argument("--kind", choices=("full", "nojump"))
    sp.add_argument("--delta", type=float)
    sp.add_argument("--gamma0", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--p-min", type=float)
    sp.add_argument("--p-max", type=float)
    sp.add_argument("--p-count", type=int)
    sp.add_argument("--x-end", type=float,
                    help="ramp fraction to stop at (conditioned kind)")
    sp.add_argument("--tau-list", help="ramp times for --collapse")
    sp.add_argument("--collapse", action="store_true", default=None,
                    help="write the rescaled overlay instead of one profile")
    sp.set_defaults(func=cmd_defect_profile)

    sp = sub.add_parser("density-sweep",
                        help="momentum-integrated defect density vs tau")
    _add_common(sp)
    sp.add_argument("--kind", choices=("full", "nojump"))
    sp.add_argument("--case", choices=("gapped", "gapless"))
    sp.add_argument("--delta", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--gamma0", type=float)
    sp.add_argument("--tau-list", help="comma-separated ramp times")
    sp.add_argument("--x-end", type=float)
    sp.add_argument("--step-budget", type=int,
                    help="per-node step cap before the far-tail expansion "
                         "takes over (conditioned kind)")
    sp.add_argument("--nodes", type=int, help="initial quadrature nodes")
    sp.add_argument("--max-nodes", type=int)
    sp.add_argument("--qtol", type=float, help="quadrature tolerance")
    sp.add_argument("--fit-out", help="JSON path for the exponent fit")
    sp.set_defaults(func=cmd_density_sweep)

    sp = sub.add_parser("series",
                        help="slow-expansion coefficient growth report")
    _add_common(sp)
    sp.add_argument("--case", choices=("gapped", "gapless"))
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--orders", type=int, help="number of orders to build")
    sp.add_argument("--y-list", help="comma-separated scaled momenta")
    sp.set_defaults(func=cmd_series)

    sp = sub.add_parser("collapse",
                        help="rescaled conditioned-profile overlay test")
    _add_common(sp)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--tau-list", help="comma-separated ramp times")
    sp.add_argument("--exponent", type=float,
                    help="collapse exponent (default 1/3)")
    sp.add_argument("--x-end", type=float)
    sp.add_argument("--p-max", type=float,
                    help="top of the momentum grid (default: auto)")
    sp.add_argument("--p-count", type=int)
    sp.add_argument("--summary-out", help="JSON path for the residual")
    sp.set_defaults(func=cmd_collapse)

    sp = sub.add_parser("fit", help="power-law fit of a density table")
    _add_common(sp)
    sp.add_argument("--in", dest="infile", help="CSV with tau, n_z[, err]")
    sp.set_defaults(func=cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except LindbladRampError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
