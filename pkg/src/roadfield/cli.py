"""``roadfield`` command-line driver.

Every subcommand exits 0 only when all its outputs were written and its
checks held.  Failures print one JSON object on a single stderr line.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from . import __version__
from .analysis import efficiency_report
from .assembly import build_system
from .config import RunConfig, family_spec, read_config
from .errors import ConfigurationError, RoadFieldError
from .evolution import implicit_euler, initial_state
from .meshing import DomainGeometry, read_domain, triangulate, write_mesh
from .network import format_network, network_stats, read_network
from .optimize import search
from .spectral import dirichlet_gamma, smallest_eigenpairs
from .vtk import fmt, write_csv, write_vtk

REPORT_COLUMNS = (
    "config", "road", "length", "lambda1", "gamma1", "ratio", "classification",
    "C_P", "C_T", "Lambda_K", "alpha", "c0", "c_coer", "bound_holds",
)
RESULT_COLUMNS = ("id", "parameters", "length", "lambda1", "gamma1", "ratio", "classification", "ratio_fine", "converged")


class CheckFailed(RoadFieldError):
    """A pipeline postcondition did not hold (outputs were still written)."""


def thread_count(arg) -> int:
    if arg is not None:
        return max(int(arg), 1)
    env = os.environ.get("ROADFIELD_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigurationError(f"ROADFIELD_THREADS must be an integer, got {env!r}", key="ROADFIELD_THREADS") from None
    return 1


def _config(args) -> RunConfig:
    cfg = read_config(args.config)
    over = {name: getattr(args, name, None) for name in ("h", "k", "tol", "seed", "dt", "T", "band")}
    return cfg.replace(**over)


def _system(cfg: RunConfig):
    domain = cfg.load_domain()
    net = cfg.load_network()
    mesh = triangulate(domain, net, cfg.h, cfg.min_angle)
    return domain, net, mesh, build_system(mesh, cfg.params)


def _output(arg, cfg, name):
    out = arg or (cfg.path(name) if cfg is not None else None)
    if out is None:
        raise ConfigurationError(f"no output path: pass -o or set {name} in [output]", key=f"output.{name}")
    return out


def cmd_net_stats(args) -> int:
    net = read_network(_exists(args.file, "network"))
    stats = network_stats(net, args.edge_samples)
    if args.domain:
        from .network import validate_network

        rep = validate_network(net, read_domain(_exists(args.domain, "domain")))
        stats["inside_domain"] = not (rep.outside_vertices or rep.outside_edges or rep.boundary_overlaps)
    for k, v in stats.items():
        print(f"{k}={fmt(v)}")
    return 0 if stats["valid"] and stats.get("inside_domain", True) else 3


def _exists(path, what):
    if not os.path.isfile(path):
        raise ConfigurationError(f"{what} file not found: {path}", item=path)
    return path


def cmd_mesh(args) -> int:
    if args.config:
        cfg = _config(args)
        domain, net = cfg.load_domain(), cfg.load_network(required=False)
        h, angle = cfg.h, cfg.min_angle
    else:
        cfg = None
        domain = read_domain(_exists(args.domain, "domain")) if args.domain else DomainGeometry.unit_square()
        net = read_network(_exists(args.net, "network")) if args.net else None
        if args.h is None:
            raise ConfigurationError("mesh needs --h or --config", key="h")
        h, angle = args.h, args.min_angle
    mesh = triangulate(domain, net, h, angle)
    write_mesh(mesh, _output(args.output, cfg, "mesh"))
    return 0


def cmd_eigs(args) -> int:
    cfg = _config(args)
    _, _, _, sys_ = _system(cfg)
    spec = smallest_eigenpairs(sys_, min(cfg.k, sys_.n_dofs), tol=cfg.tol, seed=cfg.seed, maxiter=cfg.maxiter)
    rows = [(i + 1, lam, r) for i, (lam, r) in enumerate(zip(spec.eigenvalues, spec.residuals))]
    write_csv(_output(args.output, cfg, "spectrum"), ("index", "lambda", "residual"), rows)
    return 0


def cmd_evolve(args) -> int:
    cfg = _config(args)
    if cfg.dt is None or cfg.T is None:
        raise ConfigurationError("evolve needs dt and T (flags or [evolve])", key="evolve.dt")
    _, _, mesh, sys_ = _system(cfg)
    s0 = initial_state(sys_, cfg.v0, cfg.u0)
    every = args.vtk_every or cfg.snapshot_every
    trace = implicit_euler(sys_, s0, cfg.dt, cfg.T, snapshot_every=every)
    out = _output(args.output, cfg, "trace")
    write_csv(out, ("t", "Lnorm"), zip(trace.times, trace.lnorms))
    if every:
        prefix = args.vtk_prefix or cfg.path("vtk_prefix") or os.path.splitext(out)[0]
        for step, state in sorted(trace.snapshots.items()):
            v, u = sys_.expand(state.values)
            write_vtk(f"{prefix}_{step:06d}.vtk", mesh, v, u, title=f"t={fmt(state.t)}")
    if np.any(np.diff(trace.lnorms) > 1e-12 * trace.lnorms[0]):
        raise CheckFailed("L-norm increased during time stepping", operation="evolve")
    return 0


def cmd_analyze(args) -> int:
    rows, failed = [], []
    for path in args.config:
        args_one = argparse.Namespace(**{**vars(args), "config": path})
        cfg = _config(args_one)
        _, net, mesh, sys_ = _system(cfg)
        spec = smallest_eigenpairs(sys_, 1, tol=min(cfg.tol, 1e-10), seed=cfg.seed, maxiter=cfg.maxiter)
        gamma = float(dirichlet_gamma(mesh, cfg.a, k=1)[0])
        rep = efficiency_report(sys_, spec, gamma, mesh, net, cfg.band, road=os.path.basename(cfg.network_file or ""))
        row = {"config": os.path.basename(path), **rep.row()}
        rows.append([row.get(c) for c in REPORT_COLUMNS])
        if not rep.bound_holds:
            failed.append(path)
    write_csv(args.output or _output(None, read_config(args.config[0]), "report"), REPORT_COLUMNS, rows)
    if failed:
        raise CheckFailed(f"lower bound violated for {failed}", operation="analyze")
    return 0


def cmd_optimize(args) -> int:
    cfg = read_config(args.spec)
    cfg = cfg.replace(h=args.h, band=args.band)
    spec = family_spec(cfg)
    domain = cfg.load_domain()
    threads = thread_count(args.threads)
    res = search(spec, domain, cfg.params, cfg.h, threads=threads, recheck_top=cfg.recheck,
                 convergence_tol=cfg.convergence_tol, local_steps=cfg.local_steps, local_refine=cfg.local_refine,
                 band=cfg.band, min_angle=cfg.min_angle)
    rows = []
    for c, rep in res.ranked:
        fine, ok = res.converged.get(c.id, (None, None))
        params = ";".join(f"{k}={fmt(v)}" for k, v in c.params.items())
        rows.append((c.id, params, c.length, rep.lambda1, rep.gamma1, rep.ratio, rep.classification, fine, ok))
    write_csv(_output(args.output, cfg, "results"), RESULT_COLUMNS, rows)
    best_out = args.emit_best or cfg.path("best")
    if best_out:
        with open(best_out, "w", newline="\n") as fh:
            fh.write(format_network(res.best[0].net))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadfield", description="Field-road diffusion: spectra, bounds and road search.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: $ROADFIELD_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("net-stats", help="length, Ahlfors estimate and validation of a network file")
    s.add_argument("file")
    s.add_argument("--domain", help="also check the network lies in this domain")
    s.add_argument("--edge-samples", type=int, default=8)
    s.set_defaults(func=cmd_net_stats)

    s = sub.add_parser("mesh", help="triangulate a domain with the road embedded")
    s.add_argument("--config")
    s.add_argument("--domain")
    s.add_argument("--net")
    s.add_argument("--h", type=float)
    s.add_argument("--min-angle", type=float, default=25.0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_mesh)

    def common(s):
        s.add_argument("--config", "--system", dest="config", required=True)
        s.add_argument("--h", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("-o", "--output")

    s = sub.add_parser("eigs", help="smallest eigenpairs of the coupled operator")
    common(s)
    s.add_argument("-k", type=int)
    s.set_defaults(func=cmd_eigs)

    s = sub.add_parser("evolve", help="implicit Euler time stepping")
    common(s)
    s.add_argument("--dt", type=float)
    s.add_argument("-T", type=float)
    s.add_argument("--vtk-every", type=int, default=0)
    s.add_argument("--vtk-prefix")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("analyze", help="constants, lower bound and efficiency ratio")
    s.add_argument("--config", "--system", dest="config", required=True, nargs="+")
    s.add_argument("--h", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--band", type=float)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("optimize", help="grid and local search over a road family")
    s.add_argument("--spec", required=True)
    s.add_argument("--h", type=float)
    s.add_argument("--band", type=float)
    s.add_argument("-o", "--output")
    s.add_argument("--emit-best")
    s.set_defaults(func=cmd_optimize)
    return p


def _origin(exc):
    """(module, function) of the innermost roadfield frame that raised."""
    here = os.path.dirname(os.path.abspath(__file__))
    mod = op = None
    for frame in traceback.extract_tb(exc.__traceback__):
        if os.path.dirname(os.path.abspath(frame.filename)) == here:
            mod, op = os.path.splitext(os.path.basename(frame.filename))[0], frame.name
    return mod, op


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            os.environ["ROADFIELD_THREADS"] = str(max(args.threads, 1))
        return args.func(args)
    except (RoadFieldError, OSError) as exc:
        mod, op = _origin(exc)
        payload = {
            "error": type(exc).__name__,
            "command": args.command,
            "module": getattr(exc, "module", None) or mod,
            "operation": getattr(exc, "operation", None) or op,
            "item": getattr(exc, "item", None) or getattr(exc, "filename", None),
            "message": " ".join(str(exc).split()),
        }
        for extra in ("line", "key"):
            if getattr(exc, extra, None) is not None:
                payload[extra] = getattr(exc, extra)
        print(json.dumps(payload, default=str), file=sys.stderr)
        return 3 if isinstance(exc, CheckFailed) else 1


if __name__ == "__main__":
    sys.exit(main())
