"""Command-line entry point: ``stokespump --mode solve|optimize|check-gradient|sample-field``.

Exit codes: 0 ok, 2 configuration or I/O error, 3 solver or geometry failure,
4 optimizer did not converge.
"""

import argparse
import logging
import os
import sys

import numpy as np

from .functionals import evaluate
from .geometry import WALLS, GeometryError, WallShapeParams, build_channel, eval_wall
from .io import ConfigError, RunLock, build_config, load_shape, save_shape, write_table
from .optimizer import (
    LOG_COLUMNS,
    OptimizerConfig,
    lower_wall_frozen_mask,
    random_top_wall,
    solve_constrained,
    symmetric_bump,
)
from .periodic_bie import SolverConfig, SolverError, assemble_system, eval_field, solve_forward
from .shape_calculus import finite_difference_gradient, full_gradient

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NOT_CONVERGED = 0, 2, 3, 4

log = logging.getLogger("stokespump")


def initial_shape(cfg):
    if cfg.shape is not None:
        try:
            return load_shape(cfg.shape)
        except OSError as exc:
            raise ConfigError(f"cannot read shape file: {exc}") from exc
    if cfg.init == "flat":
        return WallShapeParams.flat(cfg.N, cfg.top, cfg.bottom, cfg.L)
    if cfg.init == "random-top":
        rng = np.random.default_rng(cfg.seed)
        return random_top_wall(cfg.N, rng, cfg.amplitude, cfg.top, cfg.bottom, cfg.L)
    return symmetric_bump(cfg.N, cfg.amplitude, cfg.top, cfg.bottom, cfg.L)


def solver_config(cfg):
    return SolverConfig(M=cfg.M, K=cfg.K, Mp=cfg.Mp, proxy_scale=cfg.proxy_scale, mu=cfg.mu, c=cfg.c)


def _functional_rows(fv, extra=()):
    return [("J_PL", fv.J_PL), ("Q", fv.Q), ("V", fv.V), ("C_Q", fv.C_Q), ("C_V", fv.C_V), *extra]


def run_solve(cfg, params, out):
    scfg = solver_config(cfg)
    geom = build_channel(params, scfg.M, scfg.Mp)
    fwd = solve_forward(geom, scfg)
    fv = evaluate(fwd, geom, cfg.Q0, cfg.V0)
    write_table(os.path.join(out, "functionals.tsv"), ("name", "value"), _functional_rows(fv, [("residual", fwd.residual)]))
    rows = []
    for k, wall in enumerate(geom.walls):
        for j in range(geom.M):
            rows.append((
                WALLS[k], j, wall.t[j], *wall.x[j], *wall.tau[j], *wall.n[j], wall.kappa[j],
                *fwd.wall_traction[k, j], fwd.wall_pressure[k, j], fwd.wall_fs[k, j],
            ))
    header = ("wall", "j", "t", "x1", "x2", "tau1", "tau2", "n1", "n2", "kappa", "f1", "f2", "p", "f_s")
    write_table(os.path.join(out, "wall_fields.tsv"), header, rows)
    log.info("J_PL=%.10g Q=%.10g V=%.10g", fv.J_PL, fv.Q, fv.V)
    return EXIT_OK


def run_optimize(cfg, params, out):
    scfg = solver_config(cfg)
    opt = OptimizerConfig(
        zeta_star=cfg.zeta_star,
        sigma0=(cfg.sigma1, cfg.sigma2),
        max_outer=cfg.max_outer,
        max_inner=cfg.max_inner,
        gtol=cfg.gtol,
        warm_start=cfg.warm_start,
        max_step=cfg.max_step,
        lambda0=cfg.lambda0,
    )
    V0 = cfg.V0
    if V0 is None:
        V0 = build_channel(params, scfg.M, scfg.Mp).volume
    mask = lower_wall_frozen_mask(params.N) if cfg.freeze_lower else None
    res = solve_constrained(params, cfg.Q0, V0, scfg, opt, mask)
    st = res.state
    write_table(os.path.join(out, "convergence.tsv"), LOG_COLUMNS, st.log)
    write_table(
        os.path.join(out, "transcript.tsv"),
        ("m", "branch", "lambda1", "lambda2", "sigma1", "sigma2", "zeta1", "zeta2"),
        st.transcript,
    )
    write_table(
        os.path.join(out, "shape_history.tsv"),
        ("m", "J_PL", "C_Q", "C_V", "grad_inf", "inner") + tuple(f"xi{i}" for i in range(params.size)),
        [(m + 1, J, cq, cv, gn, it, *xi) for m, (xi, J, cq, cv, gn, it) in enumerate(st.history)],
    )
    save_shape(res.params, os.path.join(out, "final_shape.txt"))
    extra = [
        ("Q0", cfg.Q0), ("V0", V0), ("converged", res.converged), ("outer", st.m),
        ("forward_solves", res.forward_solves), ("adjoint_solves", res.adjoint_solves),
    ]
    write_table(os.path.join(out, "functionals.tsv"), ("name", "value"), _functional_rows(res.values, extra))
    log.info("converged=%s J_PL=%.10g solves=%d", res.converged, res.values.J_PL, res.solves)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def parameter_names(N):
    names = [f"xi1+_{k}" for k in range(1, 2 * N + 1)]
    names += [f"xi1-_{k}" for k in range(1, 2 * N + 1)]
    names += ["xi2+_0"]
    names += [f"xi2+_{k}" for k in range(1, 2 * N + 1)]
    names += [f"xi2-_{k}" for k in range(1, 2 * N + 1)]
    return names


def gradient_errors(an, fd):
    """Error of each analytic entry relative to the largest FD entry of that functional."""
    scale = np.max(np.abs(fd), axis=0)
    return np.abs(an - fd) / np.where(scale > 0, scale, 1.0)


def run_check_gradient(cfg, params, out):
    scfg = solver_config(cfg)
    g = full_gradient(params, scfg, cfg.Q0, cfg.V0)
    an = np.column_stack([g.grad.dJ, g.grad.dCQ, g.grad.dCV])
    fd = finite_difference_gradient(params, scfg, base=cfg.fd_step)
    err = gradient_errors(an, fd)
    rows = []
    for k, name in enumerate(parameter_names(params.N)):
        for f, fname in enumerate(("J_PL", "Q", "V")):
            rows.append((k, name, fname, an[k, f], fd[k, f], err[k, f]))
    write_table(os.path.join(out, "gradient_check.tsv"), ("index", "parameter", "functional", "analytic", "fd", "rel_err"), rows)
    worst = float(err.max())
    log.info("max relative gradient error %.3e", worst)
    write_table(os.path.join(out, "functionals.tsv"), ("name", "value"), _functional_rows(g.values, [("max_rel_err", worst)]))
    return EXIT_OK


def run_sample_field(cfg, params, out):
    scfg = solver_config(cfg)
    geom = build_channel(params, scfg.M, scfg.Mp)
    system = assemble_system(geom, scfg)
    fwd = solve_forward(system)
    walls = np.concatenate([w.x for w in geom.walls])
    x1 = np.linspace(0.0, geom.L, cfg.nx, endpoint=False) + 0.5 * geom.L / cfg.nx
    x2 = np.linspace(walls[:, 1].min(), walls[:, 1].max(), cfg.ny)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.column_stack([X1.ravel(), X2.ravel()])
    inside = inside_channel(geom, pts)
    u = np.full((len(pts), 2), np.nan)
    p = np.full(len(pts), np.nan)
    near = np.zeros(len(pts), bool)
    if inside.any():
        u[inside], p[inside], near[inside] = eval_field(fwd, pts[inside])
    status = np.where(~inside, "outside", np.where(near, "near-wall", "ok"))
    rows = [(*pts[i], *u[i], p[i], status[i]) for i in range(len(pts))]
    write_table(os.path.join(out, "field.tsv"), ("x1", "x2", "u1", "u2", "p", "status"), rows)
    t = np.linspace(0.0, 2.0 * np.pi, 4 * geom.M + 1)
    poly = [(w, ti, *eval_wall(params, w, ti)) for w in WALLS for ti in t]
    write_table(os.path.join(out, "walls.tsv"), ("wall", "t", "x1", "x2"), poly)
    return EXIT_OK


def inside_channel(geom, pts):
    """Points strictly between the walls, by the vertical ray test at each ``x1``."""
    t = np.linspace(0.0, 2.0 * np.pi, 16 * geom.M + 1)
    inside = np.zeros(len(pts), bool)
    for shift in (-geom.L, 0.0, geom.L):
        crossings = np.zeros(len(pts), int)
        for w in WALLS:
            poly = eval_wall(geom.params, w, t) + [shift, 0.0]
            a, b = poly[:-1], poly[1:]
            lo, hi = np.minimum(a[:, 0], b[:, 0]), np.maximum(a[:, 0], b[:, 0])
            spans = (pts[:, None, 0] >= lo) & (pts[:, None, 0] < hi)
            frac = (pts[:, None, 0] - a[:, 0]) / np.where(b[:, 0] != a[:, 0], b[:, 0] - a[:, 0], 1.0)
            y = a[:, 1] + frac * (b[:, 1] - a[:, 1])
            crossings += np.sum(spans & (y > pts[:, None, 1]), axis=1)
        inside |= crossings % 2 == 1
    return inside


RUNNERS = {
    "solve": run_solve,
    "optimize": run_optimize,
    "check-gradient": run_check_gradient,
    "sample-field": run_sample_field,
}


def parse_args(argv=None):
    ap = argparse.ArgumentParser(prog="stokespump", description="Peristaltic pump shape optimization.")
    ap.add_argument("--config", help="JSON file with run settings")
    ap.add_argument("--mode", choices=sorted(RUNNERS))
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="RNG seed for randomized initial shapes")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args.config, args.overrides, mode=args.mode, out=args.out, seed=args.seed)
        os.makedirs(cfg.out, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise ConfigError(f"output directory {cfg.out} is not writable")
        params = initial_shape(cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with RunLock(cfg.out):
            with open(os.path.join(cfg.out, "config.json"), "w") as fh:
                fh.write(cfg.to_json() + "\n")
            save_shape(params, os.path.join(cfg.out, "initial_shape.txt"))
            return RUNNERS[cfg.mode](cfg, params, cfg.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, GeometryError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
