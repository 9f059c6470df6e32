"""Batch front end: mesh generation, solves, eigenruns, oracle runs, and
convergence studies driven by a JSON config.

Heavy numerical imports happen inside the command handlers so that the
``--threads`` option can pin the BLAS thread pools before numpy loads.
Artifacts are CSV files with 17-significant-digit values and a
``summary.json`` run record; failures produce a one-line ``error.json``
and a mapped exit code (2 validation, 3 numerical).
"""

import argparse
import json
import logging
import os
import sys
import time

log = logging.getLogger("bse.cli")

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _setup_logging():
    level = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}.get(
        os.environ.get("BSE_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_error(outdir, exc):
    kind = getattr(exc, "kind", "internal-error")
    payload = {"kind": kind, "message": str(exc)}
    try:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "error.json"), "w", encoding="ascii") as fh:
            fh.write(json.dumps(payload) + "\n")
    except OSError:
        pass
    log.error("%s: %s", kind, exc)


def eoc(errors, hs):
    """Estimated orders of convergence from successive (error, h) pairs."""
    from .errors import InvalidArgumentError
    import math

    if len(errors) != len(hs) or len(errors) < 2:
        raise InvalidArgumentError("need equally many errors and mesh sizes, at least two")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise InvalidArgumentError("mesh sizes must be strictly decreasing")
    if any(e <= 0 for e in errors):
        raise InvalidArgumentError("errors must be strictly positive")
    return [math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i])
            for i in range(1, len(errors))]


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

TASKS = ("solve2", "solve4", "eig2", "eig4", "oracle", "convergence", "poincare")


def _load_config(path):
    from .errors import InvalidArgumentError, ParseError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise InvalidArgumentError("config must be a JSON object")
    task = raw.get("task")
    if task not in TASKS:
        raise InvalidArgumentError(f"task must be one of {TASKS}, got {task!r}")
    return raw


def _build_mesh(geo):
    from . import mesh as meshmod
    from .errors import InvalidArgumentError

    gtype = geo.get("type", "disk")
    if gtype == "disk":
        return meshmod.generate_disk(int(geo.get("n_boundary", 64)), int(geo.get("refine", 0)))
    if gtype == "square":
        return meshmod.generate_square(int(geo.get("n_per_side", 16)))
    if gtype == "file":
        if "path" not in geo:
            raise InvalidArgumentError("geometry.type 'file' requires geometry.path")
        return meshmod.read_mesh(geo["path"])
    raise InvalidArgumentError(f"unknown geometry type {gtype!r}")


def _build_params(raw):
    from .assembly import ProblemParams

    p = raw.get("params", {})
    return ProblemParams(K=float(p.get("K", 1.0)), L=float(p.get("L", 1.0)),
                         alpha=float(p.get("alpha", 1.0)), beta=float(p.get("beta", 1.0)),
                         gamma=float(p.get("gamma", 1.0)))


def _nodal_sources(cfg, mesh):
    from . import expr
    from .errors import InvalidArgumentError

    sources = cfg.get("sources", {})
    if "f" not in sources or "g" not in sources:
        raise InvalidArgumentError("solve tasks need sources.f and sources.g expressions")
    f_ast = expr.parse(str(sources["f"]))
    g_ast = expr.parse(str(sources["g"]))
    f = expr.eval_on_points(f_ast, mesh.vertices)
    g = expr.eval_on_points(g_ast, mesh.vertices[mesh.surface_nodes])
    return f, g, bool(sources.get("strict_compat", True))


# ---------------------------------------------------------------------------
# Task runners
# ---------------------------------------------------------------------------

def _task_solve(cfg, msh, params, outdir, fourth):
    import numpy as np

    from .solver import solve_fourth, solve_second

    f, g, strict = _nodal_sources(cfg, msh)
    tol = float(cfg.get("eig", {}).get("tol", 1e-12))
    t0 = time.perf_counter()
    solve = solve_fourth if fourth else solve_second
    report = solve(msh, params, f, g, tol=tol, strict=strict)
    elapsed = time.perf_counter() - t0

    u = report.field.u
    v = report.field.v
    _write_csv(os.path.join(outdir, "solution.csv"), ("node", "x", "y", "u"),
               ((str(i), _fmt(x), _fmt(y), _fmt(ui))
                for i, ((x, y), ui) in enumerate(zip(msh.vertices, u))))
    arclen = msh.surface_arclength()
    _write_csv(os.path.join(outdir, "surface.csv"), ("s", "v"),
               ((_fmt(s), _fmt(vi)) for s, vi in zip(arclen, v)))
    summary = {
        "defect_compat_pre": report.defect_compat,
        "defect_compat_post": report.defect_compat_post,
        "defect_mean": report.defect_mean,
        "residual": report.residual,
        "iterations": report.iterations,
        "norm_u_max": float(np.max(np.abs(u))),
        "norm_v_max": float(np.max(np.abs(v))),
        "seconds": elapsed,
    }
    if report.intermediate is not None:
        summary["intermediate_norm_max"] = float(
            max(np.max(np.abs(report.intermediate.u)), np.max(np.abs(report.intermediate.v))))
    return summary


def _task_eig(cfg, msh, params, outdir, fourth):
    from .eigen import eig_fourth, eig_second

    k = int(cfg.get("eig", {}).get("k", 8))
    t0 = time.perf_counter()
    res = eig_fourth(msh, params, k) if fourth else eig_second(msh, params, k)
    elapsed = time.perf_counter() - t0
    _write_csv(os.path.join(outdir, "eigenvalues.csv"),
               ("index", "lambda", "residual", "multiplicity"),
               ((str(i), _fmt(lam), _fmt(r), str(int(m)))
                for i, (lam, r, m) in enumerate(
                    zip(res.eigenvalues, res.residuals, res.multiplicities))))
    return {
        "k": k,
        "lambda_min": float(res.eigenvalues[0]),
        "lambda_max": float(res.eigenvalues[-1]),
        "max_residual": float(res.residuals.max()),
        "gram_defect": res.gram_defect,
        "seconds": elapsed,
    }


def _task_oracle(cfg, params, outdir):
    from .oracle import disk_eigs_second

    ocfg = cfg.get("oracle", {})
    m_max = int(ocfg.get("m_max", 8))
    lam_max = float(ocfg.get("lambda_max", 60.0))
    roots = disk_eigs_second(params.K, params.alpha, params.gamma, m_max, lam_max)
    _write_csv(os.path.join(outdir, "oracle_roots.csv"), ("m", "lambda", "multiplicity"),
               ((str(r.m), _fmt(r.lam), str(r.multiplicity)) for r in roots))
    return {"n_roots": len(roots), "m_max": m_max, "lambda_max": lam_max}


def _task_convergence(cfg, params, outdir):
    import numpy as np

    from . import expr
    from .assembly import CoupledField, assemble_basic
    from .errors import InvalidArgumentError
    from .mesh import generate_disk, max_edge_length
    from .oracle import manufactured_second
    from .solver import inner_h0, norm_ka, solve_second

    geo = cfg.get("geometry", {})
    if geo.get("type", "disk") != "disk":
        raise InvalidArgumentError("convergence task runs on the disk geometry")
    n_boundary = int(geo.get("n_boundary", 16))
    max_refine = int(geo.get("refine", 3))
    manufactured = manufactured_second(params.K, params.alpha, params.beta)
    u_ast = expr.parse(manufactured.u_expr)

    hs, e_l2, e_en = [], [], []
    timings = []
    for level in range(max_refine + 1):
        t0 = time.perf_counter()
        msh = generate_disk(n_boundary, level)
        forms = assemble_basic(msh)
        f = np.full(msh.n_vertices, manufactured.f_value())
        g = np.full(msh.n_surface, manufactured.g_value())
        report = solve_second(msh, params, f, g, strict=False)
        u_exact = expr.eval_on_points(u_ast, msh.vertices)
        v_exact = np.full(msh.n_surface, manufactured.v_value)
        diff = CoupledField(report.field.u - u_exact, report.field.v - v_exact)
        hs.append(max_edge_length(msh))
        e_l2.append(np.sqrt(max(inner_h0(forms, diff, diff), 0.0)))
        e_en.append(norm_ka(forms, params, diff))
        timings.append(time.perf_counter() - t0)

    eoc_l2 = eoc(e_l2, hs)
    eoc_en = eoc(e_en, hs)
    rows = []
    for i in range(len(hs)):
        rows.append((_fmt(hs[i]), _fmt(e_l2[i]), _fmt(e_en[i]),
                     "" if i == 0 else _fmt(eoc_l2[i - 1]),
                     "" if i == 0 else _fmt(eoc_en[i - 1])))
    _write_csv(os.path.join(outdir, "convergence.csv"),
               ("h", "error_L2", "error_energy", "eoc_L2", "eoc_energy"), rows)
    return {
        "levels": max_refine + 1,
        "eoc_L2": eoc_l2,
        "eoc_energy": eoc_en,
        "errors_L2": [float(e) for e in e_l2],
        "errors_energy": [float(e) for e in e_en],
        "seconds_per_level": timings,
    }


def _task_poincare(msh, params):
    from .eigen import poincare_constant

    t0 = time.perf_counter()
    c = poincare_constant(msh, params)
    return {"poincare_constant": c, "seconds": time.perf_counter() - t0}


def run(config_path, outdir=None, seed=None) -> int:
    """Execute one config; returns the process exit code."""
    from .errors import BseError

    out = outdir or "bse-out"
    try:
        cfg = _load_config(config_path)
        out = outdir or cfg.get("output", {}).get("dir", "bse-out")
        os.makedirs(out, exist_ok=True)
        task = cfg["task"]
        params = _build_params(cfg)
        summary = {
            "task": task,
            "params": {"K": params.K, "L": params.L, "alpha": params.alpha,
                       "beta": params.beta, "gamma": params.gamma},
            "seed": seed,
        }
        if task in ("solve2", "solve4", "eig2", "eig4", "poincare"):
            msh = _build_mesh(cfg.get("geometry", {}))
            from .mesh import measures

            mm = measures(msh)
            summary["geometry"] = {"n_vertices": msh.n_vertices, "n_surface": msh.n_surface,
                                   "area": mm.area, "perimeter": mm.perimeter}
            params.check_nondegenerate(mm)
        if task == "solve2":
            summary.update(_task_solve(cfg, msh, params, out, fourth=False))
        elif task == "solve4":
            summary.update(_task_solve(cfg, msh, params, out, fourth=True))
        elif task == "eig2":
            summary.update(_task_eig(cfg, msh, params, out, fourth=False))
        elif task == "eig4":
            summary.update(_task_eig(cfg, msh, params, out, fourth=True))
        elif task == "oracle":
            summary.update(_task_oracle(cfg, params, out))
        elif task == "convergence":
            summary.update(_task_convergence(cfg, params, out))
        elif task == "poincare":
            summary.update(_task_poincare(msh, params))
        from . import _kernels

        summary["kernel_backend"] = _kernels.kernel_backend()
        with open(os.path.join(out, "summary.json"), "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return 0
    except BseError as exc:
        _write_error(out, exc)
        return exc.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bse",
                                     description="coupled bulk-surface elliptic toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a JSON run config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)

    p_mesh = sub.add_parser("mesh", help="generate a mesh file")
    p_mesh.add_argument("--geometry", choices=("disk", "square"), default="disk")
    p_mesh.add_argument("--n", type=int, required=True,
                        help="boundary segments (disk) or cells per side (square)")
    p_mesh.add_argument("--refine", type=int, default=0)
    p_mesh.add_argument("--out", required=True)

    p_oracle = sub.add_parser("oracle", help="disk dispersion roots to CSV")
    p_oracle.add_argument("--K", type=float, default=1.0)
    p_oracle.add_argument("--alpha", type=float, default=1.0)
    p_oracle.add_argument("--gamma", type=float, default=1.0)
    p_oracle.add_argument("--mmax", type=int, default=8)
    p_oracle.add_argument("--lmax", type=float, default=60.0)
    p_oracle.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(args.threads)
    _setup_logging()

    from .errors import BseError

    if args.command == "run":
        return run(args.config, outdir=args.out, seed=args.seed)
    if args.command == "mesh":
        from . import mesh as meshmod

        try:
            if args.geometry == "disk":
                msh = meshmod.generate_disk(args.n, args.refine)
            else:
                msh = meshmod.generate_square(args.n)
            meshmod.write_mesh(msh, args.out)
        except BseError as exc:
            log.error("%s: %s", exc.kind, exc)
            return exc.exit_code
        return 0
    if args.command == "oracle":
        from .oracle import disk_eigs_second

        try:
            roots = disk_eigs_second(args.K, args.alpha, args.gamma, args.mmax, args.lmax)
        except BseError as exc:
            log.error("%s: %s", exc.kind, exc)
            return exc.exit_code
        _write_csv(args.out, ("m", "lambda", "multiplicity"),
                   ((str(r.m), _fmt(r.lam), str(r.multiplicity)) for r in roots))
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
