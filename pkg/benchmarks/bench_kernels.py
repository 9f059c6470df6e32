"""Time the hot kernels under both backends (numba jit vs numpy fallback).

Usage: python benchmarks/bench_kernels.py

Spawns one worker subprocess per backend (the backend is fixed at import
time by BSE_NUMBA), collects best-of-N timings, and prints a comparison
table.  Warmup calls exclude jit compilation from the timed sections.
"""

import json
import os
import subprocess
import sys
import time


def _bench(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def worker():
    import numpy as np

    from bse import _kernels, assembly, linalg, mesh

    results = {"backend": _kernels.kernel_backend()}

    msh = mesh.generate_disk(64, 2)
    vertices = np.ascontiguousarray(msh.vertices)
    triangles = np.ascontiguousarray(msh.triangles)
    _kernels.tri_entries(vertices, triangles)  # warmup / jit
    results["tri_assembly"] = _bench(lambda: _kernels.tri_entries(vertices, triangles))

    forms = assembly.assemble_basic(msh)
    a = assembly.assemble_coupled(forms, 1.0, 1.0)
    x = np.linspace(0.0, 1.0, a.n)
    a.apply(x)  # warmup
    results["csr_matvec_x200"] = _bench(lambda: [a.apply(x) for _ in range(200)])

    cs = assembly.build_constraints(forms, 1.0, 1.0, 1.0)
    f = np.full(msh.n_vertices, -4.0)
    g = np.full(msh.n_surface, 4.0)
    f, g = assembly.project_compatible(forms, f, g, 1.0)
    b = assembly.assemble_load(forms, f, g)
    linalg.solve_constrained(a, b, cs)  # warmup
    results["pcg_solve"] = _bench(lambda: linalg.solve_constrained(a, b, cs), repeat=3)

    _kernels.bessel_j_raw(3, 25.0)  # warmup
    xs = np.linspace(0.1, 60.0, 2000)

    def bessel_scan():
        for m in range(9):
            for v in xs:
                _kernels.bessel_j_raw(m, float(v))

    results["bessel_scan"] = _bench(bessel_scan, repeat=3)
    print(json.dumps(results))


def main():
    rows = {}
    for flag, label in (("1", "numba"), ("0", "numpy")):
        env = dict(os.environ, BSE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--worker"],
                              capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            raise SystemExit(1)
        data = json.loads(proc.stdout.strip().splitlines()[-1])
        assert data.pop("backend") == label
        rows[label] = data

    keys = list(rows["numba"])
    width = max(len(k) for k in keys)
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for key in keys:
        nb, np_ = rows["numba"][key], rows["numpy"][key]
        print(f"{key:<{width}}  {nb * 1e3:>8.2f}ms  {np_ * 1e3:>8.2f}ms  {np_ / nb:>7.1f}x")


if __name__ == "__main__":
    if "--worker" in sys.argv:
        worker()
    else:
        main()
