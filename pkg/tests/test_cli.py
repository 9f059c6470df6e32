import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bse import cli
from bse.errors import InvalidArgumentError


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_eoc_basic():
    assert cli.eoc([4.0, 1.0], [2.0, 1.0]) == [pytest.approx(2.0)]
    assert cli.eoc([2.0, 1.0], [2.0, 1.0]) == [pytest.approx(1.0)]
    assert cli.eoc([1.0, 1.0], [2.0, 1.0]) == [pytest.approx(0.0)]
    assert len(cli.eoc([8.0, 2.0, 0.5], [4.0, 2.0, 1.0])) == 2


def test_eoc_validation():
    with pytest.raises(InvalidArgumentError):
        cli.eoc([1.0], [1.0])
    with pytest.raises(InvalidArgumentError):
        cli.eoc([1.0, 2.0], [1.0, 2.0])  # increasing h
    with pytest.raises(InvalidArgumentError):
        cli.eoc([1.0, 0.0], [2.0, 1.0])  # nonpositive error


def test_run_eig2(tmp_path):
    cfg = write_config(tmp_path, "eig.json", {
        "geometry": {"type": "disk", "n_boundary": 32, "refine": 0},
        "params": {"K": 1.0, "alpha": 0.0, "gamma": 1.0},
        "task": "eig2",
        "eig": {"k": 4},
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    header, rows = read_csv(tmp_path / "out" / "eigenvalues.csv")
    assert header == ["index", "lambda", "residual", "multiplicity"]
    assert len(rows) == 4
    lams = [float(r[1]) for r in rows]
    assert lams == sorted(lams)
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["task"] == "eig2"
    assert summary["gram_defect"] <= 1e-8


def test_run_solve2_and_artifacts(tmp_path):
    cfg = write_config(tmp_path, "solve.json", {
        "geometry": {"type": "disk", "n_boundary": 16, "refine": 1},
        "params": {"K": 1.0, "alpha": 2.0, "beta": 1.0},
        "task": "solve2",
        "sources": {"f": "-4", "g": "4", "strict_compat": False},
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    header, rows = read_csv(tmp_path / "out" / "solution.csv")
    assert header == ["node", "x", "y", "u"]
    from bse import mesh
    assert len(rows) == mesh.generate_disk(16, 1).n_vertices
    header, surf = read_csv(tmp_path / "out" / "surface.csv")
    assert header == ["s", "v"]
    assert len(surf) == 32
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert abs(summary["defect_compat_post"]) < abs(summary["defect_compat_pre"])
    assert summary["defect_mean"] <= 1e-10


def test_run_solve4_reports_intermediate(tmp_path):
    cfg = write_config(tmp_path, "solve4.json", {
        "geometry": {"type": "disk", "n_boundary": 16, "refine": 0},
        "params": {"K": 1.0, "L": 1.0, "alpha": 1.0, "beta": 1.0},
        "task": "solve4",
        "sources": {"f": "x", "g": "0", "strict_compat": False},
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "intermediate_norm_max" in summary


def test_strict_incompatible_exits_2(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, "bad.json", {
        "geometry": {"type": "disk", "n_boundary": 16, "refine": 0},
        "params": {"K": 1.0, "alpha": 2.0, "beta": 1.0},
        "task": "solve2",
        "sources": {"f": "1", "g": "1", "strict_compat": True},
        "output": {"dir": str(out)},
    })
    assert cli.run(cfg) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["kind"] == "incompatible-source"


def test_invalid_config_exits_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert cli.run(str(path)) == 2
    cfg = write_config(tmp_path, "task.json", {"task": "fly"})
    assert cli.run(cfg) == 2


def test_degenerate_params_exit_2(tmp_path):
    from bse import mesh
    mm = mesh.measures(mesh.generate_disk(64, 0))
    out = tmp_path / "out"
    cfg = write_config(tmp_path, "degen.json", {
        "geometry": {"type": "disk", "n_boundary": 64, "refine": 0},
        # beta chosen so alpha*beta*|Omega_h| + |Gamma_h| = 0 exactly
        "params": {"K": 1.0, "alpha": 1.0, "beta": -mm.perimeter / mm.area, "gamma": 1.0},
        "task": "eig2",
        "eig": {"k": 2},
        "output": {"dir": str(out)},
    })
    code = cli.run(cfg)
    assert code == 2
    assert json.loads((out / "error.json").read_text())["kind"] == "degenerate-constraint"


def test_convergence_task(tmp_path):
    cfg = write_config(tmp_path, "conv.json", {
        "geometry": {"type": "disk", "n_boundary": 16, "refine": 2},
        "params": {"K": 1.0, "alpha": 2.0, "beta": 1.0},
        "task": "convergence",
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    header, rows = read_csv(tmp_path / "out" / "convergence.csv")
    assert header == ["h", "error_L2", "error_energy", "eoc_L2", "eoc_energy"]
    assert len(rows) == 3
    assert rows[0][3] == ""
    eoc_l2 = float(rows[-1][3])
    assert 1.8 <= eoc_l2 <= 2.2


def test_poincare_task(tmp_path):
    cfg = write_config(tmp_path, "poin.json", {
        "geometry": {"type": "square", "n_per_side": 4},
        "params": {"K": 1.0, "alpha": 1.0, "beta": 1.0},
        "task": "poincare",
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["poincare_constant"] > 0


def test_oracle_task_and_geometry_file(tmp_path):
    cfg = write_config(tmp_path, "oracle.json", {
        "params": {"K": 1.0, "alpha": 1.0, "gamma": 1.0},
        "task": "oracle",
        "oracle": {"m_max": 3, "lambda_max": 12.0},
        "output": {"dir": str(tmp_path / "out")},
    })
    assert cli.run(cfg) == 0
    header, rows = read_csv(tmp_path / "out" / "oracle_roots.csv")
    assert header == ["m", "lambda", "multiplicity"]
    assert rows

    # mesh file round trip through the CLI geometry loader
    from bse import mesh
    msh = mesh.generate_square(3)
    mesh.write_mesh(msh, tmp_path / "m.txt")
    cfg2 = write_config(tmp_path, "file.json", {
        "geometry": {"type": "file", "path": str(tmp_path / "m.txt")},
        "params": {"K": 1.0, "alpha": 1.0, "beta": 1.0},
        "task": "eig2",
        "eig": {"k": 2},
        "output": {"dir": str(tmp_path / "out2")},
    })
    assert cli.run(cfg2) == 0


def test_main_mesh_and_oracle_subcommands(tmp_path):
    out = tmp_path / "mesh.txt"
    assert cli.main(["mesh", "--geometry", "disk", "--n", "16", "--refine", "1",
                     "--out", str(out)]) == 0
    from bse import mesh
    m = mesh.read_mesh(out)
    assert m.n_surface == 32
    roots = tmp_path / "roots.csv"
    assert cli.main(["oracle", "--K", "1", "--alpha", "1", "--gamma", "1",
                     "--mmax", "2", "--lmax", "8", "--out", str(roots)]) == 0
    header, rows = read_csv(roots)
    assert header == ["m", "lambda", "multiplicity"]
    assert cli.main(["mesh", "--geometry", "disk", "--n", "4", "--out", str(out)]) == 2


def test_repeated_runs_byte_identical(tmp_path):
    cfg_body = {
        "geometry": {"type": "disk", "n_boundary": 24, "refine": 0},
        "params": {"K": 1.0, "alpha": 1.0, "gamma": 1.0},
        "task": "eig2",
        "eig": {"k": 4},
    }
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        cfg = write_config(tmp_path, f"{tag}.json", cfg_body)
        proc = subprocess.run(
            [sys.executable, "-m", "bse.cli", "run", cfg, "--out", str(out),
             "--threads", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((out / "eigenvalues.csv").read_bytes())
    assert outputs[0] == outputs[1]
