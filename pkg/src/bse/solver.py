"""Solution operators for the second- and fourth-order coupled systems.

The second-order solve maps a compatible source pair onto the unique
mean-constrained weak solution.  The fourth-order solve is the literal
composition of two second-order solves with swapped coupling constants;
the intermediate pair is retained on the report.  The module also exposes
the energy, product-L2, and solution-induced dual inner products.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np

from .assembly import (
    BasicForms,
    CoupledField,
    ProblemParams,
    assemble_basic,
    assemble_coupled,
    assemble_load,
    build_constraints,
    compatibility_defect,
    compatibility_scale,
    project_compatible,
)
from .errors import IncompatibleSourceError, InvalidArgumentError
from .linalg import DEFAULT_TOL, solve_constrained
from .mesh import Mesh, measures

log = logging.getLogger(__name__)

STRICT_COMPAT_REL_TOL = 1e-10


@dataclass
class SolveReport:
    """Solution field plus solver diagnostics.

    ``defect_compat`` is the compatibility defect of the sources before any
    projection, ``defect_compat_post`` after; ``defect_mean`` is |c.x| of
    the returned solution.  For fourth-order solves ``intermediate`` holds
    the auxiliary pair produced by the first stage.
    """

    field: CoupledField
    iterations: int
    residual: float
    defect_compat: float
    defect_compat_post: float
    defect_mean: float
    intermediate: CoupledField | None = None


@functools.lru_cache(maxsize=32)
def coupled_matrix(forms: BasicForms, k_like: float, alpha_like: float, gamma: float):
    return assemble_coupled(forms, k_like, alpha_like, gamma)


@functools.lru_cache(maxsize=32)
def constraint_set(forms: BasicForms, k_like: float, alpha_like: float, mean_like: float):
    return build_constraints(forms, k_like, alpha_like, mean_like)


def _check_sources(forms, f, g, alpha_like, strict, auto_project):
    """Compatibility gate: strict mode rejects, otherwise shift g."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    defect = compatibility_defect(forms, f, g, alpha_like)
    scale = compatibility_scale(forms, f, g, alpha_like)
    rel = abs(defect) / scale if scale > 0 else 0.0
    if strict:
        if rel > STRICT_COMPAT_REL_TOL:
            raise IncompatibleSourceError(
                f"source pair violates the compatibility condition: relative defect "
                f"{rel:.3e} > {STRICT_COMPAT_REL_TOL:.1e}; project the sources or "
                "disable strict mode")
        return f, g, defect, defect
    if auto_project:
        f, g = project_compatible(forms, f, g, alpha_like)
        post = compatibility_defect(forms, f, g, alpha_like)
        return f, g, defect, post
    return f, g, defect, defect


def _solve_stage(forms, k_like, alpha_like, mean_like, gamma, f, g, tol, strict):
    f, g, defect_pre, defect_post = _check_sources(forms, f, g, alpha_like, strict,
                                                   auto_project=not strict)
    a = coupled_matrix(forms, k_like, alpha_like, gamma)
    cs = constraint_set(forms, k_like, alpha_like, mean_like)
    b = assemble_load(forms, f, g)
    sol = solve_constrained(a, b, cs, tol=tol)
    defect_mean = abs(float(cs.mean_vector @ sol.x))
    return sol, defect_pre, defect_post, defect_mean


def solve_second(mesh: Mesh, params: ProblemParams, f, g, tol=DEFAULT_TOL,
                 strict=True) -> SolveReport:
    """Second-order solve: Robin scale K, coupling alpha, mean constraint beta.

    Nodal sources (f, g) must satisfy the alpha-compatibility condition; in
    strict mode an incompatible pair raises, otherwise g is shifted by a
    constant first.
    """
    forms = assemble_basic(mesh)
    params.check_nondegenerate(measures(mesh))
    sol, pre, post, dmean = _solve_stage(forms, params.K, params.alpha, params.beta,
                                         params.gamma, f, g, tol, strict)
    return SolveReport(field=CoupledField.from_vector(mesh, sol.x),
                       iterations=sol.iterations, residual=sol.residual,
                       defect_compat=pre, defect_compat_post=post, defect_mean=dmean)


def solve_fourth(mesh: Mesh, params: ProblemParams, f, g, tol=DEFAULT_TOL,
                 strict=True) -> SolveReport:
    """Fourth-order solve as a composition of two second-order solves.

    Stage 1 solves with (L, beta) coupling and alpha-mean constraint; its
    output is beta-compatible by construction and feeds stage 2, which
    solves with (K, alpha) coupling and beta-mean constraint.
    """
    forms = assemble_basic(mesh)
    params.check_nondegenerate(measures(mesh))
    try:
        sol1, pre, post, dmean1 = _solve_stage(forms, params.L, params.beta, params.alpha,
                                               params.gamma, f, g, tol, strict)
    except Exception as exc:
        exc.args = (f"stage 1 (Robin L, coupling beta): {exc.args[0]}",) if exc.args else exc.args
        raise
    mu = CoupledField.from_vector(mesh, sol1.x)
    try:
        sol2, _, _, dmean2 = _solve_stage(forms, params.K, params.alpha, params.beta,
                                          params.gamma, mu.u, mu.v, tol, strict=True)
    except Exception as exc:
        exc.args = (f"stage 2 (Robin K, coupling alpha): {exc.args[0]}",) if exc.args else exc.args
        raise
    return SolveReport(field=CoupledField.from_vector(mesh, sol2.x),
                       iterations=sol1.iterations + sol2.iterations,
                       residual=max(sol1.residual, sol2.residual),
                       defect_compat=pre, defect_compat_post=post,
                       defect_mean=max(dmean1, dmean2), intermediate=mu)


# ---------------------------------------------------------------------------
# Inner products and norms
# ---------------------------------------------------------------------------

def inner_ka(forms: BasicForms, params: ProblemParams, a: CoupledField,
             b: CoupledField) -> float:
    """Coupled energy form with Robin scale K, coupling alpha, weight gamma."""
    a.check_mesh(forms.mesh)
    b.check_mesh(forms.mesh)
    mat = coupled_matrix(forms, params.K, params.alpha, params.gamma)
    return float(a.to_vector() @ mat.apply(b.to_vector()))


def norm_ka(forms: BasicForms, params: ProblemParams, a: CoupledField) -> float:
    """Energy seminorm; quadratic-form noise below zero is clamped."""
    q = inner_ka(forms, params, a, a)
    return float(np.sqrt(max(q, 0.0)))


def inner_h0(forms: BasicForms, a: CoupledField, b: CoupledField) -> float:
    """Product-L2 inner product via the consistent block mass matrix."""
    a.check_mesh(forms.mesh)
    b.check_mesh(forms.mesh)
    return float(a.to_vector() @ forms.block_mass.apply(b.to_vector()))


def norm_h0(forms: BasicForms, a: CoupledField) -> float:
    return float(np.sqrt(max(inner_h0(forms, a, a), 0.0)))


def inner_dual(mesh: Mesh, params: ProblemParams, fg1, fg2, tol=DEFAULT_TOL) -> float:
    """Inner product on beta-compatible source pairs, induced by the solves
    with (L, beta) coupling and alpha-mean constraint: the energy pairing of
    the two solutions."""
    forms = assemble_basic(mesh)
    params.check_nondegenerate(measures(mesh))
    s = []
    for f, g in (fg1, fg2):
        sol, _, _, _ = _solve_stage(forms, params.L, params.beta, params.alpha,
                                    params.gamma, f, g, tol, strict=True)
        s.append(sol.x)
    mat = coupled_matrix(forms, params.L, params.beta, params.gamma)
    return float(s[0] @ mat.apply(s[1]))


def rescale_omega(field: CoupledField, omega: float) -> CoupledField:
    """Entrywise scaling that restates a solve with bulk diffusivity omega
    in the normalized form (the surface weight becomes gamma/omega)."""
    if omega <= 0:
        raise InvalidArgumentError(f"omega must be > 0, got {omega}")
    return CoupledField(omega * field.u, omega * field.v)
