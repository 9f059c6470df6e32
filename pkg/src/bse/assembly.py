"""Discrete forms for the coupled bulk-surface system.

Assembles P1 stiffness/mass on the triangulated bulk and on the closed
boundary polyline, the Robin-coupled block matrix, the mean-constraint
functional, load vectors, and the compatibility handling for source pairs.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateConstraintError, DimensionMismatchError, InvalidArgumentError
from .linalg import ConstraintSet, CsrMatrix
from .mesh import Mesh, measures

log = logging.getLogger(__name__)

MEAN_DEGENERACY_REL_TOL = 1e-12


def sigma(k_like: float) -> float:
    """Robin coupling weight: 1/K for K > 0, 0 in the Dirichlet limit K = 0."""
    if k_like < 0:
        raise InvalidArgumentError(f"Robin parameter must be >= 0, got {k_like}")
    return 1.0 / k_like if k_like > 0 else 0.0


@dataclass(frozen=True)
class ProblemParams:
    """Scalar data of the coupled system.

    K and L are the Robin parameters of the two coupling conditions, alpha
    and beta the coupling strengths, gamma > 0 scales the surface stiffness.
    The solvability condition alpha*beta*|Omega_h| + |Gamma_h| != 0 is
    checked against the discrete measures at solve time.
    """

    K: float = 1.0
    L: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.K < 0 or self.L < 0:
            raise InvalidArgumentError("K and L must be >= 0")
        if self.gamma <= 0:
            raise InvalidArgumentError("gamma must be > 0")

    def check_nondegenerate(self, mm):
        val = self.alpha * self.beta * mm.area + mm.perimeter
        if abs(val) <= MEAN_DEGENERACY_REL_TOL * mm.perimeter:
            raise DegenerateConstraintError(
                f"alpha*beta*|Omega_h| + |Gamma_h| = {val:.3e} is numerically zero")


@dataclass(frozen=True, eq=False)
class CoupledField:
    """Nodal coefficient pair (bulk values u, surface values v)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidArgumentError("field has non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, mesh: Mesh):
        return cls(np.zeros(mesh.n_vertices), np.zeros(mesh.n_surface))

    @classmethod
    def from_vector(cls, mesh: Mesh, x):
        nb = mesh.n_vertices
        return cls(x[:nb], x[nb:])

    def to_vector(self):
        return np.concatenate([self.u, self.v])

    def check_mesh(self, mesh: Mesh):
        if self.u.shape != (mesh.n_vertices,) or self.v.shape != (mesh.n_surface,):
            raise DimensionMismatchError(
                f"field sizes ({self.u.shape[0]}, {self.v.shape[0]}) do not match mesh "
                f"({mesh.n_vertices}, {mesh.n_surface})")


@dataclass(frozen=True, eq=False)
class BasicForms:
    """Mesh-only matrices: bulk/surface stiffness and consistent mass."""

    mesh: Mesh
    a_bulk: CsrMatrix
    m_bulk: CsrMatrix
    a_surf: CsrMatrix
    m_surf: CsrMatrix

    @property
    def n_bulk(self):
        return self.mesh.n_vertices

    @property
    def n_surf(self):
        return self.mesh.n_surface

    @property
    def n_total(self):
        return self.n_bulk + self.n_surf

    @property
    def trace_indices(self):
        """Bulk vertex index of each surface node (the selection matrix T)."""
        return self.mesh.surface_nodes

    @functools.cached_property
    def lumped_bulk(self):
        # row sums of the consistent mass; equals the P1 integral weights
        return self.m_bulk.apply(np.ones(self.n_bulk))

    @functools.cached_property
    def lumped_surf(self):
        return self.m_surf.apply(np.ones(self.n_surf))

    @functools.cached_property
    def block_mass(self):
        """blockdiag(M_bulk, M_surf) on the coupled index space."""
        rows, cols, vals = _csr_triplets(self.m_bulk)
        srows, scols, svals = _csr_triplets(self.m_surf)
        nb = self.n_bulk
        return CsrMatrix.from_coo(
            self.n_total,
            np.concatenate([rows, srows + nb]),
            np.concatenate([cols, scols + nb]),
            np.concatenate([vals, svals]),
            symmetric=True)

    def load(self, f, g):
        return assemble_load(self, f, g)


def _csr_triplets(a: CsrMatrix):
    rows = np.repeat(np.arange(a.n, dtype=np.int64), np.diff(a.indptr))
    return rows, a.indices, a.data


@functools.lru_cache(maxsize=16)
def assemble_basic(mesh: Mesh) -> BasicForms:
    """P1 stiffness and consistent mass on the bulk and the boundary polyline."""
    rows, cols, stiff, mass, _ = _kernels.tri_entries(mesh.vertices, mesh.triangles)
    nb = mesh.n_vertices
    a_bulk = CsrMatrix.from_coo(nb, rows, cols, stiff, symmetric=True)
    m_bulk = CsrMatrix.from_coo(nb, rows, cols, mass, symmetric=True)

    ns = mesh.n_surface
    lengths = mesh.surface_lengths()
    i = np.arange(ns, dtype=np.int64)
    j = (i + 1) % ns
    srows = np.concatenate([i, i, j, j])
    scols = np.concatenate([i, j, i, j])
    stiff_s = np.concatenate([1.0 / lengths, -1.0 / lengths, -1.0 / lengths, 1.0 / lengths])
    mass_s = np.concatenate([lengths / 3.0, lengths / 6.0, lengths / 6.0, lengths / 3.0])
    a_surf = CsrMatrix.from_coo(ns, srows, scols, stiff_s, symmetric=True)
    m_surf = CsrMatrix.from_coo(ns, srows, scols, mass_s, symmetric=True)
    return BasicForms(mesh, a_bulk, m_bulk, a_surf, m_surf)


def assemble_coupled(forms: BasicForms, k_like: float, alpha_like: float,
                     gamma: float = 1.0) -> CsrMatrix:
    """Block matrix of the coupled energy form.

    [[A_bulk + s T' M_s T,  -alpha s T' M_s ],
     [  -alpha s M_s T,     gamma A_s + alpha^2 s M_s]]
    with s = sigma(k_like); symmetric positive semidefinite with kernel
    spanned by the constant pair (alpha, 1).
    """
    if gamma <= 0:
        raise InvalidArgumentError(f"gamma must be > 0, got {gamma}")
    s = sigma(k_like)
    nb = forms.n_bulk
    trace = forms.trace_indices
    rows, cols, vals = [], [], []

    br, bc, bv = _csr_triplets(forms.a_bulk)
    rows.append(br)
    cols.append(bc)
    vals.append(bv)

    sr, sc, sv = _csr_triplets(forms.a_surf)
    rows.append(sr + nb)
    cols.append(sc + nb)
    vals.append(gamma * sv)

    if s != 0.0:
        mr, mc, mv = _csr_triplets(forms.m_surf)
        rows.extend([trace[mr], trace[mr], mr + nb, mr + nb])
        cols.extend([trace[mc], mc + nb, trace[mc], mc + nb])
        vals.extend([s * mv, -alpha_like * s * mv, -alpha_like * s * mv,
                     alpha_like ** 2 * s * mv])

    return CsrMatrix.from_coo(forms.n_total, np.concatenate(rows),
                              np.concatenate(cols), np.concatenate(vals), symmetric=True)


def kernel_pair(forms: BasicForms, alpha_like: float) -> np.ndarray:
    """The constant kernel direction (alpha, 1) of the coupled form."""
    return np.concatenate([np.full(forms.n_bulk, alpha_like), np.ones(forms.n_surf)])


def build_constraints(forms: BasicForms, k_like: float, alpha_like: float,
                      mean_like: float) -> ConstraintSet:
    """Trace elimination (K = 0) and the mean-constraint functional.

    The mean constraint is c.(u, v) = mean_like * int(u) + int(v) = 0; its
    pairing with the kernel is alpha*mean*|Omega_h| + |Gamma_h|, which must
    stay away from zero for the constrained system to be solvable.
    """
    mm = measures(forms.mesh)
    pairing = alpha_like * mean_like * mm.area + mm.perimeter
    if abs(pairing) <= MEAN_DEGENERACY_REL_TOL * mm.perimeter:
        raise DegenerateConstraintError(
            f"alpha*mean*|Omega_h| + |Gamma_h| = {pairing:.3e} is numerically zero")
    nb = forms.n_bulk
    cvec = np.concatenate([mean_like * forms.lumped_bulk, forms.lumped_surf])
    if k_like == 0:
        elim = forms.trace_indices.astype(np.int64)
        target = nb + np.arange(forms.n_surf, dtype=np.int64)
        weight = np.full(forms.n_surf, float(alpha_like))
        return ConstraintSet(n=forms.n_total, elim_index=elim, elim_target=target,
                             elim_weight=weight, mean_vector=cvec,
                             kernel=kernel_pair(forms, alpha_like))
    return ConstraintSet(n=forms.n_total, mean_vector=cvec,
                         kernel=kernel_pair(forms, alpha_like))


def assemble_load(forms: BasicForms, f, g) -> np.ndarray:
    """Load vector (M_bulk f, M_surf g) for nodal sources."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != (forms.n_bulk,) or g.shape != (forms.n_surf,):
        raise DimensionMismatchError(
            f"source sizes ({f.shape}, {g.shape}) do not match mesh "
            f"({forms.n_bulk}, {forms.n_surf})")
    return np.concatenate([forms.m_bulk.apply(f), forms.m_surf.apply(g)])


def compatibility_defect(forms: BasicForms, f, g, alpha_like: float) -> float:
    """alpha * int(f) + int(g); zero is required for solvability."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return float(alpha_like * forms.lumped_bulk @ f + forms.lumped_surf @ g)


def compatibility_scale(forms: BasicForms, f, g, alpha_like: float) -> float:
    """Magnitude scale for relative compatibility defects."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return float(abs(alpha_like) * forms.lumped_bulk @ np.abs(f)
                 + forms.lumped_surf @ np.abs(g))


def project_compatible(forms: BasicForms, f, g, alpha_like: float):
    """Shift g by a constant so the discrete compatibility defect vanishes."""
    g = np.asarray(g, dtype=np.float64)
    defect = compatibility_defect(forms, f, g, alpha_like)
    return np.asarray(f, dtype=np.float64), g - defect / measures(forms.mesh).perimeter
