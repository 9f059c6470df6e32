"""Independent reference results on the unit disk.

Separation of variables turns the coupled eigenproblem on the disk into a
per-mode transcendental dispersion relation in the eigenvalue; its roots
are semi-analytic references for the finite-element spectra.  The module
also carries the Bessel machinery behind those relations, closed-form
circle spectra for the decoupled case, and a manufactured solution family
for convergence studies.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import bessel_j_raw
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

BESSEL_MAX_ORDER = 30
BESSEL_MAX_ARG = 200.0
GRID_STEP = 0.01
ROOT_TOL = 1e-12
POLE_EXCLUSION = 1e-9
RESIDUAL_TOL = 1e-9


def bessel_j(m: int, x: float) -> float:
    """Bessel function J_m(x); ascending series for x <= 12, Miller's
    normalized backward recurrence beyond."""
    if not (0 <= m <= BESSEL_MAX_ORDER):
        raise InvalidArgumentError(f"order must be in [0, {BESSEL_MAX_ORDER}], got {m}")
    if not (0.0 <= x <= BESSEL_MAX_ARG):
        raise InvalidArgumentError(f"argument must be in [0, {BESSEL_MAX_ARG}], got {x}")
    return float(bessel_j_raw(int(m), float(x)))


def bessel_j_prime(m: int, x: float) -> float:
    """Derivative J_m'(x) from the recurrence (J_(m-1) - J_(m+1)) / 2."""
    if not (0 <= m <= BESSEL_MAX_ORDER):
        raise InvalidArgumentError(f"order must be in [0, {BESSEL_MAX_ORDER}], got {m}")
    if not (0.0 <= x <= BESSEL_MAX_ARG):
        raise InvalidArgumentError(f"argument must be in [0, {BESSEL_MAX_ARG}], got {x}")
    if m == 0:
        return -float(bessel_j_raw(1, float(x)))
    return 0.5 * float(bessel_j_raw(m - 1, float(x)) - bessel_j_raw(m + 1, float(x)))


@dataclass(frozen=True)
class DispersionRoot:
    """One semi-analytic disk eigenvalue: angular mode, value, multiplicity."""

    m: int
    lam: float
    multiplicity: int


def _robin_side(k_like, m, sqrt_lam):
    return k_like * sqrt_lam * bessel_j_prime(m, sqrt_lam) + bessel_j(m, sqrt_lam)


def _dispersion(k_like, alpha, gamma, m, lam):
    """Rationalized dispersion function; poles at lam = gamma m^2 removed."""
    s = math.sqrt(lam)
    return (lam - gamma * m * m) * _robin_side(k_like, m, s) \
        - alpha * alpha * s * bessel_j_prime(m, s)


def _coupling_residual(k_like, alpha, gamma, m, lam):
    """Residual of the unrationalized Robin/Dirichlet relation at lam.

    The surface amplitude is recovered from the surface equation; at a pole
    of that expression the relation cannot hold for alpha != 0, which is
    what rejects spurious rationalization roots.
    """
    s = math.sqrt(lam)
    denom = lam - gamma * m * m
    if abs(denom) < POLE_EXCLUSION:
        return math.inf
    c = alpha * s * bessel_j_prime(m, s) / denom
    lhs = k_like * s * bessel_j_prime(m, s) + bessel_j(m, s)
    scale = max(abs(lhs), abs(alpha * c), 1.0)
    return abs(lhs - alpha * c) / scale


def _bisect(fun, lo, hi):
    flo = fun(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= ROOT_TOL:
            return mid
        fmid = fun(mid)
        if fmid == 0.0:
            return mid
        if (flo < 0) != (fmid < 0):
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def _scan_roots(fun, lam_max, exclude=(), step=GRID_STEP):
    """Sign-change bracketing on the standard grid, then bisection.

    ``exclude`` lists pole locations; grid points falling inside the
    exclusion window are nudged so each side of a pole is bracketed
    separately.
    """
    grid = [step * i for i in range(1, int(round(lam_max / step)) + 1)]
    for p in exclude:
        if 0 < p < lam_max:
            grid.extend([p - POLE_EXCLUSION, p + POLE_EXCLUSION])
    grid = sorted(g for g in grid if 0 < g <= lam_max)
    roots = []
    prev_x, prev_f = grid[0], fun(grid[0])
    for x in grid[1:]:
        in_pole_gap = any(prev_x < p < x for p in exclude)
        f = fun(x)
        if not in_pole_gap and (prev_f < 0) != (f < 0):
            roots.append(_bisect(fun, prev_x, x))
        prev_x, prev_f = x, f
    return roots


def disk_eigs_second(k_like: float, alpha: float, gamma: float, m_max: int,
                     lam_max: float, grid_step: float = GRID_STEP) -> list[DispersionRoot]:
    """All dispersion roots in (0, lam_max] for angular modes 0..m_max.

    For alpha = 0 the system decouples into bulk Robin/Dirichlet modes and
    pure surface modes at gamma m^2; for alpha != 0 the rationalized
    relation is scanned and spurious pole roots are rejected by the
    residual of the unrationalized relation.
    """
    if k_like < 0:
        raise InvalidArgumentError(f"Robin parameter must be >= 0, got {k_like}")
    if gamma <= 0:
        raise InvalidArgumentError(f"gamma must be > 0, got {gamma}")
    if m_max < 0 or lam_max <= 0:
        raise InvalidArgumentError("m_max must be >= 0 and lam_max > 0")
    if lam_max > BESSEL_MAX_ARG ** 2:
        raise InvalidArgumentError(f"lam_max beyond supported Bessel range {BESSEL_MAX_ARG}^2")
    roots = []
    for m in range(m_max + 1):
        mult = 1 if m == 0 else 2
        if alpha == 0.0:
            for lam in _scan_roots(lambda lam: _robin_side(k_like, m, math.sqrt(lam)),
                                   lam_max, step=grid_step):
                roots.append(DispersionRoot(m=m, lam=lam, multiplicity=mult))
            surf = gamma * m * m
            if 0 < surf <= lam_max:
                roots.append(DispersionRoot(m=m, lam=surf, multiplicity=mult))
            continue
        pole = gamma * m * m
        for lam in _scan_roots(lambda lam: _dispersion(k_like, alpha, gamma, m, lam),
                               lam_max, exclude=(pole,) if pole > 0 else (),
                               step=grid_step):
            if _coupling_residual(k_like, alpha, gamma, m, lam) > RESIDUAL_TOL:
                log.debug("rejected spurious root m=%d lam=%.12g", m, lam)
                continue
            roots.append(DispersionRoot(m=m, lam=lam, multiplicity=mult))
    return sorted(roots, key=lambda r: r.lam)


def circle_surface_eigs(gamma: float, m_max: int) -> list[float]:
    """Eigenvalues gamma m^2 of the weighted circle Laplacian, each doubled;
    the constant mode is excluded by the mean constraint."""
    if gamma <= 0:
        raise InvalidArgumentError(f"gamma must be > 0, got {gamma}")
    out = []
    for m in range(1, m_max + 1):
        out.extend([gamma * m * m, gamma * m * m])
    return out


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form solution family on the unit disk.

    The bulk field is the paraboloid r^2 shifted along the constant kernel
    pair so the beta-mean constraint holds with continuum measures; the
    sources are constants and satisfy the compatibility condition exactly
    in the continuum.
    """

    f_expr: str
    g_expr: str
    u_expr: str
    v_value: float
    shift: float

    def f_value(self):
        return -4.0

    def g_value(self):
        return float(self.g_expr)


def manufactured_second(k_like: float, alpha: float, beta: float) -> ManufacturedSolution:
    """Manufactured pair for the (K, alpha, beta) second-order solve on the
    unit disk: f = -4, g = 2*alpha, u = r^2 + alpha*c, v = (2K+1)/alpha + c."""
    if alpha == 0:
        raise InvalidArgumentError("manufactured family needs alpha != 0")
    if k_like < 0:
        raise InvalidArgumentError(f"Robin parameter must be >= 0, got {k_like}")
    denom = alpha * beta * math.pi + 2.0 * math.pi
    if abs(denom) < 1e-12:
        raise InvalidArgumentError("alpha*beta*pi + 2*pi is numerically zero")
    v0 = (2.0 * k_like + 1.0) / alpha
    c = -(beta * (math.pi / 2.0) + 2.0 * math.pi * v0) / denom
    return ManufacturedSolution(
        f_expr="-4",
        g_expr=f"{2.0 * alpha:.17g}",
        u_expr=f"x^2+y^2+({alpha * c:.17g})",
        v_value=v0 + c,
        shift=c,
    )
