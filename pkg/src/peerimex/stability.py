"""Linear stability of IMEX-Peer methods.

For the split test equation ``y' = lambda0 y + lambda1 y`` one step reads
``w_{n+1} = M(z0, z1) w_n`` with

    M(z0, z1) = (I - z0 R S2 - z1 R)^{-1} (P + z0 R S1).

The explicit-part region for an implicit wedge of half-angle ``beta`` is the
set of ``z0`` that stay stable for every ``z1`` in the wedge. It is traced one
ray at a time: bisection along the ray for a fixed ``z1(y)`` on the wedge edge,
then minimisation of the crossing radius over ``y``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .simplex import nelder_mead
from .tableau import ImexTableau

BISECTION_TOL = 1e-5
R_START = 50.0
R_MAX = 400.0

# Scan of the wedge-edge parameter y before the simplex refinement.
Y_GRID = np.concatenate([[0.0], np.logspace(-2, 3, 61), -np.logspace(-2, 3, 61)])


class StabilityError(ArithmeticError):
    pass


class SingularPointError(StabilityError):
    """``I - z0 R S2 - z1 R`` is singular at the requested point."""


class NoBoundaryError(StabilityError):
    """No sign change of ``rho - 1`` along a ray within the search radius."""


def stability_matrix(t: ImexTableau, z0: complex, z1: complex) -> np.ndarray:
    s = t.s
    A = np.eye(s) - z0 * t.Rhat - z1 * t.R
    B = t.P + z0 * t.Qhat
    try:
        M = np.linalg.solve(A, B.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise SingularPointError(f"singular stability system at z0={z0}, z1={z1}") from exc
    if not np.all(np.isfinite(M)):
        raise SingularPointError(f"singular stability system at z0={z0}, z1={z1}")
    return M


def spectral_radius(t: ImexTableau, z0, z1) -> np.ndarray:
    """Vectorised ``rho(M(z0, z1))``; singular points map to ``inf``."""
    z0, z1 = np.broadcast_arrays(np.asarray(z0, dtype=complex), np.asarray(z1, dtype=complex))
    shape = z0.shape
    z0 = z0.reshape(-1, 1, 1)
    z1 = z1.reshape(-1, 1, 1)
    s = t.s
    A = np.eye(s) - z0 * t.Rhat - z1 * t.R
    B = t.P + z0 * t.Qhat
    # R is lower triangular, so A is too; its determinant is the diagonal product.
    diag = np.diagonal(A, axis1=1, axis2=2)
    ok = np.all(np.abs(diag) > 1e-300, axis=1)
    rho = np.full(z0.shape[0], np.inf)
    if np.any(ok):
        M = np.linalg.solve(A[ok], B[ok])
        finite = np.all(np.isfinite(M), axis=(1, 2))
        r = np.full(M.shape[0], np.inf)
        if np.any(finite):
            r[finite] = np.max(np.abs(np.linalg.eigvals(M[finite])), axis=1)
        rho[ok] = r
    return rho.reshape(shape)


def is_stable(t: ImexTableau, z0: complex, z1: complex,
              tol: float = BISECTION_TOL) -> tuple[bool, float, bool]:
    """Return ``(stable, rho, on_boundary)`` for one point.

    ``stable`` is ``rho < 1``; ``on_boundary`` is the bisection stopping test
    ``|rho - 1| <= tol``. Singular points count as unstable.
    """
    rho = float(spectral_radius(t, z0, z1))
    return rho < 1.0, rho, abs(rho - 1.0) <= tol


def wedge_z1(beta_deg: float, y) -> np.ndarray:
    """Point ``-|y|/tan(beta) + i y`` on the edge of the implicit wedge."""
    y = np.asarray(y, dtype=float)
    if beta_deg >= 90.0:
        return 1j * y
    if beta_deg <= 0.0:
        if np.any(y != 0.0):
            raise ValueError("beta = 0 only admits y = 0")
        return np.zeros_like(y, dtype=complex)
    return -np.abs(y) / math.tan(math.radians(beta_deg)) + 1j * y


def _bracket(t, d, z1, r_start, r_max):
    hi = r_start
    while spectral_radius(t, hi * d, z1) < 1.0:
        hi *= 2.0
        if hi > r_max:
            raise NoBoundaryError(f"stable up to radius {r_max} along direction {d}")
    return hi


def bisect_ray(t: ImexTableau, direction: complex, z1: complex, tol: float = BISECTION_TOL,
               r_start: float = R_START, r_max: float = R_MAX, max_iter: int = 200) -> float:
    """Radius of the boundary crossing of ``{z0 : rho(M(z0, z1)) < 1}`` on a ray."""
    hi = _bracket(t, direction, z1, r_start, r_max)
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        rho = float(spectral_radius(t, mid * direction, z1))
        if abs(rho - 1.0) <= tol:
            return mid
        if rho < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def bisect_rays(t: ImexTableau, directions, z1, tol: float = BISECTION_TOL,
                r_start: float = R_START, r_max: float = R_MAX, iters: int = 60) -> np.ndarray:
    """Vectorised :func:`bisect_ray`; unbounded rays give ``nan``."""
    d, z1 = np.broadcast_arrays(np.asarray(directions, dtype=complex),
                                np.asarray(z1, dtype=complex))
    shape = d.shape
    d = d.ravel()
    z1 = z1.ravel()
    hi = np.full(d.shape, r_start)
    bad = spectral_radius(t, hi * d, z1) < 1.0
    while np.any(bad):
        hi[bad] *= 2.0
        over = hi > r_max
        bad &= ~over
        bad[bad] = spectral_radius(t, hi[bad] * d[bad], z1[bad]) < 1.0
    unbounded = hi > r_max
    lo = np.zeros(d.shape)
    done = unbounded.copy()
    out = np.full(d.shape, np.nan)
    for _ in range(iters):
        active = ~done
        if not np.any(active):
            break
        mid = 0.5 * (lo[active] + hi[active])
        rho = spectral_radius(t, mid * d[active], z1[active])
        hit = np.abs(rho - 1.0) <= tol
        idx = np.flatnonzero(active)
        out[idx[hit]] = mid[hit]
        done[idx[hit]] = True
        below = (rho < 1.0) & ~hit
        above = ~below & ~hit
        lo[idx[below]] = mid[below]
        hi[idx[above]] = mid[above]
    rest = ~done
    out[rest] = 0.5 * (lo[rest] + hi[rest])
    return out.reshape(shape)


def boundary_point(t: ImexTableau, beta_deg: float, ray_angle: float, y: float,
                   tol: float = BISECTION_TOL) -> complex:
    """Crossing of the ray at ``ray_angle`` (degrees) with the boundary of the region for ``z1(y)``."""
    if not 90.0 < ray_angle < 270.0:
        raise ValueError("ray_angle must lie in (90, 270) degrees")
    d = complex(np.exp(1j * math.radians(ray_angle)))
    z1 = complex(wedge_z1(beta_deg, y))
    return bisect_ray(t, d, z1, tol) * d


@dataclass
class RayResult:
    angle: float
    radius: float
    y: float


def minimise_over_wedge(t: ImexTableau, beta_deg: float, ray_angle: float,
                        tol: float = BISECTION_TOL, y_grid=Y_GRID, refine: bool = True,
                        radii_grid=None) -> RayResult:
    """Smallest crossing radius over the wedge edge ``z1(y)`` for one ray."""
    d = complex(np.exp(1j * math.radians(ray_angle)))
    if beta_deg <= 0.0:
        return RayResult(ray_angle, bisect_ray(t, d, 0.0, tol), 0.0)
    if radii_grid is None:
        radii_grid = bisect_rays(t, d, wedge_z1(beta_deg, y_grid), tol)
    finite = np.isfinite(radii_grid)
    if not np.any(finite):
        raise NoBoundaryError(f"no boundary on ray {ray_angle} deg")
    j = int(np.nanargmin(radii_grid))
    y0, r0 = float(y_grid[j]), float(radii_grid[j])
    if not refine:
        return RayResult(ray_angle, r0, y0)

    def radius(yv):
        try:
            return bisect_ray(t, d, complex(wedge_z1(beta_deg, yv[0])), tol)
        except NoBoundaryError:
            return np.inf

    order = np.argsort(y_grid)
    ys = y_grid[order]
    k = int(np.searchsorted(ys, y0))
    nbr = ys[min(k + 1, len(ys) - 1)] if k + 1 < len(ys) else ys[k - 1]
    step = 0.5 * (nbr - y0) if nbr != y0 else 0.5
    res = nelder_mead(radius, [y0], initial_simplex=[[y0], [y0 + step]],
                      xatol=1e-6 * max(1.0, abs(y0)), fatol=1e-6, max_evals=200)
    if res.fun < r0:
        return RayResult(ray_angle, res.fun, float(res.x[0]))
    return RayResult(ray_angle, r0, y0)


def shoelace_area(vertices) -> float:
    z = np.asarray(vertices, dtype=complex)
    x, y = z.real, z.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class StabilityPolygon:
    """Polygonal approximation of a stability region boundary.

    ``vertices`` are the ray crossings ordered by ray angle; the polygon is
    closed through the origin, which lies on every region boundary. ``area``
    is the shoelace value of that closed polygon.
    """

    beta_deg: float
    ray_angles: np.ndarray
    vertices: np.ndarray
    y_star: np.ndarray
    area: float
    x_max: float
    failed_rays: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed_rays)

    def closed(self) -> np.ndarray:
        return np.concatenate([[0.0], self.vertices, [0.0]])


def ray_angles(n_rays: int) -> np.ndarray:
    """Midpoint angles of ``n_rays`` equal sectors of (90, 270) degrees."""
    return 90.0 + 180.0 * (np.arange(n_rays) + 0.5) / n_rays


def wedge_region(t: ImexTableau, beta_deg: float, n_rays: int = 360,
                 tol: float = BISECTION_TOL, *, refine: bool = True, threads: int = 1,
                 y_grid=Y_GRID) -> StabilityPolygon:
    """Trace the explicit-part region for the implicit wedge of half-angle ``beta_deg``.

    ``beta_deg = 0`` gives the region of the explicit method alone.
    """
    if n_rays < 16:
        raise ValueError("n_rays must be at least 16")
    angles = ray_angles(n_rays)
    all_angles = np.append(angles, 180.0)
    dirs = np.exp(1j * np.radians(all_angles))

    if beta_deg <= 0.0:
        radii = bisect_rays(t, dirs, np.zeros_like(dirs), tol)
        ys = np.zeros_like(radii)
    else:
        z1 = wedge_z1(beta_deg, y_grid)
        grid = bisect_rays(t, dirs[:, None], z1[None, :], tol)

        def one(k):
            try:
                return minimise_over_wedge(t, beta_deg, all_angles[k], tol, y_grid,
                                           refine, radii_grid=grid[k])
            except NoBoundaryError:
                return RayResult(all_angles[k], np.nan, np.nan)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(one, range(len(all_angles))))
        else:
            results = [one(k) for k in range(len(all_angles))]
        radii = np.array([r.radius for r in results])
        ys = np.array([r.y for r in results])

    failed = [float(a) for a, r in zip(angles, radii[:-1]) if not np.isfinite(r)]
    good = np.isfinite(radii[:-1])
    verts = radii[:-1][good] * dirs[:-1][good]
    area = shoelace_area(np.concatenate([[0.0], verts]))
    x_max = -float(radii[-1]) if np.isfinite(radii[-1]) else -np.inf
    return StabilityPolygon(beta_deg=float(beta_deg), ray_angles=angles[good], vertices=verts,
                            y_star=ys[:-1][good], area=area, x_max=x_max, failed_rays=failed)


def implicit_radius_sweep(n: int = 4000) -> np.ndarray:
    return np.logspace(-4, 6, n)


def implicit_angle(t: ImexTableau, resolution: float = 0.05, radii=None) -> float:
    """Largest wedge angle ``alpha`` (degrees) with ``rho(M(0, z1)) < 1`` on its edges."""
    radii = implicit_radius_sweep() if radii is None else radii

    def stable(alpha):
        z1 = radii * np.exp(1j * math.radians(180.0 - alpha))
        z1 = np.concatenate([z1, np.conj(z1)])
        return bool(np.all(spectral_radius(t, 0.0, z1) < 1.0 + 1e-9))

    if stable(90.0):
        return 90.0
    lo, hi = 0.0, 90.0
    if not stable(resolution):
        return 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def locus_eigenvalues(t: ImexTableau, theta: float, z1: complex) -> np.ndarray:
    """Eigenvalues ``z0`` of ``(w Rhat + Qhat)^{-1} (w I - w z1 R - P)`` with ``w = exp(i theta)``.

    Each returned ``z0`` makes ``w`` an eigenvalue of ``M(z0, z1)``.
    """
    w = np.exp(1j * theta)
    s = t.s
    G = np.linalg.solve(w * t.Rhat + t.Qhat, w * np.eye(s) - w * z1 * t.R - t.P)
    return np.linalg.eigvals(G)


def real_stability_boundary(t: ImexTableau, tol: float = BISECTION_TOL) -> float:
    """Length of the negative real interval in the explicit region along the ray at 180 degrees."""
    return bisect_ray(t, -1.0 + 0j, 0.0, tol)
