"""Search over the free extrapolation weights ``S2``.

The objective trades the area of the wedge region against the deviation of
the extrapolation error constant from the one obtained by extrapolating from
the ``s`` most recent stage values::

    value = -|S_alpha| + 1.5 * 10**s * |c_ex - c0|
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .simplex import SimplexResult, nelder_mead
from .stability import BISECTION_TOL, implicit_angle, spectral_radius, wedge_region
from .tableau import (ImexTableau, TableauError, assemble_imex, error_constants,
                      recent_value_extrapolation)

log = logging.getLogger(__name__)

SEARCH_RAYS = 120
VERIFY_RAYS = 360

# Published optima (row-wise S2 entries) for the three- and four-stage bases.
PEER3_S2_PARAMS = (4.6617853424698374, 3.3696230360366979, 5.6686050026329915e-1)
PEER4_S2_PARAMS = (4.0913830614894255, -1.2244427616780204e1, 5.7564397758588521,
                   1.0587962913073733e1, -7.7409749651373776, 4.1019377658951353)


def _base(base):
    if isinstance(base, ImexTableau):
        return base.c, base.P, base.R
    c, P, R = base
    return np.asarray(c, float), np.asarray(P, float), np.asarray(R, float)


def s2_from_params(p, s: int) -> np.ndarray:
    """Fill a strictly lower triangular matrix row-wise: s21, s31, s32, s41, ..."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size != s * (s - 1) // 2:
        raise ValueError(f"need {s * (s - 1) // 2} parameters for s={s}, got {p.size}")
    S2 = np.zeros((s, s))
    S2[np.tril_indices(s, -1)] = p
    return S2


def params_from_s2(S2) -> np.ndarray:
    S2 = np.asarray(S2, dtype=float)
    return S2[np.tril_indices(len(S2), -1)].copy()


def recent_value_params(base) -> np.ndarray:
    c, _, _ = _base(base)
    return params_from_s2(recent_value_extrapolation(c)[1])


def reference_constant_c0(base) -> float:
    """``c_ex`` of the method extrapolating from the ``s`` most recent stage values."""
    c, P, R = _base(base)
    _, S2 = recent_value_extrapolation(c)
    return error_constants(assemble_imex(c, P, R, S2))[1]


@dataclass
class ObjectiveBreakdown:
    area: float
    c_ex: float
    c0: float
    value: float
    region_failed: bool = False

    @property
    def penalty(self) -> float:
        return self.value + self.area


class S2Objective:
    """Callable objective with an area cache keyed by the parameters on a 1e-10 grid."""

    def __init__(self, base, beta_deg: float | None = None, n_rays: int = SEARCH_RAYS,
                 weight: float | None = None, refine: bool = False,
                 tol: float = BISECTION_TOL):
        self.c, self.P, self.R = _base(base)
        self.s = self.c.size
        self.c0 = reference_constant_c0((self.c, self.P, self.R))
        if beta_deg is None:
            probe = assemble_imex(self.c, self.P, self.R, np.zeros((self.s, self.s)))
            beta_deg = implicit_angle(probe)
        self.beta_deg = float(beta_deg)
        self.n_rays = n_rays
        self.weight = 1.5 * 10.0**self.s if weight is None else weight
        self.refine = refine
        self.tol = tol
        self._cache: dict = {}

    def tableau(self, p, label: str = "") -> ImexTableau:
        return assemble_imex(self.c, self.P, self.R, s2_from_params(p, self.s),
                             label=label, alpha_deg=self.beta_deg)

    def area(self, t: ImexTableau) -> tuple[float, bool]:
        key = tuple(np.round(params_from_s2(t.S2) / 1e-10).astype(np.int64))
        if key not in self._cache:
            try:
                poly = wedge_region(t, self.beta_deg, self.n_rays, self.tol, refine=self.refine)
                self._cache[key] = (0.0, True) if poly.partial else (max(poly.area, 0.0), False)
            except (ArithmeticError, np.linalg.LinAlgError):
                self._cache[key] = (0.0, True)
        return self._cache[key]

    def breakdown(self, p) -> ObjectiveBreakdown:
        try:
            t = self.tableau(p)
        except TableauError:
            return ObjectiveBreakdown(0.0, np.inf, self.c0, np.inf, True)
        c_ex = error_constants(t)[1]
        area, failed = self.area(t)
        return ObjectiveBreakdown(area=area, c_ex=c_ex, c0=self.c0,
                                  value=-area + self.weight * abs(c_ex - self.c0),
                                  region_failed=failed)

    def __call__(self, p) -> float:
        return self.breakdown(p).value


def objective(base, p, beta_deg: float | None = None, n_rays: int = SEARCH_RAYS) -> ObjectiveBreakdown:
    return S2Objective(base, beta_deg, n_rays).breakdown(p)


@dataclass
class OptimizationResult:
    p: np.ndarray
    breakdown: ObjectiveBreakdown
    p0: np.ndarray
    start: ObjectiveBreakdown
    converged: bool
    nfev: int
    history: list = field(default_factory=list)
    tableau: ImexTableau | None = None


def optimize_s2(base, p0=None, beta_deg: float | None = None, *, n_rays: int = SEARCH_RAYS,
                restarts: int = 0, max_evals: int | None = None, xatol: float = 1e-6,
                progress: Callable[[str], None] | None = None, label: str = "",
                seed: int | None = None) -> OptimizationResult:
    """Minimise the area/error-constant objective from ``p0`` (default: recent-value weights).

    ``restarts`` re-launches the simplex from the current best point, which
    rebuilds a fresh simplex around it; with ``seed`` set, each restart point
    is jittered by a seeded 5% relative perturbation. ``progress`` receives one CSV line
    ``iter,value,area,c_ex,penalty`` per iteration.
    """
    obj = S2Objective(base, beta_deg, n_rays)
    p0 = recent_value_params(base) if p0 is None else np.asarray(p0, dtype=float).ravel()
    start = obj.breakdown(p0)
    history = []
    it_offset = 0

    def report(it, x, fx):
        b = obj.breakdown(x)
        history.append((it + it_offset, b))
        if progress is not None:
            progress(f"{it + it_offset},{b.value:.17g},{b.area:.17g},{b.c_ex:.17g},{b.penalty:.17g}")

    best, best_val = p0.copy(), start.value
    nfev, converged = 0, False
    rng = np.random.default_rng(seed) if seed is not None else None
    for k in range(restarts + 1):
        x0 = best
        if k > 0 and rng is not None:
            x0 = best + 0.05 * np.maximum(np.abs(best), 1e-2) * rng.standard_normal(best.size)
        res: SimplexResult = nelder_mead(obj, x0, xatol=xatol, max_evals=max_evals,
                                         callback=report)
        nfev += res.nfev
        it_offset += res.nit
        converged = res.converged
        if res.fun <= best_val:
            best, best_val = res.x, res.fun
    final = obj.breakdown(best)
    return OptimizationResult(p=best, breakdown=final, p0=p0, start=start, converged=converged,
                              nfev=nfev, history=history, tableau=obj.tableau(best, label))


def real_stability_interval(t: ImexTableau, x_max: float = 10.0, n: int = 20001,
                            tol: float = BISECTION_TOL) -> float:
    """Largest ``b`` with ``rho <= 1 + tol`` on ``(-b, 0)`` for the explicit part.

    Tangential contacts with ``rho = 1`` (a pinched region) do not end the
    interval; the first point with ``rho > 1 + tol`` does.
    """
    x = -np.linspace(0.0, x_max, n)[1:]
    rho = spectral_radius(t, x, 0.0)
    bad = np.flatnonzero(rho > 1.0 + tol)
    if bad.size == 0:
        return np.inf
    k = bad[0]
    lo, hi = (0.0 if k == 0 else -x[k - 1]), -x[k]
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if spectral_radius(t, -mid, 0.0) <= 1.0 + tol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mu_landscape(base, mus) -> np.ndarray:
    """Real stability interval of the two-stage family over ``S2[1, 0] = mu``."""
    c, P, R = _base(base)
    if c.size != 2:
        raise ValueError("the mu family is defined for two-stage bases")
    return np.array([real_stability_interval(assemble_imex(c, P, R, s2_from_params([m], 2)))
                     for m in mus])
