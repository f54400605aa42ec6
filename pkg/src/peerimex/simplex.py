"""Derivative-free Nelder-Mead simplex minimiser."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool


def nelder_mead(f: Callable[[np.ndarray], float], x0, *, step=None, initial_simplex=None,
                xatol: float = 1e-6, fatol: float | None = None, max_evals: int | None = None,
                callback: Callable | None = None) -> SimplexResult:
    """Minimise ``f`` from ``x0`` with reflection/expansion/contraction/shrink 1, 2, 1/2, 1/2.

    Stops once the simplex diameter (largest vertex distance from the best
    vertex) drops below ``xatol`` and, if given, the spread of function values
    below ``fatol``. With the evaluation budget (default ``500 * d``) exhausted
    the best vertex so far is returned with ``converged=False``.

    ``callback(it, x_best, f_best)`` is invoked after every iteration.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    max_evals = 500 * d if max_evals is None else max_evals
    rho, chi, gamma, sigma = 1.0, 2.0, 0.5, 0.5

    if initial_simplex is not None:
        sim = np.array(initial_simplex, dtype=float).reshape(d + 1, d)
    else:
        if step is None:
            step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.00025)
        step = np.broadcast_to(np.asarray(step, dtype=float), (d,))
        sim = np.vstack([x0] + [x0 + step[i] * np.eye(d)[i] for i in range(d)])

    nfev = 0

    def fe(x):
        nonlocal nfev
        nfev += 1
        v = float(f(x))
        return v if np.isfinite(v) else np.inf

    fs = np.array([fe(v) for v in sim])
    nit = 0
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        diam = np.max(np.linalg.norm(sim[1:] - sim[0], axis=1))
        spread = fs[-1] - fs[0]
        if diam <= xatol and (fatol is None or spread <= fatol):
            converged = True
            break
        if nfev >= max_evals:
            break
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        xr = centroid + rho * (centroid - sim[-1])
        fr = fe(xr)
        if fr < fs[0]:
            xe = centroid + chi * (xr - centroid)
            fe_ = fe(xe)
            if fe_ < fr:
                sim[-1], fs[-1] = xe, fe_
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + gamma * (xr - centroid)
                fc = fe(xc)
                accept = fc <= fr
            else:
                xc = centroid - gamma * (centroid - sim[-1])
                fc = fe(xc)
                accept = fc < fs[-1]
            if accept:
                sim[-1], fs[-1] = xc, fc
            else:
                sim[1:] = sim[0] + sigma * (sim[1:] - sim[0])
                fs[1:] = [fe(v) for v in sim[1:]]
        if callback is not None:
            i = int(np.argmin(fs))
            callback(nit, sim[i].copy(), float(fs[i]))

    i = int(np.argmin(fs))
    return SimplexResult(x=sim[i].copy(), fun=float(fs[i]), nfev=nfev, nit=nit,
                         converged=converged)
