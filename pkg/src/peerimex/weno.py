"""Fifth-order WENO (Jiang-Shu weights) for first derivatives on uniform grids."""

from __future__ import annotations

import numpy as np

WENO_EPS = 1e-12
_IDEAL = (0.1, 0.6, 0.3)


class BoundaryUnderspecifiedError(ValueError):
    pass


def weno5_reconstruct(v1, v2, v3, v4, v5, eps: float = WENO_EPS):
    """Left-biased interface value ``u_{i+1/2}^-`` from cells ``i-2 .. i+2``."""
    q0 = (2.0 * v1 - 7.0 * v2 + 11.0 * v3) / 6.0
    q1 = (-v2 + 5.0 * v3 + 2.0 * v4) / 6.0
    q2 = (2.0 * v3 + 5.0 * v4 - v5) / 6.0

    b0 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3) ** 2 + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3) ** 2
    b1 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    b2 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5) ** 2 + 0.25 * (3.0 * v3 - 4.0 * v4 + v5) ** 2

    a0 = _IDEAL[0] / (eps + b0) ** 2
    a1 = _IDEAL[1] / (eps + b1) ** 2
    a2 = _IDEAL[2] / (eps + b2) ** 2
    return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)


def interface_values(u, wind_sign: int, left=None, right=None, periodic: bool = False,
                     eps: float = WENO_EPS) -> np.ndarray:
    """Upwind WENO5 values at the ``m + 1`` cell interfaces.

    ``left``/``right`` are either a boundary value (fills the ghost cells and
    pins the boundary interface), an array of three ghost cells ordered left to
    right, or ``None`` for constant extrapolation, which is only accepted on
    the outflow side.
    """
    u = np.asarray(u, dtype=float)
    m = u.size
    if m < 6:
        raise BoundaryUnderspecifiedError("WENO5 needs at least 6 cells")
    if wind_sign < 0:
        # Mirror so the wind blows to the right.
        vals = interface_values(u[::-1], 1,
                                left=None if right is None else np.atleast_1d(np.asarray(right, float))[::-1],
                                right=None if left is None else np.atleast_1d(np.asarray(left, float))[::-1],
                                periodic=periodic, eps=eps)
        return vals[::-1]

    pin = None
    if periodic:
        gl, gr = u[-3:], u[:3]
    else:
        if left is None:
            raise BoundaryUnderspecifiedError("inflow boundary (left) needs ghost data")
        gl = np.atleast_1d(np.asarray(left, dtype=float))
        if gl.size == 1:
            pin = float(gl[0])
            gl = np.full(3, pin)
        elif gl.size != 3:
            raise BoundaryUnderspecifiedError("left ghost data must have 1 or 3 values")
        gr = np.full(3, u[-1]) if right is None else np.atleast_1d(np.asarray(right, dtype=float))
        if gr.size == 1:
            gr = np.full(3, gr[0])
        elif gr.size != 3:
            raise BoundaryUnderspecifiedError("right ghost data must have 1 or 3 values")
    ue = np.concatenate([gl, u, gr])
    # interface j sits between cells j-1 and j (0-based), j = 0..m
    vals = weno5_reconstruct(ue[0:m + 1], ue[1:m + 2], ue[2:m + 3], ue[3:m + 4], ue[4:m + 5], eps)
    if pin is not None:
        vals[0] = pin
    return vals


def weno5_derivative(u, wind_sign: int, dx: float, left=None, right=None,
                     periodic: bool = False, eps: float = WENO_EPS) -> np.ndarray:
    """Upwind WENO5 approximation of ``du/dx`` at cell centres.

    Boundary arguments as in :func:`interface_values`; the inflow side is
    ``left`` for ``wind_sign > 0`` and ``right`` otherwise.
    """
    vals = interface_values(u, 1 if wind_sign >= 0 else -1, left, right, periodic, eps)
    return (vals[1:] - vals[:-1]) / dx
