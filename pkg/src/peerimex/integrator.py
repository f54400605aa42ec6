"""Constant-step IMEX-Peer integration of split systems ``u' = F0(t, u) + F1(t, u)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .tableau import ImexTableau, simple_extrapolation

STRUCTURES = ("dense", "blocks", "elliptic")

NEWTON_TOL = 1e-11
NEWTON_MAX_ITERS = 25
CG_RTOL = 1e-10
CG_MAXITER = 500


class IntegrationError(RuntimeError):
    pass


class NewtonError(IntegrationError):
    def __init__(self, msg, residual=np.nan, iters=0):
        super().__init__(msg)
        self.residual = residual
        self.iters = iters


class StepFailure(IntegrationError):
    def __init__(self, step, stage, residual, cause=None):
        super().__init__(f"step {step}: Newton failed on stage {stage + 1} "
                         f"(residual {residual:.3e})")
        self.step = step
        self.stage = stage
        self.residual = residual
        self.__cause__ = cause


class StarterError(IntegrationError):
    pass


@dataclass
class SplitSystem:
    """Right-hand side split into a non-stiff part ``f0`` and a stiff part ``f1``.

    ``jac1(t, u)`` returns the Jacobian of ``f1`` in the form matching
    ``structure``:

    * ``"dense"``: an ``(m, m)`` array or sparse matrix,
    * ``"blocks"``: an ``(n, b, b)`` array of pointwise blocks for a
      component-major state (all of component 0, then component 1, ...),
    * ``"elliptic"``: a symmetric sparse matrix or ``LinearOperator``; stage
      systems are solved matrix-free with conjugate gradients.

    ``jac1_constant`` marks a state- and time-independent stiff Jacobian;
    with ``linear_solver="direct"`` its shifted matrices are then factorised
    once per shift and reused. ``jac`` (full Jacobian of ``f0 + f1``) and
    ``jac_sparsity`` only serve the implicit starting procedure.
    """

    dim: int
    f0: Callable
    f1: Callable
    jac1: Callable
    structure: str = "dense"
    block_size: int = 1
    jac_sparsity: object = None
    jac: Callable | None = None
    jac1_constant: bool = False
    linear_solver: str = "cg"
    name: str = ""
    _factors: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.linear_solver not in ("cg", "direct"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if self.structure == "blocks" and self.dim % self.block_size:
            raise ValueError("dim must be a multiple of block_size")

    def rhs(self, t, u):
        return self.f0(t, u) + self.f1(t, u)


@dataclass
class SolveStats:
    steps: int = 0
    newton_iters_total: int = 0
    newton_failures: int = 0
    linear_solves: int = 0
    f0_evals: int = 0
    f1_evals: int = 0


@dataclass
class PeerState:
    """Stage values ``w[j] ~ u(t + c_j dt)`` and the cached ``F0`` at those stages."""

    t: float
    dt: float
    w: np.ndarray
    f0: np.ndarray
    stats: SolveStats = field(default_factory=SolveStats)


# -- linear algebra for the stage equations x - gamma F1(t, x) = rhs ----------

def block_solve(blocks: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve ``blocks[k] x_k = r_k`` node by node for a component-major vector ``r``."""
    n, b, _ = blocks.shape
    rk = r.reshape(b, n).T[..., None]
    if b == 2:
        a, bb = blocks[:, 0, 0], blocks[:, 0, 1]
        c, d = blocks[:, 1, 0], blocks[:, 1, 1]
        det = a * d - bb * c
        x0 = (d * rk[:, 0, 0] - bb * rk[:, 1, 0]) / det
        x1 = (a * rk[:, 1, 0] - c * rk[:, 0, 0]) / det
        return np.concatenate([x0, x1])
    x = np.linalg.solve(blocks, rk)[..., 0]
    return x.T.reshape(-1)


def stage_matrix_solver(sys: SplitSystem, J, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``r -> (I - gamma J)^{-1} r`` for the system's Jacobian structure."""
    m = sys.dim
    if sys.structure == "blocks":
        A = np.eye(sys.block_size) - gamma * np.asarray(J)
        return lambda r: block_solve(A, r)
    if sys.structure == "elliptic" and sys.linear_solver == "direct":
        key = float(gamma)
        lu = sys._factors.get(key) if sys.jac1_constant else None
        if lu is None:
            lu = spla.splu(sp.csc_matrix(sp.identity(m) - gamma * sp.csr_matrix(J)))
            if sys.jac1_constant:
                sys._factors[key] = lu
        return lu.solve
    if sys.structure == "elliptic":
        Jop = spla.aslinearoperator(J)
        op = spla.LinearOperator((m, m), matvec=lambda v: v - gamma * Jop.matvec(v), dtype=float)

        def cg_solve(r):
            x, info = spla.cg(op, r, rtol=CG_RTOL, atol=0.0, maxiter=CG_MAXITER)
            if info > 0:
                raise NewtonError(f"CG did not converge in {CG_MAXITER} iterations")
            return x

        return cg_solve
    if sp.issparse(J):
        lu = spla.splu(sp.csc_matrix(sp.identity(m) - gamma * J))
        return lu.solve
    A = np.eye(m) - gamma * np.atleast_2d(np.asarray(J, dtype=float))
    return lambda r: np.linalg.solve(A, r)


def newton_stage_solve(g: Callable, guess, jac_solve: Callable, tol: float = NEWTON_TOL,
                       max_iters: int = NEWTON_MAX_ITERS, stats: SolveStats | None = None):
    """Full Newton iteration for ``g(x) = 0``.

    ``jac_solve(x)`` returns a callable applying the inverse of ``g'(x)``.
    Converged when ``||g(x)||_inf < tol (1 + ||x||_inf)``. Three consecutive
    residual increases, or ``max_iters`` iterations, raise :class:`NewtonError`.
    """
    x = np.array(guess, dtype=float, copy=True)
    res = g(x)
    nrm = np.max(np.abs(res)) if res.size else 0.0
    growth = 0
    for k in range(max_iters + 1):
        if nrm < tol * (1.0 + (np.max(np.abs(x)) if x.size else 0.0)):
            if stats is not None:
                stats.newton_iters_total += k
            return x
        if not np.isfinite(nrm):
            break
        if k == max_iters:
            break
        x = x - jac_solve(x)(res)
        if stats is not None:
            stats.linear_solves += 1
        new = g(x)
        new_nrm = np.max(np.abs(new)) if new.size else 0.0
        growth = growth + 1 if new_nrm > nrm else 0
        res, nrm = new, new_nrm
        if growth >= 3:
            break
    if stats is not None:
        stats.newton_failures += 1
    raise NewtonError(f"Newton did not converge (residual {nrm:.3e})", nrm, k)


# -- starting values -------------------------------------------------------------

def _rk4(sys: SplitSystem, u, t, h, n):
    for _ in range(n):
        k1 = sys.rhs(t, u)
        k2 = sys.rhs(t + 0.5 * h, u + 0.5 * h * k1)
        k3 = sys.rhs(t + 0.5 * h, u + 0.5 * h * k2)
        k4 = sys.rhs(t + h, u + h * k3)
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return u


def starting_values(sys: SplitSystem, u0, t0: float, dt: float, c, method: str = "rk4",
                    substeps: int = 64, rtol: float = 1e-12, atol: float = 1e-14) -> PeerState:
    """Stage values for the first step.

    ``method``:

    * ``"rk4"``: stages of the step ending at ``t0`` (``w_j ~ u(t0 + (c_j - 1) dt)``),
      classical RK4 backwards from ``t0`` with ``substeps`` substeps per stage
      interval, compared against half as many substeps and refined by doubling
      until the difference is below ``rtol``. Only for non-stiff problems.
    * ``"radau"``: stages of the step starting at ``t0`` (``w_j ~ u(t0 + c_j dt)``)
      from an accurate Radau IIA run; suited to stiff problems.
    * ``"constant"``: all stages equal ``u0``, attached to the step ending at ``t0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0 = np.asarray(u0, dtype=float)
    c = np.asarray(c, dtype=float)
    s = c.size
    W = np.empty((s, u0.size))

    if method == "constant":
        W[:] = u0
        base = t0 - dt
    elif method == "rk4":
        base = t0 - dt
        W[-1] = u0
        order = np.argsort(-c)
        u, t = u0.copy(), t0
        for j in order:
            target = t0 + (c[j] - 1.0) * dt
            if target == t:
                W[j] = u
                continue
            h_int = target - t
            n = substeps
            while True:
                fine = _rk4(sys, u, t, h_int / n, n)
                coarse = _rk4(sys, u, t, h_int / (n // 2), n // 2)
                if not np.all(np.isfinite(fine)):
                    raise StarterError("RK4 starter became unstable; use a smaller dt "
                                       "or the 'radau' starter")
                err = np.max(np.abs(fine - coarse)) / 15.0
                if err <= rtol * (1.0 + np.max(np.abs(fine))) or n >= 64 * substeps:
                    break
                n *= 2
            W[j], u, t = fine, fine, target
    elif method == "radau":
        base = t0
        times = t0 + c * dt
        order = np.argsort(c)
        sol = solve_ivp(sys.rhs, (t0, float(times.max())), u0, method="Radau",
                        t_eval=np.sort(times), rtol=rtol, atol=atol,
                        **({"jac": sys.jac} if sys.jac is not None
                           else {"jac_sparsity": sys.jac_sparsity}))
        if not sol.success:
            raise StarterError(f"Radau starter failed: {sol.message}")
        W[order] = sol.y.T
    else:
        raise ValueError(f"unknown starter {method!r}")

    stats = SolveStats()
    F0 = np.array([sys.f0(base + c[j] * dt, W[j]) for j in range(s)])
    stats.f0_evals += s
    return PeerState(t=base, dt=dt, w=W, f0=F0, stats=stats)


# -- time stepping ------------------------------------------------------------------

def imex_step(t: ImexTableau, sys: SplitSystem, st: PeerState, *, step_index: int = 0,
              newton_tol: float = NEWTON_TOL, max_iters: int = NEWTON_MAX_ITERS) -> PeerState:
    """Advance the stage vector by one step of size ``st.dt``."""
    s, dt = t.s, st.dt
    stats = st.stats
    t_new = st.t + dt
    S = simple_extrapolation(t.c)
    # P w = w_s + P (w - w_s) since P e = e; exact on constant stage vectors.
    last = st.w[-1]
    base_rhs = last + t.P @ (st.w - last) + dt * (t.Qhat @ st.f0)
    W = np.empty_like(st.w)
    F0 = np.empty_like(st.f0)
    F1 = np.empty_like(st.w)
    for i in range(s):
        ti = t_new + t.c[i] * dt
        rhs = base_rhs[i] + dt * (t.Rhat[i, :i] @ F0[:i] + t.R[i, :i] @ F1[:i])
        gamma = dt * t.R[i, i]

        def g(x, ti=ti, rhs=rhs, gamma=gamma):
            stats.f1_evals += 1
            return x - gamma * sys.f1(ti, x) - rhs

        def jac_solve(x, ti=ti, gamma=gamma):
            return stage_matrix_solver(sys, sys.jac1(ti, x), gamma)

        guess = last + S[i] @ (st.w - last)
        try:
            W[i] = newton_stage_solve(g, guess, jac_solve, newton_tol, max_iters, stats)
        except NewtonError as exc:
            raise StepFailure(step_index, i, exc.residual, exc) from exc
        F1[i] = sys.f1(ti, W[i])
        F0[i] = sys.f0(ti, W[i])
        stats.f1_evals += 1
        stats.f0_evals += 1
    stats.steps += 1
    return PeerState(t=t_new, dt=dt, w=W, f0=F0, stats=stats)


def step_count(t0: float, T: float, dt: float) -> int:
    n = (T - t0) / dt
    N = round(n)
    if N < 0 or abs(n - N) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"(T - t0)/dt = {n!r} is not an integer; only constant steps are supported")
    return int(N)


def integrate(t: ImexTableau, sys: SplitSystem, u0, t0: float, T: float, dt: float, *,
              starter: str = "rk4", state: PeerState | None = None, starter_substeps: int = 64,
              newton_tol: float = NEWTON_TOL) -> tuple[np.ndarray, SolveStats]:
    """Integrate from ``t0`` to ``T`` and return ``(u(T) approximation, stats)``.

    The result is the last stage of the final step. ``state`` may supply
    precomputed starting values.
    """
    N = step_count(t0, T, dt)
    if state is None:
        state = starting_values(sys, u0, t0, dt, t.c, starter, starter_substeps)
    remaining = step_count(state.t + dt, T, dt)
    if remaining > N:
        raise ValueError("starting state lies before t0")
    st = state
    for n in range(remaining):
        st = imex_step(t, sys, st, step_index=n + 1, newton_tol=newton_tol)
    return st.w[-1].copy(), st.stats


def linearly_implicit_split(F: Callable, J, dim: int | None = None) -> SplitSystem:
    """Split ``F`` as ``(F - J u) + J u`` so the IMEX step is linearly implicit.

    ``J`` is a fixed matrix (or scalar) or a callable ``J(t, u)``; with a
    callable the Jacobian is frozen at the value it returns for the state it
    is called with, so supply a constant operator for the classical scheme.
    """
    if callable(J):
        Jfun = J
    else:
        Jmat = np.atleast_2d(np.asarray(J, dtype=float))
        Jfun = lambda t, u: Jmat  # noqa: E731
    if dim is None:
        dim = np.atleast_2d(np.asarray(Jfun(0.0, None))).shape[0]

    def f1(t, u):
        return np.atleast_2d(Jfun(t, u)) @ u

    def f0(t, u):
        return F(t, u) - f1(t, u)

    return SplitSystem(dim=dim, f0=f0, f1=f1, jac1=lambda t, u: Jfun(t, u), structure="dense",
                       name="linearly-implicit")


def scalar_test_system(lambda0: complex, lambda1: complex) -> SplitSystem:
    """``y' = lambda0 y + lambda1 y`` in real form (two components for complex lambdas)."""
    def as_mat(lam):
        lam = complex(lam)
        return np.array([[lam.real, -lam.imag], [lam.imag, lam.real]])

    A0, A1 = as_mat(lambda0), as_mat(lambda1)
    return SplitSystem(dim=2, f0=lambda t, u: A0 @ u, f1=lambda t, u: A1 @ u,
                       jac1=lambda t, u: A1, name="dahlquist")


def observed_orders(errors) -> list[float]:
    e = list(errors)
    return [math.log2(e[k - 1] / e[k]) if e[k - 1] > 0 and e[k] > 0 else math.nan
            for k in range(1, len(e))]
