"""Coefficient tableaus for two-step IMEX Peer methods.

An IMEX-Peer step advances ``s`` stage values at once::

    w_n = P w_{n-1} + dt Qhat F0(w_{n-1}) + dt Rhat F0(w_n) + dt R F1(w_n)

with ``Qhat = R S1`` and ``Rhat = R S2``. ``S1``/``S2`` extrapolate the
non-stiff right-hand side from stage values that are already known, so the
whole method is fixed by the implicit base ``(c, P, R)`` plus a strictly
lower triangular ``S2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np


class TableauError(ValueError):
    """Raised when coefficients violate a structural requirement."""


class InvalidNodesError(TableauError):
    pass


class DegenerateStencilError(TableauError):
    pass


class UnsupportedOrderError(TableauError):
    pass


# Tolerances for invariant checks on assembled tableaus.
PRECONSISTENCY_TOL = 1e-12
INVARIANT_TOL = 1e-10

BUILTIN_NAMES = ("imex-euler", "imex-bdf2", "imex-bdf3", "imex-bdf4", "imex-peer2")

# BDF coefficients a_0..a_s, normalised so the implicit term has weight 1,
# together with the L(alpha) angle of the multistep method.
BDF_TABLE = {
    2: ((Fraction(3, 2), Fraction(-2), Fraction(1, 2)), 90.0),
    3: ((Fraction(11, 6), Fraction(-3), Fraction(3, 2), Fraction(-1, 3)), 86.03),
    4: (
        (Fraction(25, 12), Fraction(-4), Fraction(3), Fraction(-4, 3), Fraction(1, 4)),
        73.35,
    ),
}

MU_STAR = 10.0 - 4.0 * math.sqrt(5.0)
"""Smallest root of mu**2 - 20 mu + 20; maximises the real stability interval of
the two-stage BDF2-based family."""

PEER2_MU = MU_STAR + 0.1


def _as_nodes(c) -> np.ndarray:
    c = np.asarray([float(ci) for ci in c], dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise InvalidNodesError("node vector must be a non-empty 1-d sequence")
    if len(np.unique(c)) != c.size:
        raise InvalidNodesError(f"nodes must be pairwise distinct, got {c.tolist()}")
    return c


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def vandermonde_pair(c) -> tuple[np.ndarray, np.ndarray]:
    """Return ``V0 = (c_i**(j-1))`` and ``V1 = ((c_i - 1)**(j-1))``."""
    c = _as_nodes(c)
    V0 = np.vander(c, increasing=True)
    V1 = np.vander(c - 1.0, increasing=True)
    return V0, V1


def lagrange_weights(nodes: Sequence, x):
    """Weights ``l_k(x)`` of the Lagrange basis on ``nodes``.

    Works with floats or :class:`~fractions.Fraction` entries. Repeated
    abscissae raise :class:`DegenerateStencilError`.
    """
    nodes = list(nodes)
    weights = []
    for j, xj in enumerate(nodes):
        w = 1
        for k, xk in enumerate(nodes):
            if k == j:
                continue
            if xj == xk:
                raise DegenerateStencilError(f"coincident interpolation abscissae {xj}")
            w = w * (x - xk) / (xj - xk)
        weights.append(w)
    return weights


def simple_extrapolation(c) -> np.ndarray:
    """Extrapolation matrix ``S`` mapping values at ``t_{n-1} + c dt`` to ``t_n + c dt``.

    ``S[i, j] = prod_{k != j} (c_i - c_k + 1) / (c_j - c_k)``.
    """
    c = _as_nodes(c)
    return np.array([lagrange_weights(c, ci + 1.0) for ci in c])


def recent_value_extrapolation(c) -> tuple[np.ndarray, np.ndarray]:
    """Extrapolate each stage from the ``s`` most recently computed stage values.

    Row ``i`` interpolates through the old nodes ``c_i-1, ..., c_s-1`` and the
    new nodes ``c_1, ..., c_{i-1}``. The old weights fill ``S1[i, i:]`` (so
    ``S1`` is upper triangular) and the new ones ``S2[i, :i]``.
    """
    c = _as_nodes(c)
    s = c.size
    S1 = np.zeros((s, s))
    S2 = np.zeros((s, s))
    for i in range(s):
        nodes = [c[k] - 1.0 for k in range(i, s)] + [c[k] for k in range(i)]
        w = lagrange_weights(nodes, c[i])
        S1[i, i:] = w[: s - i]
        S2[i, :i] = w[s - i :]
    return S1, S2


def complete_extrapolation(c, S2) -> np.ndarray:
    """Return ``S1 = (I - S2) V0 V1^{-1}``, the unique completion of ``S2``."""
    V0, V1 = vandermonde_pair(c)
    S2 = np.asarray(S2, dtype=float)
    if np.any(np.triu(S2) != 0.0):
        raise TableauError("S2 must be strictly lower triangular")
    A = (np.eye(len(V0)) - S2) @ V0
    return np.linalg.solve(V1.T, A.T).T


@dataclass(frozen=True, eq=False)
class ImexTableau:
    """Immutable IMEX-Peer coefficient set.

    ``exact`` optionally holds the same matrices as tuples of
    :class:`~fractions.Fraction` when they are exactly rational.
    """

    c: np.ndarray
    P: np.ndarray
    R: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    Qhat: np.ndarray
    Rhat: np.ndarray
    label: str = ""
    order: int = 0
    alpha_deg: float | None = None
    source: str = ""
    exact: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def s(self) -> int:
        return self.c.size

    def base(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The implicit base method ``(c, P, R)``."""
        return self.c, self.P, self.R

    def with_S2(self, S2, label: str | None = None) -> "ImexTableau":
        """Re-extrapolate the same implicit base with a different ``S2``."""
        return assemble_imex(
            self.c, self.P, self.R, S2, label=self.label if label is None else label,
            alpha_deg=self.alpha_deg, source=self.source,
        )


def assemble_imex(c, P, R, S2, label: str = "", *, order: int | None = None,
                  alpha_deg: float | None = None, source: str = "",
                  exact: dict | None = None) -> ImexTableau:
    """Build a validated tableau from the implicit base ``(c, P, R)`` and ``S2``."""
    c = _as_nodes(c)
    s = c.size
    P = np.asarray(P, dtype=float).reshape(s, s)
    R = np.asarray(R, dtype=float).reshape(s, s)
    S2 = np.asarray(S2, dtype=float).reshape(s, s)

    if c[-1] != 1.0:
        raise InvalidNodesError(f"last node must equal 1, got {c[-1]!r}")
    if np.any(np.triu(R, 1) != 0.0):
        raise TableauError("invalid R: must be lower triangular")
    if np.any(np.diag(R) == 0.0):
        raise TableauError("invalid R: zero on the diagonal")
    if np.any(np.triu(S2) != 0.0):
        raise TableauError("S2 must be strictly lower triangular")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > PRECONSISTENCY_TOL:
        raise TableauError("inconsistent P: P e != e")

    S1 = complete_extrapolation(c, S2)
    tab = ImexTableau(
        c=_frozen(c), P=_frozen(P), R=_frozen(R), S1=_frozen(S1), S2=_frozen(S2),
        Qhat=_frozen(R @ S1), Rhat=_frozen(R @ S2), label=label,
        order=s if order is None else int(order), alpha_deg=alpha_deg,
        source=source, exact=dict(exact or {}),
    )
    validate(tab)
    return tab


def validate(t: ImexTableau, tol: float = INVARIANT_TOL) -> None:
    """Raise :class:`TableauError` naming the first violated invariant."""
    s = t.s
    V0, V1 = vandermonde_pair(t.c)
    checks = [
        ("Qhat = R S1", np.max(np.abs(t.Qhat - t.R @ t.S1))),
        ("Rhat = R S2", np.max(np.abs(t.Rhat - t.R @ t.S2))),
        ("Rhat strictly lower triangular", np.max(np.abs(np.triu(t.Rhat)))),
        ("P e = e", np.max(np.abs(t.P @ np.ones(s) - 1.0))),
        ("S1 V1 = (I - S2) V0", np.max(np.abs(t.S1 @ V1 - (np.eye(s) - t.S2) @ V0))),
    ]
    for name, err in checks:
        if not err <= tol:
            raise TableauError(f"invariant violated: {name} (residual {err:.3e})")


def order_residuals(t: ImexTableau, jmax: int | None = None) -> list[np.ndarray]:
    """``d_j = (c^j - P (c-e)^j - j R c^(j-1)) / j!`` for ``j = 1..jmax``."""
    c, P, R = t.base()
    jmax = t.s + 1 if jmax is None else jmax
    return [
        (c**j - P @ (c - 1.0) ** j - j * (R @ c ** (j - 1))) / math.factorial(j)
        for j in range(1, jmax + 1)
    ]


@dataclass(frozen=True)
class ConsistencyReport:
    d: list
    preconsistency_residual: float
    spectral_radius_P: float
    zero_stability: str
    stage_order: int
    stage_order_matrix_residual: float
    eigenvalues_P: np.ndarray


def classify_zero_stability(P, tol: float = 1e-10) -> tuple[str, np.ndarray]:
    """Classify power-boundedness of ``P`` from its spectrum.

    Returns one of ``optimal`` (spectrum {1, 0, ..., 0}), ``strong`` (1 is the only
    unit-modulus eigenvalue), ``weakly-stable`` or ``unstable``.
    """
    P = np.asarray(P, dtype=float)
    s = len(P)
    lam = np.linalg.eigvals(P)
    mod = np.abs(lam)
    if np.any(mod > 1.0 + 1e-8):
        return "unstable", lam
    on_circle = lam[np.abs(mod - 1.0) <= 1e-8]
    # Defective unit-modulus eigenvalues break power-boundedness.
    for mu in np.unique(np.round(on_circle, 6)):
        alg = int(np.sum(np.abs(lam - mu) <= 1e-6))
        geo = s - np.linalg.matrix_rank(P - mu * np.eye(s), tol=tol)
        if geo < alg:
            return "unstable", lam
    if on_circle.size > 1:
        return "weakly-stable", lam
    # Nilpotent remainder <=> characteristic polynomial w^(s-1) (w - 1).
    target = np.zeros(s + 1)
    target[0], target[1] = 1.0, -1.0
    if np.max(np.abs(np.poly(P) - target)) <= tol:
        return "optimal", lam
    return "strong", lam


def consistency_report(t: ImexTableau, tol: float = 1e-10) -> ConsistencyReport:
    s = t.s
    d = order_residuals(t)
    pre = float(np.max(np.abs(t.P @ np.ones(s) - 1.0)))
    q = 0
    if pre <= tol:
        for j in range(s):
            if np.max(np.abs(d[j])) > tol:
                break
            q = j + 1
    V0, V1 = vandermonde_pair(t.c)
    C = np.diag(t.c)
    D = np.diag(np.arange(1.0, s + 1))
    matres = float(np.max(np.abs(C @ V0 - t.P @ (C - np.eye(s)) @ V1 - t.R @ V0 @ D)))
    zs, lam = classify_zero_stability(t.P)
    return ConsistencyReport(
        d=d, preconsistency_residual=pre, spectral_radius_P=float(np.max(np.abs(lam))),
        zero_stability=zs, stage_order=q, stage_order_matrix_residual=matres,
        eigenvalues_P=lam,
    )


def error_constants(t: ImexTableau) -> tuple[float, float]:
    """Euclidean error constants ``(c_im, c_ex)`` of the implicit part and the extrapolation."""
    s = t.s
    c = t.c
    c_im = float(np.linalg.norm(order_residuals(t, s + 1)[s]))
    ex = (t.R - t.Rhat) @ c**s - t.Qhat @ (c - 1.0) ** s
    c_ex = float(np.linalg.norm(ex) / math.factorial(s))
    return c_im, c_ex


# -- exact rational helpers for the BDF conversion ---------------------------

def _fmat_mul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))]
            for i in range(len(A))]


def _fmat_lower_inv(L):
    n = len(L)
    X = [[Fraction(0)] * n for _ in range(n)]
    for j in range(n):
        for i in range(j, n):
            acc = Fraction(int(i == j)) - sum(L[i][k] * X[k][j] for k in range(j, i))
            X[i][j] = acc / L[i][i]
    return X


def _fscale(A, a):
    return [[a * x for x in row] for row in A]


def bdf_extrapolation_weights(s: int) -> list[Fraction]:
    """``(b_1..b_s) = e_s^T V0 V1^{-1}`` for the normalised nodes ``0, 1, ..., s-1``."""
    nodes = [Fraction(k - 1) for k in range(s)]
    return lagrange_weights(nodes, Fraction(s - 1))


def bdf_to_peer(s: int, coefficients: Sequence | None = None,
                alpha_deg: float | None = None) -> ImexTableau:
    """IMEX-BDF(s) with ``s`` substeps of size ``dt/s`` written as an s-stage Peer method.

    ``coefficients`` overrides the built-in BDF table (``a_0..a_s``).
    """
    if coefficients is None:
        if s not in BDF_TABLE:
            raise UnsupportedOrderError(f"no BDF coefficients for s={s}")
        a, alpha = BDF_TABLE[s]
        alpha_deg = alpha if alpha_deg is None else alpha_deg
    else:
        a = tuple(Fraction(x) for x in coefficients)
        if len(a) != s + 1:
            raise UnsupportedOrderError(f"need {s + 1} BDF coefficients, got {len(a)}")
    if a[0] == 0:
        raise TableauError("BDF coefficient a_0 must be nonzero")
    if sum(a) != 0:
        raise TableauError("BDF coefficients must sum to zero")

    b = bdf_extrapolation_weights(s)
    Z = Fraction(0)
    A1 = [[a[s + k - j] if j >= k else Z for j in range(s)] for k in range(s)]
    A2 = [[a[k - j] if j <= k else Z for j in range(s)] for k in range(s)]
    B1 = [[b[j - k] if j >= k else Z for j in range(s)] for k in range(s)]
    B2 = [[b[j + s - k] if j < k else Z for j in range(s)] for k in range(s)]

    A2inv = _fmat_lower_inv(A2)
    inv_s = Fraction(1, s)
    exact = {
        "c": [Fraction(k + 1, s) for k in range(s)],
        "P": _fscale(_fmat_mul(A2inv, A1), -1),
        "R": _fscale(A2inv, inv_s),
        "Qhat": _fscale(_fmat_mul(A2inv, B1), inv_s),
        "Rhat": _fscale(_fmat_mul(A2inv, B2), inv_s),
        "S1": B1,
        "S2": B2,
    }
    tab = assemble_imex(
        exact["c"], exact["P"], exact["R"], B2, label=f"imex-bdf{s}",
        alpha_deg=alpha_deg, source="BDF converted to Peer form", exact=exact,
    )
    # The lemma's Qhat must agree with the completion R S1.
    if np.max(np.abs(tab.Qhat - np.array(exact["Qhat"], dtype=float))) > INVARIANT_TOL:
        raise TableauError("BDF conversion: Qhat disagrees with R S1")
    return tab


def imex_peer2(mu: float = PEER2_MU) -> ImexTableau:
    """Two-stage method on the BDF2 base with ``S2[1, 0] = mu``."""
    base = bdf_to_peer(2)
    S2 = np.array([[0.0, 0.0], [mu, 0.0]])
    return assemble_imex(
        base.c, base.P, base.R, S2, label="imex-peer2", alpha_deg=90.0,
        source=f"BDF2 base, s21={mu!r}",
    )


def imex_euler() -> ImexTableau:
    """Implicit/explicit Euler pair as a one-stage Peer method."""
    return assemble_imex([1.0], [[1.0]], [[1.0]], [[0.0]], label="imex-euler",
                         alpha_deg=90.0)


def builtin(name: str) -> ImexTableau:
    key = name.lower()
    if key == "imex-euler":
        return imex_euler()
    if key in ("imex-bdf2", "imex-bdf3", "imex-bdf4"):
        return bdf_to_peer(int(key[-1]))
    if key == "imex-peer2":
        return imex_peer2()
    if key in ("imex-peer3", "imex-peer4"):
        raise TableauError(
            f"{name}: base coefficients are not bundled; load them with load_tableau()"
        )
    raise TableauError(f"unknown method {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


# -- file format ---------------------------------------------------------------

def _parse_number(x) -> float:
    if isinstance(x, str):
        return float(Fraction(x.strip()))
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TableauError(f"malformed number {x!r}")
    return float(x)


def _parse_matrix(obj, s: int, key: str) -> np.ndarray:
    try:
        M = np.array([[_parse_number(x) for x in row] for row in obj], dtype=float)
    except TypeError as exc:
        raise TableauError(f"malformed matrix {key!r}") from exc
    if M.shape != (s, s):
        raise TableauError(f"matrix {key!r} has shape {M.shape}, expected {(s, s)}")
    return M


def tableau_from_dict(data: dict) -> ImexTableau:
    for key in ("name", "s", "c", "P", "R", "S2"):
        if key not in data:
            raise TableauError(f"tableau file missing key {key!r}")
    s = int(data["s"])
    c = np.array([_parse_number(x) for x in data["c"]])
    if c.size != s:
        raise TableauError(f"node vector has {c.size} entries, expected {s}")
    tab = assemble_imex(
        c, _parse_matrix(data["P"], s, "P"), _parse_matrix(data["R"], s, "R"),
        _parse_matrix(data["S2"], s, "S2"), label=str(data["name"]),
        order=data.get("order"), alpha_deg=data.get("alpha_deg"),
        source=str(data.get("source", "")),
    )
    report = consistency_report(tab)
    if report.stage_order < tab.order:
        raise TableauError(
            f"invariant violated: stage order {report.stage_order} < declared order {tab.order}"
        )
    return tab


def tableau_to_dict(t: ImexTableau) -> dict:
    data = {
        "name": t.label,
        "s": t.s,
        "c": t.c.tolist(),
        "P": t.P.tolist(),
        "R": t.R.tolist(),
        "S2": t.S2.tolist(),
        "order": t.order,
    }
    if t.alpha_deg is not None:
        data["alpha_deg"] = t.alpha_deg
    if t.source:
        data["source"] = t.source
    return data


def load_tableau(path) -> ImexTableau:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TableauError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise TableauError(f"{path}: expected a JSON object")
    return tableau_from_dict(data)


def save_tableau(t: ImexTableau, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(tableau_to_dict(t), indent=2) + "\n")


def resolve(method: str) -> ImexTableau:
    """Built-in name or path to a tableau file."""
    if method.lower() in BUILTIN_NAMES:
        return builtin(method)
    p = Path(method)
    if p.suffix == ".json" or p.exists():
        return load_tableau(p)
    return builtin(method)
