"""Feasibility, linear optimization and projection over ``{v >= 0 : G v = g}``.

Two backends ship:

``highs``
    scipy's HiGHS for linear programs and a Clarabel second-order cone
    program for the projection.
``simplex``
    a dense two-phase tableau simplex with Bland's rule plus Lawson-Hanson
    NNLS.  Slow, small, and independent of the first; meant for
    cross-checking on systems with fewer than 10**4 columns.

The environment variable ``RAUM_SOLVER`` picks the default backend.
Infeasibility is only reported together with a Farkas vector ``y`` that has
been re-verified by multiplication: ``G'y <= 0`` and ``g'y > 0``.  When no
such vector can be produced the status is ``numerical_failure``.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, nnls

FEAS_TOL = 1e-7
OPT_TOL = 1e-8
FARKAS_TOL = 1e-9
FARKAS_MARGIN = 1e-7
SIMPLEX_MAX_COLS = 10_000

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"


class NumericalFailure(RuntimeError):
    """A backend did not converge and no verdict could be certified."""


class Infeasible(RuntimeError):
    """Raised by callers that require a feasible system."""


@dataclass
class LinearSystem:
    """A bare ``(G, g)`` pair, for systems not built from a dataset."""

    G: sp.spmatrix | np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.G = sp.csr_matrix(self.G, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.G.shape[0] != len(self.g):
            raise ValueError("G and g disagree on the number of rows")

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    @property
    def n_cols(self) -> int:
        return self.G.shape[1]

    def matrix(self) -> sp.csr_matrix:
        return self.G


@dataclass
class LpResult:
    status: str
    v: np.ndarray | None = None
    objective: float | None = None
    residual: float | None = None
    farkas: np.ndarray | None = None
    iterations: int = 0
    backend: str = ""
    message: str = ""
    seconds: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def diagnostics(self) -> dict:
        return {
            "status": self.status,
            "residual": self.residual,
            "objective": self.objective,
            "iterations": self.iterations,
            "backend": self.backend,
            "message": self.message,
            "seconds": round(self.seconds, 6),
        }


@dataclass
class Projection:
    distance: float
    v: np.ndarray
    backend: str = ""
    iterations: int = 0
    extras: dict = field(default_factory=dict)


@dataclass
class RawLp:
    """What a backend reports before any certification."""

    status: str  # optimal | infeasible | unbounded | error
    x: np.ndarray | None = None
    iterations: int = 0
    message: str = ""


# ---------------------------------------------------------------------------
# backends

class Backend:
    """Interface every solver engine implements."""

    name = "abstract"

    def lp(self, A: sp.csr_matrix, b: np.ndarray, c: np.ndarray) -> RawLp:
        """Minimize ``c'x`` subject to ``A x = b``, ``x >= 0``."""
        raise NotImplementedError

    def farkas(self, A: sp.csr_matrix, b: np.ndarray) -> np.ndarray | None:
        """A candidate ``y`` with ``A'y <= 0`` and ``b'y > 0``, or None."""
        raise NotImplementedError

    def project(self, A: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, int]:
        """A minimizer of ``|b - A x|^2`` over ``x >= 0`` and an iteration count."""
        raise NotImplementedError


class HighsBackend(Backend):
    name = "highs"

    def __init__(self, tol: float = 1e-9):
        self.options = {
            "primal_feasibility_tolerance": tol,
            "dual_feasibility_tolerance": tol,
            "presolve": True,
        }

    def lp(self, A, b, c):
        res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs", options=self.options)
        status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
        x = res.x if res.status == 0 else None
        return RawLp(status, x, int(getattr(res, "nit", 0) or 0), res.message)

    def farkas(self, A, b):
        m = A.shape[0]
        res = linprog(-b, A_ub=A.T.tocsr(), b_ub=np.zeros(A.shape[1]), bounds=(-1, 1),
                      method="highs", options=self.options)
        if res.status != 0 or -res.fun <= 0:
            return None
        return res.x[:m]

    def project(self, A, b):
        import clarabel

        # min t  s.t.  A x + r = b,  x >= 0,  |r| <= t.  Solving for the norm
        # rather than its square keeps tiny distances resolvable.
        m, n = A.shape
        A = sp.csc_matrix(A)
        P = sp.csc_matrix((n + m + 1, n + m + 1))
        q = np.zeros(n + m + 1)
        q[-1] = 1.0
        K = sp.vstack([
            sp.hstack([A, sp.eye(m), sp.csc_matrix((m, 1))]),
            sp.hstack([-sp.eye(n), sp.csc_matrix((n, m + 1))]),
            sp.hstack([sp.csc_matrix((1, n + m)), -sp.eye(1)]),
            sp.hstack([sp.csc_matrix((m, n)), -sp.eye(m), sp.csc_matrix((m, 1))]),
        ], format="csc")
        rhs = np.concatenate([b, np.zeros(n + 1 + m)])
        cones = [clarabel.ZeroConeT(m), clarabel.NonnegativeConeT(n),
                 clarabel.SecondOrderConeT(m + 1)]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = 1e-14
        settings.tol_gap_rel = 1e-14
        settings.tol_feas = 1e-12
        settings.tol_ktratio = 1e-10
        settings.max_iter = 500
        sol = clarabel.DefaultSolver(P, q, K, rhs, cones, settings).solve()
        status = str(sol.status)
        if "Solved" not in status:
            raise NumericalFailure(f"projection QP did not converge: {status}")
        return np.maximum(np.asarray(sol.x[:n]), 0.0), int(sol.iterations)


class SimplexBackend(Backend):
    """Dense two-phase tableau simplex with Bland's anti-cycling rule."""

    name = "simplex"

    def __init__(self, tol: float = 1e-9, max_iter: int = 200_000):
        self.tol = tol
        self.max_iter = max_iter

    def _check(self, A):
        if A.shape[1] >= SIMPLEX_MAX_COLS:
            raise ValueError(
                f"dense simplex is limited to {SIMPLEX_MAX_COLS} columns, system has {A.shape[1]}"
            )

    def lp(self, A, b, c):
        self._check(A)
        out = dense_simplex(_dense(A), np.asarray(b, float), np.asarray(c, float),
                            tol=self.tol, max_iter=self.max_iter)
        return RawLp(out["status"], out.get("x"), out["iterations"], out["status"])

    def farkas(self, A, b):
        self._check(A)
        out = dense_simplex(_dense(A), np.asarray(b, float), np.zeros(A.shape[1]),
                            tol=self.tol, max_iter=self.max_iter)
        return out.get("farkas")

    def project(self, A, b):
        self._check(A)
        x, _ = nnls(_dense(A), np.asarray(b, float), maxiter=50 * A.shape[1])
        return x, 0


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def dense_simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float = 1e-9,
                  max_iter: int = 200_000) -> dict:
    """Minimize ``c'x`` s.t. ``A x = b``, ``x >= 0`` by the tableau method.

    Returns a dict with ``status`` (optimal, infeasible, unbounded, error),
    ``x``, ``iterations`` and, when infeasible, the phase-one dual ``farkas``.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    iters = 0

    def run(T, basis, allowed):
        nonlocal iters
        rows = T.shape[0] - 1
        while True:
            if iters >= max_iter:
                return "error"
            rc = T[rows, :allowed]
            enter = np.flatnonzero(rc < -tol)
            if len(enter) == 0:
                return "optimal"
            j = int(enter[0])
            col = T[:rows, j]
            pos = np.flatnonzero(col > tol)
            if len(pos) == 0:
                return "unbounded"
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            i = int(min(ties, key=lambda r: basis[r]))
            _pivot(T, i, j)
            basis[i] = j
            iters += 1

    status = run(T, basis, n)
    if status == "error":
        return {"status": "error", "iterations": iters}
    phase1 = -T[m, -1]
    if phase1 > tol * max(1.0, np.abs(b).max(initial=0.0)) * 10:
        # dual of phase one: y_i = 1 - reduced cost of artificial i
        y = 1.0 - T[m, n:n + m]
        return {"status": "infeasible", "farkas": y * sign, "iterations": iters}

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            cand = np.flatnonzero(np.abs(T[i, :n]) > tol)
            if len(cand):
                _pivot(T, i, int(cand[0]))
                basis[i] = int(cand[0])
                keep.append(i)
        else:
            keep.append(i)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[i] for i in keep]
    cb = c[basis]
    T2[-1, :n] = c - cb @ T2[:-1, :n]
    T2[-1, -1] = -cb @ T2[:-1, -1]
    status = run(T2, basis, n)
    if status != "optimal":
        return {"status": status, "iterations": iters}
    x = np.zeros(n)
    x[basis] = T2[:-1, -1]
    return {"status": "optimal", "x": np.maximum(x, 0.0), "iterations": iters}


def _pivot(T: np.ndarray, i: int, j: int) -> None:
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])


BACKENDS = {"highs": HighsBackend, "simplex": SimplexBackend}


def get_backend(backend: str | Backend | None = None) -> Backend:
    if isinstance(backend, Backend):
        return backend
    name = backend or os.environ.get("RAUM_SOLVER", "highs")
    try:
        return BACKENDS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown solver backend {name!r}; choose from {sorted(BACKENDS)}") from None


# ---------------------------------------------------------------------------
# certified operations

def _pair(system) -> tuple[sp.csr_matrix, np.ndarray]:
    return sp.csr_matrix(system.matrix(), dtype=float), np.asarray(system.g, dtype=float)


def verify_farkas(G, g, y, tol: float = FARKAS_TOL, margin: float = FARKAS_MARGIN) -> bool:
    """True iff ``G'y <= tol`` componentwise and ``g'y > margin``."""
    if y is None:
        return False
    y = np.asarray(y, dtype=float)
    Gy = sp.csr_matrix(G).T @ y
    return bool(Gy.max(initial=-np.inf) <= tol and float(g @ y) > margin)


def farkas_certificate(system, backend=None) -> np.ndarray | None:
    """A verified Farkas vector for ``system``, normalized to max-norm 1."""
    G, g = _pair(system)
    y = get_backend(backend).farkas(G, g)
    if y is None:
        return None
    scale = np.abs(y).max()
    if scale == 0:
        return None
    y = y / scale
    y[np.abs(y) < 1e-12] = 0.0
    return y if verify_farkas(G, g, y) else None


def _solve(system, c, backend, feas_tol) -> LpResult:
    be = get_backend(backend)
    G, g = _pair(system)
    t0 = time.perf_counter()
    if G.shape[0] == 0:
        v = np.zeros(G.shape[1])
        return LpResult(FEASIBLE, v, float(c @ v), 0.0, backend=be.name)
    raw = be.lp(G, g, c)
    result = LpResult(NUMERICAL_FAILURE, iterations=raw.iterations, backend=be.name,
                      message=str(raw.message))
    if raw.status == "optimal":
        v = raw.x
        resid = float(np.max(np.abs(G @ v - g)))
        result.residual = resid
        if resid <= feas_tol and v.min(initial=0.0) >= -feas_tol:
            result.status = FEASIBLE
            result.v = v
            result.objective = float(c @ v)
    elif raw.status == "unbounded":
        result.status = UNBOUNDED
    if result.status == NUMERICAL_FAILURE:
        y = farkas_certificate(system, be)
        if y is not None:
            result.status = INFEASIBLE
            result.farkas = y
            result.v = None
    result.seconds = time.perf_counter() - t0
    return result


def solve_feasibility(system, backend=None, feas_tol: float = FEAS_TOL) -> LpResult:
    """Find ``v >= 0`` with ``G v = g`` or a verified proof that none exists."""
    return _solve(system, np.zeros(system.n_cols), backend, feas_tol)


def solve_linear(system, objective, sense: str = "min", backend=None,
                 feas_tol: float = FEAS_TOL) -> LpResult:
    """Optimize a linear objective over the polytope.

    ``objective`` is a dense vector over columns or a ``{column: weight}``
    mapping.  The returned objective value is always in the caller's sense.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    if isinstance(objective, dict):
        c = np.zeros(system.n_cols)
        for j, w in objective.items():
            c[j] += w
    else:
        c = np.asarray(objective, dtype=float)
        if c.shape != (system.n_cols,):
            raise ValueError(f"objective has shape {c.shape}, expected ({system.n_cols},)")
    sign = 1.0 if sense == "min" else -1.0
    res = _solve(system, sign * c, backend, feas_tol)
    if res.objective is not None:
        res.objective = float(c @ res.v)
    return res


def projection_distance(system, backend=None) -> Projection:
    """``min_{v >= 0} |g - G v|^2`` with its minimizer."""
    be = get_backend(backend)
    G, g = _pair(system)
    if G.shape[0] == 0:
        return Projection(0.0, np.zeros(G.shape[1]), be.name)
    v, iters = be.project(G, g)
    r = g - G @ v
    return Projection(float(r @ r), v, be.name, iters)

