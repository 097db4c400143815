"""Uniform periodic grids and conservative finite-difference kernels.

Divergence-form operators are assembled in flux form with harmonic averaging
of the diffusion coefficient across cell faces; this reproduces effective
coefficients of one-dimensional laminates exactly.  The same assembly serves
the plain elliptic part, the tilted (drift + potential) eigenvalue operators,
and the cell-problem right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .media import Medium

__all__ = [
    "Grid",
    "SolverOptions",
    "DivOperator",
    "EigenPair",
    "SolverError",
    "EigenError",
    "assemble_div_operator",
    "cg_solve",
    "principal_eigen_iterate",
]


class SolverError(RuntimeError):
    """Iterative kernel failed (non-convergence or structural violation)."""


class EigenError(SolverError):
    """Principal eigenpair iteration failed or lost Perron positivity."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the periodicity cell, n_i nodes per period."""

    cell: object
    n: tuple[int, ...]
    budget: int = 2**22

    def __post_init__(self):
        if len(self.n) != self.cell.d:
            raise ValueError(f"expected {self.cell.d} grid sizes, got {len(self.n)}")
        if any(ni < 8 for ni in self.n):
            raise ValueError(f"grid sizes must be >= 8, got {self.n}")
        if int(np.prod(self.n)) > self.budget:
            raise ValueError(
                f"grid with {int(np.prod(self.n))} points exceeds budget {self.budget}"
            )

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(Li / ni for Li, ni in zip(self.cell.L, self.n))

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axes(self) -> list[np.ndarray]:
        return [
            np.arange(ni) * hi for ni, hi in zip(self.n, self.h)
        ]

    def meshes(self) -> list[np.ndarray]:
        ax = self.axes()
        if self.cell.d == 1:
            return ax
        return list(np.meshgrid(*ax, indexing="ij"))

    def average(self, values: np.ndarray) -> float:
        """Cell average of a nodal field (exact for trigonometric polynomials
        below the Nyquist mode, by periodic-trapezoid quadrature)."""
        return float(np.mean(values))


@dataclass
class SolverOptions:
    cg_tol: float = 1e-10
    cg_maxiter: int | None = None  # default 10 * N at solve time
    eigen_tol: float = 1e-10
    eigen_maxiter: int = 5000

    def __post_init__(self):
        if self.cg_tol <= 0 or self.eigen_tol <= 0:
            raise ValueError("tolerances must be positive")


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


@dataclass
class DivOperator:
    """Assembled periodic operator  psi -> div(A grad psi) [+ drift + potential].

    ``matrix`` acts on fields flattened in C order over the grid axes.
    With no drift and no potential the matrix is symmetric negative
    semi-definite and annihilates constants.
    """

    grid: Grid
    matrix: sp.csr_matrix
    has_drift: bool = False
    has_potential: bool = False
    potential: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, u: np.ndarray) -> np.ndarray:
        flat = self.matrix @ np.ravel(u)
        return flat.reshape(np.shape(u)) if np.ndim(u) > 1 else flat


def _diffusion_triplets(m: Medium, g: Grid):
    """COO triplets of the flux-form div(A grad .) part, plus face data."""
    d = g.cell.d
    X = g.meshes()
    idx = np.arange(g.size).reshape(g.n)
    rows, cols, vals = [], [], []
    for k in range(d):
        a = np.asarray(m.diffusion.entry(k, k, X), dtype=float)
        a = a + np.zeros(g.n)
        af = _harmonic(a, np.roll(a, -1, axis=k)) / g.h[k] ** 2
        nb = np.roll(idx, -1, axis=k)
        w = af.ravel()
        p = idx.ravel()
        q = nb.ravel()
        rows += [p, p, q, q]
        cols += [q, p, p, q]
        vals += [w, -w, w, -w]
    if d == 2 and m.diffusion.kind == "constant" and m.diffusion.params.get("a12", 0.0) != 0.0:
        a12 = m.diffusion.params["a12"]
        c = a12 / (2.0 * g.h[0] * g.h[1])
        p = idx.ravel()
        for s0, s1, sgn in (( -1, -1, +1.0), (-1, +1, -1.0), (+1, -1, -1.0), (+1, +1, +1.0)):
            q = np.roll(np.roll(idx, s0, axis=0), s1, axis=1).ravel()
            rows.append(p)
            cols.append(q)
            vals.append(np.full(g.size, sgn * c))
    return rows, cols, vals


def _drift_triplets(m: Medium, g: Grid, e: np.ndarray, mu: float):
    """Centered triplets of  psi -> 2 mu (e A grad psi)."""
    d = g.cell.d
    X = g.meshes()
    idx = np.arange(g.size).reshape(g.n)
    Ae = m.diffusion.row_dot(e, X)
    rows, cols, vals = [], [], []
    for k in range(d):
        w = 2.0 * mu * (np.asarray(Ae[k]) + np.zeros(g.n)) / (2.0 * g.h[k])
        p = idx.ravel()
        qp = np.roll(idx, -1, axis=k).ravel()
        qm = np.roll(idx, +1, axis=k).ravel()
        rows += [p, p]
        cols += [qp, qm]
        vals += [w.ravel(), -w.ravel()]
    return rows, cols, vals


def assemble_div_operator(
    m: Medium,
    g: Grid,
    e: np.ndarray | None = None,
    mu: float | None = None,
    state: float | None = None,
) -> DivOperator:
    """Assemble  psi -> div(A grad psi) + 2 mu (e A grad psi)
                        + (mu^2 eAe + mu div(Ae) + f_u(x, state)) psi.

    ``mu is None`` assembles the plain second-order part only.  The grid must
    live on the medium's cell.
    """
    if g.cell != m.cell:
        raise ValueError("grid and medium use different cells")
    if mu is not None and (e is None or state is None):
        raise ValueError("mu requires both a direction e and a state")
    rows, cols, vals = _diffusion_triplets(m, g)
    has_drift = False
    potential = None
    if mu is not None:
        e = np.asarray(e, dtype=float)
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError("direction e must be a unit vector")
        if mu != 0.0:
            r2, c2, v2 = _drift_triplets(m, g, e, mu)
            rows += r2
            cols += c2
            vals += v2
            has_drift = True
        X = g.meshes()
        eAe = np.asarray(m.diffusion.quadratic(e, X)) + np.zeros(g.n)
        divAe = np.asarray(m.diffusion.div_row(e, X)) + np.zeros(g.n)
        fu = np.asarray(m.f_u(X, float(state))) + np.zeros(g.n)
        potential = (mu**2 * eAe + mu * divAe + fu).ravel()
        p = np.arange(g.size)
        rows.append(p)
        cols.append(p)
        vals.append(potential)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.size, g.size),
    ).tocsr()
    return DivOperator(
        grid=g,
        matrix=mat,
        has_drift=has_drift,
        has_potential=potential is not None,
        potential=potential,
        meta={"mu": mu, "state": state, "e": None if e is None else tuple(np.atleast_1d(e))},
    )


def _as_spd_system(op) -> tuple[sp.csr_matrix, bool]:
    """Matrix + semidefiniteness flag for the SPD presentation of ``op``."""
    if isinstance(op, DivOperator):
        if op.has_drift:
            raise SolverError("cg_solve requires a symmetric system; operator has drift")
        return (-op.matrix).tocsr(), not op.has_potential
    if sp.issparse(op):
        return op.tocsr(), False
    return sp.csr_matrix(np.asarray(op, dtype=float)), False


def cg_solve(
    op,
    rhs: np.ndarray,
    opts: SolverOptions | None = None,
    semidefinite: bool | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Conjugate gradients for an SPD (or semi-definite) system.

    ``op`` may be a drift-free DivOperator (solved in its -div(A grad .)
    presentation) or any symmetric positive (semi-)definite matrix.  In the
    semi-definite case the rhs must have zero mean and the returned solution
    is mean-free.  Raises SolverError when the iteration budget is exhausted.
    """
    opts = opts or SolverOptions()
    K, semidef_auto = _as_spd_system(op)
    semidef = semidef_auto if semidefinite is None else semidefinite
    b = np.ravel(np.asarray(rhs, dtype=float)).copy()
    N = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(N)
    if semidef:
        mean = b.mean()
        if abs(mean) > 1e-8 * (np.abs(b).max() + 1.0):
            raise SolverError(f"semi-definite system needs zero-mean rhs; mean = {mean:.3e}")
        b -= mean
    x = np.zeros(N) if x0 is None else np.ravel(np.asarray(x0, dtype=float)).copy()
    r = b - K @ x
    p = r.copy()
    rr = float(r @ r)
    maxiter = opts.cg_maxiter or 10 * N
    for _ in range(maxiter):
        if np.sqrt(rr) <= opts.cg_tol * bnorm:
            break
        Kp = K @ p
        alpha = rr / float(p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    else:
        raise SolverError(
            f"cg_solve: no convergence in {maxiter} iterations "
            f"(relative residual {np.sqrt(rr) / bnorm:.3e})"
        )
    if semidef:
        x -= x.mean()
    return x


@dataclass
class EigenPair:
    """Principal eigenvalue with positive sup-normalized periodic eigenfunction."""

    lam: float
    psi: np.ndarray
    residual: float
    iterations: int = 0


def principal_eigen_iterate(
    op: DivOperator,
    opts: SolverOptions | None = None,
    psi0: np.ndarray | None = None,
) -> EigenPair:
    """Principal eigenpair of  L psi = lambda psi  with
    L = -[div(A grad .) + drift + potential] (the sign convention in which
    positive lambda certifies linear stability).

    Shifts L by a constant chosen from its Gershgorin rows so the shifted
    matrix is strictly diagonally dominant (an irreducible M-matrix when the
    off-diagonal signs permit), then runs inverse power iteration through a
    sparse LU factorization; the shift is removed from the reported value.
    The eigenvalue is validated by the residual ||L psi - lambda psi||_inf.
    """
    if not op.has_potential:
        raise SolverError("principal_eigen_iterate needs an operator with a potential")
    opts = opts or SolverOptions()
    L = (-op.matrix).tocsr()
    diag = L.diagonal()
    absrow = np.asarray(np.abs(L).sum(axis=1)).ravel()
    # strict diagonal dominance of L + sigma*I:  sigma > R_i - L_ii with
    # R_i the off-diagonal absolute row sum (= absrow - |diag|)
    sigma = 1.0 + max(0.0, float((absrow - np.abs(diag) - diag).max()))
    B = (L + sigma * sp.identity(L.shape[0])).tocsc()
    lu = splu(B)
    x = np.ones(L.shape[0]) if psi0 is None else np.ravel(np.asarray(psi0, float)).copy()
    x = x / np.max(np.abs(x))
    lam = 0.0
    res = np.inf
    it = 0
    for it in range(1, opts.eigen_maxiter + 1):
        y = lu.solve(x)
        if np.max(y) < -np.min(y):
            y = -y
        s = float(np.max(y))
        if not np.isfinite(s) or s == 0.0:
            raise EigenError("inverse iteration produced a degenerate vector")
        x = y / s
        Lx = L @ x
        lam = float((Lx @ x) / (x @ x))
        res = float(np.max(np.abs(Lx - lam * x)))
        if res <= opts.eigen_tol:
            break
    else:
        raise EigenError(
            f"principal eigenpair did not converge in {opts.eigen_maxiter} iterations "
            f"(residual {res:.3e})"
        )
    if np.min(x) <= 0.0:
        raise EigenError(
            "computed eigenfunction changes sign; grid too coarse for the "
            "Perron structure at these parameters"
        )
    x = x / np.max(x)
    return EigenPair(lam=lam, psi=x.reshape(op.grid.n), residual=res, iterations=it)
