"""Stability eigenvalues of the states 0/1 and exponential decay exponents.

lambda_minus(mu) / lambda_plus(mu) denote the principal eigenvalues of the
mu-tilted periodic operators linearized at the states 0 and 1.  Their roots
against c*mu give the decay rate ahead of the front (negative root, state 0)
and behind it (positive root, state 1).  Both curves are concave in mu, which
is what makes bracketing + bisection a safe root finder here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretize import (
    EigenPair,
    Grid,
    SolverError,
    SolverOptions,
    assemble_div_operator,
    principal_eigen_iterate,
)
from .media import Medium

__all__ = [
    "EigenPair",
    "DecayExponents",
    "stability_eigen",
    "weighted_lambda",
    "decay_roots",
]


@dataclass
class DecayExponents:
    """Roots of the tilted eigenvalue curves against c*mu.

    mu_minus < 0 solves lambda_minus(mu) = c*mu  (decay toward the state 0),
    mu_plus  > 0 solves lambda_plus(mu)  = c*mu  (approach to the state 1).
    """

    mu_minus: float
    mu_plus: float
    c: float
    residual_minus: float = 0.0
    residual_plus: float = 0.0


def stability_eigen(
    m: Medium,
    g: Grid,
    state: float,
    opts: SolverOptions | None = None,
    psi0: np.ndarray | None = None,
) -> EigenPair:
    """Principal eigenpair of  -div(A grad psi) - f_u(x, state) psi = lambda psi
    with periodic positive psi; lambda > 0 certifies linear stability."""
    if state not in (0, 1, 0.0, 1.0):
        raise ValueError("state must be 0 or 1")
    e = np.zeros(m.d)
    e[0] = 1.0
    op = assemble_div_operator(m, g, e=e, mu=0.0, state=float(state))
    return principal_eigen_iterate(op, opts, psi0=psi0)


def weighted_lambda(
    m: Medium,
    g: Grid,
    e: np.ndarray,
    mu: float,
    state: float,
    opts: SolverOptions | None = None,
    psi0: np.ndarray | None = None,
    mu_limit: float | None = None,
    return_pair: bool = False,
):
    """Principal eigenvalue lambda_1(mu) of the mu-tilted operator at a state.

    lambda_1(0) coincides with stability_eigen's eigenvalue.  ``mu_limit``
    (default 20 / min period) rejects tilts too fast for the grid to keep
    the discrete Perron structure.
    """
    limit = 20.0 / min(m.cell.L) if mu_limit is None else mu_limit
    if abs(mu) > limit:
        raise SolverError(f"|mu| = {abs(mu):.3g} beyond validated range {limit:.3g}")
    op = assemble_div_operator(m, g, e=e, mu=float(mu), state=float(state))
    pair = principal_eigen_iterate(op, opts, psi0=psi0)
    return pair if return_pair else pair.lam


def _bracket_and_bisect(curve, c, side, mu_limit, tol=1e-10):
    """Root of curve(mu) - c*mu on one sign side; curve(0) > 0 and concavity
    guarantee a sign change under geometric bracket expansion."""
    sgn = -1.0 if side == "negative" else 1.0
    g0 = curve(0.0)
    if g0 <= 0.0:
        raise SolverError("state not linearly stable: lambda(0) <= 0")
    mu = sgn * 0.25
    while True:
        if abs(mu) > mu_limit:
            raise SolverError(
                f"bracket expansion passed the validated mu-range ({mu_limit:.3g})"
            )
        if curve(mu) - c * mu < 0.0:
            break
        mu *= 2.0
    lo, hi = (mu, 0.0) if side == "negative" else (0.0, mu)
    # invariant: g > 0 at the zero-side end, g < 0 at the far end
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gmid = curve(mid) - c * mid
        if side == "negative":
            if gmid < 0.0:
                lo = mid
            else:
                hi = mid
        else:
            if gmid < 0.0:
                hi = mid
            else:
                lo = mid
    root = 0.5 * (lo + hi)
    return root, abs(curve(root) - c * root)


def decay_roots(
    m: Medium,
    g: Grid,
    e: np.ndarray,
    c: float,
    opts: SolverOptions | None = None,
    mu_limit: float | None = None,
) -> DecayExponents:
    """Decay exponents at speed c: the unique negative root of
    lambda_minus(mu) = c*mu and positive root of lambda_plus(mu) = c*mu.

    Each eigenvalue evaluation warm-starts from the previous eigenfunction,
    which cuts the inner iteration count considerably during bisection.
    """
    limit = 20.0 / min(m.cell.L) if mu_limit is None else mu_limit

    def make_curve(state):
        last_psi = {"psi": None}

        def curve(mu):
            pair = weighted_lambda(
                m, g, e, mu, state, opts,
                psi0=last_psi["psi"], mu_limit=limit, return_pair=True,
            )
            last_psi["psi"] = pair.psi
            return pair.lam

        return curve

    mu_minus, res_minus = _bracket_and_bisect(make_curve(0.0), c, "negative", limit)
    mu_plus, res_plus = _bracket_and_bisect(make_curve(1.0), c, "positive", limit)
    return DecayExponents(
        mu_minus=mu_minus,
        mu_plus=mu_plus,
        c=c,
        residual_minus=res_minus,
        residual_plus=res_plus,
    )
