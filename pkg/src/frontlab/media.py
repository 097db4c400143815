"""Periodic media: diffusion tensor field A(x), reaction f(x,u), cell geometry.

Coefficient families are closed-form (trigonometric in x, polynomial in u) so
that u- and x-derivatives are exact; the eigenvalue and front solvers depend
on derivative values free of differencing noise.  All reactions vanish at
u = 0 and u = 1 identically because the parametric forms keep the factors
u and (1 - u) unexpanded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Cell",
    "DiffusionSpec",
    "ReactionSpec",
    "Medium",
    "MediumError",
    "build_medium",
    "check_assumption_A3",
]

TWO_PI = 2.0 * np.pi


class MediumError(ValueError):
    """Raised for invalid medium parameters (ellipticity, symmetry, kinds)."""


@dataclass(frozen=True)
class Cell:
    """Periodicity cell: dimension d and per-axis periods L."""

    d: int
    L: tuple[float, ...]

    def __post_init__(self):
        if self.d not in (1, 2):
            raise MediumError(f"spatial dimension must be 1 or 2, got {self.d}")
        if len(self.L) != self.d:
            raise MediumError(f"expected {self.d} periods, got {len(self.L)}")
        if any(Li <= 0 for Li in self.L):
            raise MediumError(f"periods must be positive, got {self.L}")


def _trig_product(x: list[np.ndarray], L, modes, phases):
    """prod_i cos(2*pi*m_i*x_i/L_i - phase_i), broadcasting over the grids."""
    out = 1.0
    for xi, Li, mi, ph in zip(x, L, modes, phases):
        out = out * np.cos(TWO_PI * mi * xi / Li - ph)
    return out


def _trig_product_grad(x, L, modes, phases, axis):
    """d/dx_axis of _trig_product."""
    out = 1.0
    for j, (xi, Li, mi, ph) in enumerate(zip(x, L, modes, phases)):
        th = TWO_PI * mi * xi / Li - ph
        if j == axis:
            out = out * (-TWO_PI * mi / Li) * np.sin(th)
        else:
            out = out * np.cos(th)
    return out


@dataclass(frozen=True)
class DiffusionSpec:
    """Symmetric diffusion tensor field A(x) on the cell.

    kinds
    -----
    constant     : x-independent symmetric matrix (entries a11[, a12, a22]).
    laminate     : A(x) = a(x1) * I with a(x1) = base + amp*cos(2*pi*m*x1/L1 - phase).
    trigonometric: A(x) = a(x) * I with a(x) = base + amp * prod_i cos(2*pi*m_i*x_i/L_i - phase_i).
    """

    kind: str
    cell: Cell
    params: dict = field(default_factory=dict)
    alpha1: float = 0.0  # filled by build_medium

    def _scalar(self, x: list[np.ndarray]):
        p = self.params
        if self.kind == "laminate":
            th = TWO_PI * p["mode"] * x[0] / self.cell.L[0] - p["phase"]
            return p["base"] + p["amp"] * np.cos(th)
        if self.kind == "trigonometric":
            return p["base"] + p["amp"] * _trig_product(
                x, self.cell.L, p["modes"], p["phases"]
            )
        raise MediumError(f"no scalar profile for kind {self.kind!r}")

    def _scalar_grad(self, x: list[np.ndarray], axis: int):
        p = self.params
        if self.kind == "laminate":
            if axis != 0:
                return np.zeros(np.broadcast(*x).shape)
            th = TWO_PI * p["mode"] * x[0] / self.cell.L[0] - p["phase"]
            return -p["amp"] * TWO_PI * p["mode"] / self.cell.L[0] * np.sin(th)
        if self.kind == "trigonometric":
            return p["amp"] * _trig_product_grad(
                x, self.cell.L, p["modes"], p["phases"], axis
            )
        raise MediumError(f"no scalar profile for kind {self.kind!r}")

    def matrix(self, x: list[np.ndarray]) -> np.ndarray:
        """A(x) with shape (..., d, d); x is a list of d coordinate arrays."""
        d = self.cell.d
        shape = np.broadcast(*x).shape if x else ()
        A = np.zeros(shape + (d, d))
        if self.kind == "constant":
            p = self.params
            A[..., 0, 0] = p["a11"]
            if d == 2:
                A[..., 1, 1] = p["a22"]
                A[..., 0, 1] = A[..., 1, 0] = p["a12"]
        else:
            a = self._scalar(x)
            for j in range(d):
                A[..., j, j] = a
        return A

    def entry(self, i: int, j: int, x: list[np.ndarray]):
        """Single entry A_ij(x)."""
        if self.kind == "constant":
            p = self.params
            val = {(0, 0): p["a11"]}
            if self.cell.d == 2:
                val[(1, 1)] = p["a22"]
                val[(0, 1)] = val[(1, 0)] = p["a12"]
            return np.full(np.broadcast(*x).shape if x else (), val[(i, j)])
        if i != j:
            return np.zeros(np.broadcast(*x).shape)
        return self._scalar(x)

    def row_dot(self, e: np.ndarray, x: list[np.ndarray]):
        """(A(x) e)_j for all j, returned as a list of d arrays."""
        d = self.cell.d
        if self.kind == "constant":
            A = self.matrix([np.zeros(1)] * d)[0]
            Ae = A @ e
            shape = np.broadcast(*x).shape
            return [np.full(shape, Ae[j]) for j in range(d)]
        a = self._scalar(x)
        return [a * e[j] for j in range(d)]

    def quadratic(self, e: np.ndarray, x: list[np.ndarray]):
        """e . A(x) e."""
        Ae = self.row_dot(e, x)
        return sum(e[j] * Ae[j] for j in range(self.cell.d))

    def div_row(self, e: np.ndarray, x: list[np.ndarray]):
        """div_x (A(x) e), computed from the closed form."""
        if self.kind == "constant":
            return np.zeros(np.broadcast(*x).shape)
        out = 0.0
        for j in range(self.cell.d):
            out = out + e[j] * self._scalar_grad(x, j)
        return out


# The degree-5 reaction with stable interior state 1/4; factored evaluation
# keeps f(0) = f(1) = 0 exact in floating point.
_QUINTIC_ROOTS = (0.125, 0.25, 0.375)


def _quintic(u):
    out = u * (1.0 - u)
    for r in _QUINTIC_ROOTS:
        out = out * (u - r)
    return out


def _quintic_du(u):
    factors = [u, u - 0.125, u - 0.25, u - 0.375, 1.0 - u]
    dfactors = [1.0, 1.0, 1.0, 1.0, -1.0]
    total = 0.0
    for k in range(5):
        term = dfactors[k]
        for j in range(5):
            if j != k:
                term = term * factors[j]
        total = total + term
    return total


@dataclass(frozen=True)
class ReactionSpec:
    """Nonlinearity f(x,u) with exact zeros at u = 0 and u = 1.

    kinds
    -----
    cubic      : f = u (u - a(x)) (1 - u), a(x) = a0 + a1 * prod_i cos(2*pi*x_i/L_i - phase_i).
    quintic    : the x-independent degree-5 polynomial with zeros {0, 1/8, 1/4, 3/8, 1}.
    custom_poly: f = u (1 - u) * sum_k c_k(x) u^k with trigonometric c_k(x).
    """

    kind: str
    cell: Cell
    params: dict = field(default_factory=dict)

    def threshold(self, x: list[np.ndarray]):
        """The cubic's x-dependent middle zero a(x)."""
        if self.kind != "cubic":
            raise MediumError("threshold only defined for the cubic kind")
        p = self.params
        a = p["a0"]
        if p["a1"] != 0.0:
            a = a + p["a1"] * _trig_product(x, self.cell.L, p["modes"], p["phases"])
        return a + np.zeros(np.broadcast(*x).shape if x else ())

    def _poly_coeffs(self, x: list[np.ndarray]):
        p = self.params
        cs = []
        for pk, qk in zip(p["p"], p["q"]):
            ck = pk
            if qk != 0.0:
                ck = pk + qk * _trig_product(x, self.cell.L, p["modes"], p["phases"])
            cs.append(ck + np.zeros(np.broadcast(*x).shape if x else ()))
        return cs

    def value(self, x: list[np.ndarray], u):
        if self.kind == "quintic":
            return _quintic(u) + np.zeros(np.broadcast(*x).shape if x else ())
        if self.kind == "cubic":
            a = self.threshold(x)
            return u * (u - a) * (1.0 - u)
        if self.kind == "custom_poly":
            cs = self._poly_coeffs(x)
            s = 0.0
            for k, ck in enumerate(cs):
                s = s + ck * u**k
            return u * (1.0 - u) * s
        raise MediumError(f"unknown reaction kind {self.kind!r}")

    def du(self, x: list[np.ndarray], u):
        """Exact partial derivative with respect to u."""
        if self.kind == "quintic":
            return _quintic_du(u) + np.zeros(np.broadcast(*x).shape if x else ())
        if self.kind == "cubic":
            a = self.threshold(x)
            return -3.0 * u**2 + 2.0 * (1.0 + a) * u - a
        if self.kind == "custom_poly":
            cs = self._poly_coeffs(x)
            s = 0.0
            ds = 0.0
            for k, ck in enumerate(cs):
                s = s + ck * u**k
                if k > 0:
                    ds = ds + k * ck * u ** (k - 1)
            return (1.0 - 2.0 * u) * s + u * (1.0 - u) * ds
        raise MediumError(f"unknown reaction kind {self.kind!r}")


@dataclass(frozen=True)
class Medium:
    """Immutable periodic medium: cell geometry, diffusion field, reaction."""

    cell: Cell
    diffusion: DiffusionSpec
    reaction: ReactionSpec

    @property
    def d(self) -> int:
        return self.cell.d

    @property
    def alpha1(self) -> float:
        return self.diffusion.alpha1

    def A(self, x):
        return self.diffusion.matrix(x)

    def f(self, x, u):
        return self.reaction.value(x, u)

    def f_u(self, x, u):
        return self.reaction.du(x, u)

    def is_x_independent(self) -> bool:
        diff_const = self.diffusion.kind == "constant"
        r = self.reaction
        if r.kind == "quintic":
            react_const = True
        elif r.kind == "cubic":
            react_const = r.params["a1"] == 0.0
        else:
            react_const = all(q == 0.0 for q in r.params["q"])
        return diff_const and react_const


def _sample_axes(cell: Cell, per_period: int) -> list[np.ndarray]:
    axes = [
        np.linspace(0.0, Li, per_period, endpoint=False) for Li in cell.L
    ]
    return list(np.meshgrid(*axes, indexing="ij")) if cell.d > 1 else [axes[0]]


def _min_eigen_on_grid(spec: DiffusionSpec, per_period: int = 256) -> float:
    x = _sample_axes(spec.cell, per_period)
    A = spec.matrix(x)
    if spec.cell.d == 1:
        return float(A[..., 0, 0].min())
    a11, a22, a12 = A[..., 0, 0], A[..., 1, 1], A[..., 0, 1]
    tr = a11 + a22
    disc = np.sqrt((a11 - a22) ** 2 + 4.0 * a12**2)
    return float(((tr - disc) / 2.0).min())


_DIFFUSION_KINDS = ("constant", "laminate", "trigonometric")
_REACTION_KINDS = ("cubic", "quintic", "custom_poly")


def _make_diffusion(cell: Cell, kind: str, params: dict) -> DiffusionSpec:
    if kind not in _DIFFUSION_KINDS:
        raise MediumError(f"unknown diffusion kind {kind!r}; expected one of {_DIFFUSION_KINDS}")
    p = dict(params)
    if kind == "constant":
        p.setdefault("a11", 1.0)
        if cell.d == 2:
            p.setdefault("a22", p["a11"])
            p.setdefault("a12", 0.0)
            # symmetry is structural; reject an explicit a21 that disagrees
            if "a21" in p and p.pop("a21") != p["a12"]:
                raise MediumError("constant diffusion matrix must be symmetric (a21 != a12)")
    elif kind == "laminate":
        p.setdefault("base", 1.0)
        p.setdefault("amp", 0.0)
        p.setdefault("mode", 1)
        p.setdefault("phase", 0.0)
    else:
        p.setdefault("base", 1.0)
        p.setdefault("amp", 0.0)
        p.setdefault("modes", tuple([1] * cell.d))
        p.setdefault("phases", tuple([0.0] * cell.d))
    return DiffusionSpec(kind=kind, cell=cell, params=p)


def _make_reaction(cell: Cell, kind: str, params: dict) -> ReactionSpec:
    if kind not in _REACTION_KINDS:
        raise MediumError(f"unknown reaction kind {kind!r}; expected one of {_REACTION_KINDS}")
    p = dict(params)
    if kind == "cubic":
        if "a0" not in p:
            raise MediumError("cubic reaction requires parameter a0")
        p.setdefault("a1", 0.0)
        p.setdefault("modes", tuple([1] * cell.d))
        p.setdefault("phases", tuple([0.0] * cell.d))
    elif kind == "custom_poly":
        if "p" not in p:
            raise MediumError("custom_poly reaction requires coefficient list p")
        p["p"] = tuple(p["p"])
        p.setdefault("q", tuple([0.0] * len(p["p"])))
        p["q"] = tuple(p["q"])
        if len(p["q"]) != len(p["p"]):
            raise MediumError("custom_poly lists p and q must have equal length")
        p.setdefault("modes", tuple([1] * cell.d))
        p.setdefault("phases", tuple([0.0] * cell.d))
    return ReactionSpec(kind=kind, cell=cell, params=p)


def build_medium(config) -> Medium:
    """Build a validated Medium from a config carrying a ``medium`` section.

    ``config`` may be a RunConfig (cli module) or any object/dict exposing
    d, L, diffusion kind/params, reaction kind/params in the shapes the cli
    produces.  alpha1 is certified positive on a 256-per-period sample grid.
    """
    mc = config.medium if hasattr(config, "medium") else config
    if isinstance(mc, dict):
        d = mc["d"]
        L = tuple(mc["L"])
        dk, dp = mc["diffusion_kind"], mc.get("diffusion_params", {})
        rk, rp = mc["reaction_kind"], mc.get("reaction_params", {})
    else:
        d, L = mc.d, tuple(mc.L)
        dk, dp = mc.diffusion_kind, mc.diffusion_params
        rk, rp = mc.reaction_kind, mc.reaction_params
    cell = Cell(d=d, L=L)
    diff = _make_diffusion(cell, dk, dp)
    alpha1 = _min_eigen_on_grid(diff, per_period=256)
    if alpha1 <= 0.0:
        raise MediumError(
            f"diffusion field is not uniformly elliptic: min eigenvalue {alpha1:.3e} <= 0"
        )
    diff = DiffusionSpec(kind=diff.kind, cell=cell, params=diff.params, alpha1=alpha1)
    react = _make_reaction(cell, rk, rp)
    return Medium(cell=cell, diffusion=diff, reaction=react)


def check_assumption_A3(m: Medium, gamma0: float, per_period: int = 512):
    """Check uniform linear stability of the states 0 and 1.

    Returns (ok, report): ok is True iff f_u(x,0) <= -gamma0 and
    f_u(x,1) <= -gamma0 on a ``per_period``-per-period sample grid; the
    report carries the attained maxima of both derivative fields.
    """
    if gamma0 <= 0:
        raise MediumError("gamma0 must be positive")
    x = _sample_axes(m.cell, per_period)
    d0 = m.f_u(x, 0.0)
    d1 = m.f_u(x, 1.0)
    max0 = float(np.max(d0))
    max1 = float(np.max(d1))
    ok = (max0 <= -gamma0) and (max1 <= -gamma0)
    report = {
        "gamma0": gamma0,
        "max_fu_at_0": max0,
        "max_fu_at_1": max1,
        "ok": ok,
    }
    return ok, report
