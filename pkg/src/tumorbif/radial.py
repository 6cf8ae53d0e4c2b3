"""Radially symmetric equilibrium D(0, R_A).

Shooting in the center value c: integrate ψ'' + ψ'/r = f(ψ), ψ(0) = c,
ψ'(0) = 0 until ψ = 1, then pick c so that the boundary flux condition
2 ψ'(R)/R = A holds (the pressure is constant on a disk).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import DomainError, NutrientFn, ModelParams, validate_params

RTOL = 1e-13
ATOL = 1e-15
R_START = 1e-4


class DivergenceError(RuntimeError):
    """The shooting trajectory did not reach ψ = 1 before r_max."""


class SolverError(RuntimeError):
    """Root bracketing or monotonicity of the shooting map failed."""


def cheb_nodes01(n: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes on [0, 1], increasing."""
    j = np.arange(n)
    return 0.5 * (1.0 - np.cos(np.pi * j / (n - 1)))


@dataclass(frozen=True)
class RadialProfile:
    R: float
    slope: float
    sol: object = field(repr=False)
    c: float = 0.0
    f: NutrientFn = field(default_factory=NutrientFn.identity, repr=False)

    def __call__(self, r):
        """ψ(r) for 0 <= r <= R."""
        r = np.asarray(r, dtype=float)
        out = np.where(r < R_START, self.c + self.f.f(np.array(self.c)) * r**2 / 4.0, 0.0)
        big = r >= R_START
        if np.any(big):
            out = np.array(out, dtype=float)
            out[big] = self.sol(r[big])[0]
        return out


def _rhs(f: NutrientFn):
    def rhs(r, y):
        return [y[1], f.f(y[0]) - y[1] / r]

    return rhs


def integrate_radial_ivp(c: float, f: NutrientFn, r_max: float = 1e3) -> RadialProfile:
    """Integrate outward from ψ(0) = c until ψ reaches 1.

    Returns the hit radius R(c), the slope ψ'(R(c)) and a dense profile.
    """
    if not 0.0 < c < 1.0:
        raise DomainError(f"center value c = {c!r} must lie in (0, 1)")
    fc = float(f.f(np.array(c)))
    y0 = [c + fc * R_START**2 / 4.0, fc * R_START / 2.0]

    def hit(r, y):
        return y[0] - 1.0

    hit.terminal = True
    hit.direction = 1
    # ψ starts at c, which is tiny for large disks: keep the absolute tolerance relative to it
    sol = solve_ivp(_rhs(f), (R_START, r_max), y0, method="DOP853", rtol=RTOL, atol=ATOL * min(1.0, c),
                    events=hit, dense_output=True)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise DivergenceError(f"psi did not reach 1 before r_max = {r_max:g} (c = {c:g})")
    R = float(sol.t_events[0][0])
    slope = float(sol.y_events[0][0][1])
    return RadialProfile(R=R, slope=slope, sol=sol.sol, c=c, f=f)


@dataclass(frozen=True)
class RadialEquilibrium:
    """The disk steady state, with v0(s) = ψ(s R_A) sampled on Chebyshev nodes."""

    A: float
    R_A: float
    c_A: float
    nodes: np.ndarray = field(repr=False)
    v0: np.ndarray = field(repr=False)
    dv0: np.ndarray = field(repr=False)
    f: NutrientFn = field(default_factory=NutrientFn.identity, repr=False)
    residual: float = 0.0

    def __post_init__(self):
        cheb = Chebyshev.fit(self.nodes, self.v0, self.nodes.size - 1, domain=[0.0, 1.0])
        # trailing coefficients below rounding only slow down evaluation
        keep = np.nonzero(np.abs(cheb.coef) > 1e-16 * np.max(np.abs(cheb.coef)))[0]
        cheb = cheb.cutdeg(int(keep[-1]) if keep.size else 0)
        object.__setattr__(self, "_cheb", cheb)
        object.__setattr__(self, "_dcheb", cheb.deriv())

    def __call__(self, s):
        return self._cheb(s)

    def derivative(self, s):
        """dv0/ds on [0, 1], from the interpolant."""
        return self._dcheb(s)

    @property
    def f1(self) -> float:
        return float(self.f.f(np.array(1.0)))

    def pressure_at(self, G: float) -> float:
        """Constant pressure of the disk state, 1/R_A - A G R_A²/4."""
        return 1.0 / self.R_A - self.A * G * self.R_A**2 / 4.0


def _flux_defect(c: float, f: NutrientFn, A: float) -> float:
    prof = integrate_radial_ivp(c, f)
    return 2.0 * prof.slope / prof.R - A


def find_RA(A: float, f: NutrientFn | None = None, tol: float = 1e-12,
            grid_size: int = 256, residual_tol: float = 1e-10) -> RadialEquilibrium:
    """Solve for the radius R_A of the radial equilibrium.

    Brent's bracketed root finder on the center value c ∈ (0, 1) for
    2 ψ'(R(c))/R(c) = A.
    """
    f = f if f is not None else NutrientFn.identity()
    validate_params(ModelParams(A=A, f=f))

    hi = 1.0 - 1e-6
    g_hi = _flux_defect(hi, f, A)
    lo = 0.5
    g_lo = _flux_defect(lo, f, A)
    while g_lo > 0 and lo > 1e-150:
        lo *= 0.1
        g_lo = _flux_defect(lo, f, A)
    if not (g_lo < 0 < g_hi):
        raise SolverError(f"no sign change of the flux defect on [{lo:g}, {hi:g}] for A = {A:g}")
    # small A puts c_A close to 0, so the absolute tolerance scales with the bracket
    c = brentq(_flux_defect, lo, hi, args=(f, A), xtol=tol * lo, rtol=4 * np.finfo(float).eps,
               maxiter=200)

    prof = integrate_radial_ivp(c, f)
    # the shooting map must be locally monotone for the root to be the unique one
    dc = 1e-4 * min(c, 1 - c)
    if not integrate_radial_ivp(c - dc, f).R > prof.R > integrate_radial_ivp(c + dc, f).R:
        raise SolverError(f"hit radius is not decreasing in c near c = {c:g}")
    residual = abs(2.0 * prof.slope / prof.R - A)
    if residual > residual_tol:
        raise SolverError(f"flux residual {residual:.3e} exceeds {residual_tol:.1e}")

    s = cheb_nodes01(grid_size)
    r = s * prof.R
    v0 = prof(r)
    v0[-1] = 1.0
    dpsi = np.where(r < R_START, float(f.f(np.array(c))) * r / 2.0, 0.0)
    big = r >= R_START
    dpsi[big] = prof.sol(r[big])[1]
    dpsi[-1] = prof.slope
    return RadialEquilibrium(A=A, R_A=prof.R, c_A=c, nodes=s, v0=v0, dv0=dpsi * prof.R,
                             f=f, residual=residual)


def eval_v0(eq: RadialEquilibrium, r):
    """Interpolated v0(r) for r in [0, 1]."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(r_arr > 1):
        raise DomainError("v0 is defined on [0, 1]")
    out = eq(r_arr)
    return float(out) if np.ndim(out) == 0 else out
