"""Mode equations u'' + (2n+1)/r u' = R_A² f'(v0) u, u(0) = 1, u'(0) = 0.

Two independent solvers: an adaptive IVP integration started from the
series at the singular origin, and Picard iteration on the equivalent
Volterra integral equation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator

from .model import DomainError, NutrientFn
from .radial import RadialEquilibrium, cheb_nodes01

RTOL = 1e-13
ATOL = 1e-16
R_START = 1e-4


class ModeFailure(RuntimeError):
    """The computed mode profile violates a structural property."""


@dataclass(frozen=True)
class ModeSolution:
    n: int
    u1: float
    du1: float
    r: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.du1 / self.u1


def _coefficient(eq: RadialEquilibrium, f: NutrientFn):
    R2 = eq.R_A**2

    def q(r):
        return R2 * f.df(eq(r))

    return q


def solve_mode(n: int, eq: RadialEquilibrium, f: NutrientFn | None = None,
               grid_size: int = 256) -> ModeSolution:
    """Integrate the mode-n IVP on [0, 1]."""
    if n < 0 or int(n) != n:
        raise DomainError(f"mode index must be a nonnegative integer, got {n!r}")
    n = int(n)
    f = f if f is not None else eq.f
    R2 = eq.R_A**2
    c = eq.c_A
    a = R2 * float(f.df(np.array(c))) / (2 * (2 * n + 2))
    r = cheb_nodes01(grid_size)
    m = 2 * n + 1

    # v0 is carried along (v'' + v'/r = R_A² f(v)) so the coefficient needs no interpolation
    def rhs(t, y):
        return [y[1], R2 * f.f(y[0]) - y[1] / t,
                y[3], R2 * f.df(y[0]) * y[2] - m * y[3] / t]

    fc = float(f.f(np.array(c)))
    y0 = [c + R2 * fc * R_START**2 / 4.0, R2 * fc * R_START / 2.0,
          1.0 + a * R_START**2, 2 * a * R_START]
    t_eval = r[r >= R_START]
    atol = [ATOL * min(1.0, c), ATOL * min(1.0, c), ATOL, ATOL]
    sol = solve_ivp(rhs, (R_START, 1.0), y0, method="DOP853", rtol=RTOL, atol=atol,
                    t_eval=t_eval)
    if not sol.success:
        raise ModeFailure(f"mode {n}: integrator failed ({sol.message})")
    u, du = sol.y[2], sol.y[3]
    small = r[r < R_START]
    profile = np.concatenate([1.0 + a * small**2, u])
    u1, du1 = float(u[-1]), float(du[-1])
    if np.any(np.diff(profile) < -1e-14 * profile[:-1]) or u1 < 1.0 or du1 < 0.0:
        raise ModeFailure(f"mode {n}: profile is not increasing")
    return ModeSolution(n=n, u1=u1, du1=du1, r=r, profile=profile)


def solve_modes(ns, eq: RadialEquilibrium, f: NutrientFn | None = None,
                grid_size: int = 256, workers: int | None = None) -> list[ModeSolution]:
    """Solve a batch of modes over a shared equilibrium."""
    ns = list(ns)
    if workers is None or workers <= 1:
        return [solve_mode(n, eq, f, grid_size) for n in ns]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda n: solve_mode(n, eq, f, grid_size), ns))


def mode_ratio(n: int, eq: RadialEquilibrium, f: NutrientFn | None = None) -> float:
    """u_n'(1)/u_n(1)."""
    return solve_mode(n, eq, f).ratio


def solve_mode_volterra(n: int, eq: RadialEquilibrium, f: NutrientFn | None = None,
                        iterations: int = 200, nodes: int = 64, tol: float = 1e-15) -> ModeSolution:
    """Picard iteration on the Volterra form of the mode equation.

    With τ = r w the slope is u'(r) = r ∫_0^1 w^{2n+1} q(r w) u(r w) dw and
    u(r) = 1 + r ∫_0^1 u'(r t) dt, both by Gauss-Legendre quadrature, where
    q = R_A² f'(v0).
    """
    if n < 0 or int(n) != n:
        raise DomainError(f"mode index must be a nonnegative integer, got {n!r}")
    n = int(n)
    f = f if f is not None else eq.f
    q = _coefficient(eq, f)
    r = cheb_nodes01(nodes)
    x, w = np.polynomial.legendre.leggauss(max(48, n + 40))
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    pts = np.outer(r, t).ravel()
    # interpolation matrix from the nodes to all quadrature points
    interp = np.empty((pts.size, nodes))
    eye = np.eye(nodes)
    for j in range(nodes):
        interp[:, j] = BarycentricInterpolator(r, eye[j])(pts)
    kern = (wt * t ** (2 * n + 1) * q(pts).reshape(r.size, -1)) * r[:, None]

    u = np.ones(nodes)
    for it in range(iterations):
        du = np.einsum("ij,ij->i", kern, (interp @ u).reshape(r.size, -1))
        u_new = 1.0 + r * ((interp @ du).reshape(r.size, -1) @ wt)
        delta = np.max(np.abs(u_new - u))
        u = u_new
        if delta <= tol:
            break
    else:
        raise ModeFailure(f"mode {n}: Picard iteration did not converge ({delta:.2e})")
    du = np.einsum("ij,ij->i", kern, (interp @ u).reshape(r.size, -1))
    return ModeSolution(n=n, u1=float(u[-1]), du1=float(du[-1]), r=r, profile=u)


@dataclass
class EstimateReport:
    """Outcome of the mode estimates for 0 <= k <= k_max.

    ``violations`` fail the check; ``flags`` record bounds that are reported
    but not required (the sharper (2k+1)(2k+3) forms).
    """

    k_max: int
    M: float
    du1: np.ndarray
    u1: np.ndarray
    trend: np.ndarray
    violations: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self):
        yield f"M = {self.M:.10g}, k_max = {self.k_max}"
        for v in self.violations:
            yield f"VIOLATION {v}"
        for v in self.flags:
            yield f"flag {v}"


def estimate_constant(eq: RadialEquilibrium, f: NutrientFn | None = None,
                   u0_at_1: float | None = None) -> float:
    """M = R_A² u_0(1) max_[0,1] f'(v0)."""
    f = f if f is not None else eq.f
    if u0_at_1 is None:
        u0_at_1 = solve_mode(0, eq, f).u1
    s = np.linspace(0.0, 1.0, 2001)
    return eq.R_A**2 * u0_at_1 * float(np.max(f.df(eq(s))))


def verify_estimates(k_max: int, eq: RadialEquilibrium, f: NutrientFn | None = None,
                     sols: list[ModeSolution] | None = None, pointwise_tol: float = 1e-12) -> EstimateReport:
    """Check the mode estimates for 0 <= k <= k_max.

    Required: u_{k+1} <= u_k pointwise, u_k'(1) <= M/(2k+2),
    u_k(1) <= 1 + M/(4k+4), and a nonincreasing tail of k (u_k'(1) - u_{k+1}'(1)).
    The (2k+1)(2k+3) variants of both boundary bounds are flagged when violated.
    """
    if k_max < 2:
        raise DomainError("k_max must be at least 2")
    f = f if f is not None else eq.f
    if sols is None:
        sols = solve_modes(range(k_max + 2), eq, f)
    u1 = np.array([s.u1 for s in sols[: k_max + 2]])
    du1 = np.array([s.du1 for s in sols[: k_max + 2]])
    M = estimate_constant(eq, f, u1[0])
    rep = EstimateReport(k_max=k_max, M=M, du1=du1[: k_max + 1], u1=u1[: k_max + 1],
                         trend=np.array([k * (du1[k] - du1[k + 1]) for k in range(k_max + 1)]))
    for k in range(k_max + 1):
        gap = sols[k + 1].profile - sols[k].profile
        if np.max(gap) > pointwise_tol:
            rep.violations.append(f"(a) k={k}: u_(k+1) exceeds u_k by {np.max(gap):.3e}")
        if du1[k] > M / (2 * k + 2):
            rep.violations.append(f"(b) k={k}: u_k'(1) = {du1[k]:.6g} > M/(2k+2) = {M / (2 * k + 2):.6g}")
        sharp = M / ((2 * k + 1) * (2 * k + 3))
        if du1[k] > sharp:
            rep.flags.append(f"(b') k={k}: u_k'(1) = {du1[k]:.6g} > M/((2k+1)(2k+3)) = {sharp:.6g}")
        if u1[k] > 1 + M / (4 * k + 4):
            rep.violations.append(f"(c) k={k}: u_k(1) = {u1[k]:.6g} > 1 + M/(4k+4)")
        if u1[k] > 1 + sharp:
            rep.flags.append(f"(c') k={k}: u_k(1) = {u1[k]:.6g} > 1 + M/((2k+1)(2k+3)) = {1 + sharp:.6g}")
    tail = rep.trend[1:]
    if np.any(np.diff(tail) > 0):
        k_bad = 1 + int(np.argmax(np.diff(tail) > 0))
        rep.violations.append(f"(d) k(u_k'(1) - u_(k+1)'(1)) stops decreasing at k={k_bad}")
    return rep
