"""Dirichlet problems on Ω_ρ and the boundary operator Φ(G, ρ).

Chart: x = h(σ, θ) (cos θ, sin θ) with σ ∈ [0, 1] and h(1, θ) = R_A (1 + ρ(θ));
see ShapeData for the interior radius map. For r = h(σ, θ), a = 1/h_σ and
c = h_θ/h_σ the Laplacian is

    Δu = (a² + c²/h²) u_σσ + (a a_σ + a/h + (c c_σ - c_θ)/h²) u_σ
         - (2c/h²) u_σθ + u_θθ/h².

Discretization: Fourier collocation in θ, Chebyshev collocation in σ on
[-1, 1] folded with u(-σ, θ) = u(σ, θ + π) so that no node sits at the
center. Linear systems are solved matrix-free by GMRES, preconditioned
with the disk operator, which is diagonal in the Fourier index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import barycentric_interpolate
from scipy.sparse.linalg import LinearOperator, gmres

from .geometry import ShapeCoeffs, ShapeError, curvature, eval_shape
from .model import NutrientFn
from .radial import RadialEquilibrium
from .spectrum import SymbolTable, mu

log = logging.getLogger(__name__)

MIN_NR = 32
MIN_NTHETA = 64


class FieldSolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


class MultiplierCheckFailure(AssertionError):
    pass


def cheb(N: int):
    """Chebyshev-Lobatto points x_j = cos(jπ/N) and the differentiation matrix."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


@dataclass(frozen=True)
class FieldGrid:
    """n_r chart radii in (0, 1] (index 0 is the boundary) times n_theta angles."""

    n_r: int = 48
    n_theta: int = 128

    def __post_init__(self):
        if self.n_r < MIN_NR or self.n_theta < MIN_NTHETA or self.n_theta % 2:
            raise ValueError(f"grid needs n_r >= {MIN_NR} and even n_theta >= {MIN_NTHETA}")
        N = 2 * self.n_r - 1
        x, D = cheb(N)
        D2 = D @ D
        half = np.arange(self.n_r)
        mirror = N - half
        object.__setattr__(self, "sigma", x[: self.n_r])
        object.__setattr__(self, "theta", 2 * np.pi * np.arange(self.n_theta) / self.n_theta)
        object.__setattr__(self, "D1p", D[: self.n_r][:, half])
        object.__setattr__(self, "D1m", D[: self.n_r][:, mirror])
        object.__setattr__(self, "D2p", D2[: self.n_r][:, half])
        object.__setattr__(self, "D2m", D2[: self.n_r][:, mirror])
        object.__setattr__(self, "row_scale", float(np.max(
            np.abs(D2[1: self.n_r][:, half]).sum(axis=1) + np.abs(D2[1: self.n_r][:, mirror]).sum(axis=1))))
        object.__setattr__(self, "wavenumber", np.fft.rfftfreq(self.n_theta, 1.0 / self.n_theta))

    def refined(self) -> "FieldGrid":
        return FieldGrid(2 * self.n_r, 2 * self.n_theta)

    def symmetric(self, l: int) -> "FieldGrid":
        """Same grid with n_theta rounded up to a multiple of lcm(2, l).

        Rotation by 2π/l then maps the grid to itself, so the discrete
        problem keeps the symmetry exactly instead of aliasing high
        wavenumbers of Φ onto modes outside the cos(k l s) family.
        """
        m = math.lcm(2, l)
        return FieldGrid(self.n_r, -(-self.n_theta // m) * m)

    def along_diameter(self, U, j: int, s):
        """Interpolate U along the diameter through θ_j at chart radii s ∈ [-1, 1].

        Negative s lie on the ray θ_j + π, which is the folded half of the
        Chebyshev line.
        """
        N = 2 * self.n_r - 1
        x = np.cos(np.pi * np.arange(N + 1) / N)
        v = np.empty(N + 1)
        v[: self.n_r] = U[:, j]
        v[N - np.arange(self.n_r)] = U[:, (j + self.n_theta // 2) % self.n_theta]
        return barycentric_interpolate(x, v, s)

    def shift_pi(self, U):
        return np.roll(U, -self.n_theta // 2, axis=-1)

    def d_sigma(self, U):
        return self.D1p @ U + self.D1m @ self.shift_pi(U)

    def d_sigma2(self, U):
        return self.D2p @ U + self.D2m @ self.shift_pi(U)

    def d_theta(self, U, order=1):
        k = self.wavenumber
        mult = (1j * k) ** order
        if order % 2 == 1:
            mult[-1] = 0.0
        return np.fft.irfft(np.fft.rfft(U, axis=-1) * mult, n=self.n_theta, axis=-1)


@dataclass(frozen=True)
class ShapeData:
    """Coefficients of R_A² Δ in chart coordinates at the grid nodes.

    The chart radius is h(σ, θ) = R_A σ (1 + ρ_e(θ) + σ ρ_o(θ)), where ρ_e and
    ρ_o collect the even and odd wavenumbers of ρ. It meets Γ_ρ at σ = 1 and
    satisfies h(-σ, θ + π) = -h(σ, θ), so the folded σ-lines stay smooth
    through the center for every ρ; for even-only ρ it is the plain scaling
    σ R_A (1 + ρ).
    """

    c_ss: np.ndarray
    c_s: np.ndarray
    c_st: np.ndarray
    c_tt: np.ndarray
    a1: np.ndarray
    slope1: np.ndarray
    r1: np.ndarray
    drho: np.ndarray

    @classmethod
    def build(cls, rho: ShapeCoeffs, R_A: float, sigma, theta) -> "ShapeData":
        p, dp, ddp = eval_shape(rho, theta)
        q, dq, ddq = eval_shape(rho, theta + np.pi)
        e, de, dde = (p + q) / 2, (dp + dq) / 2, (ddp + ddq) / 2
        o, do, ddo = (p - q) / 2, (dp - dq) / 2, (ddp - ddq) / 2
        s = np.asarray(sigma)[:, None]
        R = R_A
        h = R * s * (1 + e + s * o)
        h_s = R * (1 + e + 2 * s * o)
        h_t = R * s * (de + s * do)
        h_ss = 2 * R * o + 0 * s
        h_st = R * (de + 2 * s * do)
        h_tt = R * s * (dde + s * ddo)
        a = 1 / h_s
        a_s = -h_ss / h_s**2
        c = h_t / h_s
        c_s = (h_st * h_s - h_t * h_ss) / h_s**2
        c_t = (h_tt * h_s - h_t * h_st) / h_s**2
        R2 = R * R
        return cls(
            c_ss=R2 * (a**2 + c**2 / h**2),
            c_s=R2 * (a * a_s + a / h + (c * c_s - c_t) / h**2),
            c_st=-2 * R2 * c / h**2,
            c_tt=R2 / h**2,
            a1=a[0],
            slope1=c[0],
            r1=R * (1 + p),
            drho=dp,
        )


def apply_laplacian(grid: FieldGrid, shape: ShapeData, U):
    """R_A² Δu at the nodes (boundary row included, but only interior rows are used)."""
    Us = grid.d_sigma(U)
    Uss = grid.d_sigma2(U)
    Ut = grid.d_theta(U)
    Utt = grid.d_theta(U, 2)
    Ust = grid.d_sigma(Ut)
    return shape.c_ss * Uss + shape.c_s * Us + shape.c_st * Ust + shape.c_tt * Utt


class DiskPreconditioner:
    """Inverse of the ρ = 0 operator u_σσ + u_σ/σ + u_θθ/σ² - c(σ) u, one radial block per Fourier mode.

    The block inverses are formed once and applied as a batched matrix
    product; LAPACK getrs in some OpenBLAS builds is not safe to call from
    concurrent threads, while the product is.
    """

    def __init__(self, grid: FieldGrid, c=None):
        self.grid = grid
        n = grid.n_r
        s = grid.sigma[1:]
        c = np.zeros(n - 1) if c is None else np.asarray(c)
        blocks = []
        for m in grid.wavenumber.astype(int):
            sign = (-1.0) ** m
            L = (grid.D2p + sign * grid.D2m)[1:, 1:] + ((grid.D1p + sign * grid.D1m)[1:, 1:]) / s[:, None]
            L -= np.diag(m**2 / s**2 + c)
            blocks.append(L)
        self.inverse = np.linalg.inv(np.array(blocks))

    def solve(self, r):
        g = self.grid
        Rh = np.fft.rfft(r.reshape(g.n_r - 1, g.n_theta), axis=1)
        # (modes, n_r - 1, 2) real/imag columns per mode
        rhs = np.stack([Rh.real.T, Rh.imag.T], axis=-1)
        sol = self.inverse @ rhs
        out = (sol[..., 0] + 1j * sol[..., 1]).T
        return np.fft.irfft(out, n=g.n_theta, axis=1).ravel()


def _gmres(matvec, rhs, precond, tol, cycles=4, label=""):
    """Left-preconditioned GMRES with a few residual-correction sweeps.

    Convergence is measured on P(b - A x), P the disk inverse: the raw
    collocation rows carry 1/σ² weights of order 1e7, so their residual says
    little about the error in x. Right-hand sides near the rounding floor
    cannot reach ``tol``; the best iterate is accepted unless the relative
    preconditioned residual exceeds 1e-6.
    """
    n = rhs.size
    A = LinearOperator((n, n), matvec=lambda v: precond(matvec(v)), dtype=float)
    b = precond(rhs)
    scale = np.linalg.norm(b)
    if scale == 0:
        return np.zeros_like(rhs)
    x = np.zeros_like(rhs)
    res = scale
    for _ in range(cycles):
        dx, _info = gmres(A, b - A.matvec(x), rtol=tol, atol=0.0, restart=60, maxiter=2)
        x_new = x + dx
        res_new = np.linalg.norm(b - A.matvec(x_new))
        if res_new >= res:
            break
        x, res = x_new, res_new
        if res <= tol * scale:
            break
    log.debug("%s gmres: relative residual %.2e", label, res / scale)
    if res > 1e-6 * scale:
        raise FieldSolverError(f"{label} linear solve stalled at relative residual {res / scale:.2e}")
    return x


@dataclass(frozen=True)
class FieldSolution:
    grid: FieldGrid = field(repr=False)
    rho: ShapeCoeffs
    psi: np.ndarray = field(repr=False)
    p_curv: np.ndarray = field(repr=False)
    p_grow: np.ndarray = field(repr=False)
    nutrient_residual: float = 0.0
    newton_history: tuple = ()
    deviations: tuple = field(default=(), repr=False)

    def center_value(self, U=None) -> float:
        """Value at the center of Ω_ρ (ψ by default)."""
        return float(self.grid.along_diameter(self.psi if U is None else U, 0, 0.0))

    def pressure(self, G: float) -> np.ndarray:
        """p = p_curv + G p_grow, boundary data κ - A G |x|²/4."""
        return self.p_curv + G * self.p_grow


@dataclass(frozen=True)
class PhiTrace:
    """Φ(G, ρ) at the grid angles and its cosine/sine coefficients in cos(m s), sin(m s)."""

    G: float
    theta: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def cos_coeffs(self) -> np.ndarray:
        n = self.values.size
        c = np.fft.rfft(self.values).real * 2.0 / n
        c[0] /= 2.0
        c[-1] /= 2.0
        return c

    @property
    def sin_coeffs(self) -> np.ndarray:
        return -np.fft.rfft(self.values).imag * 2.0 / self.values.size

    def family(self, l: int, K: int | None = None) -> np.ndarray:
        """Coefficients of cos(k l s), k = 0..K."""
        c = self.cos_coeffs[::l]
        return c if K is None else c[: K + 1]

    def leakage(self, l: int) -> float:
        """Largest coefficient outside the cos(k l s) family."""
        c = self.cos_coeffs.copy()
        c[::l] = 0.0
        return float(max(np.max(np.abs(c)), np.max(np.abs(self.sin_coeffs))))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


class FieldSolver:
    """Nutrient and pressure solves on Ω_ρ for a fixed disk state and grid."""

    def __init__(self, eq: RadialEquilibrium, f: NutrientFn | None = None,
                 grid: FieldGrid | None = None, newton_tol: float = 1e-10,
                 linear_tol: float = 1e-14, max_newton: int = 50,
                 step_tol: float = 1e-12):
        self.eq = eq
        self.f = f if f is not None else eq.f
        self.grid = grid if grid is not None else FieldGrid()
        self.newton_tol = newton_tol
        self.linear_tol = linear_tol
        self.max_newton = max_newton
        self.step_tol = step_tol
        s = self.grid.sigma
        self.v0 = eq(s)
        self.v0[0] = 1.0
        # v0' and v0'' = R_A² f(v0) - v0'/σ give Δ(v0(σ)) in closed form
        self.dv0 = eq.derivative(s)
        self.dv0[0] = eq.dv0[-1]
        self.d2v0 = eq.R_A**2 * self.f.f(self.v0) - self.dv0 / s
        self.laplace_pc = DiskPreconditioner(self.grid)
        self.nutrient_pc = DiskPreconditioner(self.grid, eq.R_A**2 * self.f.df(self.v0[1:]))

    @property
    def R_A(self) -> float:
        return self.eq.R_A

    def _interior(self, U):
        return U[1:].ravel()

    def _full(self, w, boundary):
        g = self.grid
        U = np.empty((g.n_r, g.n_theta))
        U[0] = boundary
        U[1:] = w.reshape(g.n_r - 1, g.n_theta)
        return U

    def shape_data(self, rho: ShapeCoeffs) -> ShapeData:
        rho.check()
        if rho.max_wavenumber >= self.grid.n_theta // 2:
            raise ShapeError(f"wavenumber {rho.max_wavenumber} is not resolved by n_theta = {self.grid.n_theta}")
        return ShapeData.build(rho, self.R_A, self.grid.sigma, self.grid.theta)

    def solve_nutrient(self, rho: ShapeCoeffs, shape: ShapeData | None = None):
        """Newton iteration for Δψ = f(ψ) in Ω_ρ, ψ = 1 on Γ_ρ; returns (ψ, residual, history).

        The residual is max |σ² R_A² (Δψ - f(ψ))| over the interior nodes divided
        by the largest absolute row sum of the radial second-derivative matrix,
        a backward-error measure: the unscaled rows sit on a rounding floor of
        about 1e-16 times that row sum (~1e7 at n_r = 48).
        """
        W, res, history = self._nutrient_deviation(rho, shape)
        return self.v0[:, None] + W, res, history

    def _nutrient_deviation(self, rho: ShapeCoeffs, shape: ShapeData | None = None):
        """Solve for w = ψ - v0(σ), which vanishes on Γ_ρ and is O(ρ).

        Δ(v0(σ)) is formed from the chart coefficients and v0', v0'' without
        differentiation matrices, so rounding scales with |w| rather than |ψ|.
        """
        g = self.grid
        shape = self.shape_data(rho) if shape is None else shape
        b2 = self.R_A**2
        s2 = g.sigma[1:, None] ** 2 / g.row_scale
        v0 = self.v0[:, None]
        lap_v0 = (shape.c_ss * self.d2v0[:, None] + shape.c_s * self.dv0[:, None])[1:]
        W = np.zeros((g.n_r, g.n_theta))
        history = []
        step = np.inf
        for it in range(self.max_newton):
            F = apply_laplacian(g, shape, W)[1:] + lap_v0 - b2 * self.f.f(v0 + W)[1:]
            res = float(np.max(np.abs(s2 * F)))
            history.append(res)
            if res <= self.newton_tol and step <= self.step_tol:
                return W, res, history
            fp = b2 * self.f.df((v0 + W)[1:])

            def jac(w):
                X = self._full(w, 0.0)
                return (apply_laplacian(g, shape, X)[1:] - fp * X[1:]).ravel()

            delta = _gmres(jac, -F.ravel(), self.nutrient_pc.solve, self.linear_tol, label="nutrient")
            step = float(np.max(np.abs(delta)))
            log.debug("newton %d: residual %.3e step %.3e", it, res, step)
            W = self._full(self._interior(W) + delta, 0.0)
        raise FieldSolverError(f"Newton did not converge in {self.max_newton} iterations", history)

    def _solve_laplace(self, shape: ShapeData, boundary):
        g = self.grid

        def op(w):
            return apply_laplacian(g, shape, self._full(w, 0.0))[1:].ravel()

        rhs = -apply_laplacian(g, shape, self._full(np.zeros((g.n_r - 1) * g.n_theta), boundary))[1:].ravel()
        w = _gmres(op, rhs, self.laplace_pc.solve, self.linear_tol, label="pressure")
        return self._full(w, boundary)

    def pressure_data(self, rho: ShapeCoeffs, shape: ShapeData | None = None):
        """Boundary data split as κ and -A |x|²/4 (the latter multiplies G)."""
        shape = self.shape_data(rho) if shape is None else shape
        kappa = curvature(rho, self.R_A, self.grid.theta)
        return kappa, -self.eq.A * shape.r1**2 / 4.0

    def _pressure_constants(self):
        """Disk values of the two pressure parts, subtracted before solving."""
        return 1.0 / self.R_A, -self.eq.A * self.R_A**2 / 4.0

    def solve(self, rho: ShapeCoeffs) -> FieldSolution:
        shape = self.shape_data(rho)
        W, res, hist = self._nutrient_deviation(rho, shape)
        kappa, grow = self.pressure_data(rho, shape)
        c_curv, c_grow = self._pressure_constants()
        z_curv = self._solve_laplace(shape, kappa - c_curv)
        z_grow = self._solve_laplace(shape, grow - c_grow)
        return FieldSolution(grid=self.grid, rho=rho, psi=self.v0[:, None] + W, p_curv=c_curv + z_curv,
                             p_grow=c_grow + z_grow, nutrient_residual=res, newton_history=tuple(hist),
                             deviations=(W, z_curv, z_grow))

    def solve_pressure(self, rho: ShapeCoeffs, G: float) -> np.ndarray:
        shape = self.shape_data(rho)
        kappa, grow = self.pressure_data(rho, shape)
        c = sum(self._pressure_constants()[i] * w for i, w in enumerate((1.0, G)))
        return c + self._solve_laplace(shape, kappa + G * grow - c)

    def normal_flux(self, U, shape: ShapeData):
        """⟨∇u, ∇N_ρ⟩ on Γ_ρ from the global interpolant."""
        g = self.grid
        us = g.d_sigma(U)[0]
        ut = g.d_theta(U[0])
        # ∇N_ρ = e_r - (R_A ρ'/r) e_θ, u_r = a u_σ, u_θ|_r = u_θ - c u_σ
        return shape.a1 * us - self.R_A * shape.drho / shape.r1**2 * (ut - shape.slope1 * us)

    def phi_parts(self, rho: ShapeCoeffs, sol: FieldSolution | None = None):
        """(Φ_0, Φ_1) with Φ(G, ρ) = Φ_0 + G Φ_1 at the grid angles."""
        shape = self.shape_data(rho)
        sol = self.solve(rho) if sol is None else sol
        W, z_curv, z_grow = sol.deviations
        # v0(σ) has u_σ = v0'(1), u_θ = 0 on Γ_ρ; the pressure constants carry no flux
        flux_v0 = (shape.a1 + self.R_A * shape.drho / shape.r1**2 * shape.slope1) * self.dv0[0]
        phi0 = -self.normal_flux(z_curv, shape)
        phi1 = (flux_v0 + self.normal_flux(W, shape) - self.normal_flux(z_grow, shape)
                - self.eq.A * shape.r1 / 2.0)
        return phi0, phi1

    def assemble_phi(self, G: float, rho: ShapeCoeffs) -> PhiTrace:
        phi0, phi1 = self.phi_parts(rho)
        return PhiTrace(G=G, theta=self.grid.theta, values=phi0 + G * phi1)


@lru_cache(maxsize=8)
def _cached_solver(eq_key, n_r, n_theta):
    eq, f = eq_key
    return FieldSolver(eq, f, FieldGrid(n_r, n_theta))


class _Key:
    """Identity-hashed wrapper so solvers can be cached per equilibrium object."""

    def __init__(self, eq, f):
        self.eq, self.f = eq, f

    def __iter__(self):
        return iter((self.eq, self.f))

    def __hash__(self):
        return hash((id(self.eq), id(self.f)))

    def __eq__(self, other):
        return self.eq is other.eq and self.f is other.f


def get_solver(eq: RadialEquilibrium, f: NutrientFn | None = None, n_r: int = 48, n_theta: int = 128) -> FieldSolver:
    return _cached_solver(_Key(eq, f if f is not None else eq.f), n_r, n_theta)


def solve_nutrient(rho, eq, f=None, n_r=48, n_theta=128):
    psi, _, _ = get_solver(eq, f, n_r, n_theta).solve_nutrient(rho)
    return psi


def solve_pressure(rho, eq, G, n_r=48, n_theta=128):
    return get_solver(eq, None, n_r, n_theta).solve_pressure(rho, G)


def assemble_phi(G, rho, eq, f=None, n_r=48, n_theta=128) -> PhiTrace:
    return get_solver(eq, f, n_r, n_theta).assemble_phi(G, rho)


@dataclass(frozen=True)
class MultiplierCheck:
    k: int
    G: float
    measured: float
    reference: float
    rel_error: float
    leakage: float
    passed: bool


def measured_multiplier(solver: FieldSolver, k: int, eps: float = 1e-4):
    """Central difference of Φ along cos(k s), returned as (G ↦ μ_meas(G), leakage parts).

    The boundary operator carries the factor R_A: dΦ = R_A μ_k(G) cos(k s).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError("eps must lie in [1e-5, 1e-2]")
    l = max(k, 1)
    plus = ShapeCoeffs.single(l, 1 if k else 0, eps)
    minus = ShapeCoeffs.single(l, 1 if k else 0, -eps)
    p0, p1 = solver.phi_parts(plus)
    m0, m1 = solver.phi_parts(minus)
    d0 = (p0 - m0) / (2 * eps) / solver.R_A
    d1 = (p1 - m1) / (2 * eps) / solver.R_A
    return d0, d1


def multiplier_check(G: float, k: int, solver: FieldSolver, table: SymbolTable, eps: float = 1e-4,
                     rel_tol: float = 1e-3, leak_tol: float = 1e-6, parts=None) -> MultiplierCheck:
    """Compare the finite-difference linearization of Φ at ρ = 0 with μ_k(G).

    The relative error is taken against max(|μ_k(G)|, 1/R_A³), the scale of
    the symbol, so that vanishing reference values (k = 0 at G = 0, k = 1)
    stay meaningful. Leakage counts modes other than 0, k, 2k, 3k.
    """
    d0, d1 = measured_multiplier(solver, k, eps) if parts is None else parts
    trace = PhiTrace(G=G, theta=solver.grid.theta, values=d0 + G * d1)
    coeffs = trace.cos_coeffs
    measured = float(coeffs[k])
    reference = mu(k, G, table)
    scale = max(abs(reference), 1.0 / table.R_A**3)
    rel = abs(measured - reference) / scale
    other = coeffs.copy()
    for m in {0, k, 2 * k, 3 * k}:
        if m < other.size:
            other[m] = 0.0
    leak = float(max(np.max(np.abs(other)), np.max(np.abs(trace.sin_coeffs))))
    passed = rel <= rel_tol and leak <= leak_tol * scale
    return MultiplierCheck(k=k, G=G, measured=measured, reference=reference, rel_error=rel,
                           leakage=leak, passed=passed)
