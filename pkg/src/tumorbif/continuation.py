"""Nontrivial steady states near (G_kl, 0): amplitude continuation and probes.

Unknowns are G and the coefficients a_m (m != k) of ρ = Σ a_m cos(m l s),
m = 0..K; the amplitude a_k = ε is fixed. The equations are the K + 1
coefficients of Φ(G, ρ) in the same basis, so the system is square. Since
Φ = Φ_0(ρ) + G Φ_1(ρ), the G-column of the Jacobian is Φ_1 itself; the
other columns are forward differences, one field solve each.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .field import FieldSolver, FieldSolverError, PhiTrace
from .geometry import V_RADIUS, ShapeCoeffs, ShapeError, eval_shape
from .spectrum import BifurcationPoint, SymbolTable, bif_value, g_bullet

log = logging.getLogger(__name__)

EPS_MAX = 0.2
DEFAULT_K = 16


class ContinuationError(RuntimeError):
    pass


class BranchCollisionError(ContinuationError):
    """The corrector Jacobian is singular: G sits at another bifurcation point."""


class StepSizeError(ContinuationError):
    """The corrector diverged; retry with a smaller amplitude step."""


class InsufficientDataError(ValueError):
    pass


class OutsideScopeError(ValueError):
    """Probe requested below the threshold G_•."""


def default_K(l: int, n_theta: int) -> int:
    """Largest K <= 16 whose wavenumbers K l stay resolved (n_theta >= 4 (K l + 1))."""
    return max(1, min(DEFAULT_K, (n_theta // 4 - 1) // l))


def _family(values: np.ndarray, l: int, K: int) -> np.ndarray:
    return PhiTrace(G=0.0, theta=np.empty(0), values=values).family(l, K)


@dataclass(frozen=True)
class BranchPoint:
    eps: float
    G: float
    rho: ShapeCoeffs
    residual: float
    fine_residual: float = float("nan")
    iterations: int = 0


@dataclass
class Branch:
    l: int
    k: int
    G_kl: float
    points: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def mode(self) -> int:
        return self.k * self.l

    @property
    def eps(self) -> np.ndarray:
        return np.array([p.eps for p in self.points])

    @property
    def G(self) -> np.ndarray:
        return np.array([p.G for p in self.points])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.points])


@dataclass(frozen=True)
class Correction:
    G: float
    rho: ShapeCoeffs
    residual: float
    iterations: int
    history: tuple = ()


class _System:
    """Φ-coefficients as a function of (G, a) for one solver."""

    def __init__(self, solver: FieldSolver, l: int, K: int, fd_step: float, workers: int | None):
        self.solver, self.l, self.K = solver, l, K
        self.fd_step = fd_step
        self.workers = workers

    def parts(self, a):
        return self.solver.phi_parts(ShapeCoeffs(self.l, a))

    def evaluate(self, G, a):
        p0, p1 = self.parts(a)
        values = p0 + G * p1
        return _family(values, self.l, self.K), float(np.max(np.abs(values))), (p0, p1)

    def columns(self, G, a, F, free):
        """Forward-difference columns dF/da_m for m in ``free``."""
        h = self.fd_step

        def col(m):
            b = a.copy()
            b[m] += h
            p0, p1 = self.parts(b)
            return (_family(p0 + G * p1, self.l, self.K) - F) / h

        if self.workers and self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(col, free))
        return [col(m) for m in free]


def _check_shape(a, l):
    sup = ShapeCoeffs(l, a).sup_norm()
    if not sup < V_RADIUS:
        raise StepSizeError(f"iterate left the neighbourhood (sup|rho| = {sup:.3g})")


def _solve(J, rhs, cond_max):
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > cond_max:
        raise BranchCollisionError(f"corrector Jacobian is singular (condition {cond:.3e})")
    return np.linalg.solve(J, rhs)


def newton_correct(G0: float, rho0: ShapeCoeffs, eps: float, k: int, solver: FieldSolver,
                   K: int | None = None, tol: float = 1e-8, max_iter: int = 8,
                   fd_step: float = 1e-6, cond_max: float = 1e12,
                   workers: int | None = None) -> Correction:
    """Correct (G0, ρ0) onto Φ = 0 under the amplitude constraint a_k = ε.

    ρ0 must be expressed in the cos(m l s) basis of the branch; its
    coefficient a_k is overwritten by ε.
    """
    l = rho0.l
    K = default_K(l, solver.grid.n_theta) if K is None else K
    if not 0 <= k <= K:
        raise ValueError(f"amplitude index k = {k} outside 0..K = {K}")
    a = np.zeros(K + 1)
    n = min(K + 1, rho0.a.size)
    a[:n] = rho0.a[:n]
    a[k] = eps
    G = float(G0)
    sys = _System(solver, l, K, fd_step, workers)
    if eps == 0.0 and not np.any(a):
        # the trivial branch solves Φ(G, 0) = 0 for every G
        _, res, _ = sys.evaluate(G, a)
        return Correction(G=G, rho=ShapeCoeffs(l, a), residual=res, iterations=0, history=(res,))
    _check_shape(a, l)
    free = [m for m in range(K + 1) if m != k]
    history = []
    for it in range(max_iter + 1):
        F, res, (_, p1) = sys.evaluate(G, a)
        history.append(res)
        log.debug("corrector %d: |Phi| = %.3e, G = %.10g", it, res, G)
        if res <= tol:
            return Correction(G=G, rho=ShapeCoeffs(l, a), residual=res, iterations=it,
                              history=tuple(history))
        if it == max_iter or (it >= 3 and res > history[-2] and res > history[-3]):
            break
        J = np.column_stack([_family(p1, l, K)] + sys.columns(G, a, F, free))
        delta = _solve(J, -F, cond_max)
        G += delta[0]
        a[free] += delta[1:]
        _check_shape(a, l)
    raise StepSizeError(f"corrector did not reach {tol:.1e} (history {['%.2e' % h for h in history]}); "
                        "use a smaller amplitude step")


def correct_fixed_G(G: float, rho0: ShapeCoeffs, solver: FieldSolver, K: int | None = None,
                    tol: float = 1e-8, max_iter: int = 10, fd_step: float = 1e-6,
                    cond_max: float = 1e12) -> Correction:
    """Newton on all coefficients a_0..a_K with G held fixed."""
    l = rho0.l
    K = default_K(l, solver.grid.n_theta) if K is None else K
    a = np.zeros(K + 1)
    n = min(K + 1, rho0.a.size)
    a[:n] = rho0.a[:n]
    sys = _System(solver, l, K, fd_step, None)
    history = []
    for it in range(max_iter + 1):
        F, res, _ = sys.evaluate(G, a)
        history.append(res)
        if res <= tol:
            return Correction(G=G, rho=ShapeCoeffs(l, a), residual=res, iterations=it,
                              history=tuple(history))
        if it == max_iter:
            break
        J = np.column_stack(sys.columns(G, a, F, range(K + 1)))
        a += _solve(J, -F, cond_max)
        _check_shape(a, l)
    raise StepSizeError(f"fixed-G Newton did not reach {tol:.1e} (last {history[-1]:.2e})")


def residual_on(solver: FieldSolver, G: float, rho: ShapeCoeffs) -> float:
    return solver.assemble_phi(G, rho).sup


def trace_branch(point: BifurcationPoint, eps_max: float, n_steps: int, solver: FieldSolver,
                 K: int | None = None, tol: float = 1e-8, fine_solver: FieldSolver | None = None,
                 recheck: bool = True, workers: int | None = None) -> Branch:
    """Step the amplitude ε through n_steps equal increments from 0 to eps_max.

    Predictor: G from the previous point and ρ_prev + Δε cos(k l s). Each
    accepted point is re-evaluated on a grid twice as fine when ``recheck``.
    A corrector failure ends the branch early with a warning record.
    """
    if not 0 < abs(eps_max) <= EPS_MAX:
        raise ValueError(f"|eps_max| must lie in (0, {EPS_MAX}]")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    l, k = point.l, point.k
    K = default_K(l, solver.grid.n_theta) if K is None else K
    if k > K:
        raise ValueError(f"mode index k = {k} exceeds K = {K}")
    if recheck and fine_solver is None:
        fine_solver = FieldSolver(solver.eq, solver.f, solver.grid.refined())
    branch = Branch(l=l, k=k, G_kl=point.G)
    if solver.grid.n_theta % l:
        msg = (f"n_theta = {solver.grid.n_theta} is not a multiple of l = {l}; "
               "aliasing leaks outside the symmetry class (use FieldGrid.symmetric)")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        branch.warnings.append(msg)
    zero = ShapeCoeffs(l, np.zeros(K + 1))
    res0 = residual_on(solver, point.G, zero)
    fine0 = residual_on(fine_solver, point.G, zero) if recheck else float("nan")
    branch.points.append(BranchPoint(eps=0.0, G=point.G, rho=zero, residual=res0, fine_residual=fine0))
    G, rho = point.G, zero
    eps_grid = np.linspace(0.0, eps_max, n_steps + 1)
    for prev, eps in zip(eps_grid[:-1], eps_grid[1:]):
        guess = rho.a.copy()
        guess[k] += eps - prev
        try:
            corr = newton_correct(G, ShapeCoeffs(l, guess), eps, k, solver, K=K, tol=tol,
                                  workers=workers)
        except (ContinuationError, FieldSolverError, ShapeError) as exc:
            msg = f"corrector failed at eps = {eps:.4g}: {exc}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            branch.warnings.append(msg)
            break
        fine = residual_on(fine_solver, corr.G, corr.rho) if recheck else float("nan")
        branch.points.append(BranchPoint(eps=float(eps), G=corr.G, rho=corr.rho, residual=corr.residual,
                                         fine_residual=fine, iterations=corr.iterations))
        G, rho = corr.G, corr.rho
    return branch


@dataclass(frozen=True)
class AsymptoticFit:
    g0: float
    g1: float
    defect: float
    defects: tuple = ()


def shape_defect(rho: ShapeCoeffs, eps: float, k: int, n: int = 1024) -> float:
    """‖ρ - ε cos(k l s)‖∞."""
    s = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    lead = ShapeCoeffs.single(rho.l, k, eps)
    return float(np.max(np.abs(eval_shape(rho, s)[0] - eval_shape(lead, s)[0])))


def fit_asymptotics(branch: Branch) -> AsymptoticFit:
    """Least-squares G(ε) = g0 + g1 ε over the points with ε != 0, plus the O(ε²) defect.

    Returns g0, |g1| and max over those points of ‖ρ(ε) - ε cos(k l s)‖∞ / ε².
    """
    pts = [p for p in branch.points if p.eps != 0.0]
    if len(pts) < 5:
        raise InsufficientDataError(f"need at least 5 nonzero-amplitude points, got {len(pts)}")
    eps = np.array([p.eps for p in pts])
    G = np.array([p.G for p in pts])
    X = np.column_stack([np.ones_like(eps), eps])
    (g0, g1), *_ = np.linalg.lstsq(X, G, rcond=None)
    defects = tuple(shape_defect(p.rho, p.eps, branch.k) / p.eps**2 for p in pts)
    return AsymptoticFit(g0=float(g0), g1=float(abs(g1)), defect=float(max(defects)), defects=defects)


@dataclass
class ProbeResult:
    G: float
    l: int
    trials: int
    returned: int
    inconclusive: bool = False
    findings: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.inconclusive and self.returned == self.trials


def non_bifurcation_probe(G: float, l: int, solver: FieldSolver, table: SymbolTable, k1: int,
                          trials: int = 10, amplitude: float = 1e-3, K: int | None = None,
                          seed: int = 0, zero_tol: float = 1e-7, margin: float = 1e-3) -> ProbeResult:
    """Local uniqueness check at a G off the catalog.

    Starts fixed-G Newton from ``trials`` random even 2π/l-periodic shapes
    with sup|ρ| = amplitude; every run must return to ρ = 0. Runs that land
    on a nonzero solution are recorded as findings.
    """
    gb = g_bullet(table, k1)
    if G < gb:
        raise OutsideScopeError(f"G = {G:.6g} is below G_bullet = {gb:.6g}")
    K = default_K(l, solver.grid.n_theta) if K is None else K
    result = ProbeResult(G=G, l=l, trials=trials, returned=0)
    for m in range(2, table.k_max + 1):
        if m % l:
            continue
        try:
            Gm = bif_value(m, table)
        except Exception:
            continue
        if abs(G - Gm) <= margin * max(1.0, abs(Gm)):
            result.inconclusive = True
            result.findings.append(f"G is within {margin:g} (relative) of G_{m} = {Gm:.6g}; "
                                   "the linearization is singular there")
            return result
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 2 * np.pi, 1024, endpoint=False)
    for t in range(trials):
        a = rng.standard_normal(K + 1) * 0.5 ** np.arange(K + 1)
        rho0 = ShapeCoeffs(l, a)
        rho0 = ShapeCoeffs(l, a * amplitude / float(np.max(np.abs(eval_shape(rho0, s)[0]))))
        try:
            corr = correct_fixed_G(G, rho0, solver, K=K)
        except BranchCollisionError as exc:
            result.inconclusive = True
            result.findings.append(f"trial {t}: {exc}")
            continue
        except (ContinuationError, FieldSolverError, ShapeError) as exc:
            result.findings.append(f"trial {t}: Newton failed ({exc})")
            continue
        size = float(np.max(np.abs(corr.rho.a)))
        if size <= zero_tol:
            result.returned += 1
        else:
            result.findings.append(f"trial {t}: converged to a nonzero solution, max|a| = {size:.3e}")
    return result
