"""Symbol of the linearization at the disk and the bifurcation catalog.

    μ_k(G) = -|k|³/R_A³ + |k|/R_A³ - G d_|k|,
    d_k    = (A/2) u_k'(1)/u_k(1) + A - f(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NutrientFn
from .modes import solve_modes
from .radial import RadialEquilibrium

DEGENERATE_TOL = 1e-9


class SpectrumError(RuntimeError):
    pass


class DegenerateDenominator(SpectrumError):
    pass


class InconclusiveError(SpectrumError):
    """No monotonicity onset found below k_max."""


class TransversalityError(SpectrumError):
    pass


@dataclass(frozen=True)
class SymbolTable:
    R_A: float
    A: float
    f1: float
    ratio: np.ndarray = field(repr=False)
    k_max: int = 64

    @property
    def denom(self) -> np.ndarray:
        return self.A / 2 * self.ratio + self.A - self.f1

    @property
    def degenerate_tol(self) -> float:
        return DEGENERATE_TOL * (self.f1 - self.A)

    def d(self, k: int) -> float:
        return float(self.denom[abs(k)])


def build_table(eq: RadialEquilibrium, k_max: int = 64, f: NutrientFn | None = None,
                workers: int | None = None) -> SymbolTable:
    f = f if f is not None else eq.f
    sols = solve_modes(range(k_max + 1), eq, f, workers=workers)
    ratio = np.array([s.ratio for s in sols])
    return SymbolTable(R_A=eq.R_A, A=eq.A, f1=float(f.f(np.array(1.0))), ratio=ratio, k_max=k_max)


def table_from_ratios(R_A: float, A: float, f1: float, ratio) -> SymbolTable:
    ratio = np.asarray(ratio, dtype=float)
    return SymbolTable(R_A=R_A, A=A, f1=f1, ratio=ratio, k_max=ratio.size - 1)


def mu(k: int, G: float, table: SymbolTable) -> float:
    n = abs(int(k))
    if n > table.k_max:
        raise IndexError(f"|k| = {n} exceeds k_max = {table.k_max}")
    return (-(n**3) + n) / table.R_A**3 - G * table.d(n)


def bif_value(k: int, table: SymbolTable) -> float:
    """The unique G with μ_k(G) = 0."""
    if k < 2:
        raise ValueError("bifurcation values are defined for k >= 2")
    if k > table.k_max:
        raise IndexError(f"k = {k} exceeds k_max = {table.k_max}")
    d = table.d(k)
    if abs(d) <= table.degenerate_tol:
        raise DegenerateDenominator(f"d_{k} = {d:.3e} is degenerate")
    return (-(k**3) + k) / (table.R_A**3 * d)


def bif_values(table: SymbolTable) -> np.ndarray:
    """G_k for k = 0..k_max; NaN where undefined."""
    out = np.full(table.k_max + 1, np.nan)
    for k in range(2, table.k_max + 1):
        try:
            out[k] = bif_value(k, table)
        except DegenerateDenominator:
            pass
    return out


def find_k1(table: SymbolTable) -> int:
    """Smallest k1 with 0 < G_k < G_{k+1} for every k1 <= k <= k_max - 1."""
    G = bif_values(table)
    k1 = None
    for k in range(table.k_max - 1, 1, -1):
        if G[k] > 0 and G[k] < G[k + 1]:
            k1 = k
        else:
            break
    if k1 is None or k1 >= table.k_max - 1:
        raise InconclusiveError(f"no monotone tail of G_k below k_max = {table.k_max}; raise k_max")
    return k1


def find_k1_stable(eq: RadialEquilibrium, k_max: int = 64, f: NutrientFn | None = None) -> tuple[int, SymbolTable]:
    """find_k1 at k_max, confirmed unchanged at 2 k_max; returns (k1, larger table)."""
    big = build_table(eq, 2 * k_max, f)
    small = table_from_ratios(big.R_A, big.A, big.f1, big.ratio[: k_max + 1])
    k1, k1_big = find_k1(small), find_k1(big)
    if k1 != k1_big:
        raise InconclusiveError(f"k1 moved from {k1} to {k1_big} when k_max doubled")
    return k1, big


def g_bullet(table: SymbolTable, k1: int) -> float:
    """Threshold above which every zero of μ_kl is a catalog value."""
    gaps = np.abs(table.denom[: k1 + 1])
    gaps = gaps[gaps > table.degenerate_tol]
    if gaps.size == 0:
        raise DegenerateDenominator(f"all denominators d_0..d_{k1} vanish")
    return (k1**3 - k1) / table.R_A**3 / float(np.min(gaps))


def check_feri(table: SymbolTable, tol: float = 1e-8) -> bool:
    """μ_0 does not vanish identically: |d_0| > tol."""
    return abs(table.d(0)) > tol


@dataclass(frozen=True)
class BifurcationPoint:
    mode: int
    l: int
    k: int
    G: float


def is_simple_zero(point_mode: int, l: int, G: float, table: SymbolTable, margin: float | None = None) -> bool:
    """μ_{ml}(G) stays away from zero for every m l != point_mode within k_max."""
    margin = 1e-8 * (1.0 + abs(G)) if margin is None else margin
    return all(abs(mu(m, G, table)) > margin
               for m in range(0, table.k_max + 1, l) if m != point_mode)


def catalog(l: int, count: int, table: SymbolTable, k1: int | None = None,
            strict: bool = False, rel_tol: float = 1e-10) -> list[BifurcationPoint]:
    """First ``count`` bifurcation points (G_kl, 0) in the even 2π/l-periodic class.

    With ``strict`` the filter is kl >= k1 + 1 and G_kl > G_•. Otherwise
    kl >= max(2, k1) and G_kl >= G_• (to ``rel_tol``), each point being kept
    only when its zero of μ is simple and transversal.
    """
    if l < 2:
        raise ValueError("symmetry order l must be at least 2")
    if not check_feri(table):
        raise DegenerateDenominator("d_0 vanishes: mu_0 is identically zero")
    k1 = find_k1(table) if k1 is None else k1
    gb = g_bullet(table, k1)
    lowest = k1 + 1 if strict else max(2, k1)
    out = []
    for k in range(1, table.k_max // l + 1):
        m = k * l
        if m < lowest:
            continue
        G = bif_value(m, table)
        above = G > gb if strict else G >= gb * (1.0 - rel_tol)
        if not above or not is_simple_zero(m, l, G, table) or -table.d(m) <= 0:
            continue
        if abs(mu(m, G, table)) > 1e-10 * max(1.0, abs(G)):
            raise SpectrumError(f"mu_{m}(G_{m}) does not vanish")
        out.append(BifurcationPoint(mode=m, l=l, k=k, G=G))
        if len(out) == count:
            break
    if len(out) < count:
        raise InconclusiveError(f"only {len(out)} catalog points below k_max = {table.k_max}")
    return out


def transversality(point: BifurcationPoint, table: SymbolTable) -> float:
    """∂_G μ_kl at G_kl, i.e. -d_kl; must be positive."""
    value = -table.d(point.mode)
    if value <= 0:
        raise TransversalityError(f"-d_{point.mode} = {value:.3e} is not positive")
    return value


def is_isomorphism_at(G: float, l: int, table: SymbolTable, margin: float | None = None) -> bool:
    """min_k |μ_kl(G)| over kl <= k_max exceeds the margin."""
    margin = 1e-8 * (1.0 + abs(G)) if margin is None else margin
    return min(abs(mu(m, G, table)) for m in range(0, table.k_max + 1, l)) > margin


def crandall_rabinowitz(point: BifurcationPoint, table: SymbolTable) -> dict:
    """Hypotheses (ii)-(iv) of bifurcation from a simple eigenvalue, checked on the symbol.

    (i) holds identically on the trivial branch and is checked on the field level.
    """
    G = point.G
    zero = abs(mu(point.mode, G, table)) <= 1e-10 * max(1.0, abs(G))
    others = [abs(mu(m, G, table)) for m in range(0, table.k_max + 1, point.l) if m != point.mode]
    return {
        "kernel_one_dimensional": bool(zero and min(others) > 1e-8 * (1 + abs(G))),
        "range_codimension_one": bool(zero),
        "transversal": bool(-table.d(point.mode) > 0),
        "min_other_eigenvalue": float(min(others)),
        "dG_mu": float(-table.d(point.mode)),
    }
