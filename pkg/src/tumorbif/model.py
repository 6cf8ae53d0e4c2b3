"""Model parameters and the nutrient consumption law f.

The stationary problem is

    Δψ = f(ψ),  Δp = 0       in Ω
    ψ = 1,  p = κ - A G |x|²/4 on ∂Ω
    G ∂ψ/∂n - ∂p/∂n - A G (n·x)/2 = 0 on ∂Ω

with f(0) = 0 and f' > 0 on [0, ∞).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ParameterError(ValueError):
    """Model parameters violate an admissibility bound."""


class AdmissibilityError(ValueError):
    """A user supplied nutrient law fails f(0) = 0 or f' > 0."""


@dataclass(frozen=True)
class NutrientFn:
    """Nutrient consumption law.

    ``kind`` is ``"identity"``, ``"michaelis_menten"`` (f = σψ/(1+ψ)) or
    ``"custom"``; custom laws must supply both ``value`` and ``derivative``.
    """

    kind: str = "identity"
    sigma: float = 1.0
    value: Optional[Callable] = field(default=None, compare=False, repr=False)
    derivative: Optional[Callable] = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("identity", "michaelis_menten", "custom"):
            raise ValueError(f"unknown nutrient law {self.kind!r}")
        if self.kind == "michaelis_menten" and not self.sigma > 0:
            raise ParameterError("Michaelis-Menten rate sigma must be positive")
        if self.kind == "custom" and (self.value is None or self.derivative is None):
            raise ValueError("a custom nutrient law needs both value and derivative")

    @classmethod
    def identity(cls) -> "NutrientFn":
        return cls("identity")

    @classmethod
    def michaelis_menten(cls, sigma: float) -> "NutrientFn":
        return cls("michaelis_menten", sigma=float(sigma))

    @classmethod
    def custom(cls, value: Callable, derivative: Callable, name: str = "custom") -> "NutrientFn":
        f = cls("custom", value=value, derivative=derivative, name=name)
        check_admissible(f)
        return f

    # Vectorized evaluators without domain checks, used in inner loops.
    def f(self, psi):
        if self.kind == "identity":
            return psi * 1.0
        if self.kind == "michaelis_menten":
            return self.sigma * psi / (1.0 + psi)
        return self.value(psi)

    def df(self, psi):
        if self.kind == "identity":
            return np.ones_like(np.asarray(psi, dtype=float))
        if self.kind == "michaelis_menten":
            return self.sigma / (1.0 + psi) ** 2
        return self.derivative(psi)

    def describe(self) -> dict:
        if self.kind == "michaelis_menten":
            return {"kind": self.kind, "sigma": self.sigma}
        if self.kind == "custom":
            return {"kind": self.kind, "name": self.name}
        return {"kind": self.kind}


def eval_f(f: NutrientFn, psi):
    """Return f(psi); raises DomainError for negative arguments."""
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr < 0):
        raise DomainError("nutrient law is defined for psi >= 0 only")
    out = f.f(psi_arr)
    return float(out) if np.ndim(out) == 0 else out


def eval_f_prime(f: NutrientFn, psi):
    """Return f'(psi) > 0."""
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr < 0):
        raise DomainError("nutrient law is defined for psi >= 0 only")
    out = np.asarray(f.df(psi_arr), dtype=float)
    if np.any(out <= 0):
        raise AdmissibilityError("f' must be positive on [0, inf)")
    return float(out) if out.ndim == 0 else out


def check_admissible(f: NutrientFn, psi_max: float = 2.0, n: int = 1000) -> None:
    """Check f(0) = 0 and f' > 0 on a dense grid of [0, psi_max]."""
    grid = np.linspace(0.0, psi_max, n)
    f0 = float(np.asarray(f.f(np.array(0.0))))
    if abs(f0) > 1e-14:
        raise AdmissibilityError(f"f(0) = {f0:g}, expected 0")
    d = np.asarray(f.df(grid), dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        bad = grid[np.argmax(~(d > 0))]
        raise AdmissibilityError(f"f' is not positive at psi = {bad:g}")


@dataclass(frozen=True)
class ModelParams:
    A: float
    G: float = 0.0
    f: NutrientFn = field(default_factory=NutrientFn.identity)

    @property
    def f1(self) -> float:
        return float(self.f.f(np.array(1.0)))


def validate_params(p: ModelParams) -> ModelParams:
    """Require 0 < A < f(1) and an admissible f; returns ``p`` unchanged."""
    check_admissible(p.f)
    f1 = p.f1
    if not p.A > 0:
        raise ParameterError(f"A = {p.A:g} violates the lower bound A > 0")
    if not p.A < f1:
        raise ParameterError(f"A = {p.A:g} violates the upper bound A < f(1) = {f1:g}")
    return p
