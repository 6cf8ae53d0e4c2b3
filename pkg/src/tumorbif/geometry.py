"""Star-shaped domains r < R_A (1 + ρ(θ)) with ρ even and 2π/l-periodic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DomainError

V_RADIUS = 0.25


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeCoeffs:
    """ρ(s) = Σ_k a_k cos(k l s), k = 0..K."""

    l: int
    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.l < 1:
            raise ShapeError("symmetry order l must be >= 1")

    @classmethod
    def zero(cls, l: int = 1, K: int = 0) -> "ShapeCoeffs":
        return cls(l, np.zeros(K + 1))

    @classmethod
    def single(cls, l: int, k: int, eps: float, K: int | None = None) -> "ShapeCoeffs":
        a = np.zeros(max(k, K if K is not None else k) + 1)
        a[k] = eps
        return cls(l, a)

    @property
    def K(self) -> int:
        return self.a.size - 1

    @property
    def max_wavenumber(self) -> int:
        return self.K * self.l

    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.a.size) * self.l

    def with_coeffs(self, a) -> "ShapeCoeffs":
        return ShapeCoeffs(self.l, a)

    def sup_norm(self, n: int = 4096) -> float:
        s = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return float(np.max(np.abs(eval_shape(self, s)[0])))

    def check(self) -> "ShapeCoeffs":
        norm = self.sup_norm()
        if not norm < V_RADIUS:
            raise ShapeError(f"sup|rho| = {norm:.4g} leaves the neighbourhood sup|rho| < 1/4")
        return self


def eval_shape(rho: ShapeCoeffs, s):
    """Exact (ρ, ρ', ρ'') of the truncated cosine series at angles ``s``."""
    s = np.asarray(s, dtype=float)
    m = rho.wavenumbers()
    phase = np.multiply.outer(s, m)
    c, sn = np.cos(phase), np.sin(phase)
    return c @ rho.a, -(sn @ (m * rho.a)), -(c @ (m**2 * rho.a))


def curvature(rho: ShapeCoeffs, R_A: float, s):
    """Curvature of r(s) = R_A (1 + ρ(s)), positive (1/R) on a circle."""
    p, dp, ddp = eval_shape(rho, s)
    r, dr, ddr = R_A * (1 + p), R_A * dp, R_A * ddp
    return (r**2 + 2 * dr**2 - r * ddr) / (r**2 + dr**2) ** 1.5


def normal_field(rho: ShapeCoeffs, s):
    """∇N_ρ on Γ_ρ in the polar frame (e_r, e_θ): (1, -ρ'/(1+ρ))."""
    p, dp, _ = eval_shape(rho, s)
    return np.ones_like(p), -dp / (1 + p)


def chart(rho: ShapeCoeffs, R_A: float, sigma, theta):
    """Point with polar radius σ R_A (1 + ρ(θ)) and angle θ."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0) or np.any(sigma > 1):
        raise DomainError("chart radius must lie in [0, 1]")
    r = sigma * R_A * (1 + eval_shape(rho, theta)[0])
    return r * np.cos(theta), r * np.sin(theta)


def boundary_points(rho: ShapeCoeffs, R_A: float, n: int = 256) -> np.ndarray:
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x, y = chart(rho, R_A, 1.0, theta)
    return np.column_stack([x, y])


def spectral_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Fourier collocation derivative of periodic samples on a uniform grid over [0, 2π)."""
    n = values.shape[-1]
    k = np.fft.rfftfreq(n, 1.0 / n)
    vh = np.fft.rfft(values, axis=-1)
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    return np.fft.irfft(vh * mult, n=n, axis=-1)


@dataclass(frozen=True)
class BoundaryGrid:
    rho: ShapeCoeffs
    n_theta: int
    theta: np.ndarray = field(init=False, repr=False)
    value: np.ndarray = field(init=False, repr=False)
    d1: np.ndarray = field(init=False, repr=False)
    d2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_theta < 4 * (self.rho.max_wavenumber + 1):
            raise ShapeError(f"n_theta = {self.n_theta} is below 4 (K l + 1) = "
                             f"{4 * (self.rho.max_wavenumber + 1)}")
        theta = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        value = eval_shape(self.rho, theta)[0]
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "d1", spectral_derivative(value, 1))
        object.__setattr__(self, "d2", spectral_derivative(value, 2))


def random_shape(rng: np.random.Generator, l: int, K: int, sup: float = 0.2, decay: float = 0.5) -> ShapeCoeffs:
    """Random even 2π/l-periodic shape with geometrically decaying coefficients and sup|ρ| = sup."""
    a = rng.standard_normal(K + 1) * decay ** np.arange(K + 1)
    rho = ShapeCoeffs(l, a)
    return ShapeCoeffs(l, a * (sup / rho.sup_norm()))
