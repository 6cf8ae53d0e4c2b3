"""Independent reference values from power series of the modified Bessel functions.

I_n(x) = Σ_m (x/2)^(2m+n) / (m! (m+n)!), summed in 50-digit arithmetic. For
f = id the disk state is ψ(r) = I_0(r)/I_0(R_A) and the mode solutions are
u_n(r) = n! 2^n I_n(R_A r)/(R_A r)^n.
"""

import mpmath as mp

mp.mp.dps = 50


def bessel_i(n, x, terms=200):
    x = mp.mpf(x)
    h = x / 2
    total = mp.mpf(0)
    term = h**n / mp.factorial(n)
    for m in range(terms):
        total += term
        term *= h * h / ((m + 1) * (m + 1 + n))
        if abs(term) < mp.mpf(10) ** (-60) * abs(total):
            break
    return total


def canonical_A(R=1):
    """A with R_A = R for f = id: 2 I_1(R)/(R I_0(R))."""
    R = mp.mpf(R)
    return float(2 * bessel_i(1, R) / (R * bessel_i(0, R)))


def mode_values(n, R=1):
    """(u_n(1), u_n'(1)) for f = id, with u_n'(1) = n! 2^n I_{n+1}(R)/R^(n-1)."""
    R = mp.mpf(R)
    fac = mp.factorial(n) * mp.mpf(2) ** n
    return float(fac * bessel_i(n, R) / R**n), float(fac * bessel_i(n + 1, R) / R ** (n - 1))


def mode_ratio(n, R=1):
    u, du = mode_values(n, R)
    return du / u


def v0(s, R=1):
    return float(bessel_i(0, mp.mpf(R) * s) / bessel_i(0, R))


def center_value(R=1):
    return float(1 / bessel_i(0, R))


def denominator(k, R=1):
    A = mp.mpf(canonical_A(R))
    return float(A / 2 * mp.mpf(mode_ratio(k, R)) + A - 1)


def bif_value(k, R=1):
    return float((-k**3 + k) / (mp.mpf(R) ** 3 * denominator(k, R)))


def i0_inverse(y, lo=0.0, hi=10.0):
    """R with I_0(R) = y, by bisection on the series."""
    return float(mp.findroot(lambda r: bessel_i(0, r) - y, (lo, hi), solver="bisect"))
