import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from tumorbif.model import NutrientFn
from tumorbif.radial import find_RA
from tumorbif.spectrum import (BifurcationPoint, DegenerateDenominator, InconclusiveError,
                               TransversalityError, bif_value, bif_values, build_table, catalog,
                               check_feri, crandall_rabinowitz, find_k1, find_k1_stable, g_bullet,
                               is_isomorphism_at, mu, table_from_ratios, transversality)

A1 = oracle.canonical_A(1)


@pytest.mark.parametrize("k", [0, 2, 3, 4, 8])
def test_denominators_match_oracle(table64, k):
    assert table64.d(k) == pytest.approx(oracle.denominator(k), abs=1e-11)


def test_d1_vanishes(table64):
    assert abs(table64.d(1)) <= 1e-10


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_bif_values(table64, k):
    assert bif_value(k, table64) == pytest.approx(oracle.bif_value(k), rel=1e-9)


def test_G2(table64):
    assert bif_value(2, table64) == pytest.approx(174.81572124701, rel=1e-10)
    assert bif_value(2, table64) < bif_value(4, table64)


@pytest.mark.parametrize("k", [0, 1, 2, 5])
def test_mu_at_zero(table64, k):
    assert mu(k, 0.0, table64) == pytest.approx((-k**3 + k) / table64.R_A**3, abs=1e-10)


@given(G=st.floats(-1e4, 1e4), k=st.integers(0, 64))
@settings(max_examples=60, deadline=None)
def test_mu_symmetric_and_affine(table64, G, k):
    assert mu(-k, G, table64) == mu(k, G, table64)
    slope = mu(k, G + 1.0, table64) - mu(k, G, table64)
    assert slope == pytest.approx(-table64.d(k), abs=1e-9 * (1 + abs(G)))
    if k == 1:
        assert abs(mu(1, G, table64)) <= 1e-7 * max(1.0, abs(G))


def test_mu_range(table64):
    with pytest.raises(IndexError):
        mu(65, 1.0, table64)


def test_root_property(table64):
    for k in range(2, 65):
        if abs(table64.d(k)) > 1e-6:
            G = bif_value(k, table64)
            assert abs(mu(k, G, table64)) <= 1e-10 * max(1.0, G)


def test_degenerate_denominator(table64):
    ratio = table64.ratio.copy()
    # d_3 = 0 exactly
    ratio[3] = 2 * (table64.f1 - table64.A) / table64.A
    t = table_from_ratios(table64.R_A, table64.A, table64.f1, ratio)
    with pytest.raises(DegenerateDenominator):
        bif_value(3, t)
    with pytest.raises(ValueError):
        bif_value(1, table64)
    assert np.isnan(bif_values(t)[3])


def test_k1(table64, k1):
    assert k1 == 2
    G = bif_values(table64)
    assert np.all(np.diff(G[k1:64]) > 0) and np.all(G[k1:] > 0)


def test_k1_stable(eq1):
    k1, big = find_k1_stable(eq1, 32)
    assert k1 == 2 and big.k_max == 64


def test_k1_inconclusive(table64):
    t = table_from_ratios(table64.R_A, table64.A, table64.f1, table64.ratio[:3])
    with pytest.raises(InconclusiveError):
        find_k1(t)


def test_g_bullet(table64, k1):
    # min(|d_0|, |d_2|) = |d_2| here, so G_• = G_2
    assert g_bullet(table64, k1) == pytest.approx(bif_value(2, table64), rel=1e-12)
    assert g_bullet(table64, 1) == 0.0


def test_g_bullet_through_d0(table64):
    # the built-in laws always give |d_2| < |d_0|; shift d_0 to 0.01 to take the other branch
    ratio = table64.ratio.copy()
    ratio[0] = 2 * (0.01 + table64.f1 - table64.A) / table64.A
    t = table_from_ratios(table64.R_A, table64.A, table64.f1, ratio)
    assert t.d(0) == pytest.approx(0.01, abs=1e-14)
    assert g_bullet(t, find_k1(t)) == pytest.approx(6 / t.R_A**3 / 0.01, rel=1e-12)


@pytest.mark.parametrize("sigma, frac", [(2.0, 0.05), (0.2, 0.5), (20.0, 0.9)])
def test_g_bullet_michaelis_menten(sigma, frac):
    f = NutrientFn.michaelis_menten(sigma)
    eq = find_RA(frac * sigma / 2, f)
    t = build_table(eq, 64, f)
    assert abs(t.d(1)) <= 1e-7
    k1 = find_k1(t)
    gaps = np.abs(t.denom[: k1 + 1])
    gaps = gaps[gaps > t.degenerate_tol]
    assert g_bullet(t, k1) == pytest.approx((k1**3 - k1) / t.R_A**3 / gaps.min(), rel=1e-14)


def test_g_bullet_flat(table64):
    t = table_from_ratios(1.0, A1, 1.0, np.zeros(65))
    assert g_bullet(t, 2) == pytest.approx(6 / (1 - A1), rel=1e-14)


def test_feri(table64):
    assert check_feri(table64)
    assert table64.d(0) == pytest.approx(0.0920439334, abs=1e-10)
    ratio = table64.ratio.copy()
    tol = 1e-8
    ratio[0] = 2 * (tol / 2 + table64.f1 - table64.A) / table64.A
    t = table_from_ratios(1.0, table64.A, table64.f1, ratio)
    assert not check_feri(t, tol)


def test_catalog_l2(table64, catalog2):
    assert [p.mode for p in catalog2] == [2, 4, 6]
    Gs = [p.G for p in catalog2]
    assert Gs == sorted(Gs)
    gb = g_bullet(table64, 2)
    assert all(G >= gb * (1 - 1e-10) for G in Gs)


def test_catalog_strict(table64):
    pts = catalog(2, 3, table64, strict=True)
    assert [p.mode for p in pts] == [4, 6, 8]
    assert all(p.G > g_bullet(table64, 2) for p in pts)


def test_catalog_l3(table64):
    (p,) = catalog(3, 1, table64)
    assert p.mode == 3 and p.G == bif_value(3, table64)


def test_catalog_bad_l(table64):
    with pytest.raises(ValueError):
        catalog(1, 2, table64)


def test_transversality(table64, catalog2):
    assert transversality(catalog2[0], table64) == pytest.approx(0.0343218559, abs=1e-10)
    assert transversality(catalog2[1], table64) > 0
    with pytest.raises(TransversalityError):
        transversality(BifurcationPoint(mode=0, l=2, k=0, G=0.0), table64)


def test_isomorphism(table64, catalog2):
    G2, G4 = catalog2[0].G, catalog2[1].G
    assert not is_isomorphism_at(G2, 2, table64)
    assert is_isomorphism_at((G2 + G4) / 2, 2, table64)
    assert is_isomorphism_at(G2 * 1.01, 2, table64)


def test_crandall_rabinowitz(table64, catalog2):
    for p in catalog2:
        cr = crandall_rabinowitz(p, table64)
        assert cr["kernel_one_dimensional"] and cr["range_codimension_one"] and cr["transversal"]
