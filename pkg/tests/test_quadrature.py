import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import cKDTree

from crustcore.harmonics import CapRegion, southern_hemisphere, ynk_all
from crustcore.quadrature import (GridScalarField, GridVectorField, cap_rule, full_sphere_rule,
                                  gauss_legendre, integrate, integrate_dot, read_grid_csv,
                                  rule_from_spec, uniform_centers)

from oracles import real_ylm


def test_gauss_legendre_matches_numpy():
    for n in (1, 5, 40, 300):
        x, w = gauss_legendre(n)
        xr, wr = np.polynomial.legendre.leggauss(n)
        assert np.abs(x - xr).max() < 1e-14
        assert np.abs(w - wr).max() < 1e-12 * wr.max()


def test_gauss_legendre_interval_and_exactness():
    x, w = gauss_legendre(6, 0.5, 2.0)
    for k in range(12):
        exact = (2.0 ** (k + 1) - 0.5 ** (k + 1)) / (k + 1)
        assert w @ x**k == pytest.approx(exact, rel=1e-13)


def test_full_sphere_area():
    for R in (1.0, 1.06):
        rule = full_sphere_rule(R, 7)
        assert rule.weights.sum() == pytest.approx(4 * np.pi * R**2, abs=1e-12)
        assert np.abs(np.linalg.norm(rule.nodes, axis=1) - R).max() < 1e-12


def test_y42_squared_and_odd_harmonic():
    rule = full_sphere_rule(1.0, 5)
    y = ynk_all(4, rule.dirs)
    assert integrate(y[:, 16 + 1] ** 2, rule) == pytest.approx(1.0, abs=1e-12)
    assert abs(integrate(y[:, 9], rule)) < 1e-12


@pytest.mark.parametrize("band", [1, 3, 8])
def test_exactness_degree(band):
    rule = full_sphere_rule(2.0, band)
    deg = 2 * band - 1
    Y = real_ylm(deg, rule.dirs)
    vals = integrate(Y, rule)
    expected = np.zeros_like(vals)
    expected[0] = 4 * np.pi * 4.0 / np.sqrt(4 * np.pi)
    assert np.abs(vals - expected).max() < 1e-12 * 16
    assert rule.exact_degree == deg


def test_band_must_be_positive():
    with pytest.raises(ValueError):
        full_sphere_rule(1.0, 0)
    with pytest.raises(ValueError):
        cap_rule(1.0, southern_hemisphere(), 0)


def test_hemisphere_cap_area():
    rule = cap_rule(1.0, southern_hemisphere(), 6)
    assert rule.weights.sum() == pytest.approx(2 * np.pi, abs=1e-12)
    assert np.all(rule.nodes[:, 2] <= 1e-15)


@given(st.floats(0.05, np.pi), st.floats(0.5, 2.0))
def test_cap_area_formula(half_angle, R):
    cap = CapRegion((0.0, 0.6, 0.8), half_angle)
    rule = cap_rule(R, cap, 4)
    assert rule.weights.sum() == pytest.approx(cap.area(R), rel=1e-12, abs=1e-12)
    assert np.all(cap.contains(rule.nodes, tol=-1e-12))


def test_full_cap_matches_full_sphere_rule():
    full_cap = CapRegion((0.3, 0.0, np.sqrt(1 - 0.09)), np.pi)
    a = cap_rule(1.0, full_cap, 6)
    b = full_sphere_rule(1.0, 6)
    fa = integrate(ynk_all(2, a.dirs)[:, 4] ** 2, a)
    fb = integrate(ynk_all(2, b.dirs)[:, 4] ** 2, b)
    assert fa == pytest.approx(fb, abs=1e-10)


def test_odd_function_over_symmetric_hemisphere():
    cap = CapRegion((0.0, 0.0, 1.0), np.pi / 2)
    rule = cap_rule(1.0, cap, 6)
    assert abs(integrate(rule.dirs[:, 0] * rule.dirs[:, 2], rule)) < 1e-12


def test_cap_plus_complement_equals_full_sphere(rng):
    cap = CapRegion(tuple(np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])), 1.1)
    a = cap_rule(1.3, cap, 14)
    b = cap_rule(1.3, cap.complement(), 14)
    full = full_sphere_rule(1.3, 8)
    for _ in range(20):
        c = rng.standard_normal(64)
        f = lambda r: ynk_all(7, r.dirs) @ c
        total = integrate(f(full), full)
        assert integrate(f(a), a) + integrate(f(b), b) == pytest.approx(total, abs=1e-10)


def test_integrate_length_mismatch():
    rule = full_sphere_rule(1.0, 3)
    with pytest.raises(ValueError):
        integrate(np.ones(rule.size + 1), rule)
    with pytest.raises(ValueError):
        integrate_dot(np.ones((3, 3)), np.ones((3, 3)), rule)


def test_uniform_centers_single_point():
    c = uniform_centers(1)
    assert c.shape == (1, 3) and np.linalg.norm(c[0]) == pytest.approx(1.0)


def test_uniform_centers_spread_at_full_size():
    c = uniform_centers(8499)
    d, _ = cKDTree(c).query(c, k=2)
    ang = 2 * np.arcsin(d[:, 1] / 2)
    assert ang.max() / ang.min() < 2.5
    assert ang.min() * np.sqrt(8499) > 1.0


@given(st.integers(100, 3000))
def test_uniform_centers_are_balanced(M):
    c = uniform_centers(M)
    assert np.linalg.norm(c.mean(axis=0)) < 0.01
    assert np.abs(np.linalg.norm(c, axis=1) - 1).max() < 1e-12


def test_grid_field_csv_round_trip(tmp_path):
    rule = cap_rule(1.06, southern_hemisphere(), 4)
    f = GridScalarField(rule, np.arange(rule.size, dtype=float) / 7)
    f.to_csv(tmp_path / "s.csv")
    g = read_grid_csv(tmp_path / "s.csv")
    assert np.array_equal(g.values, f.values) and np.array_equal(g.rule.nodes, rule.nodes)
    v = GridVectorField(rule, np.outer(np.arange(rule.size), [1.0, -2.0, 0.5]))
    v.to_csv(tmp_path / "v.csv")
    assert np.array_equal(read_grid_csv(tmp_path / "v.csv").values, v.values)


def test_rule_csv_and_spec(tmp_path):
    rule = full_sphere_rule(2.0, 3)
    rule.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("#") and rows[1] == "x,y,z,w" and len(rows) == rule.size + 2
    again = rule_from_spec(2.0, rule.spec)
    assert np.array_equal(again.nodes, rule.nodes)


def test_grid_fields_check_shapes_and_rules():
    rule = full_sphere_rule(1.0, 2)
    with pytest.raises(ValueError):
        GridScalarField(rule, np.zeros(rule.size + 1))
    with pytest.raises(ValueError):
        GridVectorField(rule, np.zeros(rule.size))
    other = full_sphere_rule(1.0, 3)
    with pytest.raises(ValueError):
        GridScalarField(rule, np.zeros(rule.size)) + GridScalarField(other, np.zeros(other.size))


def test_vector_field_split_into_normal_and_tangential(rng):
    rule = full_sphere_rule(1.5, 4)
    v = GridVectorField(rule, rng.standard_normal((rule.size, 3)))
    t = v.tangential_part()
    assert np.abs(np.einsum("ij,ij->i", t.values, rule.dirs)).max() < 1e-14
    back = t.values + v.normal_part().values[:, None] * rule.dirs
    assert np.allclose(back, v.values)
