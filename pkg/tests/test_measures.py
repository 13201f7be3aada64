import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rmtkit.errors import DivergenceError, UnsupportedVariantError
from rmtkit.measures import (Empirical, KestenMcKay, MarchenkoPastur, Mixture,
                             NumericDensity, PointMass, Scaled, Semicircle,
                             cumulants_from_moments, measure_from_json,
                             measure_to_json, moments_from_cumulants,
                             pv_stieltjes_excision, w1_distance)

SC2 = Semicircle(2.0)
SC_SQRT2 = Semicircle(math.sqrt(2.0))
MP_HALF = MarchenkoPastur(0.5, 1.0)
KM3 = KestenMcKay(3)


def uniform_density(a, b, n=513):
    pad = 0.25 * (b - a)
    return NumericDensity.from_callable(
        lambda x: np.where((x >= a) & (x <= b), 1.0, 0.0), a - pad, b + pad, n)


ANALYTIC = [SC2, MP_HALF, KM3, Scaled(1.5, SC2),
            Mixture([(0.3, SC2), (0.7, MP_HALF)])]
ALL_VARIANTS = ANALYTIC + [PointMass(0.5), Empirical([-1.0, 0.3, 2.0]),
                           uniform_density(-0.2, 0.2)]


# -- density -----------------------------------------------------------------

def test_semicircle_density_center():
    # oracle: 2*sqrt(r^2-x^2)/(pi r^2) normalises to 1 by quadrature
    mass, _ = integrate.quad(SC2.density_at, -2, 2)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert SC2.density_at(0.0) == pytest.approx(1.0 / math.pi, abs=1e-14)


def test_semicircle_density_outside_support():
    assert SC2.density_at(3.0) == 0.0


def test_scaled_density_pushforward():
    inner = Semicircle(1.0)
    scaled = Scaled(2.0, inner)
    assert scaled.density_at(0.0) == pytest.approx(inner.density_at(0.0) / 2.0)


def test_density_errors_for_atomic_variants():
    with pytest.raises(UnsupportedVariantError):
        PointMass(0.0).density_at(0.0)
    with pytest.raises(UnsupportedVariantError):
        Empirical([1.0, 2.0]).density_at(1.0)
    with pytest.raises(UnsupportedVariantError):
        Mixture([(0.5, SC2), (0.5, PointMass(0.0))]).density_at(0.0)


def test_kesten_mckay_mass_inside_support():
    # oracle: the density integrates to 1 over its stated support, so no
    # mass hides outside the closed-form edges
    lo, hi = KM3.support_edges()
    assert hi == pytest.approx(2 * math.sqrt(2))
    mass, _ = integrate.quad(KM3.density_at, lo, hi, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)


# -- stieltjes ----------------------------------------------------------------

def test_point_mass_stieltjes():
    assert PointMass(0.0).stieltjes(2j) == pytest.approx(-0.5j)


def test_semicircle_stieltjes_outside():
    # frozen from the quadrature oracle int rho(x)/(3-x) dx = 0.3819660112...
    assert SC2.stieltjes(3.0 + 0j) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)


def test_empirical_stieltjes_two_point():
    emp = Empirical([1.0, 3.0])
    z = 2 + 1j
    expected = 0.5 * (1 / (1 + 1j) + 1 / (-1 + 1j))
    assert emp.stieltjes(z) == pytest.approx(expected)


@pytest.mark.parametrize("mu", ANALYTIC, ids=lambda m: type(m).__name__)
def test_stieltjes_matches_quadrature(mu):
    lo, hi = mu.support_edges()
    z = complex(0.3 * hi, 0.37)
    re, _ = integrate.quad(lambda x: mu.density_at(x) * (z.real - x) / abs(z - x) ** 2,
                           lo, hi, limit=300)
    im, _ = integrate.quad(lambda x: -mu.density_at(x) * z.imag / abs(z - x) ** 2,
                           lo, hi, limit=300)
    assert mu.stieltjes(z) == pytest.approx(complex(re, im), abs=5e-8)


def test_stieltjes_rejects_real_z_inside_support():
    with pytest.raises(ValueError):
        SC2.stieltjes(0.5 + 0j)


@pytest.mark.parametrize("mu", ALL_VARIANTS, ids=lambda m: type(m).__name__)
def test_herglotz_negative_imaginary_part(mu):
    for z in (0.1 + 0.5j, -1.0 + 1e-3j, 2.5 + 2j, 1e3 + 1j):
        assert np.imag(mu.stieltjes(z)) < 0


@pytest.mark.parametrize("mu", ALL_VARIANTS, ids=lambda m: type(m).__name__)
def test_stieltjes_decay_at_infinity(mu):
    for z in (1e6 + 1j, 1e6j, -7e5 + 3e5j):
        assert abs(z * mu.stieltjes(z) - 1.0) < 1e-5


@pytest.mark.parametrize("mu", [SC2, MP_HALF, KM3], ids=lambda m: type(m).__name__)
def test_stieltjes_inversion_recovers_density(mu):
    lo, hi = mu.support_edges()
    span = hi - lo
    xs = np.linspace(lo + 0.1 * span, hi - 0.1 * span, 40)
    recon = -np.imag(mu.stieltjes(xs + 1e-6j)) / np.pi
    assert np.max(np.abs(recon - np.asarray(mu.density_at(xs)))) < 1e-3


# -- principal value ----------------------------------------------------------

def test_pv_semicircle_odd_symmetry():
    assert SC2.pv_stieltjes(0.0) == 0.0


def test_pv_semicircle_interior():
    # boundary value x/2 for radius 2; the excision engine is the oracle
    assert SC2.pv_stieltjes(1.0) == pytest.approx(0.5, abs=1e-12)
    assert pv_stieltjes_excision(SC2, 1.0) == pytest.approx(0.5, abs=1e-7)


def test_pv_outside_support_is_plain_integral():
    assert SC2.pv_stieltjes(3.0) == pytest.approx(float(np.real(SC2.stieltjes(3 + 0j))))


def test_pv_excision_generic_measures():
    for mu, x in ((MP_HALF, 1.2), (KM3, 0.7)):
        want = float(np.real(mu.stieltjes(complex(x, 1e-8))))
        assert pv_stieltjes_excision(mu, x) == pytest.approx(want, abs=1e-6)


# -- moments and cumulants -----------------------------------------------------

def test_point_mass_moments():
    assert PointMass(2.0).moments(3) == [2.0, 4.0, 8.0]


def test_semicircle_moments_catalan():
    # oracle: quadrature of x^n * density
    quad_moms = [integrate.quad(lambda x, k=k: SC2.density_at(x) * x ** k, -2, 2)[0]
                 for k in range(1, 5)]
    assert SC2.moments(4) == pytest.approx(quad_moms, abs=1e-9)
    assert SC2.moments(4) == pytest.approx([0.0, 1.0, 0.0, 2.0], abs=1e-12)


def test_scaled_moment_scaling():
    s = 1.7
    base = MP_HALF.moments(8)
    scaled = Scaled(s, MP_HALF).moments(8)
    for n in range(1, 9):
        assert scaled[n - 1] == pytest.approx(s ** n * base[n - 1], rel=1e-10)


def _cumulants_bruteforce(moments):
    """Independent oracle: direct composition enumeration of the
    moment-cumulant recursion, inverted order by order."""
    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for rest in compositions(total - head, parts - 1):
                yield (head,) + rest

    m = [1.0] + list(moments)
    ks = []
    for n in range(1, len(moments) + 1):
        acc = m[n]
        for r in range(1, n):
            s = sum(np.prod([m[i] for i in comp])
                    for comp in compositions(n - r, r))
            acc -= ks[r - 1] * s
        ks.append(acc)
    return ks


@pytest.mark.parametrize("mu", [SC2, MP_HALF, PointMass(1.3)],
                         ids=lambda m: type(m).__name__)
def test_free_cumulants_against_bruteforce(mu):
    moms = mu.moments(7)
    assert mu.free_cumulants(7) == pytest.approx(_cumulants_bruteforce(moms),
                                                 abs=1e-9)


def test_point_mass_cumulants():
    assert PointMass(1.5).free_cumulants(5) == [1.5, 0.0, 0.0, 0.0, 0.0]


def test_semicircle_cumulants_single():
    ks = SC2.free_cumulants(8)
    assert ks[1] == pytest.approx(1.0)
    assert max(abs(k) for i, k in enumerate(ks) if i != 1) < 1e-12


def test_mp_cumulants_geometric():
    assert MP_HALF.free_cumulants(4) == pytest.approx([1.0, 0.5, 0.25, 0.125])


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=8))
@settings(max_examples=60, deadline=None)
def test_moment_cumulant_round_trip(ks):
    moms = moments_from_cumulants(ks)
    back = cumulants_from_moments(moms)
    assert back == pytest.approx(ks, abs=1e-10)


@given(st.floats(0.1, 4.0))
@settings(max_examples=40, deadline=None)
def test_scaling_laws_moments_and_cumulants(s):
    base_m = np.array(MP_HALF.moments(8))
    base_k = np.array(MP_HALF.free_cumulants(8))
    scaled = Scaled(s, MP_HALF)
    pw = s ** np.arange(1, 9)
    assert np.allclose(scaled.moments(8), pw * base_m, rtol=1e-10, atol=1e-10)
    assert np.allclose(scaled.free_cumulants(8), pw * base_k, rtol=1e-10, atol=1e-10)


# -- R-transform ----------------------------------------------------------------

def test_r_transform_semicircle_linear():
    sigma2 = SC2.variance
    for z in (-0.3, 0.0, 0.25):
        assert SC2.r_transform(z, 6) == pytest.approx(sigma2 * z, abs=1e-12)


def test_r_transform_point_mass_constant():
    assert PointMass(0.8).r_transform(0.3, 5) == pytest.approx(0.8)


def test_r_transform_scaled_series_identity():
    s, z = 1.3, 0.12
    lhs = Scaled(s, MP_HALF).r_transform(z, 8)
    rhs = s * MP_HALF.r_transform(s * z, 8)
    assert lhs == pytest.approx(rhs, rel=1e-10)


# -- quantiles -------------------------------------------------------------------

def test_quantile_symmetry():
    assert SC2.quantile(5, 10) == pytest.approx(0.0, abs=1e-9)


def test_quantile_rejects_point_mass():
    with pytest.raises(UnsupportedVariantError):
        PointMass(0.0).quantile(1, 2)


def test_quantile_quarter_against_cdf_quadrature():
    q = SC2.quantile(1, 4)
    mass, _ = integrate.quad(SC2.density_at, -2.0, q)
    assert mass == pytest.approx(0.25, abs=1e-8)


@pytest.mark.parametrize("mu", [SC2, MP_HALF, uniform_density(-0.3, 0.8)],
                         ids=lambda m: type(m).__name__)
def test_quantile_monotone_and_consistent(mu):
    n = 37
    qs = [mu.quantile(j, n) for j in range(1, n + 1)]
    assert all(a <= b + 1e-12 for a, b in zip(qs, qs[1:]))
    for j in (1, 9, 23, 37):
        assert mu.cdf(qs[j - 1]) == pytest.approx(j / n, abs=1e-8)


def test_empirical_quantile_is_sorted_value():
    emp = Empirical([3.0, 1.0, 2.0])
    assert [emp.quantile(j, 3) for j in (1, 2, 3)] == [1.0, 2.0, 3.0]


# -- W1 ---------------------------------------------------------------------------

def test_w1_self_distance_zero():
    assert w1_distance(SC2, SC2) == 0.0


def test_w1_point_masses():
    assert w1_distance(PointMass(0.0), PointMass(1.0)) == pytest.approx(1.0, abs=1e-6)


def test_w1_goe_sample_close_to_semicircle():
    from rmtkit.eigs import full_eigh
    from rmtkit.ensembles import EnsembleSpec, sample
    eigs = full_eigh(sample(EnsembleSpec("goe", 500, seed=12))).eigenvalues
    assert w1_distance(Empirical(eigs), SC_SQRT2) < 0.1


def test_w1_triangle_inequality():
    rng = np.random.default_rng(5)
    pool = [SC2, SC_SQRT2, MP_HALF, KM3, PointMass(0.3), Scaled(0.7, MP_HALF)]
    for _ in range(8):
        a, b, c = rng.choice(len(pool), size=3, replace=False)
        mu, nu, rho = pool[a], pool[b], pool[c]
        assert w1_distance(mu, rho) <= \
            w1_distance(mu, nu) + w1_distance(nu, rho) + 1e-6


# -- log integral ---------------------------------------------------------------

def test_log_abs_semicircle():
    # oracle: adaptive quadrature with the singularity split at 0
    assert SC2.log_abs_integral() == pytest.approx(-0.5, abs=1e-6)


def test_log_abs_point_mass():
    assert PointMass(math.e).log_abs_integral() == pytest.approx(1.0)


def test_log_abs_atom_at_zero_diverges():
    mix = Mixture([(0.5, SC2), (0.5, PointMass(0.0))])
    with pytest.raises(DivergenceError):
        mix.log_abs_integral()


def test_log_abs_empirical_guard():
    with pytest.raises(DivergenceError):
        Empirical([0.0, 1.0]).log_abs_integral()
    emp = Empirical([0.5, 2.0])
    assert emp.log_abs_integral() == pytest.approx(
        0.5 * (math.log(0.5) + math.log(2.0)))


# -- support edges ----------------------------------------------------------------

def test_support_edges_closed_forms():
    assert SC2.support_edges() == (-2.0, 2.0)
    assert Scaled(3.0, Semicircle(1.0)).support_edges() == (-3.0, 3.0)
    lo, hi = KM3.support_edges()
    assert (lo, hi) == pytest.approx((-2 * math.sqrt(2), 2 * math.sqrt(2)))


def test_support_edges_numeric_density_threshold():
    nd = uniform_density(-0.2, 0.2, 2049)
    lo, hi = nd.support_edges()
    assert lo == pytest.approx(-0.2, abs=2e-3)
    assert hi == pytest.approx(0.2, abs=2e-3)


# -- invariants of constructed variants ---------------------------------------------

def test_numeric_density_normalised():
    nd = uniform_density(-1.0, 3.0)
    assert np.trapezoid(nd.values, nd.grid) == pytest.approx(1.0, abs=1e-6)


def test_mixture_weight_validation():
    with pytest.raises(ValueError):
        Mixture([(0.6, SC2), (0.6, MP_HALF)])
    with pytest.raises(ValueError):
        Mixture([(-0.1, SC2), (1.1, MP_HALF)])


def test_empirical_sorted():
    emp = Empirical([2.0, -1.0, 0.5])
    assert list(emp.eigenvalues) == [-1.0, 0.5, 2.0]


# -- serialisation -------------------------------------------------------------------

@pytest.mark.parametrize("mu", ALL_VARIANTS, ids=lambda m: type(m).__name__)
def test_json_round_trip(mu):
    back = measure_from_json(measure_to_json(mu))
    z = 1.1 + 0.9j
    assert back.stieltjes(z) == pytest.approx(mu.stieltjes(z), rel=1e-12)


def test_empirical_csv_round_trip(tmp_path):
    emp = Empirical([0.25, -1.5, 3.75])
    path = tmp_path / "eigs.csv"
    emp.to_csv(path)
    back = Empirical.from_csv(path)
    assert np.array_equal(back.eigenvalues, emp.eigenvalues)
