import math

import numpy as np
import pytest

from rmtkit.eigs import full_eigh
from rmtkit.ensembles import (DeformationSpec, EnsembleSpec, SymmetricMatrix,
                              build_deformation, compose_hessian,
                              load_matrix_binary, sample, save_matrix_binary,
                              scaling_function)
from rmtkit.measures import (Empirical, KestenMcKay, MarchenkoPastur,
                             NumericDensity, Semicircle, w1_distance)

SC_SQRT2 = Semicircle(math.sqrt(2.0))


def uniform_eta(n=257):
    return NumericDensity.from_callable(
        lambda x: np.where(np.abs(x) <= 0.2, 1.0, 0.0), -0.25, 0.25, n)


# -- spec validation -----------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec("goe", 1)
    with pytest.raises(ValueError):
        EnsembleSpec("uwish", 10)  # missing m
    with pytest.raises(ValueError):
        EnsembleSpec("regular", 10, d=2)
    with pytest.raises(ValueError):
        EnsembleSpec("regular", 9, d=3)  # odd n*d
    with pytest.raises(ValueError):
        EnsembleSpec("nope", 10)


# -- determinism and symmetry -----------------------------------------------------

@pytest.mark.parametrize("spec", [
    EnsembleSpec("goe", 60, seed=1),
    EnsembleSpec("uwig", 60, seed=2),
    EnsembleSpec("gammawig", 60, seed=3),
    EnsembleSpec("uwish", 60, m=120, seed=4),
    EnsembleSpec("wish", 60, m=90, seed=5),
    EnsembleSpec("regular", 60, d=3, seed=6),
], ids=lambda s: s.kind)
def test_seed_determinism_and_exact_symmetry(spec):
    a = sample(spec).array
    b = sample(spec).array
    assert np.array_equal(a, b)
    assert np.array_equal(a, a.T)


# -- entry laws ----------------------------------------------------------------------

def test_goe_entry_variances_monte_carlo():
    draws = np.array([sample(EnsembleSpec("goe", 2, seed=s)).array
                      for s in range(40000)])
    m11 = draws[:, 0, 0]
    m12 = draws[:, 0, 1]
    # 3 standard errors of the respective second-moment estimators
    se11 = np.std(m11 ** 2) / math.sqrt(m11.size)
    se12 = np.std(m12 ** 2) / math.sqrt(m12.size)
    assert abs(np.mean(m11 ** 2) - 0.5) < 3 * se11
    assert abs(np.mean(m12 ** 2) - 0.25) < 3 * se12


def test_uwig_entry_law():
    m = sample(EnsembleSpec("uwig", 400, seed=9)).array
    scaled = m * math.sqrt(400)
    tri = scaled[np.tril_indices(400)]
    assert tri.min() >= 0.0
    assert tri.max() <= math.sqrt(6.0)
    assert np.mean(tri) == pytest.approx(math.sqrt(6) / 2, abs=0.01)


def test_gammawig_entry_law():
    m = sample(EnsembleSpec("gammawig", 400, seed=10)).array
    scaled = 2 * math.sqrt(400) * m[np.tril_indices(400)]
    assert scaled.min() > 0
    assert np.mean(scaled) == pytest.approx(2.0, abs=0.03)  # Gamma(2) mean
    assert np.var(scaled) == pytest.approx(2.0, abs=0.1)    # Gamma(2) variance


# -- regular graphs --------------------------------------------------------------------

def test_regular_graph_row_sums_and_diagonal():
    g = sample(EnsembleSpec("regular", 8, d=3, seed=1)).array
    assert np.all(g.sum(axis=1) == 3)
    assert np.all(np.diag(g) == 0)
    assert set(np.unique(g)) <= {0.0, 1.0}


def test_regular_graph_trace_zero_larger():
    g = sample(EnsembleSpec("regular", 500, d=4, seed=2)).array
    assert np.trace(g) == 0
    assert np.all(g.sum(axis=0) == 4)


# -- limiting spectral distributions ------------------------------------------------------

def _lsd_distance(kind, n, seed, **kw):
    spec = EnsembleSpec(kind, n, seed=seed, **kw)
    eigs = full_eigh(sample(spec)).eigenvalues
    if kind in ("uwig", "gammawig", "uwish"):
        eigs = eigs[:-1]  # uncentred entries induce one rank-one mean outlier
    if kind in ("goe", "uwig", "gammawig"):
        limit = SC_SQRT2
    elif kind in ("uwish", "wish"):
        limit = MarchenkoPastur(0.5, 1.0)
    else:
        limit = KestenMcKay(3)
    return w1_distance(Empirical(eigs), limit)


@pytest.mark.parametrize("kind,kw", [
    ("goe", {}), ("uwig", {}), ("gammawig", {}),
    ("uwish", {"m": "2n"}), ("wish", {"m": "2n"}), ("regular", {"d": 3}),
])
def test_lsd_w1_decreases_with_n(kind, kw):
    mean_w1 = []
    for n in (100, 200, 400):
        kwargs = {k: (2 * n if v == "2n" else v) for k, v in kw.items()}
        dists = [_lsd_distance(kind, n, seed, **kwargs) for seed in range(10)]
        mean_w1.append(np.mean(dists))
    assert mean_w1[0] > mean_w1[1] > mean_w1[2]


def test_goe_orthogonal_invariance_statistical():
    rng = np.random.default_rng(123)
    p, _ = np.linalg.qr(rng.standard_normal((200, 200)))
    direct, conjugated = [], []
    for s in range(20):
        direct.append(full_eigh(sample(EnsembleSpec("goe", 200, seed=s))).eigenvalues)
        m = sample(EnsembleSpec("goe", 200, seed=100 + s)).array
        conjugated.append(np.linalg.eigvalsh(p @ m @ p.T))
    d = w1_distance(Empirical(np.concatenate(direct)),
                    Empirical(np.concatenate(conjugated)))
    assert d < 0.05


# -- deformation ------------------------------------------------------------------------

def test_deformation_pure_low_rank():
    spec = DeformationSpec(n=50, spikes_right=(3.0, 2.5), spikes_left=(-2.0,),
                           epsilon=0.0, seed=0)
    a, nu = build_deformation(spec)
    diag = np.diag(a.array)
    assert np.count_nonzero(diag) == 3
    assert nu.atoms() == [(1.0, 0.0)]


def test_deformation_rank_one_norm():
    spec = DeformationSpec(n=1000, spikes_right=(2.5,), epsilon=0.0, seed=1)
    a, _ = build_deformation(spec)
    assert np.linalg.norm(a.array, 2) == pytest.approx(2.5)
    assert np.linalg.matrix_rank(a.array) == 1


def test_deformation_bulk_fraction_binomial():
    eta = uniform_eta()
    spec = DeformationSpec(n=2000, spikes_right=(2.5,), epsilon=0.1,
                           eta_law=eta, seed=7)
    a, nu = build_deformation(spec)
    bulk = np.diag(a.array)[1:]
    frac = np.mean(np.abs(bulk) > 0)
    sigma = math.sqrt(0.1 * 0.9 / bulk.size)
    assert abs(frac - 0.1) < 3 * sigma
    # the returned law is the announced mixture
    assert nu.cdf(0.25) == pytest.approx(0.9 + 0.1 * eta.cdf(0.25), abs=1e-12)


def test_deformation_validation():
    with pytest.raises(ValueError):
        DeformationSpec(n=10, spikes_right=(1.0, 2.0))  # wrong order
    with pytest.raises(ValueError):
        DeformationSpec(n=2, spikes_right=(1.0,), spikes_left=(-1.0,))
    with pytest.raises(ValueError):
        DeformationSpec(n=10, spikes_right=(0.1,), epsilon=0.5,
                        eta_law=uniform_eta())  # below bulk edge


# -- scaling and composition -----------------------------------------------------------------

def test_scaling_function_values():
    assert scaling_function(1, 0.5) == 1.0
    assert scaling_function(4, 0.5) == 0.5
    assert scaling_function(1024, 0.5) == pytest.approx(0.03125)
    vals = [scaling_function(b, 0.3) for b in (1, 2, 4, 8, 100)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_compose_hessian():
    x = SymmetricMatrix(np.array([[1.0, 2.0, 0.0], [2.0, -1.0, 3.0], [0.0, 3.0, 0.5]]))
    a = SymmetricMatrix(np.diag([1.0, 2.0, 3.0]))
    h = compose_hessian(x, a, 0.0)
    assert np.array_equal(h.array, a.array)
    h2 = compose_hessian(x, SymmetricMatrix(np.zeros((3, 3))), 2.0)
    assert np.array_equal(h2.array, 2.0 * x.array)
    h3 = compose_hessian(x, a, 0.5)
    assert h3.array[0, 1] == pytest.approx(1.0)
    assert h3.array[0, 0] == pytest.approx(1.5)
    with pytest.raises(ValueError):
        compose_hessian(x, SymmetricMatrix(np.zeros((4, 4))), 1.0)


# -- file formats ------------------------------------------------------------------------------

def test_matrix_binary_round_trip(tmp_path):
    m = sample(EnsembleSpec("goe", 40, seed=3))
    path = tmp_path / "mat.bin"
    save_matrix_binary(m, path)
    assert path.stat().st_size == 16 + 40 * 40 * 8
    back = load_matrix_binary(path)
    assert np.array_equal(back.array, m.array)


def test_matrix_binary_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 24)
    with pytest.raises(ValueError):
        load_matrix_binary(path)
