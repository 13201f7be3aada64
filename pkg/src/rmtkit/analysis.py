"""Diagnostics connecting sampled spectra to the limiting theory:
eigenvector-delocalisation statistics, rigidity and diagonal local-law
checks, preconditioner deterministic equivalents, landscape-complexity
exponents, q-q comparisons, and equilibrium potentials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .eigs import full_eigh
from .ensembles import SymmetricMatrix
from .errors import EmptyFeasibleSetError, UnsupportedVariantError
from .measures import (Empirical, Mixture, PointMass, Scaled, SpectralMeasure)

__all__ = [
    "QQData",
    "Potential",
    "que_statistic",
    "rigidity_check",
    "diag_local_law_error",
    "precond_equivalence",
    "kac_rice_exponent",
    "qq_compare",
    "potential_from_measure",
    "sv_functional",
    "measure_quantiles",
]


@dataclass(frozen=True)
class QQData:
    """Paired quantiles of two spectra with their regression line."""

    x_quantiles: np.ndarray
    y_quantiles: np.ndarray
    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class Potential:
    """Confining potential: tabulated on the support, quadratic outside.

    Each exterior branch is (y - y0)^2 + b, matched in value and first
    derivative at its junction, hence convex outside by construction.
    """

    support: tuple
    grid: np.ndarray
    values: np.ndarray
    left_quad: tuple    # (y0, b)
    right_quad: tuple   # (y0, b)
    junction_residuals: tuple  # (left value, left slope, right value, right slope)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.support
        inside = np.interp(y, self.grid, self.values)
        y0l, bl = self.left_quad
        y0r, br = self.right_quad
        out = np.where(y < lo, (y - y0l) ** 2 + bl,
                       np.where(y > hi, (y - y0r) ** 2 + br, inside))
        return out if out.shape else float(out)


def que_statistic(u_matrix: np.ndarray, q: np.ndarray, indices=None,
                  p_max: int = 1):
    """Bulk averages of (N (q . u_k)^2)^p for p = 1..p_max.

    ``indices`` defaults to the middle 80% of the spectrum, standing in for
    the bulk index set in which delocalisation is expected.
    """
    u_matrix = np.asarray(u_matrix, dtype=float)
    q = np.asarray(q, dtype=float)
    n = u_matrix.shape[0]
    if u_matrix.ndim != 2:
        raise ValueError("eigenvector matrix must be 2-D")
    if q.shape != (n,):
        raise ValueError("q must be a length-n vector")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    if indices is None:
        lo = int(round(0.1 * u_matrix.shape[1]))
        indices = np.arange(lo, u_matrix.shape[1] - lo)
    indices = np.asarray(indices, dtype=int)
    overlaps = n * (q @ u_matrix) ** 2
    sel = overlaps[indices]
    return [float(np.mean(sel ** p)) for p in range(1, p_max + 1)]


def measure_quantiles(mu: SpectralMeasure, n: int) -> np.ndarray:
    """All n quantiles q_j, j = 1..n, of a measure."""
    return np.array([mu.quantile(j, n) for j in range(1, n + 1)])


def rigidity_check(eigs, mu: SpectralMeasure, c_const: float,
                   quantiles=None) -> float:
    """Fraction of bulk indices (middle 90%) with
    |lambda_j - q_j| <= C * min(j, N-j+1)^(-1/3) * N^(-2/3)."""
    eigs = np.sort(np.asarray(eigs, dtype=float))
    n = eigs.size
    qs = measure_quantiles(mu, n) if quantiles is None else np.asarray(quantiles)
    j = np.arange(1, n + 1)
    bound = c_const * np.minimum(j, n - j + 1) ** (-1.0 / 3.0) * n ** (-2.0 / 3.0)
    lo = int(0.05 * n)
    bulk = slice(lo, n - lo)
    ok = np.abs(eigs - qs)[bulk] <= bound[bulk]
    return float(np.mean(ok))


def diag_local_law_error(eigs, mu: SpectralMeasure, z, quantiles=None):
    """Max_j |1/(z - lambda_j) - 1/(z - q_j)| for z off the support.

    Returns (error, scale) where scale = 1/(N^(2/3) (kappa + |im z|)^2) is
    the comparison magnitude from the diagonal local law; kappa is the
    distance of re(z) from the support.
    """
    z = complex(z)
    eigs = np.sort(np.asarray(eigs, dtype=float))
    n = eigs.size
    left, right = mu.support_edges()
    kappa = max(left - z.real, z.real - right)
    if kappa <= 0:
        raise ValueError("z must lie strictly outside the support of mu")
    qs = measure_quantiles(mu, n) if quantiles is None else np.asarray(quantiles)
    err = float(np.max(np.abs(1.0 / (z - eigs) - 1.0 / (z - qs))))
    scale = 1.0 / (n ** (2.0 / 3.0) * (kappa + abs(z.imag)) ** 2)
    return err, scale


def precond_equivalence(h: SymmetricMatrix, delta: float, g, mu: SpectralMeasure,
                        quantiles=None) -> float:
    """Relative error of the deterministic quantile surrogate for (H+delta)^-1 g.

    The surrogate applies (q_j + delta)^-1 in H's eigenbasis, with q_j the
    quantiles of the limiting law mu.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    g = np.asarray(g, dtype=float)
    if np.linalg.norm(g) == 0:
        raise ValueError("relative error undefined for g = 0")
    res = full_eigh(h, want_vectors=True)
    lam = res.eigenvalues
    if lam[0] + delta <= 0:
        raise ValueError("H + delta is not positive definite")
    n = lam.size
    qs = measure_quantiles(mu, n) if quantiles is None else np.asarray(quantiles)
    coeff = res.eigenvectors.T @ g
    exact = coeff / (lam + delta)
    surrogate = coeff / (qs + delta)
    return float(np.linalg.norm(exact - surrogate) / np.linalg.norm(surrogate))


def kac_rice_exponent(family, grid, alpha: float, eps_index: float):
    """Landscape-complexity exponent over a parameter grid:
    sup_u { integral log|x| dmu_u(x) - alpha*u^2 } subject to
    mu_u((-inf, 0)) <= eps_index.

    ``family`` maps a grid value u to a SpectralMeasure with a density.
    Returns (sup_value, argmax_u); raises EmptyFeasibleSetError when no
    grid point is feasible.  A positive value signals exponentially many
    critical points, a negative one exponentially few.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    best = None
    for u in np.asarray(grid, dtype=float):
        mu = family(u)
        if not mu.has_density():
            raise UnsupportedVariantError(
                "complexity exponent needs measures with densities")
        if mu.cdf(0.0) > eps_index:
            continue
        val = mu.log_abs_integral() - alpha * u * u
        if best is None or val > best[0]:
            best = (val, float(u))
    if best is None:
        raise EmptyFeasibleSetError("no feasible grid point (index constraint)")
    return best


def qq_compare(spectrum_a, spectrum_b) -> QQData:
    """Evenly spaced quantile pairs of two spectra plus least-squares line."""
    a = np.sort(np.asarray(spectrum_a, dtype=float))
    b = np.sort(np.asarray(spectrum_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("spectra must be nonempty")
    n = min(a.size, b.size)
    probs = (np.arange(n) + 0.5) / n
    xq = np.quantile(a, probs)
    yq = np.quantile(b, probs)
    slope, intercept = np.polyfit(xq, yq, 1)
    resid = yq - (slope * xq + intercept)
    ss_tot = float(np.sum((yq - yq.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return QQData(x_quantiles=xq, y_quantiles=yq, slope=float(slope),
                  intercept=float(intercept), r_squared=r2)


def _single_interval_support(mu: SpectralMeasure) -> bool:
    lo, hi = mu.support_edges()
    probe = np.linspace(lo, hi, 2001)[1:-1]
    dens = np.asarray(mu.density_at(probe))
    mask = dens > 1e-12
    if not mask.any():
        return False
    nz = np.flatnonzero(mask)
    return nz[-1] - nz[0] + 1 == nz.size


def potential_from_measure(mu: SpectralMeasure, n_grid: int = 2049) -> Potential:
    """Build the confining potential with equilibrium measure mu.

    On the support, V' = pv_stieltjes/2 (symmetric-ensemble normalisation)
    is integrated by the trapezoid rule from the left edge (integration
    constant 0 there).  Outside, each side is a parabola matched in value
    and slope at the junction.
    """
    if not mu.has_density() or mu.atoms():
        raise UnsupportedVariantError("potential needs an atomless density")
    if not _single_interval_support(mu):
        raise UnsupportedVariantError("multi-interval support is not handled")
    lo, hi = mu.support_edges()
    grid = np.linspace(lo, hi, n_grid)
    vprime = np.array([0.5 * mu.pv_stieltjes(x) for x in grid])
    values = np.concatenate(([0.0], np.cumsum(
        0.5 * (vprime[1:] + vprime[:-1]) * np.diff(grid))))

    def side(edge, v_edge, slope):
        y0 = edge - slope / 2.0
        b = v_edge - (slope / 2.0) ** 2
        val_resid = abs((edge - y0) ** 2 + b - v_edge)
        slope_resid = abs(2.0 * (edge - y0) - slope)
        return (y0, b), val_resid, slope_resid

    left_quad, lv, ls = side(lo, values[0], vprime[0])
    right_quad, rv, rs = side(hi, values[-1], vprime[-1])
    return Potential(support=(lo, hi), grid=grid, values=values,
                     left_quad=left_quad, right_quad=right_quad,
                     junction_residuals=(lv, ls, rv, rs))


def _log_kernel(mu: SpectralMeasure, y: float) -> float:
    """integral log|y-x| dmu(x)."""
    for w, loc in mu.atoms():
        if w > 0 and loc == y:
            raise UnsupportedVariantError("log kernel diverges on an atom at y")
    if isinstance(mu, PointMass):
        return math.log(abs(y - mu.location))
    if isinstance(mu, Empirical):
        return float(np.mean(np.log(np.abs(y - mu.eigenvalues))))
    if isinstance(mu, Mixture):
        return float(sum(w * _log_kernel(mu=m, y=y) for w, m in mu._live()))
    if isinstance(mu, Scaled):
        return math.log(mu.factor) + _log_kernel(mu.inner, y / mu.factor)
    lo, hi = mu.support_edges()
    pts = [y] if lo < y < hi else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            lambda x: mu.density_at(x) * math.log(abs(y - x)) if x != y else 0.0,
            lo, hi, epsabs=1e-10, epsrel=1e-10, limit=300, points=pts)
    return val


def sv_functional(potential: Potential, mu: SpectralMeasure, y: float) -> float:
    """S(y) = V(y) - (1/2) * integral log|y-x| dmu(x).

    The 1/2 on the log-energy matches the symmetric-ensemble normalisation
    used by ``potential_from_measure`` (V' = pv/2), which is what makes S
    constant on the support of the equilibrium measure and larger outside.
    """
    return float(potential(y)) - 0.5 * _log_kernel(mu, y)
