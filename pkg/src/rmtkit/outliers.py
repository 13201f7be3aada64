"""Predicted locations of spike-induced outliers for deformed random
matrices: the fixed-rank law, the subordination form, the small-epsilon
perturbative expansion, and the truncated power-law model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RmtError
from .freeconv import convolve_general, default_grid
from .measures import SpectralMeasure

__all__ = [
    "OutlierPrediction",
    "predict_fixed_rank",
    "predict_subordination",
    "predict_perturbative",
    "predict_power_law",
    "detect_outliers",
]

_EDGE_PROBE = 1e-12


class BracketError(RmtError):
    """Stieltjes inversion bracket could not be established (defensive)."""


@dataclass(frozen=True)
class OutlierPrediction:
    spike: float
    location: float
    detached: bool
    bulk_edge_used: float


def _stieltjes_real(mu: SpectralMeasure, x: float) -> float:
    return float(np.real(mu.stieltjes(complex(x, 0.0))))


def _invert_stieltjes(mu: SpectralMeasure, w: float, side: str) -> float:
    """Solve g_mu(x) = w for x strictly outside the support on ``side``.

    g is monotone decreasing on (r, inf) with range (0, g(r+)), and
    monotone decreasing on (-inf, l) with range (g(l-), 0); bisection to
    1e-10 relative precision.
    """
    left, right = mu.support_edges()
    span = max(right - left, 1.0)
    if side == "right":
        lo = right + _EDGE_PROBE * span
        hi = right + 10.0 * max(1.0, 1.0 / abs(w))
        for _ in range(8):
            if _stieltjes_real(mu, hi) < w:
                break
            hi = right + 2 * (hi - right)
        else:
            raise BracketError("could not bracket the inverse Stieltjes value")
        if _stieltjes_real(mu, lo) < w:
            raise BracketError("spike below the detachment threshold")
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if _stieltjes_real(mu, mid) > w:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * max(1.0, abs(lo), abs(hi)):
                break
        return 0.5 * (lo + hi)
    # mirrored: x < left, g negative, decreasing toward g(l-)
    hi = left - _EDGE_PROBE * span
    lo = left - 10.0 * max(1.0, 1.0 / abs(w))
    for _ in range(8):
        if _stieltjes_real(mu, lo) > w:
            break
        lo = left - 2 * (left - lo)
    else:
        raise BracketError("could not bracket the inverse Stieltjes value")
    if _stieltjes_real(mu, hi) > w:
        raise BracketError("spike below the detachment threshold")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _stieltjes_real(mu, mid) > w:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def predict_fixed_rank(mu: SpectralMeasure, theta: float) -> OutlierPrediction:
    """Fixed-rank deformation law: the spike detaches to g_mu^{-1}(1/theta)
    when theta exceeds 1/g_mu at the relevant support edge, and sticks to
    the edge otherwise (mirrored for negative spikes at the left edge)."""
    if theta == 0:
        raise ValueError("theta must be nonzero")
    left, right = mu.support_edges()
    span = max(right - left, 1.0)
    if theta > 0:
        g_edge = _stieltjes_real(mu, right + _EDGE_PROBE * span)
        if 1.0 / theta < g_edge:
            loc = _invert_stieltjes(mu, 1.0 / theta, "right")
            return OutlierPrediction(theta, loc, True, right)
        return OutlierPrediction(theta, right, False, right)
    g_edge = _stieltjes_real(mu, left - _EDGE_PROBE * span)
    if 1.0 / theta > g_edge:
        loc = _invert_stieltjes(mu, 1.0 / theta, "left")
        return OutlierPrediction(theta, loc, True, left)
    return OutlierPrediction(theta, left, False, left)


def predict_subordination(mu_b: SpectralMeasure, nu: SpectralMeasure,
                          theta: float, conv=None, grid_points: int = 2048,
                          eta: float = 1e-4) -> OutlierPrediction:
    """Subordination-form outlier of mu_b boxplus nu for a spike theta of
    the deformation: omega^{-1}(theta) = R_{mu_b}(g_nu(theta)) + theta.

    R is evaluated through numeric inversion of the Stieltjes transform
    (R(w) = g^{-1}(w) - 1/w), not a truncated series.  The prediction is
    marked detached iff it falls outside the numerically computed support
    of mu_b boxplus nu; otherwise the relevant bulk edge is returned.
    ``conv`` may carry a precomputed ConvolutionResult for that pair.
    """
    if theta == 0:
        raise ValueError("theta must be nonzero")
    if conv is None:
        grid = default_grid(mu_b, nu, points=grid_points)
        conv = convolve_general(mu_b, nu, grid, eta=eta)
    bulk_left, bulk_right = conv.measure.support_edges()
    fuzz = conv.grid_spacing
    side = "right" if theta > 0 else "left"
    edge = bulk_right if theta > 0 else bulk_left
    w = float(np.real(nu.stieltjes(complex(theta, 0.0))))
    try:
        ginv = _invert_stieltjes(mu_b, w, side)
    except BracketError:
        return OutlierPrediction(theta, edge, False, edge)
    candidate = ginv - 1.0 / w + theta
    if theta > 0:
        detached = candidate > bulk_right + fuzz
    else:
        detached = candidate < bulk_left - fuzz
    if detached:
        return OutlierPrediction(theta, candidate, True, edge)
    return OutlierPrediction(theta, edge, False, edge)


def predict_perturbative(mu: SpectralMeasure, eta_law: SpectralMeasure,
                         eps: float, theta: float, s: float,
                         series_order: int = 16) -> float:
    """First order in eps:
    theta + s*R(s/theta) + eps*s^2*(g_eta(theta) - 1/theta)*R'(s/theta),
    with R and R' from the truncated free-cumulant series of mu."""
    if eps > 0.2:
        warnings.warn("perturbative expansion is first order; eps > 0.2 is "
                      "outside its comfort zone", stacklevel=2)
    ks = np.asarray(mu.free_cumulants(series_order))
    z = s / theta
    powers = z ** np.arange(series_order)
    r_val = float(ks @ powers)
    r_prime = float(ks[1:] @ (np.arange(1, series_order) * z ** np.arange(series_order - 1)))
    d_eta = float(np.real(eta_law.stieltjes(complex(theta, 0.0)))) - 1.0 / theta
    return theta + s * r_val + eps * s * s * d_eta * r_prime


def predict_power_law(theta: float, b: int, upsilon: float,
                      m1_mu: float, k2_mu: float, eps_m1_eta: float) -> float:
    """Truncated power-law model:
    theta + m1/b^u + (k2/b^{2u}) * (1/theta + eps*m1_eta/theta^2)."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    if b < 1:
        raise ValueError("batch size must be >= 1")
    bu = float(b) ** upsilon
    return theta + m1_mu / bu + k2_mu / bu ** 2 * (1.0 / theta + eps_m1_eta / theta ** 2)


def detect_outliers(spectrum, bulk: SpectralMeasure, k_max: int,
                    side: str = "right", margin_factor: float = 3.0):
    """Eigenvalues beyond the bulk edge by more than margin_factor*N^(-2/3).

    Right side returns up to ``k_max`` values descending; the left-edge
    variant returns the most extreme (smallest) first.
    """
    vals = np.sort(np.asarray(spectrum, dtype=float))
    if vals.size == 0:
        raise ValueError("empty spectrum")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    margin = margin_factor * vals.size ** (-2.0 / 3.0)
    left, right = bulk.support_edges()
    if side == "right":
        hits = vals[vals > right + margin]
        return list(hits[::-1][:k_max])
    if side == "left":
        hits = vals[vals < left - margin]
        return list(hits[:k_max])
    raise ValueError("side must be 'right' or 'left'")
