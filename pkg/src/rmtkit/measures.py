"""Spectral probability measures on the real line and their transforms.

Every measure exposes a common interface: Lebesgue density (where one
exists), Stieltjes transform g(z) = integral of 1/(z-x), principal-value
boundary transform, moments, free cumulants, R-transform, quantiles,
support edges, log-potential at 0, and CDF.  Closed forms are used where
available; otherwise adaptive Gauss-Kronrod quadrature (absolute tolerance
1e-10) does the work, with a cached cumulative table backing CDF/quantile
evaluation for density variants without a closed-form CDF.

All measures are immutable after construction and safe to share across
threads (internal caches are write-once and idempotent).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DivergenceError, NonConvergenceError, UnsupportedVariantError

__all__ = [
    "SpectralMeasure",
    "Semicircle",
    "MarchenkoPastur",
    "KestenMcKay",
    "PointMass",
    "Mixture",
    "Scaled",
    "Empirical",
    "NumericDensity",
    "w1_distance",
    "pv_stieltjes_excision",
    "cumulants_from_moments",
    "moments_from_cumulants",
    "measure_to_json",
    "measure_from_json",
]

_QUAD_ABS_TOL = 1e-10
_EDGE_VALUE_TOL = 1e-12
_CDF_TABLE_SIZE = 65537


def _quad(f, a, b, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=_QUAD_ABS_TOL, epsrel=1e-10,
                                limit=300, points=points)
    return val


def _log1p_complex(w):
    """log(1+w) for complex w; numpy's complex log1p rounds 1+w first, which
    loses precision for tiny w, so use a short series there."""
    w = np.asarray(w, dtype=complex)
    out = np.log1p(w)
    small = np.abs(w) < 1e-4
    if small.any():
        ws = w[small]
        out[small] = ws * (1 - ws * (0.5 - ws * (1.0 / 3.0 - 0.25 * ws)))
    return out


class SpectralMeasure:
    """Base class; concrete variants override the closed-form paths."""

    # -- density ---------------------------------------------------------

    def density_at(self, x):
        """Lebesgue density at x (0 outside support)."""
        raise UnsupportedVariantError(
            f"{type(self).__name__} does not admit a Lebesgue density")

    def has_density(self) -> bool:
        return True

    # -- Stieltjes transform ---------------------------------------------

    def stieltjes(self, z):
        """g(z) = integral dmu(x) / (z - x), branch with g(z) ~ 1/z at infinity.

        Accepts complex scalars or arrays.  Real z is allowed only strictly
        outside the support (the ordinary integral); inside the support use
        ``pv_stieltjes``.
        """
        z = np.asarray(z, dtype=complex)
        self._check_real_axis(z)
        out = np.asarray(self._stieltjes_impl(z))
        return out if out.shape else complex(out)

    def _check_real_axis(self, z):
        on_axis = z.imag == 0
        if np.any(on_axis):
            left, right = self.support_edges()
            inside = on_axis & (z.real >= left) & (z.real <= right)
            if np.any(inside):
                raise ValueError(
                    "stieltjes requires im(z) != 0 inside the support; "
                    "use pv_stieltjes for principal values")

    def _stieltjes_impl(self, z):
        # quadrature fallback against the density; 1/(z-x) split into parts
        left, right = self.support_edges()

        def one(zv):
            re = _quad(lambda x: self.density_at(x) * (zv.real - x) / abs(zv - x) ** 2,
                       left, right)
            im = _quad(lambda x: -self.density_at(x) * zv.imag / abs(zv - x) ** 2,
                       left, right)
            return complex(re, im)

        return np.vectorize(one, otypes=[complex])(z)

    def pv_stieltjes(self, x: float) -> float:
        """Cauchy principal value of integral dmu(y)/(x-y)."""
        return pv_stieltjes_excision(self, x)

    # -- moments / cumulants ----------------------------------------------

    def moments(self, n_max: int):
        """Raw moments m_1..m_n_max as a list."""
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        left, right = self.support_edges()
        return [_quad(lambda x, k=k: self.density_at(x) * x ** k, left, right)
                for k in range(1, n_max + 1)]

    def free_cumulants(self, n_max: int):
        """Free cumulants k_1..k_n_max via the moment-cumulant recursion."""
        return cumulants_from_moments(self.moments(n_max))

    def r_transform(self, z: float, order: int) -> float:
        """Truncated R-transform: sum_{n<order} k_{n+1} z^n."""
        ks = self.free_cumulants(order)
        return float(sum(k * z ** n for n, k in enumerate(ks)))

    # -- CDF / quantiles ---------------------------------------------------

    def _cdf_table(self):
        cached = getattr(self, "_cdf_cache", None)
        if cached is None:
            left, right = self.support_edges()
            xs = np.linspace(left, right, _CDF_TABLE_SIZE)
            dens = np.asarray(self.density_at(xs), dtype=float)
            cums = np.concatenate(([0.0], np.cumsum(
                0.5 * (dens[1:] + dens[:-1]) * np.diff(xs))))
            cums /= cums[-1]
            cached = (xs, cums)
            # write-once cache; benign if two threads race (same value)
            object.__setattr__(self, "_cdf_cache", cached)
        return cached

    def cdf(self, x: float) -> float:
        xs, cums = self._cdf_table()
        return float(np.interp(x, xs, cums, left=0.0, right=1.0))

    def _cdf_array(self, xs):
        gx, cums = self._cdf_table()
        return np.interp(xs, gx, cums, left=0.0, right=1.0)

    def quantile(self, j: int, n: int) -> float:
        """q with CDF(q) = j/n, by bisection on the CDF to 1e-10."""
        if not 1 <= j <= n:
            raise ValueError("need 1 <= j <= n")
        if not self.has_density():
            raise UnsupportedVariantError(
                f"quantile needs a density; not available for {type(self).__name__}")
        target = j / n
        lo, hi = self.support_edges()
        span = max(1.0, abs(lo), abs(hi))
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * span:
                break
        return 0.5 * (lo + hi)

    # -- misc ---------------------------------------------------------------

    def support_edges(self):
        raise NotImplementedError

    def log_abs_integral(self) -> float:
        """integral log|x| dmu(x), with the log singularity split out at 0."""
        for w, loc in self.atoms():
            if w > 0 and loc == 0.0:
                raise DivergenceError("log|x| integral diverges: atom at 0")
        left, right = self.support_edges()
        pts = [0.0] if left < 0.0 < right else None
        return _quad(lambda x: self.density_at(x) * math.log(abs(x)) if x != 0 else 0.0,
                     left, right, points=pts)

    def atoms(self):
        """List of (weight, location) atoms carried by this measure."""
        return []

    def sample_values(self, rng, size: int):
        """Inverse-CDF draws; used when building bulk deformation spectra."""
        xs, cums = self._cdf_table()
        return np.interp(rng.random(size), cums, xs)


def _power_series_coeff(moms, r, s):
    """Coefficient of z^s in (sum_i m_i z^i)^r with m_0 = 1."""
    poly = np.zeros(s + 1)
    poly[0] = 1.0
    base = np.concatenate(([1.0], np.asarray(moms, dtype=float)[:s]))
    for _ in range(r):
        poly = np.convolve(poly, base)[: s + 1]
    return poly[s]


def cumulants_from_moments(moments):
    """Invert m_n = sum_r k_r * sum_{i_1+..+i_r = n-r} m_{i_1}..m_{i_r}."""
    moms = np.asarray(moments, dtype=float)
    ks = []
    for n in range(1, len(moms) + 1):
        acc = moms[n - 1]
        for r in range(1, n):
            acc -= ks[r - 1] * _power_series_coeff(moms, r, n - r)
        ks.append(float(acc))
    return ks


def moments_from_cumulants(cumulants):
    """Forward moment-cumulant recursion (round-trip companion)."""
    ks = list(cumulants)
    moms = []
    for n in range(1, len(ks) + 1):
        acc = 0.0
        for r in range(1, n + 1):
            acc += ks[r - 1] * _power_series_coeff(moms, r, n - r)
        moms.append(float(acc))
    return moms


def pv_stieltjes_excision(mu: SpectralMeasure, x: float, tol: float = 1e-8) -> float:
    """Principal value by symmetric excision with radius halving.

    The excision radius is halved until two successive values agree within
    ``tol``; raises NonConvergenceError after 60 halvings.
    """
    left, right = mu.support_edges()
    if x < left or x > right:
        return float(np.real(mu.stieltjes(complex(x, 0.0))))
    if not mu.has_density():
        raise UnsupportedVariantError("pv_stieltjes needs a density")

    def f(y):
        return mu.density_at(y) / (x - y)

    delta = min(x - left, right - x, 1.0) / 4.0
    if delta <= 1e-15:  # x at an edge: one-sided but still integrable
        delta = 0.25 * (right - left)

    def excised(d):
        total = 0.0
        if x - d > left:
            total += _quad(f, left, x - d)
        if x + d < right:
            total += _quad(f, x + d, right)
        return total

    prev = excised(delta)
    for _ in range(60):
        delta *= 0.5
        cur = prev
        # integrate only the freshly uncovered slivers
        if x - delta > left:
            cur += _quad(f, max(left, x - 2 * delta), x - delta)
        if x + delta < right:
            cur += _quad(f, x + delta, min(right, x + 2 * delta))
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise NonConvergenceError(
        f"principal value at x={x} did not stabilise within 60 halvings")


# ---------------------------------------------------------------------------
# analytic variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Semicircle(SpectralMeasure):
    """Semicircle law on [-radius, radius]; variance is radius^2/4."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def variance(self) -> float:
        return self.radius ** 2 / 4.0

    def density_at(self, x):
        r = self.radius
        x = np.asarray(x, dtype=float)
        out = np.where(np.abs(x) < r,
                       2.0 / (np.pi * r * r) * np.sqrt(np.maximum(r * r - x * x, 0.0)),
                       0.0)
        return out if out.shape else float(out)

    def _stieltjes_impl(self, z):
        # 2(z - sqrt(z^2 - r^2))/r^2 in the cancellation-free form
        r = self.radius
        root = np.sqrt(z - r) * np.sqrt(z + r)
        return 2.0 / (z + root)

    def pv_stieltjes(self, x: float) -> float:
        r = self.radius
        if abs(x) <= r:
            return 2.0 * x / (r * r)
        return float(np.real(self.stieltjes(complex(x, 0.0))))

    def cdf(self, x: float) -> float:
        r = self.radius
        if x <= -r:
            return 0.0
        if x >= r:
            return 1.0
        return 0.5 + x * math.sqrt(r * r - x * x) / (math.pi * r * r) \
            + math.asin(x / r) / math.pi

    def _cdf_array(self, xs):
        r = self.radius
        xc = np.clip(np.asarray(xs, dtype=float), -r, r)
        return 0.5 + xc * np.sqrt(r * r - xc * xc) / (np.pi * r * r) \
            + np.arcsin(xc / r) / np.pi

    def moments(self, n_max: int):
        var = self.variance
        out = []
        for n in range(1, n_max + 1):
            if n % 2 == 1:
                out.append(0.0)
            else:
                k = n // 2
                catalan = math.comb(2 * k, k) / (k + 1)
                out.append(catalan * var ** k)
        return out

    def free_cumulants(self, n_max: int):
        ks = [0.0] * n_max
        if n_max >= 2:
            ks[1] = self.variance
        return ks

    def support_edges(self):
        return (-self.radius, self.radius)


@dataclass(frozen=True)
class MarchenkoPastur(SpectralMeasure):
    """Marchenko-Pastur law, ratio in (0, 1], entry-variance ``scale``.

    Convention: the limit of (1/m) X X^T with X of shape n x m, i.i.d. entries
    of variance ``scale``, and n/m -> ratio.  Support is
    scale*(1 -+ sqrt(ratio))^2; no atom for ratio <= 1.
    """

    ratio: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def support_edges(self):
        a = self.scale * (1 - math.sqrt(self.ratio)) ** 2
        b = self.scale * (1 + math.sqrt(self.ratio)) ** 2
        return (a, b)

    def density_at(self, x):
        a, b = self.support_edges()
        lam, s2 = self.ratio, self.scale
        x = np.asarray(x, dtype=float)
        inside = (x > a) & (x < b)
        xs = np.where(inside, x, a + 0.5 * (b - a))  # dummy off-support
        val = np.where(
            inside,
            np.sqrt(np.maximum((b - xs) * (xs - a), 0.0)) / (2 * np.pi * lam * s2 * xs),
            0.0,
        )
        return val if val.shape else float(val)

    def _stieltjes_impl(self, z):
        # (z + s2(lam-1) - sqrt((z-a)(z-b))) / (2 lam s2 z), rationalised to
        # avoid cancellation at large |z|
        lam, s2 = self.ratio, self.scale
        a, b = self.support_edges()
        root = np.sqrt(z - b) * np.sqrt(z - a)
        return 2.0 / (z + s2 * (lam - 1) + root)

    def moments(self, n_max: int):
        lam, s2 = self.ratio, self.scale
        out = []
        for k in range(1, n_max + 1):
            m = sum(lam ** r / (r + 1) * math.comb(k, r) * math.comb(k - 1, r)
                    for r in range(k))
            out.append(s2 ** k * m)
        return out

    def free_cumulants(self, n_max: int):
        lam, s2 = self.ratio, self.scale
        return [lam ** (n - 1) * s2 ** n for n in range(1, n_max + 1)]


@dataclass(frozen=True)
class KestenMcKay(SpectralMeasure):
    """Kesten-McKay law for d-regular adjacency spectra (raw eigenvalues).

    Density d*sqrt(4(d-1) - x^2) / (2*pi*(d^2 - x^2)) on |x| <= 2*sqrt(d-1).
    """

    degree: int

    def __post_init__(self):
        if self.degree < 3:
            raise ValueError("degree must be >= 3")

    def support_edges(self):
        e = 2.0 * math.sqrt(self.degree - 1)
        return (-e, e)

    def density_at(self, x):
        d = self.degree
        e = 2.0 * math.sqrt(d - 1)
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < e
        val = np.where(
            inside,
            d * np.sqrt(np.maximum(4 * (d - 1) - x * x, 0.0))
            / (2 * np.pi * (d * d - np.where(inside, x, 0.0) ** 2)),
            0.0,
        )
        return val if val.shape else float(val)

    def _stieltjes_impl(self, z):
        d = self.degree
        e = 2.0 * math.sqrt(d - 1)
        root = np.sqrt(z - e) * np.sqrt(z + e)
        return 2.0 * (d - 1) / ((d - 2) * z + d * root)


@dataclass(frozen=True)
class PointMass(SpectralMeasure):
    """Dirac mass at ``location``."""

    location: float

    def has_density(self) -> bool:
        return False

    def density_at(self, x):
        raise UnsupportedVariantError("a point mass has no Lebesgue density")

    def _check_real_axis(self, z):
        if np.any((z.imag == 0) & (z.real == self.location)):
            raise ValueError("stieltjes undefined at the atom itself")

    def _stieltjes_impl(self, z):
        return 1.0 / (z - self.location)

    def pv_stieltjes(self, x: float) -> float:
        if x == self.location:
            raise UnsupportedVariantError("principal value undefined at the atom")
        return 1.0 / (x - self.location)

    def cdf(self, x: float) -> float:
        return 1.0 if x >= self.location else 0.0

    def _cdf_array(self, xs):
        return (np.asarray(xs) >= self.location).astype(float)

    def moments(self, n_max: int):
        return [self.location ** n for n in range(1, n_max + 1)]

    def free_cumulants(self, n_max: int):
        return [self.location] + [0.0] * (n_max - 1)

    def support_edges(self):
        return (self.location, self.location)

    def log_abs_integral(self) -> float:
        if self.location == 0.0:
            raise DivergenceError("log|x| integral diverges: atom at 0")
        return math.log(abs(self.location))

    def atoms(self):
        return [(1.0, self.location)]

    def sample_values(self, rng, size: int):
        return np.full(size, self.location)


@dataclass(frozen=True, init=False)
class Mixture(SpectralMeasure):
    """Convex combination of measures; weights must sum to 1 within 1e-12."""

    components: tuple

    def __init__(self, components):
        comps = tuple((float(w), m) for w, m in components)
        if any(w < 0 for w, _ in comps):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(w for w, _ in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "components", comps)

    def _live(self):
        return [(w, m) for w, m in self.components if w > 0]

    def has_density(self) -> bool:
        return all(m.has_density() for _, m in self._live())

    def density_at(self, x):
        if not self.has_density():
            raise UnsupportedVariantError("mixture contains an atomic component")
        out = sum(w * np.asarray(m.density_at(x)) for w, m in self._live())
        out = np.asarray(out)
        return out if out.shape else float(out)

    def _check_real_axis(self, z):
        for _, m in self._live():
            m._check_real_axis(z)

    def _stieltjes_impl(self, z):
        return sum(w * np.asarray(m._stieltjes_impl(z)) for w, m in self._live())

    def pv_stieltjes(self, x: float) -> float:
        return float(sum(w * m.pv_stieltjes(x) for w, m in self._live()))

    def cdf(self, x: float) -> float:
        return float(sum(w * m.cdf(x) for w, m in self._live()))

    def _cdf_array(self, xs):
        return sum(w * m._cdf_array(xs) for w, m in self._live())

    def moments(self, n_max: int):
        parts = [(w, m.moments(n_max)) for w, m in self._live()]
        return [float(sum(w * p[i] for w, p in parts)) for i in range(n_max)]

    def support_edges(self):
        lows, highs = zip(*(m.support_edges() for _, m in self._live()))
        return (min(lows), max(highs))

    def log_abs_integral(self) -> float:
        return float(sum(w * m.log_abs_integral() for w, m in self._live()))

    def atoms(self):
        out = []
        for w, m in self._live():
            out.extend((w * wa, loc) for wa, loc in m.atoms())
        return out

    def sample_values(self, rng, size: int):
        live = self._live()
        weights = np.array([w for w, _ in live])
        choice = rng.choice(len(live), size=size, p=weights / weights.sum())
        out = np.empty(size)
        for idx, (_, m) in enumerate(live):
            mask = choice == idx
            if mask.any():
                out[mask] = m.sample_values(rng, int(mask.sum()))
        return out


@dataclass(frozen=True)
class Scaled(SpectralMeasure):
    """Pushforward of ``inner`` under x -> factor*x, factor > 0."""

    factor: float
    inner: SpectralMeasure

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError("scale factor must be positive")

    def has_density(self) -> bool:
        return self.inner.has_density()

    def density_at(self, x):
        s = self.factor
        out = np.asarray(self.inner.density_at(np.asarray(x, dtype=float) / s)) / s
        return out if out.shape else float(out)

    def _check_real_axis(self, z):
        self.inner._check_real_axis(z / self.factor)

    def _stieltjes_impl(self, z):
        s = self.factor
        return np.asarray(self.inner._stieltjes_impl(z / s)) / s

    def pv_stieltjes(self, x: float) -> float:
        s = self.factor
        return self.inner.pv_stieltjes(x / s) / s

    def cdf(self, x: float) -> float:
        return self.inner.cdf(x / self.factor)

    def _cdf_array(self, xs):
        return self.inner._cdf_array(np.asarray(xs) / self.factor)

    def quantile(self, j: int, n: int) -> float:
        return self.factor * self.inner.quantile(j, n)

    def moments(self, n_max: int):
        return [self.factor ** (i + 1) * m
                for i, m in enumerate(self.inner.moments(n_max))]

    def free_cumulants(self, n_max: int):
        return [self.factor ** (i + 1) * k
                for i, k in enumerate(self.inner.free_cumulants(n_max))]

    def support_edges(self):
        lo, hi = self.inner.support_edges()
        return (self.factor * lo, self.factor * hi)

    def log_abs_integral(self) -> float:
        return math.log(self.factor) + self.inner.log_abs_integral()

    def atoms(self):
        return [(w, self.factor * loc) for w, loc in self.inner.atoms()]

    def sample_values(self, rng, size: int):
        return self.factor * self.inner.sample_values(rng, size)


class Empirical(SpectralMeasure):
    """Counting measure of a finite eigenvalue sample (kept sorted)."""

    def __init__(self, eigenvalues):
        eigs = np.sort(np.asarray(eigenvalues, dtype=float))
        if eigs.size == 0:
            raise ValueError("empirical measure needs at least one eigenvalue")
        self.eigenvalues = eigs

    def has_density(self) -> bool:
        return False

    def density_at(self, x):
        raise UnsupportedVariantError("an empirical measure has no Lebesgue density")

    def _check_real_axis(self, z):
        if np.any((z.imag == 0) & np.isin(z.real, self.eigenvalues)):
            raise ValueError("stieltjes undefined at an eigenvalue")

    def _stieltjes_impl(self, z):
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.mean(1.0 / (zz[..., None] - self.eigenvalues), axis=-1)
        return out.reshape(np.shape(z))

    def cdf(self, x: float) -> float:
        return float(np.searchsorted(self.eigenvalues, x, side="right")) \
            / self.eigenvalues.size

    def _cdf_array(self, xs):
        return np.searchsorted(self.eigenvalues, np.asarray(xs), side="right") \
            / self.eigenvalues.size

    def quantile(self, j: int, n: int) -> float:
        if n != self.eigenvalues.size:
            raise ValueError("for empirical measures N must equal the sample size")
        if not 1 <= j <= n:
            raise ValueError("need 1 <= j <= n")
        return float(self.eigenvalues[j - 1])

    def moments(self, n_max: int):
        return [float(np.mean(self.eigenvalues ** n)) for n in range(1, n_max + 1)]

    def support_edges(self):
        return (float(self.eigenvalues[0]), float(self.eigenvalues[-1]))

    def log_abs_integral(self) -> float:
        if np.any(np.abs(self.eigenvalues) < 1e-300):
            raise DivergenceError("eigenvalue at (or numerically at) zero")
        return float(np.mean(np.log(np.abs(self.eigenvalues))))

    def atoms(self):
        n = self.eigenvalues.size
        return [(1.0 / n, float(v)) for v in self.eigenvalues]

    def sample_values(self, rng, size: int):
        return rng.choice(self.eigenvalues, size=size, replace=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eigenvalue"])
            for v in self.eigenvalues:
                writer.writerow([repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["eigenvalue"]:
            raise ValueError("expected a one-column CSV with header 'eigenvalue'")
        return cls([float(r[0]) for r in rows[1:]])


class NumericDensity(SpectralMeasure):
    """Density sampled on a strictly increasing grid, piecewise linear
    between nodes; renormalised to total mass 1 at construction."""

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float).copy()
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-D array with at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if values.shape != grid.shape:
            raise ValueError("grid/values shape mismatch")
        if np.any(values < -1e-12):
            raise ValueError("density values must be nonnegative")
        values[values < 0] = 0.0
        mass = np.trapezoid(values, grid)
        if mass <= 0:
            raise ValueError("density has no mass")
        self.grid = grid
        self.values = values / mass
        self._cums = np.concatenate(([0.0], np.cumsum(
            0.5 * (self.values[1:] + self.values[:-1]) * np.diff(grid))))
        self._cums /= self._cums[-1]

    @classmethod
    def from_callable(cls, f, lo, hi, n=2048):
        grid = np.linspace(lo, hi, n)
        return cls(grid, np.maximum(np.asarray(f(grid), dtype=float), 0.0))

    def density_at(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.grid, self.values,
                        left=0.0, right=0.0)
        return out if out.shape else float(out)

    def _segments(self):
        x0, x1 = self.grid[:-1], self.grid[1:]
        y0, y1 = self.values[:-1], self.values[1:]
        b = (y1 - y0) / (x1 - x0)
        a = y0 - b * x0
        return x0, x1, a, b

    def _stieltjes_impl(self, z):
        # exact integral of the piecewise-linear density against 1/(z-x)
        x0, x1, a, b = self._segments()
        zz = np.atleast_1d(np.asarray(z, dtype=complex))[..., None]
        dlog = _log1p_complex((x1 - x0) / (zz - x1))
        g = ((a + b * zz) * dlog - b * (x1 - x0)).sum(axis=-1)
        return g.reshape(np.shape(z))

    def cdf(self, x: float) -> float:
        return float(np.interp(x, self.grid, self._cums, left=0.0, right=1.0))

    def _cdf_array(self, xs):
        return np.interp(xs, self.grid, self._cums, left=0.0, right=1.0)

    def quantile(self, j: int, n: int) -> float:
        if not 1 <= j <= n:
            raise ValueError("need 1 <= j <= n")
        return float(np.interp(j / n, self._cums, self.grid))

    def moments(self, n_max: int):
        # exact polynomial integration over each linear segment
        x0, x1, a, b = self._segments()
        out = []
        for n in range(1, n_max + 1):
            term = a * (x1 ** (n + 1) - x0 ** (n + 1)) / (n + 1) \
                + b * (x1 ** (n + 2) - x0 ** (n + 2)) / (n + 2)
            out.append(float(term.sum()))
        return out

    def support_edges(self):
        nz = np.nonzero(self.values > _EDGE_VALUE_TOL)[0]
        if nz.size == 0:
            return (float(self.grid[0]), float(self.grid[-1]))
        return (float(self.grid[nz[0]]), float(self.grid[nz[-1]]))

    def log_abs_integral(self) -> float:
        left, right = self.support_edges()
        pts = [0.0] if left < 0.0 < right else None
        return _quad(lambda x: (self.density_at(x) * math.log(abs(x))) if x != 0 else 0.0,
                     left, right, points=pts)

    def sample_values(self, rng, size: int):
        return np.interp(rng.random(size), self._cums, self.grid)


# ---------------------------------------------------------------------------
# binary operations / serialisation
# ---------------------------------------------------------------------------


def w1_distance(mu: SpectralMeasure, nu: SpectralMeasure, grid_points: int = 8192) -> float:
    """Wasserstein-1 distance via integral |F_mu - F_nu| on a shared grid.

    Atom locations of either measure are inserted as extra breakpoints so
    that CDF jumps do not cost O(grid spacing) each.
    """
    lo = min(mu.support_edges()[0], nu.support_edges()[0])
    hi = max(mu.support_edges()[1], nu.support_edges()[1])
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    xs = np.linspace(lo - pad, hi + pad, grid_points)
    atoms = np.array([loc for m in (mu, nu) for _, loc in m.atoms()])
    if atoms.size:
        eps = 1e-12 * max(1.0, abs(lo), abs(hi))
        xs = np.unique(np.concatenate([xs, atoms - eps, atoms + eps]))
    return float(np.trapezoid(np.abs(mu._cdf_array(xs) - nu._cdf_array(xs)), xs))


_TAG_NAMES = ("semicircle", "marchenko_pastur", "kesten_mckay", "point_mass",
              "mixture", "scaled", "empirical", "numeric_density")


def measure_to_json(mu: SpectralMeasure) -> dict:
    """Tagged-union JSON form of a measure."""
    if isinstance(mu, Semicircle):
        return {"type": "semicircle", "radius": mu.radius}
    if isinstance(mu, MarchenkoPastur):
        return {"type": "marchenko_pastur", "ratio": mu.ratio, "scale": mu.scale}
    if isinstance(mu, KestenMcKay):
        return {"type": "kesten_mckay", "degree": mu.degree}
    if isinstance(mu, PointMass):
        return {"type": "point_mass", "location": mu.location}
    if isinstance(mu, Mixture):
        return {"type": "mixture",
                "components": [{"weight": w, "measure": measure_to_json(m)}
                               for w, m in mu.components]}
    if isinstance(mu, Scaled):
        return {"type": "scaled", "factor": mu.factor, "inner": measure_to_json(mu.inner)}
    if isinstance(mu, Empirical):
        return {"type": "empirical", "eigenvalues": [float(v) for v in mu.eigenvalues]}
    if isinstance(mu, NumericDensity):
        return {"type": "numeric_density",
                "grid": [float(v) for v in mu.grid],
                "values": [float(v) for v in mu.values]}
    raise TypeError(f"cannot serialise {type(mu).__name__}")


def measure_from_json(obj) -> SpectralMeasure:
    """Inverse of ``measure_to_json``; accepts a dict or a JSON string."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    tag = obj.get("type")
    if tag == "semicircle":
        return Semicircle(radius=float(obj["radius"]))
    if tag == "marchenko_pastur":
        return MarchenkoPastur(ratio=float(obj["ratio"]),
                               scale=float(obj.get("scale", 1.0)))
    if tag == "kesten_mckay":
        return KestenMcKay(degree=int(obj["degree"]))
    if tag == "point_mass":
        return PointMass(location=float(obj["location"]))
    if tag == "mixture":
        return Mixture([(float(c["weight"]), measure_from_json(c["measure"]))
                        for c in obj["components"]])
    if tag == "scaled":
        return Scaled(factor=float(obj["factor"]), inner=measure_from_json(obj["inner"]))
    if tag == "empirical":
        return Empirical(obj["eigenvalues"])
    if tag == "numeric_density":
        return NumericDensity(obj["grid"], obj["values"])
    raise ValueError(f"unknown measure tag: {tag!r}")
