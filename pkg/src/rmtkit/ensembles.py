"""Seeded samplers for the matrix ensembles and the deformed model s*X + A.

Randomness comes from numpy's counter-based Philox generator keyed by the
spec's 64-bit seed (derived sub-streams use SeedSequence spawning), so a
given spec yields a bit-identical matrix on every platform/run and distinct
seeds may be sampled concurrently.

Entry conventions (n x n, symmetric):

    GOE       Var(M_ij) = (1 + delta_ij) / (2n)
    UWig      sqrt(n) * M_ij ~ U(0, sqrt(6))      up to symmetry
    GammaWig  2*sqrt(n) * M_ij ~ Gamma(shape=2)   up to symmetry
    UWish     (1/m) X X^T,  X_ij ~ U(0, sqrt(12)), X of shape n x m
    Wish      (1/m) X X^T,  X_ij ~ N(0, 1)
    Regular   0/1 adjacency of a uniform simple d-regular graph
              (configuration model, resampled until simple)

The uniform/Gamma entry laws are uncentred; the induced rank-one mean
component is kept.  Wigner-type diagonals are drawn from the same law as
the off-diagonal entries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError
from .measures import Mixture, PointMass, SpectralMeasure

__all__ = [
    "EnsembleSpec",
    "DeformationSpec",
    "SymmetricMatrix",
    "sample",
    "build_deformation",
    "scaling_function",
    "compose_hessian",
    "save_matrix_binary",
    "load_matrix_binary",
    "save_matrix_csv",
    "save_spectrum_csv",
]

_KINDS = ("goe", "uwig", "gammawig", "uwish", "wish", "regular")
_MAGIC = b"RMTSYM1\x00"


class SymmetricMatrix:
    """Dense real symmetric matrix; symmetry is exact by construction."""

    def __init__(self, array):
        a = np.ascontiguousarray(array, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("need a square matrix")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not exactly symmetric")
        self.array = a

    @classmethod
    def from_lower(cls, lower):
        """Mirror a lower-triangular fill across the diagonal (bit-exact)."""
        a = np.asarray(lower, dtype=float)
        full = np.tril(a) + np.tril(a, -1).T
        return cls(full)

    @property
    def n(self) -> int:
        return self.array.shape[0]

    def matvec(self, x):
        return self.array @ x

    def __add__(self, other):
        return SymmetricMatrix(self.array + other.array)

    def __rmul__(self, scalar):
        return SymmetricMatrix(float(scalar) * self.array)


@dataclass(frozen=True)
class EnsembleSpec:
    """Recipe for one random matrix draw."""

    kind: str
    n: int
    m: int | None = None      # Wishart second dimension
    d: int | None = None      # regular-graph degree
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}; one of {_KINDS}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.kind in ("uwish", "wish"):
            if self.m is None or self.m < 1:
                raise ValueError("Wishart ensembles need m >= 1")
        if self.kind == "regular":
            if self.d is None or not 3 <= self.d < self.n:
                raise ValueError("regular graphs need 3 <= d < n")
            if (self.n * self.d) % 2 != 0:
                raise ValueError("n*d must be even for a d-regular graph")


@dataclass(frozen=True)
class DeformationSpec:
    """Deterministic spike/bulk deformation A with limit law eps*eta + (1-eps)*delta_0."""

    n: int
    spikes_right: tuple = ()        # theta_1 > ... > theta_p > r(nu)
    spikes_left: tuple = ()         # theta'_1 < ... < theta'_q < l(nu)
    epsilon: float = 0.0
    eta_law: SpectralMeasure | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "spikes_right", tuple(float(t) for t in self.spikes_right))
        object.__setattr__(self, "spikes_left", tuple(float(t) for t in self.spikes_left))
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.epsilon > 0 and self.eta_law is None:
            raise ValueError("epsilon > 0 needs an eta law")
        p, q = len(self.spikes_right), len(self.spikes_left)
        if p + q >= self.n:
            raise ValueError("spike count must be below the matrix size")
        if any(a <= b for a, b in zip(self.spikes_right, self.spikes_right[1:])):
            raise ValueError("right spikes must be strictly decreasing")
        if any(a >= b for a, b in zip(self.spikes_left, self.spikes_left[1:])):
            raise ValueError("left spikes must be strictly increasing")
        r_edge, l_edge = 0.0, 0.0
        if self.epsilon > 0:
            lo, hi = self.eta_law.support_edges()
            l_edge, r_edge = min(lo, 0.0), max(hi, 0.0)
        if p and self.spikes_right[-1] <= r_edge:
            raise ValueError("right spikes must exceed the bulk's right edge")
        if q and self.spikes_left[-1] >= l_edge:
            raise ValueError("left spikes must fall below the bulk's left edge")


def _rng(seed: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _wigner_fill(rng_draw, n: int) -> SymmetricMatrix:
    """Fill the lower triangle (incl. diagonal) i.i.d. and mirror it."""
    a = rng_draw((n, n))
    return SymmetricMatrix.from_lower(a)


def _regular_adjacency(rng, n: int, d: int) -> np.ndarray:
    """Configuration model; resample until the multigraph is simple."""
    stubs = np.repeat(np.arange(n), d)
    for _ in range(10_000):
        perm = rng.permutation(stubs)
        u, v = perm[0::2], perm[1::2]
        if np.any(u == v):
            continue
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            continue
        adj = np.zeros((n, n))
        adj[u, v] = 1.0
        adj[v, u] = 1.0
        return adj
    raise NonConvergenceError(
        f"no simple {d}-regular graph found in 10000 configuration-model draws")


def sample(spec: EnsembleSpec) -> SymmetricMatrix:
    """One seeded draw from the ensemble described by ``spec``."""
    rng = _rng(spec.seed)
    n = spec.n
    if spec.kind == "goe":
        def draw(shape):
            a = rng.standard_normal(shape) / np.sqrt(2 * n)
            return a
        m = _wigner_fill(draw, n)
        # diagonal variance is 1/n, twice the off-diagonal variance
        d = m.array.copy()
        np.fill_diagonal(d, np.diag(d) * np.sqrt(2.0))
        return SymmetricMatrix(d)
    if spec.kind == "uwig":
        return _wigner_fill(lambda s: rng.uniform(0.0, np.sqrt(6.0), s) / np.sqrt(n), n)
    if spec.kind == "gammawig":
        return _wigner_fill(lambda s: rng.gamma(2.0, 1.0, s) / (2.0 * np.sqrt(n)), n)
    if spec.kind in ("uwish", "wish"):
        if spec.kind == "uwish":
            x = rng.uniform(0.0, np.sqrt(12.0), (n, spec.m))
        else:
            x = rng.standard_normal((n, spec.m))
        p = x @ x.T / spec.m
        return SymmetricMatrix((p + p.T) / 2.0)
    if spec.kind == "regular":
        return SymmetricMatrix(_regular_adjacency(rng, n, spec.d))
    raise AssertionError("unreachable")


def build_deformation(spec: DeformationSpec):
    """Diagonal deformation A = diag(right spikes, bulk, left spikes) and its
    limit law nu = eps*eta + (1-eps)*delta_0."""
    rng = _rng(spec.seed)
    p, q = len(spec.spikes_right), len(spec.spikes_left)
    n_bulk = spec.n - p - q
    bulk = np.zeros(n_bulk)
    if spec.epsilon > 0:
        mask = rng.random(n_bulk) < spec.epsilon
        if mask.any():
            bulk[mask] = spec.eta_law.sample_values(rng, int(mask.sum()))
    diag = np.concatenate([
        np.asarray(spec.spikes_right, dtype=float),
        bulk,
        np.asarray(spec.spikes_left, dtype=float)[::-1],
    ])
    a = SymmetricMatrix(np.diag(diag))
    if spec.epsilon > 0:
        nu = Mixture([(spec.epsilon, spec.eta_law), (1.0 - spec.epsilon, PointMass(0.0))])
    else:
        nu = Mixture([(1.0, PointMass(0.0))])
    return a, nu


def scaling_function(b: int, upsilon: float = 0.5) -> float:
    """Batch scaling s(b) = b^(-upsilon), strictly decreasing in b."""
    if b < 1:
        raise ValueError("batch size must be >= 1")
    if upsilon <= 0:
        raise ValueError("upsilon must be positive")
    return float(b) ** (-upsilon)


def compose_hessian(x: SymmetricMatrix, a: SymmetricMatrix, s: float) -> SymmetricMatrix:
    """H = s*X + A."""
    if x.n != a.n:
        raise ValueError(f"size mismatch: {x.n} vs {a.n}")
    return SymmetricMatrix(s * x.array + a.array)


# -- file formats -----------------------------------------------------------


def save_matrix_binary(mat: SymmetricMatrix, path):
    """16-byte header (8-byte magic + uint64 n, little endian), then
    row-major float64 entries."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", mat.n))
        fh.write(mat.array.tobytes(order="C"))


def load_matrix_binary(path) -> SymmetricMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError("bad magic; not a matrix file")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n, n).copy()
    return SymmetricMatrix(data)


def save_matrix_csv(mat: SymmetricMatrix, path):
    np.savetxt(path, mat.array, delimiter=",")


def save_spectrum_csv(values, path):
    with open(path, "w", newline="") as fh:
        fh.write("eigenvalue\n")
        for v in np.asarray(values, dtype=float):
            fh.write(repr(float(v)) + "\n")
