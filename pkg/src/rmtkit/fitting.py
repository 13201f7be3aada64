"""Outlier-scaling fit: lambda ~ theta + alpha/b^u + (beta/b^{2u}) * (1/theta
+ gamma/theta^2).

Given seed-averaged outlier data, (alpha, beta, beta*gamma) has a
closed-form inner solution for fixed theta (a 3-parameter linear
regression), leaving only the ordered positive spikes theta to fit by
gradient descent.  The ordering constraint is enforced exactly through the
cumulative-exponential reparametrisation theta_i = sum_{k>=i} exp(c_k);
a large penalty steers the descent away from regions where the
unconstrained inner solution turns beta negative, and the returned beta is
kept feasible by clamping to 0 and refitting the remaining free column.
The exponent u is chosen by sweeping a grid and keeping the minimal
penalised error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SingularDesignError

__all__ = [
    "OutlierDataset",
    "FitParams",
    "FitConfig",
    "FitReport",
    "seed_mean",
    "solve_linear_given_theta",
    "objective",
    "fit_theta",
    "sweep_upsilon",
    "init_theta_two_point",
    "generate_synthetic_dataset",
]

_DEFAULT_UPS_GRID = tuple(np.round(np.arange(0.1, 0.95, 0.1), 10))


@dataclass(frozen=True)
class OutlierDataset:
    """Measured top outliers: values[i, j, k] for outlier rank i (0 = top),
    batch seed j, batch size batch_sizes[k]."""

    batch_sizes: tuple
    values: np.ndarray

    def __init__(self, batch_sizes, values):
        bs = tuple(int(b) for b in batch_sizes)
        if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
            raise ValueError("batch sizes must be strictly increasing")
        if any(b < 1 for b in bs):
            raise ValueError("batch sizes must be positive")
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 3 or vals.shape[2] != len(bs):
            raise ValueError("values must have shape (n_out, n_seed, n_batch)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("dataset has missing or non-finite cells")
        object.__setattr__(self, "batch_sizes", bs)
        object.__setattr__(self, "values", vals)

    @property
    def n_out(self) -> int:
        return self.values.shape[0]

    @property
    def n_seed(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["outlier_index", "seed", "batch_size", "value"])
            for i in range(self.n_out):
                for j in range(self.n_seed):
                    for k, b in enumerate(self.batch_sizes):
                        writer.writerow([i + 1, j, b, repr(float(self.values[i, j, k]))])

    @classmethod
    def from_csv(cls, path):
        cells = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"outlier_index", "seed", "batch_size", "value"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ValueError(f"dataset CSV needs columns {sorted(need)}")
            for row in reader:
                key = (int(row["outlier_index"]), int(row["seed"]), int(row["batch_size"]))
                cells[key] = float(row["value"])
        outs = sorted({k[0] for k in cells})
        seeds = sorted({k[1] for k in cells})
        batches = sorted({k[2] for k in cells})
        vals = np.empty((len(outs), len(seeds), len(batches)))
        for (i, o) in enumerate(outs):
            for (j, s) in enumerate(seeds):
                for (k, b) in enumerate(batches):
                    if (o, s, b) not in cells:
                        raise ValueError(f"missing cell (outlier={o}, seed={s}, b={b})")
                    vals[i, j, k] = cells[(o, s, b)]
        return cls(batches, vals)


@dataclass(frozen=True)
class FitParams:
    """theta strictly decreasing positive; beta nonnegative."""

    theta: tuple
    alpha: float
    beta: float
    gamma: float
    upsilon: float

    def __post_init__(self):
        th = tuple(float(t) for t in self.theta)
        object.__setattr__(self, "theta", th)
        if any(t <= 0 for t in th):
            raise ValueError("theta entries must be positive")
        if any(a <= b for a, b in zip(th, th[1:])):
            raise ValueError("theta must be strictly decreasing")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.upsilon <= 0:
            raise ValueError("upsilon must be positive")


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.1
    max_iters: int = 5000
    penalty_weight: float = 1e6
    tol: float = 1e-10            # relative objective change
    fd_step: float = 1e-6
    lr_grow: float = 1.2
    lr_shrink: float = 0.5
    max_backtracks: int = 60
    init_theta: tuple | None = None


@dataclass(frozen=True)
class FitReport:
    params: FitParams
    mse: float
    per_upsilon: tuple          # ((upsilon, penalised error), ...)
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "theta": list(self.params.theta),
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "gamma": self.params.gamma,
            "upsilon": self.params.upsilon,
            "mse": self.mse,
            "per_upsilon": [[u, e] for u, e in self.per_upsilon],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def seed_mean(data: OutlierDataset) -> np.ndarray:
    """Mean over the batch-seed axis: shape (n_out, n_batch)."""
    return data.values.mean(axis=1)


def _theta_from_c(c: np.ndarray) -> np.ndarray:
    # cap keeps exp finite; steps that far out are rejected by the line
    # search anyway
    return np.cumsum(np.exp(np.minimum(c, 600.0))[::-1])[::-1]


def _c_from_theta(theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    diffs = th - np.append(th[1:], 0.0)
    if np.any(diffs <= 0):
        raise ValueError("theta must be strictly decreasing and positive")
    return np.log(diffs)


def _design(theta, batch_sizes, upsilon):
    th = np.asarray(theta)[:, None]
    b = np.asarray(batch_sizes, dtype=float)[None, :]
    with np.errstate(over="ignore"):
        bu = b ** (-upsilon)
        b2u = b ** (-2 * upsilon)
        x1 = np.broadcast_to(bu, (th.size, b.size))
        x2 = b2u / th
        x3 = b2u / th ** 2
    return np.stack([x1.ravel(), x2.ravel(), x3.ravel()], axis=1)


def solve_linear_given_theta(lam_bar: np.ndarray, theta, batch_sizes,
                             upsilon: float):
    """Exact inner solve for (alpha, beta_raw, beta*gamma_raw) at fixed theta.

    Normal-equation solution w = (X X^T)^{-1} X Y with design rows
    (b^-u, b^-2u/theta_i, b^-2u/theta_i^2) and targets lambda_bar - theta_i.
    Raises SingularDesignError when the 3x3 system is numerically singular.
    """
    lam_bar = np.asarray(lam_bar, dtype=float)
    th = np.asarray(theta, dtype=float)
    if lam_bar.shape != (th.size, len(batch_sizes)):
        raise ValueError("lambda_bar must have shape (n_out, n_batch)")
    if lam_bar.size < 3:
        raise SingularDesignError("need at least 3 (outlier, batch) cells")
    w, _, _ = _inner_solve(lam_bar, th, batch_sizes, upsilon)
    return float(w[0]), float(w[1]), float(w[2])


def _inner_solve(lam_bar, theta, batch_sizes, upsilon):
    x = _design(theta, batch_sizes, upsilon)
    y = (lam_bar - np.asarray(theta)[:, None]).ravel()
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SingularDesignError("design matrix overflowed at extreme theta")
    xtx = x.T @ x
    if np.linalg.cond(xtx) > 1e12:
        raise SingularDesignError("design matrix X X^T is numerically singular")
    w = np.linalg.solve(xtx, x.T @ y)
    return w, x, y


def objective(params: FitParams, data: OutlierDataset,
              penalty_weight: float = 1e6) -> float:
    """Sum of squared residuals of the seed-averaged data against the model
    (plus the beta-negativity penalty, which vanishes on valid params)."""
    lam_bar = seed_mean(data)
    th = np.asarray(params.theta)[:, None]
    b = np.asarray(data.batch_sizes, dtype=float)[None, :]
    model = th + params.alpha * b ** (-params.upsilon) \
        + params.beta * b ** (-2 * params.upsilon) * (1.0 / th + params.gamma / th ** 2)
    resid = lam_bar - model
    return float(np.sum(resid ** 2) + penalty_weight * max(0.0, -params.beta) ** 2)


def _loss_and_solution(c, lam_bar, batch_sizes, upsilon, penalty_weight):
    """Penalised loss at reparametrised theta, with the clamp-and-refit
    inner solution kept feasible (beta >= 0)."""
    theta = _theta_from_c(c)
    w, x, y = _inner_solve(lam_bar, theta, batch_sizes, upsilon)
    penalty = 0.0
    if w[1] < 0:
        penalty = penalty_weight * w[1] ** 2
        # beta clamped to 0 kills the whole b^-2u bracket; only the
        # alpha column stays identifiable
        col = x[:, 0]
        alpha = float(col @ y / (col @ col))
        w = np.array([alpha, 0.0, 0.0])
    resid = y - x @ w
    sse = float(resid @ resid)
    return sse + penalty, sse, w, theta


def init_theta_two_point(data: OutlierDataset, upsilon: float):
    """Initial spikes from the two largest batch sizes: solve
    lam_bar = l*b^-u + d per outlier and start theta at d, floored and
    jittered so the strict ordering holds."""
    if len(data.batch_sizes) < 2:
        raise SingularDesignError("two-point init needs at least 2 batch sizes")
    lam_bar = seed_mean(data)
    b1, b2 = data.batch_sizes[-1], data.batch_sizes[-2]
    if b1 == b2:
        raise SingularDesignError("two-point init needs distinct batch sizes")
    d = np.empty(data.n_out)
    a_mat = np.array([[b1 ** (-upsilon), 1.0], [b2 ** (-upsilon), 1.0]])
    for i in range(data.n_out):
        rhs = np.array([lam_bar[i, -1], lam_bar[i, -2]])
        sol = np.linalg.solve(a_mat, rhs)
        d[i] = sol[1]
    theta = np.empty_like(d)
    floor = 1e-3
    for i in range(data.n_out - 1, -1, -1):
        lower = floor if i == data.n_out - 1 else theta[i + 1] + 1e-3 * (i + 1)
        theta[i] = max(d[i], lower)
    return tuple(theta)


def fit_theta(data: OutlierDataset, upsilon: float,
              config: FitConfig = FitConfig()) -> FitReport:
    """Gradient descent on the spikes with the exact inner linear solve.

    The loss is differentiated with respect to the reparametrised spikes by
    central finite differences (step 1e-6 * max(1, |c|)); steps backtrack by
    halving whenever the objective would increase, and the run stops when
    the relative objective change drops below config.tol or the iteration
    cap is reached.
    """
    lam_bar = seed_mean(data)
    init = config.init_theta or init_theta_two_point(data, upsilon)
    c = _c_from_theta(init)

    def loss(cv):
        try:
            return _loss_and_solution(cv, lam_bar, data.batch_sizes, upsilon,
                                      config.penalty_weight)[0]
        except SingularDesignError:
            # transiently reachable at extreme theta during line search
            return np.inf

    cur = loss(c)
    if not np.isfinite(cur):
        raise SingularDesignError("design matrix singular at the initial theta")
    lr = config.learning_rate
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        grad = np.empty_like(c)
        for k in range(c.size):
            h = config.fd_step * max(1.0, abs(c[k]))
            cp, cm = c.copy(), c.copy()
            cp[k] += h
            cm[k] -= h
            fp, fm = loss(cp), loss(cm)
            if np.isfinite(fp) and np.isfinite(fm):
                grad[k] = (fp - fm) / (2 * h)
            elif np.isfinite(fm):
                grad[k] = (cur - fm) / h
            elif np.isfinite(fp):
                grad[k] = (fp - cur) / h
            else:
                grad[k] = 0.0
        gnorm = np.linalg.norm(grad)
        if gnorm == 0.0:
            converged = True
            break
        accepted = False
        for _ in range(config.max_backtracks):
            cand = c - lr * grad
            new = loss(cand)
            if new <= cur:
                accepted = True
                break
            lr *= config.lr_shrink
        if not accepted:
            converged = True  # no descent direction at fd resolution
            break
        rel_change = (cur - new) / max(cur, 1e-300)
        c, cur = cand, new
        lr *= config.lr_grow
        if rel_change < config.tol:
            converged = True
            break

    _, sse, w, theta = _loss_and_solution(c, lam_bar, data.batch_sizes, upsilon,
                                          config.penalty_weight)
    alpha, beta = float(w[0]), float(w[1])
    gamma = float(w[2] / w[1]) if w[1] != 0 else 0.0
    params = FitParams(theta=tuple(theta), alpha=alpha, beta=beta, gamma=gamma,
                       upsilon=upsilon)
    return FitReport(params=params, mse=sse,
                     per_upsilon=((upsilon, cur),),
                     iterations=iterations, converged=converged)


def sweep_upsilon(data: OutlierDataset, config: FitConfig = FitConfig(),
                  grid=_DEFAULT_UPS_GRID) -> FitReport:
    """Fit each exponent on the grid; keep the minimal penalised error.

    Ties break toward the smaller exponent.
    """
    grid = tuple(float(u) for u in grid)
    if not grid:
        raise ValueError("upsilon grid must be nonempty")
    best = None
    table = []
    for u in sorted(grid):
        report = fit_theta(data, u, config)
        penalised = report.per_upsilon[0][1]
        table.append((u, penalised))
        if best is None or penalised < best.per_upsilon[0][1]:
            best = report
    return replace(best, per_upsilon=tuple(table))


def generate_synthetic_dataset(theta, alpha, beta, gamma, upsilon, batch_sizes,
                               n_seed: int, noise_sd: float = 0.0,
                               seed: int = 0) -> OutlierDataset:
    """Forward-generate data from the model (the fit-recovery oracle)."""
    th = np.asarray(theta, dtype=float)[:, None]
    b = np.asarray(batch_sizes, dtype=float)[None, :]
    clean = th + alpha * b ** (-upsilon) \
        + beta * b ** (-2 * upsilon) * (1.0 / th + gamma / th ** 2)
    vals = np.repeat(clean[:, None, :], n_seed, axis=1)
    if noise_sd > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        vals = vals + rng.normal(0.0, noise_sd, vals.shape)
    return OutlierDataset(batch_sizes, vals)
