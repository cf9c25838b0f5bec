"""Gaussian process machinery on a closed interval.

Kernels, noise-free conditioning, marginal-likelihood hyperparameter fitting
and prior sampling.  Two covariance families are supported:

* ``linear_spline``: k(x, x') = c * (1 + b - b/3 * |x - x'|), a stationary
  relative of the Wiener process whose sample paths are continuous but rough.
* ``exp_quadratic``: k(x, x') = theta^2 * exp(-(x - x')^2 / lambda^2), whose
  sample paths are extremely smooth.

All types are immutable after construction; operations are pure given their
inputs plus an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import log, pi
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import DuplicateNode, SingularGram

# Jitter policy: start at 1e-10 * mean(diag), escalate x10 up to 1e-6, then
# give up.  Exact conditioning is assumed by the model; finite precision
# requires this small regularization.
JITTER_REL_START = 1e-10
JITTER_REL_MAX = 1e-6

DUPLICATE_REL_TOL = 1e-12


class KernelFamily(Enum):
    LINEAR_SPLINE = "linear_spline"
    EXP_QUADRATIC = "exp_quadratic"


@dataclass(frozen=True)
class Kernel:
    """Covariance-function descriptor.

    Parameters are stored as a (name -> value) mapping; use the
    :func:`linear_spline` / :func:`exp_quadratic` helpers rather than
    constructing directly.  ``domain`` is the closed interval on which the
    kernel (and any integral against it) is defined; evaluation outside it is
    an error, not extrapolation.
    """

    family: KernelFamily
    params: Tuple[Tuple[str, float], ...]
    domain: Tuple[float, float]

    def __post_init__(self):
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"domain must be a finite interval, got {self.domain}")
        for name, value in self.params:
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"kernel parameter {name} must be > 0, got {value}")

    @property
    def param_dict(self) -> Dict[str, float]:
        return dict(self.params)

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def prior_variance(self, x) -> np.ndarray:
        """k(x, x), the prior marginal variance."""
        return kernel_eval(self, x, x)


def linear_spline(c: float = 1.0, b: float = 1.0,
                  domain: Tuple[float, float] = (-3.0, 3.0)) -> Kernel:
    """Stationary linear-spline kernel c * (1 + b - b/3 * |x - x'|)."""
    return Kernel(KernelFamily.LINEAR_SPLINE, (("c", float(c)), ("b", float(b))),
                  (float(domain[0]), float(domain[1])))


def exp_quadratic(theta: float = 1.0, lam: float = 1.0,
                  domain: Tuple[float, float] = (-3.0, 3.0)) -> Kernel:
    """Exponentiated-quadratic kernel theta^2 * exp(-(x - x')^2 / lambda^2)."""
    return Kernel(KernelFamily.EXP_QUADRATIC, (("theta", float(theta)), ("lam", float(lam))),
                  (float(domain[0]), float(domain[1])))


def _check_in_domain(kernel: Kernel, *arrays) -> None:
    lo, hi = kernel.domain
    for a in arrays:
        if np.any(np.isnan(a)):
            raise ValueError("NaN abscissa passed to kernel evaluation")
        if np.any(a < lo) or np.any(a > hi):
            raise ValueError(
                f"abscissa outside kernel domain [{lo}, {hi}]")


def kernel_eval(kernel: Kernel, x, xp) -> np.ndarray:
    """Evaluate k(x, x') elementwise (inputs broadcast together).

    Symmetric in its arguments; rejects NaNs and points outside the domain.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    _check_in_domain(kernel, x, xp)
    p = kernel.param_dict
    r = np.abs(x - xp)
    if kernel.family is KernelFamily.LINEAR_SPLINE:
        return p["c"] * (1.0 + p["b"] - (p["b"] / 3.0) * r)
    return p["theta"] ** 2 * np.exp(-(r / p["lam"]) ** 2)


def gram_matrix(kernel: Kernel, nodes) -> np.ndarray:
    """Covariance matrix K with K[i, j] = k(x_i, x_j)."""
    nodes = np.asarray(nodes, dtype=float)
    return kernel_eval(kernel, nodes[:, None], nodes[None, :])


def _solve_refined(factor, K: np.ndarray, b: np.ndarray,
                   refine: int = 1) -> np.ndarray:
    """Solve K w = b through the jittered factor plus iterative refinement.

    One refinement sweep against the unjittered K removes most of the bias
    the jitter introduces into the weights (and hence into interpolation).
    """
    w = cho_solve(factor, b)
    for _ in range(refine):
        w = w + cho_solve(factor, b - K @ w)
    return w


def _factorize(K: np.ndarray):
    """Cholesky-factorize K + jitter*I, escalating jitter on failure.

    Returns (cho_factor result, jitter actually used).  Raises SingularGram
    once the jitter ceiling is passed.
    """
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        raise SingularGram("Gram diagonal is not positive")
    jitter = JITTER_REL_START * scale
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_REL_MAX * scale * (1 + 1e-9):
        try:
            return cho_factor(K + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise SingularGram(
        f"Cholesky failed up to jitter {JITTER_REL_MAX * scale:.2e}")


def _check_distinct(kernel: Kernel, nodes: np.ndarray) -> None:
    if nodes.size < 2:
        return
    tol = DUPLICATE_REL_TOL * kernel.width
    s = np.sort(nodes)
    gaps = np.diff(s)
    if np.any(gaps < tol):
        i = int(np.argmin(gaps))
        raise DuplicateNode(
            f"nodes {s[i]} and {s[i + 1]} coincide within {tol:.2e}")


@dataclass(frozen=True)
class GPPosterior:
    """Noise-free GP conditioned on (nodes, values).

    ``weights`` caches K^-1 y; ``factor`` the jittered Cholesky factor of K.
    The posterior mean interpolates the data and the posterior variance at
    the nodes is numerically zero.
    """

    kernel: Kernel
    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    factor: tuple
    jitter: float

    def mean(self, x) -> np.ndarray:
        """Posterior mean k(x, X) K^-1 y."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        kx = kernel_eval(self.kernel, x[:, None], self.nodes[None, :])
        out = kx @ self.weights
        return out if out.size > 1 else float(out[0])

    def var(self, x) -> np.ndarray:
        """Posterior variance k(x,x) - k(x,X) K^-1 k(X,x), clipped at zero."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        kx = kernel_eval(self.kernel, x[:, None], self.nodes[None, :])
        solved = cho_solve(self.factor, kx.T)
        v = self.kernel.prior_variance(x) - np.einsum("ij,ji->i", kx, solved)
        v = np.maximum(v, 0.0)
        return v if v.size > 1 else float(v[0])


def gp_condition(kernel: Kernel, nodes, values) -> GPPosterior:
    """Condition a zero-mean GP on exact function values.

    Nodes must be distinct (within 1e-12 of the domain width) and inside the
    kernel domain.  Raises SingularGram if the jittered factorization fails.
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if nodes.ndim != 1 or nodes.shape != values.shape:
        raise ValueError("nodes and values must be 1-D and the same length")
    if nodes.size < 1:
        raise ValueError("need at least one node")
    _check_in_domain(kernel, nodes)
    _check_distinct(kernel, nodes)
    K = gram_matrix(kernel, nodes)
    factor, jitter = _factorize(K)
    weights = _solve_refined(factor, K, values)
    return GPPosterior(kernel=kernel, nodes=nodes, values=values,
                       weights=weights, factor=factor, jitter=jitter)


def log_marginal_likelihood(kernel: Kernel, nodes, values) -> float:
    """Gaussian log evidence of (nodes, values) under the kernel prior."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    K = gram_matrix(kernel, nodes)
    factor, _ = _factorize(K)
    alpha = cho_solve(factor, values)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    n = nodes.size
    return float(-0.5 * values @ alpha - 0.5 * logdet - 0.5 * n * log(2 * pi))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a hyperparameter search."""

    kernel: Kernel
    log_marginal: float
    degenerate: bool = False


_SCALE_PARAM = {KernelFamily.LINEAR_SPLINE: "c", KernelFamily.EXP_QUADRATIC: "theta"}
_SHAPE_PARAM = {KernelFamily.LINEAR_SPLINE: "b", KernelFamily.EXP_QUADRATIC: "lam"}


def _make_kernel(family: KernelFamily, scale: float, shape: float,
                 domain: Tuple[float, float]) -> Kernel:
    if family is KernelFamily.LINEAR_SPLINE:
        return linear_spline(c=scale, b=shape, domain=domain)
    return exp_quadratic(theta=scale, lam=shape, domain=domain)


def default_bounds(family: KernelFamily, nodes, values) -> Dict[str, Tuple[float, float]]:
    """Log-grid search bounds derived from data scale and node spacing."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    width = float(nodes.max() - nodes.min())
    spread = float(np.std(values))
    scale_ref = max(spread, 1e-8)
    if family is KernelFamily.LINEAR_SPLINE:
        # c has units of variance, b is dimensionless slope
        return {"c": (1e-2 * scale_ref ** 2, 1e2 * max(scale_ref ** 2, 1e-8)),
                "b": (1e-2, 1e2)}
    min_gap = float(np.min(np.diff(np.sort(nodes)))) if nodes.size > 1 else width
    return {"theta": (5e-2 * scale_ref, 2e1 * scale_ref),
            "lam": (max(min_gap / 2.0, 1e-8 * width), 2.0 * width)}


def fit_hyperparameters(family: KernelFamily, nodes, values,
                        bounds: Optional[Dict[str, Tuple[float, float]]] = None,
                        domain: Optional[Tuple[float, float]] = None,
                        grid_size: int = 16, max_iter: int = 50) -> FitResult:
    """Maximize the log marginal likelihood over a log grid plus local search.

    A ``grid_size``-point logarithmic grid per parameter is scanned, then the
    best point is refined by multiplicative coordinate descent (at most
    ``max_iter`` sweeps, relative tolerance 1e-4).  The refined likelihood is
    never below the best grid candidate.

    All-identical values leave the scale unidentifiable; in that case the
    scale is pinned to its lower bound and ``degenerate`` is flagged.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.size < 3:
        raise ValueError("need at least 3 nodes to fit hyperparameters")
    if domain is None:
        domain = (float(nodes.min()), float(nodes.max()))
    if bounds is None:
        bounds = default_bounds(family, nodes, values)
    s_name, h_name = _SCALE_PARAM[family], _SHAPE_PARAM[family]
    s_lo, s_hi = bounds[s_name]
    h_lo, h_hi = bounds[h_name]
    if min(s_lo, h_lo) <= 0:
        raise ValueError("parameter bounds must be positive")

    if np.ptp(values) == 0.0:
        shape = float(np.sqrt(h_lo * h_hi))
        kern = _make_kernel(family, s_lo, shape, domain)
        return FitResult(kernel=kern, degenerate=True,
                         log_marginal=log_marginal_likelihood(kern, nodes, values))

    def objective(scale, shape):
        try:
            return log_marginal_likelihood(
                _make_kernel(family, scale, shape, domain), nodes, values)
        except SingularGram:
            return -np.inf

    scales = np.geomspace(s_lo, s_hi, grid_size)
    shapes = np.geomspace(h_lo, h_hi, grid_size)
    best_ll, best = -np.inf, (scales[0], shapes[0])
    for s in scales:
        for h in shapes:
            ll = objective(s, h)
            if ll > best_ll:
                best_ll, best = ll, (s, h)

    # multiplicative coordinate descent from the best grid point
    step = np.array([scales[1] / scales[0], shapes[1] / shapes[0]])
    params = np.array(best)
    lo_hi = [(s_lo, s_hi), (h_lo, h_hi)]
    for _ in range(max_iter):
        improved = False
        for ci in range(2):
            for fac in (step[ci], 1.0 / step[ci]):
                trial = params.copy()
                trial[ci] = float(np.clip(trial[ci] * fac, *lo_hi[ci]))
                ll = objective(trial[0], trial[1])
                if ll > best_ll:
                    best_ll, params = ll, trial
                    improved = True
        if not improved:
            step = np.sqrt(step)
            if np.all(step < 1.0 + 1e-4):
                break
    kern = _make_kernel(family, float(params[0]), float(params[1]), domain)
    return FitResult(kernel=kern, log_marginal=best_ll, degenerate=False)


# Cholesky factors of recently used Gram matrices; sample_path on a fixed
# fine grid is called many times in the calibration experiments.
_CHOL_CACHE: Dict[tuple, np.ndarray] = {}
_CHOL_CACHE_MAX = 8


def _cached_cholesky(kernel: Kernel, grid: np.ndarray) -> np.ndarray:
    key = (kernel, grid.tobytes())
    L = _CHOL_CACHE.get(key)
    if L is None:
        factor, _ = _factorize(gram_matrix(kernel, grid))
        L = np.tril(factor[0])
        if len(_CHOL_CACHE) >= _CHOL_CACHE_MAX:
            _CHOL_CACHE.pop(next(iter(_CHOL_CACHE)))
        _CHOL_CACHE[key] = L
    return L


def sample_path(kernel: Kernel, grid, seed: int) -> np.ndarray:
    """One draw from the zero-mean prior restricted to ``grid``.

    Deterministic given ``seed``.  The grid must be sorted and distinct.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be sorted and distinct")
    _check_in_domain(kernel, grid)
    L = _cached_cholesky(kernel, grid)
    z = np.random.default_rng(seed).standard_normal(grid.size)
    return L @ z
