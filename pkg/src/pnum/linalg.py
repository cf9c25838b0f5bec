"""Probabilistic linear solver for symmetric positive definite systems.

A Gaussian belief over the unknown inverse H = A^-1 is conditioned on
noise-free projection observations (s_i, y_i = A s_i).  With an identity
prior mean the posterior-mean iteration reproduces conjugate gradients; the
belief itself can be carried to the next, related system (warm starting /
subspace recycling).

The posterior mean is maintained as H0 + U diag(E) U' with orthonormal
"skinny" U (at most 2M columns after M observations).  The posterior
covariance over H is summarized by the scalar scale sigma calibrated from
quantities already produced by the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (BeliefDimensionMismatch, Breakdown, DimensionMismatch,
                         InsufficientTrace)

_SPD_PROBE_COUNT = 20


@dataclass(frozen=True)
class LinearOperator:
    """Symmetric positive definite operator given by a matvec.

    SPD-ness is a contract; on construction it is spot-checked with 20 seeded
    random unit vectors unless ``check=False`` (useful for large N).
    """

    dim: int
    matvec: Callable[[np.ndarray], np.ndarray]
    dense: Optional[np.ndarray] = None

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.matvec(v)

    @classmethod
    def from_dense(cls, A, check: bool = True) -> "LinearOperator":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("dense operator must be a square matrix")
        op = cls(dim=A.shape[0], matvec=lambda v: A @ v, dense=A)
        if check:
            op.spd_probe()
        return op

    @classmethod
    def from_callable(cls, dim: int, matvec: Callable, check: bool = True) -> "LinearOperator":
        op = cls(dim=int(dim), matvec=matvec)
        if check:
            op.spd_probe()
        return op

    def spd_probe(self, n_probes: int = _SPD_PROBE_COUNT) -> None:
        rng = np.random.default_rng(0)
        for _ in range(n_probes):
            v = rng.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            if float(v @ self.matvec(v)) <= 0.0:
                raise ValueError("operator failed the SPD probe: <v, Av> <= 0")


@dataclass(frozen=True)
class MatrixBelief:
    """Gaussian belief over an SPD inverse, summarized by its mean and scale.

    The mean applies as H v = v + Up diag(Ep) Up' v + U diag(E) U' v where
    (Up, Ep) is the low-rank part of the prior mean (empty for a fresh
    identity prior) and (U, E) are the posterior factors accumulated from
    ``m`` projection observations.  All factor matrices have orthonormal
    columns, so E holds the eigenvalues of the posterior update.
    """

    dim: int
    sigma: float = 1.0
    prior_u: Optional[np.ndarray] = None
    prior_e: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    m: int = 0

    @property
    def posterior_rank(self) -> int:
        return 0 if self.e is None else int(self.e.size)


def identity_belief(dim: int, sigma: float = 1.0) -> MatrixBelief:
    """Fresh belief with prior mean I and no observations."""
    return MatrixBelief(dim=int(dim), sigma=float(sigma))


def _apply_prior_mean(belief: MatrixBelief, v: np.ndarray) -> np.ndarray:
    out = v.copy()
    if belief.prior_u is not None:
        out += belief.prior_u @ (belief.prior_e * (belief.prior_u.T @ v))
    return out


def posterior_mean_apply(belief: MatrixBelief, v) -> np.ndarray:
    """Apply the posterior mean H_M to a vector in O(N * rank)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (belief.dim,):
        raise DimensionMismatch(
            f"vector of shape {v.shape} does not match belief dim {belief.dim}")
    out = _apply_prior_mean(belief, v)
    if belief.u is not None:
        out += belief.u @ (belief.e * (belief.u.T @ v))
    return out


def _compress_factors(U: np.ndarray, E: np.ndarray,
                      drop_tol: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Re-express U diag(E) U' with orthonormal U and eigenvalue E."""
    if U.size == 0:
        return U.reshape(U.shape[0], 0), E[:0]
    Q, R = np.linalg.qr(U)
    T = R @ np.diag(E) @ R.T
    T = 0.5 * (T + T.T)
    lam, P = np.linalg.eigh(T)
    keep = np.abs(lam) > drop_tol
    return Q @ P[:, keep], lam[keep]


def _small_spd_solver(N: np.ndarray):
    """Robust solver for the small SPD matrix S'Y of projection overlaps.

    Diagonal scaling plus Cholesky with escalating jitter; eigenvalue-clipped
    fallback when the matrix has drifted indefinite.
    """
    N = 0.5 * (N + N.T)
    dd = np.sqrt(np.clip(np.diag(N), 1e-300, None))
    Ns = N / dd[:, None] / dd[None, :]
    eye = np.eye(N.shape[0])
    for jit in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            L = np.linalg.cholesky(Ns + jit * eye)

            def solve(v, L=L):
                z = np.linalg.solve(L, v / dd)
                return np.linalg.solve(L.T, z) / dd

            return solve
        except np.linalg.LinAlgError:
            continue
    lam, P = np.linalg.eigh(Ns)
    lam_safe = np.where(lam > 1e-12 * lam.max(), lam, np.inf)

    def solve(v):
        return (P @ ((P.T @ (v / dd)) / lam_safe)) / dd

    return solve


def condition_on_observations(belief: MatrixBelief, S, Y) -> MatrixBelief:
    """Condition the belief on projections S with observations Y = A S.

    The Dirac likelihood (H y_i = s_i exactly) combined with the symmetric
    prior of scale sigma gives a posterior mean

        H_M = H0 + S N^-1 D' + D N^-1 S' - S N^-1 (Y' D) N^-1 S'

    with D = S - H0 Y and N = S' Y; sigma cancels, so the whole scale family
    shares this mean.  The low-rank update is re-expressed with orthonormal
    factors and a diagonal E of length at most 2M.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if S.shape[0] != belief.dim:
        S, Y = S.T, Y.T
    if S.shape != Y.shape or S.shape[0] != belief.dim:
        raise BeliefDimensionMismatch(
            f"observations of shape {S.shape} do not match dim {belief.dim}")
    if belief.m > 0:
        belief = as_prior(belief)
    mcount = S.shape[1]
    # The posterior mean is invariant under invertible recombination of the
    # observation columns (N^-1 transforms contravariantly), so work in the
    # eigenbasis of N = S'Y: normalize the pairs, rotate, and drop numerical
    # null directions.  Late solver steps lose independence in floating
    # point; conditioning on the retained combinations keeps H y = s exact
    # on the numerically identifiable span.
    norms = np.linalg.norm(S, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    S = S / norms
    Y = Y / norms
    N = S.T @ Y
    N = 0.5 * (N + N.T)
    lam_n, P_n = np.linalg.eigh(N)
    keep = lam_n > 1e-12 * max(lam_n.max(), 0.0)
    if not np.any(keep):
        return replace(belief, u=None, e=None, m=mcount)
    S = S @ P_n[:, keep]
    Y = Y @ P_n[:, keep]
    lam_n = lam_n[keep]
    kcount = int(lam_n.size)
    H0Y = np.column_stack([_apply_prior_mean(belief, Y[:, i]) for i in range(kcount)])
    D = S - H0Y
    Ninv = np.diag(1.0 / lam_n)
    C = np.block([[-Ninv @ (Y.T @ D) @ Ninv, Ninv],
                  [Ninv, np.zeros((kcount, kcount))]])
    C = 0.5 * (C + C.T)
    V = np.hstack([S, D])
    Q, R = np.linalg.qr(V)
    T = R @ C @ R.T
    T = 0.5 * (T + T.T)
    lam, P = np.linalg.eigh(T)
    return replace(belief, u=Q @ P, e=lam, m=mcount)


def as_prior(belief: MatrixBelief) -> MatrixBelief:
    """Fold posterior factors into the prior-mean descriptor (m resets to 0)."""
    if belief.u is None:
        return belief
    if belief.prior_u is None:
        U, E = _compress_factors(belief.u, belief.e)
    else:
        U = np.hstack([belief.prior_u, belief.u])
        E = np.concatenate([belief.prior_e, belief.e])
        U, E = _compress_factors(U, E)
    return replace(belief, prior_u=U, prior_e=E, u=None, e=None, m=0)


def truncate_belief(belief: MatrixBelief, rank: int) -> MatrixBelief:
    """Keep the ``rank`` posterior eigencomponents largest in |eigenvalue|.

    rank 0 resets the belief to its prior mean; rank >= 2M is the identity
    operation.  The discarded spectrum bounds the change of the posterior
    mean application on unit vectors.
    """
    if rank < 0:
        raise ValueError("rank must be >= 0")
    if belief.u is None or rank >= belief.posterior_rank:
        return belief
    if rank == 0:
        return replace(belief, u=None, e=None)
    order = np.argsort(-np.abs(belief.e))[:rank]
    return replace(belief, u=np.ascontiguousarray(belief.u[:, order]),
                   e=belief.e[order])


@dataclass
class SolveReport:
    """Everything a solve produced: solution, trace and final belief."""

    solution: np.ndarray
    iterations: int
    residual_norms: List[float]
    converged: bool
    belief: Optional[MatrixBelief]
    iterates: List[np.ndarray] = field(default_factory=list)
    rayleigh_quotients: List[float] = field(default_factory=list)
    matvecs: int = 0

    @property
    def initial_residual(self) -> float:
        return self.residual_norms[0]

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1]


def classic_cg(A: LinearOperator, b, x0=None, tol: float = 1e-8,
               maxiter: Optional[int] = None) -> SolveReport:
    """Plain conjugate gradients with the usual two-term recurrences.

    Converged means ||r|| <= tol * ||b||.  Raises Breakdown if a direction
    has <d, Ad> <= 0, which signals a non-SPD operator.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (A.dim,):
        raise DimensionMismatch("rhs does not match operator dimension")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.dim
    maxiter = 2 * n if maxiter is None else int(maxiter)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    matvecs = 0
    if np.any(x != 0.0):
        r = b - A(x)
        matvecs += 1
    else:
        r = b.copy()
    d = r.copy()
    nb = float(np.linalg.norm(b))
    res = [float(np.linalg.norm(r))]
    iterates = [x.copy()]
    rayleigh: List[float] = []
    for _ in range(maxiter):
        if res[-1] <= tol * nb:
            break
        Ad = A(d)
        matvecs += 1
        dAd = float(d @ Ad)
        if dAd <= 0.0:
            raise Breakdown(f"<d, Ad> = {dAd:.3e} <= 0; operator not SPD")
        alpha = float(d @ r) / dAd
        x = x + alpha * d
        s = alpha * d
        y = alpha * Ad
        rayleigh.append(float(s @ y) / float(s @ s))
        r_new = r - y
        beta = float(r_new @ r_new) / float(r @ r)
        d = r_new + beta * d
        r = r_new
        res.append(float(np.linalg.norm(r)))
        iterates.append(x.copy())
    return SolveReport(solution=x, iterations=len(res) - 1, residual_norms=res,
                       converged=res[-1] <= tol * nb, belief=None,
                       iterates=iterates, rayleigh_quotients=rayleigh,
                       matvecs=matvecs)


def solve_probabilistic(A: LinearOperator, b, belief: Optional[MatrixBelief] = None,
                        tol: float = 1e-8, maxiter: Optional[int] = None) -> SolveReport:
    """Solve A x = b by stepping along the posterior-mean directions.

    Each iteration moves along d_i = H_i r_i with the exact line search
    alpha = <d, r> / <d, A d>, then absorbs the pair (s_i, y_i = A s_i) into
    the belief.  With a fresh identity belief the iterate sequence matches
    classic CG; starting from a recycled belief the initial iterate is
    x0 = H0 b and the prior mean preconditions the directions.
    """
    b = np.asarray(b, dtype=float)
    if belief is None:
        belief = identity_belief(len(b))
    if b.shape != (belief.dim,):
        raise BeliefDimensionMismatch("rhs does not match belief dimension")
    if belief.dim != A.dim:
        raise BeliefDimensionMismatch("belief does not match operator dimension")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if belief.m > 0:
        belief = as_prior(belief)
    n = A.dim
    maxiter = 2 * n if maxiter is None else int(maxiter)
    warm = belief.prior_u is not None
    matvecs = 0
    if warm:
        x = _apply_prior_mean(belief, b)
        r = b - A(x)
        matvecs += 1
    else:
        x = np.zeros(n)
        r = b.copy()
    nb = float(np.linalg.norm(b))
    res = [float(np.linalg.norm(r))]
    iterates = [x.copy()]
    rayleigh: List[float] = []
    S: List[np.ndarray] = []
    Y: List[np.ndarray] = []
    H0Y: List[np.ndarray] = []
    for _ in range(maxiter):
        if res[-1] <= tol * nb:
            break
        h0r = _apply_prior_mean(belief, r)
        if S:
            Sm = np.stack(S, axis=1)
            Ym = np.stack(Y, axis=1)
            Dm = Sm - np.stack(H0Y, axis=1)
            nsolve = _small_spd_solver(Sm.T @ Ym)
            s_r = Sm.T @ r
            d_r = Dm.T @ r
            d = (h0r + Sm @ nsolve(d_r) + Dm @ nsolve(s_r)
                 - Sm @ nsolve((Ym.T @ Dm) @ nsolve(s_r)))
        else:
            d = h0r
        Ad = A(d)
        matvecs += 1
        dAd = float(d @ Ad)
        if dAd <= 0.0:
            raise Breakdown(f"<d, Ad> = {dAd:.3e} <= 0; operator not SPD")
        alpha = float(d @ r) / dAd
        s = alpha * d
        y = alpha * Ad
        x = x + s
        r = r - y
        rayleigh.append(float(s @ y) / float(s @ s))
        S.append(s)
        Y.append(y)
        H0Y.append(_apply_prior_mean(belief, y))
        res.append(float(np.linalg.norm(r)))
        iterates.append(x.copy())
    if S:
        final = condition_on_observations(belief, np.stack(S, axis=1),
                                          np.stack(Y, axis=1))
    else:
        final = belief
    return SolveReport(solution=x, iterations=len(res) - 1, residual_norms=res,
                       converged=res[-1] <= tol * nb, belief=final,
                       iterates=iterates, rayleigh_quotients=rayleigh,
                       matvecs=matvecs)


def calibrate_scale(report: SolveReport) -> float:
    """Scale sigma of the belief covariance from the solve trace alone.

    Geometric mean of the Rayleigh quotients <s_i, y_i> / <s_i, s_i> already
    collected during the run; scales linearly with the operator.  Attach it
    to a belief with ``dataclasses.replace(belief, sigma=sigma)``.
    """
    q = np.asarray(report.rayleigh_quotients, dtype=float)
    if q.size < 2:
        raise InsufficientTrace("need at least 2 recorded iterations")
    return float(np.exp(np.mean(np.log(q))))


def warm_start_sequence(problems: Sequence[Tuple[LinearOperator, np.ndarray]],
                        rank: Optional[int] = None, tol: float = 1e-8,
                        maxiter: Optional[int] = None) -> List[SolveReport]:
    """Solve related systems in order, carrying the truncated belief forward.

    The first problem starts cold (identity prior, x0 = 0).  Each subsequent
    problem uses the previous truncated posterior mean as its prior mean and
    seeds x0 = H0 b.  ``rank`` defaults to twice the first problem's
    iteration count, capped at 64; rank 0 disables recycling entirely.
    """
    reports: List[SolveReport] = []
    belief: Optional[MatrixBelief] = None
    for A, b in problems:
        if belief is None or (rank is not None and rank == 0):
            current = identity_belief(A.dim)
        else:
            current = belief
        report = solve_probabilistic(A, b, current, tol=tol, maxiter=maxiter)
        reports.append(report)
        if rank is None:
            rank = min(64, 2 * max(report.iterations, 1))
        if rank > 0:
            carried = truncate_belief(report.belief, rank)
            carried = as_prior(carried)
            # keep the merged prior itself at the same fixed rank
            if carried.prior_e is not None and carried.prior_e.size > rank:
                order = np.argsort(-np.abs(carried.prior_e))[:rank]
                carried = replace(carried,
                                  prior_u=np.ascontiguousarray(carried.prior_u[:, order]),
                                  prior_e=carried.prior_e[order])
            belief = carried
    return reports


# ---------------------------------------------------------------------------
# operator loading (dense files and named synthetic generators)
# ---------------------------------------------------------------------------


def random_spd(dim: int, seed: int, cond: float = 20.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniform in [1, cond]."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = 10.0 ** rng.uniform(0.0, np.log10(cond), size=dim)
    return (Q * lam) @ Q.T


def load_operator(config: dict) -> LinearOperator:
    """Build an operator from a config mapping.

    Supported kinds: ``csv`` / ``npy`` (dense matrix files), ``random_spd``
    (seeded, log-uniform spectrum) and ``diagonal`` (explicit entries).
    """
    kind = config.get("kind")
    check = bool(config.get("check", True))
    if kind == "csv":
        A = np.loadtxt(Path(config["path"]), delimiter=",")
        return LinearOperator.from_dense(A, check=check)
    if kind == "npy":
        A = np.load(Path(config["path"]))
        return LinearOperator.from_dense(A, check=check)
    if kind == "random_spd":
        A = random_spd(int(config["dim"]), int(config.get("seed", 0)),
                       float(config.get("cond", 20.0)))
        return LinearOperator.from_dense(A, check=check)
    if kind == "diagonal":
        d = np.asarray(config["entries"], dtype=float)
        return LinearOperator.from_dense(np.diag(d), check=check)
    raise ValueError(f"unknown operator kind {kind!r}")
