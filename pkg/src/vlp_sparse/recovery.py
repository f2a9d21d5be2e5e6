"""Sparse recovery solvers and the grid localization pipelines.

Measurements are modeled as ``b = A theta`` with ``theta`` a binary K-sparse
cell indicator and ``A`` one of the fingerprint matrices.  Recovery reports
the support (occupied cells); target positions are the matching cell
centers.  Greedy selection always correlates against unit-normalized
columns because fingerprint column energies vary by orders of magnitude
across the room, which would otherwise bias selection toward cells under
anchors.  Ties break toward the lowest index everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .channel import PairIndexMap
from .measurement import CORRELATION, POWER, MeasurementVector, remove_noise_floor
from .scenario import GridModel


@dataclass(frozen=True)
class SparseSolution:
    """Support, coefficients over the support, and solve diagnostics."""

    support: np.ndarray  # int indices; OMP keeps selection order
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool = True


@dataclass(frozen=True)
class RecoveryAdvisory:
    """How the equation count compares against ``K * ln(N / K)``."""

    m_eff: int
    n: float
    k: int
    threshold: float
    ratio: float
    flagged: bool


@dataclass(frozen=True)
class LocalizationResult:
    positions: np.ndarray  # (K, 2) cell centers of the recovered support
    support: np.ndarray
    scheme: str
    diagnostics: dict = field(default_factory=dict)


def unknown_k_threshold(noise_variance: float, m_eff: int) -> float:
    """Residual level for stopping when the target count is unknown.

    Heuristic 3 * sigma * sqrt(M_eff); pass it as ``stop_residual`` to
    :func:`omp`.  Off by default everywhere (the pipelines assume K known).
    """
    return 3.0 * math.sqrt(noise_variance * m_eff)


def omp(A: np.ndarray, b: np.ndarray, k: int,
        stop_residual: float | None = None) -> SparseSolution:
    """Orthogonal matching pursuit: exactly ``k`` greedy selections.

    Each iteration picks the column with the largest |correlation| between
    the unit-normalized dictionary and the residual, then refits all selected
    coefficients by least squares on the raw columns.  A candidate that would
    make the selected set rank-deficient is skipped in favor of the next-best
    column.  With ``stop_residual`` set, ``k`` becomes an upper bound and the
    pursuit stops once the residual norm drops to that level.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    rows, cols = A.shape
    if not 1 <= k <= min(rows, cols):
        raise ValueError(f"k={k} must be in [1, min(rows, cols)={min(rows, cols)}]")
    norms = np.linalg.norm(A, axis=0)
    if not np.any(norms > 0):
        raise ValueError("dictionary has no nonzero column")
    if np.linalg.norm(b) == 0:
        raise ValueError("zero measurement: support of size k is undefined")
    unit = A / np.where(norms > 0, norms, 1.0)

    selected: list[int] = []
    rejected: set[int] = set()
    coef = np.zeros(0)
    residual = b
    residual_norm = float(np.linalg.norm(b))
    for _ in range(k):
        if stop_residual is not None and residual_norm <= stop_residual:
            break
        corr = unit.T @ residual
        order = np.lexsort((np.arange(cols), -np.abs(corr)))
        picked = -1
        for j in order:
            if j in rejected or j in selected:
                continue
            trial = selected + [int(j)]
            x, _, rank, _ = np.linalg.lstsq(A[:, trial], b, rcond=None)
            if rank < len(trial):
                rejected.add(int(j))
                continue
            picked, coef = int(j), x
            break
        if picked < 0:
            raise ValueError("fewer than k linearly independent columns available")
        selected.append(picked)
        residual = b - A[:, selected] @ coef
        residual_norm = float(np.linalg.norm(residual))
    return SparseSolution(support=np.array(selected), coefficients=coef,
                          residual_norm=residual_norm,
                          iterations=len(selected))


def largest_squared_singular_value(A: np.ndarray, iters: int = 50,
                                   tol: float = 1e-6) -> float:
    """Power iteration estimate of ||A||_2^2 (deterministic start vector)."""
    n = A.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    value = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - value) <= tol * norm:
            return norm
        value = norm
    return value


def _soft_threshold(x: np.ndarray, level: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - level, 0.0)


def ista_lasso(A: np.ndarray, b: np.ndarray, lam: float,
               max_iters: int = 1000, tol: float = 1e-10,
               k: int | None = None) -> SparseSolution:
    """Iterative soft-thresholding for 0.5 ||A theta - b||^2 + lam ||theta||_1.

    Fixed step 1 / ||A||_2^2; stops when the iterate change drops below
    ``tol`` (flagged non-converged otherwise).  Support keeps entries above
    1e-8 in magnitude, optionally truncated to the ``k`` largest.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[1]
    lipschitz = largest_squared_singular_value(A)
    if lipschitz == 0.0:
        return SparseSolution(np.zeros(0, dtype=int), np.zeros(0), float(np.linalg.norm(b)),
                              iterations=0)
    step = 1.0 / lipschitz
    theta = np.zeros(n)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        grad = A.T @ (A @ theta - b)
        new = _soft_threshold(theta - step * grad, step * lam)
        delta = float(np.linalg.norm(new - theta))
        theta = new
        if delta < tol:
            converged = True
            break
    support = np.nonzero(np.abs(theta) > 1e-8)[0]
    if k is not None and support.size > k:
        order = np.lexsort((support, -np.abs(theta[support])))
        support = np.sort(support[order[:k]])
    coefficients = theta[support]
    residual = b - A[:, support] @ coefficients if support.size else b
    return SparseSolution(support=support, coefficients=coefficients,
                          residual_norm=float(np.linalg.norm(residual)),
                          iterations=it, converged=converged)


def brute_force_support(A: np.ndarray, b: np.ndarray, k: int) -> SparseSolution:
    """Exhaustive oracle: least-squares fit of every K-subset of columns.

    Ties break toward the lexicographically first subset.  Refuses instances
    with more than 1e6 candidate subsets.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[1]
    if not 1 <= k <= n:
        raise ValueError("k out of range")
    if math.comb(n, k) > 1_000_000:
        raise ValueError(f"C({n}, {k}) exceeds the 1e6 subset budget")
    best_res = math.inf
    best: tuple[tuple[int, ...], np.ndarray] | None = None
    for subset in combinations(range(n), k):
        x, _, _, _ = np.linalg.lstsq(A[:, subset], b, rcond=None)
        res = float(np.linalg.norm(b - A[:, subset] @ x))
        if res < best_res:
            best_res = res
            best = (subset, x)
    assert best is not None
    return SparseSolution(support=np.array(best[0]), coefficients=best[1],
                          residual_norm=best_res, iterations=math.comb(n, k))


def recoverability_advisory(m_eff: int, n: float, k: int) -> RecoveryAdvisory:
    """Compare the equation count against the K * ln(N / K) guideline.

    Purely advisory (the proportionality constant is problem dependent); a
    ratio below 1 flags a likely-undersampled recovery but never blocks it.
    """
    threshold = k * math.log(n / k)
    ratio = m_eff / threshold if threshold > 0 else math.inf
    return RecoveryAdvisory(m_eff=m_eff, n=n, k=k, threshold=threshold,
                            ratio=ratio, flagged=ratio < 1.0)


def _solve(A: np.ndarray, b: np.ndarray, k: int, solver: str,
           ista_lambda: float | None, ista_max_iters: int) -> SparseSolution:
    if solver == "omp":
        return omp(A, b, k)
    if solver == "ista":
        if ista_lambda is None:
            scale = float(np.max(np.abs(A.T @ b)))
            if scale == 0.0:
                raise ValueError("zero measurement: support of size k is undefined")
            ista_lambda = 1e-3 * scale
        return ista_lasso(A, b, ista_lambda, max_iters=ista_max_iters, k=k)
    raise ValueError(f"unknown solver '{solver}'")


def _estimated_snr_db(values: np.ndarray, noise_variance: float) -> float:
    if noise_variance <= 0:
        return math.inf
    mean_power = float(np.mean(values))
    return 10.0 * math.log10(mean_power / noise_variance) if mean_power > 0 else -math.inf


def locate_csm(meas: MeasurementVector, power_fp: np.ndarray, k: int,
               noise_variance: float, grid: GridModel, solver: str = "omp",
               ista_lambda: float | None = None,
               ista_max_iters: int = 1000) -> LocalizationResult:
    """Power-measurement pipeline: floor removal, sparse solve, cells to centers."""
    if meas.model != POWER:
        raise ValueError("csm expects a power measurement")
    b = remove_noise_floor(meas, noise_variance).values
    solution = _solve(power_fp, b, k, solver, ista_lambda, ista_max_iters)
    advisory = recoverability_advisory(power_fp.shape[0], power_fp.shape[1], k)
    return LocalizationResult(
        positions=grid.centers_of(solution.support),
        support=solution.support, scheme="csm",
        diagnostics={"snr_db": _estimated_snr_db(b, noise_variance),
                     "residual_norm": solution.residual_norm,
                     "solver": solver, "advisory": advisory,
                     "solution": solution})


def locate_cocsm(meas: MeasurementVector, corr_fp: np.ndarray, k: int,
                 noise_variance: float, grid: GridModel, pairs: PairIndexMap,
                 solver: str = "omp", ista_lambda: float | None = None,
                 ista_max_iters: int = 1000) -> LocalizationResult:
    """Correlation-measurement pipeline with diagonal-row floor removal."""
    if meas.model != CORRELATION:
        raise ValueError("cocsm expects a correlation measurement")
    b = remove_noise_floor(meas, noise_variance, pairs).values
    solution = _solve(corr_fp, b, k, solver, ista_lambda, ista_max_iters)
    advisory = recoverability_advisory(corr_fp.shape[0], corr_fp.shape[1], k)
    return LocalizationResult(
        positions=grid.centers_of(solution.support),
        support=solution.support, scheme="cocsm",
        diagnostics={"snr_db": _estimated_snr_db(b, noise_variance),
                     "residual_norm": solution.residual_norm,
                     "solver": solver, "advisory": advisory,
                     "solution": solution})
