"""Greedy block-sparse recovery baselines and an exhaustive oracle.

Block orthogonal matching pursuit picks, at every iteration, the device
block whose columns carry the most residual energy, refits the signal on
the accumulated support (least-squares or MMSE), and subtracts the fit.
The exhaustive oracle solves the same support-identification objective by
brute force on small instances and is used as ground truth in tests.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import ConfigurationError, DegenerateSystemWarning
from .signal_model import SensingMatrix

# Diagonal loading factor (relative to mean Gram diagonal) for rank-deficient
# refits; keeps Monte Carlo sweeps alive through pathological draws.
_LOADING = 1e-12


@dataclass
class BompConfig:
    """Estimator choice and stopping rule for one BOMP run.

    Exactly one stopping rule is active: ``fixed_k`` iterations when set,
    otherwise iterate until the residual norm drops below
    ``residual_threshold``. ``mmse_ratio`` is the noise-to-signal variance
    ratio used by the MMSE refit.
    """

    estimator: str = "ls"               # "ls" | "mmse"
    fixed_k: int | None = None
    residual_threshold: float | None = None
    mmse_ratio: float = 0.0
    max_iterations: int | None = None   # cap for residual stopping

    def __post_init__(self) -> None:
        if (self.fixed_k is None) == (self.residual_threshold is None):
            raise ConfigurationError("set exactly one of fixed_k / residual_threshold")
        if self.fixed_k is not None and self.fixed_k < 1:
            raise ConfigurationError("fixed_k must be >= 1")
        if self.residual_threshold is not None and self.residual_threshold <= 0:
            raise ConfigurationError("residual threshold must be positive")
        if self.estimator not in ("ls", "mmse"):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.mmse_ratio < 0:
            raise ConfigurationError("mmse_ratio must be >= 0")


@dataclass
class RecoveryResult:
    """Outcome of a greedy recovery run.

    ``support`` lists blocks in selection order; ``x_blocks[i]`` is the
    refit coefficient vector of ``support[i]`` (full block width, zeros on
    structurally empty columns). ``residual_norms[j]`` is the residual
    Frobenius norm after iteration j+1.
    """

    support: tuple
    x_blocks: dict = field(repr=False)
    residual_norms: list = field(default_factory=list)
    initial_residual_norm: float = 0.0
    degenerate: bool = False

    @property
    def iterations(self) -> int:
        return len(self.support)

    @property
    def support_set(self) -> frozenset:
        return frozenset(self.support)


def _solve_hermitian(a: np.ndarray, b: np.ndarray) -> tuple:
    """Solve a Hermitian positive (semi)definite system via Cholesky.

    Falls back to diagonal loading when the factorization fails; returns
    (solution, degenerate_flag).
    """
    try:
        chol = np.linalg.cholesky(a)
        return cho_solve((chol, True), b), False
    except np.linalg.LinAlgError:
        pass
    load = _LOADING * max(np.trace(a).real / max(len(a), 1), np.finfo(float).tiny)
    eye = np.eye(len(a))
    while True:
        try:
            chol = np.linalg.cholesky(a + load * eye)
            return cho_solve((chol, True), b), True
        except np.linalg.LinAlgError:
            load *= 100.0
            if not np.isfinite(load):
                raise


def ls_refit(phi_sub: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares refit x = (A^H A)^-1 A^H y via Cholesky of the Gram matrix.

    Rank-deficient systems are solved with diagonal loading and raise a
    :class:`DegenerateSystemWarning`.
    """
    gram = phi_sub.conj().T @ phi_sub
    rhs = phi_sub.conj().T @ y
    x, degenerate = _solve_hermitian(gram, rhs)
    if degenerate:
        warnings.warn("rank-deficient LS refit, applied diagonal loading",
                      DegenerateSystemWarning)
    return x


def mmse_refit(phi_sub: np.ndarray, y: np.ndarray, ratio: float) -> np.ndarray:
    """MMSE refit x = A^H (A A^H + ratio I)^-1 y.

    ``ratio`` is the noise-to-signal variance ratio; ratio 0 gives the
    minimum-norm solution (with diagonal loading if A A^H is singular).
    """
    if ratio < 0:
        raise ConfigurationError("ratio must be >= 0")
    inner = phi_sub @ phi_sub.conj().T + ratio * np.eye(phi_sub.shape[0])
    z, degenerate = _solve_hermitian(inner, y)
    if degenerate:
        warnings.warn("rank-deficient MMSE refit, applied diagonal loading",
                      DegenerateSystemWarning)
    return phi_sub.conj().T @ z


def _block_correlations(phi: SensingMatrix, residual: np.ndarray) -> np.ndarray:
    """Squared residual correlation ||Phi_l^H r||^2 per block (summed over antennas)."""
    corr = phi.matrix.conj().T @ residual
    energy = np.sum(np.abs(corr) ** 2, axis=1)
    return energy.reshape(phi.n_blocks, phi.block_width).sum(axis=1)


def bomp(y: np.ndarray, phi: SensingMatrix, config: BompConfig) -> RecoveryResult:
    """Block orthogonal matching pursuit over the device blocks of ``phi``.

    ``y`` may be a single stacked measurement vector or a (dim, M) matrix
    of per-antenna measurements sharing one support; block selection then
    maximizes the residual correlation summed over antennas.

    Already-selected blocks are never reselected. The refit drops the
    structurally zero columns of LDS blocks (their coefficients are exactly
    zero in any minimum-norm solution), so diagonal loading is reserved for
    genuine degeneracy.
    """
    y = np.asarray(y, dtype=complex)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    if y.shape[0] != phi.shape[0]:
        raise ConfigurationError(
            f"measurement length {y.shape[0]} != sensing rows {phi.shape[0]}"
        )
    if config.fixed_k is not None and config.fixed_k > phi.n_blocks:
        raise ConfigurationError("fixed_k exceeds the number of blocks")

    max_iter = config.fixed_k
    if max_iter is None:
        max_iter = config.max_iterations or phi.n_blocks

    initial_norm = float(np.linalg.norm(y))
    residual = y.copy()
    chosen: list[int] = []
    active_cols: list[np.ndarray] = []   # absolute column indices, per block
    norms: list[float] = []
    degenerate = False
    x = np.zeros((0, y.shape[1]), dtype=complex)

    while len(chosen) < max_iter:
        if config.residual_threshold is not None and \
                np.linalg.norm(residual) < config.residual_threshold:
            break
        scores = _block_correlations(phi, residual)
        scores[chosen] = -np.inf
        pick = int(np.argmax(scores))
        chosen.append(pick)
        active_cols.append(pick * phi.block_width + phi.nonzero_columns(pick))

        cols = np.concatenate(active_cols)
        sub = phi.matrix[:, cols]
        if config.estimator == "ls":
            gram = sub.conj().T @ sub
            x, flag = _solve_hermitian(gram, sub.conj().T @ y)
        else:
            inner = sub @ sub.conj().T + config.mmse_ratio * np.eye(sub.shape[0])
            z, flag = _solve_hermitian(inner, y)
            x = sub.conj().T @ z
        degenerate = degenerate or flag
        residual = y - sub @ x
        norms.append(float(np.linalg.norm(residual)))

    x_blocks = {}
    offset = 0
    for j, block in enumerate(chosen):
        width = len(active_cols[j])
        full = np.zeros((phi.block_width, y.shape[1]), dtype=complex)
        full[active_cols[j] - block * phi.block_width] = x[offset: offset + width]
        x_blocks[block] = full[:, 0] if squeeze else full
        offset += width

    return RecoveryResult(
        support=tuple(chosen),
        x_blocks=x_blocks,
        residual_norms=norms,
        initial_residual_norm=initial_norm,
        degenerate=degenerate,
    )


def oracle_exhaustive(
    y: np.ndarray,
    phi: SensingMatrix,
    k: int,
    max_candidates: int = 10**6,
) -> tuple:
    """Exact support-identification by brute force over all size-k supports.

    Minimizes the least-squares residual over every candidate support; ties
    break lexicographically (combinations are enumerated in lexicographic
    order and only strict improvements replace the incumbent).
    """
    n = phi.n_blocks
    total = math.comb(n, k)
    if total > max_candidates:
        raise ConfigurationError(
            f"{total} candidate supports exceed the guard ({max_candidates})"
        )
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    best: tuple | None = None
    best_obj = np.inf
    for combo in itertools.combinations(range(n), k):
        cols = np.concatenate(
            [b * phi.block_width + phi.nonzero_columns(b) for b in combo]
        )
        sub = phi.matrix[:, cols]
        gram = sub.conj().T @ sub
        x, _ = _solve_hermitian(gram, sub.conj().T @ y)
        obj = float(np.linalg.norm(y - sub @ x) ** 2)
        if obj < best_obj:
            best_obj = obj
            best = combo
    assert best is not None
    return best
