# spectral.py
"""
Hermitian eigendecomposition of KernelMatrix and the identities read off it:
numerical rank, positivity, the modes phi_j of the finite-rank form, the
diagonal identity g'(x) = (2 pi/[f]) sum_j |phi_j(x)|^2 and Fourier duality.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import scipy.linalg

from errors import IntegrityError, ParameterError, StateError
from funclib import FunctionSpec, bracket, derivative
from grid import Grid, integrate
from kernel import (
    KernelMatrix,
    Side,
    assemble_momentum_kernel,
    assemble_position_kernel,
)

log = logging.getLogger("katolab.spectral")

DEFAULT_REL_TOL = 1e-8
HERMITIAN_TOL = 1e-12
DUALITY_TOP = 10


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Full spectrum, algebraically descending; vectors[:, j] belongs to eigenvalues[j]."""

    eigenvalues: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    side: Side
    trace: float
    rank: int
    min_eigenvalue: float
    positivity: bool

    @property
    def max_magnitude(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else 0.0

    @property
    def top_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])


# -----------------------------------------------------------------------------
# Decomposition
# -----------------------------------------------------------------------------

def _hermitian_part(A: KernelMatrix) -> np.ndarray:
    M = A.entries
    scale = A.max_abs
    defect = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
    if defect > HERMITIAN_TOL * scale:
        raise IntegrityError(
            f"kernel matrix is not Hermitian: defect {defect:.3e} vs max entry {scale:.3e}"
        )
    H = 0.5 * (M + M.conj().T)
    if np.iscomplexobj(H) and not np.any(H.imag):
        H = H.real
    return H


def spectrum_only(A: KernelMatrix) -> np.ndarray:
    """Eigenvalues of A, algebraically descending."""
    H = _hermitian_part(A)
    return scipy.linalg.eigvalsh(H)[::-1]


def eigendecompose(A: KernelMatrix, rel_tol: float = DEFAULT_REL_TOL) -> SpectralResult:
    """
    Dense Hermitian eigendecomposition (LAPACK, no randomisation).

    Each eigenvector's phase is fixed so its largest-magnitude component is
    real and positive.
    """
    H = _hermitian_part(A)
    n = H.shape[0]
    if A.max_abs == 0.0:
        values = np.zeros(n)
        vectors = np.eye(n, dtype=complex)
    else:
        values, vectors = scipy.linalg.eigh(H)
        order = np.argsort(-values, kind="stable")
        values = values[order]
        vectors = vectors[:, order].astype(complex)
        pivot = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(n)]
        vectors = vectors * (np.conj(pivot) / np.abs(pivot))[None, :]

    trace = float(np.real(np.trace(A.entries)))
    rank = _count_rank(values, rel_tol)
    lowest = float(values[-1]) if n else 0.0
    positive = _is_positive(values, rel_tol)
    log.debug("%s spectrum: n=%d rank=%d min=%.3e", A.side, n, rank, lowest)
    return SpectralResult(
        eigenvalues=values,
        vectors=vectors,
        side=A.side,
        trace=trace,
        rank=rank,
        min_eigenvalue=lowest,
        positivity=positive,
    )


def _count_rank(values: np.ndarray, rel_tol: float) -> int:
    magnitude = np.abs(values)
    top = float(magnitude.max()) if magnitude.size else 0.0
    if top == 0.0:
        return 0
    return int(np.count_nonzero(magnitude > rel_tol * top))


def _is_positive(values: np.ndarray, rel_tol: float) -> bool:
    if not values.size:
        return True
    top = float(np.max(np.abs(values)))
    return bool(values.min() >= -rel_tol * top)


def numerical_rank(result: SpectralResult, rel_tol: float = DEFAULT_REL_TOL) -> int:
    """Number of eigenvalues with |lambda| > rel_tol * max |lambda|."""
    return _count_rank(result.eigenvalues, rel_tol)


def positivity_check(result: SpectralResult,
                     rel_tol: float = DEFAULT_REL_TOL) -> Tuple[bool, float]:
    return _is_positive(result.eigenvalues, rel_tol), float(result.eigenvalues.min())


# -----------------------------------------------------------------------------
# Modes
# -----------------------------------------------------------------------------

def _check_grid(result: SpectralResult, grid: Grid) -> None:
    if grid.n != result.eigenvalues.size:
        raise ParameterError(
            f"grid has {grid.n} nodes but the spectrum has {result.eigenvalues.size} entries"
        )


def signed_modes(result: SpectralResult, grid: Grid,
                 rel_tol: float = DEFAULT_REL_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """
    Node values v_j[i] sqrt(|lambda_j| / w_i) of every retained eigenpair and
    the signs of their eigenvalues, so K(x, y) = sum_j s_j phi_j(x) conj(phi_j(y)).
    Rows of the first array are modes, in eigenvalue order.
    """
    _check_grid(result, grid)
    values = result.eigenvalues
    top = result.max_magnitude
    if top == 0.0:
        return np.zeros((0, grid.n), dtype=complex), np.zeros(0)
    keep = np.flatnonzero(np.abs(values) > rel_tol * top)
    scale = np.sqrt(np.abs(values[keep]))[:, None] / np.sqrt(grid.weights)[None, :]
    modes = result.vectors[:, keep].T * scale
    return modes, np.sign(values[keep])


def extract_modes(result: SpectralResult, grid: Grid,
                  rel_tol: float = DEFAULT_REL_TOL) -> List[np.ndarray]:
    """
    phi_j(x_i) = v_j[i] sqrt(lambda_j / w_i) for the retained positive eigenvalues.

    Equal-lambda modes are only determined up to a unitary remixing.
    """
    positive, lowest = positivity_check(result, rel_tol)
    if not positive:
        raise StateError(
            f"modes need a positive commutator; minimum eigenvalue is {lowest:.6e}"
        )
    modes, signs = signed_modes(result, grid, rel_tol)
    return [mode for mode, sign in zip(modes, signs) if sign > 0]


def reconstruction_residual(result: SpectralResult, A: KernelMatrix,
                            rel_tol: float = DEFAULT_REL_TOL) -> float:
    """max |K - sum_j s_j phi_j phi_j^*| relative to max |K|."""
    modes, signs = signed_modes(result, A.grid, rel_tol)
    target = A.kernel_values()
    scale = float(np.max(np.abs(target)))
    if scale == 0.0:
        return 0.0
    rebuilt = (modes.T * signs[None, :]) @ modes.conj()
    return float(np.max(np.abs(target - rebuilt))) / scale


def mode_overlap(mode: np.ndarray, reference: np.ndarray, grid: Grid) -> float:
    """|<mode, reference>| / (||mode|| ||reference||) in the grid's L^2."""
    inner = integrate(grid, mode * np.conj(reference))
    norms = integrate(grid, np.abs(mode) ** 2) * integrate(grid, np.abs(reference) ** 2)
    if norms == 0.0:
        return 0.0
    return float(abs(inner) / math.sqrt(norms))


# -----------------------------------------------------------------------------
# Identities
# -----------------------------------------------------------------------------

def diagonal_identity_residual(result: SpectralResult, g: FunctionSpec, f: FunctionSpec,
                               grid: Grid, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """
    Position side: max |g'(x) - (2 pi/[f]) sum_j s_j |phi_j(x)|^2|.
    Momentum side: the same with f' and [g].

    s_j = sign(lambda_j), which is +1 throughout for a positive commutator.
    """
    modes, signs = signed_modes(result, grid, rel_tol)
    density = signs @ (np.abs(modes) ** 2) if modes.size else np.zeros(grid.n)
    if result.side == "position":
        target, total = derivative(g, grid.nodes), bracket(f)
    else:
        target, total = derivative(f, grid.nodes), bracket(g)
    if total <= 0:
        raise StateError("diagonal identity needs a non-constant partner function")
    return float(np.max(np.abs(np.asarray(target) - (2.0 * math.pi / total) * density)))


def _top_by_magnitude(values: np.ndarray, count: int) -> np.ndarray:
    order = np.argsort(-np.abs(values), kind="stable")
    return values[order[:count]]


def duality_check(g: FunctionSpec, f: FunctionSpec, grid: Grid,
                  top: int = DUALITY_TOP) -> float:
    """Largest gap between the top-|lambda| position and momentum eigenvalues."""
    position = spectrum_only(assemble_position_kernel(g, f, grid))
    momentum = spectrum_only(assemble_momentum_kernel(g, f, grid))
    gap = np.abs(_top_by_magnitude(position, top) - _top_by_magnitude(momentum, top))
    return float(gap.max()) if gap.size else 0.0
