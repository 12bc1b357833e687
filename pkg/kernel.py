# kernel.py
"""
Nystrom discretisation of the commutator kernels.

Position side:  K(x, y)   = (2 pi)^(-1/2) (g(x)-g(y))/(x-y) * f'^(y - x)
Momentum side:  K~(xi,eta) = (2 pi)^(-1/2) (f(xi)-f(eta))/(xi-eta) * g'^(xi - eta)

Matrices carry the symmetric weighting A[i, j] = sqrt(w_i w_j) K(x_i, x_j),
so they stay Hermitian and share eigenvalues with the one-sided Nystrom matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from funclib import (
    SQRT_2PI,
    FunctionSpec,
    derivative,
    evaluate,
    fhat_prime_closed,
    fhat_prime_numeric,
)
from errors import ParameterError
from grid import Grid

log = logging.getLogger("katolab.kernel")

Side = Literal["position", "momentum"]

NEAR_DIAGONAL = 1e-4


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    grid: Grid
    entries: np.ndarray = field(repr=False)
    side: Side

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def kernel_values(self) -> np.ndarray:
        """Weight-free K(x_i, x_j)."""
        sw = np.sqrt(self.grid.weights)
        return self.entries / np.outer(sw, sw)

    def hermiticity_defect(self) -> float:
        """max |A - A^H| relative to max |A| (0 for the zero matrix)."""
        scale = self.max_abs
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(self.entries - self.entries.conj().T))) / scale


# -----------------------------------------------------------------------------
# Divided differences
# -----------------------------------------------------------------------------

def _tanh_quotient(a, b, alpha: float, dx):
    """
    (tanh a - tanh b) / dx with a - b = alpha * dx, via
    tanh a - tanh b = sinh(a - b) sech a sech b.
    """
    u = alpha * dx
    au, aa, ab = np.abs(u), np.abs(a), np.abs(b)
    ea, eb = np.exp(-2.0 * aa), np.exp(-2.0 * ab)
    denominator = (1.0 + ea) * (1.0 + eb)

    near = au < NEAR_DIAGONAL
    sech_product = 4.0 * np.exp(-(aa + ab)) / denominator
    series = alpha * (1.0 + u * u / 6.0 + u ** 4 / 120.0) * sech_product

    safe_dx = np.where(near, 1.0, dx)
    # sinh(u) sech a sech b; |u| <= |a| + |b| keeps the exponent non-positive.
    far = (
        np.sign(u) * (-np.expm1(-2.0 * au)) * 2.0
        * np.exp(au - (aa + ab)) / denominator / safe_dx
    )
    return np.where(near, series, far)


def divided_difference(g: FunctionSpec, x, y):
    """(g(x) - g(y)) / (x - y), continued by g'(x) on the diagonal; >= 0 for increasing g."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    dx = x - y
    if g.is_mixture:
        out = np.zeros(dx.shape, dtype=float)
        for atom in g.atoms:
            a = atom.scale * (x - atom.center)
            b = atom.scale * (y - atom.center)
            out = out + atom.weight * _tanh_quotient(a, b, atom.scale, dx)
    else:
        near = np.abs(dx) < NEAR_DIAGONAL
        safe_dx = np.where(near, 1.0, dx)
        quotient = (np.asarray(evaluate(g, x)) - np.asarray(evaluate(g, y))) / safe_dx
        out = np.where(near, derivative(g, 0.5 * (x + y)), quotient)
    return out.item() if out.ndim == 0 else out


# -----------------------------------------------------------------------------
# Assembly
# -----------------------------------------------------------------------------

def _lag_transform(spec: FunctionSpec, grid: Grid) -> np.ndarray:
    """f'^ at the 2n-1 lags (m * h, m = -(n-1)..n-1) of a uniform grid."""
    lags = grid.spacing * np.arange(-(grid.n - 1), grid.n, dtype=float)
    if spec.is_mixture:
        return np.asarray(fhat_prime_closed(spec.atoms, lags), dtype=complex)
    return np.asarray(fhat_prime_numeric(spec, lags), dtype=complex)


def _assemble(quotient_spec: FunctionSpec, transform_spec: FunctionSpec,
              grid: Grid, side: Side) -> KernelMatrix:
    nodes = grid.nodes
    n = grid.n
    log.debug("assembling %s kernel on %d nodes", side, n)

    dd = divided_difference(quotient_spec, nodes[:, None], nodes[None, :])

    idx = np.arange(n)
    lag_index = idx[None, :] - idx[:, None]  # j - i
    if side == "momentum":
        lag_index = -lag_index
    transform = _lag_transform(transform_spec, grid)[lag_index + n - 1]

    sw = np.sqrt(grid.weights)
    entries = (sw[:, None] * sw[None, :]) * (dd * transform) / SQRT_2PI
    return KernelMatrix(grid=grid, entries=entries, side=side)


def assemble_position_kernel(g: FunctionSpec, f: FunctionSpec, grid: Grid) -> KernelMatrix:
    """A[i, j] = sqrt(w_i w_j) (2 pi)^(-1/2) DD_g(x_i, x_j) f'^(x_j - x_i)."""
    return _assemble(g, f, grid, "position")


def assemble_momentum_kernel(g: FunctionSpec, f: FunctionSpec, grid: Grid) -> KernelMatrix:
    """A[i, j] = sqrt(w_i w_j) (2 pi)^(-1/2) DD_f(xi_i, xi_j) g'^(xi_i - xi_j)."""
    return _assemble(f, g, grid, "momentum")


def assemble_kernel(g: FunctionSpec, f: FunctionSpec, grid: Grid, side: Side) -> KernelMatrix:
    if side == "position":
        return assemble_position_kernel(g, f, grid)
    if side == "momentum":
        return assemble_momentum_kernel(g, f, grid)
    raise ParameterError(f"side must be 'position' or 'momentum', got {side!r}")
