# grid.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from errors import ParameterError

# -----------------------------------------------------------------------------
# Defaults
# -----------------------------------------------------------------------------

DEFAULT_HALF_WIDTH = 20.0
DEFAULT_NODES = 801
DEFAULT_SPACING = 0.05
# Dense n x n complex kernels; 4001 nodes is about 256 MB per matrix.
MAX_NODES = 4001


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform trapezoid grid on [-L, L] with an odd node count, so 0 is a node."""

    half_width: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def center_index(self) -> int:
        return (self.n - 1) // 2

    def describe(self) -> dict:
        return {"L": self.half_width, "n": self.n}


# -----------------------------------------------------------------------------
# Construction
# -----------------------------------------------------------------------------

def build_grid(L: float, n: int) -> Grid:
    """
    Build the trapezoid grid with n nodes on [-L, L].

    Nodes are mirrored from the positive half so nodes[i] == -nodes[n-1-i]
    holds bit for bit and the end nodes are exactly -L and L.
    """
    try:
        L = float(L)
    except (TypeError, ValueError):
        raise ParameterError(f"grid half-width must be a number, got {L!r}") from None
    if not (math.isfinite(L) and L > 0):
        raise ParameterError(f"grid half-width must be positive and finite, got {L}")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        if not (isinstance(n, float) and n.is_integer()):
            raise ParameterError(f"node count must be an integer, got {n!r}")
    n = int(n)
    if n < 3 or n % 2 == 0:
        raise ParameterError(f"node count must be odd and >= 3, got {n}")
    if n > MAX_NODES:
        raise ParameterError(f"node count {n} exceeds the limit of {MAX_NODES}")

    m = (n - 1) // 2
    h = L / m
    half = h * np.arange(1, m + 1, dtype=float)
    half[-1] = L
    nodes = np.concatenate((-half[::-1], [0.0], half))

    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h

    nodes.setflags(write=False)
    weights.setflags(write=False)
    return Grid(half_width=L, n=n, nodes=nodes, weights=weights)


def default_grid(
    min_scale: float | None = None,
    max_center: float = 0.0,
    spacing: float = DEFAULT_SPACING,
) -> Grid:
    """
    Scale-aware default: L = max(20, 20/min_scale + max|center|), spacing <= 0.05,
    at most MAX_NODES nodes.

    n - 1 is kept divisible by 4 so the 4:1 atom grid of the measure fit nests.
    """
    L = DEFAULT_HALF_WIDTH
    if min_scale is not None and min_scale > 0:
        L = max(L, DEFAULT_HALF_WIDTH / min_scale + abs(max_center))
    half_steps = math.ceil(L / spacing - 1e-9)
    half_steps += half_steps % 2
    if 2 * half_steps + 1 > MAX_NODES:
        raise ParameterError(
            f"default grid for min_scale={min_scale} needs L={L:g} and "
            f"{2 * half_steps + 1} nodes (limit {MAX_NODES}); pass an explicit grid"
        )
    return build_grid(L, 2 * half_steps + 1)


def subsample_grid(grid: Grid, factor: int) -> Grid:
    """Every factor-th node of grid, as a grid of its own (same hull)."""
    if factor < 1 or (grid.n - 1) % (2 * factor) != 0:
        raise ParameterError(
            f"cannot subsample a {grid.n}-node grid by {factor} and keep 0 as a node"
        )
    return build_grid(grid.half_width, (grid.n - 1) // factor + 1)


# -----------------------------------------------------------------------------
# Quadrature
# -----------------------------------------------------------------------------

def integrate(grid: Grid, samples: Sequence[float] | np.ndarray):
    """Trapezoid sum along the last axis; a 1-D input returns a scalar."""
    arr = np.asarray(samples)
    if arr.ndim == 0 or arr.shape[-1] != grid.n:
        raise ParameterError(
            f"expected {grid.n} samples along the last axis, got shape {arr.shape}"
        )
    result = arr @ grid.weights
    if np.ndim(result) == 0:
        return result.item()
    return result
