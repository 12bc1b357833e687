# funclib.py
"""
Bounded increasing functions on the line: tanh-atom mixtures and sampled data.

A mixture is offset + sum_i w_i * tanh(a_i * (x - t_i)). Fourier transforms use
the unitary angular-frequency convention

    f^(k) = (2*pi)^(-1/2) * integral f(x) exp(-i k x) dx

everywhere in the lab.
"""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Literal, Sequence, Tuple

import numpy as np

from errors import (
    DomainError,
    ParameterError,
    PoleProximityError,
    TruncationError,
    UnsupportedError,
)
from grid import Grid, default_grid, integrate

# -----------------------------------------------------------------------------
# Constants
# -----------------------------------------------------------------------------

Variant = Literal["tanh_mixture", "sampled"]

SQRT_2PI = math.sqrt(2.0 * math.pi)
POLE_GUARD = 1e-6
SMALL_K = 1e-8
TAIL_TOLERANCE = 1e-12


# -----------------------------------------------------------------------------
# Types & Data Models
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class TanhAtom:
    scale: float
    center: float = 0.0
    weight: float = 1.0

    def __post_init__(self) -> None:
        for name in ("scale", "center", "weight"):
            value = getattr(self, name)
            is_number = isinstance(value, numbers.Real) and not isinstance(value, bool)
            if not is_number or not math.isfinite(value):
                raise ParameterError(f"atom {name} must be a finite number, got {value!r}")
        if self.scale <= 0:
            raise ParameterError(f"atom scale must be positive, got {self.scale}")
        if self.weight <= 0:
            raise ParameterError(
                f"atom weight must be positive (increasing atoms only), got {self.weight}"
            )


@dataclass(frozen=True)
class ComplexPoint:
    re: float
    im: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise DomainError(f"complex point must be finite, got {self.re}+{self.im}i")

    def __complex__(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """Either a tanh mixture or samples of (f, f') on a grid; build via the classmethods."""

    variant: Variant
    atoms: Tuple[TanhAtom, ...] = ()
    offset: float = 0.0
    grid: Grid | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    derivatives: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def mixture(cls, atoms: Iterable[TanhAtom], offset: float = 0.0) -> "FunctionSpec":
        atoms = tuple(atoms)
        for atom in atoms:
            if not isinstance(atom, TanhAtom):
                raise ParameterError(f"expected TanhAtom, got {type(atom).__name__}")
        if (isinstance(offset, bool) or not isinstance(offset, numbers.Real)
                or not math.isfinite(offset)):
            raise ParameterError(f"offset must be a finite number, got {offset!r}")
        return cls(variant="tanh_mixture", atoms=atoms, offset=float(offset))

    @classmethod
    def sampled(
        cls,
        grid: Grid,
        values: Sequence[float] | np.ndarray,
        derivatives: Sequence[float] | np.ndarray,
    ) -> "FunctionSpec":
        values = np.array(values, dtype=float)
        derivatives = np.array(derivatives, dtype=float)
        if values.shape != (grid.n,) or derivatives.shape != (grid.n,):
            raise ParameterError(
                f"sampled function needs {grid.n} values and derivatives, "
                f"got {values.shape} and {derivatives.shape}"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(derivatives))):
            raise DomainError("sampled function contains non-finite entries")
        if np.any(derivatives < 0):
            raise DomainError("sampled derivative must be non-negative (increasing functions only)")
        values.setflags(write=False)
        derivatives.setflags(write=False)
        return cls(variant="sampled", grid=grid, values=values, derivatives=derivatives)

    @property
    def is_mixture(self) -> bool:
        return self.variant == "tanh_mixture"

    @property
    def is_degenerate(self) -> bool:
        """True for a constant (atom-free) mixture, which is not strictly increasing."""
        return self.is_mixture and not self.atoms

    def describe(self) -> dict:
        if self.is_mixture:
            return {
                "type": "tanh_mixture",
                "atoms": [
                    {"scale": a.scale, "center": a.center, "weight": a.weight}
                    for a in self.atoms
                ],
                "offset": self.offset,
            }
        return {"type": "sampled", "grid": self.grid.describe()}


# -----------------------------------------------------------------------------
# Numerically stable helpers
# -----------------------------------------------------------------------------

def sech(u):
    """sech(u) = 2 e^{-|u|} / (1 + e^{-2|u|}); never overflows."""
    e = np.exp(-np.abs(u))
    return 2.0 * e / (1.0 + e * e)


def _ctanh(u: np.ndarray) -> np.ndarray:
    # tanh(u) = (1 - e^{-2u}) / (1 + e^{-2u}) with Re u >= 0, odd extension otherwise.
    s = np.where(u.real < 0, -1.0, 1.0)
    e = np.exp(-2.0 * s * u)
    return s * (1.0 - e) / (1.0 + e)


def _u_over_sinh(u: np.ndarray) -> np.ndarray:
    """u / sinh(u) for real or complex u; callers mask u == 0 themselves."""
    if np.iscomplexobj(u):
        safe = np.where(u == 0, 1.0, u)
        return safe / np.sinh(safe)
    au = np.abs(u)
    safe = np.where(au == 0, 1.0, au)
    return 2.0 * safe * np.exp(-safe) / -np.expm1(-2.0 * safe)


def _as_output(arr: np.ndarray):
    return arr.item() if np.ndim(arr) == 0 else arr


def _real_input(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("evaluation points must be finite")
    return arr


def _check_hull(spec: FunctionSpec, x: np.ndarray) -> None:
    lo, hi = spec.grid.nodes[0], spec.grid.nodes[-1]
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(
            f"query outside the sampled hull [{lo}, {hi}]: "
            f"min {float(np.min(x))}, max {float(np.max(x))}"
        )


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------

def evaluate(spec: FunctionSpec, x):
    """f(x); sampled functions interpolate linearly inside their hull."""
    x = _real_input(x)
    if spec.is_mixture:
        out = np.full(x.shape, spec.offset, dtype=float)
        for atom in spec.atoms:
            out = out + atom.weight * np.tanh(atom.scale * (x - atom.center))
        return _as_output(out)
    _check_hull(spec, x)
    return _as_output(np.interp(x, spec.grid.nodes, spec.values))


def derivative(spec: FunctionSpec, x):
    """f'(x) >= 0; mixtures use sum_i w_i a_i sech^2(a_i (x - t_i))."""
    x = _real_input(x)
    if spec.is_mixture:
        out = np.zeros(x.shape, dtype=float)
        for atom in spec.atoms:
            s = sech(atom.scale * (x - atom.center))
            out = out + atom.weight * atom.scale * s * s
        return _as_output(out)
    _check_hull(spec, x)
    return _as_output(np.interp(x, spec.grid.nodes, spec.derivatives))


def bracket(spec: FunctionSpec) -> float:
    """[f] = lim f(x) - f(-x): 2 * sum of weights, or the sampled end-to-end rise."""
    if spec.is_mixture:
        return 2.0 * math.fsum(atom.weight for atom in spec.atoms)
    return float(spec.values[-1] - spec.values[0])


def analytic_strip(spec: FunctionSpec) -> float | None:
    """Half-width of the pole-free strip, min_i pi/(2 a_i); None for sampled data."""
    if not spec.is_mixture:
        return None
    if not spec.atoms:
        return math.inf
    return min(math.pi / (2.0 * atom.scale) for atom in spec.atoms)


def continue_analytic(spec: FunctionSpec, z):
    """
    Analytic continuation of a mixture to complex z.

    Raises PoleProximityError when |Im z| * a_i comes within POLE_GUARD of
    pi/2 for some atom (the nearest poles of tanh sit on that line).
    """
    if not spec.is_mixture:
        raise UnsupportedError("analytic continuation is only available for tanh mixtures")
    if isinstance(z, ComplexPoint):
        z = complex(z)
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise DomainError("continuation points must be finite")

    out = np.full(z.shape, spec.offset, dtype=complex)
    for atom in spec.atoms:
        u = atom.scale * (z - atom.center)
        margin = math.pi / 2.0 - np.abs(u.imag)
        if np.any(margin < POLE_GUARD):
            worst = complex(z.flat[int(np.argmin(margin))])
            raise PoleProximityError(
                f"z = {worst} is within {POLE_GUARD} of the pole line of the atom "
                f"(scale {atom.scale}); strip half-width is {math.pi / (2 * atom.scale)}"
            )
        out = out + atom.weight * _ctanh(u)
    return _as_output(out)


# -----------------------------------------------------------------------------
# Fourier transform of the derivative
# -----------------------------------------------------------------------------

def fhat_prime_closed(atoms: Sequence[TanhAtom], k):
    """
    Closed-form transform of a mixture's derivative:

        (2 pi)^(-1/2) sum_i w_i e^{-i k t_i} pi k / (a_i sinh(pi k / (2 a_i)))

    k may be complex inside the strip where sinh has no zeros; |k| < SMALL_K
    uses the limit 2 w_i per atom.
    """
    k = np.asarray(k)
    if not np.iscomplexobj(k):
        k = k.astype(float)
    small = np.abs(k) < SMALL_K
    out = np.zeros(k.shape, dtype=complex)
    for atom in atoms:
        u = (math.pi / (2.0 * atom.scale)) * k
        ratio = np.where(small, 1.0, _u_over_sinh(u))
        out = out + atom.weight * np.exp(-1j * k * atom.center) * 2.0 * ratio
    return _as_output(out / SQRT_2PI)


def fhat_prime_numeric(spec: FunctionSpec, k, grid: Grid | None = None):
    """
    Trapezoid approximation of the derivative's transform on a grid.

    Sampled functions default to their own grid. Raises TruncationError when
    f' has not decayed below TAIL_TOLERANCE at the grid ends.
    """
    if grid is None:
        if spec.is_mixture:
            raise ParameterError("a grid is required for the numeric transform of a mixture")
        grid = spec.grid
    samples = np.asarray(derivative(spec, grid.nodes), dtype=float)
    tail = max(samples[0], samples[-1])
    if tail > TAIL_TOLERANCE:
        raise TruncationError(
            f"derivative is {tail:.3e} at the grid boundary (L = {grid.half_width}); "
            f"widen the grid"
        )
    k = np.asarray(k, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(k, grid.nodes))
    return _as_output(integrate(grid, samples * phase) / SQRT_2PI)


# -----------------------------------------------------------------------------
# Transformations & construction helpers
# -----------------------------------------------------------------------------

def _require_mixture(spec: FunctionSpec, what: str) -> None:
    if not spec.is_mixture:
        raise UnsupportedError(f"{what} is only available for tanh mixtures")


def dilate(spec: FunctionSpec, factor: float) -> FunctionSpec:
    """x -> f(factor * x)."""
    _require_mixture(spec, "dilation")
    if not factor > 0:
        raise ParameterError(f"dilation factor must be positive, got {factor}")
    atoms = [
        TanhAtom(scale=a.scale * factor, center=a.center / factor, weight=a.weight)
        for a in spec.atoms
    ]
    return FunctionSpec.mixture(atoms, spec.offset)


def translate(spec: FunctionSpec, shift: float) -> FunctionSpec:
    """x -> f(x - shift)."""
    _require_mixture(spec, "translation")
    atoms = [replace(a, center=a.center + shift) for a in spec.atoms]
    return FunctionSpec.mixture(atoms, spec.offset)


def with_offset(spec: FunctionSpec, constant: float) -> FunctionSpec:
    """x -> f(x) + constant."""
    if spec.is_mixture:
        return FunctionSpec.mixture(spec.atoms, spec.offset + constant)
    return FunctionSpec.sampled(spec.grid, spec.values + constant, spec.derivatives)


def sample_on(spec: FunctionSpec, grid: Grid) -> FunctionSpec:
    """Sampled copy of spec on grid."""
    return FunctionSpec.sampled(
        grid,
        evaluate(spec, grid.nodes),
        derivative(spec, grid.nodes),
    )


def tanh_mixture(*atoms: TanhAtom, offset: float = 0.0) -> FunctionSpec:
    return FunctionSpec.mixture(atoms, offset)


def grid_for(*specs: FunctionSpec) -> Grid:
    """Default grid wide enough for every atom of every mixture given."""
    atoms: List[TanhAtom] = [a for s in specs if s.is_mixture for a in s.atoms]
    if not atoms:
        return default_grid()
    return default_grid(
        min_scale=min(a.scale for a in atoms),
        max_center=max(abs(a.center) for a in atoms),
    )
