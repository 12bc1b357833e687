# measurefit.py
"""
Discrete approximation of the representation measure

    g(x) = integral tanh(r^ (x - t)) dmu(t) + c

by non-negative least squares on g'(x) = r^ integral sech^2(r^ (x - t)) dmu(t).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import nnls

from errors import ParameterError
from funclib import FunctionSpec, TanhAtom, derivative, evaluate, grid_for, sech
from grid import Grid, subsample_grid

log = logging.getLogger("katolab.measurefit")

ATOM_SUBSAMPLING = 4
GRADIENT_TOL = 1e-10
CONDITION_LIMIT = 1e12


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    centers: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    r_hat: float
    offset: float = 0.0
    notes: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.centers.shape != self.masses.shape:
            raise ParameterError("centers and masses must have the same length")
        if np.any(self.masses < 0):
            raise ParameterError("measure masses must be non-negative")
        if not self.r_hat > 0:
            raise ParameterError(f"r_hat must be positive, got {self.r_hat}")

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        """(center, mass) pairs with positive mass."""
        return [(float(t), float(m)) for t, m in zip(self.centers, self.masses) if m > 0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def to_json(self, residual: float | None = None) -> dict:
        payload = {
            "r_hat": self.r_hat,
            "offset": self.offset,
            "atoms": [{"t": t, "m": m} for t, m in self.atoms],
        }
        if residual is not None:
            payload["residual"] = residual
        if self.notes:
            payload["notes"] = list(self.notes)
        return payload


# -----------------------------------------------------------------------------
# Fitting
# -----------------------------------------------------------------------------

def _design(x: np.ndarray, centers: np.ndarray, r_hat: float) -> np.ndarray:
    s = sech(r_hat * (x[:, None] - centers[None, :]))
    return r_hat * s * s


def fit_measure(g: FunctionSpec, r_hat: float, atom_grid: Grid | None = None,
                sample_grid: Grid | None = None) -> Tuple[DiscreteMeasure, float]:
    """
    Active-set NNLS (Lawson-Hanson, via scipy) for the atom masses.

    Returns the measure and the weighted RMS misfit of g'. Conditioning and
    KKT problems are attached to the measure as notes, not raised.
    """
    if not (isinstance(r_hat, (int, float)) and r_hat > 0 and math.isfinite(r_hat)):
        raise ParameterError(f"r_hat must be positive and finite, got {r_hat!r}")
    if sample_grid is None:
        sample_grid = g.grid if not g.is_mixture else grid_for(g)
    if atom_grid is None:
        atom_grid = subsample_grid(sample_grid, ATOM_SUBSAMPLING)
    if atom_grid.half_width > sample_grid.half_width:
        raise ParameterError("atom grid must lie inside the sample grid hull")

    x = sample_grid.nodes
    w = sample_grid.weights
    centers = np.array(atom_grid.nodes)
    design = _design(x, centers, r_hat)
    target = np.asarray(derivative(g, x), dtype=float)

    sw = np.sqrt(w)
    masses, _ = nnls(sw[:, None] * design, sw * target, maxiter=50 * centers.size)

    notes: List[str] = []
    misfit = target - design @ masses
    gradient = design.T @ (w * misfit)
    active = masses > 0
    kkt = max(
        float(np.max(gradient[~active], initial=0.0)),
        float(np.max(np.abs(gradient[active]), initial=0.0)),
    )
    if kkt > GRADIENT_TOL:
        notes.append(f"projected gradient {kkt:.3e} above {GRADIENT_TOL:g}")
    if np.any(active):
        condition = float(np.linalg.cond(sw[:, None] * design[:, active]))
        if condition > CONDITION_LIMIT:
            notes.append(f"active design is ill-conditioned (cond {condition:.3e})")
    for note in notes:
        log.warning("measure fit (r_hat=%g): %s", r_hat, note)

    model = np.tanh(r_hat * (x[:, None] - centers[None, :])) @ masses
    offset = float(np.mean(np.asarray(evaluate(g, x)) - model))
    residual = math.sqrt(float(np.sum(w * misfit ** 2)) / float(np.sum(w)))
    log.debug("measure fit (r_hat=%g): %d atoms, residual %.3e",
              r_hat, int(np.count_nonzero(active)), residual)

    measure = DiscreteMeasure(
        centers=centers,
        masses=masses,
        r_hat=float(r_hat),
        offset=offset,
        notes=tuple(notes),
    )
    return measure, residual


def reconstruct(measure: DiscreteMeasure) -> FunctionSpec:
    """Tanh mixture with scale r^, the measure's atoms as weights, and its offset."""
    atoms = [TanhAtom(scale=measure.r_hat, center=t, weight=m) for t, m in measure.atoms]
    return FunctionSpec.mixture(atoms, measure.offset)
