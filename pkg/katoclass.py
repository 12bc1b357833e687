# katoclass.py
"""
Diagnostics for membership in the strip classes K_r.

K_r holds bounded real functions continuing analytically to |Im z| < r with
Im f(z) * Im z >= 0 there. For a finite-rank commutator, f' decays like
e^{-2 r |xi|} where r is the strip of g, and g' decays like e^{-2 r' |x|}
with r' the strip of f.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Literal, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import quad

from errors import (
    DomainError,
    PoleProximityError,
    StateError,
    UnreliableFitError,
    UnsupportedError,
)
from funclib import (
    POLE_GUARD,
    SQRT_2PI,
    FunctionSpec,
    analytic_strip,
    continue_analytic,
    derivative,
    fhat_prime_closed,
    sech,
)
from grid import Grid, integrate

log = logging.getLogger("katolab.katoclass")

TailSide = Literal["left", "right"]

DEFAULT_WINDOW = (0.5, 0.9)
MIN_FIT_QUALITY = 0.999
DEFAULT_LEVELS = 8
HERGLOTZ_SLACK = 1e-12
# Plancherel check uses phi = sech, whose transform has poles at +-i.
PLANCHEREL_S_LIMIT = 1.0
PLANCHEREL_Y_LIMIT = math.pi / 2.0


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class StripEstimate:
    half_width: float
    decay_rate: float
    fit_window: Tuple[float, float]
    fit_quality: float
    side: TailSide


@dataclass(frozen=True)
class ExpMoment:
    value: float
    diverging: bool


@dataclass(frozen=True)
class StripReport:
    r: float
    r_prime: float
    product: float
    pi_over_2_gap: float
    fit_quality_f: float
    fit_quality_g: float
    r_tail: float
    r_prime_tail: float
    r_pole: float | None
    r_prime_pole: float | None

    def to_json(self) -> dict:
        return asdict(self)


# -----------------------------------------------------------------------------
# Tail fitting
# -----------------------------------------------------------------------------

def _fit_tail(x: np.ndarray, samples: np.ndarray) -> Tuple[float, float]:
    if np.any(samples <= 0):
        raise DomainError("tail fit needs strictly positive samples inside the window")
    fit = stats.linregress(np.abs(x), np.log(samples))
    return -float(fit.slope), float(fit.rvalue ** 2)


def estimate_strip_from_partner(fprime_samples, grid: Grid,
                                window: Tuple[float, float] = DEFAULT_WINDOW) -> StripEstimate:
    """
    Half the exponential decay rate of a derivative's tails.

    Fits log f' against |xi| on lo*L <= |xi| <= hi*L for each tail, keeps the
    slower tail, and refuses fits with R^2 below MIN_FIT_QUALITY.
    """
    samples = np.asarray(fprime_samples, dtype=float)
    if samples.shape != (grid.n,):
        raise DomainError(f"expected {grid.n} derivative samples, got shape {samples.shape}")
    lo, hi = window
    if not 0 <= lo < hi <= 1:
        raise DomainError(f"fit window must satisfy 0 <= lo < hi <= 1, got {window}")

    x = grid.nodes
    L = grid.half_width
    inside = (np.abs(x) >= lo * L) & (np.abs(x) <= hi * L)
    fits = {}
    for side, mask in (("left", inside & (x < 0)), ("right", inside & (x > 0))):
        if np.count_nonzero(mask) < 3:
            raise DomainError(f"fit window {window} holds fewer than 3 nodes on the {side}")
        fits[side] = _fit_tail(x[mask], samples[mask])

    side = min(fits, key=lambda s: fits[s][0])
    rate = fits[side][0]
    quality = min(q for _, q in fits.values())
    if quality < MIN_FIT_QUALITY:
        raise UnreliableFitError(
            f"tail is not log-linear on {window} (R^2 = {quality:.6f} < {MIN_FIT_QUALITY})"
        )
    log.debug("tail fit: rate %.6f on the %s (R^2 %.8f)", rate, side, quality)
    return StripEstimate(
        half_width=rate / 2.0,
        decay_rate=rate,
        fit_window=(lo * L, hi * L),
        fit_quality=quality,
        side=side,
    )


# -----------------------------------------------------------------------------
# Exponential moments
# -----------------------------------------------------------------------------

def exp_moment(spec: FunctionSpec, s: float, grid: Grid) -> ExpMoment:
    """
    integral of f'(xi) e^{s|xi|} over [-L, L], flagged as diverging when the
    integrand is not decaying across the outermost tenth of either tail.

    Mixtures are integrated adaptively on each half-line (the weight is not
    smooth at 0); sampled functions use the grid's trapezoid sum.
    """
    x = grid.nodes
    L = grid.half_width
    with np.errstate(over="ignore", invalid="ignore"):
        integrand = np.asarray(derivative(spec, x)) * np.exp(s * np.abs(x))
    if s * L > 700.0:
        value = math.inf
    elif spec.is_mixture:
        value = math.fsum(
            quad(lambda t: derivative(spec, t) * math.exp(s * abs(t)), a, b,
                 epsabs=1e-13, epsrel=1e-13, limit=400)[0]
            for a, b in ((-L, 0.0), (0.0, L))
        )
    else:
        value = float(integrate(grid, integrand))

    start = np.abs(x) >= 0.9 * L
    diverging = False
    for tail in (start & (x < 0), start & (x > 0)):
        values = integrand[tail]
        inner, outer = (values[-1], values[0]) if x[tail][0] < 0 else (values[0], values[-1])
        if not np.isfinite(outer) or (outer > 0 and outer >= inner):
            diverging = True
    return ExpMoment(value=value, diverging=diverging)


# -----------------------------------------------------------------------------
# Herglotz sign in the strip
# -----------------------------------------------------------------------------

def herglotz_grid_check(g: FunctionSpec, r: float, grid: Grid,
                        n_levels: int = DEFAULT_LEVELS) -> bool:
    """y * Im g(x + iy) >= -1e-12 at every node and at y = +-r m/(n_levels+1)."""
    if not g.is_mixture:
        raise UnsupportedError("Herglotz check needs a tanh mixture")
    if r <= 0 or n_levels < 1:
        raise DomainError(f"need r > 0 and n_levels >= 1, got r={r}, n_levels={n_levels}")
    bound = analytic_strip(g)
    if r >= bound - POLE_GUARD:
        raise PoleProximityError(
            f"strip half-width {r} reaches the poles of g (continuation bound {bound})"
        )
    m = np.arange(1, n_levels + 1)
    levels = r * m / (n_levels + 1)
    levels = np.concatenate((-levels[::-1], levels))
    z = grid.nodes[None, :] + 1j * levels[:, None]
    signed = levels[:, None] * np.imag(continue_analytic(g, z))
    return bool(np.all(signed >= -HERGLOTZ_SLACK))


# -----------------------------------------------------------------------------
# Continuation identity and Plancherel in the strip
# -----------------------------------------------------------------------------

def _abs_sech_squared(u):
    """|sech(a + ib)|^2 = 2 / (cosh 2a + cos 2b), written without overflow."""
    u = np.asarray(u, dtype=complex)
    e = np.exp(-2.0 * np.abs(u.real))
    return 4.0 * e / (1.0 + 2.0 * np.cos(2.0 * u.imag) * e + e * e)


def sech_transform(k):
    """Transform of sech: sqrt(pi/2) sech(pi k / 2), continued to complex k."""
    u = 0.5 * math.pi * np.asarray(k)
    if not np.iscomplexobj(u):
        return math.sqrt(math.pi / 2.0) * sech(u.astype(float))
    u = np.where(u.real < 0, -u, u)
    e = np.exp(-u)
    return math.sqrt(math.pi / 2.0) * 2.0 * e / (1.0 + e * e)


def _rank_one_atoms(g: FunctionSpec, f: FunctionSpec):
    if not (g.is_mixture and f.is_mixture and len(g.atoms) == 1 and len(f.atoms) == 1):
        raise StateError("continuation identity needs a single-atom pair (rank-one case)")
    ga, fa = g.atoms[0], f.atoms[0]
    if abs(ga.scale * fa.scale - math.pi / 2.0) > 1e-9:
        raise StateError(
            f"scales {ga.scale} and {fa.scale} do not multiply to pi/2; "
            f"the commutator is not rank one"
        )
    return ga, fa


def strip_continuation_identity(g: FunctionSpec, f: FunctionSpec, grid: Grid, y: float) -> float:
    """
    max over nodes of |(2 pi)^(-1/2) (Im g(x+iy)/y) f'^(-2iy) - |phi(x+iy)|^2|.

    phi(z) = sqrt(w_g w_f a_g / pi) sech(a_g (z - t_g)) e^{i z t_f} is the
    closed-form mode of the rank-one pair; y = 0 uses the g' limit.
    """
    ga, fa = _rank_one_atoms(g, f)
    x = grid.nodes
    if y == 0.0:
        lhs = np.asarray(derivative(g, x)) * fhat_prime_closed(f.atoms, 0.0).real / SQRT_2PI
    else:
        im_g = np.imag(continue_analytic(g, x + 1j * y))
        transform = fhat_prime_closed(f.atoms, -2j * y)
        lhs = (im_g / y) * transform.real / SQRT_2PI
    normalisation = ga.weight * fa.weight * ga.scale / math.pi
    rhs = (
        normalisation
        * _abs_sech_squared(ga.scale * (x + 1j * y - ga.center))
        * math.exp(-2.0 * y * fa.center)
    )
    return float(np.max(np.abs(lhs - rhs)))


def plancherel_strip_check(y: float, s: float, grid: Grid) -> float:
    """
    |int |phi(x+iy)|^2 e^{2sx} dx - int |phi^(xi+is)|^2 e^{-2y xi} dxi| for phi = sech.
    """
    if abs(y) >= PLANCHEREL_Y_LIMIT or abs(s) >= PLANCHEREL_S_LIMIT:
        raise DomainError(
            f"need |y| < pi/2 and |s| < 1 for phi = sech, got y={y}, s={s}"
        )
    x = grid.nodes
    position = _abs_sech_squared(x + 1j * y) * np.exp(2.0 * s * x)
    momentum = np.abs(sech_transform(x + 1j * s)) ** 2 * np.exp(-2.0 * y * x)
    return float(abs(integrate(grid, position) - integrate(grid, momentum)))


# -----------------------------------------------------------------------------
# Strip product
# -----------------------------------------------------------------------------

def _bounded(tail: float, pole: float | None) -> float:
    return tail if pole is None else min(tail, pole)


def strip_product_report(g: FunctionSpec, f: FunctionSpec, grid: Grid) -> StripReport:
    """
    r (strip of g) and r' (strip of f) and their product against pi/2.

    Each strip is the smaller of the moment bound, half the tail rate of the
    partner's derivative, and the function's own pole-free strip.
    """
    on_f = estimate_strip_from_partner(derivative(f, grid.nodes), grid)
    on_g = estimate_strip_from_partner(derivative(g, grid.nodes), grid)
    r_pole, r_prime_pole = analytic_strip(g), analytic_strip(f)
    r = _bounded(on_f.half_width, r_pole)
    r_prime = _bounded(on_g.half_width, r_prime_pole)
    product = r * r_prime
    return StripReport(
        r=r,
        r_prime=r_prime,
        product=product,
        pi_over_2_gap=product - math.pi / 2.0,
        fit_quality_f=on_f.fit_quality,
        fit_quality_g=on_g.fit_quality,
        r_tail=on_f.half_width,
        r_prime_tail=on_g.half_width,
        r_pole=r_pole,
        r_prime_pole=r_prime_pole,
    )
