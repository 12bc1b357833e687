# tests/test_kernel.py
from __future__ import annotations

import math

import numpy as np
import pytest

from errors import ParameterError
from funclib import TanhAtom, bracket, derivative, sample_on, sech, tanh_mixture, with_offset
from grid import build_grid, integrate
from kernel import (
    assemble_kernel,
    assemble_momentum_kernel,
    assemble_position_kernel,
    divided_difference,
)

TANH = tanh_mixture(TanhAtom(scale=1.0))


def test_kato_position_kernel_is_closed_form(kato_position, grid):
    A, _ = kato_position
    s = sech(grid.nodes)
    np.testing.assert_allclose(A.kernel_values(), np.outer(s, s) / math.pi, rtol=0, atol=1e-13)
    assert A.side == "position"


def test_kato_momentum_kernel_is_closed_form(kato_momentum, grid):
    A, _ = kato_momentum
    s = sech(0.5 * math.pi * grid.nodes)
    np.testing.assert_allclose(A.kernel_values(), 0.5 * np.outer(s, s), rtol=0, atol=1e-13)


def test_kernels_are_hermitian():
    grid = build_grid(12.0, 241)
    g = tanh_mixture(TanhAtom(scale=1.3, center=0.4, weight=0.6), TanhAtom(scale=0.9, center=-1.0))
    f = tanh_mixture(TanhAtom(scale=1.1, center=0.7), TanhAtom(scale=2.0, center=-0.3, weight=0.3))
    for side in ("position", "momentum"):
        A = assemble_kernel(g, f, grid, side)
        assert np.iscomplexobj(A.entries)
        assert A.hermiticity_defect() <= 1e-12


def test_constant_shift_leaves_kernel_bit_identical(kato_pair):
    grid = build_grid(10.0, 101)
    g, f = kato_pair
    base = assemble_position_kernel(g, f, grid).entries
    shifted = assemble_position_kernel(with_offset(g, 5.0), with_offset(f, -2.0), grid).entries
    np.testing.assert_array_equal(base, shifted)


def test_trace_identity(kato_position, kato_pair, grid):
    A, _ = kato_position
    g, f = kato_pair
    expected = bracket(f) / (2.0 * math.pi) * integrate(grid, derivative(g, grid.nodes))
    assert np.real(np.trace(A.entries)) == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(2.0 / math.pi, abs=1e-10)


def test_divided_difference_diagonal_and_near_diagonal():
    x = np.array([-2.0, 0.0, 0.5, 3.0])
    np.testing.assert_allclose(divided_difference(TANH, x, x), 1.0 / np.cosh(x) ** 2, rtol=1e-14)
    for dx in (1e-7, 5e-5, 2e-4, 1e-3):
        direct = (np.tanh(x + dx) - np.tanh(x)) / dx
        np.testing.assert_allclose(divided_difference(TANH, x + dx, x), direct, rtol=1e-7)


def test_divided_difference_far_tails():
    assert divided_difference(TANH, 700.0, -700.0) == pytest.approx(1.0 / 700.0)
    far = divided_difference(TANH, 800.0, 799.0)
    assert 0.0 <= far < 1e-300


def test_sampled_inputs_match_closed_forms(kato_pair, grid):
    g, f = kato_pair
    closed = assemble_position_kernel(g, f, grid).entries
    sampled_g = assemble_position_kernel(sample_on(g, grid), f, grid).entries
    np.testing.assert_allclose(sampled_g, closed, rtol=0, atol=1e-12)
    sampled_f = assemble_position_kernel(g, sample_on(f, grid), grid).entries
    np.testing.assert_allclose(sampled_f, closed, rtol=0, atol=1e-7)


def test_momentum_kernel_swaps_roles(kato_pair):
    grid = build_grid(10.0, 101)
    g, f = kato_pair
    direct = assemble_momentum_kernel(g, f, grid).entries
    np.testing.assert_array_equal(direct, assemble_kernel(g, f, grid, "momentum").entries)


def test_unknown_side_is_rejected(kato_pair):
    with pytest.raises(ParameterError):
        assemble_kernel(*kato_pair, build_grid(2.0, 5), "diagonal")
