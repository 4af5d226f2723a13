import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kam_spectra import SpectralGrid, SpectrumModel, Window
from kam_spectra import constants as K
from kam_spectra.errors import (
    DegenerateSpectrumError,
    EmptyProductError,
    EmptyShiftError,
    InvalidOffsetError,
    NearDegeneracyError,
)
from kam_spectra.lattice import shift_grid
from kam_spectra.talgebra import (
    TSequence,
    difference_part,
    pointwise_product,
    reciprocal_difference,
    shift,
    t_norm,
)

LINEAR = SpectrumModel(1, (1.0,), "identity")


def brute_t_norm(values: dict, lam) -> float:
    """Loop oracle: sup|a| + sup over ordered pairs of |a_m - a_n| / |lam(m - n) - lam(0)|."""
    sup = max(abs(v) for v in values.values())
    diff = 0.0
    for n, m in itertools.permutations(values, 2):
        j = tuple(b - a for a, b in zip(n, m))
        diff = max(diff, abs(values[m] - values[n]) / abs(lam(j) - lam((0,) * len(j))))
    return sup + diff


def seq(grid, values):
    return grid.sequence(np.asarray(values, dtype=complex).reshape(grid.window.grid_shape))


@pytest.fixture(scope="module")
def linear_grid():
    return SpectralGrid(LINEAR, Window(1, 2))


def test_alternating_sequence_norm(linear_grid):
    assert t_norm(seq(linear_grid, [0, 1, 0, 1, 0])) == pytest.approx(2.0, abs=1e-15)


def test_constant_and_zero(linear_grid):
    assert t_norm(linear_grid.sequence(1.0)) == 1.0
    assert t_norm(linear_grid.sequence(0.0)) == 0.0


def test_linear_ramp_has_unit_slope(linear_grid):
    # a_n = lambda_n = n: sup 2, slope exactly 1
    assert t_norm(linear_grid.eigenvalue_sequence()) == pytest.approx(3.0)


def test_brute_force_agreement_on_maryland(rng):
    model = SpectrumModel.maryland()
    grid = SpectralGrid(model, Window(1, 6))
    for _ in range(5):
        v = rng.normal(size=13) + 1j * rng.normal(size=13)
        a = seq(grid, v)
        vals = {tuple(int(x) for x in p): complex(z) for p, z in zip(grid.window.points, v)}
        assert t_norm(a) == pytest.approx(brute_t_norm(vals, model.eigenvalue), rel=1e-12)


def test_brute_force_agreement_d2(rng):
    model = SpectrumModel(2, (1.0, math.sqrt(2.0)), "identity")
    grid = SpectralGrid(model, Window(2, 2))
    v = rng.normal(size=25)
    a = seq(grid, v)
    vals = {tuple(int(x) for x in p): z for p, z in zip(grid.window.points, v)}
    assert t_norm(a) == pytest.approx(brute_t_norm(vals, model.eigenvalue), rel=1e-12)


def test_shift_values_and_domain(linear_grid):
    a = seq(linear_grid, [10, 11, 12, 13, 14])
    b = shift(a, (1,))
    assert [tuple(p) for p in b.points()] == [(-2,), (-1,), (0,), (1,)]
    assert np.allclose(b.entries(), [11, 12, 13, 14])
    assert np.array_equal(shift(a, (0,)).values, a.values)
    with pytest.raises(EmptyShiftError):
        shift(a, (5,))


def test_sequence_rejects_empty_and_nonfinite(linear_grid):
    with pytest.raises(EmptyShiftError):
        linear_grid.sequence(1.0, np.zeros(5, dtype=bool))
    with pytest.raises(ValueError):
        seq(linear_grid, [0, np.nan, 0, 0, 0])


def test_disjoint_product_raises(linear_grid):
    left = linear_grid.sequence(1.0, np.array([1, 1, 0, 0, 0], dtype=bool))
    right = linear_grid.sequence(1.0, np.array([0, 0, 0, 1, 1], dtype=bool))
    with pytest.raises(EmptyProductError):
        pointwise_product(left, right)


def test_degenerate_spectrum_detected():
    # rational omega = 1/5 on the periodic tan model gives lambda_{n+5} = lambda_n
    model = SpectrumModel(1, (0.2,), "tan_pi")
    grid = SpectralGrid(model, Window(1, 4))
    with pytest.raises(DegenerateSpectrumError):
        t_norm(grid.sequence(1.0))


def test_reciprocal_difference_linear(linear_grid):
    r = reciprocal_difference(linear_grid, (1,))
    assert np.allclose(r.entries(), 1.0)
    assert t_norm(r) == pytest.approx(1.0)
    assert t_norm(r) <= K.reciprocal_bound(1.0, 1.0, 1)
    with pytest.raises(InvalidOffsetError):
        reciprocal_difference(linear_grid, (0,))


def test_reciprocal_difference_near_degenerate(linear_grid):
    v = seq(linear_grid, [0, 0, 0, -1 + 1e-14, 0])
    with pytest.raises(NearDegeneracyError):
        reciprocal_difference(linear_grid, (1,), v)


def test_reciprocal_difference_with_quarter_correction(linear_grid):
    # t_norm(v) = 1/(4c) with c = 1; every entry in [2/3, 2] and the norm within 12 c^2
    v = seq(linear_grid, [0, 0.125, 0, 0.125, 0]) * (0.25 / t_norm(seq(linear_grid, [0, 0.125, 0, 0.125, 0])))
    assert t_norm(v) == pytest.approx(0.25)
    r = reciprocal_difference(linear_grid, (1,), v)
    assert np.all((r.entries().real >= 2 / 3) & (r.entries().real <= 2))
    assert t_norm(r) <= 12.0


def test_maryland_reciprocal_k2_within_certified_bound():
    from kam_spectra import certify
    w = Window(1, 20)
    model, _ = certify(SpectrumModel.maryland(), w)
    grid = SpectralGrid(model, w)
    r = reciprocal_difference(grid, (2,))
    assert t_norm(r) <= 12 * model.c**2 * 2 ** (2 * model.gamma)


def test_reciprocal_uses_accurate_gaps():
    # the stored gap equals the direct difference where that difference is well conditioned
    model = SpectrumModel.maryland()
    grid = SpectralGrid(model, Window(1, 10))
    g, m = grid.gap((3,))
    lam = grid.lam
    direct = shift_grid(lam, (3,)) - lam
    assert np.allclose(g[m], direct[m], rtol=1e-9, atol=1e-9)


# -- properties ---------------------------------------------------------------------


_MODELS = [LINEAR, SpectrumModel.maryland(), SpectrumModel(1, (0.7548776662,), "cubic", beta=0.5)]
_GRIDS = [SpectralGrid(m, Window(1, 6)) for m in _MODELS]

vectors = st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                   min_size=13, max_size=13)


@settings(max_examples=60, deadline=None)
@given(a=vectors, b=vectors, which=st.integers(0, 2))
def test_submultiplicative(a, b, which):
    grid = _GRIDS[which]
    A, B = seq(grid, a), seq(grid, b)
    assert t_norm(A * B) <= t_norm(A) * t_norm(B) * (1 + 1e-12) + 1e-300


@settings(max_examples=60, deadline=None)
@given(a=vectors, k=st.integers(-6, 6), which=st.integers(0, 2))
def test_shift_isometry_on_common_domain(a, k, which):
    grid = _GRIDS[which]
    A = seq(grid, a)
    S = shift(A, (k,))
    back = A.restrict(shift_grid(S.domain, (-k,), fill=False))
    assert t_norm(S) == pytest.approx(t_norm(back), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(a=vectors, which=st.integers(0, 2))
def test_norm_dominates_sup(a, which):
    A = seq(_GRIDS[which], a)
    assert t_norm(A) >= A.sup()
    assert difference_part(A) >= 0
