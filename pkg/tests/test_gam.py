import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lncass.errors import DataError, DimensionError, ModelSpecError
from lncass.gam import KnotGrid, expand_design, phi, reconstruct_f


class TestKnotGrid:
    def test_equally_spaced(self):
        grid = KnotGrid.equally_spaced(5)
        assert np.allclose(grid.knots, [0.0, 0.2, 0.4, 0.6, 0.8])

    def test_first_knot_must_be_zero(self):
        with pytest.raises(ModelSpecError, match="first knot"):
            KnotGrid(np.array([0.1, 0.5]))

    def test_knots_strictly_increasing(self):
        with pytest.raises(ModelSpecError, match="increasing"):
            KnotGrid(np.array([0.0, 0.5, 0.5]))

    def test_knots_below_one(self):
        with pytest.raises(ModelSpecError):
            KnotGrid(np.array([0.0, 1.0]))


class TestPhi:
    def test_below_knot_is_zero(self):
        assert phi(0.3, 0.5) == 0.0

    def test_at_one_is_one_for_any_knot(self):
        for k in (0.0, 0.3, 0.5, 0.9):
            assert phi(1.0, k) == pytest.approx(1.0)

    def test_zero_knot_is_identity(self):
        for x in (0.0, 0.25, 0.7, 1.0):
            assert phi(x, 0.0) == pytest.approx(x)

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            phi(1.2, 0.5)
        with pytest.raises(DataError):
            phi(-0.1, 0.5)


class TestExpandDesign:
    def test_single_knot_returns_input(self):
        X = np.array([[0.1, 0.9], [0.4, 0.2]])
        out = expand_design(X, KnotGrid(np.array([0.0])))
        assert np.array_equal(out, X)

    def test_hand_evaluated_row(self):
        out = expand_design(np.array([[0.75]]), KnotGrid(np.array([0.0, 0.5])))
        assert np.allclose(out, [[0.75, 0.5]])

    def test_zero_input_zero_output(self):
        out = expand_design(np.zeros((3, 2)), KnotGrid.equally_spaced(4))
        assert np.all(out == 0.0)

    def test_out_of_range_lists_cells(self):
        X = np.array([[0.2, 1.4], [0.1, 0.3]])
        with pytest.raises(DataError, match=r"\(0, 1\)"):
            expand_design(X, KnotGrid.equally_spaced(3))

    def test_column_blocks_are_covariate_major(self):
        X = np.array([[0.75, 0.25]])
        out = expand_design(X, KnotGrid(np.array([0.0, 0.5])))
        assert np.allclose(out, [[0.75, 0.5, 0.25, 0.0]])


class TestReconstruct:
    def test_zero_weights_zero_function(self):
        grid = KnotGrid.equally_spaced(3)
        assert np.all(reconstruct_f(np.zeros(3), grid, np.linspace(0, 1, 7)) == 0)

    def test_first_weight_is_identity(self):
        grid = KnotGrid.equally_spaced(4)
        x = np.linspace(0, 1, 9)
        w = np.zeros(4)
        w[0] = 1.0
        assert np.allclose(reconstruct_f(w, grid, x), x)

    def test_hand_evaluated_value(self):
        grid = KnotGrid(np.array([0.0, 0.5]))
        out = reconstruct_f(np.array([1.0, 1.0]), grid, np.array([0.75]))
        assert out[0] == pytest.approx(1.25)

    def test_weight_length_checked(self):
        with pytest.raises(DimensionError):
            reconstruct_f(np.ones(2), KnotGrid.equally_spaced(3), np.array([0.5]))


@given(
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_expansion_matches_reconstruction(m, seed):
    rng = np.random.default_rng(seed)
    grid = KnotGrid.equally_spaced(m)
    weights = rng.normal(size=m)
    x = rng.uniform(0, 1, size=12)
    via_design = expand_design(x[:, None], grid) @ weights
    direct = reconstruct_f(weights, grid, x)
    assert np.allclose(via_design, direct, atol=1e-12, rtol=0)


@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**32 - 1))
def test_any_grid_function_is_exactly_representable(m, seed):
    # fit weights by least squares on M distinct points; round-trip recovers them
    rng = np.random.default_rng(seed)
    grid = KnotGrid.equally_spaced(m)
    w_true = rng.normal(size=m)
    x = (np.arange(m) + 0.7) / m  # one point strictly inside each knot interval
    basis = expand_design(x[:, None], grid)
    y = basis @ w_true
    w_fit, *_ = np.linalg.lstsq(basis, y, rcond=None)
    assert np.allclose(w_fit, w_true, atol=1e-8)


def test_reconstructed_function_vanishes_at_origin_and_is_piecewise_linear():
    rng = np.random.default_rng(5)
    grid = KnotGrid.equally_spaced(5)
    w = rng.normal(size=5)
    x = np.linspace(0, 1, 501)
    f = reconstruct_f(w, grid, x)
    assert f[0] == 0.0
    # second differences vanish except at the knots
    second = np.abs(np.diff(f, 2))
    interior_knots = grid.knots[1:]
    knot_bins = set(np.searchsorted(x, interior_knots))
    breaks = {i + 1 for i in np.nonzero(second > 1e-9)[0]}
    assert breaks <= {b for k in knot_bins for b in (k - 1, k, k + 1)}
