"""
Tests for point variants, affine combination and the sup norm
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixiter.core.errors import DomainError, StructuralError
from fixiter.core.space import (
    Grid,
    GridFunction,
    Scalar,
    Vector,
    affine_combine,
    as_point,
    is_finite,
    steps_between,
    sup_distance,
    sup_norm,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
weights = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def grid_of(values, t_start=0.0, step=0.5):
    return Grid(GridFunction(t_start, t_start + step * (len(values) - 1), step, values))


class TestAffineCombine:
    def test_mann_first_row(self):
        result = affine_combine(Scalar(1000.0), Scalar(14.45128320), 0.5)
        assert result.value == pytest.approx(507.2256416, abs=1e-9)

    def test_arithmetic_identity(self):
        assert affine_combine(Scalar(2.0), Scalar(6.0), 0.25) == Scalar(3.0)

    def test_equal_points_are_fixed(self):
        p = Vector([1.5, -2.0, 7.25])
        assert affine_combine(p, p, 0.7) == p

    def test_endpoint_weights_are_exact(self):
        a, b = Scalar(0.1), Scalar(0.7)
        assert affine_combine(a, b, 0.0) is a
        assert affine_combine(a, b, 1.0) is b

    def test_grid_combination_keeps_geometry(self):
        a = grid_of([0.0, 2.0, 4.0])
        b = grid_of([2.0, 2.0, 0.0])
        result = affine_combine(a, b, 0.5)
        assert result.grid.same_geometry(a.grid)
        np.testing.assert_array_equal(result.grid.values, [1.0, 2.0, 2.0])

    @pytest.mark.parametrize("weight", [-0.1, 1.0000001, float("nan")])
    def test_weight_outside_unit_interval(self, weight):
        with pytest.raises(DomainError):
            affine_combine(Scalar(1.0), Scalar(2.0), weight)

    def test_dimension_mismatch(self):
        with pytest.raises(StructuralError):
            affine_combine(Vector([1.0, 2.0]), Vector([1.0, 2.0, 3.0]), 0.5)

    def test_variant_mismatch(self):
        with pytest.raises(StructuralError):
            affine_combine(Scalar(1.0), Vector([1.0]), 0.5)

    def test_grids_on_different_geometry(self):
        with pytest.raises(StructuralError):
            affine_combine(grid_of([1.0, 2.0, 3.0]), grid_of([1.0, 2.0, 3.0], t_start=1.0), 0.5)

    @given(finite, finite, weights)
    def test_result_lies_between_endpoints(self, a, b, w):
        value = affine_combine(Scalar(a), Scalar(b), w).value
        low, high = min(a, b), max(a, b)
        slack = 1e-9 * max(1.0, abs(a), abs(b))
        assert low - slack <= value <= high + slack


class TestSupDistance:
    def test_picard_s_first_row_error(self):
        assert sup_distance(Scalar(3.848449787), Scalar(3.0)) == pytest.approx(0.848449787, abs=1e-12)

    def test_identity(self):
        p = Vector([3.0, -1.0])
        assert sup_distance(p, p) == 0.0

    def test_grid_maximum_over_nodes(self):
        assert sup_distance(grid_of([1.0, 2.0, 5.0]), grid_of([1.0, 0.0, 4.0])) == 2.0

    def test_norm_of_zero_element(self):
        assert sup_norm(Vector([0.0, 0.0])) == 0.0
        assert sup_norm(Vector([0.0, -3.0])) == 3.0

    @given(
        st.lists(finite, min_size=3, max_size=3),
        st.lists(finite, min_size=3, max_size=3),
        st.lists(finite, min_size=3, max_size=3),
    )
    def test_symmetry_and_triangle_inequality(self, a, b, c):
        pa, pb, pc = Vector(a), Vector(b), Vector(c)
        ab = sup_distance(pa, pb)
        assert ab == sup_distance(pb, pa)
        assert ab <= sup_distance(pa, pc) + sup_distance(pc, pb) + 1e-12 * max(1.0, ab)

    @settings(max_examples=50)
    @given(st.integers(min_value=2, max_value=40), st.data())
    def test_triangle_inequality_on_grid_functions(self, count, data):
        values = st.lists(finite, min_size=count, max_size=count)
        x, y, z = (grid_of(data.draw(values), step=0.1) for _ in range(3))
        xy = sup_distance(x, y)
        assert xy <= sup_distance(x, z) + sup_distance(z, y) + 1e-12 * max(1.0, xy)


class TestGridFunction:
    def test_node_count_and_endpoints(self):
        g = GridFunction(-0.2, 0.4, 0.001, np.zeros(601))
        nodes = g.nodes()
        assert g.node_count == 601
        assert nodes[0] == -0.2 and nodes[-1] == 0.4

    def test_rejects_non_integer_span(self):
        with pytest.raises(StructuralError):
            GridFunction(0.0, 0.4, 0.3, np.zeros(3))

    def test_rejects_wrong_value_count(self):
        with pytest.raises(StructuralError):
            GridFunction(0.0, 1.0, 0.5, [1.0, 2.0])

    def test_values_are_read_only(self):
        g = GridFunction(0.0, 1.0, 0.5, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            g.values[0] = 5.0

    def test_steps_between(self):
        assert steps_between(0.0, 0.2, 0.001) == 200
        with pytest.raises(StructuralError):
            steps_between(0.0, 1.0, 0.0)


def test_as_point_lifts_plain_values():
    assert as_point(3) == Scalar(3.0)
    assert as_point([1.0, 2.0]) == Vector([1.0, 2.0])
    assert not is_finite(Scalar(float("inf")))
