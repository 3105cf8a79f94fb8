import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokpp.errors import ConfigurationError, DomainError, MisuseError
from stokpp.grid import (
    Field,
    GridSpec,
    field_from_csv,
    field_to_csv,
    log_gradient,
    make_initial_condition,
    read_field_binary,
    shift_frame,
    write_field_binary,
)


def grid_over(x0, xmax, dx=0.05):
    n = int(round((xmax - x0) / dx)) + 1
    return GridSpec(x0=x0, dx=dx, n=n)


class TestGridSpec:
    def test_coords(self):
        g = GridSpec(x0=-1.0, dx=0.5, n=5, frame_offset=2.0)
        assert np.allclose(g.coords(), [1.0, 1.5, 2.0, 2.5, 3.0])

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            GridSpec(x0=0.0, dx=0.0, n=5)
        with pytest.raises(ConfigurationError):
            GridSpec(x0=0.0, dx=0.1, n=2)

    def test_shifted(self):
        g = GridSpec(x0=0.0, dx=0.1, n=11)
        assert g.shifted(5).frame_offset == pytest.approx(0.5)


class TestInitialCondition:
    def test_values_at_reference_points(self):
        # profile is 1/2 at the origin, 1 at the junction, 1/4 one junction
        # distance past the origin (for unit decay rate)
        g = grid_over(-5.0, 5.0, dx=0.05)
        f = make_initial_condition(1.0, g)
        x = f.x
        assert f.values[np.argmin(np.abs(x - 0.0))] == pytest.approx(0.5)
        assert np.interp(math.log(2.0), x, f.values) == pytest.approx(0.25, abs=2e-4)
        # junction continuity: value approaches 1 from both sides
        j = np.argmin(np.abs(x + math.log(2.0)))
        assert f.values[j] == pytest.approx(1.0, abs=2e-3)
        assert np.all(f.values[: j - 1] == 1.0)

    def test_saturated_left_exponential_right(self):
        g = grid_over(-10.0, 10.0)
        f = make_initial_condition(2.0, g)
        x = f.x
        right = x > 0
        assert np.allclose(f.values[right], 0.5 * np.exp(-2.0 * x[right]))

    def test_junction_outside_grid(self):
        g = grid_over(0.5, 5.0)
        with pytest.raises(ConfigurationError):
            make_initial_condition(1.0, g)

    def test_bad_rate(self):
        g = grid_over(-5.0, 5.0)
        with pytest.raises(ConfigurationError):
            make_initial_condition(0.0, g)


class TestShiftFrame:
    def test_zero_cells_identity(self):
        g = grid_over(-2.0, 2.0)
        f = Field(g, np.exp(-g.coords() ** 2), time=1.5)
        out = shift_frame(f, 0, left_fill=1.0, right_fill_rate=1.0)
        assert out.grid == f.grid
        assert np.array_equal(out.values, f.values)
        assert out.time == f.time

    def test_constant_field_invariant(self):
        g = grid_over(0.0, 10.0)
        f = Field(g, np.ones(g.n))
        out = shift_frame(f, 10, left_fill=1.0, right_fill_rate=0.0)
        assert np.all(out.values == 1.0)
        assert out.grid.frame_offset == pytest.approx(10 * g.dx)

    def test_exponential_continuation(self):
        # continuation of e^{-x} must reproduce e^{-x} in physical coordinates
        g = grid_over(0.0, 10.0)
        f = Field(g, np.exp(-g.coords()))
        out = shift_frame(f, 5, left_fill=1.0, right_fill_rate=1.0)
        assert np.max(np.abs(out.values - np.exp(-out.x))) < 1e-12

    def test_overlap_preserved_bitwise(self):
        rng = np.random.default_rng(3)
        g = grid_over(0.0, 5.0)
        vals = np.sort(rng.uniform(0.1, 1.0, g.n))[::-1].copy()
        f = Field(g, vals)
        out = shift_frame(f, 7, left_fill=1.0, right_fill_rate=1.0)
        assert np.array_equal(out.values[: g.n - 7], vals[7:])

    def test_negative_shift_rejected(self):
        g = grid_over(0.0, 1.0)
        f = Field(g, np.ones(g.n))
        with pytest.raises(MisuseError):
            shift_frame(f, -1, 1.0, 1.0)


class TestLogGradient:
    def test_constant_profile(self):
        g = grid_over(0.0, 3.0)
        out = log_gradient(Field(g, np.full(g.n, 3.7)))
        assert np.all(out.values == 0.0)

    def test_exponential_rate(self):
        g = grid_over(0.0, 3.0, dx=0.05)
        f = Field(g, np.exp(-2.0 * g.coords()))
        out = log_gradient(f)
        # quotient-rule bias is 2*((2 dx)^2)/6 ~ 3.3e-3
        assert np.max(np.abs(out.values[1:-1] - 2.0)) < 5e-3

    def test_initial_condition_tail_rate(self):
        g = grid_over(-5.0, 5.0, dx=0.05)
        f = make_initial_condition(1.0, g)
        out = log_gradient(f)
        interior = (f.x > 0.5) & (f.x < 4.5)
        assert np.max(np.abs(out.values[interior] - 1.0)) < 1e-3

    def test_second_order_convergence(self):
        errs = []
        for dx in (0.1, 0.05):
            g = grid_over(0.0, 3.0, dx=dx)
            out = log_gradient(Field(g, np.exp(-2.0 * g.coords())))
            errs.append(np.max(np.abs(out.values[1:-1] - 2.0)))
        ratio = errs[0] / errs[1]
        assert 3.5 <= ratio <= 4.5

    def test_nonpositive_rejected(self):
        g = grid_over(0.0, 1.0)
        v = np.ones(g.n)
        v[3] = 0.0
        with pytest.raises(DomainError):
            log_gradient(Field(g, v))

    def test_power_of_two_scaling_exact(self):
        rng = np.random.default_rng(11)
        g = grid_over(0.0, 2.0)
        vals = rng.uniform(0.5, 2.0, g.n)
        base = log_gradient(Field(g, vals)).values
        scaled = log_gradient(Field(g, 4.0 * vals)).values
        assert np.array_equal(base, scaled)

    @given(c=st.floats(min_value=0.01, max_value=100.0, allow_nan=False))
    @settings(max_examples=30, deadline=None)
    def test_scaling_invariance(self, c):
        g = GridSpec(x0=0.0, dx=0.1, n=40)
        vals = np.exp(-1.3 * g.coords()) + 0.1
        base = log_gradient(Field(g, vals)).values
        scaled = log_gradient(Field(g, c * vals)).values
        assert np.allclose(base, scaled, rtol=1e-12, atol=1e-12)


class TestSerialization:
    def test_csv_roundtrip(self, tmp_path):
        g = grid_over(-1.0, 1.0)
        f = Field(g, np.exp(-g.coords() ** 2))
        path = tmp_path / "field.csv"
        field_to_csv(f, path)
        back = field_from_csv(path)
        assert np.array_equal(back.values, f.values)
        assert np.allclose(back.x, f.x)

    def test_binary_roundtrip(self, tmp_path):
        g = GridSpec(x0=-3.0, dx=0.25, n=17, frame_offset=4.5)
        f = Field(g, np.linspace(1.0, 0.0, 17), time=12.25)
        path = tmp_path / "field.bin"
        write_field_binary(f, path)
        back = read_field_binary(path)
        assert back.grid == f.grid
        assert back.time == f.time
        assert np.array_equal(back.values, f.values)

    def test_binary_layout_is_little_endian(self, tmp_path):
        g = GridSpec(x0=1.0, dx=0.5, n=3, frame_offset=0.0)
        f = Field(g, np.array([3.0, 2.0, 1.0]), time=7.0)
        path = tmp_path / "field.bin"
        write_field_binary(f, path)
        raw = path.read_bytes()
        header = np.frombuffer(raw[:40], dtype=[("x0", "<f8"), ("dx", "<f8"), ("n", "<i8"),
                                                ("off", "<f8"), ("t", "<f8")])[0]
        assert header["x0"] == 1.0 and header["dx"] == 0.5 and header["n"] == 3
        assert header["t"] == 7.0
        assert np.array_equal(np.frombuffer(raw[40:], dtype="<f8"), [3.0, 2.0, 1.0])
