import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from namcert.model import UnivariateNet, forward_component
from namcert.pwl import PieceLimitError, PwlFunction, exact_extrema, propagate

from conftest import make_random_net


def double_hinge():
    # ReLU(z - 0.25) - ReLU(z - 0.75): flat 0, slope 1, flat 0.5
    return UnivariateNet.from_lists(
        [
            ([[1.0], [1.0]], [-0.25, -0.75]),
            ([[1.0, -1.0]], [0.0]),
        ]
    )


def cancelling():
    # ReLU(z) - ReLU(z) == 0
    return UnivariateNet.from_lists(
        [
            ([[1.0], [1.0]], [0.0, 0.0]),
            ([[1.0, -1.0]], [0.0]),
        ]
    )


class TestPropagate:
    def test_double_hinge_pieces(self):
        f = propagate(double_hinge(), (0.0, 1.0))
        assert f.n_pieces == 3
        assert f.slopes == pytest.approx((0.0, 1.0, 0.0))
        assert f.breakpoints == pytest.approx((0.0, 0.25, 0.75, 1.0))
        assert f(0.1) == pytest.approx(0.0)
        assert f(0.9) == pytest.approx(0.5)

    def test_cancellation_merges_to_one_piece(self):
        f = propagate(cancelling(), (-1.0, 1.0))
        assert f.n_pieces == 1
        assert f.slopes[0] == 0.0 and f.offsets[0] == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_dense_grid_agreement(self, seed):
        net = make_random_net(seed, hidden=(8, 8))
        f = propagate(net, (0.0, 1.0))
        for z in np.linspace(0.0, 1.0, 10_001):
            assert abs(f(float(z)) - forward_component(net, float(z))) <= 1e-7

    def test_continuity_at_breakpoints(self):
        net = make_random_net(42, hidden=(8, 8))
        f = propagate(net, (0.0, 1.0))
        for j in range(1, f.n_pieces):
            t = f.breakpoints[j]
            left = f.slopes[j - 1] * t + f.offsets[j - 1]
            right = f.slopes[j] * t + f.offsets[j]
            assert abs(left - right) <= 1e-9

    def test_piece_cap_errors(self):
        net = make_random_net(3, hidden=(8, 8))
        with pytest.raises(PieceLimitError):
            propagate(net, (0.0, 1.0), piece_cap=2)

    def test_degenerate_interval(self):
        net = make_random_net(5)
        f = propagate(net, (0.3, 0.3))
        assert f(0.3) == forward_component(net, 0.3)

    def test_rational_mode_matches_float(self):
        net = double_hinge()
        f1 = propagate(net, (0.0, 1.0))
        f2 = propagate(net, (0.0, 1.0), rational=True)
        assert f1.breakpoints == pytest.approx(f2.breakpoints, abs=1e-12)
        for z in np.linspace(0, 1, 101):
            assert f1(float(z)) == pytest.approx(f2(float(z)), abs=1e-12)


class TestExtrema:
    def test_double_hinge_extrema(self):
        ext = exact_extrema(propagate(double_hinge(), (0.0, 1.0)))
        assert ext.min == 0.0 and ext.argmin == 0.0  # tie-break to smallest z
        assert ext.max == pytest.approx(0.5)
        assert ext.argmax == pytest.approx(0.75)

    def test_monotone_pieces(self):
        f = PwlFunction(breakpoints=(0.0, 0.5, 1.0), slopes=(1.0, 2.0), offsets=(0.0, -0.5))
        ext = exact_extrema(f)
        assert (ext.argmin, ext.min) == (0.0, 0.0)
        assert (ext.argmax, ext.max) == (1.0, 1.5)

    @pytest.mark.parametrize("seed", range(8))
    def test_grid_lower_envelope(self, seed):
        net = make_random_net(100 + seed, hidden=(8, 8))
        f = propagate(net, (0.0, 1.0))
        ext = exact_extrema(f)
        zs = np.linspace(0.0, 1.0, 10_001)
        samples = [forward_component(net, float(z)) for z in zs]
        assert ext.min <= min(samples) + 1e-12
        assert ext.max >= max(samples) - 1e-12
        # the grid can overshoot the true extremum by at most Lipschitz * spacing
        lip = max(abs(s) for s in f.slopes)
        assert min(samples) - ext.min <= lip * (1.0 / 10_000) + 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), lo=st.floats(0.0, 0.8))
def test_pwl_matches_forward_everywhere(seed, lo):
    net = make_random_net(seed, hidden=(6, 4))
    hi = lo + 0.2
    f = propagate(net, (lo, hi))
    for z in np.linspace(lo, hi, 97):
        assert abs(f(float(z)) - forward_component(net, float(z))) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_extrema_bound_all_samples(seed):
    net = make_random_net(seed, hidden=(5, 5))
    f = propagate(net, (0.0, 1.0))
    ext = exact_extrema(f)
    rng = np.random.default_rng(seed)
    for z in rng.uniform(0, 1, 200):
        v = forward_component(net, float(z))
        assert ext.min - 1e-9 <= v <= ext.max + 1e-9
