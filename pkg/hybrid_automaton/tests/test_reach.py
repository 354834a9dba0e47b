"""
Tests for interval propagation and Split-and-Combine reachability.
"""

import numpy as np
import pytest

from conftest import linear_oracle_net
from hybrid_automaton.automaton import HybridAutomaton, simulate, single_network_automaton
from hybrid_automaton.exceptions import FragmentOverflowError, InvalidArgumentError, ReachStepError
from hybrid_automaton.geometry import Box, locate
from hybrid_automaton.nn import Activation, Architecture, Layer, NeuralNet, forward, init_network
from hybrid_automaton.reach import (
    ExteriorMode,
    Fragment,
    MergePolicy,
    ReachConfig,
    ReachSet,
    combine,
    interval_forward,
    monte_carlo_violations,
    reach,
    reach_single,
    simulate_batch,
    split,
    step_reach,
)


def constant_net(value) -> NeuralNet:
    """Maps every (x, u) in R^3 to ``value``."""
    return NeuralNet(layers=(Layer(weights=np.zeros((2, 3)), bias=value, activation=Activation.IDENTITY),))


class TestIntervalForward:
    """Tests for interval_forward."""

    @pytest.mark.parametrize("activation", [Activation.TANH, Activation.RELU])
    def test_sound_on_samples(self, activation):
        """Test that sampled outputs never leave the propagated box."""
        rng = np.random.Generator(np.random.PCG64(12))
        net = init_network(Architecture.shallow(3, [16, 8], 2, activation), rng)
        in_box = Box(lo=[-0.5, 1.0, -1.3], hi=[0.5, 1.5, 1.7])
        out_box = interval_forward(net, in_box)
        outputs = forward(net, in_box.sample(rng, 2000))
        assert np.all(outputs >= out_box.lo) and np.all(outputs <= out_box.hi)

    def test_sound_on_corners(self):
        """Test that the outputs at the box corners are enclosed."""
        rng = np.random.Generator(np.random.PCG64(1))
        net = init_network(Architecture.shallow(3, 10, 2), rng)
        in_box = Box(lo=[-1.0, -2.0, 0.0], hi=[1.0, 2.0, 0.5])
        out_box = interval_forward(net, in_box)
        for corner in np.array(np.meshgrid(*in_box.bounds())).T.reshape(-1, 3):
            assert out_box.contains(forward(net, corner))

    def test_point_box_is_exact(self):
        """Test that a zero-width box propagates bit for bit like forward."""
        rng = np.random.Generator(np.random.PCG64(3))
        net = init_network(Architecture.shallow(3, 20, 2), rng)
        x = np.array([0.123, -2.5, 0.7])
        out_box = interval_forward(net, Box.point(x))
        expected = forward(net, x)
        assert np.array_equal(out_box.lo, expected)
        assert np.array_equal(out_box.hi, expected)

    def test_linear_map_is_tight(self):
        """Test that a single affine layer gives the exact image up to rounding slack."""
        net = linear_oracle_net()
        out_box = interval_forward(net, Box(lo=[0.0, 0.0, 0.0], hi=[1.0, 1.0, 1.0]))
        # row 1: 0.9 x1 + 0.2 x2 + 0.1 u, row 2: -0.2 x1 + 0.9 x2 + 0.05 u
        assert out_box.lo == pytest.approx(np.array([0.0, -0.2]), abs=1e-12)
        assert out_box.hi == pytest.approx(np.array([1.2, 0.95]), abs=1e-12)

    def test_dimension_checked(self):
        """Test that the box must match the network input."""
        with pytest.raises(InvalidArgumentError):
            interval_forward(linear_oracle_net(), Box(lo=[0.0, 0.0], hi=[1.0, 1.0]))


class TestSplit:
    """Tests for split."""

    def test_box_inside_one_cell(self, grid_partition):
        """Test that a box strictly inside a cell yields one fragment."""
        result = split(Box(lo=[-3.5, -2.5], hi=[-3.0, -2.0]), grid_partition)
        assert [f.cell for f in result.fragments] == [0]
        assert result.escaped_volume == 0.0

    def test_straddling_box_volume_preserved(self, grid_partition):
        """Test that fragments of a straddling box add up to its volume."""
        box = Box(lo=[-1.0, -2.0], hi=[3.0, 2.0])
        result = split(box, grid_partition)
        assert sorted({f.cell for f in result.fragments}) == [1, 2, 3, 5, 6, 7, 9, 10, 11]
        assert sum(f.box.volume for f in result.fragments) == pytest.approx(box.volume)
        for fragment in result.fragments:
            assert grid_partition.cells[fragment.cell].contains_box(fragment.box)

    def test_junction_box_yields_four_fragments(self, grid_partition):
        """Test that a box centred on a four-cell corner is cut into one quarter per cell."""
        box = Box(lo=[-0.5, -1.5], hi=[0.5, -0.5])
        result = split(box, grid_partition)
        assert [f.cell for f in result.fragments] == [1, 2, 5, 6]
        assert [f.box.volume for f in result.fragments] == pytest.approx([0.25] * 4)
        assert result.fragments[0].box == Box(lo=[-0.5, -1.5], hi=[0.0, -1.0])

    def test_face_box_belongs_to_upper_cell(self, grid_partition):
        """Test that a box lying on a shared face is kept only for the cell that owns the face."""
        result = split(Box(lo=[-2.0, -2.5], hi=[-2.0, -2.0]), grid_partition)
        assert [f.cell for f in result.fragments] == [1]
        assert result.fragments[0].box.is_degenerate

    @pytest.mark.parametrize("point", [[-2.0, -2.0], [0.0, -1.0], [2.0, 1.0], [-4.0, 1.0], [4.0, -1.0]])
    def test_point_on_face_splits_into_owning_cell(self, grid_partition, point):
        """Test that a point on a cell face yields one fragment, in the cell locate picks."""
        for exterior in ExteriorMode:
            result = split(Box.point(point), grid_partition, exterior)
            assert [f.cell for f in result.fragments] == [locate(grid_partition, point).cell]

    def test_box_ending_on_face_keeps_both_cells(self, grid_partition):
        """Test that a box reaching a face from below still touches the cell above."""
        result = split(Box(lo=[-3.0, -2.5], hi=[-2.0, -2.0]), grid_partition)
        assert [f.cell for f in result.fragments] == [0, 1]
        assert result.fragments[1].box.is_degenerate

    def test_exterior_face_point_kept_in_both_cells(self, grid_partition):
        """Test that an exterior point level with a face stays with both nearest cells."""
        point = [-2.0, -5.0]
        result = split(Box.point(point), grid_partition, ExteriorMode.EXTEND)
        assert [f.cell for f in result.fragments] == [0, 1]
        assert locate(grid_partition, point).cell in {f.cell for f in result.fragments}

    def test_clip_reports_escaped_volume(self, grid_partition):
        """Test that clipping drops and measures the exterior part."""
        result = split(Box(lo=[3.0, 0.0], hi=[5.0, 0.5]), grid_partition, ExteriorMode.CLIP)
        assert [f.cell for f in result.fragments] == [7]
        assert result.fragments[0].box == Box(lo=[3.0, 0.0], hi=[4.0, 0.5])
        assert result.escaped_volume == pytest.approx(0.5)

    def test_extend_keeps_exterior_with_nearest_cell(self, grid_partition):
        """Test that extension assigns exterior mass to the outer cell."""
        result = split(Box(lo=[3.0, 0.0], hi=[5.0, 0.5]), grid_partition, ExteriorMode.EXTEND)
        assert [f.cell for f in result.fragments] == [7]
        assert result.fragments[0].box == Box(lo=[3.0, 0.0], hi=[5.0, 0.5])

    def test_fully_exterior_box(self, grid_partition):
        """Test that a box far outside is lost when clipping and kept when extending."""
        box = Box(lo=[10.0, 10.0], hi=[11.0, 11.0])
        assert split(box, grid_partition, ExteriorMode.CLIP).fragments == []
        assert [f.cell for f in split(box, grid_partition, ExteriorMode.EXTEND).fragments] == [11]

    def test_dimension_checked(self, grid_partition):
        """Test that box and partition dimensions must agree."""
        with pytest.raises(InvalidArgumentError):
            split(Box(lo=[0.0], hi=[1.0]), grid_partition)


class TestCombine:
    """Tests for combine."""

    def fragments(self):
        return [
            Fragment(cell=3, box=Box(lo=[2.0, -3.0], hi=[2.5, -2.5])),
            Fragment(cell=0, box=Box(lo=[-4.0, -3.0], hi=[-3.0, -2.0])),
            Fragment(cell=3, box=Box(lo=[3.0, -2.0], hi=[3.5, -1.5])),
        ]

    def test_per_cell_merge(self):
        """Test that per-cell merging keeps one hull per cell in cell order."""
        merged = combine(self.fragments(), MergePolicy.PER_CELL, max_fragments=10)
        assert [f.cell for f in merged] == [0, 3]
        assert merged[1].box == Box(lo=[2.0, -3.0], hi=[3.5, -1.5])

    def test_exact_union_keeps_all(self):
        """Test that exact union keeps every fragment, ordered by cell."""
        merged = combine(self.fragments(), MergePolicy.EXACT_UNION, max_fragments=10)
        assert [f.cell for f in merged] == [0, 3, 3]

    def test_exact_union_overflow(self):
        """Test that exceeding the cap raises FragmentOverflowError."""
        with pytest.raises(FragmentOverflowError) as excinfo:
            combine(self.fragments(), MergePolicy.EXACT_UNION, max_fragments=2)
        assert excinfo.value.count == 3
        assert excinfo.value.cap == 2

    def test_policy_from_string(self):
        """Test that the policy may be given by its name."""
        assert len(combine(self.fragments(), "per-cell-merge", max_fragments=10)) == 2


class TestReach:
    """Tests for step_reach and reach."""

    def test_reach_has_horizon_plus_one_steps(self, random_automaton, limit_cycle_params):
        """Test that K steps produce K + 1 fragment lists and timings."""
        cfg = ReachConfig(horizon=5, input_box=limit_cycle_params.input_box)
        result = reach(random_automaton, Box(lo=[0.5, 0.5], hi=[1.0, 1.0]), cfg)
        assert result.horizon == 5
        assert len(result.steps) == 6
        assert len(result.seconds) == 6
        assert all(seconds >= 0.0 for seconds in result.seconds)

    def test_zero_horizon(self, random_automaton, limit_cycle_params):
        """Test that a zero horizon returns only the split initial set."""
        cfg = ReachConfig(horizon=0, input_box=limit_cycle_params.input_box)
        result = reach(random_automaton, Box(lo=[-1.0, -0.5], hi=[1.0, 0.5]), cfg)
        assert len(result.steps) == 1
        assert sorted(f.cell for f in result.steps[0]) == [5, 6]

    def test_fragments_sorted_by_cell(self, random_automaton, limit_cycle_params):
        """Test that every step lists fragments in cell order."""
        cfg = ReachConfig(horizon=4, input_box=limit_cycle_params.input_box)
        result = reach(random_automaton, Box(lo=[-1.0, -1.0], hi=[1.0, 1.0]), cfg)
        for fragments in result.steps[1:]:
            cells = [f.cell for f in fragments]
            assert cells == sorted(cells)

    def test_degenerate_reach_matches_simulation(self, random_automaton):
        """Test that point initial and input sets reproduce simulate exactly."""
        x0, u = np.array([0.37, -0.81]), np.array([0.25])
        cfg = ReachConfig(horizon=25, input_box=Box.point(u))
        result = reach(random_automaton, Box.point(x0), cfg)
        trajectory = simulate(random_automaton, x0, np.tile(u, (25, 1))).trajectory
        for k, x in enumerate(trajectory):
            assert any(f.box == Box.point(x) for f in result.steps[k])

    def test_reach_from_face_point_replays_simulation(self, random_automaton):
        """Test that a point on a four-cell corner reaches exactly the simulated states, one fragment per step."""
        x0, u = np.array([0.0, -1.0]), np.array([0.5])
        cfg = ReachConfig(horizon=10, input_box=Box.point(u), merge_policy=MergePolicy.EXACT_UNION)
        result = reach(random_automaton, Box.point(x0), cfg)
        trajectory = simulate(random_automaton, x0, np.tile(u, (10, 1))).trajectory
        assert [f.cell for f in result.steps[0]] == [locate(random_automaton.partition, x0).cell]
        for k, x in enumerate(trajectory):
            assert [f.box for f in result.steps[k]] == [Box.point(x)]

    def test_sound_against_monte_carlo(self, random_automaton, limit_cycle_params):
        """Test that no simulated execution leaves the reachable set."""
        init = Box(lo=[0.8, -0.2], hi=[1.2, 0.2])
        cfg = ReachConfig(horizon=15, input_box=limit_cycle_params.input_box)
        result = reach(random_automaton, init, cfg)
        report = monte_carlo_violations(random_automaton, init, cfg.input_box, result, count=300, seed=8)
        assert report.total_violations == 0
        assert report.trajectories.shape == (300, 16, 2)

    def test_oracle_reach_contains_ground_truth(self, oracle_automaton, linear_traces, limit_cycle_params):
        """Test that the reach of the exact model encloses the true trajectories."""
        trace = linear_traces[0]
        cfg = ReachConfig(horizon=trace.steps, input_box=limit_cycle_params.input_box)
        result = reach(oracle_automaton, Box.point(trace.states[0]), cfg)
        for k, x in enumerate(trace.states):
            assert result.contains(k, x[None]).all()

    def test_exact_union_is_no_looser_than_merge(self, random_automaton, limit_cycle_params):
        """Test that exact union never covers more hull volume than per-cell merge."""
        init = Box(lo=[-0.5, -0.5], hi=[0.5, 0.5])
        exact = reach(
            random_automaton,
            init,
            ReachConfig(horizon=3, input_box=limit_cycle_params.input_box, merge_policy=MergePolicy.EXACT_UNION),
        )
        merged = reach(random_automaton, init, ReachConfig(horizon=3, input_box=limit_cycle_params.input_box))
        for k in range(4):
            assert exact.fragment_volume(k) >= 0.0
            assert np.all(exact.hull(k).lo >= merged.hull(k).lo - 1e-12)
            assert np.all(exact.hull(k).hi <= merged.hull(k).hi + 1e-12)

    def test_overflow_is_reported_with_step(self, random_automaton, limit_cycle_params):
        """Test that a fragment overflow surfaces as ReachStepError naming the step."""
        cfg = ReachConfig(
            horizon=3,
            input_box=limit_cycle_params.input_box,
            merge_policy=MergePolicy.EXACT_UNION,
            max_fragments=1,
        )
        with pytest.raises(ReachStepError) as excinfo:
            reach(random_automaton, Box(lo=[-1.0, -1.0], hi=[1.0, 1.0]), cfg)
        assert excinfo.value.step == 1
        assert isinstance(excinfo.value.error, FragmentOverflowError)

    def test_set_leaving_domain_is_clipped_away(self, grid_partition, limit_cycle_params):
        """Test that once clipping empties the set, later steps stay empty."""
        automaton = HybridAutomaton(
            partition=grid_partition,
            nets=[constant_net([100.0, 100.0])] * 12,
            transitions=(),
            input_box=limit_cycle_params.input_box,
        )
        cfg = ReachConfig(horizon=3, input_box=limit_cycle_params.input_box, exterior=ExteriorMode.CLIP)
        result = reach(automaton, Box(lo=[0.5, 0.5], hi=[1.0, 1.0]), cfg)
        assert result.steps[1:] == [[], [], []]
        assert result.hull(2) is None
        assert result.hull_volume(2) == 0.0

    def test_extend_follows_set_outside_domain(self, grid_partition, limit_cycle_params):
        """Test that the default exterior mode keeps states that leave the domain."""
        automaton = HybridAutomaton(
            partition=grid_partition,
            nets=[constant_net([100.0, 100.0])] * 12,
            transitions=(),
            input_box=limit_cycle_params.input_box,
        )
        cfg = ReachConfig(horizon=2, input_box=limit_cycle_params.input_box)
        result = reach(automaton, Box(lo=[0.5, 0.5], hi=[1.0, 1.0]), cfg)
        assert [f.cell for f in result.steps[1]] == [11]
        assert result.steps[1][0].box == Box.point([100.0, 100.0])

    def test_step_reach_rejects_empty(self, random_automaton, limit_cycle_params):
        """Test that a step needs at least one fragment."""
        cfg = ReachConfig(horizon=1, input_box=limit_cycle_params.input_box)
        with pytest.raises(InvalidArgumentError):
            step_reach(random_automaton, [], cfg.input_box, cfg)

    def test_initial_dimension_checked(self, random_automaton, limit_cycle_params):
        """Test that the initial box must match the state dimension."""
        cfg = ReachConfig(horizon=1, input_box=limit_cycle_params.input_box)
        with pytest.raises(InvalidArgumentError):
            reach(random_automaton, Box(lo=[0.0], hi=[1.0]), cfg)

    def test_config_validation(self, limit_cycle_params):
        """Test that negative horizons and caps are rejected."""
        with pytest.raises(InvalidArgumentError):
            ReachConfig(horizon=-1, input_box=limit_cycle_params.input_box)
        with pytest.raises(InvalidArgumentError):
            ReachConfig(horizon=1, input_box=limit_cycle_params.input_box, max_fragments=0)

    def test_config_to_dict(self, limit_cycle_params):
        """Test the JSON form of a reach configuration."""
        cfg = ReachConfig(horizon=7, input_box=limit_cycle_params.input_box, merge_policy="exact-union")
        data = cfg.to_dict()
        assert data["merge_policy"] == "exact-union"
        assert data["exterior"] == "extend"
        assert data["horizon"] == 7


class TestReachSingle:
    """Tests for reach_single and the monolithic baseline."""

    def test_matches_one_cell_automaton(self, grid_domain, limit_cycle_params):
        """Test that reach_single equals reach on a one-cell automaton."""
        net = init_network(Architecture.shallow(3, 6, 2), np.random.Generator(np.random.PCG64(2)))
        init = Box(lo=[0.0, 0.0], hi=[0.5, 0.5])
        u_box = limit_cycle_params.input_box
        single = reach_single(net, init, u_box, horizon=4, domain=grid_domain)
        automaton = single_network_automaton(net, grid_domain, u_box)
        direct = reach(automaton, init, ReachConfig(horizon=4, input_box=u_box))
        for k in range(5):
            assert [f.box for f in single.steps[k]] == [f.box for f in direct.steps[k]]
            assert len(single.steps[k]) == 1


class TestReachSet:
    """Tests for ReachSet queries and batch simulation."""

    def test_volumes_and_contains(self):
        """Test fragment volume, hull volume and point membership."""
        reach_set = ReachSet(
            steps=[[Fragment(0, Box(lo=[0.0, 0.0], hi=[1.0, 1.0])), Fragment(1, Box(lo=[2.0, 0.0], hi=[3.0, 1.0]))]]
        )
        assert reach_set.fragment_volume(0) == 2.0
        assert reach_set.hull_volume(0) == 3.0
        assert reach_set.contains(0, [[0.5, 0.5], [1.5, 0.5], [3.0, 1.0]]).tolist() == [True, False, True]

    def test_simulate_batch_matches_step(self, random_automaton):
        """Test that the batched step agrees with per-row simulation."""
        rng = np.random.Generator(np.random.PCG64(4))
        states = rng.uniform(-5.0, 5.0, size=(50, 2))
        inputs = rng.uniform(-1.3, 1.7, size=(50, 1))
        batch = simulate_batch(random_automaton, states, inputs)
        for row, x, u in zip(batch, states, inputs):
            assert np.allclose(row, simulate(random_automaton, x, u[None]).trajectory[1])
