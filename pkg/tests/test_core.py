import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import chain_spec, loop_spec
from gnet.core import (
    NetworkSpec,
    Topology,
    check_stability,
    convert_ann,
    decode_binary,
    derive_rates,
    layered_network,
    neuron_output,
    solve,
    solve_feedforward,
    solve_fixed_point,
    spec_from_dict,
    spec_to_dict,
)
from gnet.errors import (
    DegenerateNeuronError,
    InvalidParameterError,
    NonConvergenceError,
    ShapeError,
    TopologyError,
)
from gnet.oracle import random_instance


# -- single neuron ------------------------------------------------------------

def test_neuron_zero_input():
    assert neuron_output(0, 5, 2).z == 0
    assert neuron_output(0, 5, 2, controlled=True).z == 0


def test_neuron_uncontrolled():
    out = neuron_output(1, 0, 2)
    assert out.z == pytest.approx(1.0)
    assert not out.saturated


def test_neuron_controlled_saturates():
    out = neuron_output(10, 0, 2, controlled=True)
    assert out.z == pytest.approx(2.0)
    assert out.saturated


def test_neuron_rejects_bad_rate():
    with pytest.raises(InvalidParameterError):
        neuron_output(1, 0, 0)


# -- rates ----------------------------------------------------------------------

def test_hidden_rate_is_outgoing_mass():
    wp = np.zeros((3, 3))
    wm = np.zeros((3, 3))
    wp[1, 2] = 1.0
    wm[1, 2] = 1.0
    wp[0, 1] = 0.5
    spec = NetworkSpec.build(("input", "hidden", "output"), wp, wm)
    assert spec.r[1] == 2.0
    assert spec.d[1] == 0.0


def test_sink_output_departs_with_probability_one(chain):
    assert chain.d[2] == 1.0


def test_output_departure_from_fixed_rate():
    wp = np.array([[0.0, 0.0], [1.0, 0.0]])
    spec = NetworkSpec.build(("input", "output"), wp + np.array([[0, 1.0], [0, 0]]), np.zeros((2, 2)),
                             r_output=4.0)
    assert spec.d[1] == pytest.approx(0.75)


def test_zero_outgoing_mass_is_degenerate():
    wp = np.zeros((3, 3))
    wp[0, 1] = 1.0
    with pytest.raises(DegenerateNeuronError) as info:
        NetworkSpec.build(("input", "hidden", "output"), wp, np.zeros((3, 3)),
                          mask=np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], bool))
    assert info.value.neuron == 1


def test_rate_floor_replaces_degenerate_rate():
    wp = np.zeros((3, 3))
    wp[0, 1] = 1.0
    mask = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], bool)
    spec = NetworkSpec.build(("input", "hidden", "output"), wp, np.zeros((3, 3)), mask=mask, rate_floor=1e-9)
    assert spec.r[1] == 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_routing_rows_sum_to_one(seed):
    spec, _, _ = random_instance(seed)
    pp, pm = spec.routing()
    np.testing.assert_allclose(pp.sum(axis=1) + pm.sum(axis=1) + spec.d, 1.0, atol=1e-12)


def test_rejects_negative_and_off_mask_weights():
    roles = ("input", "output")
    with pytest.raises(InvalidParameterError):
        NetworkSpec.build(roles, [[0, -1.0], [0, 0]], np.zeros((2, 2)))
    with pytest.raises(TopologyError):
        NetworkSpec.build(roles, [[0, 1.0], [0, 0]], np.zeros((2, 2)), mask=np.zeros((2, 2), bool))


def test_output_rate_below_outgoing_mass_is_rejected():
    wp = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(InvalidParameterError):
        NetworkSpec.build(("input", "output"), wp, np.zeros((2, 2)), r_output=1.0)


def test_r_output_shapes():
    spec = layered_network([2, 2, 2], 0, r_output=[0.5, 0.7])
    np.testing.assert_array_equal(spec.r[spec.outputs], [0.5, 0.7])
    with pytest.raises(ShapeError):
        layered_network([2, 2, 2], 0, r_output=[0.5, 0.7, 0.9])


def test_spec_arrays_are_read_only(chain):
    with pytest.raises(ValueError):
        chain.w_plus[0, 1] = 3.0


# -- solvers ---------------------------------------------------------------------

def test_chain_explicit_solution():
    spec, a = chain_spec()
    st_ = solve_feedforward(spec, a)
    np.testing.assert_allclose(st_.rho, [0.25, 1 / 9, 2 / 9], rtol=0, atol=1e-15)
    assert st_.residual == pytest.approx(0.0, abs=1e-15)
    assert not st_.saturated


def test_zero_pattern_gives_zero_activity():
    spec = layered_network([3, 4, 2], 1)
    assert np.all(solve(spec, np.zeros(3)).rho == 0)


def test_saturated_input_is_clamped():
    spec, _ = chain_spec()
    st_ = solve_feedforward(spec, [3.0])
    assert st_.rho[0] == 1.0
    assert 0 in st_.saturated
    assert st_.rho[1] == pytest.approx(1 / 3)
    assert np.all(st_.rho <= 1.0)


def test_cycle_rejected_by_sweep(loop):
    with pytest.raises(TopologyError):
        solve_feedforward(loop, [])


def test_fixed_point_matches_sweep_on_chain():
    spec, a = chain_spec()
    np.testing.assert_allclose(solve_fixed_point(spec, a).rho, solve_feedforward(spec, a).rho, atol=1e-12)


def test_mutual_loop_approaches_unit_load(loop):
    # independent scalar iteration of rho = (1 + rho) / 2
    x = 0.0
    for _ in range(200):
        x = min((1.0 + x) / 2.0, 1.0)
    st_ = solve_fixed_point(loop, [])
    np.testing.assert_allclose(st_.rho, [x, x], atol=1e-9)
    assert not check_stability(st_, loop).stable
    assert check_stability(st_, loop).unstable_neurons() == [0, 1]


def test_mutual_loop_closed_form():
    spec = loop_spec((0.2, 0.2))
    st_ = solve_fixed_point(spec, [])
    # rho = (0.2 + rho) / 2
    np.testing.assert_allclose(st_.rho, [0.2, 0.2], atol=1e-10)
    assert check_stability(st_, spec).stable


def test_non_convergence_carries_residual(loop):
    with pytest.raises(NonConvergenceError) as info:
        solve_fixed_point(loop, [], max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 0


def test_damped_iteration_reaches_same_point():
    spec = loop_spec((0.2, 0.2))
    np.testing.assert_allclose(solve_fixed_point(spec, [], damping=0.5).rho, [0.2, 0.2], atol=1e-9)


@pytest.mark.parametrize("seed", range(15))
def test_fixed_point_certificate(seed):
    spec, inputs, _ = random_instance(seed, recurrent=True)
    for a in inputs:
        st_ = solve_fixed_point(spec, a, tol=1e-12)
        free = ~st_.saturated_mask
        defect = np.abs(st_.rho * (spec.r + st_.t_minus) - st_.t_plus)[free]
        assert defect.max() <= 10 * 1e-12 * max(1.0, spec.r.max() + st_.t_minus.max())


def test_resolving_from_a_clamped_state_is_idempotent():
    spec, _ = chain_spec()
    first = solve_fixed_point(spec, [3.0])
    again = solve_fixed_point(spec, [3.0], rho0=first.rho)
    np.testing.assert_allclose(again.rho, first.rho, atol=1e-12)
    assert again.saturated == first.saturated


@given(st.integers(0, 10_000), st.integers(0, 2), st.floats(0.01, 0.5))
def test_excitatory_feedforward_is_monotone_in_input(seed, which, bump):
    # with inhibitory weights an input can lower downstream activity; the
    # monotone flow argument holds for excitatory-only networks
    rng = np.random.default_rng(seed)
    sizes = [3, int(rng.integers(1, 5)), int(rng.integers(1, 3))]
    spec = layered_network(sizes, rng)
    spec = spec.with_params(w_minus=np.zeros_like(spec.w_minus))
    a = rng.uniform(0, 1, 3)
    b = a.copy()
    b[which] += bump
    assert np.all(solve(spec, b).rho >= solve(spec, a).rho - 1e-15)


def test_stability_modes():
    spec, _ = chain_spec()
    st_ = solve_feedforward(spec, [0.5])
    assert check_stability(st_, spec).stable
    sat = solve_feedforward(spec, [3.0])
    assert check_stability(sat, spec).unstable_neurons() == [0]
    assert check_stability(sat, spec, mode="outputs").stable


def test_empty_input_network_is_stable():
    spec = layered_network([2, 3, 1], 3)
    assert check_stability(solve(spec, [0.0, 0.0]), spec).stable


# -- topology & layered builder ------------------------------------------------------

def test_topology_generations_and_roles():
    spec = layered_network([2, 3, 1], 0)
    topo = spec.topology
    assert topo.acyclic
    assert [list(g) for g in topo.generations] == [[0, 1], [2, 3, 4], [5]]
    assert spec.n_params == 2 * (2 * 3 + 3 * 1)
    assert Topology(("output", "output"), np.array([[0, 1], [1, 0]], bool)).generations is None


def test_input_output_role():
    topo = Topology(("input_output", "output"), np.array([[0, 1], [0, 0]], bool))
    assert topo.is_input.tolist() == [True, False]
    assert topo.is_output.tolist() == [True, True]


def test_layered_network_is_seeded():
    a = layered_network([2, 2, 1], 7)
    b = layered_network([2, 2, 1], 7)
    np.testing.assert_array_equal(a.weights_flat(), b.weights_flat())
    assert np.all((a.weights_flat() >= 0.1) & (a.weights_flat() <= 1.0))


def test_weights_flat_round_trip():
    spec = layered_network([2, 3, 1], 4)
    theta = spec.weights_flat() * 1.5
    np.testing.assert_array_equal(spec.with_weights_flat(theta).weights_flat(), theta)


# -- ANN conversion ---------------------------------------------------------------

def _ann():
    w = np.zeros((4, 4))
    w[0, 2] = 0.3
    w[0, 3] = 0.7
    w[1, 2] = -0.5
    w[2, 3] = 1.2
    w[1, 3] = 0.4
    return w, ("input", "input", "hidden", "output")


def test_convert_signs_and_rates():
    w, roles = _ann()
    spec, cuts = convert_ann(w, np.array([0, 0, 0.2, -0.1]), roles)
    assert spec.w_minus[1, 2] == 0.5 and spec.w_plus[1, 2] == 0.0
    assert spec.r[0] == pytest.approx(1.0)
    assert spec.lambda_minus[2] == pytest.approx(0.2)
    assert spec.lambda_plus[3] == pytest.approx(0.1)
    assert spec.d[3] == 1.0
    np.testing.assert_array_equal(cuts, 0.5)


def test_convert_degenerate_hidden_row():
    w, roles = _ann()
    w[2, 3] = 0.0
    with pytest.raises(DegenerateNeuronError):
        convert_ann(w, np.zeros(4), roles)


def test_convert_rejects_cycles():
    w, roles = _ann()
    w[3, 2] = 0.1
    with pytest.raises(TopologyError):
        convert_ann(w, np.zeros(4), roles)


def test_decode_binary():
    assert decode_binary([0.2, 0.8], [0.5, 0.5]).tolist() == [0, 1]


# -- serialization ----------------------------------------------------------------

def test_model_json_round_trip():
    spec = layered_network([2, 3, 1], 5, r_output=0.7)
    doc = json.loads(json.dumps(spec_to_dict(spec)))
    back = spec_from_dict(doc)
    np.testing.assert_array_equal(back.w_plus, spec.w_plus)
    np.testing.assert_array_equal(back.r, spec.r)
    assert back.roles == spec.roles


def test_model_version_checked():
    doc = spec_to_dict(layered_network([1, 1], 0))
    doc["version"] = 99
    with pytest.raises(InvalidParameterError):
        spec_from_dict(doc)


def test_derive_rates_is_idempotent():
    spec = layered_network([2, 3, 2], 2)
    again = derive_rates(spec)
    np.testing.assert_array_equal(again.r, spec.r)
    np.testing.assert_array_equal(again.d, spec.d)
