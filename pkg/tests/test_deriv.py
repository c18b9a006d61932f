import numpy as np
import pytest

from conftest import chain_spec, loop_spec
from gnet.core import layered_network, solve
from gnet.deriv import (
    assemble_gradient,
    build_omega,
    derivative_bundle,
    drho_dw,
    extended_derivatives,
    extended_gradient,
    gamma_vectors,
    loss,
    rho_jacobian,
    sample_gradient,
    weight_index,
)
from gnet.errors import InvalidInputError, ShapeError, SingularSystemError
from gnet.oracle import finite_diff_gradient, random_instance


def _slot(spec, sign, u, v):
    return weight_index(spec).index((sign, u, v))


# frozen hand derivation on the chain: d rho_3 / d w+_23 = 1/81, d rho_3 / d w+_12 = 10/81
def test_chain_hand_values():
    spec, a = chain_spec()
    st = solve(spec, a)
    jac = rho_jacobian(spec, st)
    assert jac[2, _slot(spec, "+", 1, 2)] == pytest.approx(1 / 81, abs=1e-14)
    assert jac[2, _slot(spec, "+", 0, 1)] == pytest.approx(10 / 81, abs=1e-14)
    assert jac[1, _slot(spec, "+", 0, 1)] == pytest.approx(5 / 81, abs=1e-14)


def test_gamma_entries_for_hidden_source():
    spec, a = chain_spec()
    st = solve(spec, a)
    gp, gm = gamma_vectors(spec, st, 1, 2)
    # u = 1 is hidden with denominator 2 + 0.25; v = 2 is the output with denominator 1
    np.testing.assert_allclose(gp, [0, -1 / 2.25, 1.0])
    np.testing.assert_allclose(gm, [0, -1 / 2.25, -2 / 9])


def test_gamma_for_output_source_has_no_rate_term():
    spec = loop_spec((0.2, 0.2))
    st = solve(spec, [])
    gp, gm = gamma_vectors(spec, st, 0, 1)
    assert gp[0] == 0 and gm[0] == 0
    assert gp[1] == pytest.approx(0.5)


def test_drho_dw_matches_jacobian_column():
    spec, inputs, _ = random_instance(3, recurrent=True)
    st = solve(spec, inputs[0])
    bundle = derivative_bundle(spec, st)
    jac = rho_jacobian(spec, st, bundle.resolvent)
    for m, (sign, u, v) in enumerate(bundle.weight_index):
        np.testing.assert_allclose(drho_dw(spec, st, bundle, sign, u, v), jac[:, m], atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_resolvent_identity(seed):
    spec, inputs, _ = random_instance(seed)
    st = solve(spec, inputs[0])
    omega, res = build_omega(spec, st)
    np.testing.assert_allclose((np.eye(spec.n) - omega) @ res, np.eye(spec.n), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_triangular_matches_dense(seed):
    spec, inputs, _ = random_instance(seed, recurrent=False)
    st = solve(spec, inputs[0])
    np.testing.assert_allclose(build_omega(spec, st, "triangular")[1], build_omega(spec, st, "dense")[1],
                               atol=1e-12)


def test_triangular_refuses_cycles():
    spec = loop_spec((0.2, 0.2))
    with pytest.raises(SingularSystemError):
        build_omega(spec, solve(spec, []), "triangular")


def test_saturated_columns_are_zeroed():
    spec, _ = chain_spec()
    st = solve(spec, [3.0])
    omega, _ = build_omega(spec, st)
    assert np.all(omega[:, 0] == 0)
    assert np.all(rho_jacobian(spec, st)[0] == 0)


@pytest.mark.parametrize("seed", range(25))
def test_gradient_matches_finite_differences(seed):
    spec, inputs, targets = random_instance(seed)
    g = assemble_gradient(spec, inputs, targets).grad
    fd = finite_diff_gradient(spec, inputs, targets)["weights"]
    scale = max(1.0, np.abs(fd).max())
    np.testing.assert_allclose(g, fd, atol=1e-6 * scale)


@pytest.mark.parametrize("seed", range(8))
def test_extended_gradient_matches_finite_differences(seed):
    spec, inputs, targets = random_instance(100 + seed, extended=True)
    params = ("weights", "lambda_plus", "lambda_minus", "r")
    g = extended_gradient(spec, inputs, targets)
    fd = finite_diff_gradient(spec, inputs, targets, params=params)
    for name in params:
        np.testing.assert_allclose(g[name], fd[name], atol=1e-6 * max(1.0, np.abs(fd[name]).max()),
                                   err_msg=name)


def test_inhibitory_sensitivity_sign_on_chain():
    spec, a = chain_spec()
    st = solve(spec, a)
    ext = extended_derivatives(spec, st)
    # raising inhibition of the hidden neuron lowers both it and the output
    assert ext.lambda_minus_jac[1, 1] < 0
    assert ext.lambda_minus_jac[2, 1] < 0
    assert ext.lambda_plus_jac[2, 1] > 0
    # output with no outgoing edges: d rho / d r = -T+ / r^2
    assert ext.rate_jac[2, 0] == pytest.approx(ext.rate_local[0])
    assert ext.rate_local[0] == pytest.approx(-2 / 9)


def test_gradient_is_jt_e_and_sums_samples():
    spec, inputs, targets = random_instance(11, samples=4)
    res = assemble_gradient(spec, inputs, targets)
    assert res.jacobian.shape == (4 * spec.n_outputs, spec.n_params)
    np.testing.assert_allclose(res.grad, res.jacobian.T @ res.residual)
    total = sum(sample_gradient(spec, solve(spec, a), b) for a, b in zip(inputs, targets))
    np.testing.assert_allclose(res.grad, total, atol=1e-14)
    # the residual is target minus prediction
    st = solve(spec, inputs[0])
    np.testing.assert_allclose(res.residual[:spec.n_outputs], targets[0] - st.rho[spec.outputs])


def test_gradient_shape_mismatch():
    spec = layered_network([2, 2, 1], 0)
    with pytest.raises(ShapeError):
        assemble_gradient(spec, np.zeros((3, 2)), np.zeros((2, 1)))
    with pytest.raises(ShapeError):
        assemble_gradient(spec, np.zeros((3, 3)), np.zeros((3, 1)))


def test_zero_gradient_at_perfect_fit():
    spec = layered_network([2, 3, 1], 1)
    inputs = np.array([[0.2, 0.4], [0.5, 0.1]])
    targets = np.array([[solve(spec, a).rho[spec.outputs][0]] for a in inputs])
    np.testing.assert_allclose(assemble_gradient(spec, inputs, targets).grad, 0, atol=1e-15)


def test_loss_examples():
    b = np.array([[1.0], [0.0]])
    p = np.array([[0.5], [0.5]])
    assert loss(b, p, "rss") == pytest.approx(0.5)
    assert loss(b, p) == pytest.approx(0.25)
    full = np.array([[9.0, 0.5], [9.0, 0.5]])
    assert loss(b, full, outputs=[1]) == pytest.approx(0.25)
    with pytest.raises(InvalidInputError):
        loss(np.zeros((0, 1)), np.zeros((0, 1)))
    with pytest.raises(ShapeError):
        loss(b, np.zeros((2, 2)))
