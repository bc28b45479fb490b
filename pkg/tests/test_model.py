import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haptosim.mesh import build_structured_mesh, interpolate
from haptosim.model import (
    InitialData,
    MeshMismatchError,
    NonnegativityWarning,
    ParameterError,
    Parameters,
    SimState,
    corner_gaussian_initial_data,
    initial_data_family,
    interpolate_initial_state,
    rescale_to_unit_chi_eps,
    w_diagnostic,
)

UNIT = ((0.0, 1.0), (0.0, 1.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(theta=1.5),
        dict(theta=-0.1),
        dict(beta=0.0),
        dict(beta=1.2),
        dict(dt=0.0),
        dict(mu=-1.0),
        dict(chi=-0.5),
        dict(epsilon=0.0),
        dict(tol_fp=0.0),
        dict(max_fp_iters=0),
        dict(t_final=-2.0),
        dict(alpha=math.inf),
    ],
)
def test_parameter_validation(kwargs):
    with pytest.raises(ParameterError):
        Parameters(**kwargs)


def test_parameter_defaults_match_documented_setup():
    p = Parameters()
    assert (p.alpha, p.epsilon, p.theta, p.dt, p.t_final, p.beta) == (
        10.0, 0.2, 0.5, 1.0, 50.0, 0.5,
    )
    assert p.tol_fp == 1e-8
    assert p.max_fp_iters == 100


def test_initial_data_at_origin_and_far_field():
    data = corner_gaussian_initial_data()
    origin = np.zeros(2)
    assert data.u0(origin) == 1.0
    assert data.c0(origin) == 0.5
    assert data.p0(origin) == 0.5
    far = np.array([40.0, 40.0])
    assert data.u0(far) == pytest.approx(0.0, abs=1e-300)
    assert data.c0(far) == 1.0
    assert data.p0(far) == pytest.approx(0.0, abs=1e-300)


@given(
    x=st.floats(-5, 5), y=st.floats(-5, 5), z=st.floats(-5, 5),
    three_d=st.booleans(),
)
@settings(max_examples=50, deadline=None)
def test_initial_data_pointwise_identities(x, y, z, three_d):
    data = corner_gaussian_initial_data()
    point = np.array([x, y, z] if three_d else [x, y])
    assert data.c0(point) == 1.0 - data.p0(point)
    assert data.p0(point) == 0.5 * data.u0(point)


def test_initial_family_lookup():
    assert initial_data_family("corner-gaussian").name == "corner-gaussian"
    with pytest.raises(ParameterError):
        initial_data_family("no-such-family")


def test_interpolate_initial_state_warns_on_negative_data():
    mesh = build_structured_mesh(2, UNIT, (1, 1), 0)
    data = InitialData("bad", lambda x: -1.0, lambda x: 1.0, lambda x: 0.0)
    with pytest.warns(NonnegativityWarning):
        state = interpolate_initial_state(data, mesh)
    assert state.t == 0.0


def test_sim_state_requires_shared_mesh():
    mesh_a = build_structured_mesh(2, UNIT, (1, 1), 0)
    mesh_b = build_structured_mesh(2, UNIT, (1, 1), 0)
    u = interpolate(lambda x: 1.0, mesh_a)
    c = interpolate(lambda x: 1.0, mesh_a)
    p = interpolate(lambda x: 1.0, mesh_b)
    with pytest.raises(MeshMismatchError):
        SimState(0.0, u, c, p)


def test_w_diagnostic_values():
    mesh = build_structured_mesh(2, UNIT, (1, 1), 0)
    u = interpolate(lambda x: 1.0, mesh)
    c_zero = interpolate(lambda x: 0.0, mesh)
    np.testing.assert_array_equal(w_diagnostic(u, c_zero, 10.0).coeffs, u.coeffs)

    u_zero = interpolate(lambda x: 0.0, mesh)
    c_half = interpolate(lambda x: 0.5, mesh)
    np.testing.assert_array_equal(w_diagnostic(u_zero, c_half, 10.0).coeffs, 0.0)

    w = w_diagnostic(u, c_half, 10.0)
    np.testing.assert_allclose(w.coeffs, math.exp(-5.0), rtol=1e-15)

    other = build_structured_mesh(2, UNIT, (1, 1), 1)
    with pytest.raises(MeshMismatchError):
        w_diagnostic(u, interpolate(lambda x: 0.0, other), 10.0)


@given(
    u=st.floats(1e-3, 5.0),
    c1=st.floats(0.0, 2.0),
    dc=st.floats(1e-6, 2.0),
    alpha=st.floats(0.1, 20.0),
)
@settings(max_examples=50, deadline=None)
def test_w_diagnostic_monotone_in_matrix_density(u, c1, dc, alpha):
    mesh = build_structured_mesh(2, UNIT, (1, 1), 0)
    uf = interpolate(lambda x: u, mesh)
    low = w_diagnostic(uf, interpolate(lambda x: c1, mesh), alpha)
    high = w_diagnostic(uf, interpolate(lambda x: c1 + dc, mesh), alpha)
    assert np.all(high.coeffs < low.coeffs)


def test_rescaling_identity_when_already_unit():
    params = Parameters(alpha=10.0, chi=1.0, mu=1.0, epsilon=1.0)
    initial = corner_gaussian_initial_data()
    extents = ((0.0, 20.0), (0.0, 20.0))
    scaled = rescale_to_unit_chi_eps(params, extents, initial)
    assert scaled.params == params
    assert scaled.extents == extents
    x = np.array([1.3, 2.7])
    assert scaled.initial.u0(x) == initial.u0(x)
    assert scaled.initial.c0(x) == initial.c0(x)


def test_rescaling_documented_example():
    params = Parameters(alpha=10.0, chi=0.01, mu=0.5, epsilon=0.2, dt=1.0, t_final=50.0)
    extents = ((0.0, 20.0), (0.0, 20.0))
    scaled = rescale_to_unit_chi_eps(params, extents, corner_gaussian_initial_data())
    assert scaled.params.alpha == pytest.approx(0.5, rel=1e-15)
    assert scaled.params.mu == pytest.approx(0.1, rel=1e-15)
    assert scaled.params.chi == 1.0
    assert scaled.params.epsilon == 1.0
    assert scaled.params.dt == pytest.approx(5.0, rel=1e-15)
    assert scaled.extents[0][1] == pytest.approx(200.0, rel=1e-15)
    assert scaled.time_factor == pytest.approx(5.0, rel=1e-15)


def test_rescaling_requires_positive_chi():
    params = Parameters(chi=0.0)
    with pytest.raises(ParameterError):
        rescale_to_unit_chi_eps(params, ((0.0, 1.0), (0.0, 1.0)),
                                corner_gaussian_initial_data())


@given(
    chi=st.floats(0.01, 8.0),
    eps=st.floats(0.05, 4.0),
    alpha=st.floats(0.5, 20.0),
    mu=st.floats(0.01, 3.0),
)
@settings(max_examples=40, deadline=None)
def test_rescaling_is_involutive(chi, eps, alpha, mu):
    params = Parameters(alpha=alpha, chi=chi, mu=mu, epsilon=eps)
    extents = ((0.0, 20.0), (0.0, 20.0))
    initial = corner_gaussian_initial_data()
    scaled = rescale_to_unit_chi_eps(params, extents, initial)
    back_params, back_extents, back_initial = scaled.invert()

    assert back_params.alpha == pytest.approx(alpha, rel=1e-15)
    assert back_params.mu == pytest.approx(mu, rel=1e-15)
    assert back_params.chi == chi
    assert back_params.epsilon == eps
    assert back_params.dt == pytest.approx(params.dt, rel=1e-15)
    for (lo, hi), (blo, bhi) in zip(extents, back_extents):
        assert blo == pytest.approx(lo, abs=1e-15)
        assert bhi == pytest.approx(hi, rel=1e-15)

    # the coordinate round trip x -> sqrt(chi) x -> x carries ~1 ulp, which
    # exp(-|x|^2) amplifies by 2|x|^2; keep |x| moderate and budget for it
    mesh = build_structured_mesh(2, ((0.0, 4.0), (0.0, 4.0)), (2, 2), 0)
    for original_f, back_f in (
        (initial.u0, back_initial.u0),
        (initial.c0, back_initial.c0),
        (initial.p0, back_initial.p0),
    ):
        for x in mesh.node_coords:
            a, b = original_f(x), back_f(x)
            assert b == pytest.approx(a, rel=5e-14, abs=1e-300)


def test_rescaled_initial_data_formulas():
    params = Parameters(chi=4.0, epsilon=0.5)
    initial = corner_gaussian_initial_data()
    scaled = rescale_to_unit_chi_eps(params, ((0.0, 2.0), (0.0, 2.0)), initial)
    x = np.array([0.7, 0.3])
    # stretched coordinates carry sqrt(chi), amplitudes carry epsilon
    assert scaled.initial.u0(x) == pytest.approx(initial.u0(2.0 * x), rel=1e-15)
    assert scaled.initial.c0(x) == pytest.approx(0.5 * initial.c0(2.0 * x), rel=1e-15)
    assert scaled.initial.p0(x) == pytest.approx(0.5 * initial.p0(2.0 * x), rel=1e-15)
