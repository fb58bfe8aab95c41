import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uuvlab.control import (
    AttitudeController,
    adapt_update,
    controller_step,
    controller_step_state,
    pid_output,
    s_surface_output,
)
from uuvlab.mathcore import RigidBodyState, euler_to_quat

real = st.floats(-3, 3, allow_nan=False)


def sigmoid_form(z1, z2, e, ed, du=0.0):
    return 2.0 / (1.0 + math.exp(-z1 * e - z2 * ed)) - 1.0 + du


def test_s_surface_examples():
    assert s_surface_output(4, 2, 0.0, 0.0) == 0.0
    assert s_surface_output(4, 2, 0.0, 0.0, 0.1) == pytest.approx(0.1, abs=1e-15)
    assert s_surface_output(2, 1, 0.5, -0.2) == pytest.approx(0.37995, abs=1e-5)
    assert s_surface_output(2, 1, 0.5, -0.2) == pytest.approx(math.tanh(0.4), abs=1e-15)


@given(st.floats(0.1, 10), st.floats(0.1, 10), real, real, st.floats(-0.5, 0.5))
def test_s_surface_matches_sigmoid_form(z1, z2, e, ed, du):
    assert s_surface_output(z1, z2, e, ed, du) == pytest.approx(sigmoid_form(z1, z2, e, ed, du), abs=1e-12)


@given(st.floats(0.1, 10), st.floats(0.1, 10), real, real, st.floats(0.01, 1), st.floats(-0.5, 0.5))
def test_s_surface_monotone_and_bounded(z1, z2, e, ed, h, du):
    u = s_surface_output(z1, z2, e, ed, du)
    assert s_surface_output(z1, z2, e + h, ed, du) >= u
    assert s_surface_output(z1, z2, e, ed + h, du) >= u
    assert -1.0 + du <= u <= 1.0 + du


def test_adapt_examples():
    assert adapt_update(0.05, 0.01, 0.3, 0.6) == pytest.approx(0.053, abs=1e-15)
    assert adapt_update(0.05, 0.01, 0.3, 0.0) == 0.05
    assert adapt_update(0.05, 0.0, 0.3, -0.7) == 0.05
    assert adapt_update(0.49, 0.1, 1.0, 1.0) == 0.5


def test_adapt_nondecreasing_for_positive_error_and_output():
    du = 0.0
    seq = []
    for _ in range(300):
        du = adapt_update(du, 0.02, 0.4, 0.3 + du)
        seq.append(du)
    assert np.all(np.diff(seq) >= 0) and seq[-1] == 0.5


def test_pid_examples():
    u, i = pid_output(0, 0, 0, 0.0, 0.0, 0.0, 0.01)
    assert u == 0 and i == 0
    u, _ = pid_output(1, 0, 0, 0.0, 0.4, 0.0, 0.01)
    assert u == pytest.approx(0.4)
    integ = 0.0
    for _ in range(1000):
        u, integ = pid_output(0.0, 1.0, 0.0, integ, 1.0, 0.0, 0.01, i_max=0.5)
    assert integ == 0.5 and u == pytest.approx(0.5)
    u, _ = pid_output(10, 0, 0, 0.0, 1.0, 0.0, 0.01)
    assert u == 1.0


def level_state(depth=1.0, euler=(0.0, 0.0, 0.0)):
    return RigidBodyState.at_rest(position=(0.0, 0.0, depth), orientation=euler_to_quat(euler))


@pytest.mark.parametrize("kind", ["pid", "ssurface", "assurface"])
def test_fixed_point_zero_wrench(kind):
    c = AttitudeController.default(kind)
    f, t, c2 = controller_step_state(c, {"roll": 0, "pitch": 0, "yaw": 0, "depth": 1.0}, level_state(), 0.02)
    assert not np.any(f) and not np.any(t)
    np.testing.assert_array_equal(c2.du, c.du)


def test_yaw_torque_example():
    c = AttitudeController.default("ssurface", zeta1=(2, 2, 2, 2), zeta2=(1, 1, 1, 1))
    f, t, _ = controller_step_state(c, {"roll": 0, "pitch": 0, "yaw": 0.5, "depth": 1.0}, level_state(), 0.02)
    assert t[2] == pytest.approx(2 * math.tanh(0.5), abs=1e-12)
    assert t[2] == pytest.approx(0.9242, abs=1e-4)
    np.testing.assert_allclose(t[:2], 0.0, atol=1e-15)
    np.testing.assert_allclose(f, 0.0, atol=1e-15)


def test_yaw_wrap():
    c = AttitudeController.default("ssurface", zeta1=(2, 2, 2, 2), zeta2=(1, 1, 1, 1))
    s = level_state(euler=(0, 0, -3.1))
    _, t, _ = controller_step_state(c, {"roll": 0, "pitch": 0, "yaw": 3.1, "depth": 1.0}, s, 0.02)
    # error is -0.0832 rad, not +6.2
    assert t[2] == pytest.approx(2 * math.tanh(0.5 * 2 * (6.2 - 2 * math.pi)), abs=1e-9)
    assert t[2] < 0


def test_depth_channel_heave_direction():
    c = AttitudeController.default("ssurface")
    f, _, _ = controller_step_state(c, {"roll": 0, "pitch": 0, "yaw": 0, "depth": 2.0}, level_state(1.0), 0.02)
    # deeper setpoint pushes down (+z world = +z body when level)
    assert f[2] > 0 and abs(f[0]) < 1e-15


def test_batched_matches_single(rng):
    n = 7
    c = AttitudeController.default("assurface", batch=n)
    sp = rng.uniform(-1, 1, (n, 4))
    q = euler_to_quat(rng.uniform(-0.5, 0.5, (n, 3)))
    depth = rng.uniform(0, 2, n)
    v, w = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    out = controller_step(c, sp, q, depth, v, w, 0.02)
    for j in range(n):
        cj = AttitudeController.default("assurface")
        o = controller_step(cj, sp[j], q[j], depth[j], v[j], w[j], 0.02)
        np.testing.assert_array_equal(o.torque, out.torque[j])
        np.testing.assert_array_equal(o.force, out.force[j])


def test_set_get_and_unknown_kind():
    c = AttitudeController.default("assurface").set("yaw", "zeta1", 7.5)
    assert c.get("yaw", "zeta1") == 7.5 and c.get("roll", "zeta1") == 4.0
    with pytest.raises(ValueError):
        AttitudeController.default("mpc")
