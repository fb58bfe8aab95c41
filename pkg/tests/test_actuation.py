from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uuvlab.actuation import (
    MAX_THRUST,
    MIN_THRUST,
    NEG_ZERO,
    POS_ZERO,
    ThrusterLayout,
    allocate,
    command_from_thrust,
    thrust_from_command,
)
from uuvlab.hydro import Wrench

TABLE_A = ["-1", "-0.9", "-0.75", "-0.6", "-0.5", "-0.4", "-0.25", "-0.1", "-0.08", "-0.05", "0", "0.05", "0.08", "0.1", "0.25", "0.4", "0.5", "0.6", "0.75", "1"]


def exact_curve(a: Fr) -> Fr:
    """Printed coefficients in exact rational arithmetic."""
    if a > Fr("0.08"):
        return Fr("29.54") * a * a + Fr("26.10") * a - Fr("2.44")
    if a < Fr("-0.08"):
        return Fr("-21.75") * a * a + Fr("21.75") * a + Fr("2.07")
    return Fr(0)


@pytest.mark.parametrize("a", TABLE_A)
def test_curve_table(a):
    assert thrust_from_command(float(a)) == pytest.approx(float(exact_curve(Fr(a))), abs=1e-12)


def test_curve_endpoints_and_deadband():
    assert thrust_from_command(1.0) == pytest.approx(53.20, abs=1e-12)
    assert thrust_from_command(-1.0) == pytest.approx(-41.43, abs=1e-12)
    assert thrust_from_command(0.05) == 0.0
    assert thrust_from_command(2.0) == thrust_from_command(1.0)


def test_branch_zeros():
    assert POS_ZERO == pytest.approx(0.0853, abs=1e-4)
    assert NEG_ZERO == pytest.approx(-0.0875, abs=1e-4)
    assert thrust_from_command(POS_ZERO) == pytest.approx(0.0, abs=1e-12)
    # deadband edge discontinuity evaluated verbatim
    assert thrust_from_command(0.0800001) == pytest.approx(-0.163, abs=1e-3)


def test_inverse_examples():
    assert command_from_thrust(0.0) == 0.0
    assert command_from_thrust(53.20) == pytest.approx(1.0, abs=1e-12)
    assert command_from_thrust(100.0) == 1.0
    assert command_from_thrust(-100.0) == -1.0


# the branch zeros themselves carry zero thrust, which maps to command 0
@given(st.floats(1e-6, 1.0))
def test_inverse_round_trip_positive(u):
    a = POS_ZERO + u * (1.0 - POS_ZERO)
    assert command_from_thrust(thrust_from_command(a)) == pytest.approx(a, abs=1e-9)


@given(st.floats(0.0, 1.0 - 1e-6))
def test_inverse_round_trip_negative(u):
    a = -1.0 + u * (1.0 + NEG_ZERO)
    assert command_from_thrust(thrust_from_command(a)) == pytest.approx(a, abs=1e-9)


@given(st.floats(MIN_THRUST, MAX_THRUST))
def test_thrust_round_trip(tau):
    assert thrust_from_command(command_from_thrust(tau)) == pytest.approx(tau, abs=1e-9)


def test_layout_rank_and_projection():
    L = ThrusterLayout.default()
    assert np.linalg.matrix_rank(L.allocation_matrix) == 6
    np.testing.assert_allclose(L.allocation_matrix @ L.pseudo_inverse, np.eye(6), atol=1e-12)


def test_layout_serialization_round_trip():
    L = ThrusterLayout.default()
    M = ThrusterLayout.from_dict(L.to_dict())
    np.testing.assert_array_equal(L.allocation_matrix, M.allocation_matrix)


def test_underactuated_layout_rejected():
    from uuvlab.actuation import Thruster

    with pytest.raises(ValueError, match="rank"):
        ThrusterLayout([Thruster((0.1 * i, 0, 0), (0, 0, 1)) for i in range(8)])


def test_zero_wrench():
    cmd, sat = allocate(np.zeros(6))
    assert not np.any(cmd) and sat == 0.0


def test_pure_heave_split():
    L = ThrusterLayout.default()
    f = L.thruster_forces([0, 0, 20.0, 0, 0, 0])
    np.testing.assert_allclose(f[4:], 5.0, atol=1e-12)
    np.testing.assert_allclose(f[:4], 0.0, atol=1e-12)


def test_pure_yaw_antisymmetric():
    L = ThrusterLayout.default()
    f = L.thruster_forces([0, 0, 0, 0, 0, 1.0])
    np.testing.assert_allclose(f[4:], 0.0, atol=1e-12)
    assert np.all(np.abs(f[:4]) > 0.1)
    assert f[:4].sum() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(L.wrench_from_thrust(f), [0, 0, 0, 0, 0, 1.0], atol=1e-12)


def test_reconstruction_residual(rng):
    L = ThrusterLayout.default()
    w = rng.uniform(-5, 5, (500, 6))
    f = L.thruster_forces(w)
    assert np.max(np.abs(L.wrench_from_thrust(f) - w)) < 1e-9


def test_saturation_fraction():
    _, sat = allocate(Wrench(np.array([0, 0, 1000.0]), np.zeros(3)))
    assert sat == pytest.approx(0.5)
    cmd, _ = allocate(Wrench(np.array([0, 0, 1000.0]), np.zeros(3)))
    np.testing.assert_allclose(cmd[4:], 1.0)


def test_deadband_forces_map_to_zero_command():
    assert command_from_thrust(0.0) == 0.0
    tiny = command_from_thrust(1e-6)
    assert thrust_from_command(tiny) == pytest.approx(1e-6, abs=1e-9)
