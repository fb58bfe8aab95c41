"""
Thrusters and control laws
==========================

The building blocks below the learning loop: the measured thrust curve of a
single thruster, its inverse, the eight-thruster allocation, and the
S-Surface law that turns attitude errors into torque requests.

Writes ``demo_output/thrust_curve.svg`` and ``demo_output/s_surface.svg``.
"""

from pathlib import Path

import numpy as np

from uuvlab.actuation import MAX_THRUST, MIN_THRUST, ThrusterLayout, command_from_thrust, thrust_from_command
from uuvlab.control import AttitudeController, adapt_update, controller_step_state, s_surface_output
from uuvlab.hydro import Wrench
from uuvlab.mathcore import RigidBodyState, euler_to_quat
from uuvlab.svg import line_plot

out = Path("demo_output")
out.mkdir(exist_ok=True)

###############################################################################
# Thrust curve
# ------------
# Two quadratic branches with a dead band of +-0.08 around zero command. The
# forward branch is stronger than the reverse one.
a = np.linspace(-1, 1, 401)
tau = thrust_from_command(a)
print(f"thrust range: {tau.min():.2f} N .. {tau.max():.2f} N  (limits {MIN_THRUST:.2f}, {MAX_THRUST:.2f})")
line_plot(out / "thrust_curve.svg", a, {"thrust [N]": tau}, title="thrust vs command", xlabel="command", ylabel="N")

# the inverse picks the branch from the sign of the requested force
for f in (-30.0, -1.0, 0.0, 1.0, 30.0):
    c = command_from_thrust(f)
    print(f"want {f:+6.1f} N -> command {float(c):+.4f} -> {float(thrust_from_command(c)):+.4f} N")

###############################################################################
# Allocation
# ----------
# A pure heave request is shared equally by the four vertical thrusters; a
# yaw request by the four horizontal ones with alternating signs.
layout = ThrusterLayout.default()
for name, w in (("heave 8 N", Wrench([0, 0, 8.0], [0, 0, 0])), ("yaw 1 N m", Wrench([0, 0, 0], [0, 0, 1.0]))):
    forces = layout.thruster_forces(w.as_vector())
    print(f"{name:10s}: " + " ".join(f"{x:+.3f}" for x in forces))

###############################################################################
# S-Surface law
# -------------
# ``u = 2 / (1 + exp(-zeta1 e - zeta2 e_dot)) - 1`` is a squashed PD law. Its
# slope at the origin is ``zeta1 / 2``.
e = np.linspace(-1.5, 1.5, 301)
series = {f"zeta1={z}": s_surface_output(z, 2.0, e, 0.0) for z in (1.0, 4.0, 8.0)}
line_plot(out / "s_surface.svg", e, series, title="S-Surface output", xlabel="error [rad]", ylabel="u")
print("u(2, 1, 0.5, -0.2) =", float(s_surface_output(2, 1, 0.5, -0.2)))

# the adaptive term accumulates while the error persists in the direction of u
du = 0.0
for k in range(5):
    du = float(adapt_update(du, 0.02, 0.4, 0.3 + du))
    print(f"step {k}: du = {du:.4f}")

###############################################################################
# One controller step
# -------------------
# Level vehicle, yaw setpoint 0.5 rad: only a yaw torque is requested.
c = AttitudeController.default("ssurface")
state = RigidBodyState.at_rest(position=(0, 0, 1.0), orientation=euler_to_quat([0, 0, 0]))
force, torque, _ = controller_step_state(c, {"roll": 0, "pitch": 0, "yaw": 0.5, "depth": 1.0}, state, 0.02)
print("force", np.round(force, 4), "torque", np.round(torque, 4))
