"""
Online gain tuning under turbulence
===================================

The vehicle holds a level attitude while correlated force and torque noise
pushes it around. After every 10 s window the log is summarized and a tuning
backend scales one gain per channel by a factor from the fixed set
{2, 1.5, 1, 0.67, 0.5}.

Three backends are shown: the deterministic rule table, a scripted mock of a
chat model, and the same mock failing so the rule table takes over.
"""

from uuvlab.control import AttitudeController
from uuvlab.tuner import MockBackend, TurbulenceScenario, summarize, tune
from uuvlab.tuner.loop import run_window

scenario = TurbulenceScenario()
c = AttitudeController.default("assurface")

###############################################################################
# What the backend sees: a compact text summary of the window.
run = run_window(c, scenario)
print(summarize(run.trace_rows, scenario.window, controller=c).to_text())
print()

###############################################################################
# Rule backend: sluggish channels get a steeper slope, oscillating ones a
# softer one.
tr = tune(c, scenario, rounds=2)
for r in tr.rounds:
    ds = ", ".join(f"{d['channel']} {d['parameter']} {d['direction']} x{d['scale']}" for d in r["decisions"]) or "baseline"
    print(f"round {r['round']}: yaw mse {r['mse']['yaw']:.4f}  roll mse {r['mse']['roll']:.4f}  [{ds}]")

###############################################################################
# Yaw improves several-fold while roll gets worse. Roll already chatters at
# the default gains; the oscillation rule softens its slope, which lets the
# turbulence push it further.

###############################################################################
# Scripted backend: the decision is applied verbatim.
script = [{"channel": "yaw", "parameter": "zeta1", "direction": "increase", "scale": 2.0, "rationale": "slow yaw"}]
tr = tune(c, scenario, rounds=1, backend="mock", client=MockBackend(script))
print("mock:", tr.rounds[1]["decisions"], "->", round(tr.rounds[1]["mse"]["yaw"], 4))

###############################################################################
# A backend that times out: the run continues on the rule table and the
# transcript says so.
tr = tune(c, scenario, rounds=1, backend="mock", client=MockBackend([{"__error__": "timeout"}]))
print("fallback note:", tr.rounds[0]["notes"])
