"""Tuning loop: evaluate a window, summarize it, decide, apply, repeat."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..control import AttitudeController
from ..env import Disturbance, EpisodeConfig
from ..eval.protocols import evaluate_policy
from ..eval.tasks import TaskSpec
from .backends import ChatBackend, llm_decide
from .decisions import RuleConfig, apply_decisions, rule_decide, summarize


@dataclass(frozen=True)
class TurbulenceScenario:
    """Level attitude hold under Ornstein-Uhlenbeck force/torque turbulence."""

    task: str = "hold"
    window: float = 10.0  # s, one tuning round per window
    sigma_force: float = 2.0  # N
    sigma_torque: float = 0.6  # N m
    correlation_time: float = 0.5  # s
    seed: int = 7

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            horizon=int(round(self.window / 0.02)),
            disturbance=Disturbance("turbulence", self.sigma_force, self.sigma_torque, self.correlation_time),
        )

    def task_spec(self) -> TaskSpec:
        return TaskSpec.by_name(self.task, duration=self.window)


@dataclass
class TuningTranscript:
    rounds: list = field(default_factory=list)
    controller: Optional[AttitudeController] = None

    def mse_series(self, channel: str = "yaw") -> list:
        return [r["mse"][channel] for r in self.rounds]


def run_window(controller: AttitudeController, scenario: TurbulenceScenario, policy=None):
    run = evaluate_policy(
        policy,
        controller.kind,
        scenario.task_spec(),
        episodes=1,
        seed=scenario.seed,
        episode_cfg=scenario.episode_config(),
        controller=controller,
        keep_trace=True,
    )
    return run


def tune(
    controller: AttitudeController,
    scenario: TurbulenceScenario = TurbulenceScenario(),
    rounds: int = 2,
    backend: str = "rule",
    client: Optional[ChatBackend] = None,
    policy=None,
    rules: RuleConfig = RuleConfig(),
    log_path=None,
) -> TuningTranscript:
    """Run ``rounds`` tuning rounds on the same scripted window.

    Round 0 is the untuned baseline. Each later round applies the decisions
    derived from the previous window's summary and re-evaluates.
    """
    if backend not in ("rule", "http", "mock"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend != "rule" and client is None:
        raise ValueError(f"backend {backend!r} needs a client")
    c = controller.reset_state()
    history: list = []
    tr = TuningTranscript()
    run = run_window(c, scenario, policy)
    for r in range(rounds + 1):
        s = summarize(run.trace_rows, scenario.window, controller=c, history=history)
        mse = {ch: a.mse for ch, a in s.per_axis.items()}
        entry = {"round": r, "mse": mse, "gains": c.gains_dict(), "decisions": [], "notes": []}
        if r > 0:
            entry["decisions"] = history[-1]["decisions"]
            history[-1]["mse"] = mse
        tr.rounds.append(entry)
        if r == rounds:
            break
        notes: list = []
        if backend == "rule":
            decisions = rule_decide(s, rules)
        else:
            decisions = llm_decide(s, client, rules=rules, log_path=log_path, notes=notes)
        entry["notes"] = notes
        history.append({"decisions": [d.to_dict() for d in decisions], "mse": {}})
        c = apply_decisions(c, decisions)
        run = run_window(c, scenario, policy)
    tr.controller = c
    return tr
