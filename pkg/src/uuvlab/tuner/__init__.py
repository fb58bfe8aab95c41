"""Runtime gain adaptation from windowed control-log summaries."""

from .backends import HTTPBackend, MockBackend, llm_decide, parse_decision
from .decisions import (
    SCALES,
    ControlLogSummary,
    DecisionError,
    RuleConfig,
    TuningDecision,
    apply_decision,
    apply_decisions,
    rule_decide,
    summarize,
)
from .loop import TurbulenceScenario, tune
