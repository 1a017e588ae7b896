"""
Token-wise controllability
"""

from src.control.harness import (
    ClassRow,
    ControlConfig,
    ControlReport,
    build_control_plan,
    check_precondition,
    competent_base,
    eval_counterfact,
    reports_table,
    run_control_training,
    write_report,
)
from src.control.scenarios import (
    BaseScenario,
    ControlScenario,
    IndeterminateScenario,
    MisalignmentScenario,
    MisclassificationScenario,
    get_scenario,
)

__all__ = [
    "BaseScenario",
    "ClassRow",
    "ControlConfig",
    "ControlReport",
    "ControlScenario",
    "IndeterminateScenario",
    "MisalignmentScenario",
    "MisclassificationScenario",
    "build_control_plan",
    "check_precondition",
    "competent_base",
    "eval_counterfact",
    "get_scenario",
    "reports_table",
    "run_control_training",
    "write_report",
]
