import logging
from collections.abc import Sequence
from typing import Protocol

from .errors import UnparseableDecision
from .oracle.base import Oracle
from .oracle.roles import OracleRole
from .symbolic import OperatorDef
from .verification import FailureReport, FixType, RecoveryDecision


log = logging.getLogger(__name__)


class RecoveryTarget(Protocol):
    """What the recovery module may change in a hierarchy under construction"""

    def owner_level(self, operator: str) -> int: ...

    def edit_operator(self, operator: str, feedback: str) -> int: ...

    def retranslate(self, operator: str, feedback: str) -> int: ...


FEEDBACK = {
    FixType.PDDL_FIX: "Correct the preconditions and effects of operator '{op}'.",
    FixType.PRIOR_SKILLS: "Other skills must run before the skills of operator '{op}'. Extend its skill mapping.",
    FixType.INCORRECT_INSTANTIATION: "The skills of operator '{op}' were called with the wrong arguments.",
    FixType.MULTIPLE_SKILLS: "Operator '{op}' needs more than one skill. Map it to the full skill sequence.",
}


def decide_recovery(
    report: FailureReport,
    history: str,
    oracle: Oracle,
    operator: OperatorDef,
    known: Sequence[str],
) -> RecoveryDecision:
    """Ask the reasoner which fix a verification failure calls for.

    Raises:
        UnparseableDecision: no valid decision after the re-ask
    """
    context = {
        "state": report.state,
        "hierarchy": " > ".join(report.path) or str(report.action),
        "operator": operator,
        "skill": str(report.skill) if report.skill else "(no skill executed)",
        "phase": report.phase.value,
        "error": "\n".join(filter(None, [
            "Unsatisfied preconditions: " + ", ".join(report.missing) if report.missing else "",
            report.error,
        ])),
        "expected": report.expected.describe() if report.expected else None,
        "observed": report.observed.describe() if report.observed else None,
        "history": history,
        "operators": list(known),
    }
    decision = oracle.ask(OracleRole.REASONER, context)
    log.info("RECOVER %s on %s", decision.fix.value, ", ".join(decision.operators))
    return decision


def apply_recovery(decision: RecoveryDecision, target: RecoveryTarget, report: FailureReport) -> int:
    """Carry out a decision; returns the level to re-plan from"""
    levels = []
    for op in decision.operators:
        feedback = FEEDBACK[decision.fix].format(op=op) + "\n" + report.summary()
        if decision.rationale:
            feedback += f"\nAnalysis: {decision.rationale}"
        match decision.fix:
            case FixType.PDDL_FIX:
                levels.append(target.edit_operator(op, feedback))
            case FixType.PRIOR_SKILLS:
                target.retranslate(op, feedback)
                levels.append(target.edit_operator(op, feedback))
            case FixType.INCORRECT_INSTANTIATION | FixType.MULTIPLE_SKILLS:
                levels.append(target.retranslate(op, feedback))
            case _:
                raise UnparseableDecision(f"Unknown fix type {decision.fix}")
    return min(levels)
