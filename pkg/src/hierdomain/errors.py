class HierdomainError(Exception):
    """Base class for every error raised by this package"""


# ============================================================================
# PDDL
# ============================================================================

class PDDLError(HierdomainError):
    pass


class PDDLSyntaxError(PDDLError):
    """Malformed PDDL text, with position and the tokens that would have been accepted"""

    def __init__(self, message: str, line: int = 0, column: int = 0, expected: frozenset[str] = frozenset()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected
        where = f" (line {line}, column {column})" if line else ""
        hint = f"; expected one of: {', '.join(sorted(expected))}" if expected else ""
        super().__init__(f"{message}{where}{hint}")


class UnsupportedFeature(PDDLError):
    pass


class UnknownPredicate(PDDLError):
    pass


class UnknownObjectType(PDDLError):
    pass


class UnknownObject(PDDLError):
    pass


class ArityMismatch(PDDLError):
    pass


class PreconditionViolation(PDDLError):
    def __init__(self, action: str, missing: tuple[str, ...]):
        self.action = action
        self.missing = missing
        super().__init__(f"{action}: unsatisfied {', '.join(missing)}")


# ============================================================================
# Planning
# ============================================================================

class PlanningError(HierdomainError):
    pass


class Unsolvable(PlanningError):
    pass


class BudgetExhausted(PlanningError):
    pass


# ============================================================================
# Hierarchy
# ============================================================================

class HierarchyError(HierdomainError):
    pass


class DegenerateSubproblem(HierarchyError):
    pass


class OracleRejection(HierarchyError):
    pass


class LearningFailure(HierarchyError):
    """A task could not be learned; carries the audit trail collected so far"""

    def __init__(self, message: str, audit: list[dict] | None = None):
        self.audit = audit or []
        super().__init__(message)


# ============================================================================
# Classifiers
# ============================================================================

class ClassifierError(HierdomainError):
    pass


class ClassifierSyntaxError(ClassifierError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})" if line else message)


class UnknownAccessor(ClassifierError):
    pass


class CyclicReference(ClassifierError):
    pass


class MissingObject(ClassifierError):
    pass


class NumericDomainError(ClassifierError):
    pass


class NoRelevantAtoms(ClassifierError):
    pass


class EmptySearchSpace(ClassifierError):
    pass


class ZeroDefault(ClassifierError):
    pass


class UnparseableResponse(ClassifierError):
    pass


# ============================================================================
# Oracle
# ============================================================================

class OracleError(HierdomainError):
    pass


class MissingContextField(OracleError):
    pass


class ParseFailure(OracleError):
    def __init__(self, section: str, detail: str = ""):
        self.section = section
        self.detail = detail
        super().__init__(f"Section '{section}': {detail}" if detail else f"Missing section '{section}'")


class UnparseableDecision(OracleError):
    pass


class OracleUnavailable(OracleError):
    pass


class ReplayDivergence(OracleError):
    def __init__(self, seq: int, diff: str):
        self.seq = seq
        self.diff = diff
        super().__init__(f"Request #{seq} differs from the transcript:\n{diff}")


class TranscriptExhausted(OracleError):
    pass


class TransportError(OracleError):
    pass


class AuthError(OracleError):
    pass


class RateLimited(OracleError):
    pass


# ============================================================================
# Environments
# ============================================================================

class EnvError(HierdomainError):
    pass


class SkillError(EnvError):
    pass


class UnknownSkill(EnvError):
    pass


# ============================================================================
# Evaluation
# ============================================================================

class EvaluationError(HierdomainError):
    pass


class TaskUnsolvableInReference(EvaluationError):
    pass


class VocabularyMismatch(EvaluationError):
    def __init__(self, unmatched: list[str]):
        self.unmatched = unmatched
        super().__init__(f"Unmatched predicates: {', '.join(unmatched)}")


class ManifestError(HierdomainError):
    pass
