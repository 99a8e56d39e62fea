import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from .dataset import Transition
from .envs.base import DiscreteWorld, Environment, WorldState
from .errors import SkillError
from .skills import SkillCall
from .symbolic import Action, DomainModel, EffectSet, PredicateSchema, SymbolicState, state_diff


log = logging.getLogger(__name__)

__all__ = [
    "SkillCall", "Grounder", "SymbolicGrounder", "FailurePhase", "FailureReport", "Verified",
    "FixType", "RecoveryDecision", "ground_state", "verify_leaf",
]


# ============================================================================
# Grounding
# ============================================================================

class Grounder(Protocol):
    def groundable(self, schema: PredicateSchema) -> bool: ...

    def ground(self, w: WorldState, schemas: Iterable[PredicateSchema], domain: DomainModel, objects: Mapping[str, str]) -> SymbolicState: ...


class SymbolicGrounder:
    """Grounds discrete worlds by reading their atoms; any state-based predicate is groundable"""

    def groundable(self, schema: PredicateSchema) -> bool:
        return schema.state_based

    def ground(self, w: WorldState, schemas: Iterable[PredicateSchema], domain: DomainModel, objects: Mapping[str, str]) -> SymbolicState:
        if not isinstance(w, DiscreteWorld):
            raise TypeError("SymbolicGrounder needs a discrete world")
        names = set()
        for schema in schemas:
            if not schema.state_based:
                raise ValueError(f"'{schema.name}' is state-independent and cannot be grounded")
            names.add(schema.name)
        return frozenset(a for a in w.atoms if a.predicate in names and all(o in objects for o in a.args))


def groundable_schemas(domain: DomainModel, grounder: Grounder) -> list[PredicateSchema]:
    return [p for p in domain.predicates if grounder.groundable(p)]


def ground_state(grounder: Grounder, w: WorldState, domain: DomainModel, objects: Mapping[str, str]) -> SymbolicState:
    """State-based atoms of `w` over every groundable predicate of the domain"""
    return grounder.ground(w, groundable_schemas(domain, grounder), domain, objects)


# ============================================================================
# Reports
# ============================================================================

class FailurePhase(Enum):
    PRECONDITION_CHECK = "PreconditionCheck"
    SKILL_EXCEPTION = "SkillException"
    EFFECT_MISMATCH = "EffectMismatch"


@dataclass(frozen=True)
class FailureReport:
    action: Action
    skill: SkillCall | None
    phase: FailurePhase
    expected: EffectSet | None = None
    observed: EffectSet | None = None
    missing: tuple[str, ...] = ()
    error: str = ""
    path: tuple[str, ...] = ()
    state: SymbolicState = field(default=frozenset(), compare=False)

    def __post_init__(self):
        has_effects = self.expected is not None and self.observed is not None
        if has_effects != (self.phase is FailurePhase.EFFECT_MISMATCH):
            raise ValueError("Expected and observed changes belong to effect mismatches only")

    def summary(self) -> str:
        lines = [f"{self.phase.value} while executing {self.action}" + (f" as {self.skill}" if self.skill else "")]
        if self.missing:
            lines.append("Unsatisfied preconditions: " + ", ".join(self.missing))
        if self.error:
            lines.append(f"Skill error: {self.error}")
        if self.expected is not None and self.observed is not None:
            lines.append("Expected change:")
            lines += [f"  {l}" for l in self.expected.describe()] or ["  (none)"]
            lines.append("Observed change:")
            lines += [f"  {l}" for l in self.observed.describe()] or ["  (none)"]
        if self.path:
            lines.append("Hierarchy: " + " > ".join(self.path))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase.value,
            "action": str(self.action),
            "skill": str(self.skill) if self.skill else None,
            "missing": list(self.missing),
            "error": self.error,
            "expected": self.expected.describe() if self.expected else None,
            "observed": self.observed.describe() if self.observed else None,
            "path": list(self.path),
        }


@dataclass(frozen=True)
class Verified:
    transition: Transition


class FixType(Enum):
    PDDL_FIX = "pddl-fix"
    PRIOR_SKILLS = "prior-skills"
    INCORRECT_INSTANTIATION = "incorrect-instantiation"
    MULTIPLE_SKILLS = "multiple-skills"


@dataclass(frozen=True)
class RecoveryDecision:
    fix: FixType
    operators: tuple[str, ...]
    rationale: str = ""

    def __post_init__(self):
        if not self.operators:
            raise ValueError("A recovery decision names at least one operator")

    def to_dict(self) -> dict:
        return {"type_of_fix": self.fix.value, "operators": list(self.operators)}


# ============================================================================
# Motion verification
# ============================================================================

def verify_leaf(
    action: Action,
    skill: SkillCall,
    env: Environment,
    grounder: Grounder,
    domain: DomainModel,
    objects: Mapping[str, str],
    path: tuple[str, ...] = (),
) -> Verified | FailureReport:
    """Check preconditions, execute the skill, then compare effects.

    Only predicates the grounder can judge take part in either check.
    Failures come back as reports; the environment is left where the skill put it.
    """
    schemas = groundable_schemas(domain, grounder)
    groundable = {s.name for s in schemas}
    ground = domain.ground(action)

    x = env.observe()
    before = grounder.ground(x, schemas, domain, objects)
    missing = [str(a) for a in sorted(ground.pre_pos - before) if a.predicate in groundable]
    missing += [f"(not {a})" for a in sorted(ground.pre_neg & before) if a.predicate in groundable]
    if missing:
        log.info("VERIFY %s: unmet preconditions %s", action, ", ".join(missing))
        return FailureReport(action, skill, FailurePhase.PRECONDITION_CHECK, missing=tuple(missing), path=path, state=before)

    try:
        x_next = env.execute(skill)
    except SkillError as e:
        log.info("VERIFY %s: skill %s failed: %s", action, skill, e)
        return FailureReport(action, skill, FailurePhase.SKILL_EXCEPTION, error=str(e), path=path, state=before)

    after = grounder.ground(x_next, schemas, domain, objects)
    expected = state_diff(before, ground.apply(before)).restrict(groundable)
    observed = state_diff(before, after)
    if expected != observed:
        log.info("VERIFY %s: effects differ, expected %s, observed %s", action, expected.describe(), observed.describe())
        return FailureReport(action, skill, FailurePhase.EFFECT_MISMATCH, expected, observed, path=path, state=before)

    log.info("VERIFY %s as %s: ok", action, skill)
    return Verified(Transition(x, skill, x_next))
