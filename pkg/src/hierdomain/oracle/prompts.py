import logging
from collections.abc import Mapping
from dataclasses import dataclass

from ..classifier import ACCESSORS, ClassifierRegistry
from ..envs.base import ContinuousWorld, DiscreteWorld, dump_world
from ..errors import MissingContextField
from ..pddl import format_operator, print_domain, print_problem
from ..skills import SkillLibrary
from ..symbolic import DomainModel, Goal, OperatorDef, Problem
from .roles import OracleRole


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


REQUIRED: dict[OracleRole, tuple[str, ...]] = {
    OracleRole.DOMAIN: ("instruction", "skills", "domain", "objects"),
    OracleRole.PLAN_FALLBACK: ("domain", "problem"),
    OracleRole.TRANSLATE: ("operator", "skills"),
    OracleRole.DECOMPOSE: ("operator", "skills", "domain", "objects", "initial_state", "goal_state"),
    OracleRole.REASONER: ("operator", "skill", "phase", "state", "hierarchy"),
    OracleRole.CLASSIFIER_GEN: ("predicate", "scene"),
    OracleRole.CLASSIFIER_REFINE: ("predicate", "program", "samples"),
    OracleRole.PSEUDO_LABEL: ("scene", "atoms"),
}


SYSTEM = {
    OracleRole.DOMAIN: "You are an expert in PDDL domain modeling for robot task planning. You only use STRIPS with typing, negative preconditions and equality.",
    OracleRole.PLAN_FALLBACK: "You are a classical planner. You solve PDDL problems step by step.",
    OracleRole.TRANSLATE: "You map symbolic PDDL operators to sequences of executable robot skills.",
    OracleRole.DECOMPOSE: "You refine a PDDL operator into a lower-level PDDL domain whose operators each correspond to one robot skill.",
    OracleRole.REASONER: "You analyse failures of a robot executing a learned PDDL model and decide how to repair the model.",
    OracleRole.CLASSIFIER_GEN: "You write predicate classifiers over perceived object poses in a small expression language.",
    OracleRole.CLASSIFIER_REFINE: "You fix predicate classifiers over perceived object poses in a small expression language.",
    OracleRole.PSEUDO_LABEL: "You judge which facts hold in a perceived scene.",
}


DOMAIN_FORMAT = """\
### Response Format
Answer with the following sections. Leave a section empty if nothing changes.
### Change/Add Predicate Definitions
- (name ?arg - type ...) ; state|other: description
Mark predicates that change through robot actions as `state`, fixed facts as `other`.
### Change/Add Action(s)
```pddl
(:action name :parameters (...) :precondition (and ...) :effect (and ...))
```
### Delete Action(s)
- name
### Goal Changes
- (atom args): true|false|remove
### Initial State
- (atom args)
Only list facts of `other` predicates in the initial state."""


TEMPLATES = {
    OracleRole.DOMAIN: """\
### User Instruction
{instruction}

### Skill Library
{skills}

### Current Domain
```pddl
{domain}
```

### Objects
{objects}

### Current Goal
{goal}
{feedback}
{format}""",

    OracleRole.PLAN_FALLBACK: """\
### Domain
```pddl
{domain}
```

### Problem
```pddl
{problem}
```

### Response Format
### Plan
(action arg1 arg2)
One action per line, in execution order.""",

    OracleRole.TRANSLATE: """\
### Operator
```pddl
{operator}
```
{action}
### Skill Library
{skills}
{feedback}
Map the operator to the sequence of skills that achieves its effects.
Refer to operator parameters by name, e.g. `p_part` or `?p`.

[START OUTLINE]
# Skill Mapping
- skill_name(argument, ...)
[END OUTLINE]""",

    OracleRole.DECOMPOSE: """\
### Operator To Decompose
```pddl
{operator}
```

### Skill Library
{skills}

### Domain
```pddl
{domain}
```

### Objects
{objects}

### Initial State
{initial_state}

### Goal State
{goal_state}
{feedback}
Define lower-level operators, one per skill, so that a plan from the initial state reaches the goal state.
Keep every existing predicate; add new ones where needed.
{format}""",

    OracleRole.REASONER: """\
### State Before Failure
{state}

### Decomposition Hierarchy
{hierarchy}

### Current Operator
```pddl
{operator}
```

### Executed Skill
{skill}

### Failure
{phase}
{error}
### Expected Change
{expected}

### Ground Truth Change
{observed}

### Learning History
{history}

### Possible Fixes
- pddl-fix: an operator's preconditions or effects are wrong
- prior-skills: other skills must run before this skill
- incorrect-instantiation: the skill was called with the wrong arguments
- multiple-skills: the operator needs several skills

### Response Format
```json
{{"type_of_fix": "pddl-fix", "operators": ["operator-name"]}}
```
Name the operators to edit from: {operators}""",

    OracleRole.CLASSIFIER_GEN: """\
### Predicate
{predicate}

### Perception API
{api}

### Registered Classifiers
{registered}

### Scene
{scene}

### Response Format
# Classifier
```
name(arg, ...){{tolerance=0.01 m}} := boolean expression
```
Answer `none` in the Classifier section if the predicate cannot be judged from poses.""",

    OracleRole.CLASSIFIER_REFINE: """\
### Predicate
{predicate}

### Current Code
```
{program}
```

### Perception API
{api}

### Mismatched Samples
{samples}

### Response Format
# Error Analysis
Explain why the classifier disagrees with the expected results.
# Fixed Code
```
name(arg, ...){{tolerance=0.01 m}} := boolean expression
```""",

    OracleRole.PSEUDO_LABEL: """\
### Scene
{scene}

### Facts
{atoms}

### Response Format
- (fact args): true|false
One line per fact listed above.""",
}


def _api() -> str:
    lines = []
    for name, accessor in ACCESSORS.items():
        args = ", ".join(getattr(a, "value", a) for a in accessor.args)
        lines.append(f"- {name}({args}) -> {accessor.returns.value}")
    lines.append("- operators: + - * / < <= > >= == != && || ! and |x| for absolute value or vector length")
    return "\n".join(lines)


def render(value) -> str:
    """Text form of a context value"""
    match value:
        case None:
            return ""
        case str():
            return value
        case DomainModel():
            return print_domain(value).rstrip()
        case Problem():
            return print_problem(value).rstrip()
        case OperatorDef():
            return format_operator(value)
        case SkillLibrary():
            return value.describe()
        case Goal():
            goal = [str(a) for a in sorted(value.positive)] + [f"(not {a})" for a in sorted(value.negative)]
            return f"(and {' '.join(goal)})" if goal else "(and)"
        case ContinuousWorld() | DiscreteWorld():
            return dump_world(value)
        case ClassifierRegistry():
            return "\n".join(value.program(n).source for n in value) or "none"
        case Mapping():
            return "\n".join(f"- {k} - {v}" for k, v in sorted(value.items()))
        case frozenset() | set():
            return "\n".join(str(a) for a in sorted(value)) or "(none)"
        case list() | tuple():
            return "\n".join(str(a) for a in value) or "(none)"
    return str(value)


def _missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, (str, list, tuple, set, frozenset, dict, SkillLibrary)):
        return len(value) == 0
    return False


def build_prompt(role: OracleRole, context: Mapping) -> tuple[Message, ...]:
    """System and user message for a request; a pure function of the context.

    Raises:
        MissingContextField: a field the role needs is absent or empty
    """
    for key in REQUIRED[role]:
        if _missing(context.get(key)):
            raise MissingContextField(f"{role.value} prompt needs '{key}'")
    fields = {
        "instruction": render(context.get("instruction")),
        "skills": render(context.get("skills")),
        "domain": render(context.get("domain")),
        "problem": render(context.get("problem")),
        "objects": render(context.get("objects")),
        "goal": render(context.get("goal")),
        "operator": render(context.get("operator")),
        "action": f"\n### Action\n{context['action']}\n" if context.get("action") else "",
        "initial_state": render(context.get("initial_state")),
        "goal_state": render(context.get("goal_state")),
        "state": render(context.get("state")),
        "hierarchy": render(context.get("hierarchy")),
        "skill": render(context.get("skill")),
        "phase": render(context.get("phase")),
        "error": f"{context['error']}\n" if context.get("error") else "",
        "expected": render(context.get("expected")) or "(none)",
        "observed": render(context.get("observed")) or "(none)",
        "history": render(context.get("history")) or "(none)",
        "operators": ", ".join(context.get("operators", ())),
        "predicate": render(context.get("predicate")),
        "program": render(context.get("program")),
        "samples": render(context.get("samples")),
        "scene": render(context.get("scene")),
        "atoms": render(context.get("atoms")),
        "registered": render(context.get("registry")) or "none",
        "api": _api(),
        "feedback": f"\n### Feedback\n{context['feedback']}\n" if context.get("feedback") else "",
        "format": DOMAIN_FORMAT,
    }
    user = TEMPLATES[role].format(**fields)
    return (Message("system", SYSTEM[role]), Message("user", user))
