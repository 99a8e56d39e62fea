import json
import logging
import re
from collections.abc import Mapping
from dataclasses import dataclass

from ..classifier import ClassifierProgram, parse_classifier
from ..dataset import atom_from_string
from ..errors import ParseFailure, UnparseableDecision
from ..pddl import parse_ground_atom, parse_operator, parse_plan, parse_predicate
from ..skills import SkillCall, SkillLibrary, bind_skill, parse_skill_call
from ..symbolic import DomainModel, GroundAtom, Goal, OperatorDef, PredicateSchema, SymbolicState
from ..verification import FixType, RecoveryDecision
from .roles import OracleRole


log = logging.getLogger(__name__)


HEADING = re.compile(r"^\s*#{1,6}\s+(.+?)\s*$")
FENCE = re.compile(r"^\s*```")
GOAL_LINE = re.compile(r"^(\(.*\))\s*:\s*(true|false|remove)\s*$", re.IGNORECASE)
LABEL_LINE = re.compile(r"^(\(.*\))\s*:\s*(true|false)\s*$", re.IGNORECASE)
JSON_BLOCK = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.DOTALL)
JSON_OBJECT = re.compile(r"\{.*\}", re.DOTALL)
NOTHING = {"", "none", "n/a", "-", "nothing"}


# ============================================================================
# Domain edits
# ============================================================================

@dataclass(frozen=True)
class DomainEdit:
    """Changes to a domain and its task requested by a Domain or Decompose answer"""
    predicates: tuple[PredicateSchema, ...] = ()
    operators: tuple[OperatorDef, ...] = ()
    deleted: tuple[str, ...] = ()
    goal_changes: tuple[tuple[GroundAtom, str], ...] = ()
    init: tuple[GroundAtom, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.predicates or self.operators or self.deleted or self.goal_changes or self.init)

    def apply(self, domain: DomainModel) -> DomainModel:
        out = domain.with_predicates(self.predicates)
        for op in self.operators:
            out = out.with_operator(op)
        for name in self.deleted:
            out = out.without_operator(name)
        return out

    def apply_goal(self, goal: Goal) -> Goal:
        positive, negative = set(goal.positive), set(goal.negative)
        for atom, change in self.goal_changes:
            positive.discard(atom)
            negative.discard(atom)
            if change == "true":
                positive.add(atom)
            elif change == "false":
                negative.add(atom)
        return Goal(frozenset(positive), frozenset(negative))


# ============================================================================
# Sections
# ============================================================================

def sections(text: str) -> dict[str, str]:
    """Body of every markdown heading, keyed by lower-cased title; headings inside code fences are ignored"""
    out: dict[str, list[str]] = {}
    current: list[str] | None = None
    fenced = False
    for line in text.splitlines():
        if FENCE.match(line):
            fenced = not fenced
        elif not fenced:
            m = HEADING.match(line)
            if m:
                current = out.setdefault(m.group(1).strip().lower(), [])
                continue
        if current is not None:
            current.append(line)
    return {k: "\n".join(v).strip() for k, v in out.items()}


def _section(found: Mapping[str, str], *names: str) -> str | None:
    for name in names:
        if name in found:
            return found[name]
    return None


def code_block(body: str) -> str:
    """Content of the first fenced block, or the whole body without fences"""
    lines = body.splitlines()
    start = next((i for i, l in enumerate(lines) if FENCE.match(l)), None)
    if start is None:
        return body.strip()
    end = next((i for i in range(start + 1, len(lines)) if FENCE.match(lines[i])), len(lines))
    return "\n".join(lines[start + 1:end]).strip()


def bullets(body: str) -> list[str]:
    out = []
    for line in body.splitlines():
        line = line.strip()
        if line.startswith(("- ", "* ")):
            item = line[2:].strip().strip("`").strip()
            if item.lower() not in NOTHING:
                out.append(item)
    return out


def action_blocks(body: str) -> list[str]:
    """Every balanced `(:action ...)` form in the text"""
    blocks = []
    start = body.find("(:action")
    while start >= 0:
        depth = 0
        for i in range(start, len(body)):
            if body[i] == "(":
                depth += 1
            elif body[i] == ")":
                depth -= 1
                if depth == 0:
                    blocks.append(body[start:i + 1])
                    start = body.find("(:action", i + 1)
                    break
        else:
            raise ParseFailure("Change/Add Action(s)", "unbalanced parentheses in action definition")
    return blocks


# ============================================================================
# Per role
# ============================================================================

def _domain_edit(role: OracleRole, text: str, context: Mapping) -> DomainEdit:
    found = sections(text)
    base: DomainModel = context["domain"]
    objects: Mapping[str, str] = context.get("objects") or {}

    predicates = []
    body = _section(found, "change/add predicate definitions", "predicate definitions", "predicates")
    for item in bullets(body or ""):
        predicates.append(parse_predicate(item))
    extended = base.with_predicates(predicates)

    body = _section(found, "change/add action(s)", "change/add actions", "actions")
    if body is None:
        raise ParseFailure("Change/Add Action(s)")
    operators = [parse_operator(block, extended) for block in action_blocks(body)]
    if role is OracleRole.DECOMPOSE and not operators:
        raise ParseFailure("Change/Add Action(s)", "a decomposition needs at least one operator")

    deleted = [name.strip("()") for name in bullets(_section(found, "delete action(s)", "delete actions") or "")]

    goal_changes = []
    for item in bullets(_section(found, "goal changes", "goal") or ""):
        m = GOAL_LINE.match(item)
        if not m:
            raise ParseFailure("Goal Changes", f"cannot read '{item}'")
        goal_changes.append((parse_ground_atom(m.group(1), extended, objects), m.group(2).lower()))

    init = []
    for item in bullets(_section(found, "initial state") or ""):
        atom = parse_ground_atom(item, extended, objects)
        schema = extended.predicate(atom.predicate)
        if schema is not None and schema.state_based:
            raise ParseFailure("Initial State", f"{atom} is state-based and comes from perception")
        init.append(atom)

    edit = DomainEdit(tuple(predicates), tuple(operators), tuple(deleted), tuple(goal_changes), tuple(init))
    edit.apply(base)
    return edit


def _translation(text: str, context: Mapping) -> list[SkillCall]:
    body = _section(sections(text), "skill mapping")
    if body is None:
        raise ParseFailure("Skill Mapping")
    calls = [parse_skill_call(item) for item in bullets(body)]
    if not calls:
        raise ParseFailure("Skill Mapping", "no skills listed")
    skills: SkillLibrary = context["skills"]
    op: OperatorDef = context["operator"]
    objects = context.get("objects") or {}
    for call in calls:
        if call.name not in skills:
            raise ParseFailure("Skill Mapping", f"unknown skill '{call.name}'")
        signature = skills.get(call.name)
        if len(call.args) != signature.arity:
            raise ParseFailure("Skill Mapping", f"{call.name} takes {signature.arity} arguments, got {len(call.args)}")
        bind_skill(call, op, tuple(v for v, _ in op.params), objects)
    return calls


def _decision(text: str, context: Mapping) -> RecoveryDecision:
    m = JSON_BLOCK.search(text) or JSON_OBJECT.search(text)
    if not m:
        raise UnparseableDecision("No decision JSON in the answer")
    try:
        data = json.loads(m.group(1) if m.re is JSON_BLOCK else m.group(0))
    except json.JSONDecodeError as e:
        raise UnparseableDecision(f"Decision is not valid JSON: {e.msg}") from None
    if not isinstance(data, dict):
        raise UnparseableDecision("Decision must be a JSON object")
    try:
        fix = FixType(data.get("type_of_fix"))
    except ValueError:
        raise UnparseableDecision(f"Unknown type_of_fix '{data.get('type_of_fix')}'") from None
    operators = data.get("operators")
    if not isinstance(operators, list) or not operators or not all(isinstance(o, str) for o in operators):
        raise UnparseableDecision("'operators' must be a nonempty list of operator names")
    known = context.get("operators")
    if known:
        unknown = [o for o in operators if o not in known]
        if unknown:
            raise UnparseableDecision(f"Unknown operators: {', '.join(unknown)}")
    return RecoveryDecision(fix, tuple(operators), str(data.get("rationale", "")))


def _classifier(text: str, context: Mapping, section: str) -> ClassifierProgram | None:
    found = sections(text)
    body = _section(found, section)
    if body is None:
        if found:
            raise ParseFailure(section.title())
        body = text
    code = code_block(body)
    if code.lower() in NOTHING:
        return None
    program = parse_classifier(code, context.get("registry"))
    schema = context["predicate"]
    name = schema.name if isinstance(schema, PredicateSchema) else str(schema)
    if program.predicate != name:
        raise ValueError(f"Classifier defines '{program.predicate}' instead of '{name}'")
    if isinstance(schema, PredicateSchema) and program.arity != schema.arity:
        raise ValueError(f"Classifier for '{name}' takes {program.arity} arguments, the predicate {schema.arity}")
    return program


def _plan(text: str) -> list:
    body = _section(sections(text), "plan")
    if body is None:
        raise ParseFailure("Plan")
    lines = [re.sub(r"^\s*(?:\d+[.:)]|-)\s*", "", l) for l in code_block(body).splitlines()]
    return parse_plan("\n".join(lines))


def _labels(text: str, context: Mapping) -> SymbolicState:
    candidates = set(context["atoms"])
    true_atoms = set()
    for line in text.splitlines():
        line = line.strip().lstrip("-* ").strip()
        m = LABEL_LINE.match(line)
        if not m:
            continue
        atom = atom_from_string(m.group(1))
        if atom not in candidates:
            log.debug("Ignoring label for unrequested atom %s", atom)
            continue
        if m.group(2).lower() == "true":
            true_atoms.add(atom)
    return frozenset(true_atoms)


def parse_response(role: OracleRole, text: str, context: Mapping):
    """Typed result of an oracle answer.

    Raises:
        ParseFailure: a required section is missing or unreadable
        UnparseableDecision: the recovery decision is invalid
        PDDLError, ClassifierError, ValueError: the content does not parse
    """
    match role:
        case OracleRole.DOMAIN | OracleRole.DECOMPOSE:
            return _domain_edit(role, text, context)
        case OracleRole.TRANSLATE:
            return _translation(text, context)
        case OracleRole.REASONER:
            return _decision(text, context)
        case OracleRole.CLASSIFIER_GEN:
            return _classifier(text, context, "classifier")
        case OracleRole.CLASSIFIER_REFINE:
            program = _classifier(text, context, "fixed code")
            if program is None:
                raise ParseFailure("Fixed Code", "no program given")
            return program
        case OracleRole.PLAN_FALLBACK:
            return _plan(text)
        case OracleRole.PSEUDO_LABEL:
            return _labels(text, context)
    raise ValueError(f"Unknown oracle role {role}")
