import json
import logging
from collections.abc import Mapping
from pathlib import Path

from ..classifier import ClassifierProgram
from ..envs.base import ContinuousWorld, DiscreteWorld
from ..errors import OracleUnavailable, PlanningError
from ..pddl import format_operator, format_plan
from ..planner import search_plan
from ..symbolic import DomainModel, OperatorDef, PredicateSchema, Problem, normalize_name
from .base import Oracle
from .prompts import Message
from .roles import OracleRole


log = logging.getLogger(__name__)


class ScriptBook:
    """Canned answers kept as files.

    Layout: `domain.md`, `translate.json` (operator -> skill call list),
    `translate_fix.json` (mappings given when a recovery asks again),
    `decompose/<operator>.md`, `fix/<operator>.md`, `reasoner/<operator>.json`,
    `classifiers/<predicate>.cls` and `refine/<predicate>.cls`.
    """

    def __init__(self, path: Path | None = None):
        self.path = path
        self.translations: dict[str, list[str]] = {}
        self.fixed_translations: dict[str, list[str]] = {}
        if path is not None:
            if not path.is_dir():
                raise ValueError(f"Script directory '{path}' does not exist")
            mapping = path / "translate.json"
            if mapping.exists():
                self.translations = json.loads(mapping.read_text())
            mapping = path / "translate_fix.json"
            if mapping.exists():
                self.fixed_translations = json.loads(mapping.read_text())

    def text(self, *parts: str) -> str | None:
        if self.path is None:
            return None
        f = self.path.joinpath(*parts)
        return f.read_text() if f.is_file() else None


def domain_answer(
    predicates: list[PredicateSchema],
    operators: list[OperatorDef],
    goal_changes: list[str] = (),  # type: ignore[assignment]
    init: list[str] = (),  # type: ignore[assignment]
) -> str:
    """Domain or Decompose answer in the requested section format"""
    lines = ["### Change/Add Predicate Definitions"]
    lines += [f"- {p} ; {p.kind.value}: {p.description}".rstrip() for p in predicates]
    lines += ["", "### Change/Add Action(s)"]
    for op in operators:
        lines += ["```pddl", format_operator(op), "```"]
    lines += ["", "### Delete Action(s)", "", "### Goal Changes"]
    lines += [f"- {g}" for g in goal_changes]
    lines += ["", "### Initial State"]
    lines += [f"- {a}" for a in init]
    return "\n".join(lines) + "\n"


class ScriptedOracle(Oracle):
    """Rule-based oracle for offline runs.

    Answers come from the script book where it has one, otherwise from a
    reference domain: its operators, same-named skills, and labels read from
    the simulator's true state.
    """

    def __init__(self, reference: DomainModel | None = None, script: Path | None = None, record: Path | None = None):
        super().__init__(record)
        self.reference = reference
        self.book = ScriptBook(script)

    @classmethod
    def shortname(cls) -> str:
        return "scripted"

    def _respond(self, role: OracleRole, messages: tuple[Message, ...], context: Mapping, seq: int) -> str:
        match role:
            case OracleRole.DOMAIN:
                return self._domain(context)
            case OracleRole.DECOMPOSE:
                return self._decompose(context)
            case OracleRole.TRANSLATE:
                return self._translate(context)
            case OracleRole.REASONER:
                return self._reason(context)
            case OracleRole.PLAN_FALLBACK:
                return self._plan(context)
            case OracleRole.CLASSIFIER_GEN:
                return self._classifier(context)
            case OracleRole.CLASSIFIER_REFINE:
                return self._refine(context)
            case OracleRole.PSEUDO_LABEL:
                return self._label(context)
        raise OracleUnavailable(f"No scripted answer for {role}")

    def _fix(self, context: Mapping) -> str | None:
        name = context.get("fix")
        if not name:
            return None
        text = self.book.text("fix", f"{name}.md")
        if text is not None:
            return text
        op = self.reference.operator(name) if self.reference else None
        if op is None:
            raise OracleUnavailable(f"No scripted fix for operator '{name}'")
        return domain_answer([], [op])

    def _domain(self, context: Mapping) -> str:
        fixed = self._fix(context)
        if fixed is not None:
            return fixed
        text = self.book.text("domain.md")
        if text is not None:
            return text
        if self.reference is None:
            raise OracleUnavailable("Scripted oracle has neither domain.md nor a reference domain")
        current: DomainModel = context["domain"]
        new = [p for p in self.reference.predicates if current.predicate(p.name) != p]
        return domain_answer(new, list(self.reference.operators))

    def _decompose(self, context: Mapping) -> str:
        fixed = self._fix(context)
        if fixed is not None:
            return fixed
        op: OperatorDef = context["operator"]
        text = self.book.text("decompose", f"{op.name}.md")
        if text is None:
            raise OracleUnavailable(f"No scripted decomposition for '{op.name}'")
        return text

    def _translate(self, context: Mapping) -> str:
        op: OperatorDef = context["operator"]
        calls = None
        if context.get("feedback"):
            calls = self.book.fixed_translations.get(op.name)
        if calls is None:
            calls = self.book.translations.get(op.name)
        if calls is None:
            skills = context["skills"]
            for name in (op.name, normalize_name(op.name)):
                if name in skills:
                    arity = skills.get(name).arity
                    calls = [f"{name}({', '.join(v for v, _ in op.params[:arity])})"]
                    break
            else:
                raise OracleUnavailable(f"No scripted skill mapping for '{op.name}'")
        return "# Skill Mapping\n" + "".join(f"- {c}\n" for c in calls)

    def _reason(self, context: Mapping) -> str:
        op: OperatorDef = context["operator"]
        text = self.book.text("reasoner", f"{op.name}.json")
        if text is None:
            text = json.dumps({"type_of_fix": "pddl-fix", "operators": [op.name]})
        return f"Final decision:\n```json\n{text.strip()}\n```\n"

    def _plan(self, context: Mapping) -> str:
        problem: Problem = context["problem"]
        domain = self.reference if self.reference is not None else context["domain"]
        try:
            plan = search_plan(domain, problem)
        except PlanningError as e:
            log.warning("Scripted fallback found no plan: %s", e)
            return "### Plan\n"
        return "### Plan\n" + format_plan(plan.actions)

    def _classifier(self, context: Mapping) -> str:
        schema = context["predicate"]
        name = schema.name if isinstance(schema, PredicateSchema) else str(schema)
        text = self.book.text("classifiers", f"{name}.cls")
        return f"# Classifier\n```\n{text.strip() if text else 'none'}\n```\n"

    def _refine(self, context: Mapping) -> str:
        schema, program = context["predicate"], context["program"]
        name = schema.name if isinstance(schema, PredicateSchema) else str(schema)
        current = program.source if isinstance(program, ClassifierProgram) else str(program)
        text = self.book.text("refine", f"{name}.cls") or current
        return f"# Error Analysis\nScripted answer.\n# Fixed Code\n```\n{text.strip()}\n```\n"

    def _label(self, context: Mapping) -> str:
        world = context["scene"]
        if isinstance(world, ContinuousWorld):
            truth = world.truth
        elif isinstance(world, DiscreteWorld):
            truth = world.atoms
        else:
            truth = None
        if truth is None:
            raise OracleUnavailable("Scripted labels need the simulator's true state")
        return "".join(f"- {a}: {'true' if a in truth else 'false'}\n" for a in context["atoms"])
