import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import NoReturn

from .classifier import ClassifierRegistry
from .config import Budgets, LearnerConfig
from .dataset import TransitionDataset
from .envs.base import ContinuousWorld, Environment
from .errors import (
    BudgetExhausted,
    DegenerateSubproblem,
    LearningFailure,
    OracleRejection,
    Unsolvable,
)
from .oracle.base import Oracle
from .oracle.roles import OracleRole
from .pddl import format_plan, print_domain, print_problem
from .planner import Plan, Provenance, StepStatus, search_plan, validate_plan
from .recovery import apply_recovery, decide_recovery
from .refinement import RefinementRound, refine_all
from .skills import SkillCall, SkillLibrary, bind_skill
from .symbolic import (
    Action,
    DomainModel,
    EffectSet,
    GroundAtom,
    Goal,
    OperatorDef,
    PredicateSchema,
    Problem,
    SymbolicState,
    goal_satisfied,
    ground_atoms,
    lift_atom,
    state_diff,
)
from .utils import prepare_dir
from .verification import FailurePhase, FailureReport, Grounder, SymbolicGrounder, Verified, ground_state, verify_leaf


log = logging.getLogger(__name__)


# ============================================================================
# Types
# ============================================================================

@dataclass(frozen=True)
class DecompositionKey:
    """Actions of one operator share a decomposition, whatever their binding"""
    operator: str
    param_types: tuple[str, ...] = ()

    @classmethod
    def of(cls, op: OperatorDef) -> "DecompositionKey":
        return cls(op.name, op.param_types)

    def __str__(self) -> str:
        return f"{self.operator}({', '.join(self.param_types)})"


@dataclass
class HierarchyNode:
    level: int
    domain: DomainModel
    problem: Problem
    plan: Plan = field(default_factory=Plan)
    children: dict[int, "HierarchyNode"] = field(default_factory=dict)
    leaf_bindings: dict[int, SkillCall] = field(default_factory=dict)
    key: DecompositionKey | None = None
    reused: bool = False

    def record_leaf(self, action: Action, call: SkillCall) -> None:
        self.leaf_bindings[len(self.plan)] = call
        self.plan = Plan(self.plan.actions + (action,), self.plan.provenance)

    def record_child(self, action: Action, child: "HierarchyNode") -> None:
        self.children[len(self.plan)] = child
        self.plan = Plan(self.plan.actions + (action,), self.plan.provenance)

    def walk(self) -> Iterable["HierarchyNode"]:
        yield self
        for _, child in sorted(self.children.items()):
            yield from child.walk()

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children.values()), default=0)


class MismatchKind(Enum):
    OVERSHOOT = "overshoot"
    SIDE_EFFECT = "side-effect"


@dataclass(frozen=True)
class MisalignmentReport:
    """Subplan effects compared against the effects of the action they refine"""
    action: Action
    expected: EffectSet
    observed: EffectSet
    overshoots: EffectSet = EffectSet()
    side_effects: EffectSet = EffectSet()
    underachieved: EffectSet = EffectSet()

    @property
    def aligned(self) -> bool:
        return self.overshoots.empty and self.side_effects.empty and self.underachieved.empty

    def to_dict(self) -> dict:
        return {
            "action": str(self.action),
            "expected": self.expected.describe(),
            "observed": self.observed.describe(),
            "overshoots": self.overshoots.describe(),
            "side_effects": self.side_effects.describe(),
            "underachieved": self.underachieved.describe(),
        }


# ============================================================================
# Subproblems and alignment
# ============================================================================

def make_subproblem(
    s_i: SymbolicState,
    s_next: SymbolicState,
    objects: Mapping[str, str],
    name: str = "subproblem",
    domain_name: str = "subdomain",
) -> Problem:
    """Task that leads from `s_i` to the changes that separate it from `s_next`"""
    if s_i == s_next:
        raise DegenerateSubproblem(f"'{name}' has an empty goal: the action changes nothing in this state")
    goal = Goal(frozenset(s_next - s_i), frozenset(s_i - s_next))
    return Problem(name, domain_name, tuple(objects.items()), frozenset(s_i), goal)


def classify_mismatch(extra: GroundAtom, action: Action) -> MismatchKind:
    if all(arg in action.binding for arg in extra.args):
        return MismatchKind.OVERSHOOT
    return MismatchKind.SIDE_EFFECT


def check_alignment(action: Action, expected: EffectSet, subplan_effects: EffectSet, upper: Iterable[str]) -> MisalignmentReport:
    """Compare an action's effects with those of its subplan, restricted to the upper-level predicates"""
    upper = set(upper)
    expected = expected.restrict(upper)
    observed = subplan_effects.restrict(upper)
    split: dict[MismatchKind, tuple[set, set]] = {k: (set(), set()) for k in MismatchKind}
    for atom in observed.add - expected.add:
        split[classify_mismatch(atom, action)][0].add(atom)
    for atom in observed.delete - expected.delete:
        split[classify_mismatch(atom, action)][1].add(atom)
    over, side = (EffectSet(frozenset(a), frozenset(d)) for a, d in (split[MismatchKind.OVERSHOOT], split[MismatchKind.SIDE_EFFECT]))
    under = EffectSet(expected.add - observed.add, expected.delete - observed.delete)
    return MisalignmentReport(action, expected, observed, over, side, under)


def realign_operator(
    op: OperatorDef,
    report: MisalignmentReport,
    rewrite: Callable[[OperatorDef, MisalignmentReport], OperatorDef] | None = None,
) -> OperatorDef:
    """Add overshoots to the operator's effects; side effects need `rewrite` to introduce new parameters.

    Raises:
        OracleRejection: side effects present and no acceptable rewrite
    """
    out = op
    for atoms, negated in ((report.overshoots.add, False), (report.overshoots.delete, True)):
        for atom in sorted(atoms):
            lit = lift_atom(atom, op.params, report.action.binding, negated)
            assert lit is not None
            opposite = replace(lit, negated=not negated)
            out = replace(out, effects=tuple(l for l in out.effects if l != opposite))
            out = out.with_effect(lit)
            log.info("REALIGN %s gains %s", op.name, lit)
    if report.side_effects.empty:
        return out
    if rewrite is None:
        raise OracleRejection(f"Side effects of {report.action} need a rewrite of '{op.name}'")
    rewritten = rewrite(out, report)
    if rewritten.name != op.name or rewritten.arity <= op.arity:
        raise OracleRejection(f"Rewrite of '{op.name}' does not add the parameters its side effects need")
    log.info("REALIGN %s rewritten with parameters %s", op.name, " ".join(v for v, _ in rewritten.params))
    return rewritten


def _side_effect_check(op: OperatorDef) -> Callable[[OperatorDef], None]:
    def check(candidate: OperatorDef) -> None:
        if candidate.arity <= op.arity:
            raise ValueError(f"'{op.name}' needs a new parameter for the object it also changes")
    return check


# ============================================================================
# Serialization
# ============================================================================

def write_hierarchy(node: HierarchyNode, path: Path) -> None:
    """`level-<n>/` directory holding domain, problem, plan and one `children/<index>/` per decomposed action"""
    target = path / f"level-{node.level}"
    prepare_dir(target)
    (target / "domain.pddl").write_text(print_domain(node.domain))
    (target / "problem.pddl").write_text(print_problem(node.problem))
    (target / "plan.txt").write_text(format_plan(node.plan.actions))
    if node.leaf_bindings:
        (target / "skills.txt").write_text("".join(f"{i} {call}\n" for i, call in sorted(node.leaf_bindings.items())))
    for index, child in sorted(node.children.items()):
        write_hierarchy(child, target / "children" / str(index))


def describe_hierarchy(node: HierarchyNode, indent: int = 0) -> list[str]:
    lines = []
    for i, action in enumerate(node.plan.actions):
        if i in node.children:
            child = node.children[i]
            lines.append("  " * indent + f"{action} -> level {child.level}" + (" (reused)" if child.reused else ""))
            lines += describe_hierarchy(child, indent + 1)
        else:
            lines.append("  " * indent + f"{action} -> {node.leaf_bindings.get(i)}")
    return lines


# ============================================================================
# Learner
# ============================================================================

class _Retract(Exception):
    """Unwinds the traversal to the frame at or above `level`, which re-plans"""

    def __init__(self, level: int, reason: str):
        self.level = level
        self.reason = reason
        super().__init__(reason)


@dataclass
class _Owner:
    level: int
    key: DecompositionKey | None


@dataclass
class _DecompositionRequest:
    operator: OperatorDef
    initial_state: SymbolicState
    goal: Goal


@dataclass
class TaskCounters:
    interactions: int = 0
    replans: int = 0
    recoveries: int = 0
    realignments: int = 0


class HierarchyLearner:
    """Builds a hierarchical domain model by planning, decomposing and verifying against an environment.

    Domains are kept per decomposition key so that fixes reach every node that
    shares one. The learner survives across tasks; the environment is replaced
    per task with `begin_task`.
    """

    ROOT = None

    def __init__(
        self,
        name: str,
        types: Iterable[tuple[str, str]],
        predicates: Iterable[PredicateSchema],
        skills: SkillLibrary,
        oracle: Oracle,
        config: LearnerConfig = LearnerConfig(),
        budgets: Budgets = Budgets(),
        registry: ClassifierRegistry | None = None,
    ):
        self.skills = skills
        self.oracle = oracle
        self.config = config
        self.budgets = budgets
        self.registry = registry if registry is not None else ClassifierRegistry()
        self.dataset = TransitionDataset()
        self.audit: list[dict] = []
        self.refinements: list[RefinementRound] = []
        self.label_calls = 0
        self.domains: dict[DecompositionKey | None, DomainModel] = {self.ROOT: DomainModel(name, tuple(types), tuple(predicates))}
        self._owners: dict[str, _Owner] = {}
        self._requests: dict[DecompositionKey, _DecompositionRequest] = {}
        self._translations: dict[str, tuple[SkillCall, ...]] = {}
        self._no_classifier: set[str] = set()
        self._recoveries: list[str] = []
        self._active: list[HierarchyNode] = []
        self._path: list[str] = []
        self.env: Environment | None = None
        self.grounder: Grounder = SymbolicGrounder()
        self.objects: dict[str, str] = {}
        self.static: SymbolicState = frozenset()
        self.goal = Goal()
        self.instruction = ""
        self.counters = TaskCounters()
        self._start_interactions = 0

    # ------------------------------------------------------------------------
    # Tasks
    # ------------------------------------------------------------------------

    @property
    def root_domain(self) -> DomainModel:
        return self.domains[self.ROOT]

    @property
    def continuous(self) -> bool:
        return isinstance(self.grounder, ClassifierRegistry)

    def begin_task(self, env: Environment, instruction: str, goal: Goal = Goal(), static: SymbolicState = frozenset()) -> None:
        self.env = env
        self.objects = dict(env.objects)
        self.instruction = instruction
        self.goal = goal
        self.static = frozenset(static)
        self.counters = TaskCounters()
        self._start_interactions = env.interactions
        world = env.observe()
        self.grounder = self.registry if isinstance(world, ContinuousWorld) else SymbolicGrounder()
        if self.continuous:
            self.dataset.add_start(world)

    def learn_task(self) -> HierarchyNode:
        """Ask for the top-level domain, then plan, decompose and verify until the plan is executed"""
        assert self.env is not None, "begin_task first"
        context = {
            "instruction": self.instruction,
            "skills": self.skills,
            "domain": self.root_domain,
            "objects": self.objects,
            "goal": self.goal,
        }
        edit = self.oracle.ask(OracleRole.DOMAIN, context)
        if self.oracle.last_retried:
            self._count_replan("domain answer re-asked")
        self._set_domain(self.ROOT, edit.apply(self.root_domain))
        for op in edit.operators:
            self._owners[op.name] = _Owner(0, self.ROOT)
        self.goal = edit.apply_goal(self.goal)
        self.static |= frozenset(edit.init)
        if not self.goal.atoms:
            raise LearningFailure("Task has an empty goal", self.audit)
        unknown = sorted({a.predicate for a in self.goal.atoms} - self.root_domain.predicate_names)
        if unknown:
            raise LearningFailure(f"Goal uses predicates the domain does not define: {', '.join(unknown)}", self.audit)

        problem = Problem("task", self.root_domain.name, tuple(self.objects.items()), frozenset(), self.goal)
        root = HierarchyNode(0, self.root_domain, problem)
        self._solve(root)
        return root

    def finish_task(self) -> None:
        """Pseudo-label what was recorded and refine every classifier"""
        if self.continuous:
            self._refine()

    @property
    def interactions(self) -> int:
        assert self.env is not None
        return self.env.interactions - self._start_interactions

    # ------------------------------------------------------------------------
    # Traversal
    # ------------------------------------------------------------------------

    def _solve(self, node: HierarchyNode) -> None:
        if node.level >= self.config.max_depth:
            raise LearningFailure(f"Decomposition deeper than {self.config.max_depth} levels at {' > '.join(self._path)}", self.audit)
        self._active.append(node)
        try:
            self._learn_classifiers(node.domain)
            plan = self._plan(node)
            i = 0
            while True:
                if i == len(plan):
                    if goal_satisfied(self._state(node), node.problem.goal):
                        break
                    plan, i = self._replan(node, f"goal of level {node.level} not reached after its plan"), 0
                    continue
                action = plan.actions[i]
                try:
                    changed = self._execute(node, action)
                    if changed and not self._still_valid(node, plan.actions[i + 1:]):
                        raise _Retract(node.level, f"realigned domain invalidates the rest of the plan after {action}")
                except _Retract as r:
                    if r.level < node.level:
                        raise
                    plan, i = self._replan(node, r.reason), 0
                    continue
                i += 1
        finally:
            self._active.pop()

    def _replan(self, node: HierarchyNode, reason: str) -> Plan:
        self._count_replan(reason)
        node.domain = self.domains[node.key]
        self._learn_classifiers(node.domain)
        return self._plan(node)

    def _execute(self, node: HierarchyNode, action: Action) -> bool:
        """Run one planned action; True when the node's domain changed through realignment"""
        calls = self._translate(node.domain, action)
        self._path.append(str(action))
        try:
            if len(calls) == 1:
                self._run_leaf(node, action, calls[0])
                return False
            return self._run_decomposed(node, action)
        finally:
            self._path.pop()

    def _run_leaf(self, node: HierarchyNode, action: Action, call: SkillCall) -> None:
        assert self.env is not None
        if self.interactions >= self.budgets.interactions:
            raise BudgetExhausted(f"Interaction budget of {self.budgets.interactions} spent before {action}")
        snapshot = self.env.snapshot()
        outcome = verify_leaf(action, call, self.env, self.grounder, node.domain, self.objects, tuple(self._path))
        self.counters.interactions = self.interactions
        if isinstance(outcome, Verified):
            if self.continuous:
                self.dataset.append(outcome.transition)
            node.record_leaf(action, call)
            return
        self.env.restore(snapshot)
        self._fail(node, action, outcome)

    def _run_decomposed(self, node: HierarchyNode, action: Action) -> bool:
        op = node.domain.operator(action.operator)
        assert op is not None
        key = DecompositionKey.of(op)
        before = self._state(node)
        ground = node.domain.ground(action)
        s_next = ground.apply(before)
        try:
            sub = make_subproblem(before, s_next, self.objects, f"{action.operator}-{'-'.join(action.binding)}", f"{node.domain.name}-{op.name}")
        except DegenerateSubproblem as e:
            report = FailureReport(action, None, FailurePhase.EFFECT_MISMATCH, EffectSet(), EffectSet(), error=str(e), path=tuple(self._path), state=before)
            self._fail(node, action, report)

        reused = key in self.domains
        if reused:
            log.info("REUSE  %s for %s", key, action)
        else:
            self._decompose(node, op, key, before, sub.goal)
        child = HierarchyNode(node.level + 1, self.domains[key], sub, key=key, reused=reused)
        self._solve(child)
        node.record_child(action, child)

        after = self._state(node)
        upper = {p.name for p in node.domain.predicates if self.grounder.groundable(p)}
        report = check_alignment(action, state_diff(before, s_next), state_diff(before, after), upper)
        if report.aligned:
            return False
        self.audit.append({"type": "misalignment", **report.to_dict()})
        if not report.underachieved.empty:
            failure = FailureReport(
                action, None, FailurePhase.EFFECT_MISMATCH, report.expected, report.observed,
                error="subplan did not achieve every effect of the action", path=tuple(self._path), state=before,
            )
            self._fail(node, action, failure)
        realigned = realign_operator(op, report, lambda current, r: self._rewrite(current, r))
        self._set_domain(node.key, self.domains[node.key].with_operator(realigned))
        self.counters.realignments += 1
        return True

    def _still_valid(self, node: HierarchyNode, rest: tuple[Action, ...]) -> bool:
        problem = replace(node.problem, init=self._state(node))
        trace = validate_plan(node.domain, problem, rest)
        return trace.valid

    # ------------------------------------------------------------------------
    # Oracle-backed steps
    # ------------------------------------------------------------------------

    def _plan(self, node: HierarchyNode) -> Plan:
        node.problem = replace(node.problem, init=self._state(node))
        try:
            plan = search_plan(node.domain, node.problem, self.config.node_budget)
        except (BudgetExhausted, Unsolvable) as e:
            if isinstance(e, Unsolvable) and not self.config.fallback_on_unsolvable:
                raise LearningFailure(f"No plan at level {node.level}: {e}", self.audit) from e
            log.info("PLAN   level %d: search failed (%s), asking for a plan", node.level, e)
            actions = self.oracle.ask(OracleRole.PLAN_FALLBACK, {"domain": node.domain, "problem": node.problem})
            trace = validate_plan(node.domain, node.problem, actions)
            if trace.failure is not None and trace.failure.status is StepStatus.INVALID_ACTION:
                raise LearningFailure(f"Fallback plan is not well-formed: {trace.failure.missing[0]}", self.audit) from e
            plan = Plan(tuple(actions), Provenance.ORACLE_FALLBACK)
        log.info("PLAN   level %d: %s", node.level, " ".join(str(a) for a in plan) or "(empty)")
        return plan

    def _translate(self, domain: DomainModel, action: Action) -> list[SkillCall]:
        op = domain.operator(action.operator)
        if op is None:
            raise LearningFailure(f"Plan uses unknown operator '{action.operator}'", self.audit)
        lifted = self._translations.get(op.name)
        if lifted is None:
            lifted = tuple(self.oracle.ask(OracleRole.TRANSLATE, {"operator": op, "skills": self.skills, "objects": self.objects}))
            self._translations[op.name] = lifted
            log.debug("Skill mapping of %s: %s", op.name, ", ".join(map(str, lifted)))
        return [bind_skill(c, op, action.binding, self.objects) for c in lifted]

    def _decompose(self, node: HierarchyNode, op: OperatorDef, key: DecompositionKey, before: SymbolicState, goal: Goal) -> None:
        base = DomainModel(f"{node.domain.name}-{op.name}", node.domain.types, node.domain.predicates)
        context = {
            "operator": op,
            "skills": self.skills,
            "domain": base,
            "objects": self.objects,
            "initial_state": before,
            "goal_state": goal,
        }
        edit = self.oracle.ask(OracleRole.DECOMPOSE, context)
        if self.oracle.last_retried:
            self._count_replan("decomposition re-asked")
        self._requests[key] = _DecompositionRequest(op, before, goal)
        self._set_domain(key, edit.apply(base))
        for new in edit.operators:
            self._owners[new.name] = _Owner(node.level + 1, key)
        log.info("DECOMP %s into %s", key, ", ".join(o.name for o in edit.operators))

    def _learn_classifiers(self, domain: DomainModel) -> None:
        if not self.continuous:
            return
        assert self.env is not None
        for schema in domain.predicates:
            if not schema.state_based or schema.name in self.registry or schema.name in self._no_classifier:
                continue
            context = {"predicate": schema, "scene": self.env.observe(), "registry": self.registry}
            program = self.oracle.ask(OracleRole.CLASSIFIER_GEN, context)
            if program is None:
                log.warning("No classifier for %s, it is left out of verification", schema.name)
                self._no_classifier.add(schema.name)
                continue
            self.registry.register(program)
            log.info("CLASSIFY %s", schema.name)

    def _rewrite(self, op: OperatorDef, report: MisalignmentReport) -> OperatorDef:
        feedback = "The subplan also changed objects outside the operator's parameters:\n" + "\n".join(report.side_effects.describe())
        edit = self._ask_author(op.name, feedback, _side_effect_check(op))
        rewritten = next((o for o in edit.operators if o.name == op.name), None)
        if rewritten is None:
            raise OracleRejection(f"Rewrite does not define '{op.name}'")
        return rewritten

    # ------------------------------------------------------------------------
    # Recovery
    # ------------------------------------------------------------------------

    def _fail(self, node: HierarchyNode, action: Action, report: FailureReport) -> NoReturn:
        self.audit.append({"type": "failure", **report.to_dict()})
        if self.continuous and self._refine():
            raise _Retract(node.level, f"classifiers refined after {report.phase.value} of {action}")
        op = node.domain.operator(action.operator)
        assert op is not None
        known = sorted(self._owners)
        decision = decide_recovery(report, self.history(), self.oracle, op, known)
        self.audit.append({"type": "decision", **decision.to_dict(), "rationale": decision.rationale})
        self.counters.recoveries += 1
        self._recoveries.append(f"{decision.fix.value} on {', '.join(decision.operators)} after {report.phase.value} of {action}")
        level = apply_recovery(decision, self, report)
        raise _Retract(level, f"{decision.fix.value} on {', '.join(decision.operators)}")

    def owner_level(self, operator: str) -> int:
        owner = self._owners.get(operator)
        if owner is None:
            raise LearningFailure(f"No level defines operator '{operator}'", self.audit)
        return owner.level

    def _ask_author(self, operator: str, feedback: str, validate: Callable | None = None):
        owner = self._owners.get(operator)
        if owner is None:
            raise LearningFailure(f"No level defines operator '{operator}'", self.audit)
        if owner.key is self.ROOT:
            role = OracleRole.DOMAIN
            context = {
                "instruction": self.instruction,
                "skills": self.skills,
                "domain": self.root_domain,
                "objects": self.objects,
                "goal": self.goal,
            }
        else:
            request = self._requests[owner.key]
            role = OracleRole.DECOMPOSE
            context = {
                "operator": request.operator,
                "skills": self.skills,
                "domain": self.domains[owner.key],
                "objects": self.objects,
                "initial_state": request.initial_state,
                "goal_state": request.goal,
            }
        context |= {"feedback": feedback, "fix": operator}
        if validate is not None:
            def check(edit):
                op = next((o for o in edit.operators if o.name == operator), None)
                if op is None:
                    raise ValueError(f"The answer must redefine '{operator}'")
                validate(op)
        else:
            check = None
        edit = self.oracle.ask(role, context, check)
        if self.oracle.last_retried:
            self._count_replan(f"fix of {operator} re-asked")
        self._set_domain(owner.key, edit.apply(self.domains[owner.key]))
        for op in edit.operators:
            self._owners.setdefault(op.name, owner)
        return edit

    def edit_operator(self, operator: str, feedback: str) -> int:
        self._ask_author(operator, feedback)
        log.info("RECOVER %s redefined", operator)
        return self.owner_level(operator)

    def retranslate(self, operator: str, feedback: str) -> int:
        level = self.owner_level(operator)
        owner = self._owners[operator]
        op = self.domains[owner.key].operator(operator)
        if op is None:
            raise LearningFailure(f"Operator '{operator}' was deleted", self.audit)
        self._translations.pop(operator, None)
        context = {"operator": op, "skills": self.skills, "objects": self.objects, "feedback": feedback}
        self._translations[operator] = tuple(self.oracle.ask(OracleRole.TRANSLATE, context))
        log.info("RECOVER %s mapped to %s", operator, ", ".join(map(str, self._translations[operator])))
        return level

    def history(self) -> str:
        """Which level authored which operators, and the recoveries so far"""
        groups: dict[tuple[int, str], list[str]] = {}
        for name, owner in self._owners.items():
            groups.setdefault((owner.level, str(owner.key) if owner.key else ""), []).append(name)
        lines = []
        for (level, key), names in sorted(groups.items()):
            lines.append(f"Level {level}" + (f" ({key})" if key else "") + ": " + ", ".join(sorted(names)))
        lines += [f"Recovery {i}: {text}" for i, text in enumerate(self._recoveries, start=1)]
        return "\n".join(lines)

    # ------------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------------

    def _set_domain(self, key: DecompositionKey | None, domain: DomainModel) -> None:
        self.domains[key] = domain
        for node in self._active:
            if node.key == key:
                node.domain = domain

    def _state(self, node: HierarchyNode) -> SymbolicState:
        assert self.env is not None
        grounded = ground_state(self.grounder, self.env.observe(), node.domain, self.objects)
        # state-independent atoms are never observed
        static = {p.name for p in node.domain.predicates if not p.state_based}
        return grounded | frozenset(a for a in self.static if a.predicate in static)

    def _count_replan(self, reason: str) -> None:
        if self.counters.replans >= self.budgets.replans:
            raise BudgetExhausted(f"Replanning budget of {self.budgets.replans} spent ({reason})")
        self.counters.replans += 1
        log.info("REPLAN %d/%d: %s", self.counters.replans, self.budgets.replans, reason)

    def schemas(self) -> dict[str, PredicateSchema]:
        out = {}
        for domain in self.domains.values():
            for p in domain.predicates:
                out.setdefault(p.name, p)
        return out

    def _refine(self) -> bool:
        """Pseudo-label the dataset and refine every classifier; True if any classifier changed"""
        schemas = self.schemas()
        atoms_of = {
            name: ground_atoms(schemas[name], self.root_domain if name in self.root_domain.predicate_names else self._domain_with(name), self.objects)
            for name in self.registry if name in schemas
        }
        candidates = sorted(a for atoms in atoms_of.values() for a in atoms)
        if not candidates:
            return False

        def labeler(world):
            return self.oracle.ask(OracleRole.PSEUDO_LABEL, {"scene": world, "atoms": candidates})

        self.label_calls += self.dataset.label(labeler, self.config.tau_sim)
        before = {name: (self.registry.program(name), self.registry.theta(name)) for name in self.registry}
        self.refinements += refine_all(self.registry, self.dataset.samples(), atoms_of, self.config, self.oracle)
        after = {name: (self.registry.program(name), self.registry.theta(name)) for name in self.registry}
        return before != after

    def _domain_with(self, predicate: str) -> DomainModel:
        return next(d for d in self.domains.values() if predicate in d.predicate_names)
