import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from itertools import groupby

import numpy as np

from .errors import PlanningError, TaskUnsolvableInReference, VocabularyMismatch
from .planner import DEFAULT_NODE_BUDGET, search_plan, validate_plan
from .symbolic import Action, DomainModel, GroundAtom, Goal, Problem, applicable, apply, normalize_name


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EWConfig:
    """Exploration-walk sampling; `max_len` None means reference solution length + 2"""
    walks: int = 500
    max_len: int | None = None
    seed: int = 0
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.walks < 1:
            raise ValueError("EWConfig.walks must be at least 1")
        if self.max_len is not None and self.max_len < 0:
            raise ValueError("EWConfig.max_len must not be negative")


def harmonic_mean(p: float, q: float) -> float:
    if p <= 0 or q <= 0:
        return 0.0
    return 2 * p * q / (p + q)


@dataclass(frozen=True)
class TaskEW:
    task: str
    learned_to_reference: float
    reference_to_learned: float
    walk_length: int

    @property
    def harmonic(self) -> float:
        return harmonic_mean(self.learned_to_reference, self.reference_to_learned)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "learned_to_reference": self.learned_to_reference,
            "reference_to_learned": self.reference_to_learned,
            "harmonic": self.harmonic,
            "walk_length": self.walk_length,
        }


@dataclass
class EWReport:
    tasks: list[TaskEW] = field(default_factory=list)
    success_rate: float | None = None

    @property
    def aggregate(self) -> float:
        if not self.tasks:
            return 0.0
        return float(np.mean([t.harmonic for t in self.tasks]))

    def to_dict(self) -> dict:
        out = {"aggregate": self.aggregate, "tasks": [t.to_dict() for t in self.tasks]}
        if self.success_rate is not None:
            out["success_rate"] = self.success_rate
        return out


# ============================================================================
# Vocabulary
# ============================================================================

class Vocabulary:
    """Predicate and operator renaming between two domains, by canonical name"""

    def __init__(self, source: DomainModel, target: DomainModel):
        target_predicates = {normalize_name(p.name): p.name for p in target.predicates}
        self.predicates: dict[str, str] = {}
        unmatched = []
        for p in source.predicates:
            key = normalize_name(p.name)
            if key in target_predicates:
                self.predicates[p.name] = target_predicates[key]
            else:
                unmatched.append(p.name)
        if unmatched:
            raise VocabularyMismatch(sorted(unmatched))
        target_operators = {normalize_name(o.name): o.name for o in target.operators}
        self.operators = {o.name: target_operators.get(normalize_name(o.name), o.name) for o in source.operators}

    def atom(self, a: GroundAtom) -> GroundAtom:
        return replace(a, predicate=self.predicates.get(a.predicate, a.predicate))

    def action(self, a: Action) -> Action:
        return replace(a, operator=self.operators.get(a.operator, a.operator))


def _problem_for(domain: DomainModel, p: Problem) -> Problem:
    """`p` in the vocabulary of `domain`; atoms over predicates it lacks are dropped"""
    by_key = {normalize_name(s.name): s.name for s in domain.predicates}

    def rename(atoms):
        return frozenset(
            GroundAtom(by_key[normalize_name(a.predicate)], a.args) for a in atoms if normalize_name(a.predicate) in by_key
        )
    return replace(p, domain_name=domain.name, init=rename(p.init), goal=Goal(rename(p.goal.positive), rename(p.goal.negative)))


# ============================================================================
# Walks
# ============================================================================

def bootstrap_task_domain(d: DomainModel, task: Problem, reference: DomainModel, budget: int = DEFAULT_NODE_BUDGET) -> tuple[DomainModel, int]:
    """Restrict `d` to the operators of a reference solution of `task`; also returns the solution length.

    Raises:
        TaskUnsolvableInReference: no reference plan within `budget`
    """
    try:
        plan = search_plan(reference, _problem_for(reference, task), budget)
    except PlanningError as e:
        raise TaskUnsolvableInReference(f"Task '{task.name}' has no reference solution: {e}") from e
    used = {normalize_name(a.operator) for a in plan}
    restricted = d.restrict_operators(o.name for o in d.operators if normalize_name(o.name) in used)
    log.debug("Task %s uses operators %s", task.name, ", ".join(sorted(used)))
    return restricted, len(plan)


def sample_walk(d: DomainModel, p: Problem, max_len: int, rng: np.random.Generator) -> list[Action]:
    """Random walk picking uniformly among applicable operators, then among that operator's actions"""
    state = p.init
    walk: list[Action] = []
    for _ in range(max_len):
        actions = applicable(d, state, p)
        if not actions:
            break
        by_operator = [list(group) for _, group in groupby(actions, key=lambda a: a.operator)]
        choices = by_operator[rng.integers(len(by_operator))]
        action = choices[rng.integers(len(choices))]
        walk.append(action)
        state = apply(d, state, action)
    return walk


def executable_share(walks: Sequence[list[Action]], other: DomainModel, p: Problem, vocabulary: Vocabulary) -> float:
    """Share of walks whose every action is applicable when replayed in `other`"""
    ok = sum(validate_plan(other, p, [vocabulary.action(a) for a in w]).executable for w in walks)
    return ok / len(walks)


def ew_score(
    learned: DomainModel,
    reference: DomainModel,
    tasks: Sequence[Problem] | Mapping[str, Problem],
    cfg: EWConfig = EWConfig(),
) -> EWReport:
    """Exploration-walk agreement of two domains over a task set.

    Raises:
        VocabularyMismatch: a predicate of one domain has no counterpart in the other
    """
    forward = Vocabulary(learned, reference)
    backward = Vocabulary(reference, learned)
    problems = tasks if isinstance(tasks, Mapping) else {p.name: p for p in tasks}
    report = EWReport()
    for index, (name, task) in enumerate(problems.items()):
        ref_domain, solution = bootstrap_task_domain(reference, task, reference, cfg.node_budget)
        learned_domain, _ = bootstrap_task_domain(learned, task, reference, cfg.node_budget)
        max_len = cfg.max_len if cfg.max_len is not None else solution + 2
        learned_problem = _problem_for(learned_domain, task)
        ref_problem = _problem_for(ref_domain, task)

        rng = np.random.default_rng((cfg.seed, index, 0))
        walks = [sample_walk(learned_domain, learned_problem, max_len, rng) for _ in range(cfg.walks)]
        l2r = executable_share(walks, ref_domain, ref_problem, forward)
        rng = np.random.default_rng((cfg.seed, index, 1))
        walks = [sample_walk(ref_domain, ref_problem, max_len, rng) for _ in range(cfg.walks)]
        r2l = executable_share(walks, learned_domain, learned_problem, backward)

        entry = TaskEW(name, l2r, r2l, max_len)
        log.info("EW     %s: %.3f / %.3f -> %.3f", name, l2r, r2l, entry.harmonic)
        report.tasks.append(entry)
    return report
