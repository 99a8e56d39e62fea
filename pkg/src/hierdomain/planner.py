import heapq
import itertools
import logging
import math
from collections import deque
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from enum import Enum

from .errors import BudgetExhausted, Unsolvable
from .symbolic import (
    Action,
    DomainModel,
    EffectSet,
    GroundAtom,
    GroundedTask,
    Goal,
    Problem,
    SymbolicState,
    apply,
    goal_satisfied,
    state_diff,
)


log = logging.getLogger(__name__)


DEFAULT_NODE_BUDGET = 100_000
PLATEAU_LIMIT = 2_000


class Provenance(Enum):
    SEARCH = "search"
    ORACLE_FALLBACK = "oracle-fallback"


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...] = ()
    provenance: Provenance = Provenance.SEARCH

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[Action]:
        return iter(self.actions)


class StepStatus(Enum):
    OK = "ok"
    PRECONDITION_FAILURE = "precondition-failure"
    INVALID_ACTION = "invalid-action"


@dataclass(frozen=True)
class TraceStep:
    state: SymbolicState
    action: Action
    status: StepStatus
    missing: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationTrace:
    steps: tuple[TraceStep, ...]
    final_state: SymbolicState
    goal_achieved: bool

    @property
    def failure(self) -> TraceStep | None:
        if self.steps and self.steps[-1].status is not StepStatus.OK:
            return self.steps[-1]
        return None

    @property
    def executable(self) -> bool:
        return self.failure is None

    @property
    def valid(self) -> bool:
        return self.executable and self.goal_achieved

    def describe(self) -> str:
        lines = []
        for i, step in enumerate(self.steps, start=1):
            if step.status is StepStatus.OK:
                lines.append(f"{i:3d} ok   {step.action}")
            else:
                lines.append(f"{i:3d} FAIL {step.action}: {step.status.value} {' '.join(step.missing)}")
        lines.append("goal achieved" if self.goal_achieved else "goal NOT achieved")
        return "\n".join(lines)


# ============================================================================
# Relaxed heuristic
# ============================================================================

class AdditiveHeuristic:
    """Sum of relaxed (delete-free, positive-precondition) atom costs over the goal.

    Negative goal atoms that currently hold count one each.
    """

    def __init__(self, task: GroundedTask, goal: Goal):
        self.goal = goal
        self.pre = [tuple(a.pre_pos) for a in task.actions]
        self.add = [tuple(a.add) for a in task.actions]
        self.consumers: dict[GroundAtom, list[int]] = {}
        self.free: list[int] = []
        for i, pre in enumerate(self.pre):
            if not pre:
                self.free.append(i)
            for atom in pre:
                self.consumers.setdefault(atom, []).append(i)

    def __call__(self, state: SymbolicState) -> float:
        dist: dict[GroundAtom, float] = {a: 0 for a in state}
        remaining = [len(p) for p in self.pre]
        acc = [0.0] * len(self.pre)
        heap: list[tuple[float, GroundAtom]] = [(0, a) for a in state]
        heapq.heapify(heap)
        for i in self.free:
            for q in self.add[i]:
                if dist.get(q, math.inf) > 1:
                    dist[q] = 1
                    heapq.heappush(heap, (1, q))
        targets = set(self.goal.positive)
        done: set[GroundAtom] = set()
        while heap and targets:
            c, atom = heapq.heappop(heap)
            if atom in done or c > dist.get(atom, math.inf):
                continue
            done.add(atom)
            targets.discard(atom)
            for i in self.consumers.get(atom, ()):
                remaining[i] -= 1
                acc[i] += c
                if remaining[i] == 0:
                    cost = acc[i] + 1
                    for q in self.add[i]:
                        if cost < dist.get(q, math.inf):
                            dist[q] = cost
                            heapq.heappush(heap, (cost, q))
        h = 0.0
        for g in self.goal.positive:
            d = dist.get(g, math.inf)
            if d == math.inf:
                return math.inf
            h += d
        return h + len(self.goal.negative & state)


# ============================================================================
# Search
# ============================================================================

def search_plan(d: DomainModel, p: Problem, budget: int = DEFAULT_NODE_BUDGET) -> Plan:
    """Greedy best-first search, switching to breadth-first on heuristic plateaus.

    Raises:
        Unsolvable: the reachable state space holds no goal state
        BudgetExhausted: more than `budget` nodes were expanded
    """
    if goal_satisfied(p.init, p.goal):
        return Plan(())
    task = GroundedTask(d, p.object_types, static_init=p.init)
    heuristic = AdditiveHeuristic(task, p.goal)
    h0 = heuristic(p.init)
    if h0 == math.inf:
        raise Unsolvable(f"Goal of '{p.name}' is unreachable even under the delete relaxation")

    counter = itertools.count()
    open_heap: list[tuple[float, int, SymbolicState]] = [(h0, next(counter), p.init)]
    fifo: deque[SymbolicState] | None = None
    parents: dict[SymbolicState, tuple[SymbolicState, Action] | None] = {p.init: None}
    closed: set[SymbolicState] = set()
    best_h = h0
    since_improved = 0
    expanded = 0

    while True:
        if fifo is None:
            if not open_heap:
                break
            _, _, state = heapq.heappop(open_heap)
        else:
            if not fifo:
                break
            state = fifo.popleft()
        if state in closed:
            continue
        closed.add(state)
        expanded += 1
        if expanded > budget:
            raise BudgetExhausted(f"Expanded {budget} nodes without reaching the goal of '{p.name}'")

        for ground in task.applicable(state):
            succ = ground.apply(state)
            if succ in parents:
                continue
            parents[succ] = (state, ground.action)
            if goal_satisfied(succ, p.goal):
                plan = _backtrack(parents, succ)
                log.debug("Found plan of length %d after %d expansions", len(plan), expanded)
                return Plan(tuple(plan))
            if fifo is not None:
                fifo.append(succ)
                continue
            h = heuristic(succ)
            if h == math.inf:
                continue
            heapq.heappush(open_heap, (h, next(counter), succ))
            if h < best_h:
                best_h = h
                since_improved = 0

        if fifo is None:
            since_improved += 1
            if since_improved > PLATEAU_LIMIT:
                log.debug("Heuristic plateau at h=%s, continuing breadth-first", best_h)
                fifo = deque(s for _, _, s in sorted(open_heap, key=lambda e: e[1]))
                open_heap = []

    raise Unsolvable(f"Search space of '{p.name}' exhausted after {expanded} expansions")


def _backtrack(parents: dict, state: SymbolicState) -> list[Action]:
    plan = []
    link = parents[state]
    while link is not None:
        prev, action = link
        plan.append(action)
        link = parents[prev]
    plan.reverse()
    return plan


# ============================================================================
# Validation
# ============================================================================

def _invalid_reason(d: DomainModel, p: Problem, action: Action) -> str | None:
    op = d.operator(action.operator)
    if op is None:
        return f"unknown operator {action.operator}"
    if op.arity != len(action.binding):
        return f"{action.operator} takes {op.arity} arguments"
    types = p.object_types
    for (var, ptype), obj in zip(op.params, action.binding):
        if obj not in types:
            return f"unknown object {obj}"
        if not d.is_subtype(types[obj], ptype):
            return f"{obj} is not a {ptype} ({var})"
    return None


def validate_plan(d: DomainModel, p: Problem, plan: Plan | Iterable[Action]) -> ValidationTrace:
    state = p.init
    steps: list[TraceStep] = []
    for action in plan:
        reason = _invalid_reason(d, p, action)
        if reason is not None:
            steps.append(TraceStep(state, action, StepStatus.INVALID_ACTION, (reason,)))
            return ValidationTrace(tuple(steps), state, False)
        ground = d.ground(action)
        missing = ground.missing(state)
        if missing:
            steps.append(TraceStep(state, action, StepStatus.PRECONDITION_FAILURE, missing))
            return ValidationTrace(tuple(steps), state, False)
        steps.append(TraceStep(state, action, StepStatus.OK))
        state = ground.apply(state)
    return ValidationTrace(tuple(steps), state, goal_satisfied(state, p.goal))


def joint_effects(d: DomainModel, p_init: SymbolicState, plan: Plan | Iterable[Action]) -> EffectSet:
    state = p_init
    for action in plan:
        state = apply(d, state, action)
    return state_diff(p_init, state)
