import itertools
from dataclasses import replace

import pytest

import hierdomain as hd
from hierdomain.envs import fixture_path
from hierdomain.planner import StepStatus


@pytest.fixture
def logistics() -> hd.DomainModel:
    return hd.parse_domain(fixture_path("logistics", "domain.pddl").read_text())


@pytest.fixture
def task1(logistics) -> hd.Problem:
    return hd.parse_problem(fixture_path("logistics", "task1.pddl").read_text(), logistics)


def test_search_solves_task1(logistics, task1):
    plan = hd.search_plan(logistics, task1)
    assert len(plan) >= 8
    assert hd.validate_plan(logistics, task1, plan).valid


def test_search_solves_five_packages(logistics):
    task2 = hd.parse_problem(fixture_path("logistics", "task2.pddl").read_text(), logistics)
    plan = hd.search_plan(logistics, task2)
    assert hd.validate_plan(logistics, task2, plan).valid


def test_published_plan_is_valid(logistics, task1):
    plan = hd.parse_plan(fixture_path("logistics", "plan1.txt").read_text())
    trace = hd.validate_plan(logistics, task1, plan)
    assert trace.valid
    assert len(trace.steps) == 10


def test_empty_plan_when_goal_holds(logistics, task1):
    solved = replace(task1, init=task1.init | task1.goal.positive)
    assert len(hd.search_plan(logistics, solved)) == 0


def test_validation_stops_at_first_failure(logistics, task1):
    plan = hd.parse_plan("""
    (fly_plane plane_0 location_1 location_0)
    (load_plane package_0 plane_0 location_1)
    (fly_plane plane_0 location_0 location_1)
    """)
    trace = hd.validate_plan(logistics, task1, plan)
    assert not trace.executable
    assert len(trace.steps) == 2
    assert trace.failure.status is StepStatus.PRECONDITION_FAILURE
    assert trace.failure.missing == ("(at package_0 location_1)", "(at plane_0 location_1)")


def test_validation_reports_invalid_actions(logistics, task1):
    trace = hd.validate_plan(logistics, task1, [hd.Action("teleport", ("package_0",))])
    assert trace.failure.status is StepStatus.INVALID_ACTION
    trace = hd.validate_plan(logistics, task1, [hd.Action("load_truck", ("package_0", "plane_0", "location_0"))])
    assert trace.failure.status is StepStatus.INVALID_ACTION


def test_executable_but_goal_missed(logistics, task1):
    trace = hd.validate_plan(logistics, task1, [hd.Action("load_truck", ("package_0", "truck_1", "location_0"))])
    assert trace.executable
    assert not trace.valid
    assert trace.describe().endswith("goal NOT achieved")


def test_unsolvable(logistics, task1):
    no_airport = replace(task1, init=task1.init - {hd.GroundAtom("airport", ("location_1",))})
    with pytest.raises(hd.Unsolvable):
        hd.search_plan(logistics, no_airport)


def test_budget_exhausted(logistics, task1):
    with pytest.raises(hd.BudgetExhausted):
        hd.search_plan(logistics, task1, budget=1)


def test_joint_effects(logistics, task1):
    plan = hd.parse_plan(fixture_path("logistics", "plan1.txt").read_text())
    effects = hd.joint_effects(logistics, task1.init, plan)
    assert effects.add == {hd.GroundAtom("at", ("package_0", "location_2"))}
    assert effects.delete == {hd.GroundAtom("at", ("package_0", "location_0"))}


# ============================================================================
# Validator against brute-force simulation
# ============================================================================

CYCLE = """
(define (domain cycle)
  (:requirements :strips :negative-preconditions :equality)
  (:predicates (p ?x) (q ?x) (r ?x))
  (:action a :parameters (?x) :precondition (p ?x) :effect (and (q ?x) (not (p ?x))))
  (:action b :parameters (?x ?y) :precondition (and (q ?x) (not (r ?y)) (not (= ?x ?y))) :effect (r ?y))
  (:action c :parameters (?x) :precondition (r ?x) :effect (and (p ?x) (not (r ?x)))))
"""


def simulate(domain: hd.DomainModel, init: hd.SymbolicState, plan) -> tuple[bool, hd.SymbolicState]:
    state = set(init)
    for action in plan:
        op = domain.operator(action.operator)
        sub = {var: obj for (var, _), obj in zip(op.params, action.binding)}
        for lit in op.precondition:
            args = tuple(sub[t] for t in lit.args)
            holds = args[0] == args[1] if lit.predicate == "=" else hd.GroundAtom(lit.predicate, args) in state
            if holds == lit.negated:
                return False, frozenset(state)
        for lit in op.effects:
            if lit.negated:
                state.discard(hd.GroundAtom(lit.predicate, tuple(sub[t] for t in lit.args)))
        for lit in op.effects:
            if not lit.negated:
                state.add(hd.GroundAtom(lit.predicate, tuple(sub[t] for t in lit.args)))
    return True, frozenset(state)


@pytest.mark.parametrize("init", [
    {("p", "o1"), ("p", "o2")},
    {("r", "o1"), ("q", "o2")},
    set(),
])
def test_validator_agrees_with_simulation(init):
    domain = hd.parse_domain(CYCLE)
    objects = ("o1", "o2")
    problem = hd.Problem(
        "cycle-1", "cycle", tuple((o, "object") for o in objects),
        frozenset(hd.GroundAtom(name, (arg,)) for name, arg in init),
        hd.Goal(frozenset({hd.GroundAtom("r", ("o2",))})),
    )
    actions = [
        hd.Action(op.name, binding)
        for op in domain.operators
        for binding in itertools.product(objects, repeat=op.arity)
    ]
    assert len(actions) == 8
    checked = 0
    for length in range(5):
        for plan in itertools.product(actions, repeat=length):
            trace = hd.validate_plan(domain, problem, plan)
            executable, state = simulate(domain, problem.init, plan)
            assert trace.executable == executable
            assert trace.final_state == state
            assert trace.goal_achieved == (executable and hd.goal_satisfied(state, problem.goal))
            checked += 1
    assert checked == 4681
