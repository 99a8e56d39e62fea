import pytest

import hierdomain as hd
from hierdomain.envs import fixture_path


@pytest.fixture
def logistics() -> hd.DomainModel:
    return hd.parse_domain(fixture_path("logistics", "domain.pddl").read_text())


def test_parse_logistics(logistics):
    assert logistics.name == "logistics"
    assert [o.name for o in logistics.operators] == [
        "load_truck", "unload_truck", "load_plane", "unload_plane", "drive_truck", "fly_plane",
    ]
    assert logistics.is_subtype("truck", "physobj")
    assert logistics.state_based == {"at", "in"}
    drive = logistics.operator("drive_truck")
    assert drive.param_types == ("truck", "location", "location", "city")
    assert hd.Literal("at", ("?t", "?from"), negated=True) in drive.effects


def test_parse_problem(logistics):
    p = hd.parse_problem(fixture_path("logistics", "task1.pddl").read_text(), logistics)
    assert p.name == "logistics-task1"
    assert p.object_types["plane_0"] == "airplane"
    assert hd.GroundAtom("at", ("package_0", "location_0")) in p.init
    assert p.goal.positive == {hd.GroundAtom("at", ("package_0", "location_2"))}


def test_printed_domain_parses_back(logistics):
    parsed = hd.parse_domain(hd.print_domain(logistics))
    assert parsed == logistics
    assert [p.kind for p in parsed.predicates] == [p.kind for p in logistics.predicates]
    assert parsed.predicate("airport").kind is hd.PredicateKind.STATE_INDEPENDENT


def test_predicate_kind_takes_part_in_equality(logistics):
    flipped = logistics.with_predicates([hd.PredicateSchema("airport", (("?l", "location"),))])
    assert flipped != logistics


def test_parent_type_used_without_declaration():
    d = hd.parse_domain("""
    (define (domain d)
      (:types a - b)
      (:predicates (p ?x - b))
      (:action touch :parameters (?x - a) :precondition (p ?x) :effect (not (p ?x))))
    """)
    assert ("b", "object") in d.types
    assert d.is_subtype("a", "b")
    assert d.predicate("p").params == (("?x", "b"),)


@pytest.mark.parametrize("task", ["task1.pddl", "task2.pddl", "task3.pddl"])
def test_printed_problem_parses_back(logistics, task):
    problem = hd.parse_problem(fixture_path("logistics", task).read_text(), logistics)
    assert hd.parse_problem(hd.print_problem(problem), logistics) == problem


def test_syntax_error_carries_position():
    text = "(define (domain d)\n  (:predicates (p ?x))\n  (:action a\n    :parameters (?x)\n    :precondition (p ?y)))\n"
    with pytest.raises(hd.PDDLSyntaxError) as exc:
        hd.parse_domain(text)
    assert exc.value.line == 5
    assert "?y" in str(exc.value)


def test_unbalanced_parenthesis():
    with pytest.raises(hd.PDDLSyntaxError) as exc:
        hd.parse_domain("(define (domain d) (:predicates (p ?x))")
    assert exc.value.line >= 1


@pytest.mark.parametrize("text", [
    "(define (domain d) (:functions (cost)))",
    "(define (domain d) (:requirements :adl))",
    "(define (domain d) (:predicates (p ?x)) (:action a :parameters (?x) :precondition (or (p ?x) (p ?x))))",
    "(define (domain d) (:constants c) (:predicates (p ?x)))",
])
def test_unsupported_features(text):
    with pytest.raises(hd.errors.UnsupportedFeature):
        hd.parse_domain(text)


def test_add_and_delete_of_same_literal_is_rejected():
    text = "(define (domain d) (:predicates (p ?x)) (:action a :parameters (?x) :effect (and (p ?x) (not (p ?x)))))"
    with pytest.raises(hd.PDDLSyntaxError):
        hd.parse_domain(text)


def test_undeclared_predicate():
    with pytest.raises(hd.errors.UnknownPredicate):
        hd.parse_domain("(define (domain d) (:predicates (p ?x)) (:action a :parameters (?x) :effect (q ?x)))")


def test_problem_with_unknown_object(logistics):
    text = "(define (problem p) (:domain logistics) (:objects l1 - location) (:init (airport l2)) (:goal (and)))"
    with pytest.raises(hd.errors.UnknownObject):
        hd.parse_problem(text, logistics)


def test_parse_predicate():
    schema = hd.parse_predicate("(holding ?r - robot ?p - part) ; state: the gripper holds the part")
    assert schema.arity == 2
    assert schema.state_based
    assert schema.description == "the gripper holds the part"
    assert not hd.parse_predicate("(airport ?l - location) ; other").state_based


def test_parse_plan_skips_comments():
    plan = hd.parse_plan(fixture_path("logistics", "plan1.txt").read_text())
    assert len(plan) == 10
    assert plan[0] == hd.Action("load_truck", ("package_0", "truck_1", "location_0"))
    with pytest.raises(hd.PDDLSyntaxError):
        hd.parse_plan("(load_truck (package_0))")


def test_parse_operator(logistics):
    op = hd.parse_operator(
        "(:action pick :parameters (?p - package ?t - truck ?l - location) :precondition (at ?p ?l) :effect (in ?p ?t))",
        logistics,
    )
    assert op.name == "pick"
    assert op.add_effects == (hd.Literal("in", ("?p", "?t")),)
