from dataclasses import replace

import pytest

import hierdomain as hd
from hierdomain.envs import ContinuousWorld, PartPose, fixture_path
from hierdomain.envs.base import RobotState, TableState
from hierdomain.errors import ClassifierSyntaxError, CyclicReference, MissingObject, NumericDomainError, UnknownAccessor


@pytest.fixture
def world() -> ContinuousWorld:
    return ContinuousWorld(
        parts=(
            ("block", PartPose((0.4, 0.0, 0.02), (0.0, 0.0, 0.0), (0.02, 0.02, 0.02))),
            ("peg", PartPose((0.4, 0.005, 0.06), (0.0, 0.0, 0.5), (0.01, 0.01, 0.02))),
        ),
        robots=(("arm", RobotState((0.4, 0.0, 0.2), False)),),
        tables=(("table", TableState(0.0)),),
    )


def atom(text: str) -> hd.GroundAtom:
    name, *args = text.split()
    return hd.GroundAtom(name, tuple(args))


ON_TABLE = "on_table(p, t){z_tol=0.005 m} := |bottom_z(p) - surface_z(t)| <= z_tol"


def test_parse_hyperparameters():
    c = hd.parse_classifier(ON_TABLE)
    assert c.predicate == "on_table"
    assert c.params == ("p", "t")
    assert c.defaults == {"z_tol": 0.005}
    assert c.hypers[0].unit == "m"


def test_evaluate(world):
    c = hd.parse_classifier(ON_TABLE)
    assert hd.eval_classifier(c, atom("on_table block table"), world)
    assert not hd.eval_classifier(c, atom("on_table peg table"), world)
    assert hd.eval_classifier(c, atom("on_table peg table"), world, {"z_tol": 0.05})


def test_operator_precedence(world):
    c = hd.parse_classifier("p(a) := 1 + 2 * 3 == 7 && !false || false")
    assert hd.eval_classifier(c, atom("p block"), world)


@pytest.mark.parametrize("text, error", [
    ("p(a) := top_z(a)", ClassifierSyntaxError),
    ("p(a) := top_z(a) <= tol", UnknownAccessor),
    ("p(a) := wobble(a) > 0", UnknownAccessor),
    ("p(a) := top_z(a) && true", ClassifierSyntaxError),
    ("p(a){a=1} := true", ClassifierSyntaxError),
    ("p(a) := p(a)", CyclicReference),
    ("p(a) := top_z(a) <=", ClassifierSyntaxError),
])
def test_rejected_programs(text, error):
    with pytest.raises(error):
        hd.parse_classifier(text)


def test_missing_object(world):
    c = hd.parse_classifier(ON_TABLE)
    with pytest.raises(MissingObject):
        hd.eval_classifier(c, atom("on_table lamp table"), world)


def test_wrong_kind_of_object(world):
    c = hd.parse_classifier(ON_TABLE)
    with pytest.raises(NumericDomainError):
        hd.eval_classifier(c, atom("on_table arm table"), world)


def test_vector_arithmetic(world):
    c = hd.parse_classifier("near(a, b){tol=0.05} := |center(a) - center(b)| <= tol")
    assert hd.eval_classifier(c, atom("near block peg"), world)
    assert not hd.eval_classifier(c, atom("near block peg"), world, {"tol": 0.01})


def test_angle_wraps(world):
    c = hd.parse_classifier("level(a, b){tol=0.1} := |angle_diff(yaw(a), yaw(b))| <= tol")
    wrapped = ContinuousWorld(parts=(
        ("a", PartPose((0, 0, 0), (0.0, 0.0, 3.13), (1, 1, 1))),
        ("b", PartPose((0, 0, 0), (0.0, 0.0, -3.13), (1, 1, 1))),
    ))
    assert hd.eval_classifier(c, atom("level a b"), wrapped)
    assert not hd.eval_classifier(c, atom("level block peg"), world)


def test_registry_composition_and_cycles(world):
    registry = hd.ClassifierRegistry()
    registry.register(hd.parse_classifier("open_hand(r) := !gripper_closed(r)"))
    ready = hd.parse_classifier("ready(r, p){h=0.2} := open_hand(r) && z(gripper_center(r)) - top_z(p) <= h", registry)
    registry.register(ready)
    assert registry.dependencies("ready") == {"open_hand"}
    assert registry.evaluate(atom("ready arm block"), world)
    with pytest.raises(CyclicReference):
        hd.parse_classifier("open_hand(r) := ready(r, r)", registry)


def test_ground_skips_inapplicable_arguments(world):
    d = hd.DomainModel(
        "scene",
        (("robot", "object"), ("part", "object"), ("table", "object")),
        (hd.PredicateSchema("on_table", (("?p", "object"), ("?t", "table"))),),
    )
    registry = hd.ClassifierRegistry()
    registry.register(hd.parse_classifier(ON_TABLE))
    objects = {"arm": "robot", "block": "part", "peg": "part", "table": "table"}
    assert registry.ground(world, d.predicates, d, objects) == {atom("on_table block table")}


def test_save_and_load_keep_hyperparameters(tmp_path, world):
    registry = hd.ClassifierRegistry()
    registry.register(hd.parse_classifier("open_hand(r) := !gripper_closed(r)"))
    registry.register(hd.parse_classifier("ready(r, p){h=0.2} := open_hand(r) && z(gripper_center(r)) - top_z(p) <= h", registry))
    registry.set_theta("ready", {"h": 0.05})
    registry.save(tmp_path / "classifiers")

    loaded = hd.ClassifierRegistry.load(tmp_path / "classifiers")
    assert sorted(loaded) == ["open_hand", "ready"]
    assert loaded.theta("ready") == {"h": 0.05}
    assert not loaded.evaluate(atom("ready arm block"), world)


def test_lamp_classifiers_load():
    registry = hd.ClassifierRegistry.load(fixture_path("lamp", "script", "classifiers"))
    assert len(registry) == 9
    assert registry.program("aligned").defaults == {"xy_tol": 0.01, "angle_tol": 0.1, "z_tol": 0.005}


def test_assembled_follows_connection_state_not_poses(world):
    registry = hd.ClassifierRegistry.load(fixture_path("lamp", "script", "classifiers"))
    assert registry.program("assembled").source.startswith("#")
    seated = atom("assembled peg block")
    assert not registry.evaluate(seated, world)
    assert registry.evaluate(seated, replace(world, assembled=frozenset({("peg", "block")})))
