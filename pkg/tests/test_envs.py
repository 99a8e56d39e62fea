import pytest

import hierdomain as hd
from hierdomain.envs import ContinuousWorld, DiscreteWorld, HouseholdEnvironment, NoiseConfig, TabletopEnvironment, fixture_path, world_distance
from hierdomain.errors import SkillError, UnknownSkill


def atom(text: str) -> hd.GroundAtom:
    name, *args = text.split()
    return hd.GroundAtom(name, tuple(args))


@pytest.fixture
def logistics():
    return hd.Manifest.load(fixture_path("logistics", "manifest.json")).make_env(0)


@pytest.fixture
def lamp() -> TabletopEnvironment:
    env = hd.Manifest.load(fixture_path("lamp", "manifest.json")).make_env(0)
    assert isinstance(env, TabletopEnvironment)
    return env


# ============================================================================
# Discrete
# ============================================================================

def test_skill_completes_hidden_parameters(logistics):
    world = logistics.execute(hd.SkillCall("load_truck", ("package_0", "truck_1")))
    assert isinstance(world, DiscreteWorld)
    assert atom("in package_0 truck_1") in world.atoms
    assert atom("at package_0 location_0") not in world.atoms
    assert logistics.interactions == 1


def test_failed_skill_counts_as_interaction(logistics):
    with pytest.raises(SkillError, match="preconditions"):
        logistics.execute(hd.SkillCall("unload_plane", ("package_0", "plane_0")))
    assert logistics.interactions == 1


def test_invalid_parameterization(logistics):
    with pytest.raises(SkillError, match="invalid parameterization"):
        logistics.execute(hd.SkillCall("load_truck", ("package_0", "plane_0")))
    with pytest.raises(SkillError, match="invalid parameterization"):
        logistics.execute(hd.SkillCall("load_truck", ("package_0",)))


def test_unknown_skill_is_not_an_interaction(logistics):
    with pytest.raises(UnknownSkill):
        logistics.execute(hd.SkillCall("teleport", ("package_0",)))
    assert logistics.interactions == 0


def test_snapshot_and_restore(logistics):
    start = logistics.observe()
    index = logistics.snapshot()
    logistics.execute(hd.SkillCall("load_truck", ("package_0", "truck_1")))
    assert logistics.observe() != start
    logistics.restore(index)
    assert logistics.observe() == start
    assert logistics.interactions == 1


# ============================================================================
# Tabletop
# ============================================================================

BULB_ON_BASE = [
    ("hover_above_part", ("lamp_bulb",), "hovering_above arm lamp_bulb"),
    ("set_gripper_around_part", ("lamp_bulb",), "gripper_around arm lamp_bulb"),
    ("close_gripper", (), "holding arm lamp_bulb"),
    ("move_linear_up", (), "holding arm lamp_bulb"),
    ("align_orientation_for_assembly", ("lamp_bulb", "lamp_base"), "aligned lamp_bulb lamp_base"),
    ("move_linear_down_until_touching", ("lamp_bulb", "lamp_base"), "touching lamp_bulb lamp_base"),
    ("screw_touching_parts_together", ("lamp_bulb", "lamp_base"), "assembled lamp_bulb lamp_base"),
]


def test_initial_scene(lamp):
    truth = lamp.ground_truth_atoms()
    assert atom("hand_empty arm") in truth
    assert {atom("on_table lamp_base table"), atom("on_table lamp_bulb table"), atom("on_table lamp_hood table")} <= truth
    assert lamp.objects["lamp_hood"] == "part"


def test_mount_bulb(lamp):
    for name, args, expected in BULB_ON_BASE:
        world = lamp.execute(hd.SkillCall(name, args))
        assert isinstance(world, ContinuousWorld)
        assert atom(expected) in lamp.ground_truth_atoms(), name
    truth = lamp.ground_truth_atoms()
    assert atom("hand_empty arm") in truth
    assert atom("closed_gripper arm") not in truth
    assert lamp.interactions == len(BULB_ON_BASE)


def test_lift_leaves_table(lamp):
    for name, args, _ in BULB_ON_BASE[:4]:
        lamp.execute(hd.SkillCall(name, args))
    assert atom("on_table lamp_bulb table") not in lamp.ground_truth_atoms()


def test_tabletop_skill_failures(lamp):
    with pytest.raises(SkillError, match="not held"):
        lamp.execute(hd.SkillCall("move_linear_down_until_touching", ("lamp_bulb", "lamp_base")))
    with pytest.raises(SkillError, match="itself"):
        lamp.execute(hd.SkillCall("screw_touching_parts_together", ("lamp_bulb", "lamp_bulb")))
    with pytest.raises(SkillError, match="invalid parameterization"):
        lamp.execute(hd.SkillCall("close_gripper", ("lamp_bulb",)))
    assert lamp.interactions == 3


def test_open_gripper_drops_part_on_table(lamp):
    for name, args, _ in BULB_ON_BASE[:4]:
        lamp.execute(hd.SkillCall(name, args))
    lamp.execute(hd.SkillCall("open_gripper"))
    truth = lamp.ground_truth_atoms()
    assert atom("on_table lamp_bulb table") in truth
    assert atom("hand_empty arm") in truth


def test_noise_is_repeatable_and_leaves_truth(lamp):
    noisy = TabletopEnvironment(lamp.scene, NoiseConfig(sigma_pos=0.002, sigma_ang=0.01, seed=7))
    first = noisy.observe()
    assert first == noisy.observe()
    assert first != lamp.observe()
    assert first.truth == lamp.ground_truth_atoms()
    assert world_distance(first, lamp.observe()) < 0.02


# ============================================================================
# Household
# ============================================================================

@pytest.mark.parametrize("task", [1, 2])
def test_household_plan_runs_as_skills(task):
    env = HouseholdEnvironment.for_task(task)
    plan = hd.search_plan(env.domain, env.problem)
    for action in plan:
        env.execute(hd.SkillCall(action.operator, action.binding))
    assert hd.goal_satisfied(env.ground_truth_atoms(), env.problem.goal)
    assert env.interactions == len(plan)


def test_household_equality_precondition():
    env = HouseholdEnvironment.for_task(1)
    with pytest.raises(SkillError, match="preconditions"):
        env.execute(hd.SkillCall("go_to", ("countertop_1", "countertop_1")))
