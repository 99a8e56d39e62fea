import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from ..errors import SkillError
from ..skills import SkillCall, SkillLibrary, SkillSignature
from ..symbolic import GroundAtom, SymbolicState
from .base import ContinuousWorld, Environment, PartPose, RobotState, TableState, Vec3


log = logging.getLogger(__name__)


# Skill rules
HOVER_HEIGHT = 0.10
GRASP_DEPTH = 0.02
GRASP_XY = 0.03
GRASP_Z = 0.05
LIFT_HEIGHT = 0.15
ALIGN_CLEARANCE = 0.03
DESCEND_XY = 0.02
CONTACT_Z = 0.005
RETRACT_HEIGHT = 0.25

# Ground-truth predicate table
TABLE_Z = 0.005
HOVER_XY = 0.01
HOVER_DZ = (0.05, 0.15)
AROUND_XY = 0.05
AROUND_Z = 0.05
ALIGN_XY = 0.01
ALIGN_ANGLE = 0.1
ALIGN_Z = 0.005
TOUCH_XY = 0.02
TOUCH_Z = 0.005

HOME: Vec3 = (0.3, 0.0, 0.4)


TABLETOP_SKILLS = SkillLibrary([
    SkillSignature("hover_above_part", (("part", "part"),), "move the open gripper above a part"),
    SkillSignature("set_gripper_around_part", (("part", "part"),), "lower the open gripper around a part"),
    SkillSignature("close_gripper", (), "close the gripper, grasping the part between the jaws"),
    SkillSignature("open_gripper", (), "open the gripper, releasing any held part"),
    SkillSignature("move_linear_up", (), "lift the gripper"),
    SkillSignature(
        "align_orientation_for_assembly", (("held_part", "part"), ("fixed_part", "part")),
        "hold a part above another part in assembly orientation",
    ),
    SkillSignature(
        "move_linear_down_until_touching", (("held_part", "part"), ("fixed_part", "part")),
        "lower the held part until it touches the other part",
    ),
    SkillSignature(
        "screw_touching_parts_together", (("held_part", "part"), ("fixed_part", "part")),
        "screw the held part into the part it touches",
    ),
])


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-mean Gaussian perception noise, in meters and radians"""
    sigma_pos: float = 0.0
    sigma_ang: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class Scene:
    """Exact simulator state; what `observe` reports before noise"""
    parts: tuple[tuple[str, PartPose], ...]
    robot: tuple[str, RobotState]
    table: tuple[str, TableState]
    held: str | None = None
    assembled: frozenset[tuple[str, str]] = frozenset()

    def part(self, name: str) -> PartPose:
        for n, pose in self.parts:
            if n == name:
                return pose
        raise SkillError(f"No part named '{name}'")

    def with_part(self, name: str, pose: PartPose) -> "Scene":
        return replace(self, parts=tuple((n, pose if n == name else p) for n, p in self.parts))


def _dist_xy(a: Vec3, b: Vec3) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def angle_diff(a: float, b: float) -> float:
    """Signed difference wrapped to [-pi, pi]"""
    return (a - b + math.pi) % (2 * math.pi) - math.pi


def scene_atoms(scene: Scene) -> SymbolicState:
    """Exact symbolic state of a scene under the ground-truth predicate table"""
    robot, rstate = scene.robot
    table, tstate = scene.table
    g = rstate.gripper_center
    atoms = set()
    if scene.held is None:
        atoms.add(GroundAtom("hand_empty", (robot,)))
    else:
        atoms.add(GroundAtom("holding", (robot, scene.held)))
    if rstate.gripper_closed:
        atoms.add(GroundAtom("closed_gripper", (robot,)))
    for name, pose in scene.parts:
        if abs(pose.bottom_z - tstate.surface_z) <= TABLE_Z:
            atoms.add(GroundAtom("on_table", (name, table)))
        if not rstate.gripper_closed:
            dz = g[2] - pose.top_z
            if _dist_xy(g, pose.center) <= HOVER_XY and HOVER_DZ[0] <= dz <= HOVER_DZ[1]:
                atoms.add(GroundAtom("hovering_above", (robot, name)))
            if _dist_xy(g, pose.center) <= AROUND_XY and abs(dz) <= AROUND_Z:
                atoms.add(GroundAtom("gripper_around", (robot, name)))
    for (n1, p1) in scene.parts:
        for (n2, p2) in scene.parts:
            if n1 == n2:
                continue
            xy = _dist_xy(p1.center, p2.center)
            if (
                xy <= ALIGN_XY
                and abs(angle_diff(p1.orientation[0], p2.orientation[0])) <= ALIGN_ANGLE
                and abs(angle_diff(p1.orientation[1], p2.orientation[1])) <= ALIGN_ANGLE
                and p1.bottom_z >= p2.top_z - ALIGN_Z
            ):
                atoms.add(GroundAtom("aligned", (n1, n2)))
            if xy <= TOUCH_XY and abs(p1.bottom_z - p2.top_z) <= TOUCH_Z:
                atoms.add(GroundAtom("touching", (n1, n2)))
    for n1, n2 in scene.assembled:
        atoms.add(GroundAtom("assembled", (n1, n2)))
    return frozenset(atoms)


class TabletopEnvironment(Environment):
    """Kinematic single-arm assembly scene.

    Skills teleport the gripper and the held part; success conditions are the
    rule constants above.
    """

    def __init__(self, scene: Scene, noise: NoiseConfig = NoiseConfig(), skills: SkillLibrary = TABLETOP_SKILLS):
        self.scene = scene
        self.noise = noise
        objects = {scene.robot[0]: "robot", scene.table[0]: "table"}
        objects.update({n: "part" for n, _ in scene.parts})
        super().__init__(skills, objects)

    @classmethod
    def shortname(cls) -> str:
        return "tabletop"

    @classmethod
    def from_mapping(cls, data: Mapping, noise: NoiseConfig = NoiseConfig()) -> "TabletopEnvironment":
        """Build a scene from manifest data (`robot`, `table`, `parts`)"""
        robot = data["robot"]
        table = data["table"]
        parts = tuple(
            (
                name,
                PartPose(tuple(map(float, p["center"])), tuple(map(float, p["orientation"])), tuple(map(float, p["half_extents"]))),  # type: ignore[arg-type]
            )
            for name, p in data["parts"].items()
        )
        scene = Scene(
            parts=parts,
            robot=(robot["name"], RobotState(tuple(map(float, robot.get("gripper_center", HOME))), bool(robot.get("gripper_closed", False)))),  # type: ignore[arg-type]
            table=(table["name"], TableState(float(table["surface_z"]))),
        )
        return cls(scene, noise)

    # ------------------------------------------------------------------------
    # Skills
    # ------------------------------------------------------------------------

    def _execute(self, call: SkillCall) -> None:
        signature = self.skills.get(call.name)
        if len(call.args) != signature.arity:
            raise SkillError(f"{call}: invalid parameterization, expected {signature.arity} arguments")
        handler = getattr(self, f"_skill_{call.name}")
        self.scene = handler(*call.args)

    def _move_gripper(self, scene: Scene, target: Vec3, closed: bool | None = None) -> Scene:
        """Move the gripper; a held part keeps its offset to the gripper"""
        robot, state = scene.robot
        closed = state.gripper_closed if closed is None else closed
        if scene.held is not None:
            old = state.gripper_center
            scene = scene.with_part(
                scene.held,
                scene.part(scene.held).moved(target[0] - old[0], target[1] - old[1], target[2] - old[2]),
            )
        return replace(scene, robot=(robot, RobotState(target, closed)))

    def _skill_hover_above_part(self, part: str) -> Scene:
        pose = self.scene.part(part)
        if self.scene.held is not None:
            raise SkillError(f"hover_above_part({part}): gripper is holding {self.scene.held}")
        return self._move_gripper(self.scene, (pose.center[0], pose.center[1], pose.top_z + HOVER_HEIGHT))

    def _skill_set_gripper_around_part(self, part: str) -> Scene:
        pose = self.scene.part(part)
        if self.scene.held is not None:
            raise SkillError(f"set_gripper_around_part({part}): gripper is holding {self.scene.held}")
        return self._move_gripper(self.scene, (pose.center[0], pose.center[1], pose.top_z - GRASP_DEPTH), closed=False)

    def _skill_close_gripper(self) -> Scene:
        g = self.scene.robot[1].gripper_center
        held = self.scene.held
        if held is None:
            for name, pose in self.scene.parts:
                if _dist_xy(g, pose.center) < GRASP_XY and abs(pose.top_z - g[2]) <= GRASP_Z:
                    held = name
                    break
        scene = self._move_gripper(self.scene, g, closed=True)
        return replace(scene, held=held)

    def _skill_open_gripper(self) -> Scene:
        scene = self._move_gripper(self.scene, self.scene.robot[1].gripper_center, closed=False)
        if scene.held is not None:
            pose = scene.part(scene.held)
            surface = scene.table[1].surface_z
            scene = scene.with_part(scene.held, pose.moved(dz=surface - pose.bottom_z))
        return replace(scene, held=None)

    def _skill_move_linear_up(self) -> Scene:
        x, y, z = self.scene.robot[1].gripper_center
        return self._move_gripper(self.scene, (x, y, z + LIFT_HEIGHT))

    def _require_held(self, call: str, held: str, fixed: str) -> tuple[PartPose, PartPose]:
        if held == fixed:
            raise SkillError(f"{call}({held}, {fixed}): a part cannot be assembled with itself")
        fixed_pose = self.scene.part(fixed)
        held_pose = self.scene.part(held)
        if self.scene.held != held:
            raise SkillError(f"{call}({held}, {fixed}): {held} is not held")
        return held_pose, fixed_pose

    def _skill_align_orientation_for_assembly(self, held: str, fixed: str) -> Scene:
        held_pose, fixed_pose = self._require_held("align_orientation_for_assembly", held, fixed)
        target_z = fixed_pose.top_z + ALIGN_CLEARANCE + held_pose.half_extents[2]
        dx = fixed_pose.center[0] - held_pose.center[0]
        dy = fixed_pose.center[1] - held_pose.center[1]
        dz = target_z - held_pose.center[2]
        g = self.scene.robot[1].gripper_center
        scene = self._move_gripper(self.scene, (g[0] + dx, g[1] + dy, g[2] + dz))
        moved = scene.part(held)
        roll, pitch, _ = fixed_pose.orientation
        return scene.with_part(held, PartPose(moved.center, (roll, pitch, moved.orientation[2]), moved.half_extents))

    def _skill_move_linear_down_until_touching(self, held: str, fixed: str) -> Scene:
        held_pose, fixed_pose = self._require_held("move_linear_down_until_touching", held, fixed)
        if _dist_xy(held_pose.center, fixed_pose.center) > DESCEND_XY:
            raise SkillError(f"move_linear_down_until_touching({held}, {fixed}): {held} is not above {fixed}")
        drop = held_pose.bottom_z - fixed_pose.top_z
        if drop < -CONTACT_Z:
            raise SkillError(f"move_linear_down_until_touching({held}, {fixed}): {held} is below {fixed}")
        x, y, z = self.scene.robot[1].gripper_center
        return self._move_gripper(self.scene, (x, y, z - drop))

    def _skill_screw_touching_parts_together(self, held: str, fixed: str) -> Scene:
        held_pose, fixed_pose = self._require_held("screw_touching_parts_together", held, fixed)
        if _dist_xy(held_pose.center, fixed_pose.center) > TOUCH_XY or abs(held_pose.bottom_z - fixed_pose.top_z) > CONTACT_Z:
            raise SkillError(f"screw_touching_parts_together({held}, {fixed}): parts are not in contact")
        robot, state = self.scene.robot
        x, y, z = state.gripper_center
        scene = replace(
            self.scene,
            held=None,
            assembled=self.scene.assembled | {(held, fixed)},
            robot=(robot, RobotState((x, y, z + RETRACT_HEIGHT), False)),
        )
        return scene

    # ------------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------------

    def _get_state(self) -> Scene:
        return self.scene

    def _set_state(self, state: Scene) -> None:
        self.scene = state

    def ground_truth_atoms(self) -> SymbolicState:
        return scene_atoms(self.scene)

    def observe(self) -> ContinuousWorld:
        """Current scene with perception noise.

        The noise realization depends only on the seed and the interaction
        counter, so repeated observations between two skills agree.
        """
        scene = self.scene
        robot, rstate = scene.robot
        parts = scene.parts
        gripper = rstate.gripper_center
        if self.noise.sigma_pos > 0 or self.noise.sigma_ang > 0:
            rng = np.random.default_rng([self.noise.seed, self.interactions])
            noisy = []
            for name, pose in parts:
                dp = rng.normal(0.0, self.noise.sigma_pos, 3) if self.noise.sigma_pos > 0 else np.zeros(3)
                da = rng.normal(0.0, self.noise.sigma_ang, 3) if self.noise.sigma_ang > 0 else np.zeros(3)
                noisy.append((
                    name,
                    PartPose(
                        tuple(float(v) for v in np.add(pose.center, dp)),  # type: ignore[arg-type]
                        tuple(float(v) for v in np.add(pose.orientation, da)),  # type: ignore[arg-type]
                        pose.half_extents,
                    ),
                ))
            parts = tuple(noisy)
            if self.noise.sigma_pos > 0:
                gripper = tuple(float(v) for v in np.add(gripper, rng.normal(0.0, self.noise.sigma_pos, 3)))  # type: ignore[assignment]
        return ContinuousWorld(
            parts=parts,
            robots=((robot, RobotState(gripper, rstate.gripper_closed)),),
            tables=(scene.table,),
            assembled=scene.assembled,
            truth=scene_atoms(scene),
        )
