import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

from ..errors import UnknownSkill
from ..skills import SkillCall, SkillLibrary
from ..symbolic import SymbolicState


log = logging.getLogger(__name__)


type Vec3 = tuple[float, float, float]


# ============================================================================
# World states
# ============================================================================

@dataclass(frozen=True)
class DiscreteWorld:
    """Ground-truth symbolic state of a discrete simulator"""
    atoms: SymbolicState
    objects: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class PartPose:
    center: Vec3
    orientation: Vec3
    half_extents: Vec3

    @property
    def bbox_min(self) -> Vec3:
        return tuple(c - h for c, h in zip(self.center, self.half_extents))  # type: ignore[return-value]

    @property
    def bbox_max(self) -> Vec3:
        return tuple(c + h for c, h in zip(self.center, self.half_extents))  # type: ignore[return-value]

    @property
    def top_z(self) -> float:
        return self.center[2] + self.half_extents[2]

    @property
    def bottom_z(self) -> float:
        return self.center[2] - self.half_extents[2]

    def moved(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "PartPose":
        x, y, z = self.center
        return PartPose((x + dx, y + dy, z + dz), self.orientation, self.half_extents)


@dataclass(frozen=True)
class RobotState:
    gripper_center: Vec3
    gripper_closed: bool = False


@dataclass(frozen=True)
class TableState:
    surface_z: float


@dataclass(frozen=True)
class ContinuousWorld:
    """Poses of every object in a tabletop scene.

    `truth` holds the simulator's exact symbolic state. It never takes part in
    comparisons and only the scripted labeler reads it.
    """
    parts: tuple[tuple[str, PartPose], ...] = ()
    robots: tuple[tuple[str, RobotState], ...] = ()
    tables: tuple[tuple[str, TableState], ...] = ()
    assembled: frozenset[tuple[str, str]] = frozenset()
    truth: SymbolicState | None = field(default=None, compare=False)

    @cached_property
    def _parts(self) -> dict[str, PartPose]:
        return dict(self.parts)

    @cached_property
    def _robots(self) -> dict[str, RobotState]:
        return dict(self.robots)

    @cached_property
    def _tables(self) -> dict[str, TableState]:
        return dict(self.tables)

    def part(self, name: str) -> PartPose | None:
        return self._parts.get(name)

    def robot(self, name: str) -> RobotState | None:
        return self._robots.get(name)

    def table(self, name: str) -> TableState | None:
        return self._tables.get(name)

    def has_object(self, name: str) -> bool:
        return name in self._parts or name in self._robots or name in self._tables

    @property
    def roster(self) -> list[str]:
        return [n for n, _ in self.robots] + [n for n, _ in self.tables] + [n for n, _ in self.parts]

    def positions(self) -> dict[str, Vec3]:
        out = {n: r.gripper_center for n, r in self.robots}
        out.update({n: p.center for n, p in self.parts})
        return out


type WorldState = DiscreteWorld | ContinuousWorld


def world_distance(a: WorldState, b: WorldState) -> float:
    """Largest Euclidean displacement of any object between two states.

    Discrete states are either identical (0) or infinitely far apart.
    """
    if isinstance(a, DiscreteWorld) or isinstance(b, DiscreteWorld):
        return 0.0 if a == b else math.inf
    pa, pb = a.positions(), b.positions()
    if pa.keys() != pb.keys():
        return math.inf
    if a.assembled != b.assembled or any(a.robot(n).gripper_closed != b.robot(n).gripper_closed for n, _ in a.robots):  # type: ignore[union-attr]
        return math.inf
    return max((math.dist(pa[k], pb[k]) for k in pa), default=0.0)


def _fmt(values) -> str:
    return "[" + ", ".join(str(round(float(v), 3)) for v in values) + "]"


def dump_world(world: WorldState) -> str:
    """Render a state as one block per object"""
    if isinstance(world, DiscreteWorld):
        return "\n".join(str(a) for a in sorted(world.atoms))
    lines = []
    for name, robot in world.robots:
        lines += [name, f"- gripper_center: {_fmt(robot.gripper_center)}", f"- gripper_closed: {robot.gripper_closed}"]
    for name, table in world.tables:
        lines += [name, f"- surface_z: {round(table.surface_z, 3)}"]
    for name, pose in world.parts:
        lines += [
            name,
            f"- bounding_box: [{_fmt(pose.bbox_min)}, {_fmt(pose.bbox_max)}]",
            f"- center: {_fmt(pose.center)}",
            f"- orientation: {_fmt(pose.orientation)}",
        ]
    return "\n".join(lines)


def describe_part(pose: PartPose) -> str:
    return (
        f"Part(bounding_box=[{_fmt(pose.bbox_min)}, {_fmt(pose.bbox_max)}], "
        f"center={_fmt(pose.center)}, orientation={_fmt(pose.orientation)})"
    )


# ============================================================================
# Environments
# ============================================================================

@dataclass
class Episode:
    env_id: str
    interactions: int = 0
    snapshots: list = field(default_factory=list)


class Environment(ABC):
    """A deterministic simulator executing skills.

    Every `execute` that reaches the simulator counts as one interaction,
    failing ones included. Unknown skills are rejected before that.
    """

    def __init__(self, skills: SkillLibrary, objects: dict[str, str]):
        self.skills = skills
        self.objects = dict(objects)
        self.episode = Episode(self.shortname())

    @classmethod
    @abstractmethod
    def shortname(cls) -> str:
        pass

    @property
    def interactions(self) -> int:
        return self.episode.interactions

    def execute(self, call: SkillCall) -> WorldState:
        if call.name not in self.skills:
            raise UnknownSkill(f"Unknown skill '{call.name}'")
        self.episode.interactions += 1
        log.debug("EXEC   %s", call)
        self._execute(call)
        return self.observe()

    def snapshot(self) -> int:
        self.episode.snapshots.append(self._get_state())
        return len(self.episode.snapshots) - 1

    def restore(self, index: int = -1) -> None:
        """Return to a snapshot, discarding the snapshots taken after it"""
        state = self.episode.snapshots[index]
        if index >= 0:
            del self.episode.snapshots[index + 1:]
        self._set_state(state)

    @abstractmethod
    def _execute(self, call: SkillCall) -> None:
        pass

    @abstractmethod
    def _get_state(self):
        pass

    @abstractmethod
    def _set_state(self, state) -> None:
        pass

    @abstractmethod
    def observe(self) -> WorldState:
        pass

    @abstractmethod
    def ground_truth_atoms(self) -> SymbolicState:
        pass
