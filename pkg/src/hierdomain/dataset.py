import logging
import re
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .envs.base import ContinuousWorld, DiscreteWorld, PartPose, RobotState, TableState, WorldState, world_distance
from .skills import SkillCall, parse_skill_call
from .symbolic import GroundAtom, SymbolicState
from .utils import read_jsonl, write_jsonl


log = logging.getLogger(__name__)


DEFAULT_TAU_SIM = 0.01
ATOM_PATTERN = re.compile(r"^\s*\(\s*([^\s()]+)((?:\s+[^\s()]+)*)\s*\)\s*$")


type Labeler = Callable[[WorldState], SymbolicState]


@dataclass(frozen=True)
class Transition:
    """One skill execution: state before, skill, state after and the pseudo-labels of the state after"""
    x: WorldState
    skill: SkillCall
    x_next: WorldState
    labels: SymbolicState | None = None

    def labeled(self, labels: SymbolicState) -> "Transition":
        if self.labels is not None:
            raise ValueError(f"Transition {self.skill} is already labeled")
        return replace(self, labels=frozenset(labels))


@dataclass(frozen=True)
class LabeledState:
    world: WorldState
    labels: SymbolicState | None = None


def atom_from_string(text: str) -> GroundAtom:
    m = ATOM_PATTERN.match(text)
    if not m:
        raise ValueError(f"Not a ground atom: '{text}'")
    return GroundAtom(m.group(1), tuple(m.group(2).split()))


def pseudo_label(batch: Sequence[Transition], labeler: Labeler, tau_sim: float = DEFAULT_TAU_SIM) -> tuple[list[Transition], int]:
    """Label a batch, asking the labeler once per class of near-identical outcomes.

    Two transitions share a class when their skill calls are equal and their
    resulting states lie closer than `tau_sim`. Already labeled transitions
    seed classes without a labeler call.
    """
    if tau_sim <= 0:
        raise ValueError("tau_sim must be positive")
    classes: list[tuple[Transition, SymbolicState]] = [(t, t.labels) for t in batch if t.labels is not None]
    out: list[Transition] = []
    calls = 0
    for t in batch:
        if t.labels is not None:
            out.append(t)
            continue
        for representative, labels in classes:
            if representative.skill == t.skill and world_distance(representative.x_next, t.x_next) < tau_sim:
                break
        else:
            labels = frozenset(labeler(t.x_next))
            calls += 1
            classes.append((t, labels))
        out.append(t.labeled(labels))
    log.debug("Labeled %d transitions with %d labeler calls", len(out), calls)
    return out, calls


class TransitionDataset:
    """Recorded transitions plus the directly labeled episode start states"""

    def __init__(self):
        self.starts: list[LabeledState] = []
        self.transitions: list[Transition] = []

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    def add_start(self, world: WorldState) -> None:
        self.starts.append(LabeledState(world))

    def append(self, t: Transition) -> None:
        self.transitions.append(t)

    def label(self, labeler: Labeler, tau_sim: float = DEFAULT_TAU_SIM) -> int:
        """Pseudo-label everything not yet labeled; returns the number of labeler calls"""
        calls = 0
        for i, start in enumerate(self.starts):
            if start.labels is None:
                self.starts[i] = LabeledState(start.world, frozenset(labeler(start.world)))
                calls += 1
        self.transitions, batch_calls = pseudo_label(self.transitions, labeler, tau_sim)
        return calls + batch_calls

    def samples(self) -> list[tuple[WorldState, SymbolicState]]:
        """Every labeled state, starts first"""
        out = [(s.world, s.labels) for s in self.starts if s.labels is not None]
        out += [(t.x_next, t.labels) for t in self.transitions if t.labels is not None]
        return out

    # ------------------------------------------------------------------------
    # JSON lines
    # ------------------------------------------------------------------------

    def save(self, path: Path) -> int:
        records = [
            {"type": "start", "x": world_to_dict(s.world), "labels": _labels(s.labels)} for s in self.starts
        ] + [
            {
                "type": "transition",
                "x": world_to_dict(t.x),
                "skill": str(t.skill),
                "x_next": world_to_dict(t.x_next),
                "labels": _labels(t.labels),
            }
            for t in self.transitions
        ]
        return write_jsonl(path, records)

    @classmethod
    def load(cls, path: Path) -> "TransitionDataset":
        data = cls()
        for record in read_jsonl(path):
            labels = None if record.get("labels") is None else frozenset(atom_from_string(a) for a in record["labels"])
            match record.get("type"):
                case "start":
                    data.starts.append(LabeledState(world_from_dict(record["x"]), labels))
                case "transition":
                    data.transitions.append(Transition(
                        world_from_dict(record["x"]),
                        parse_skill_call(record["skill"]),
                        world_from_dict(record["x_next"]),
                        labels,
                    ))
                case other:
                    raise ValueError(f"Unknown dataset record type '{other}'")
        return data


def _labels(labels: SymbolicState | None) -> list[str] | None:
    return None if labels is None else [str(a) for a in sorted(labels)]


def world_to_dict(w: WorldState) -> dict:
    if isinstance(w, DiscreteWorld):
        return {"kind": "discrete", "atoms": [str(a) for a in sorted(w.atoms)], "objects": [list(o) for o in w.objects]}
    return {
        "kind": "continuous",
        "parts": {
            n: {"center": list(p.center), "orientation": list(p.orientation), "half_extents": list(p.half_extents)}
            for n, p in w.parts
        },
        "robots": {n: {"gripper_center": list(r.gripper_center), "gripper_closed": r.gripper_closed} for n, r in w.robots},
        "tables": {n: {"surface_z": t.surface_z} for n, t in w.tables},
        "assembled": sorted(list(a) for a in w.assembled),
    }


def world_from_dict(data: dict) -> WorldState:
    if data["kind"] == "discrete":
        return DiscreteWorld(
            frozenset(atom_from_string(a) for a in data["atoms"]),
            tuple((o, t) for o, t in data.get("objects", [])),
        )
    return ContinuousWorld(
        parts=tuple(
            (n, PartPose(tuple(p["center"]), tuple(p["orientation"]), tuple(p["half_extents"])))  # type: ignore[arg-type]
            for n, p in data["parts"].items()
        ),
        robots=tuple((n, RobotState(tuple(r["gripper_center"]), bool(r["gripper_closed"]))) for n, r in data["robots"].items()),  # type: ignore[arg-type]
        tables=tuple((n, TableState(float(t["surface_z"]))) for n, t in data["tables"].items()),
        assembled=frozenset((a, b) for a, b in data.get("assembled", [])),
    )
