import logging
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .errors import UnknownSkill
from .symbolic import OperatorDef


log = logging.getLogger(__name__)


CALL_PATTERN = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*\((.*)\)\s*$")


@dataclass(frozen=True)
class SkillSignature:
    """An executable primitive offered by an environment"""
    name: str
    params: tuple[tuple[str, str], ...] = ()
    description: str = ""

    @property
    def arity(self) -> int:
        return len(self.params)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(n for n, _ in self.params)})"


@dataclass(frozen=True)
class SkillCall:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


def parse_skill_call(text: str) -> SkillCall:
    m = CALL_PATTERN.match(text)
    if not m:
        raise ValueError(f"Not a skill call: '{text}'")
    args = tuple(a.strip().strip("'\"") for a in m.group(2).split(",") if a.strip())
    return SkillCall(m.group(1), args)


class SkillLibrary:
    def __init__(self, signatures: Iterable[SkillSignature]):
        self._skills = {s.name: s for s in signatures}

    def __contains__(self, name: str) -> bool:
        return name in self._skills

    def __iter__(self):
        return iter(sorted(self._skills.values(), key=lambda s: s.name))

    def __len__(self) -> int:
        return len(self._skills)

    def get(self, name: str) -> SkillSignature:
        try:
            return self._skills[name]
        except KeyError:
            raise UnknownSkill(f"Unknown skill '{name}'") from None

    def describe(self) -> str:
        return "\n".join(f"- {s}" + (f": {s.description}" if s.description else "") for s in self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Mapping]) -> "SkillLibrary":
        return cls(
            SkillSignature(name, tuple((p["name"], p.get("type", "object")) for p in spec.get("params", [])), spec.get("description", ""))
            for name, spec in data.items()
        )


def bind_skill(call: SkillCall, op: OperatorDef, binding: tuple[str, ...], objects: Mapping[str, str]) -> SkillCall:
    """Resolve a lifted skill call (arguments written `?p`, `p` or `p_part`) against an action binding.

    Arguments that already name an object are kept as literals.
    """
    by_var = {v.lstrip("?"): o for (v, _), o in zip(op.params, binding)}
    by_typed = {f"{v.lstrip('?')}_{t}": o for (v, t), o in zip(op.params, binding)}
    out = []
    for arg in call.args:
        key = arg.lstrip("?")
        if key in by_var:
            out.append(by_var[key])
        elif key in by_typed:
            out.append(by_typed[key])
        elif arg in objects:
            out.append(arg)
        else:
            raise ValueError(f"Argument '{arg}' of {call} names neither a parameter of {op.name} nor an object")
    return SkillCall(call.name, tuple(out))
