import itertools
import logging
from importlib import resources
from pathlib import Path

from ..errors import SkillError
from ..pddl import parse_domain, parse_problem
from ..skills import SkillCall, SkillLibrary, SkillSignature
from ..symbolic import Action, DomainModel, Problem, SymbolicState
from .base import DiscreteWorld, Environment


log = logging.getLogger(__name__)


class DiscreteEnvironment(Environment):
    """Simulator that interprets a hidden PDDL domain directly.

    A skill runs the operator of the same name. Its arguments fill the leading
    operator parameters; the remaining ones resolve to the first applicable
    completion in lexicographic order.
    """

    def __init__(self, domain: DomainModel, problem: Problem, skills: SkillLibrary | None = None):
        self.domain = domain
        self.problem = problem
        self.state: SymbolicState = problem.init
        super().__init__(skills if skills is not None else skills_of(domain), problem.object_types)

    @classmethod
    def shortname(cls) -> str:
        return "discrete"

    @classmethod
    def from_files(cls, domain_path: Path, problem_path: Path, skills: SkillLibrary | None = None):
        domain = parse_domain(domain_path.read_text())
        return cls(domain, parse_problem(problem_path.read_text(), domain), skills)

    def _execute(self, call: SkillCall) -> None:
        op = self.domain.operator(call.name)
        if op is None:
            raise SkillError(f"{call}: no behaviour defined for this skill")
        signature = self.skills.get(call.name)
        if len(call.args) != signature.arity:
            raise SkillError(f"{call}: invalid parameterization, expected {signature.arity} arguments")
        if len(call.args) > op.arity:
            raise SkillError(f"{call}: invalid parameterization, too many arguments")
        for (var, ptype), obj in zip(op.params, call.args):
            if obj not in self.objects:
                raise SkillError(f"{call}: unknown object '{obj}'")
            if not self.domain.is_subtype(self.objects[obj], ptype):
                raise SkillError(f"{call}: invalid parameterization, {obj} is not a {ptype}")

        pools = [
            sorted(o for o, t in self.objects.items() if self.domain.is_subtype(t, ptype))
            for _, ptype in op.params[len(call.args):]
        ]
        for rest in itertools.product(*pools):
            ground = self.domain.ground(Action(op.name, call.args + rest))
            if ground.is_applicable(self.state):
                self.state = ground.apply(self.state)
                return
        raise SkillError(f"{call}: preconditions of {op.name} are not met")

    def _get_state(self) -> SymbolicState:
        return self.state

    def _set_state(self, state: SymbolicState) -> None:
        self.state = state

    def observe(self) -> DiscreteWorld:
        return DiscreteWorld(self.state, self.problem.objects)

    def ground_truth_atoms(self) -> SymbolicState:
        return self.state


def skills_of(domain: DomainModel) -> SkillLibrary:
    """One skill per operator, taking every operator parameter"""
    return SkillLibrary(
        SkillSignature(op.name, tuple((v.lstrip("?"), t) for v, t in op.params), op.description)
        for op in domain.operators
    )


# ============================================================================
# Bundled simulators
# ============================================================================

def fixture_path(*parts: str) -> Path:
    return Path(str(resources.files("hierdomain").joinpath("fixtures", *parts)))


class LogisticsEnvironment(DiscreteEnvironment):
    @classmethod
    def shortname(cls) -> str:
        return "logistics"

    @classmethod
    def for_task(cls, task: int, skills: SkillLibrary | None = None) -> "LogisticsEnvironment":
        return cls.from_files(fixture_path("logistics", "domain.pddl"), fixture_path("logistics", f"task{task}.pddl"), skills)


class HouseholdEnvironment(DiscreteEnvironment):
    @classmethod
    def shortname(cls) -> str:
        return "household"

    @classmethod
    def for_task(cls, task: int, skills: SkillLibrary | None = None) -> "HouseholdEnvironment":
        return cls.from_files(fixture_path("household", "domain.pddl"), fixture_path("household", f"task{task}.pddl"), skills)
