import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import ClassifierRegistry, parse_classifier
from .config import Budgets
from .dataset import atom_from_string
from .envs.base import Environment
from .envs.discrete import DiscreteEnvironment, HouseholdEnvironment, LogisticsEnvironment, skills_of
from .envs.tabletop import TABLETOP_SKILLS, NoiseConfig, TabletopEnvironment
from .errors import HierdomainError, ManifestError
from .pddl import parse_domain, parse_predicate, parse_problem
from .skills import SkillLibrary
from .symbolic import DomainModel, Goal, PredicateSchema, Problem, SymbolicState


log = logging.getLogger(__name__)


ENVIRONMENTS: dict[str, type[DiscreteEnvironment] | type[TabletopEnvironment]] = {
    c.shortname(): c for c in (LogisticsEnvironment, HouseholdEnvironment, TabletopEnvironment)
}


@dataclass(frozen=True)
class TaskSpec:
    instruction: str
    problem: Path | None = None
    goal: tuple[str, ...] = ()


@dataclass
class Manifest:
    """A learning run: environment, initial predicates, skills and the ordered tasks.

    JSON keys: `environment` (logistics, household or tabletop), `domain`
    (hidden domain file), `tasks` (list of `instruction`, `problem`, `goal`),
    `types`, `predicates` (the initial predicate set), `classifiers`
    (predicate -> `.cls` file), `skills`, `scene`, `noise`, `budgets` and
    `script`. Paths are relative to the manifest.
    """
    path: Path
    name: str
    environment: str
    tasks: list[TaskSpec]
    domain_file: Path | None = None
    type_list: list[tuple[str, str]] = field(default_factory=list)
    predicates: list[str] = field(default_factory=list)
    classifier_files: dict[str, Path] = field(default_factory=dict)
    skill_data: dict[str, Mapping] | None = None
    scene: dict | None = None
    noise: NoiseConfig = NoiseConfig()
    budgets: Budgets = Budgets()
    script: Path | None = None

    @classmethod
    def load(cls, path: Path) -> "Manifest":
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ManifestError(f"Cannot read manifest '{path}': {e}") from e
        except json.JSONDecodeError as e:
            raise ManifestError(f"Manifest '{path}' is not valid JSON: {e}") from e
        return cls.from_mapping(data, path)

    @classmethod
    def from_mapping(cls, data: Mapping, path: Path) -> "Manifest":
        base = path.parent
        environment = data.get("environment")
        if environment not in ENVIRONMENTS:
            raise ManifestError(f"Unknown environment '{environment}', expected one of {', '.join(sorted(ENVIRONMENTS))}")
        tasks = [
            TaskSpec(
                t.get("instruction", ""),
                base / t["problem"] if t.get("problem") else None,
                tuple(t.get("goal", ())),
            )
            for t in data.get("tasks", [])
        ]
        if not tasks:
            raise ManifestError(f"Manifest '{path}' declares no tasks")
        try:
            budgets = Budgets(**data.get("budgets", {}))
            noise = NoiseConfig(**data.get("noise", {}))
        except (TypeError, ValueError) as e:
            raise ManifestError(f"Invalid settings in '{path}': {e}") from e
        manifest = cls(
            path=path,
            name=data.get("name", path.parent.name),
            environment=environment,
            tasks=tasks,
            domain_file=base / data["domain"] if data.get("domain") else None,
            type_list=[tuple(t) for t in data.get("types", [])],  # type: ignore[misc]
            predicates=list(data.get("predicates", [])),
            classifier_files={k: base / v for k, v in data.get("classifiers", {}).items()},
            skill_data=data.get("skills"),
            scene=data.get("scene"),
            noise=noise,
            budgets=budgets,
            script=base / data["script"] if data.get("script") else None,
        )
        manifest.check()
        return manifest

    def check(self) -> None:
        if self.environment == "tabletop":
            if self.scene is None:
                raise ManifestError("A tabletop manifest needs a 'scene'")
        elif self.domain_file is None:
            raise ManifestError(f"A {self.environment} manifest needs the hidden 'domain' file")
        for t in self.tasks:
            if self.environment != "tabletop" and t.problem is None:
                raise ManifestError(f"Task '{t.instruction}' has no problem file")
        missing = [p for p in (self.domain_file, self.script, *self.classifier_files.values(), *(t.problem for t in self.tasks)) if p is not None and not p.exists()]
        if missing:
            raise ManifestError("Manifest refers to missing files: " + ", ".join(str(p) for p in missing))
        try:
            self.psi_init()
        except (HierdomainError, ValueError) as e:
            raise ManifestError(f"Invalid initial predicate: {e}") from e

    # ------------------------------------------------------------------------
    # Resolved parts
    # ------------------------------------------------------------------------

    def reference_domain(self) -> DomainModel | None:
        if self.domain_file is None:
            return None
        return parse_domain(self.domain_file.read_text())

    def types(self) -> list[tuple[str, str]]:
        if self.type_list:
            return self.type_list
        reference = self.reference_domain()
        return list(reference.types) if reference else []

    def psi_init(self) -> list[PredicateSchema]:
        return [parse_predicate(text) for text in self.predicates]

    def skills(self) -> SkillLibrary:
        if self.skill_data is not None:
            return SkillLibrary.from_mapping(self.skill_data)
        if self.environment == "tabletop":
            return TABLETOP_SKILLS
        reference = self.reference_domain()
        assert reference is not None
        return skills_of(reference)

    def classifiers(self) -> ClassifierRegistry:
        registry = ClassifierRegistry()
        pending = dict(self.classifier_files)
        # callees may be listed after their callers
        for _ in range(len(pending)):
            for name, f in list(pending.items()):
                try:
                    registry.register(parse_classifier(f.read_text(), registry))
                except HierdomainError:
                    continue
                del pending[name]
        if pending:
            raise ManifestError(f"Unusable classifier files: {', '.join(sorted(pending))}")
        return registry

    def problem(self, task: int) -> Problem | None:
        spec = self.tasks[task]
        reference = self.reference_domain()
        if spec.problem is None or reference is None:
            return None
        return parse_problem(spec.problem.read_text(), reference)

    def goal(self, task: int) -> Goal:
        problem = self.problem(task)
        if problem is not None:
            return problem.goal
        return Goal(frozenset(atom_from_string(a) for a in self.tasks[task].goal))

    def static_init(self, task: int) -> SymbolicState:
        """Initial atoms the learner may read from the task file; only state-independent ones are ever used"""
        problem = self.problem(task)
        return problem.init if problem is not None else frozenset()

    def make_env(self, task: int) -> Environment:
        if self.environment == "tabletop":
            assert self.scene is not None
            return TabletopEnvironment.from_mapping(self.scene, self.noise)
        reference = self.reference_domain()
        problem = self.problem(task)
        assert reference is not None and problem is not None
        return ENVIRONMENTS[self.environment](reference, problem, self.skills())  # type: ignore[call-arg]
