import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .config import Budgets, LearnerConfig
from .errors import BudgetExhausted, EvaluationError, HierarchyError, OracleError, PlanningError
from .evaluation import EWConfig, EWReport, ew_score
from .hierarchy import HierarchyLearner, HierarchyNode, describe_hierarchy, write_hierarchy
from .manifest import Manifest
from .oracle.base import Oracle
from .pddl import print_domain
from .symbolic import goal_satisfied
from .utils import prepare_dir, write_jsonl


log = logging.getLogger(__name__)


@dataclass
class TaskResult:
    task: int
    instruction: str
    success: bool = False
    interactions: int = 0
    replans: int = 0
    recoveries: int = 0
    realignments: int = 0
    plan_length: int = 0
    depth: int = 0
    error: str = ""


@dataclass
class RunReport:
    manifest: str
    oracle: str
    tasks: list[TaskResult] = field(default_factory=list)
    oracle_usage: dict[str, dict[str, int]] = field(default_factory=dict)
    classifiers: list[str] = field(default_factory=list)
    dataset_size: int = 0
    label_calls: int = 0
    transcript: str | None = None
    ew: EWReport | None = None

    @property
    def success(self) -> bool:
        return bool(self.tasks) and all(t.success for t in self.tasks)

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.tasks) / len(self.tasks) if self.tasks else 0.0

    def to_dict(self) -> dict:
        out = {
            "manifest": self.manifest,
            "oracle": self.oracle,
            "success": self.success,
            "success_rate": self.success_rate,
            "tasks": [asdict(t) for t in self.tasks],
            "oracle_usage": self.oracle_usage,
            "classifiers": self.classifiers,
            "dataset_size": self.dataset_size,
            "label_calls": self.label_calls,
            "transcript": self.transcript,
        }
        if self.ew is not None:
            out["ew"] = self.ew.to_dict()
        return out


def run_learning(
    manifest: Manifest,
    oracle: Oracle,
    config: LearnerConfig = LearnerConfig(),
    budgets: Budgets | None = None,
    out: Path | None = None,
    ew: EWConfig | None = None,
) -> tuple[RunReport, HierarchyLearner]:
    """Learn one hierarchy over the manifest's tasks in order; budgets reset per task.

    A task that fails is recorded in the report and learning continues with the
    next one. Artifacts are written to `out` when given.

    Raises:
        BudgetExhausted: zero interaction budget, before any environment call
    """
    budgets = budgets if budgets is not None else manifest.budgets
    if budgets.interactions == 0:
        raise BudgetExhausted("Interaction budget is 0, nothing can be executed")

    log.info("Learning '%s' (%s) with the %s oracle", manifest.name, manifest.environment, oracle.shortname())
    learner = HierarchyLearner(
        manifest.name,
        manifest.types(),
        manifest.psi_init(),
        manifest.skills(),
        oracle,
        config,
        budgets,
        manifest.classifiers(),
    )
    transcript = oracle.record or getattr(oracle, "transcript", None)
    report = RunReport(str(manifest.path), oracle.shortname(), transcript=str(transcript) if transcript else None)
    roots: list[HierarchyNode | None] = []
    for i, spec in enumerate(manifest.tasks):
        result = TaskResult(i + 1, spec.instruction)
        env = manifest.make_env(i)
        learner.begin_task(env, spec.instruction, manifest.goal(i), manifest.static_init(i))
        root = None
        try:
            root = learner.learn_task()
            learner.finish_task()
            result.success = goal_satisfied(env.ground_truth_atoms(), learner.goal)
            if not result.success:
                result.error = "executed plan does not reach the goal in the environment"
        except (PlanningError, HierarchyError, OracleError) as e:
            log.error("Task %d failed: %s", i + 1, e)
            result.error = f"{type(e).__name__}: {e}"
            learner.audit.append({"type": "task-failure", "task": i + 1, "error": result.error})
        result.interactions = learner.interactions
        result.replans = learner.counters.replans
        result.recoveries = learner.counters.recoveries
        result.realignments = learner.counters.realignments
        if root is not None:
            result.plan_length = len(root.plan)
            result.depth = root.depth
            for line in describe_hierarchy(root):
                log.debug("       %s", line)
        log.info(
            "Task %d %s: %d interactions, %d replans, %d recoveries",
            i + 1, "solved" if result.success else "FAILED", result.interactions, result.replans, result.recoveries,
        )
        report.tasks.append(result)
        roots.append(root)

    report.oracle_usage = oracle.usage_report()
    report.classifiers = sorted(learner.registry)
    report.dataset_size = len(learner.dataset)
    report.label_calls = learner.label_calls

    reference = manifest.reference_domain()
    if ew is not None and reference is not None:
        problems = {f"task{i + 1}": manifest.problem(i) for i in range(len(manifest.tasks))}
        try:
            report.ew = ew_score(learner.root_domain, reference, {k: p for k, p in problems.items() if p is not None}, ew)
            report.ew.success_rate = report.success_rate
        except EvaluationError as e:
            log.error("No exploration-walk score: %s", e)

    if out is not None:
        write_artifacts(out, report, learner, roots)
    return report, learner


def write_artifacts(out: Path, report: RunReport, learner: HierarchyLearner, roots: list[HierarchyNode | None]) -> None:
    if not prepare_dir(out):
        return
    (out / "domain.pddl").write_text(print_domain(learner.root_domain))
    for i, root in enumerate(roots, start=1):
        if root is not None:
            write_hierarchy(root, out / "hierarchy" / f"task{i}")
    write_jsonl(out / "audit.jsonl", learner.audit)
    learner.dataset.save(out / "dataset.jsonl")
    if len(learner.registry):
        learner.registry.save(out / "classifiers")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    log.info("Artifacts written to %s", out)
