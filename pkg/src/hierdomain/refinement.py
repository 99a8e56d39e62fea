import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .classifier import Abs, Binary, Call, ClassifierProgram, ClassifierRegistry, Name, Unary, eval_classifier
from .config import LearnerConfig, SearchConfig
from .envs.base import ContinuousWorld, WorldState, describe_part
from .errors import (
    ClassifierError,
    EmptySearchSpace,
    NoRelevantAtoms,
    NumericDomainError,
    OracleError,
    UnparseableResponse,
    ZeroDefault,
)
from .oracle.roles import OracleRole
from .symbolic import GroundAtom, SymbolicState

if TYPE_CHECKING:
    from .oracle.base import Oracle


log = logging.getLogger(__name__)


type Sample = tuple[WorldState, SymbolicState]
type HyperAssignment = dict[str, float]

SCORE_TOL = 1e-12
MAX_MISMATCHES = 3


class RefineDecision(Enum):
    KEEP = "keep"
    OPTIMIZE_HYPERS = "optimize-hypers"
    ORACLE_REFINE = "oracle-refine"


@dataclass(frozen=True)
class F1Report:
    per_atom: dict[GroundAtom, float]
    f_min: float
    f_avg: float


# ============================================================================
# Scoring
# ============================================================================

def _predict(c: ClassifierProgram, atom: GroundAtom, w: WorldState, theta: Mapping[str, float], registry: ClassifierRegistry | None) -> bool:
    try:
        return eval_classifier(c, atom, w, theta, registry)
    except NumericDomainError:
        return False


def f1_scores(
    c: ClassifierProgram,
    theta: Mapping[str, float],
    data: Sequence[Sample],
    atoms: Iterable[GroundAtom],
    registry: ClassifierRegistry | None = None,
) -> F1Report:
    """Per-atom F1 of a classifier against pseudo-labels.

    Atoms that are never true in either the labels or the predictions are skipped.

    Raises:
        NoRelevantAtoms: nothing left to score
    """
    per_atom: dict[GroundAtom, float] = {}
    for atom in atoms:
        tp = fp = fn = 0
        for world, labels in data:
            predicted = _predict(c, atom, world, theta, registry)
            actual = atom in labels
            if predicted and actual:
                tp += 1
            elif predicted:
                fp += 1
            elif actual:
                fn += 1
        if tp + fp + fn == 0:
            continue
        per_atom[atom] = 2 * tp / (2 * tp + fp + fn)
    if not per_atom:
        raise NoRelevantAtoms(f"No atom of '{c.predicate}' is true in the data or the predictions")
    scores = list(per_atom.values())
    return F1Report(per_atom, min(scores), sum(scores) / len(scores))


def _score(c: ClassifierProgram, theta: Mapping[str, float], data: Sequence[Sample], atoms: Sequence[GroundAtom], registry: ClassifierRegistry | None) -> float:
    # nothing predicted and nothing labeled counts as perfect
    try:
        return f1_scores(c, theta, data, atoms, registry).f_avg
    except NoRelevantAtoms:
        return 1.0


def refine_decision(f_min: float, tau_hp: float = 0.9, tau_llm: float = 0.6) -> RefineDecision:
    if not 0 <= f_min <= 1:
        raise ValueError(f"F1 score {f_min} outside [0, 1]")
    if f_min < tau_llm:
        return RefineDecision.ORACLE_REFINE
    if f_min < tau_hp:
        return RefineDecision.OPTIMIZE_HYPERS
    return RefineDecision.KEEP


# ============================================================================
# Hyperparameter search
# ============================================================================

def search_bounds(c: ClassifierProgram, search: SearchConfig) -> dict[str, tuple[float, float]]:
    bounds = {}
    for h in c.hypers:
        if h.name in search.bounds:
            bounds[h.name] = search.bounds[h.name]
        elif h.default == 0:
            log.warning("Hyperparameter '%s' of %s has a zero default, searching [0, 1]", h.name, c.predicate)
            bounds[h.name] = (0.0, 1.0)
        else:
            a, b = h.default / search.bound_factor, h.default * search.bound_factor
            bounds[h.name] = (min(a, b), max(a, b))
    return bounds


def sample_pool(c: ClassifierProgram, search: SearchConfig) -> list[HyperAssignment]:
    """The defaults followed by `search.samples` seeded random assignments.

    Bounds on one side of zero are sampled log-uniformly, others uniformly.
    """
    if not c.hypers:
        raise EmptySearchSpace(f"Classifier '{c.predicate}' has no hyperparameters")
    bounds = search_bounds(c, search)
    rng = np.random.default_rng(search.seed)
    columns = {}
    for h in c.hypers:
        lo, hi = bounds[h.name]
        if lo > hi:
            raise EmptySearchSpace(f"Empty bounds [{lo}, {hi}] for '{h.name}'")
        if lo > 0 or hi < 0:
            sign = 1.0 if lo > 0 else -1.0
            a, b = sorted((math.log(abs(lo)), math.log(abs(hi))))
            columns[h.name] = sign * np.exp(rng.uniform(a, b, search.samples))
        else:
            columns[h.name] = rng.uniform(lo, hi, search.samples)
    pool = [c.defaults]
    pool += [{name: float(columns[name][i]) for name in columns} for i in range(search.samples)]
    return pool


def _relative(delta: float, default: float, name: str, allow_zero_default: bool) -> float:
    if default == 0:
        if not allow_zero_default:
            raise ZeroDefault(f"Hyperparameter '{name}' has a zero default")
        return abs(delta)
    return abs(delta) / abs(default)


def robustness(
    theta: Mapping[str, float],
    pool: Sequence[tuple[Mapping[str, float], float]],
    theta_default: Mapping[str, float],
    allow_zero_default: bool = True,
) -> float:
    """Smallest relative step, along any single hyperparameter, to a pool member that scores differently.

    Returns +inf when every pool member scores like `theta`.
    """
    own = None
    for candidate, score in pool:
        if candidate == theta:
            own = score
            break
    if own is None:
        raise ValueError("theta must be a member of the pool")
    zero = sorted(k for k, v in theta_default.items() if v == 0)
    if zero and allow_zero_default:
        log.warning("Zero default for %s, measuring absolute steps instead of relative ones", ", ".join(zero))
    best = math.inf
    for candidate, score in pool:
        if abs(score - own) <= SCORE_TOL:
            continue
        step = min(
            _relative(candidate[k] - theta[k], theta_default[k], k, allow_zero_default) for k in theta_default
        )
        best = min(best, step)
    return best


def _distance_to_default(theta: Mapping[str, float], default: Mapping[str, float]) -> float:
    return sum(_relative(theta[k] - default[k], default[k], k, True) for k in default)


def optimize_hypers(
    c: ClassifierProgram,
    data: Sequence[Sample],
    atoms: Sequence[GroundAtom],
    search: SearchConfig = SearchConfig(),
    registry: ClassifierRegistry | None = None,
) -> HyperAssignment:
    """Seeded random search for the hyperparameters with the best average F1.

    Ties are broken by robustness and then by closeness to the defaults.
    """
    pool = sample_pool(c, search)
    scored = [(theta, _score(c, theta, data, atoms, registry)) for theta in pool]
    best = max(score for _, score in scored)
    top = [theta for theta, score in scored if best - score <= SCORE_TOL]
    defaults = c.defaults
    ranked = [(robustness(theta, scored, defaults), theta) for theta in top]
    most_robust = max(r for r, _ in ranked)
    finalists = [theta for r, theta in ranked if r == most_robust]
    choice = min(finalists, key=lambda t: _distance_to_default(t, defaults))
    log.debug("Optimized %s: F1 %.3f with %s", c.predicate, best, choice)
    return dict(choice)


# ============================================================================
# Oracle refinement
# ============================================================================

def accept_refinement(
    old: tuple[ClassifierProgram, Mapping[str, float]],
    new: tuple[ClassifierProgram, Mapping[str, float]],
    data: Sequence[Sample],
    atoms: Sequence[GroundAtom],
    registry: ClassifierRegistry | None = None,
) -> tuple[ClassifierProgram, Mapping[str, float]]:
    """Keep `new` unless it scores a lower average F1 than `old`"""
    old_score = _score(old[0], old[1], data, atoms, registry)
    new_score = _score(new[0], new[1], data, atoms, registry)
    if new_score >= old_score:
        return new
    log.info("Rejected refined %s: F1 %.3f < %.3f", new[0].predicate, new_score, old_score)
    return old


@dataclass(frozen=True)
class Mismatch:
    world: WorldState
    atom: GroundAtom
    predicted: bool
    label: bool
    sub_results: dict[str, bool] = field(default_factory=dict)

    def describe(self) -> str:
        lines = [f"Atom: {self.atom}"]
        if isinstance(self.world, ContinuousWorld):
            for obj in self.atom.args:
                pose = self.world.part(obj)
                robot = self.world.robot(obj)
                table = self.world.table(obj)
                if pose is not None:
                    lines.append(f"{obj} = {describe_part(pose)}")
                elif robot is not None:
                    lines.append(f"{obj} = Robot(gripper_center={list(round(v, 3) for v in robot.gripper_center)}, gripper_closed={robot.gripper_closed})")
                elif table is not None:
                    lines.append(f"{obj} = Table(surface_z={round(table.surface_z, 3)})")
        lines.append(f"Classifier result: {self.predicted}")
        lines.append(f"Expected result: {self.label}")
        for name, value in sorted(self.sub_results.items()):
            lines.append(f"Sub-classifier {name}: {value}")
        return "\n".join(lines)


def _sub_results(c: ClassifierProgram, atom: GroundAtom, world: WorldState, registry: ClassifierRegistry | None) -> dict[str, bool]:
    if registry is None:
        return {}
    binding = dict(zip(c.params, atom.args))
    out = {}

    def walk(node):
        match node:
            case Call(name, args):
                if name in registry and all(isinstance(a, Name) and a.name in binding for a in args):
                    sub = GroundAtom(name, tuple(binding[a.name] for a in args))
                    try:
                        out[str(sub)] = registry.evaluate(sub, world)
                    except ClassifierError:
                        pass
                for a in args:
                    walk(a)
            case Unary(_, operand) | Abs(operand):
                walk(operand)
            case Binary(_, left, right):
                walk(left)
                walk(right)

    walk(c.body)
    return out


def find_mismatches(
    c: ClassifierProgram,
    theta: Mapping[str, float],
    data: Sequence[Sample],
    atoms: Sequence[GroundAtom],
    registry: ClassifierRegistry | None = None,
    limit: int = MAX_MISMATCHES,
) -> list[Mismatch]:
    """Up to `limit` samples where classifier and pseudo-label disagree"""
    found: list[Mismatch] = []
    for world, labels in data:
        for atom in atoms:
            predicted = _predict(c, atom, world, theta, registry)
            label = atom in labels
            if predicted != label:
                found.append(Mismatch(world, atom, predicted, label, _sub_results(c, atom, world, registry)))
                if len(found) >= limit:
                    return found
    return found


def oracle_refine(
    c: ClassifierProgram,
    mismatches: Sequence[Mismatch],
    oracle: "Oracle",
    registry: ClassifierRegistry | None = None,
) -> ClassifierProgram:
    """Ask the oracle for a corrected program.

    Raises:
        UnparseableResponse: the oracle did not produce a valid program
    """
    if not mismatches:
        raise ValueError("oracle_refine needs at least one mismatch")
    context = {
        "predicate": c.predicate,
        "program": c.source,
        "samples": "\n\n".join(f"Sample {i}:\n{m.describe()}" for i, m in enumerate(mismatches[:MAX_MISMATCHES], start=1)),
        "registry": registry,
    }
    try:
        program = oracle.ask(OracleRole.CLASSIFIER_REFINE, context)
    except (OracleError, ClassifierError) as e:
        raise UnparseableResponse(f"No usable refinement of '{c.predicate}': {e}") from e
    if program.predicate != c.predicate or program.arity != c.arity:
        raise UnparseableResponse(f"Refinement of '{c.predicate}' changed its signature to {program.predicate}/{program.arity}")
    return program


# ============================================================================
# Refinement loop
# ============================================================================

@dataclass
class RefinementRound:
    predicate: str
    decision: RefineDecision
    f_min: float
    f_avg: float
    action: str = ""


def refine_classifier(
    name: str,
    registry: ClassifierRegistry,
    data: Sequence[Sample],
    atoms: Sequence[GroundAtom],
    config: LearnerConfig = LearnerConfig(),
    oracle: "Oracle | None" = None,
) -> list[RefinementRound]:
    """Refine one registered classifier until it is kept or no round improves it.

    An oracle round that returns an unchanged or rejected program falls through
    to hyperparameter search in the same round.
    """
    rounds: list[RefinementRound] = []
    search = config.search
    for _ in range(config.refine_rounds):
        program, theta = registry.program(name), registry.theta(name)
        report = f1_scores(program, theta, data, atoms, registry)
        decision = refine_decision(report.f_min, config.tau_hp, config.tau_llm)
        entry = RefinementRound(name, decision, report.f_min, report.f_avg)
        rounds.append(entry)
        if decision is RefineDecision.KEEP:
            break

        if decision is RefineDecision.ORACLE_REFINE and oracle is not None:
            mismatches = find_mismatches(program, theta, data, atoms, registry)
            try:
                candidate = oracle_refine(program, mismatches, oracle, registry)
            except UnparseableResponse as e:
                log.warning("Keeping classifier %s: %s", name, e)
                candidate = None
            if candidate is not None and candidate != program:
                chosen, _ = accept_refinement((program, theta), (candidate, candidate.defaults), data, atoms, registry)
                if chosen is candidate:
                    registry.register(candidate)
                    entry.action = "rewritten"
                    log.info("REFINE %s rewritten by oracle", name)
                    continue

        if not program.hypers:
            entry.action = "no hyperparameters"
            break
        new_theta = optimize_hypers(program, data, atoms, search, registry)
        new_score = _score(program, new_theta, data, atoms, registry)
        if new_score <= report.f_avg + SCORE_TOL:
            entry.action = "no improvement"
            break
        registry.set_theta(name, new_theta)
        entry.action = "hyperparameters"
        log.info("REFINE %s hyperparameters %s (F1 %.3f -> %.3f)", name, new_theta, report.f_avg, new_score)
    return rounds


def refine_all(
    registry: ClassifierRegistry,
    data: Sequence[Sample],
    atoms_of: Mapping[str, Sequence[GroundAtom]],
    config: LearnerConfig = LearnerConfig(),
    oracle: "Oracle | None" = None,
) -> list[RefinementRound]:
    rounds = []
    for name in list(registry):
        atoms = atoms_of.get(name)
        if not atoms:
            continue
        try:
            rounds += refine_classifier(name, registry, data, atoms, config, oracle)
        except NoRelevantAtoms:
            log.debug("Nothing to refine for %s", name)
    return rounds
