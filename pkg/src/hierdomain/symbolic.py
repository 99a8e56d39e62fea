import functools
import itertools
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ArityMismatch, PreconditionViolation, UnknownObjectType, UnknownPredicate


log = logging.getLogger(__name__)


ROOT_TYPE = "object"
EQUALITY = "="
GROUND_CACHE_SIZE = 4096


def implicit_parents(types: Iterable[tuple[str, str]]) -> list[tuple[str, str]]:
    """Add parents that are used but never declared, as direct subtypes of `object`."""
    types = list(types)
    declared = {t for t, _ in types} | {ROOT_TYPE}
    return types + [(p, ROOT_TYPE) for p in sorted({p for _, p in types} - declared)]


def normalize_name(name: str) -> str:
    """Canonical spelling used to match names across vocabularies."""
    return name.strip().lower().replace("-", "_")


def is_variable(term: str) -> bool:
    return term.startswith("?")


class PredicateKind(Enum):
    STATE_BASED = "state"
    STATE_INDEPENDENT = "other"


@dataclass(frozen=True)
class PredicateSchema:
    """Lifted predicate declaration"""
    name: str
    params: tuple[tuple[str, str], ...] = ()
    kind: PredicateKind = PredicateKind.STATE_BASED
    description: str = field(default="", compare=False)

    def __post_init__(self):
        names = [v for v, _ in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"Duplicate parameter in predicate '{self.name}'")

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def state_based(self) -> bool:
        return self.kind is PredicateKind.STATE_BASED

    def __str__(self) -> str:
        return _sexpr(self.name, [f"{v} - {t}" for v, t in self.params])


@dataclass(frozen=True, order=True)
class GroundAtom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return _sexpr(self.predicate, self.args)


type SymbolicState = frozenset[GroundAtom]


@dataclass(frozen=True)
class EffectSet:
    """Add/delete pair, also used for observed state changes"""
    add: frozenset[GroundAtom] = frozenset()
    delete: frozenset[GroundAtom] = frozenset()

    @property
    def empty(self) -> bool:
        return not self.add and not self.delete

    @property
    def atoms(self) -> frozenset[GroundAtom]:
        return self.add | self.delete

    def restrict(self, predicates: Iterable[str]) -> "EffectSet":
        keep = set(predicates)
        return EffectSet(
            frozenset(a for a in self.add if a.predicate in keep),
            frozenset(a for a in self.delete if a.predicate in keep),
        )

    def describe(self) -> list[str]:
        lines = [f"{a}: False -> True" for a in sorted(self.add)]
        lines += [f"{a}: True -> False" for a in sorted(self.delete)]
        return lines


@dataclass(frozen=True)
class Goal:
    positive: frozenset[GroundAtom] = frozenset()
    negative: frozenset[GroundAtom] = frozenset()

    def __post_init__(self):
        overlap = self.positive & self.negative
        if overlap:
            raise ValueError(f"Goal requires atoms both true and false: {', '.join(map(str, sorted(overlap)))}")

    @property
    def atoms(self) -> frozenset[GroundAtom]:
        return self.positive | self.negative


@dataclass(frozen=True)
class Literal:
    """Lifted (possibly negated) atom over operator variables"""
    predicate: str
    args: tuple[str, ...] = ()
    negated: bool = False

    @property
    def is_equality(self) -> bool:
        return self.predicate == EQUALITY

    def ground(self, binding: Mapping[str, str]) -> GroundAtom:
        return GroundAtom(self.predicate, tuple(binding.get(t, t) for t in self.args))

    def __str__(self) -> str:
        text = _sexpr(self.predicate, self.args)
        return f"(not {text})" if self.negated else text


@dataclass(frozen=True, order=True)
class Action:
    operator: str
    binding: tuple[str, ...] = ()

    def __str__(self) -> str:
        return _sexpr(self.operator, self.binding)


@dataclass(frozen=True)
class GroundOperator:
    """An operator with all variables substituted"""
    action: Action
    pre_pos: frozenset[GroundAtom]
    pre_neg: frozenset[GroundAtom]
    equalities: tuple[tuple[str, str, bool], ...]
    add: frozenset[GroundAtom]
    delete: frozenset[GroundAtom]

    def equalities_hold(self) -> bool:
        return all((a == b) != negated for a, b, negated in self.equalities)

    def missing(self, state: SymbolicState) -> tuple[str, ...]:
        out = [str(a) for a in sorted(self.pre_pos - state)]
        out += [f"(not {a})" for a in sorted(self.pre_neg & state)]
        for a, b, negated in self.equalities:
            if (a == b) == negated:
                out.append(f"(not (= {a} {b}))" if negated else f"(= {a} {b})")
        return tuple(out)

    def is_applicable(self, state: SymbolicState) -> bool:
        return self.pre_pos <= state and not (self.pre_neg & state) and self.equalities_hold()

    def apply(self, state: SymbolicState) -> SymbolicState:
        return (state - self.delete) | self.add

    @property
    def effects(self) -> EffectSet:
        return EffectSet(self.add, self.delete - self.add)


@dataclass(frozen=True)
class OperatorDef:
    name: str
    params: tuple[tuple[str, str], ...] = ()
    precondition: tuple[Literal, ...] = ()
    effects: tuple[Literal, ...] = ()
    description: str = field(default="", compare=False)

    def __post_init__(self):
        names = [v for v, _ in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"Duplicate parameter in operator '{self.name}'")
        declared = set(names)
        for lit in self.precondition + self.effects:
            for term in lit.args:
                if term not in declared:
                    raise ValueError(f"Operator '{self.name}' uses undeclared variable {term}")
        for lit in self.effects:
            if lit.is_equality:
                raise ValueError(f"Operator '{self.name}' has an equality in its effects")
        adds = {(l.predicate, l.args) for l in self.effects if not l.negated}
        dels = {(l.predicate, l.args) for l in self.effects if l.negated}
        clash = adds & dels
        if clash:
            pred, args = sorted(clash)[0]
            raise ValueError(f"Operator '{self.name}' both adds and deletes {_sexpr(pred, args)}")

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)

    @property
    def add_effects(self) -> tuple[Literal, ...]:
        return tuple(l for l in self.effects if not l.negated)

    @property
    def del_effects(self) -> tuple[Literal, ...]:
        return tuple(l for l in self.effects if l.negated)

    def predicates_used(self) -> set[str]:
        return {l.predicate for l in self.precondition + self.effects if not l.is_equality}

    def ground(self, binding: tuple[str, ...]) -> GroundOperator:
        if len(binding) != self.arity:
            raise ArityMismatch(f"Operator '{self.name}' takes {self.arity} arguments, got {len(binding)}")
        sub = {v: o for (v, _), o in zip(self.params, binding)}
        pre_pos, pre_neg, eqs = set(), set(), []
        for lit in self.precondition:
            if lit.is_equality:
                a, b = (sub[t] for t in lit.args)
                eqs.append((a, b, lit.negated))
            elif lit.negated:
                pre_neg.add(lit.ground(sub))
            else:
                pre_pos.add(lit.ground(sub))
        add = frozenset(l.ground(sub) for l in self.add_effects)
        delete = frozenset(l.ground(sub) for l in self.del_effects)
        return GroundOperator(Action(self.name, tuple(binding)), frozenset(pre_pos), frozenset(pre_neg), tuple(eqs), add, delete)

    def with_effect(self, lit: Literal) -> "OperatorDef":
        if lit in self.effects:
            return self
        return replace(self, effects=self.effects + (lit,))


@dataclass(frozen=True)
class DomainModel:
    name: str
    types: tuple[tuple[str, str], ...] = ()
    predicates: tuple[PredicateSchema, ...] = ()
    operators: tuple[OperatorDef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(sorted(set(implicit_parents(self.types)))))
        object.__setattr__(self, "predicates", tuple(sorted(self.predicates, key=lambda p: p.name)))
        seen_types = {t for t, _ in self.types}
        if len(seen_types) != len(self.types):
            raise ValueError(f"Type declared with two parents in domain '{self.name}'")
        known = seen_types | {ROOT_TYPE}
        names = [p.name for p in self.predicates]
        if len(names) != len(set(names)):
            raise ValueError(f"Duplicate predicate in domain '{self.name}'")
        for p in self.predicates:
            for _, t in p.params:
                if t not in known:
                    raise UnknownObjectType(f"Predicate '{p.name}' uses unknown type '{t}'")
        ops = [o.name for o in self.operators]
        if len(ops) != len(set(ops)):
            raise ValueError(f"Duplicate operator in domain '{self.name}'")
        schemas = {p.name: p for p in self.predicates}
        for op in self.operators:
            for _, t in op.params:
                if t not in known:
                    raise UnknownObjectType(f"Operator '{op.name}' uses unknown type '{t}'")
            for lit in op.precondition + op.effects:
                if lit.is_equality:
                    if len(lit.args) != 2:
                        raise ArityMismatch(f"Equality in '{op.name}' needs two arguments")
                    continue
                schema = schemas.get(lit.predicate)
                if schema is None:
                    raise UnknownPredicate(f"Operator '{op.name}' uses undeclared predicate '{lit.predicate}'")
                if schema.arity != len(lit.args):
                    raise ArityMismatch(f"Predicate '{lit.predicate}' takes {schema.arity} arguments in '{op.name}'")

    @functools.cached_property
    def _parents(self) -> dict[str, str]:
        return dict(self.types)

    @functools.cached_property
    def _predicate_map(self) -> dict[str, PredicateSchema]:
        return {p.name: p for p in self.predicates}

    @functools.cached_property
    def _operator_map(self) -> dict[str, OperatorDef]:
        return {o.name: o for o in self.operators}

    @functools.cached_property
    def _ground_cached(self):
        return functools.lru_cache(maxsize=GROUND_CACHE_SIZE)(self._ground)

    def _ground(self, action: Action) -> GroundOperator:
        op = self.operator(action.operator)
        if op is None:
            raise KeyError(f"Unknown operator '{action.operator}'")
        return op.ground(action.binding)

    def has_type(self, name: str) -> bool:
        return name == ROOT_TYPE or name in self._parents

    def is_subtype(self, t: str, ancestor: str) -> bool:
        while True:
            if t == ancestor:
                return True
            if t == ROOT_TYPE or t not in self._parents:
                return ancestor == ROOT_TYPE
            t = self._parents[t]

    def predicate(self, name: str) -> PredicateSchema | None:
        return self._predicate_map.get(name)

    def operator(self, name: str) -> OperatorDef | None:
        return self._operator_map.get(name)

    @property
    def state_based(self) -> frozenset[str]:
        return frozenset(p.name for p in self.predicates if p.state_based)

    @property
    def predicate_names(self) -> frozenset[str]:
        return frozenset(self._predicate_map)

    def ground(self, action: Action) -> GroundOperator:
        return self._ground_cached(action)

    def with_operator(self, op: OperatorDef) -> "DomainModel":
        """Replace an operator of the same name in place, or append it."""
        if op.name in self._operator_map:
            ops = tuple(op if o.name == op.name else o for o in self.operators)
        else:
            ops = self.operators + (op,)
        return replace(self, operators=ops)

    def without_operator(self, name: str) -> "DomainModel":
        return replace(self, operators=tuple(o for o in self.operators if o.name != name))

    def with_predicates(self, schemas: Iterable[PredicateSchema]) -> "DomainModel":
        current = dict(self._predicate_map)
        for s in schemas:
            current[s.name] = s
        return replace(self, predicates=tuple(current.values()))

    def restrict_operators(self, names: Iterable[str]) -> "DomainModel":
        keep = set(names)
        return replace(self, operators=tuple(o for o in self.operators if o.name in keep))


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...] = ()
    init: SymbolicState = frozenset()
    goal: Goal = Goal()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(sorted(set(self.objects))))
        names = [o for o, _ in self.objects]
        if len(names) != len(set(names)):
            raise ValueError(f"Object declared twice in problem '{self.name}'")

    @functools.cached_property
    def object_types(self) -> dict[str, str]:
        return dict(self.objects)

    def objects_of_type(self, domain: DomainModel, type_name: str) -> list[str]:
        return [o for o, t in self.objects if domain.is_subtype(t, type_name)]


# ============================================================================
# State algebra
# ============================================================================

def state_diff(s_i: SymbolicState, s_j: SymbolicState) -> EffectSet:
    return EffectSet(frozenset(s_j - s_i), frozenset(s_i - s_j))


def apply_effects(state: SymbolicState, effects: EffectSet) -> SymbolicState:
    return (state - effects.delete) | effects.add


def goal_satisfied(state: SymbolicState, goal: Goal) -> bool:
    return goal.positive <= state and not (goal.negative & state)


def apply(domain: DomainModel, state: SymbolicState, action: Action) -> SymbolicState:
    """Successor of `state` under `action`; raises PreconditionViolation listing every unmet literal."""
    ground = domain.ground(action)
    missing = ground.missing(state)
    if missing:
        raise PreconditionViolation(str(action), missing)
    return ground.apply(state)


def lift_atom(atom: GroundAtom, params: tuple[tuple[str, str], ...], binding: tuple[str, ...], negated: bool = False) -> Literal | None:
    """Express a ground atom over an action's variables, or None if some argument is unbound."""
    by_object: dict[str, str] = {}
    for (var, _), obj in zip(params, binding):
        by_object.setdefault(obj, var)
    try:
        return Literal(atom.predicate, tuple(by_object[a] for a in atom.args), negated)
    except KeyError:
        return None


def ground_atoms(schema: PredicateSchema, domain: DomainModel, objects: Mapping[str, str]) -> list[GroundAtom]:
    """All type-compatible groundings of a schema, in lexicographic order."""
    pools = [
        sorted(o for o, t in objects.items() if domain.is_subtype(t, ptype))
        for _, ptype in schema.params
    ]
    return [GroundAtom(schema.name, args) for args in itertools.product(*pools)]


# ============================================================================
# Grounded tasks
# ============================================================================

class GroundedTask:
    """All ground actions of a domain over a fixed object set, indexed for fast applicability tests.

    When `static_init` is given, actions whose preconditions on static predicates
    (never touched by any effect) fail in that state are pruned up front.
    """

    def __init__(self, domain: DomainModel, objects: Mapping[str, str], static_init: SymbolicState | None = None):
        self.domain = domain
        self.objects = dict(objects)
        changing = {l.predicate for op in domain.operators for l in op.effects}
        self.static_predicates = domain.predicate_names - changing
        self.actions: list[GroundOperator] = []
        self._always: list[int] = []
        self._trigger: dict[GroundAtom, list[int]] = {}

        for op in sorted(domain.operators, key=lambda o: o.name):
            pools = []
            for _, ptype in op.params:
                if not domain.has_type(ptype):
                    raise UnknownObjectType(f"Operator '{op.name}' uses unknown type '{ptype}'")
                pools.append(sorted(o for o, t in self.objects.items() if domain.is_subtype(t, ptype)))
            for binding in itertools.product(*pools):
                ground = op.ground(tuple(binding))
                if not ground.equalities_hold():
                    continue
                if static_init is not None and not self._static_ok(ground, static_init):
                    continue
                index = len(self.actions)
                self.actions.append(ground)
                if ground.pre_pos:
                    self._trigger.setdefault(min(ground.pre_pos), []).append(index)
                else:
                    self._always.append(index)

    def _static_ok(self, ground: GroundOperator, init: SymbolicState) -> bool:
        for atom in ground.pre_pos:
            if atom.predicate in self.static_predicates and atom not in init:
                return False
        for atom in ground.pre_neg:
            if atom.predicate in self.static_predicates and atom in init:
                return False
        return True

    def applicable(self, state: SymbolicState) -> list[GroundOperator]:
        candidates = list(self._always)
        for atom in state:
            hits = self._trigger.get(atom)
            if hits:
                candidates.extend(hits)
        candidates.sort()
        return [self.actions[i] for i in candidates if self.actions[i].is_applicable(state)]


@functools.lru_cache(maxsize=64)
def _grounded(domain: DomainModel, objects: tuple[tuple[str, str], ...]) -> GroundedTask:
    return GroundedTask(domain, dict(objects))


def applicable(domain: DomainModel, state: SymbolicState, objects: Mapping[str, str] | Problem) -> list[Action]:
    """Applicable actions, ordered by operator name then binding."""
    if isinstance(objects, Problem):
        pairs = objects.objects
    else:
        pairs = tuple(sorted(objects.items()))
    return [g.action for g in _grounded(domain, pairs).applicable(state)]


def check_atom(domain: DomainModel, atom: GroundAtom, objects: Mapping[str, str]) -> None:
    schema = domain.predicate(atom.predicate)
    if schema is None:
        raise UnknownPredicate(f"Unknown predicate '{atom.predicate}'")
    if schema.arity != len(atom.args):
        raise ArityMismatch(f"{atom} does not match {schema}")


def _sexpr(head: str, items: Iterable[str]) -> str:
    items = list(items)
    return f"({head} {' '.join(items)})" if items else f"({head})"
