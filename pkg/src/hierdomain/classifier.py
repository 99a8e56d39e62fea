import json
import logging
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pyparsing as pp

from .envs.base import ContinuousWorld, PartPose, WorldState
from .envs.tabletop import angle_diff
from .errors import (
    ClassifierSyntaxError,
    CyclicReference,
    MissingObject,
    NumericDomainError,
    UnknownAccessor,
)
from .symbolic import DomainModel, GroundAtom, PredicateSchema, SymbolicState, ground_atoms
from .utils import remove


log = logging.getLogger(__name__)


pp.ParserElement.enable_packrat()


# ============================================================================
# Syntax tree
# ============================================================================

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Abs:
    operand: object


type Node = Num | Bool | Name | Call | Unary | Binary | Abs


@dataclass(frozen=True)
class HyperParam:
    name: str
    default: float
    unit: str = ""


@dataclass(frozen=True)
class ClassifierProgram:
    """A predicate classifier: parameters, tunable hyperparameters and a boolean body"""
    predicate: str
    params: tuple[str, ...]
    hypers: tuple[HyperParam, ...]
    body: Node
    source: str = field(default="", compare=False)

    @property
    def defaults(self) -> dict[str, float]:
        return {h.name: h.default for h in self.hypers}

    @property
    def arity(self) -> int:
        return len(self.params)

    def calls(self) -> set[str]:
        return _calls(self.body)


def _calls(node) -> set[str]:
    match node:
        case Call(name, args):
            out = {name}
            for a in args:
                out |= _calls(a)
            return out
        case Unary(_, operand) | Abs(operand):
            return _calls(operand)
        case Binary(_, left, right):
            return _calls(left) | _calls(right)
    return set()


# ============================================================================
# Grammar
# ============================================================================

def _fold_binary(toks: pp.ParseResults):
    items = toks[0]
    node = items[0]
    for i in range(1, len(items), 2):
        node = Binary(items[i], node, items[i + 1])
    return node


def _fold_unary(toks: pp.ParseResults):
    items = list(toks[0])
    node = items[-1]
    for op in reversed(items[:-1]):
        node = Unary(op, node)
    return node


def _grammar() -> tuple[pp.ParserElement, pp.ParserElement]:
    ident = pp.Word(pp.alphas + "_", pp.alphanums + "_")
    unsigned = pp.Regex(r"(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?")
    signed = pp.Regex(r"[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?").set_parse_action(lambda t: float(t[0]))

    expr = pp.Forward()
    number = unsigned.copy().set_parse_action(lambda t: Num(float(t[0])))
    boolean = (pp.Keyword("true") | pp.Keyword("false")).set_parse_action(lambda t: Bool(t[0] == "true"))
    call = (ident + pp.Suppress("(") + pp.Optional(pp.DelimitedList(expr)) + pp.Suppress(")")).set_parse_action(
        lambda t: Call(t[0], tuple(t[1:]))
    )
    name = ident.copy().set_parse_action(lambda t: Name(t[0]))
    bar = pp.Regex(r"\|(?!\|)")
    absolute = (pp.Suppress(bar) + expr + pp.Suppress(bar)).set_parse_action(lambda t: Abs(t[0]))
    operand = number | boolean | call | name | absolute

    expr <<= pp.infix_notation(operand, [
        (pp.one_of("! -"), 1, pp.OpAssoc.RIGHT, _fold_unary),
        (pp.one_of("* /"), 2, pp.OpAssoc.LEFT, _fold_binary),
        (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT, _fold_binary),
        (pp.one_of("<= >= == != < >"), 2, pp.OpAssoc.LEFT, _fold_binary),
        (pp.Literal("&&"), 2, pp.OpAssoc.LEFT, _fold_binary),
        (pp.Literal("||"), 2, pp.OpAssoc.LEFT, _fold_binary),
    ])

    params = pp.Group(pp.Suppress("(") + pp.Optional(pp.DelimitedList(ident)) + pp.Suppress(")"))
    hyper = pp.Group(ident + pp.Suppress("=") + signed + pp.Optional(ident))
    hypers = pp.Group(pp.Optional(pp.Suppress("{") + pp.Optional(pp.DelimitedList(hyper)) + pp.Suppress("}")))
    program = ident + params + hypers + pp.Suppress(":=") + expr + pp.StringEnd()
    program.ignore(pp.python_style_comment)
    return program, expr


PROGRAM, EXPRESSION = _grammar()


# ============================================================================
# Accessors
# ============================================================================

class Kind(Enum):
    NUM = "number"
    BOOL = "boolean"
    VEC = "vector"
    OBJ = "object"


# argument kind POS accepts a vector or an object with a position
POS = "position"


@dataclass(frozen=True)
class Accessor:
    args: tuple
    returns: Kind
    fn: Callable


def _part(w: ContinuousWorld, name: str) -> PartPose:
    pose = w.part(name)
    if pose is None:
        raise NumericDomainError(f"'{name}' has no pose")
    return pose


def _robot(w: ContinuousWorld, name: str):
    robot = w.robot(name)
    if robot is None:
        raise NumericDomainError(f"'{name}' has no gripper")
    return robot


def _table(w: ContinuousWorld, name: str):
    table = w.table(name)
    if table is None:
        raise NumericDomainError(f"'{name}' has no surface")
    return table


def _position(w: ContinuousWorld, value) -> np.ndarray:
    if isinstance(value, np.ndarray):
        return value
    if w.part(value) is not None:
        return np.asarray(_part(w, value).center)
    if w.robot(value) is not None:
        return np.asarray(_robot(w, value).gripper_center)
    raise NumericDomainError(f"'{value}' has no position")


def _sqrt(w, x: float) -> float:
    if x < 0:
        raise NumericDomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


ACCESSORS: dict[str, Accessor] = {
    "center": Accessor((Kind.OBJ,), Kind.VEC, lambda w, o: np.asarray(_part(w, o).center)),
    "orientation": Accessor((Kind.OBJ,), Kind.VEC, lambda w, o: np.asarray(_part(w, o).orientation)),
    "bbox_min": Accessor((Kind.OBJ,), Kind.VEC, lambda w, o: np.asarray(_part(w, o).bbox_min)),
    "bbox_max": Accessor((Kind.OBJ,), Kind.VEC, lambda w, o: np.asarray(_part(w, o).bbox_max)),
    "roll": Accessor((Kind.OBJ,), Kind.NUM, lambda w, o: _part(w, o).orientation[0]),
    "pitch": Accessor((Kind.OBJ,), Kind.NUM, lambda w, o: _part(w, o).orientation[1]),
    "yaw": Accessor((Kind.OBJ,), Kind.NUM, lambda w, o: _part(w, o).orientation[2]),
    "top_z": Accessor((Kind.OBJ,), Kind.NUM, lambda w, o: _part(w, o).top_z),
    "bottom_z": Accessor((Kind.OBJ,), Kind.NUM, lambda w, o: _part(w, o).bottom_z),
    "gripper_center": Accessor((Kind.OBJ,), Kind.VEC, lambda w, r: np.asarray(_robot(w, r).gripper_center)),
    "gripper_closed": Accessor((Kind.OBJ,), Kind.BOOL, lambda w, r: _robot(w, r).gripper_closed),
    "surface_z": Accessor((Kind.OBJ,), Kind.NUM, lambda w, t: _table(w, t).surface_z),
    "attached": Accessor((Kind.OBJ, Kind.OBJ), Kind.BOOL, lambda w, a, b: (a, b) in w.assembled),
    "x": Accessor((Kind.VEC,), Kind.NUM, lambda w, v: float(v[0])),
    "y": Accessor((Kind.VEC,), Kind.NUM, lambda w, v: float(v[1])),
    "z": Accessor((Kind.VEC,), Kind.NUM, lambda w, v: float(v[2])),
    "dist": Accessor((POS, POS), Kind.NUM, lambda w, a, b: float(np.linalg.norm(_position(w, a) - _position(w, b)))),
    "dist_xy": Accessor((POS, POS), Kind.NUM, lambda w, a, b: float(np.linalg.norm((_position(w, a) - _position(w, b))[:2]))),
    "angle_diff": Accessor((Kind.NUM, Kind.NUM), Kind.NUM, lambda w, a, b: angle_diff(a, b)),
    "abs": Accessor((Kind.NUM,), Kind.NUM, lambda w, a: abs(a)),
    "sqrt": Accessor((Kind.NUM,), Kind.NUM, _sqrt),
    "min": Accessor((Kind.NUM, Kind.NUM), Kind.NUM, lambda w, a, b: min(a, b)),
    "max": Accessor((Kind.NUM, Kind.NUM), Kind.NUM, lambda w, a, b: max(a, b)),
}


# ============================================================================
# Parsing and type checking
# ============================================================================

ARITHMETIC = {"+", "-", "*", "/"}
ORDERING = {"<", "<=", ">", ">="}
EQUALITY = {"==", "!="}
LOGICAL = {"&&", "||"}


class _Checker:
    def __init__(self, program_name: str, params: tuple[str, ...], hypers: Iterable[str], registry: "ClassifierRegistry | None"):
        self.program_name = program_name
        self.params = set(params)
        self.hypers = set(hypers)
        self.registry = registry

    def check(self, node) -> Kind:
        match node:
            case Num():
                return Kind.NUM
            case Bool():
                return Kind.BOOL
            case Name(name):
                if name in self.params:
                    return Kind.OBJ
                if name in self.hypers:
                    return Kind.NUM
                raise UnknownAccessor(f"Free name '{name}' in classifier '{self.program_name}'")
            case Abs(operand):
                kind = self.check(operand)
                if kind not in (Kind.NUM, Kind.VEC):
                    raise ClassifierSyntaxError(f"|...| needs a number or vector, got {kind.value}")
                return Kind.NUM
            case Unary(op, operand):
                kind = self.check(operand)
                if op == "!" and kind is Kind.BOOL:
                    return Kind.BOOL
                if op == "-" and kind in (Kind.NUM, Kind.VEC):
                    return kind
                raise ClassifierSyntaxError(f"Operator '{op}' cannot apply to a {kind.value}")
            case Binary(op, left, right):
                return self._binary(op, self.check(left), self.check(right))
            case Call(name, args):
                return self._call(name, args)
        raise ClassifierSyntaxError(f"Unexpected node {node!r}")

    def _binary(self, op: str, lk: Kind, rk: Kind) -> Kind:
        if op in ARITHMETIC:
            if lk is rk is Kind.NUM:
                return Kind.NUM
            if op in ("+", "-") and lk is rk is Kind.VEC:
                return Kind.VEC
            if op in ("*", "/") and lk is Kind.VEC and rk is Kind.NUM:
                return Kind.VEC
        elif op in ORDERING:
            if lk is rk is Kind.NUM:
                return Kind.BOOL
        elif op in EQUALITY:
            if lk is rk and lk in (Kind.NUM, Kind.BOOL, Kind.OBJ):
                return Kind.BOOL
        elif op in LOGICAL:
            if lk is rk is Kind.BOOL:
                return Kind.BOOL
        raise ClassifierSyntaxError(f"Operator '{op}' cannot combine {lk.value} and {rk.value}")

    def _call(self, name: str, args: tuple) -> Kind:
        if name == self.program_name:
            raise CyclicReference(f"Classifier '{name}' calls itself")
        kinds = [self.check(a) for a in args]
        accessor = ACCESSORS.get(name)
        if accessor is not None:
            if len(kinds) != len(accessor.args):
                raise ClassifierSyntaxError(f"'{name}' takes {len(accessor.args)} arguments, got {len(kinds)}")
            for expected, got in zip(accessor.args, kinds):
                ok = got in (Kind.VEC, Kind.OBJ) if expected == POS else got is expected
                if not ok:
                    raise ClassifierSyntaxError(f"Argument of '{name}' must be a {getattr(expected, 'value', expected)}, got {got.value}")
            return accessor.returns
        if self.registry is not None and name in self.registry:
            if self.program_name in self.registry.dependencies(name):
                raise CyclicReference(f"Classifier '{name}' already depends on '{self.program_name}'")
            callee = self.registry.program(name)
            if len(kinds) != callee.arity or any(k is not Kind.OBJ for k in kinds):
                raise ClassifierSyntaxError(f"'{name}' takes {callee.arity} object arguments")
            return Kind.BOOL
        raise UnknownAccessor(f"Unknown accessor or classifier '{name}'")


def parse_classifier(text: str, registry: "ClassifierRegistry | None" = None) -> ClassifierProgram:
    """Parse and check a classifier program such as

        on_table(p, t){z_tol=0.005 m} := |bottom_z(p) - surface_z(t)| <= z_tol

    Raises:
        ClassifierSyntaxError: malformed text or ill-typed body
        UnknownAccessor: the body uses an undeclared name
        CyclicReference: the program reaches itself through other classifiers
    """
    try:
        toks = PROGRAM.parse_string(text.strip(), parse_all=True)
    except pp.ParseBaseException as e:
        raise ClassifierSyntaxError(f"Invalid classifier: {e.msg}", e.lineno, e.col) from None
    name, params, hypers, body = toks[0], tuple(toks[1]), toks[2], toks[3]
    hyper_params = tuple(HyperParam(h[0], float(h[1]), h[2] if len(h) > 2 else "") for h in hypers)
    names = list(params) + [h.name for h in hyper_params]
    if len(names) != len(set(names)):
        raise ClassifierSyntaxError(f"Duplicate parameter name in classifier '{name}'")
    for h in hyper_params:
        if not math.isfinite(h.default):
            raise ClassifierSyntaxError(f"Hyperparameter '{h.name}' needs a finite default")
    kind = _Checker(name, params, (h.name for h in hyper_params), registry).check(body)
    if kind is not Kind.BOOL:
        raise ClassifierSyntaxError(f"Classifier '{name}' must evaluate to a boolean, not a {kind.value}")
    return ClassifierProgram(name, params, hyper_params, body, text.strip())


# ============================================================================
# Evaluation
# ============================================================================

class _Evaluator:
    def __init__(self, world: ContinuousWorld, binding: Mapping[str, str], theta: Mapping[str, float], registry: "ClassifierRegistry | None"):
        self.world = world
        self.binding = binding
        self.theta = theta
        self.registry = registry

    def eval(self, node):
        match node:
            case Num(value) | Bool(value):
                return value
            case Name(name):
                if name in self.binding:
                    return self.binding[name]
                return self.theta[name]
            case Abs(operand):
                v = self.eval(operand)
                return float(np.linalg.norm(v)) if isinstance(v, np.ndarray) else abs(v)
            case Unary("!", operand):
                return not self.eval(operand)
            case Unary("-", operand):
                return -self.eval(operand)
            case Binary("&&", left, right):
                return bool(self.eval(left)) and bool(self.eval(right))
            case Binary("||", left, right):
                return bool(self.eval(left)) or bool(self.eval(right))
            case Binary(op, left, right):
                return self._binary(op, self.eval(left), self.eval(right))
            case Call(name, args):
                values = [self.eval(a) for a in args]
                accessor = ACCESSORS.get(name)
                if accessor is not None:
                    return accessor.fn(self.world, *values)
                assert self.registry is not None
                return self.registry.evaluate(GroundAtom(name, tuple(values)), self.world)
        raise ClassifierSyntaxError(f"Unexpected node {node!r}")

    @staticmethod
    def _binary(op: str, a, b):
        match op:
            case "+":
                return a + b
            case "-":
                return a - b
            case "*":
                return a * b
            case "/":
                if b == 0:
                    raise NumericDomainError("Division by zero")
                return a / b
            case "<":
                return a < b
            case "<=":
                return a <= b
            case ">":
                return a > b
            case ">=":
                return a >= b
            case "==":
                return a == b
            case "!=":
                return a != b
        raise ClassifierSyntaxError(f"Unknown operator '{op}'")


def eval_classifier(
    c: ClassifierProgram,
    atom: GroundAtom,
    w: WorldState,
    theta: Mapping[str, float] | None = None,
    registry: "ClassifierRegistry | None" = None,
) -> bool:
    """Decide whether `atom` holds in `w`.

    Raises:
        MissingObject: an argument is not in the scene
        NumericDomainError: an accessor does not apply to an argument
    """
    if len(atom.args) != c.arity:
        raise ValueError(f"{atom} does not match classifier {c.predicate}/{c.arity}")
    if not isinstance(w, ContinuousWorld):
        raise NumericDomainError("Classifiers evaluate continuous states only")
    for obj in atom.args:
        if not w.has_object(obj):
            raise MissingObject(f"'{obj}' is not in the scene")
    values = c.defaults
    if theta:
        values.update(theta)
    return bool(_Evaluator(w, dict(zip(c.params, atom.args)), values, registry).eval(c.body))


# ============================================================================
# Registry
# ============================================================================

@dataclass
class RegisteredClassifier:
    program: ClassifierProgram
    theta: dict[str, float]


class ClassifierRegistry:
    """Current classifier and hyperparameters per predicate"""

    def __init__(self):
        self._entries: dict[str, RegisteredClassifier] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(sorted(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def program(self, name: str) -> ClassifierProgram:
        return self._entries[name].program

    def theta(self, name: str) -> dict[str, float]:
        return dict(self._entries[name].theta)

    def set_theta(self, name: str, theta: Mapping[str, float]) -> None:
        self._entries[name].theta = dict(theta)

    def dependencies(self, name: str) -> set[str]:
        """Classifiers reachable from `name`, itself excluded"""
        seen: set[str] = set()
        stack = [name]
        while stack:
            current = stack.pop()
            if current not in self._entries:
                continue
            for callee in self._entries[current].program.calls():
                if callee in self._entries and callee not in seen:
                    seen.add(callee)
                    stack.append(callee)
        seen.discard(name)
        return seen

    def register(self, program: ClassifierProgram, theta: Mapping[str, float] | None = None) -> None:
        for callee in program.calls():
            if callee == program.predicate or program.predicate in self.dependencies(callee):
                raise CyclicReference(f"Registering '{program.predicate}' would create a cycle through '{callee}'")
        self._entries[program.predicate] = RegisteredClassifier(program, dict(theta) if theta else program.defaults)
        log.debug("Registered classifier %s", program.predicate)

    def remove(self, name: str) -> None:
        self._entries.pop(name, None)

    def groundable(self, schema: PredicateSchema) -> bool:
        return schema.state_based and schema.name in self._entries

    def evaluate(self, atom: GroundAtom, w: WorldState, theta: Mapping[str, float] | None = None, program: ClassifierProgram | None = None) -> bool:
        entry = self._entries.get(atom.predicate)
        if program is None:
            if entry is None:
                raise UnknownAccessor(f"No classifier for '{atom.predicate}'")
            program = entry.program
        if theta is None:
            theta = entry.theta if entry is not None and entry.program == program else program.defaults
        return eval_classifier(program, atom, w, theta, self)

    def ground(self, w: WorldState, schemas: Iterable[PredicateSchema], domain: DomainModel, objects: Mapping[str, str]) -> SymbolicState:
        """Atoms of the given schemas that the classifiers judge true in `w`"""
        atoms = set()
        for schema in schemas:
            if not schema.state_based:
                raise ValueError(f"'{schema.name}' is state-independent and cannot be grounded")
            if schema.name not in self._entries:
                continue
            for atom in ground_atoms(schema, domain, objects):
                try:
                    if self.evaluate(atom, w):
                        atoms.add(atom)
                except NumericDomainError as e:
                    log.debug("%s treated as false: %s", atom, e)
        return frozenset(atoms)

    # ------------------------------------------------------------------------
    # Files
    # ------------------------------------------------------------------------

    def save(self, path: Path) -> None:
        """Write one `<predicate>.cls` file per classifier and `registry.json` with current hyperparameters"""
        if path.exists():
            for stale in path.glob("*.cls"):
                remove(stale)
        path.mkdir(parents=True, exist_ok=True)
        for name, entry in sorted(self._entries.items()):
            (path / f"{name}.cls").write_text(entry.program.source + "\n")
        (path / "registry.json").write_text(json.dumps({n: e.theta for n, e in sorted(self._entries.items())}, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path) -> "ClassifierRegistry":
        registry = cls()
        thetas = {}
        manifest = path / "registry.json"
        if manifest.exists():
            thetas = json.loads(manifest.read_text())
        pending = {f.stem: f.read_text() for f in sorted(path.glob("*.cls"))}
        # register callees first
        while pending:
            progress = False
            for name, text in list(pending.items()):
                try:
                    program = parse_classifier(text, registry)
                except UnknownAccessor:
                    continue
                registry.register(program, thetas.get(name))
                del pending[name]
                progress = True
            if not progress:
                name, text = next(iter(pending.items()))
                parse_classifier(text, registry)
        return registry
