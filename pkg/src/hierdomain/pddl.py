import logging
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import pyparsing as pp

from .errors import (
    ArityMismatch,
    PDDLSyntaxError,
    UnknownObject,
    UnknownObjectType,
    UnknownPredicate,
    UnsupportedFeature,
)
from .symbolic import (
    EQUALITY,
    ROOT_TYPE,
    Action,
    DomainModel,
    GroundAtom,
    Goal,
    Literal,
    OperatorDef,
    PredicateKind,
    PredicateSchema,
    Problem,
    implicit_parents,
    is_variable,
)


log = logging.getLogger(__name__)


SUPPORTED_REQUIREMENTS = {":strips", ":typing", ":negative-preconditions", ":equality"}
CANONICAL_REQUIREMENTS = ":strips :typing :negative-preconditions :equality"
UNSUPPORTED_SECTIONS = {":durative-action", ":functions", ":derived", ":constraints", ":process", ":event"}
UNSUPPORTED_CONNECTIVES = {"or", "imply", "exists", "forall", "when", "increase", "decrease", "assign"}
KIND_COMMENT = re.compile(r"^\s*\(\s*([^\s()]+)[^;\n]*;\s*(state|other)\b:?[ \t]*(.*)$", re.MULTILINE)


class Symbol(str):
    """A token that remembers where it came from"""
    line: int
    column: int

    def __new__(cls, text: str, line: int = 0, column: int = 0):
        obj = super().__new__(cls, text)
        obj.line = line
        obj.column = column
        return obj


@dataclass
class SList:
    items: list
    line: int
    column: int

    @property
    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], str):
            return self.items[0]
        return None

    def __len__(self) -> int:
        return len(self.items)


def _make_symbol(s: str, loc: int, toks: pp.ParseResults) -> Symbol:
    return Symbol(toks[0].lower(), pp.lineno(loc, s), pp.col(loc, s))


def _make_list(s: str, loc: int, toks: pp.ParseResults) -> SList:
    return SList(list(toks), pp.lineno(loc, s), pp.col(loc, s))


def _grammar() -> pp.ParserElement:
    token = pp.Regex(r"[^\s();]+").set_parse_action(_make_symbol)
    sexpr = pp.Forward()
    sexpr <<= (pp.Suppress("(") - pp.ZeroOrMore(token | sexpr) + pp.Suppress(")")).set_parse_action(_make_list)
    document = sexpr + pp.StringEnd()
    document.ignore(";" + pp.rest_of_line)
    return document


GRAMMAR = _grammar()
EXPECTED_PATTERN = re.compile(r"Expected (.+?)(?:,\s*found|$)")


def read_sexpr(text: str) -> SList:
    """Parse one balanced s-expression; errors carry line/column."""
    try:
        return GRAMMAR.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as exc:
        expected = frozenset()
        m = EXPECTED_PATTERN.search(exc.msg)
        if m:
            expected = frozenset({m.group(1).strip("'\"")})
        raise PDDLSyntaxError(exc.msg, exc.lineno, exc.column, expected) from None


def _where(node) -> tuple[int, int]:
    return getattr(node, "line", 0), getattr(node, "column", 0)


def _fail(message: str, node, expected: Iterable[str] = ()) -> PDDLSyntaxError:
    line, column = _where(node)
    return PDDLSyntaxError(message, line, column, frozenset(expected))


def _expect_list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise _fail(f"Expected {what}, found '{node}'", node, ["("])
    return node


def _typed_list(items: list, node, allow_untyped: bool = True) -> list[tuple[str, str]]:
    """`a b - t c` → [(a, t), (b, t), (c, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, SList):
            if item.head == "either":
                raise UnsupportedFeature("'either' types are not supported")
            raise _fail("Unexpected list in typed list", item)
        if item == "-":
            if i + 1 >= len(items) or not pending:
                raise _fail("Dangling '-' in typed list", item, ["type name"])
            type_name = items[i + 1]
            if isinstance(type_name, SList):
                if type_name.head == "either":
                    raise UnsupportedFeature("'either' types are not supported")
                raise _fail("Expected type name", type_name)
            out.extend((p, str(type_name)) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(str(item))
        i += 1
    if pending:
        if not allow_untyped:
            raise _fail("Missing type", node, ["-"])
        out.extend((p, ROOT_TYPE) for p in pending)
    return out


def _keyword_args(items: list, node) -> dict[str, object]:
    out: dict[str, object] = {}
    i = 0
    while i < len(items):
        key = items[i]
        if not isinstance(key, str) or not key.startswith(":"):
            raise _fail(f"Expected keyword, found '{key}'", key if isinstance(key, str) else node)
        if i + 1 >= len(items):
            raise _fail(f"Missing value for {key}", key)
        out[str(key)] = items[i + 1]
        i += 2
    return out


# ============================================================================
# Formulas
# ============================================================================

def _literal(node, variables: set[str], predicates: Mapping[str, PredicateSchema], negated: bool = False) -> Literal:
    node = _expect_list(node, "atom")
    head = node.head
    if head is None:
        raise _fail("Atom without predicate name", node)
    if head == "not":
        if len(node) != 2:
            raise _fail("'not' takes exactly one argument", node)
        if negated:
            raise UnsupportedFeature("Nested negation is not supported")
        return _literal(node.items[1], variables, predicates, negated=True)
    if head in UNSUPPORTED_CONNECTIVES:
        raise UnsupportedFeature(f"'{head}' is outside the supported STRIPS fragment")
    args = []
    for term in node.items[1:]:
        if isinstance(term, SList):
            raise _fail("Nested term in atom", term)
        if not is_variable(term):
            raise _fail(f"Undeclared term '{term}' (constants are not supported)", term)
        if term not in variables:
            raise _fail(f"Unbound variable {term}", term)
        args.append(str(term))
    if head == EQUALITY:
        if len(args) != 2:
            raise ArityMismatch(f"Equality takes two arguments (line {node.line})")
    else:
        schema = predicates.get(head)
        if schema is None:
            raise UnknownPredicate(f"Undeclared predicate '{head}' (line {node.line})")
        if schema.arity != len(args):
            raise ArityMismatch(f"Predicate '{head}' takes {schema.arity} arguments, got {len(args)} (line {node.line})")
    return Literal(str(head), tuple(args), negated)


def _conjunction(node, variables: set[str], predicates: Mapping[str, PredicateSchema]) -> list[Literal]:
    node = _expect_list(node, "formula")
    if not node.items:
        return []
    if node.head == "and":
        out = []
        for part in node.items[1:]:
            part = _expect_list(part, "conjunct")
            if part.head == "and":
                out.extend(_conjunction(part, variables, predicates))
            else:
                out.append(_literal(part, variables, predicates))
        return out
    return [_literal(node, variables, predicates)]


def _action(node: SList, types: set[str], predicates: Mapping[str, PredicateSchema]) -> OperatorDef:
    if len(node) < 2 or isinstance(node.items[1], SList):
        raise _fail("Action without a name", node)
    name = str(node.items[1])
    keys = _keyword_args(node.items[2:], node)
    unknown = set(keys) - {":parameters", ":precondition", ":effect"}
    if unknown:
        raise _fail(f"Unknown action keyword {sorted(unknown)[0]}", node, [":parameters", ":precondition", ":effect"])
    params_node = keys.get(":parameters", SList([], node.line, node.column))
    params = _typed_list(_expect_list(params_node, "parameter list").items, params_node)
    for var, t in params:
        if not is_variable(var):
            raise _fail(f"Parameter '{var}' must start with '?'", node)
        if t != ROOT_TYPE and t not in types:
            raise UnknownObjectType(f"Action '{name}' uses unknown type '{t}'")
    variables = {v for v, _ in params}
    pre = _conjunction(keys.get(":precondition", SList([], 0, 0)), variables, predicates)
    effects = _conjunction(keys.get(":effect", SList([], 0, 0)), variables, predicates)
    for lit in effects:
        if lit.is_equality:
            raise _fail(f"Equality in effect of '{name}'", node)
    try:
        return OperatorDef(name, tuple(params), tuple(pre), tuple(effects))
    except ValueError as exc:
        raise _fail(str(exc), node) from None


# ============================================================================
# Domains
# ============================================================================

def parse_domain(text: str) -> DomainModel:
    root = read_sexpr(text)
    if root.head != "define" or len(root) < 2:
        raise _fail("Expected (define (domain ...) ...)", root, ["define"])
    header = _expect_list(root.items[1], "domain header")
    if header.head != "domain" or len(header) != 2:
        raise _fail("Expected (domain NAME)", header, ["domain"])
    name = str(header.items[1])

    sections: dict[str, SList] = {}
    actions: list[SList] = []
    for item in root.items[2:]:
        item = _expect_list(item, "domain section")
        key = item.head or ""
        if key == ":action":
            actions.append(item)
        elif key in UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(f"'{key}' is outside the supported STRIPS fragment")
        elif key == ":constants":
            raise UnsupportedFeature("':constants' is not supported; declare objects in the problem")
        elif key in (":requirements", ":types", ":predicates"):
            sections[key] = item
        else:
            raise _fail(f"Unknown domain section '{key}'", item, [":requirements", ":types", ":predicates", ":action"])

    if ":requirements" in sections:
        for req in sections[":requirements"].items[1:]:
            if req not in SUPPORTED_REQUIREMENTS:
                raise UnsupportedFeature(f"Requirement {req} is not supported")

    types: list[tuple[str, str]] = []
    if ":types" in sections:
        types = implicit_parents((t, p) for t, p in _typed_list(sections[":types"].items[1:], sections[":types"]) if t != ROOT_TYPE)
    type_names = {t for t, _ in types}

    kinds = {m.group(1).lower(): (m.group(2), m.group(3).strip()) for m in KIND_COMMENT.finditer(text)}
    predicates: dict[str, PredicateSchema] = {}
    if ":predicates" in sections:
        for decl in sections[":predicates"].items[1:]:
            decl = _expect_list(decl, "predicate declaration")
            if decl.head is None:
                raise _fail("Predicate without a name", decl)
            params = _typed_list(decl.items[1:], decl)
            for _, t in params:
                if t != ROOT_TYPE and t not in type_names:
                    raise UnknownObjectType(f"Predicate '{decl.head}' uses unknown type '{t}'")
            kind, description = kinds.get(decl.head, ("state", ""))
            predicates[decl.head] = PredicateSchema(str(decl.head), tuple(params), PredicateKind(kind), description)

    operators = [_action(a, type_names, predicates) for a in actions]
    return DomainModel(name, tuple(types), tuple(predicates.values()), tuple(operators))


def parse_operator(text: str, domain: DomainModel) -> OperatorDef:
    """Parse a standalone `(:action ...)` block against a domain's vocabulary."""
    node = read_sexpr(text)
    if node.head != ":action":
        raise _fail("Expected (:action ...)", node, [":action"])
    types = {t for t, _ in domain.types}
    return _action(node, types, {p.name: p for p in domain.predicates})


def parse_predicate(text: str) -> PredicateSchema:
    """Parse `(name ?a - type ...) ; state: description`; the kind comment is optional."""
    decl_text, _, comment = text.partition(";")
    decl = _expect_list(read_sexpr(decl_text), "predicate declaration")
    if decl.head is None:
        raise _fail("Predicate without a name", decl)
    kind, description = "state", ""
    m = re.match(r"\s*(state|other)\b:?\s*(.*)$", comment.strip(), re.IGNORECASE)
    if m:
        kind, description = m.group(1).lower(), m.group(2).strip()
    return PredicateSchema(str(decl.head), tuple(_typed_list(decl.items[1:], decl)), PredicateKind(kind), description)


def _indent(lines: Iterable[str], depth: int) -> list[str]:
    pad = "  " * depth
    return [pad + line for line in lines]


def format_predicate(schema: PredicateSchema) -> str:
    return str(schema)


def format_operator(op: OperatorDef, depth: int = 0) -> str:
    params = " ".join(f"{v} - {t}" for v, t in op.params)
    lines = [f"(:action {op.name}", f"  :parameters ({params})"]
    for key, literals in ((":precondition", op.precondition), (":effect", op.effects)):
        if not literals:
            lines.append(f"  {key} (and)")
            continue
        lines.append(f"  {key} (and")
        lines.extend(f"    {lit}" for lit in literals)
        lines.append("  )")
    lines.append(")")
    return "\n".join(_indent(lines, depth))


def print_domain(d: DomainModel) -> str:
    lines = [f"(define (domain {d.name})", f"  (:requirements {CANONICAL_REQUIREMENTS})"]
    if d.types:
        lines.append("  (:types")
        by_parent: dict[str, list[str]] = {}
        for t, parent in d.types:
            by_parent.setdefault(parent, []).append(t)
        for parent in sorted(by_parent):
            lines.append(f"    {' '.join(sorted(by_parent[parent]))} - {parent}")
        lines.append("  )")
    lines.append("  (:predicates")
    for p in d.predicates:
        note = f" ; {p.kind.value}" + (f": {p.description}" if p.description else "")
        lines.append(f"    {format_predicate(p)}{note}")
    lines.append("  )")
    for op in d.operators:
        lines.append(format_operator(op, depth=1))
    lines.append(")")
    return "\n".join(lines) + "\n"


# ============================================================================
# Problems
# ============================================================================

def _ground_atom(node, domain: DomainModel, objects: Mapping[str, str]) -> GroundAtom:
    node = _expect_list(node, "ground atom")
    head = node.head
    if head is None:
        raise _fail("Atom without predicate name", node)
    if head in UNSUPPORTED_CONNECTIVES or head == EQUALITY:
        raise UnsupportedFeature(f"'{head}' is not supported in problems")
    schema = domain.predicate(head)
    if schema is None:
        raise UnknownPredicate(f"Undeclared predicate '{head}' (line {node.line})")
    args = []
    for term in node.items[1:]:
        if isinstance(term, SList):
            raise _fail("Nested term in atom", term)
        if term not in objects:
            raise UnknownObject(f"Undeclared object '{term}' (line {term.line})")
        args.append(str(term))
    if len(args) != schema.arity:
        raise ArityMismatch(f"Predicate '{head}' takes {schema.arity} arguments, got {len(args)} (line {node.line})")
    return GroundAtom(str(head), tuple(args))


def parse_ground_atom(text: str, domain: DomainModel, objects: Mapping[str, str]) -> GroundAtom:
    return _ground_atom(read_sexpr(text), domain, objects)


def _ground_conjunction(node, domain: DomainModel, objects: Mapping[str, str]) -> tuple[set[GroundAtom], set[GroundAtom]]:
    node = _expect_list(node, "formula")
    parts = node.items[1:] if node.head == "and" else ([node] if node.items else [])
    pos: set[GroundAtom] = set()
    neg: set[GroundAtom] = set()
    for part in parts:
        part = _expect_list(part, "literal")
        if part.head == "and":
            p, n = _ground_conjunction(part, domain, objects)
            pos |= p
            neg |= n
        elif part.head == "not":
            if len(part) != 2:
                raise _fail("'not' takes exactly one argument", part)
            neg.add(_ground_atom(part.items[1], domain, objects))
        else:
            pos.add(_ground_atom(part, domain, objects))
    return pos, neg


def parse_problem(text: str, d: DomainModel) -> Problem:
    root = read_sexpr(text)
    if root.head != "define" or len(root) < 2:
        raise _fail("Expected (define (problem ...) ...)", root, ["define"])
    header = _expect_list(root.items[1], "problem header")
    if header.head != "problem" or len(header) != 2:
        raise _fail("Expected (problem NAME)", header, ["problem"])
    name = str(header.items[1])
    domain_name = d.name
    objects: list[tuple[str, str]] = []
    init_node = goal_node = None
    for item in root.items[2:]:
        item = _expect_list(item, "problem section")
        key = item.head
        if key == ":domain":
            domain_name = str(item.items[1]) if len(item) > 1 else d.name
        elif key == ":objects":
            objects = _typed_list(item.items[1:], item)
        elif key == ":init":
            init_node = item
        elif key == ":goal":
            goal_node = item
        elif key == ":requirements":
            continue
        else:
            raise UnsupportedFeature(f"Problem section '{key}' is not supported")

    for obj, t in objects:
        if not d.has_type(t):
            raise UnknownObjectType(f"Object '{obj}' has undeclared type '{t}'")
    object_map = dict(objects)

    init: set[GroundAtom] = set()
    if init_node is not None:
        for atom in init_node.items[1:]:
            atom = _expect_list(atom, "initial atom")
            if atom.head == "not":
                log.warning("Dropping negated initial atom at line %d (closed world)", atom.line)
                continue
            init.add(_ground_atom(atom, d, object_map))

    pos: set[GroundAtom] = set()
    neg: set[GroundAtom] = set()
    if goal_node is not None:
        if len(goal_node) != 2:
            raise _fail("Goal takes exactly one formula", goal_node)
        pos, neg = _ground_conjunction(goal_node.items[1], d, object_map)
    if pos & neg:
        raise _fail("Goal requires an atom both true and false", goal_node)
    return Problem(name, domain_name, tuple(objects), frozenset(init), Goal(frozenset(pos), frozenset(neg)))


def print_problem(p: Problem) -> str:
    lines = [f"(define (problem {p.name})", f"  (:domain {p.domain_name})", "  (:objects"]
    by_type: dict[str, list[str]] = {}
    for obj, t in p.objects:
        by_type.setdefault(t, []).append(obj)
    for t in sorted(by_type):
        lines.append(f"    {' '.join(sorted(by_type[t]))} - {t}")
    lines.append("  )")
    lines.append("  (:init")
    lines.extend(f"    {a}" for a in sorted(p.init))
    lines.append("  )")
    goal = [str(a) for a in sorted(p.goal.positive)] + [f"(not {a})" for a in sorted(p.goal.negative)]
    if goal:
        lines.append("  (:goal (and")
        lines.extend(f"    {g}" for g in goal)
        lines.append("  ))")
    else:
        lines.append("  (:goal (and))")
    lines.append(")")
    return "\n".join(lines) + "\n"


# ============================================================================
# Plans
# ============================================================================

def parse_plan(text: str) -> list[Action]:
    """One `(op a b ...)` per line; blank lines and `;` comments are skipped."""
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        node = read_sexpr(line)
        if node.head is None or any(isinstance(t, SList) for t in node.items):
            raise PDDLSyntaxError("Plan lines must be flat (op arg ...) lists", lineno, 1)
        actions.append(Action(str(node.head), tuple(str(t) for t in node.items[1:])))
    return actions


def format_plan(actions: Iterable[Action]) -> str:
    return "".join(f"{a}\n" for a in actions)
