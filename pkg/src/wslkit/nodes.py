"""AST node types for the wide-spectrum language.

Every node is an immutable dataclass; child statements live in tuples so trees
hash and compare structurally.  Paths (tuples of ints) address statement
children only: conditions and expressions are not path-addressable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields, replace
from typing import Iterator, Union

Path = tuple[int, ...]


class Node:
    __slots__ = ()


# --------------------------------------------------------------------------
# expressions


class Expr(Node):
    __slots__ = ()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class StrLit(Expr):
    """Byte-string literal.  Non-printable content round-trips as "hex 0x..."."""

    value: bytes


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class FieldRef(Expr):
    base: Expr
    name: str


@dataclass(frozen=True)
class ListLit(Expr):
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class BinOp(Expr):
    """op is one of + - * ++ (concatenation)."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Len(Expr):
    operand: Expr


@dataclass(frozen=True)
class IndexExpr(Expr):
    base: Expr
    index: Expr


@dataclass(frozen=True)
class SliceExpr(Expr):
    """base[lo .. hi], 1-based and inclusive at both ends."""

    base: Expr
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class MemRef(Expr):
    """a[addr, length]: a byte slice of the machine memory."""

    addr: Expr
    length: Expr


@dataclass(frozen=True)
class MapExpr(Expr):
    """func map list: apply the named function to every element."""

    func: str
    operand: Expr


@dataclass(frozen=True)
class ReduceExpr(Expr):
    """op reduce list: right-fold a non-empty list with a binary op or funct."""

    op: str
    operand: Expr


@dataclass(frozen=True)
class SplitExpr(Expr):
    """split(list, pred): break a list into maximal runs related by pred."""

    operand: Expr
    pred: str


@dataclass(frozen=True)
class CallExpr(Expr):
    """User funct application (also covers the translator helper db)."""

    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class ExternFunc(Expr):
    """!XF name(args): external function supplied by the run-time table."""

    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class IfExpr(Expr):
    cond: "Cond"
    then: Expr
    els: Expr


# --------------------------------------------------------------------------
# conditions


class Cond(Node):
    __slots__ = ()


@dataclass(frozen=True)
class BoolLit(Cond):
    value: bool


@dataclass(frozen=True)
class Compare(Cond):
    """op is one of = <> < <= > >=."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And(Cond):
    left: Cond
    right: Cond


@dataclass(frozen=True)
class Or(Cond):
    left: Cond
    right: Cond


@dataclass(frozen=True)
class Not(Cond):
    operand: Cond


@dataclass(frozen=True)
class CondVar(Cond):
    """A boolean variable used directly as a condition."""

    name: str


@dataclass(frozen=True)
class ExternCond(Cond):
    """!XC name(args): external condition, e.g. end_of_file."""

    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class CondCall(Cond):
    """Application of a user funct whose body is a condition."""

    name: str
    args: tuple[Expr, ...]


# --------------------------------------------------------------------------
# statements


class Stmt(Node):
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Comment(Stmt):
    text: str


@dataclass(frozen=True)
class Assign(Stmt):
    """target := value.  Valid targets: Var, FieldRef, IndexExpr, SliceExpr, MemRef."""

    target: Expr
    value: Expr


@dataclass(frozen=True)
class Sequence(Stmt):
    items: tuple[Stmt, ...]


@dataclass(frozen=True)
class If(Stmt):
    """Two-branch conditional; multi-branch surface forms nest in the else."""

    cond: Cond
    then: Stmt
    els: Stmt


@dataclass(frozen=True)
class Do(Stmt):
    """Unbounded do...od loop, left only by exit statements."""

    body: Stmt


@dataclass(frozen=True)
class While(Stmt):
    cond: Cond
    body: Stmt


@dataclass(frozen=True)
class For(Stmt):
    var: str
    start: Expr
    stop: Expr
    step: Expr
    body: Stmt


@dataclass(frozen=True)
class Exit(Stmt):
    """exit(n): terminate n enclosing do...od loops.  n is a literal.

    n = 0 is a transient form produced inside transformations; it never
    appears in parsed or printed programs.
    """

    count: int


@dataclass(frozen=True)
class VarBlock(Stmt):
    """var x := e, ... : body end -- local variables restored on block exit."""

    inits: tuple[tuple[str, Expr], ...]
    body: Stmt


@dataclass(frozen=True)
class ProcCall(Stmt):
    name: str
    args: tuple[Expr, ...] = ()
    var_args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class ExternCall(Stmt):
    """!P name(args var outs): external procedure from the run-time table."""

    name: str
    args: tuple[Expr, ...] = ()
    var_args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class ActionCall(Stmt):
    """call name -- jump to an action of the enclosing action system."""

    name: str


@dataclass(frozen=True)
class ActionSystem(Stmt):
    """actions start: name == body end ... endactions.

    Calls transfer control and never return; `call z` stops the system.
    """

    start: str
    actions: tuple[tuple[str, Stmt], ...]


# --------------------------------------------------------------------------
# definitions and programs


@dataclass(frozen=True)
class FunctDef:
    name: str
    params: tuple[str, ...]
    body: Union[Expr, Cond]


@dataclass(frozen=True)
class ProcDef:
    name: str
    params: tuple[str, ...]
    var_params: tuple[str, ...]
    body: Stmt


@dataclass(frozen=True)
class AreaField:
    """One named field of a data area: byte offset, byte length, kind.

    kind: "char", "packed", "word", or "pattern" (char data used as an edit
    pattern -- kept distinct only so printers can show intent).
    """

    name: str
    offset: int
    length: int
    kind: str


@dataclass(frozen=True)
class Area:
    """A contiguous data area with an absolute address and optional fields."""

    name: str
    addr: int
    length: int
    kind: str
    fields: tuple[AreaField, ...] = ()


@dataclass(frozen=True)
class LayoutMap:
    """Where every data area and field of a translated program lives."""

    areas: tuple[Area, ...]
    size: int
    bases: tuple[tuple[str, int], ...] = ()  # register name -> seed value
    image: bytes = b""  # assembled initial memory content
    using: tuple[tuple[str, int], ...] = ()  # registers usable as static bases

    def area(self, name: str) -> Area | None:
        for a in self.areas:
            if a.name == name:
                return a
        return None

    def resolve(self, addr: int, length: int) -> tuple[Area, AreaField | None] | None:
        """Find the area (and exact field, if any) covering [addr, addr+length)."""
        for a in self.areas:
            if a.addr <= addr and addr + length <= a.addr + a.length:
                for f in a.fields:
                    if a.addr + f.offset == addr and f.length == length:
                        return a, f
                return a, None
        return None


@dataclass(frozen=True)
class Program:
    body: Stmt
    functs: tuple[FunctDef, ...] = ()
    procs: tuple[ProcDef, ...] = ()
    layout: LayoutMap | None = None
    name: str = "program"
    # free-form justification notes attached by abstraction steps; excluded
    # from structural comparison so fixtures match regardless of history
    notes: tuple[str, ...] = dataclasses.field(default=(), compare=False)

    def proc(self, name: str) -> ProcDef | None:
        for p in self.procs:
            if p.name == name:
                return p
        return None

    def funct(self, name: str) -> FunctDef | None:
        for f in self.functs:
            if f.name == name:
                return f
        return None


LVALUE_TYPES = (Var, FieldRef, IndexExpr, SliceExpr, MemRef)


# --------------------------------------------------------------------------
# sequence normalisation and tree plumbing


def seq(*items: Stmt) -> Stmt:
    """Build a canonical sequence: flattened, skip-free, never nested."""
    flat: list[Stmt] = []
    for it in items:
        if isinstance(it, Sequence):
            flat.extend(it.items)
        elif isinstance(it, Skip):
            continue
        else:
            flat.append(it)
    if not flat:
        return Skip()
    if len(flat) == 1:
        return flat[0]
    return Sequence(tuple(flat))


def children(node: Stmt) -> tuple[Stmt, ...]:
    """Path-addressable statement children, in path-index order."""
    match node:
        case Sequence(items):
            return items
        case If(_, then, els):
            return (then, els)
        case Do(body) | While(_, body) | For(_, _, _, _, body) | VarBlock(_, body):
            return (body,)
        case ActionSystem(_, actions):
            return tuple(body for _, body in actions)
        case _:
            return ()


def with_children(node: Stmt, new: tuple[Stmt, ...]) -> Stmt:
    match node:
        case Sequence():
            return seq(*new)
        case If(cond, _, _):
            return If(cond, new[0], new[1])
        case Do():
            return Do(new[0])
        case While(cond, _):
            return While(cond, new[0])
        case For(var, start, stop, step, _):
            return For(var, start, stop, step, new[0])
        case VarBlock(inits, _):
            return VarBlock(inits, new[0])
        case ActionSystem(start, actions):
            assert len(new) == len(actions)
            return ActionSystem(start, tuple((n, b) for (n, _), b in zip(actions, new)))
        case _:
            raise ValueError(f"{type(node).__name__} has no children")


def node_at(root: Stmt, path: Path) -> Stmt:
    node = root
    for i in path:
        kids = children(node)
        if not 0 <= i < len(kids):
            raise KeyError(f"no child {i} at {type(node).__name__}")
        node = kids[i]
    return node


def replace_at(root: Stmt, path: Path, new: Stmt) -> Stmt:
    """Rebuild root with the node at path replaced.

    Replacing a sequence element with a sequence splices it in place, so the
    canonical no-nested-sequences form is preserved.
    """
    if not path:
        return new
    i, rest = path[0], path[1:]
    kids = list(children(root))
    kids[i] = replace_at(kids[i], rest, new)
    return with_children(root, tuple(kids))


def walk(root: Stmt, path: Path = ()) -> Iterator[tuple[Path, Stmt]]:
    """All (path, node) pairs in preorder."""
    yield path, root
    for i, kid in enumerate(children(root)):
        yield from walk(kid, path + (i,))


def strip_comments(node: Stmt) -> Stmt:
    """Drop Comment nodes: the form used for structural comparison."""
    if isinstance(node, Comment):
        return Skip()
    kids = children(node)
    if not kids:
        return node
    out = tuple(strip_comments(k) for k in kids)
    return with_children(node, out)


def strip_program_comments(program: Program) -> Program:
    return replace(
        program,
        body=strip_comments(program.body),
        procs=tuple(replace(p, body=strip_comments(p.body)) for p in program.procs),
    )


def expr_children(node: Node) -> tuple[Node, ...]:
    """Sub-expressions/conditions of any node (statements included)."""
    out: list[Node] = []
    for f in fields(node):  # type: ignore[arg-type]
        v = getattr(node, f.name)
        if isinstance(v, (Expr, Cond)):
            out.append(v)
        elif isinstance(v, tuple):
            out.extend(x for x in v if isinstance(x, (Expr, Cond)))
    return tuple(out)


def walk_exprs(node: Node) -> Iterator[Node]:
    """Every expression/condition node under `node` (not entering statements)."""
    for kid in expr_children(node):
        yield kid
        yield from walk_exprs(kid)


# --------------------------------------------------------------------------
# well-formedness


def check_statement(
    node: Stmt,
    depth: int = 0,
    action_names: frozenset[str] | None = None,
    where: str = "body",
) -> list[str]:
    """Static checks: exit bounds, action call targets, assignment targets.

    Returns human-readable violation strings; empty means well formed.
    depth counts enclosing do...od loops inside the current exit boundary
    (procedure body, action body, while/for body, var block).
    """
    bad: list[str] = []

    def visit(n: Stmt, d: int, actions: frozenset[str] | None) -> None:
        match n:
            case Exit(count):
                if count < 1:
                    bad.append(f"{where}: exit({count}) has no loop to leave")
                elif count > d:
                    bad.append(f"{where}: exit({count}) escapes its {d} enclosing do-loops")
            case Assign(target, _):
                if not isinstance(target, LVALUE_TYPES):
                    bad.append(f"{where}: assignment to non-lvalue {type(target).__name__}")
            case ActionCall(name):
                # call z is also a proc-level early return, so it is allowed
                # anywhere; other targets need an enclosing action system
                if name != "z":
                    if actions is None:
                        bad.append(f"{where}: call {name} outside any action system")
                    elif name not in actions:
                        bad.append(f"{where}: call {name} targets no action of its system")
            case ActionSystem(start, actions_list):
                names = frozenset(name for name, _ in actions_list)
                if start not in names:
                    bad.append(f"{where}: action system starts at unknown action {start}")
                for _, body in actions_list:
                    # action bodies are their own exit boundary and may only
                    # call their own system's actions (sub-systems shadow).
                    visit(body, 0, names)
                return
            case Do(body):
                visit(body, d + 1, actions)
                return
            case While(_, body) | For(_, _, _, _, body) | VarBlock(_, body):
                visit(body, 0, actions)
                return
        for kid in children(n):
            visit(kid, d, actions)

    visit(node, depth, action_names)
    return bad


def check_program(program: Program) -> list[str]:
    bad = check_statement(program.body, where="main")
    for p in program.procs:
        bad.extend(check_statement(p.body, where=f"proc {p.name}"))
    return bad
