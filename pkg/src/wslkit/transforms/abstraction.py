"""Abstraction steps: from structured code toward a specification.

Two families live here.  The mechanical rules (define_funct, drop_def,
unfold_call, remove_dead_var, substitute_forward, while_to_for,
collapse_to_reduce_map) have full applicability checks and preserve
behaviour by construction.  The note-carrying rules (change_representation,
rewrite_subtree, resolve_branch, replace_by_invariant, add_ghost) encode a
human judgement: each records its justification in the program's notes and
relies on script replay's oracle check to catch a false claim.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterator

from .. import nodes as n
from .. import structure as st
from ..parser import (ParseError, parse_condition, parse_expression,
                      parse_program, parse_statement)
from .base import Ctx, NotApplicable, Target, register, rewrite_target, target_node
from .dataflow import _Geometry, proc_summaries, written_vars
from .simplify import fold_expr_deep, map_condition, map_expression

ASSOCIATIVE_OPS = ("+", "++")


def _parse_path(text: str) -> n.Path:
    text = text.strip()
    if text in ("", "()"):
        return ()
    try:
        return tuple(int(p) for p in text.split("."))
    except ValueError:
        raise NotApplicable(f"bad path {text!r}")


def _parse_stmt(text: str) -> n.Stmt:
    try:
        return parse_statement(text)
    except ParseError as ex:
        raise NotApplicable(f"statement does not parse: {ex}")


def _parse_expr(text: str) -> n.Expr:
    try:
        return parse_expression(text)
    except ParseError as ex:
        raise NotApplicable(f"expression does not parse: {ex}")


def _parse_cond(text: str) -> n.Cond:
    try:
        return parse_condition(text)
    except ParseError as ex:
        raise NotApplicable(f"condition does not parse: {ex}")


def _with_note(program: n.Program, rule: str, note: str) -> n.Program:
    return replace(program, notes=program.notes + (f"{rule}: {note}",))


def _require_note(ctx: Ctx, note: str) -> str:
    ctx.require(bool(note and note.strip()), "a justification note is required")
    return note.strip()


def _scopes(program: n.Program) -> Iterator[tuple[str, n.Stmt]]:
    yield "main", program.body
    for p in program.procs:
        yield f"proc {p.name}", p.body


def _map_lvalue(t: n.Expr, fe: Callable[[n.Expr], n.Expr],
                fc: Callable[[n.Cond], n.Cond]) -> n.Expr:
    """Rewrite the read parts of an assignment target, keeping its root."""
    match t:
        case n.FieldRef(base, name):
            return n.FieldRef(_map_lvalue(base, fe, fc), name)
        case n.IndexExpr(base, index):
            return n.IndexExpr(_map_lvalue(base, fe, fc),
                               map_expression(index, fe, fc))
        case n.SliceExpr(base, lo, hi):
            return n.SliceExpr(_map_lvalue(base, fe, fc),
                               map_expression(lo, fe, fc),
                               map_expression(hi, fe, fc))
        case n.MemRef(addr, length):
            return n.MemRef(map_expression(addr, fe, fc),
                            map_expression(length, fe, fc))
        case _:
            return t


def map_statement_exprs(s: n.Stmt, fe: Callable[[n.Expr], n.Expr],
                        fc: Callable[[n.Cond], n.Cond]) -> n.Stmt:
    """Rebuild a statement with every read-position expression mapped.

    Assignment-target roots are not reads and stay fixed; subscripts and
    slice bounds inside a target are reads and are mapped.
    """
    def go(x: n.Stmt) -> n.Stmt:
        return map_statement_exprs(x, fe, fc)

    def ge(e: n.Expr) -> n.Expr:
        return map_expression(e, fe, fc)

    def gc(c: n.Cond) -> n.Cond:
        return map_condition(c, fe, fc)

    match s:
        case n.Assign(target, value):
            return n.Assign(_map_lvalue(target, fe, fc), ge(value))
        case n.If(cond, then, els):
            return n.If(gc(cond), go(then), go(els))
        case n.While(cond, body):
            return n.While(gc(cond), go(body))
        case n.Do(body):
            return n.Do(go(body))
        case n.For(var, start, stop, step, body):
            return n.For(var, ge(start), ge(stop), ge(step), go(body))
        case n.VarBlock(inits, body):
            return n.VarBlock(tuple((nm, ge(e)) for nm, e in inits), go(body))
        case n.Sequence(items):
            return n.seq(*(go(x) for x in items))
        case n.ProcCall(name, args, var_args):
            return n.ProcCall(name, tuple(ge(a) for a in args),
                              tuple(_map_lvalue(v, fe, fc) for v in var_args))
        case n.ExternCall(name, args, var_args):
            return n.ExternCall(name, tuple(ge(a) for a in args),
                                tuple(_map_lvalue(v, fe, fc) for v in var_args))
        case n.ActionSystem(start, actions):
            return n.ActionSystem(start, tuple((nm, go(b)) for nm, b in actions))
        case _:
            return s


def _read_names(program: n.Program) -> set[str]:
    """Names that occur in a read position anywhere in the program."""
    seen: set[str] = set()

    def fe(e: n.Expr) -> n.Expr:
        if isinstance(e, n.Var):
            seen.add(e.name)
        return e

    def fc(c: n.Cond) -> n.Cond:
        if isinstance(c, n.CondVar):
            seen.add(c.name)
        return c

    for _, body in _scopes(program):
        map_statement_exprs(body, fe, fc)
    for f in program.functs:
        if isinstance(f.body, n.Cond):
            map_condition(f.body, fe, fc)
        else:
            map_expression(f.body, fe, fc)
    return seen


def _call_names(program: n.Program) -> set[str]:
    """Every name used in a call position: procs, functs, map/reduce/split."""
    out: set[str] = set()

    def scan(node: n.Node, include_self: bool = False) -> None:
        nodes = [node] if include_self else []
        nodes.extend(n.walk_exprs(node))
        for e in nodes:
            match e:
                case n.CallExpr(name, _) | n.CondCall(name, _):
                    out.add(name)
                case n.MapExpr(func, _):
                    out.add(func)
                case n.ReduceExpr(op, _):
                    out.add(op)
                case n.SplitExpr(_, pred):
                    out.add(pred)

    for _, body in _scopes(program):
        for _, stmt in n.walk(body):
            if isinstance(stmt, n.ProcCall):
                out.add(stmt.name)
            scan(stmt)
    for f in program.functs:
        scan(f.body, include_self=True)
    return out


def _all_names(program: n.Program) -> set[str]:
    """Every identifier in use: variables, params, defs, action names."""
    names = _read_names(program) | _call_names(program)
    for _, body in _scopes(program):
        for _, stmt in n.walk(body):
            match stmt:
                case n.Assign(target, _):
                    root = _lvalue_root_name(target)
                    if root:
                        names.add(root)
                case n.For(var, _, _, _, _):
                    names.add(var)
                case n.VarBlock(inits, _):
                    names.update(nm for nm, _ in inits)
                case n.ProcCall(_, _, var_args) | n.ExternCall(_, _, var_args):
                    for v in var_args:
                        root = _lvalue_root_name(v)
                        if root:
                            names.add(root)
                case n.ActionSystem(_, actions):
                    names.update(nm for nm, _ in actions)
    for f in program.functs:
        names.add(f.name)
        names.update(f.params)
    for p in program.procs:
        names.add(p.name)
        names.update(p.params)
        names.update(p.var_params)
    return names


def _lvalue_root_name(t: n.Expr) -> str | None:
    while isinstance(t, (n.FieldRef, n.IndexExpr, n.SliceExpr)):
        t = t.base
    return t.name if isinstance(t, n.Var) else None


# --------------------------------------------------------------------------
# note-carrying rules


@register("change_representation", "abstraction", params=("text", "note"))
def change_representation(ctx: Ctx, program: n.Program, target: Target,
                          text: str = "", note: str = "") -> n.Program:
    """Swap the whole program for a restatement in a different data model.

    The classic use is moving from record files and byte areas to lists,
    where every statement changes at once.  The note must say what maps to
    what; replay equivalence is judged through the output shim.
    """
    note = _require_note(ctx, note)
    try:
        new = parse_program(text)
    except ParseError as ex:
        raise NotApplicable(f"replacement program does not parse: {ex}")
    bad = n.check_program(new)
    ctx.require(not bad, f"replacement is ill-formed: {bad[:1]}")
    return replace(new, name=program.name,
                   notes=program.notes + (f"change_representation: {note}",))


@register("rewrite_subtree", "abstraction", params=("text", "note"))
def rewrite_subtree(ctx: Ctx, program: n.Program, target: Target,
                    text: str = "", note: str = "") -> n.Program:
    """Replace the statement at the target with given text, on a stated
    justification."""
    note = _require_note(ctx, note)
    target_node(program, target)
    new = _parse_stmt(text)
    return _with_note(rewrite_target(program, target, new),
                      "rewrite_subtree", note)


@register("resolve_branch", "abstraction", params=("branch", "note"))
def resolve_branch(ctx: Ctx, program: n.Program, target: Target,
                   branch: str = "then", note: str = "") -> n.Program:
    """Replace a conditional by one of its branches, on a stated invariant."""
    note = _require_note(ctx, note)
    node = target_node(program, target)
    if not isinstance(node, n.If):
        raise NotApplicable("target is not a conditional")
    ctx.require(branch in ("then", "else"), f"unknown branch {branch!r}")
    chosen = node.then if branch == "then" else node.els
    return _with_note(rewrite_target(program, target, chosen),
                      "resolve_branch", note)


@register("replace_by_invariant", "abstraction", params=("old", "new", "note"))
def replace_by_invariant(ctx: Ctx, program: n.Program, target: Target,
                         old: str = "", new: str = "",
                         note: str = "") -> n.Program:
    """Rewrite every read of one expression into another, citing an invariant.

    Assignment targets are left alone (their subscripts are rewritten); the
    point is to re-express values, not to redirect stores.  When old and new
    parse as conditions rather than expressions, whole tests are rewritten.
    """
    note = _require_note(ctx, note)
    node = target_node(program, target)
    count = 0
    try:
        old_e = parse_expression(old)
        new_e = parse_expression(new)
    except ParseError:
        old_c = _parse_cond(old)
        new_c = _parse_cond(new)

        def fc(c: n.Cond) -> n.Cond:
            nonlocal count
            if c == old_c:
                count += 1
                return new_c
            return c

        rewritten = map_statement_exprs(node, lambda e: e, fc)
    else:
        def fe(e: n.Expr) -> n.Expr:
            nonlocal count
            if e == old_e:
                count += 1
                return new_e
            return e

        rewritten = map_statement_exprs(node, fe, lambda c: c)
    ctx.require(count > 0, f"{old} does not occur in a read position")
    return _with_note(rewrite_target(program, target, rewritten),
                      "replace_by_invariant", f"{old} = {new}; {note}")


@register("add_ghost", "abstraction", params=("vars", "inserts", "note"))
def add_ghost(ctx: Ctx, program: n.Program, target: Target,
              vars: str = "", inserts: str = "", note: str = "") -> n.Program:
    """Introduce fresh variables maintained alongside the existing state.

    `vars` lists the new names; `inserts` gives one insertion per line,
    `before <path> :: <statements>` or `after <path> :: <statements>`,
    with paths read against the untouched target subtree.  Inserted code
    may only assign the new names, so the old state is untouched; the note
    states the invariant the new variables are meant to track.
    """
    note = _require_note(ctx, note)
    names = {v.strip() for v in vars.split(",") if v.strip()}
    ctx.require(bool(names), "no ghost variables named")
    used = _all_names(program)
    for name in sorted(names):
        ctx.require(name not in used, f"{name} is already in use")

    plan: list[tuple[str, n.Path, n.Stmt]] = []
    for line in inserts.splitlines():
        line = line.strip()
        if not line:
            continue
        head, sep, text = line.partition("::")
        ctx.require(bool(sep), f"insert line needs '::': {line!r}")
        mode, _, path_text = head.strip().partition(" ")
        ctx.require(mode in ("before", "after"), f"bad insert mode {mode!r}")
        stmt = _parse_stmt(text.strip())
        _check_ghost_only(ctx, stmt, names)
        plan.append((mode, _parse_path(path_text), stmt))
    ctx.require(bool(plan), "no insertions given")

    node = target_node(program, target)
    for mode, path, _ in plan:
        try:
            n.node_at(node, path)
        except KeyError:
            raise NotApplicable(f"no node at path {path}")
    for mode, path, stmt in sorted(plan, key=lambda t: t[1], reverse=True):
        at = n.node_at(node, path)
        new = n.seq(stmt, at) if mode == "before" else n.seq(at, stmt)
        node = n.replace_at(node, path, new)
    return _with_note(rewrite_target(program, target, node), "add_ghost",
                      f"{', '.join(sorted(names))}; {note}")


def _check_ghost_only(ctx: Ctx, stmt: n.Stmt, names: set[str]) -> None:
    """Inserted ghost code: assignments to ghost names under if/sequence only."""
    match stmt:
        case n.Assign(target, _):
            root = _lvalue_root_name(target)
            ctx.require(root in names,
                        f"ghost code writes non-ghost {root!r}")
        case n.If(_, then, els):
            _check_ghost_only(ctx, then, names)
            _check_ghost_only(ctx, els, names)
        case n.Sequence(items):
            for item in items:
                _check_ghost_only(ctx, item, names)
        case n.Skip() | n.Comment():
            pass
        case _:
            raise NotApplicable(
                f"{type(stmt).__name__} is not allowed in ghost code")


# --------------------------------------------------------------------------
# mechanical rules


@register("define_funct", "equivalence", params=("name", "funct_params", "text"))
def define_funct(ctx: Ctx, program: n.Program, target: Target,
                 name: str = "", funct_params: str = "",
                 text: str = "") -> n.Program:
    """Add a new function definition.  Nothing calls it yet, so behaviour
    is unchanged; the body must be closed over its parameters."""
    ctx.require(bool(name), "a function name is required")
    ctx.require(program.funct(name) is None and program.proc(name) is None,
                f"{name} is already defined")
    params = tuple(p.strip() for p in funct_params.split(",") if p.strip())
    try:
        body: n.Expr | n.Cond = parse_expression(text)
    except ParseError:
        try:
            body = parse_condition(text)
        except ParseError as ex:
            raise NotApplicable(f"function body does not parse: {ex}")

    free = {e.name for e in (body, *n.walk_exprs(body))
            if isinstance(e, (n.Var, n.CondVar))}
    free -= set(params)
    ctx.require(not free, f"body reads non-parameters: {sorted(free)}")
    return replace(program, functs=program.functs
                   + (n.FunctDef(name, params, body),))


@register("drop_def", "equivalence", params=("name",))
def drop_def(ctx: Ctx, program: n.Program, target: Target,
             name: str = "") -> n.Program:
    """Remove a function or procedure definition that nothing references."""
    is_funct = program.funct(name) is not None
    is_proc = program.proc(name) is not None
    ctx.require(is_funct or is_proc, f"{name} is not defined")
    ctx.require(name not in _call_names(program), f"{name} is still called")
    return replace(
        program,
        functs=tuple(f for f in program.functs if f.name != name),
        procs=tuple(p for p in program.procs if p.name != name),
    )


@register("unfold_call", "equivalence", params=("name",))
def unfold_call(ctx: Ctx, program: n.Program, target: Target,
                name: str = "") -> n.Program:
    """Splice a parameterless procedure's body into its call sites.

    The body must be self-contained: no jumps into a surrounding action
    system, no exits escaping the body.  The definition goes away when no
    call remains.
    """
    proc = program.proc(name)
    if proc is None:
        raise NotApplicable(f"no procedure named {name}")
    ctx.require(not proc.params and not proc.var_params,
                f"{name} takes parameters")
    for _, stmt in n.walk(proc.body):
        if isinstance(stmt, n.ActionCall):
            raise NotApplicable(f"{name} jumps to {stmt.name}")
        if isinstance(stmt, n.ActionSystem):
            raise NotApplicable(f"{name} contains an action system")
    ctx.require(st.analyze(proc.body).root_tau <= 0,
                f"{name} has exits escaping its body")

    count = 0

    def splice(s: n.Stmt) -> n.Stmt:
        nonlocal count
        if isinstance(s, n.ProcCall) and s.name == name:
            count += 1
            return proc.body
        kids = n.children(s)
        if not kids:
            return s
        return n.with_children(s, tuple(splice(k) for k in kids))

    new_body = splice(program.body)
    new_procs = tuple(p if p.name == name else replace(p, body=splice(p.body))
                      for p in program.procs)
    ctx.require(count > 0, f"{name} is never called")
    out = replace(program, body=new_body, procs=new_procs)
    if name not in _call_names(out):
        out = replace(out, procs=tuple(p for p in out.procs if p.name != name))
    ctx.note(f"unfolded {count} call(s) of {name}")
    return out


@register("remove_dead_var", "equivalence", params=("var",))
def remove_dead_var(ctx: Ctx, program: n.Program, target: Target,
                    var: str = "") -> n.Program:
    """Drop every assignment to a variable that is never read.

    The check is global: the name must not appear in any expression, any
    call argument, or any binding position anywhere in the program.
    """
    ctx.require(bool(var), "a variable name is required")
    ctx.require(var not in _read_names(program), f"{var} is read somewhere")
    for _, body in _scopes(program):
        for _, stmt in n.walk(body):
            match stmt:
                case n.ProcCall(_, _, var_args) | n.ExternCall(_, _, var_args):
                    if any(_lvalue_root_name(v) == var for v in var_args):
                        raise NotApplicable(f"{var} is passed by reference")
                case n.For(v, _, _, _, _) if v == var:
                    raise NotApplicable(f"{var} is a loop counter")
                case n.VarBlock(inits, _) if any(nm == var for nm, _ in inits):
                    raise NotApplicable(f"{var} is a local block variable")
    for p in program.procs:
        if var in p.params or var in p.var_params:
            raise NotApplicable(f"{var} is a parameter of {p.name}")

    count = 0

    def drop(s: n.Stmt) -> n.Stmt:
        nonlocal count
        if isinstance(s, n.Assign) and _lvalue_root_name(s.target) == var:
            count += 1
            return n.Skip()
        kids = n.children(s)
        if not kids:
            return s
        return n.with_children(s, tuple(drop(k) for k in kids))

    new_body = drop(program.body)
    new_procs = tuple(replace(p, body=drop(p.body)) for p in program.procs)
    ctx.require(count > 0, f"{var} is never assigned; nothing to remove")
    ctx.note(f"removed {count} assignment(s) to {var}")
    return replace(program, body=new_body, procs=new_procs)


@register("substitute_forward", "equivalence")
def substitute_forward(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Fuse x := E1; x := E2 into x := E2[E1/x].

    Expressions have no side effects, so the intermediate value of x is
    observable only through E2; substituting it away is exact.  The next
    assignment may also target a different plain variable, provided that
    is the only place x is ever used: then x := E1 disappears entirely.
    """
    scope = target_node(program, Target(target.scope, target.path[:-1]))
    if not isinstance(scope, n.Sequence):
        raise NotApplicable("target is not inside a sequence")
    i = target.path[-1] if target.path else 0
    ctx.require(i + 1 < len(scope.items), "nothing follows the target")
    first, second = scope.items[i], scope.items[i + 1]
    if not (isinstance(first, n.Assign) and isinstance(first.target, n.Var)):
        raise NotApplicable("target is not a plain variable assignment")
    if not (isinstance(second, n.Assign) and isinstance(second.target, n.Var)):
        raise NotApplicable("next statement is not a plain variable assignment")
    x, e1 = first.target, first.value

    hits = 0

    def fe(e: n.Expr) -> n.Expr:
        nonlocal hits
        if e == x:
            hits += 1
            return e1
        return e

    value = map_expression(second.value, fe, lambda c: c)
    if second.target != x:
        ctx.require(hits > 0, "next assignment does not read the target")
        everywhere = sum(_count_uses(body, x.name)
                         for _, body in _scopes(program))
        ctx.require(everywhere == hits + 1,
                    f"{x.name} is used beyond this assignment pair")
        ctx.note(f"{x.name} feeds only the next assignment")
    fused = n.Assign(second.target, value)
    items = scope.items[:i] + (fused,) + scope.items[i + 2:]
    return rewrite_target(program, Target(target.scope, target.path[:-1]),
                          n.seq(*items))


def _stmt_reads(s: n.Stmt) -> set[str]:
    """Names read by a statement (subscripts included, store roots not)."""
    seen: set[str] = set()

    def fe(e: n.Expr) -> n.Expr:
        if isinstance(e, n.Var):
            seen.add(e.name)
        return e

    def fc(c: n.Cond) -> n.Cond:
        if isinstance(c, n.CondVar):
            seen.add(c.name)
        return c

    map_statement_exprs(s, fe, fc)
    return seen


@register("swap_adjacent", "equivalence")
def swap_adjacent(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Exchange the target assignment with the statement after it.

    Both statements must be plain assignments (or skips) over disjoint
    state: neither reads or writes anything the other writes.  Memory
    references are rejected since their footprint is address-dependent.
    """
    scope = target_node(program, Target(target.scope, target.path[:-1]))
    if not isinstance(scope, n.Sequence):
        raise NotApplicable("target is not inside a sequence")
    i = target.path[-1] if target.path else 0
    ctx.require(i + 1 < len(scope.items), "nothing follows the target")
    first, second = scope.items[i], scope.items[i + 1]

    def footprint(s: n.Stmt) -> tuple[set[str], set[str]]:
        match s:
            case n.Assign(t, _):
                root = _lvalue_root_name(t)
                if root is None:
                    raise NotApplicable("assignment stores through memory")
                return _stmt_reads(s), {root}
            case n.Skip() | n.Comment():
                return set(), set()
            case _:
                raise NotApplicable(
                    f"{type(s).__name__} cannot be reordered")

    for s in (first, second):
        for e in n.walk_exprs(s):
            if isinstance(e, (n.MemRef, n.ExternFunc)):
                raise NotApplicable("statement touches machine state")
    r1, w1 = footprint(first)
    r2, w2 = footprint(second)
    ctx.require(not (w1 & (r2 | w2)) and not (w2 & r1),
                "the two statements touch disjoint state")
    items = scope.items[:i] + (second, first) + scope.items[i + 2:]
    return rewrite_target(program, Target(target.scope, target.path[:-1]),
                          n.seq(*items))


@register("while_to_for", "equivalence")
def while_to_for(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Turn x := a; while x < b do S; x := x + 1 od into a for loop.

    Needs a clean counter: S does not write x or anything b reads, and x
    is not used outside the pair (the for counter is local to the loop).
    """
    node = target_node(program, target)
    if not isinstance(node, n.While):
        raise NotApplicable("target is not a while loop")
    scope = target_node(program, Target(target.scope, target.path[:-1]))
    i = target.path[-1] if target.path else -1
    if not isinstance(scope, n.Sequence) or i < 1:
        raise NotApplicable("no initialising assignment before the loop")
    init = scope.items[i - 1]
    if not (isinstance(init, n.Assign) and isinstance(init.target, n.Var)):
        raise NotApplicable("loop is not preceded by a counter assignment")
    x = init.target.name

    match node.cond:
        case n.Compare("<", n.Var(name), bound) if name == x:
            stop = fold_expr_deep(n.BinOp("-", bound, n.IntLit(1)))
        case n.Compare("<=", n.Var(name), bound) if name == x:
            stop = bound
        case _:
            raise NotApplicable("loop test is not counter < bound")

    body_items = node.body.items if isinstance(node.body, n.Sequence) \
        else (node.body,)
    last = body_items[-1]
    if last != n.Assign(n.Var(x), n.BinOp("+", n.Var(x), n.IntLit(1))):
        raise NotApplicable("loop body does not end with counter + 1")
    inner = n.seq(*body_items[:-1])

    geo = _Geometry(program)
    summaries = proc_summaries(program)
    written = written_vars(inner, summaries, geo)
    ctx.require(x not in written, f"loop body writes the counter {x}")
    bound_reads = {e.name for e in (bound, *n.walk_exprs(bound))
                   if isinstance(e, n.Var)}
    ctx.require(not bound_reads & written,
                "loop body changes the bound's value")

    in_program = sum(_count_uses(body, x) for _, body in _scopes(program))
    in_pair = _count_uses(init, x) + _count_uses(node, x)
    ctx.require(in_program == in_pair, f"{x} is used outside the loop pair")

    loop = n.For(x, init.value, stop, n.IntLit(1), inner)
    items = scope.items[:i - 1] + (loop,) + scope.items[i + 1:]
    return rewrite_target(program, Target(target.scope, target.path[:-1]),
                          n.seq(*items))


def _count_uses(stmt: n.Stmt, x: str) -> int:
    """Occurrences of x in stmt: reads and writes alike."""
    hits = 0

    def fe(e: n.Expr) -> n.Expr:
        nonlocal hits
        if isinstance(e, n.Var) and e.name == x:
            hits += 1
        return e

    def fc(c: n.Cond) -> n.Cond:
        nonlocal hits
        if isinstance(c, n.CondVar) and c.name == x:
            hits += 1
        return c

    map_statement_exprs(stmt, fe, fc)
    for _, s in n.walk(stmt):
        match s:
            case n.Assign(target, _) if _lvalue_root_name(target) == x:
                hits += 1
            case n.For(v, _, _, _, _) if v == x:
                hits += 1
            case n.ProcCall(_, _, var_args) | n.ExternCall(_, _, var_args):
                hits += sum(_lvalue_root_name(v) == x for v in var_args)
    return hits


@register("collapse_to_reduce_map", "equivalence")
def collapse_to_reduce_map(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Collapse an accumulating for loop into reduce/map expressions.

    Two body shapes are recognised over `for k := 1 to B step 1`:

        acc := acc op f(L[k])      needs a preceding acc := e0; becomes
                                   acc := op reduce (<e0> ++ f map L')
        acc := acc ++ <f(L[k])>    becomes acc := acc ++ (f map L')

    where L' is L when B is len(L) and L[1 .. B] otherwise.  op must be
    associative (+ or ++) since the loop folds left and reduce folds right.
    """
    node = target_node(program, target)
    match node:
        case n.For(k, n.IntLit(1), stop, n.IntLit(1), n.Assign(n.Var(acc), rhs)):
            pass
        case _:
            raise NotApplicable("target is not `for k := 1 to B step 1 do "
                                "acc := ... od`")

    match rhs:
        case n.BinOp("++", n.Var(a), n.ListLit((item,))) if a == acc:
            mode, op = "map", "++"
        case n.BinOp(op, n.Var(a), item) if a == acc and op in ASSOCIATIVE_OPS:
            mode = "reduce"
        case _:
            raise NotApplicable("loop body is not an accumulation")

    match item:
        case n.CallExpr(f, (n.IndexExpr(lst, n.Var(kk)),)) if kk == k:
            pass
        case _:
            raise NotApplicable("accumulated value is not f(L[k])")
    ctx.require(program.funct(f) is not None, f"{f} is not a defined function")

    for bad in (acc, k):
        names = {e.name for e in (lst, stop, *n.walk_exprs(lst),
                                  *n.walk_exprs(stop))
                 if isinstance(e, n.Var)}
        ctx.require(bad not in names, f"list or bound depends on {bad}")

    source = lst if stop == n.Len(lst) else n.SliceExpr(lst, n.IntLit(1), stop)
    mapped = n.MapExpr(f, source)

    if mode == "map":
        new = n.Assign(n.Var(acc), n.BinOp("++", n.Var(acc), mapped))
        return rewrite_target(program, target, new)

    scope = target_node(program, Target(target.scope, target.path[:-1]))
    i = target.path[-1] if target.path else -1
    if not isinstance(scope, n.Sequence) or i < 1:
        raise NotApplicable("no seed assignment before the loop")
    seed = scope.items[i - 1]
    if not (isinstance(seed, n.Assign) and seed.target == n.Var(acc)):
        raise NotApplicable("loop is not preceded by acc := e0")
    folded = n.Assign(n.Var(acc), n.ReduceExpr(
        op, n.BinOp("++", n.ListLit((seed.value,)), mapped)))
    items = scope.items[:i - 1] + (folded,) + scope.items[i + 1:]
    return rewrite_target(program, Target(target.scope, target.path[:-1]),
                          n.seq(*items))
