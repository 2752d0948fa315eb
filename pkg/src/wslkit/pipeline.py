"""Automatic migration pipeline.

Takes a freshly translated program (flat action system, machine-level
addressing) through two stages:

* `data_translate` replaces base/displacement address arithmetic with
  references to the named data areas recovered by the front end.
* `restructure_fixpoint` folds constants, rolls the action system into
  loops, extracts procedures and drops dead stores until the program
  stops changing.

`compute_metrics` sizes a program before and after, and `migrate` ties
the stages together for the command line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import replace
from pathlib import Path as FsPath

from . import nodes as n
from .pretty import render_program
from .transforms.base import NotApplicable, Target
from .transforms.actions import (
    extract_procedures,
    introduce_loops,
    splice_actions,
    unwrap_action_system,
)
from .transforms.abstraction import unfold_call
from .transforms.dataflow import constant_propagate, remove_dead_assignments
from .transforms.simplify import fold_expression, map_expression


# --------------------------------------------------------------------------
# stage one: named data access


def _contains_db(program: n.Program) -> bool:
    found = False

    def fe(e: n.Expr) -> n.Expr:
        nonlocal found
        if isinstance(e, n.CallExpr) and e.name == "db":
            found = True
        return e

    for body in _scope_bodies(program):
        _map_stmt_all(body, fe)
    return found


def _scope_bodies(program: n.Program):
    yield program.body
    for p in program.procs:
        yield p.body


def _map_stmt_all(s: n.Stmt, fe) -> n.Stmt:
    """Rebuild a statement applying fe to every expression, targets too."""
    def go(x: n.Stmt) -> n.Stmt:
        return _map_stmt_all(x, fe)

    def ge(e: n.Expr) -> n.Expr:
        return map_expression(e, fe, None)

    def gc(c: n.Cond) -> n.Cond:
        from .transforms.simplify import map_condition
        return map_condition(c, fe, None)

    match s:
        case n.Assign(target, value):
            return n.Assign(ge(target), ge(value))
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
                              tuple(ge(v) for v in var_args))
        case n.ExternCall(name, args, var_args):
            return n.ExternCall(name, tuple(ge(a) for a in args),
                                tuple(ge(v) for v in var_args))
        case n.ActionSystem(start, actions):
            return n.ActionSystem(start, tuple((nm, go(b)) for nm, b in actions))
        case _:
            return s


class _Resolver:
    """Rewrites db(displacement, base) against the recovered layout."""

    def __init__(self, layout: n.LayoutMap):
        self.layout = layout
        self.using = dict(layout.using)
        self.names: dict[str, int] = {}
        for a in layout.areas:
            self.names[a.name] = a.addr
            for f in a.fields:
                self.names[f.name] = a.addr + f.offset
        self.residuals: list[str] = []

    def _area_at(self, ai: int) -> n.Area | None:
        for a in self.layout.areas:
            if a.addr <= ai < a.addr + a.length:
                return a
        return None

    def _static(self, e: n.Expr, *, base: bool = False) -> int | None:
        """Address contribution of one db operand, when it is fixed."""
        match e:
            case n.IntLit(v):
                return v
            case n.Var(name) if name in self.names:
                return self.names[name]
            case n.Var(name) if base and name in self.using:
                return self.using[name]
            case n.ExternFunc("address_of", (n.Var(name),)) if name in self.names:
                return self.names[name]
            case n.BinOp("+" | "-" as op, left, right):
                lv = self._static(left, base=base)
                rv = self._static(right, base=base)
                if lv is None or rv is None:
                    return None
                return lv + rv if op == "+" else lv - rv
        return None

    def db_addr(self, e: n.Expr) -> int | None:
        """Absolute address of an address expression, or None when dynamic."""
        match e:
            case n.CallExpr("db", (disp, base)):
                dv = self._static(disp)
                bv = self._static(base, base=True)
                if dv is None or bv is None:
                    return None
                return dv + bv
        return self._static(e)

    def addr_value(self, ai: int) -> n.Expr:
        """An address used as a value, spelled through the area it names."""
        area = self._area_at(ai)
        if area is None:
            return n.IntLit(ai)
        base = n.ExternFunc("address_of", (n.Var(area.name),))
        if ai == area.addr:
            return base
        return n.BinOp("+", base, n.IntLit(ai - area.addr))

    def value(self, e: n.CallExpr) -> n.Expr:
        """Rewrite a db expression appearing as a plain value."""
        ai = self.db_addr(e)
        if ai is not None:
            return self.addr_value(ai)
        disp, base = e.args
        parts: list[n.Expr] = []
        for op, is_base in ((disp, False), (base, True)):
            sv = self._static(op, base=is_base)
            if sv is not None:
                parts.append(n.IntLit(sv))
            elif isinstance(op, n.Var):
                parts.append(op)
            else:
                self.residuals.append(f"dynamic address part {op!r}")
                return e
        out = parts[0]
        for p in parts[1:]:
            out = n.BinOp("+", out, p)
        return fold_expression(out)

    def ref(self, addr: n.Expr, length: n.Expr, *, write: bool) -> n.Expr:
        """Rewrite one memory reference to the most specific named form."""
        length = fold_expression(length)
        ai = self.db_addr(addr)
        if ai is None:
            if isinstance(addr, n.CallExpr) and addr.name == "db":
                addr = self.value(addr)
            return n.MemRef(addr, length)
        if not isinstance(length, n.IntLit):
            # known place, runtime-sized span: keep the raw reference but
            # anchor the address to the area name
            return n.MemRef(self.addr_value(ai), length)
        lv = length.value
        hit = self.layout.resolve(ai, lv)
        if hit is not None:
            area, field = hit
            if field is not None:
                return n.FieldRef(n.Var(area.name), field.name)
            if ai == area.addr and lv == area.length:
                return n.Var(area.name)
        area = self._area_at(ai)
        if area is None:
            return n.MemRef(n.IntLit(ai), length)
        k = ai - area.addr
        if area.kind != "word" and not (write and k + lv > area.length):
            # slices of memory-backed variables read raw storage, so a
            # read may run past the end of the area exactly as it did in
            # base/displacement form
            return n.SliceExpr(n.Var(area.name), n.IntLit(k + 1), n.IntLit(k + lv))
        return n.MemRef(n.IntLit(ai), length)


def _translate_stmt(s: n.Stmt, rz: _Resolver) -> n.Stmt:
    def go(x: n.Stmt) -> n.Stmt:
        return _translate_stmt(x, rz)

    def fe(e: n.Expr) -> n.Expr:
        match e:
            case n.MemRef(addr, length):
                return rz.ref(addr, length, write=False)
            case n.CallExpr("db", _):
                return rz.value(e)
        return e

    def ge(e: n.Expr) -> n.Expr:
        return map_expression(e, fe, None)

    def gc(c: n.Cond) -> n.Cond:
        from .transforms.simplify import map_condition
        return map_condition(c, fe, None)

    def gt(t: n.Expr) -> n.Expr:
        """A write target: same resolution, overruns stay raw."""
        match t:
            case n.MemRef(addr, length):
                return rz.ref(ge(addr), ge(length), write=True)
        return ge(t)

    match s:
        case n.Assign(target, value):
            return n.Assign(gt(target), ge(value))
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
                              tuple(gt(v) for v in var_args))
        case n.ExternCall("mvc", (src,), (dst,)):
            return n.Assign(gt(dst), ge(src))
        case n.ExternCall(name, args, var_args):
            return n.ExternCall(name, tuple(ge(a) for a in args),
                                tuple(gt(v) for v in var_args))
        case n.ActionSystem(start, actions):
            return n.ActionSystem(start, tuple((nm, go(b)) for nm, b in actions))
        case _:
            return s


def data_translate(program: n.Program) -> n.Program:
    """Replace base/displacement addressing with named data references.

    Only addresses formed over the translation unit's declared base
    registers resolve; anything else (runtime pointers, loop cursors)
    keeps its raw memory form.  A byte move between resolved references
    becomes a plain assignment.
    """
    if program.layout is None:
        raise ValueError("program carries no data layout")
    rz = _Resolver(program.layout)
    body = _translate_stmt(program.body, rz)
    procs = tuple(replace(p, body=_translate_stmt(p.body, rz))
                  for p in program.procs)
    out = replace(program, body=body, procs=procs)
    left = _count_db(out)
    note = (f"data_translate: {left} address expressions kept raw"
            if left else "data_translate: all addresses resolved")
    notes = out.notes + (note,) + tuple(
        f"data_translate: {r}" for r in rz.residuals)
    return replace(out, notes=notes)


def _count_db(program: n.Program) -> int:
    count = 0

    def fe(e: n.Expr) -> n.Expr:
        nonlocal count
        if isinstance(e, n.CallExpr) and e.name == "db":
            count += 1
        return e

    for body in _scope_bodies(program):
        _map_stmt_all(body, fe)
    return count


# --------------------------------------------------------------------------
# stage two: restructuring


_MAIN = Target("main", ())
_STRUCTURE_RULES = (splice_actions, introduce_loops, extract_procedures,
                    unwrap_action_system)


def _scope_targets(program: n.Program) -> list[Target]:
    out = [_MAIN]
    out.extend(Target(f"proc {p.name}", ()) for p in program.procs)
    return out


def restructure_fixpoint(program: n.Program,
                         max_rounds: int = 64) -> n.Program:
    """Drive the cleanup rules until the program stops changing.

    Each round folds constants, then lets the action-system rules fire
    wherever they apply, then sweeps dead stores.  A round may grow the
    program (extracting a procedure adds a call at every site) but the
    fixpoint is far smaller than the input.  Idempotent: a second call
    returns its input.
    """
    if _contains_db(program):
        raise ValueError("unresolved address arithmetic; run data_translate first")
    current = program
    for _ in range(max_rounds):
        nxt = _one_round(current)
        if nxt == current:
            break
        current = nxt
    return current


def _call_counts(program: n.Program) -> dict[str, int]:
    counts: dict[str, int] = {}
    for body in [program.body] + [p.body for p in program.procs]:
        for _, s in n.walk(body):
            if isinstance(s, n.ProcCall):
                counts[s.name] = counts.get(s.name, 0) + 1
    return counts


def _unfold_lone_procs(program: n.Program) -> n.Program:
    """Inline parameterless procedures left with a single call site."""
    current = program
    for p in program.procs:
        if _call_counts(current).get(p.name) != 1:
            continue
        try:
            current = unfold_call.apply(current, _MAIN, name=p.name)
        except NotApplicable:
            continue
    return current


def _one_round(program: n.Program) -> n.Program:
    current = constant_propagate.apply(program, _MAIN)
    for target in _scope_targets(current):
        for rule in _STRUCTURE_RULES:
            try:
                current = rule.apply(current, target)
            except NotApplicable:
                continue
    current = _unfold_lone_procs(current)
    return remove_dead_assignments.apply(current, _MAIN)


# --------------------------------------------------------------------------
# metrics


@dataclasses.dataclass(frozen=True)
class Metrics:
    """Six size measures; `docs/metrics.md` defines each one."""

    statements: int
    expressions: int
    mccabe: int
    control_data_flow: int
    branch_loop: int
    structural: int

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)


_SKIP_STMTS = (n.Sequence, n.Skip, n.Comment, n.ActionSystem)


class _Meter:
    def __init__(self) -> None:
        self.statements = 0
        self.expressions = 0
        self.decisions = 0
        self.loops = 0
        self.calls = 0
        self.exits = 0
        self.reads = 0
        self.writes = 0

    def expr(self, e: n.Expr | None) -> None:
        if e is None:
            return
        count = 0

        def fe(x: n.Expr) -> n.Expr:
            nonlocal count
            count += 1
            if isinstance(x, (n.Var, n.FieldRef, n.MemRef, n.IndexExpr,
                              n.SliceExpr)):
                self.reads += 1
            return x

        map_expression(e, fe, self.cond_inner)
        self.expressions += count

    def cond_inner(self, c: n.Cond) -> n.Cond:
        self.expressions += 1
        return c

    def cond(self, c: n.Cond) -> None:
        from .transforms.simplify import map_condition

        def fe(x: n.Expr) -> n.Expr:
            self.expressions += 1
            if isinstance(x, (n.Var, n.FieldRef, n.MemRef, n.IndexExpr,
                              n.SliceExpr)):
                self.reads += 1
            return x

        map_condition(c, fe, self.cond_inner)

    def stmt(self, s: n.Stmt) -> None:
        if not isinstance(s, _SKIP_STMTS):
            self.statements += 1
        match s:
            case n.Assign(target, value):
                self.writes += 1
                self.expr(target)
                self.expr(value)
            case n.If(cond, then, els):
                self.decisions += 1
                self.cond(cond)
                self.stmt(then)
                self.stmt(els)
            case n.While(cond, body):
                self.loops += 1
                self.cond(cond)
                self.stmt(body)
            case n.Do(body):
                self.loops += 1
                self.stmt(body)
            case n.For(_, start, stop, step, body):
                self.loops += 1
                self.expr(start)
                self.expr(stop)
                self.expr(step)
                self.stmt(body)
            case n.VarBlock(inits, body):
                for _, e in inits:
                    self.writes += 1
                    self.expr(e)
                self.stmt(body)
            case n.Sequence(items):
                for x in items:
                    self.stmt(x)
            case n.ProcCall(_, args, var_args) | n.ExternCall(_, args, var_args):
                self.calls += 1
                for a in args:
                    self.expr(a)
                for v in var_args:
                    self.writes += 1
                    self.expr(v)
            case n.ActionCall(_):
                self.calls += 1
            case n.Exit(_):
                self.exits += 1
            case n.ActionSystem(_, actions):
                for _, body in actions:
                    self.stmt(body)


def compute_metrics(program: n.Program) -> Metrics:
    """Measure a program; see `docs/metrics.md` for the definitions."""
    m = _Meter()
    scopes = 1 + len(program.procs)
    m.stmt(program.body)
    for p in program.procs:
        m.stmt(p.body)
    for f in program.functs:
        scopes += 1
        if isinstance(f.body, n.Cond):
            m.cond(f.body)
        else:
            m.expr(f.body)
    mccabe = scopes + m.decisions + m.loops + _action_call_count(program)
    control_data_flow = (2 * (m.decisions + m.loops) + m.calls + m.exits
                         + m.writes)
    branch_loop = m.decisions + m.loops + m.exits
    structural = 5 * m.statements + m.expressions + m.reads + m.writes
    return Metrics(
        statements=m.statements,
        expressions=m.expressions,
        mccabe=mccabe,
        control_data_flow=control_data_flow,
        branch_loop=branch_loop,
        structural=structural,
    )


def _action_call_count(program: n.Program) -> int:
    count = 0
    for body in _scope_bodies(program):
        for _, node in n.walk(body):
            if isinstance(node, n.ActionCall):
                count += 1
    return count


def metrics_ratios(before: Metrics, after: Metrics) -> dict[str, float]:
    out = {}
    for key, b in before.as_dict().items():
        a = after.as_dict()[key]
        out[key] = a / b if b else 0.0
    return out


# --------------------------------------------------------------------------
# one-call migration


@dataclasses.dataclass(frozen=True)
class MigrationResult:
    raw: n.Program
    structured: n.Program
    raw_metrics: Metrics
    structured_metrics: Metrics

    def report(self) -> str:
        lines = [f"{'measure':<20}{'raw':>8}{'structured':>12}{'ratio':>8}"]
        ratios = metrics_ratios(self.raw_metrics, self.structured_metrics)
        for key, b in self.raw_metrics.as_dict().items():
            a = self.structured_metrics.as_dict()[key]
            lines.append(f"{key:<20}{b:>8}{a:>12}{ratios[key]:>8.3f}")
        return "\n".join(lines) + "\n"


def migrate(program: n.Program) -> MigrationResult:
    """Run the full pipeline on a freshly translated program."""
    named = data_translate(program)
    structured = restructure_fixpoint(named)
    return MigrationResult(
        raw=program,
        structured=structured,
        raw_metrics=compute_metrics(program),
        structured_metrics=compute_metrics(structured),
    )


def write_migration(result: MigrationResult, out_dir: str | FsPath) -> list[FsPath]:
    """Write raw.wsl, structured.wsl and metrics.txt under out_dir."""
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [
        (out / "raw.wsl", render_program(result.raw)),
        (out / "structured.wsl", render_program(result.structured)),
        (out / "metrics.txt", result.report()),
    ]
    for path, text in files:
        path.write_text(text)
    return [p for p, _ in files]
