"""Guard normalisation and structural cleanup.

`simplify_statement` is the normalisation pass most other rules finish
with.  It applies a fixed rewrite table: constant-condition folding,
dead code after an exit or an action call, equal-branch collapse,
negated-guard swaps and the off-by-one comparison rewrites
(`a < b + 1` to `a <= b`).  Each rewrite is an equivalence, so the pass
as a whole is one.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

from .. import nodes as n
from .. import structure as st
from .base import Ctx, Target, register, rewrite_target, target_node

_FLIP = {"=": "<>", "<>": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def negate(c: n.Cond) -> n.Cond:
    match c:
        case n.Not(inner):
            return inner
        case n.BoolLit(v):
            return n.BoolLit(not v)
        case n.Compare(op, left, right):
            return n.Compare(_FLIP[op], left, right)
        case n.And(left, right):
            return n.Or(negate(left), negate(right))
        case n.Or(left, right):
            return n.And(negate(left), negate(right))
        case _:
            return n.Not(c)


def map_expression(e: n.Expr, f: Callable[[n.Expr], n.Expr],
                   fc: Callable[[n.Cond], n.Cond] | None = None) -> n.Expr:
    """Rebuild an expression bottom-up, applying f at every node."""
    def go(x: n.Expr) -> n.Expr:
        return map_expression(x, f, fc)

    match e:
        case n.FieldRef(base, name):
            e = n.FieldRef(go(base), name)
        case n.ListLit(items):
            e = n.ListLit(tuple(go(x) for x in items))
        case n.BinOp(op, left, right):
            e = n.BinOp(op, go(left), go(right))
        case n.Neg(x):
            e = n.Neg(go(x))
        case n.Len(x):
            e = n.Len(go(x))
        case n.IndexExpr(base, index):
            e = n.IndexExpr(go(base), go(index))
        case n.SliceExpr(base, lo, hi):
            e = n.SliceExpr(go(base), go(lo), go(hi))
        case n.MemRef(addr, length):
            e = n.MemRef(go(addr), go(length))
        case n.MapExpr(func, operand):
            e = n.MapExpr(func, go(operand))
        case n.ReduceExpr(op, operand):
            e = n.ReduceExpr(op, go(operand))
        case n.SplitExpr(operand, pred):
            e = n.SplitExpr(go(operand), pred)
        case n.CallExpr(name, args):
            e = n.CallExpr(name, tuple(go(x) for x in args))
        case n.ExternFunc(name, args):
            e = n.ExternFunc(name, tuple(go(x) for x in args))
        case n.IfExpr(cond, then, els):
            inner = map_condition(cond, f, fc) if fc is not None else cond
            e = n.IfExpr(inner, go(then), go(els))
    return f(e)


def map_condition(c: n.Cond, f: Callable[[n.Expr], n.Expr],
                  fc: Callable[[n.Cond], n.Cond] | None = None) -> n.Cond:
    def goe(x: n.Expr) -> n.Expr:
        return map_expression(x, f, fc)

    def goc(x: n.Cond) -> n.Cond:
        return map_condition(x, f, fc)

    match c:
        case n.Compare(op, left, right):
            c = n.Compare(op, goe(left), goe(right))
        case n.And(left, right):
            c = n.And(goc(left), goc(right))
        case n.Or(left, right):
            c = n.Or(goc(left), goc(right))
        case n.Not(inner):
            c = n.Not(goc(inner))
        case n.ExternCond(name, args):
            c = n.ExternCond(name, tuple(goe(x) for x in args))
        case n.CondCall(name, args):
            c = n.CondCall(name, tuple(goe(x) for x in args))
    return fc(c) if fc is not None else c


def fold_expression(e: n.Expr) -> n.Expr:
    """Constant-fold one expression node (children already folded)."""
    match e:
        case n.BinOp("+", n.IntLit(a), n.IntLit(b)):
            return n.IntLit(a + b)
        case n.BinOp("-", n.IntLit(a), n.IntLit(b)):
            return n.IntLit(a - b)
        case n.BinOp("*", n.IntLit(a), n.IntLit(b)):
            return n.IntLit(a * b)
        case n.BinOp("++", n.ListLit(a), n.ListLit(b)):
            return n.ListLit(a + b)
        case n.BinOp("++", n.StrLit(a), n.StrLit(b)):
            return n.StrLit(a + b)
        case n.BinOp("+", x, n.IntLit(0)) | n.BinOp("-", x, n.IntLit(0)):
            return x
        case n.BinOp("+", n.IntLit(0), x):
            return x
        case n.BinOp("+", n.BinOp("+", x, n.IntLit(a)), n.IntLit(b)):
            return fold_expression(n.BinOp("+", x, n.IntLit(a + b)))
        case n.BinOp("-", n.BinOp("+", x, n.IntLit(a)), n.IntLit(b)):
            return fold_expression(n.BinOp("+", x, n.IntLit(a - b)))
        case n.Neg(n.IntLit(v)):
            return n.IntLit(-v)
        case n.Len(n.ListLit(items)):
            return n.IntLit(len(items))
        case n.Len(n.StrLit(data)):
            return n.IntLit(len(data))
        case n.IndexExpr(n.ListLit(items), n.IntLit(i)) if 1 <= i <= len(items):
            return items[i - 1]
        case n.CallExpr("db", (n.IntLit(disp), n.IntLit(base))):
            return n.IntLit(base + disp)
        case n.IfExpr(n.BoolLit(v), then, els):
            return then if v else els
        case _:
            return e


def fold_condition(c: n.Cond) -> n.Cond:
    """Fold one condition node and apply the comparison rewrite table."""
    match c:
        case n.Compare(op, n.IntLit(a), n.IntLit(b)):
            table = {
                "=": a == b, "<>": a != b, "<": a < b,
                "<=": a <= b, ">": a > b, ">=": a >= b,
            }
            return n.BoolLit(table[op])
        case n.Compare(op, n.StrLit(a), n.StrLit(b)) if op in ("=", "<>"):
            return n.BoolLit((a == b) == (op == "="))
        case n.Compare("<", x, n.BinOp("+", y, n.IntLit(1))):
            return n.Compare("<=", x, y)
        case n.Compare(">=", x, n.BinOp("+", y, n.IntLit(1))):
            return n.Compare(">", x, y)
        case n.Not(n.BoolLit(v)):
            return n.BoolLit(not v)
        case n.Not(n.Not(inner)):
            return inner
        case n.And(n.BoolLit(True), x) | n.And(x, n.BoolLit(True)):
            return x
        case n.And(n.BoolLit(False), _):
            return n.BoolLit(False)
        case n.Or(n.BoolLit(False), x) | n.Or(x, n.BoolLit(False)):
            return x
        case n.Or(n.BoolLit(True), _):
            return n.BoolLit(True)
        case _:
            return c


def fold_expr_deep(e: n.Expr) -> n.Expr:
    return map_expression(e, fold_expression, fold_condition)


def fold_cond_deep(c: n.Cond) -> n.Cond:
    return map_condition(c, fold_expression, fold_condition)


def _never_completes(s: n.Stmt) -> bool:
    return isinstance(s, (n.Exit, n.ActionCall))


def _always_exits(s: n.Stmt) -> bool:
    """True when every run of s leaves through an escaping exit."""
    facts = st.analyze(s)
    return facts.root_tau > 0 and all(f.tau != 0 for f in facts.terminals)


def _hoist_exit_tail(body: n.Stmt):
    """Move work that directly precedes a loop's only exit after the loop.

    In `do S1; if c then T; exit(1) fi; S2 od` with no other way out of
    the loop, T runs exactly once, immediately before leaving, so it can
    follow the loop instead.
    """
    facts = st.analyze(n.Do(body))
    outs = [f for f in facts.units if f.tau == 0]
    if len(outs) != 1 or not outs[0].is_exit:
        return None
    items = body.items if isinstance(body, n.Sequence) else (body,)
    for i, item in enumerate(items):
        match item:
            case n.If(c, n.Sequence(titems), n.Skip()) if (
                    len(titems) > 1 and titems[-1] == n.Exit(1)):
                tail = n.seq(*titems[:-1])
                if any(f.tau > 0 for f in st.analyze(tail).units):
                    return None
                guard = n.If(c, n.Exit(1), n.Skip())
                return n.seq(*items[:i], guard, *items[i + 1:]), tail
    return None


def _simp(s: n.Stmt) -> n.Stmt:
    match s:
        case n.Sequence(items):
            out: list[n.Stmt] = []
            for item in items:
                out.append(_simp(item))
                if _never_completes(out[-1]):
                    break
            return n.seq(*out)
        case n.If(cond, then, els):
            cond = fold_cond_deep(cond)
            then, els = _simp(then), _simp(els)
            match cond:
                case n.BoolLit(v):
                    return then if v else els
            if then == els:
                return then
            if isinstance(cond, n.Not) and els != n.Skip():
                cond, then, els = cond.operand, els, then
            if then == n.Skip() and els != n.Skip():
                cond, then, els = negate(cond), els, n.Skip()
            if els != n.Skip() and _always_exits(then):
                # the guard always leaves the loop, so the else arm is
                # simply what runs when the guard is false
                return n.seq(n.If(cond, then, n.Skip()), els)
            return n.If(cond, then, els)
        case n.Do(body):
            body = _simp(body)
            match body:
                case n.Exit(1):
                    return n.Skip()
                case n.Exit(k):
                    return n.Exit(k - 1)
            hoisted = _hoist_exit_tail(body)
            if hoisted is not None:
                inner, tail = hoisted
                return n.seq(n.Do(inner), tail)
            return n.Do(body)
        case n.While(cond, body):
            cond = fold_cond_deep(cond)
            body = _simp(body)
            match cond:
                case n.BoolLit(False):
                    return n.Skip()
                case n.BoolLit(True):
                    return n.Do(body)
            return n.While(cond, body)
        case n.For(var, start, stop, step, body):
            return n.For(var, fold_expr_deep(start), fold_expr_deep(stop),
                         fold_expr_deep(step), _simp(body))
        case n.VarBlock(inits, body):
            inits = tuple((name, fold_expr_deep(e)) for name, e in inits)
            return n.VarBlock(inits, _simp(body))
        case n.ActionSystem(start, actions):
            return n.ActionSystem(
                start, tuple((name, _simp(b)) for name, b in actions))
        case n.Assign(target, value):
            return n.Assign(target, fold_expr_deep(value))
        case _:
            return s


def simplify_statement(s: n.Stmt) -> n.Stmt:
    for _ in range(100):
        s2 = _simp(s)
        if s2 == s:
            return s
        s = s2
    return s


@register("simplify", "equivalence")
def _rule_simplify(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Normalise the target: fold constants, drop dead code, fix guards."""
    node = target_node(program, target)
    out = simplify_statement(node)
    ctx.require(out != node, "already in normal form")
    return rewrite_target(program, target, out)
