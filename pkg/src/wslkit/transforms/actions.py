"""Action system restructuring.

Translated code arrives as a flat action system: one action per basic
block, jumps everywhere, a dispatch action routing return addresses.
The rules here recover structure from it step by step:

* splice_actions      drop unreachable actions, inline single-use ones
* introduce_loops     turn a self-calling action into a do-loop
* extract_procedures  lift a single-entry group of actions into a proc
* unwrap_action_system  dissolve a system reduced to its start action

A call transfers control and never returns, which is what makes the
rewrites local: anything after a call is dead, and an inlined body
keeps exactly the jumps it had.
"""

from __future__ import annotations

from dataclasses import replace

from .. import nodes as n
from .. import structure as st
from .base import Ctx, NotApplicable, Target, register, rewrite_target, target_node
from .dataflow import group_returns_cleanly, proc_summaries, pure_selector, relay_procs
from .simplify import negate

TERMINAL = "z"
DISPATCH = "dispatch"


def _as_system(program: n.Program, target: Target) -> n.ActionSystem:
    node = target_node(program, target)
    if not isinstance(node, n.ActionSystem):
        raise NotApplicable("target is not an action system")
    return node


def _call_paths(body: n.Stmt) -> list[tuple[n.Path, str]]:
    """Paths of every action call, not crossing into nested systems."""
    out: list[tuple[n.Path, str]] = []

    def visit(s: n.Stmt, path: n.Path) -> None:
        if isinstance(s, n.ActionCall):
            out.append((path, s.name))
            return
        if isinstance(s, n.ActionSystem):
            return
        for i, child in enumerate(n.children(s)):
            visit(child, path + (i,))

    visit(body, ())
    return out


def _map_calls(s: n.Stmt, fn) -> n.Stmt:
    """Rewrite action calls via fn(name) -> replacement statement or None."""
    if isinstance(s, n.ActionCall):
        new = fn(s.name)
        return s if new is None else new
    if isinstance(s, n.ActionSystem):
        return s
    kids = n.children(s)
    if not kids:
        return s
    return n.with_children(s, tuple(_map_calls(c, fn) for c in kids))


def _reachable(table: dict[str, n.Stmt], start: str) -> set[str]:
    seen: set[str] = set()
    frontier = [start]
    while frontier:
        name = frontier.pop()
        if name in seen or name not in table:
            continue
        seen.add(name)
        frontier.extend(callee for _, callee in _call_paths(table[name]))
    return seen


def _absorb_jumps(s: n.Stmt) -> n.Stmt:
    """Fold what follows a jumping guard into the guard's else arm.

    When the then arm always jumps to another action, the statements
    after the conditional run exactly when the guard is false.  Nesting
    them in the else arm exposes single-call-site actions and shared
    suffixes.
    """
    match s:
        case n.Sequence(items):
            out = [_absorb_jumps(x) for x in items]
            for i in range(len(out) - 2, -1, -1):
                node = out[i]
                if (isinstance(node, n.If) and node.els == n.Skip()
                        and st.analyze(node.then).root_tau == -1):
                    out[i:] = [n.If(node.cond, node.then, n.seq(*out[i + 1:]))]
            return n.seq(*out)
        case n.If(c, t, e):
            return n.If(c, _absorb_jumps(t), _absorb_jumps(e))
        case n.Do(b):
            return n.Do(_absorb_jumps(b))
        case n.While(c, b):
            return n.While(c, _absorb_jumps(b))
        case n.VarBlock(inits, b):
            return n.VarBlock(inits, _absorb_jumps(b))
        case _:
            return s


def _items_of(s: n.Stmt) -> tuple[n.Stmt, ...]:
    if isinstance(s, n.Sequence):
        return s.items
    if s == n.Skip():
        return ()
    return (s,)


def _factor_suffixes(s: n.Stmt) -> n.Stmt:
    """Hoist a suffix shared by both arms of a conditional out of it."""
    match s:
        case n.Sequence(items):
            return n.seq(*(_factor_suffixes(x) for x in items))
        case n.If(c, t, e):
            t, e = _factor_suffixes(t), _factor_suffixes(e)
            ti, ei = _items_of(t), _items_of(e)
            shared = 0
            while (shared < min(len(ti), len(ei))
                   and ti[-1 - shared] == ei[-1 - shared]):
                shared += 1
            if shared:
                cut = len(ti) - shared
                return n.seq(
                    n.If(c, n.seq(*ti[:cut]), n.seq(*ei[:len(ei) - shared])),
                    *ti[cut:])
            return n.If(c, t, e)
        case n.Do(b):
            return n.Do(_factor_suffixes(b))
        case n.While(c, b):
            return n.While(c, _factor_suffixes(b))
        case n.VarBlock(inits, b):
            return n.VarBlock(inits, _factor_suffixes(b))
        case _:
            return s


@register("splice_actions", "equivalence")
def splice_actions(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Drop unreachable actions and inline actions with a single call site.

    Bodies are first normalised: the continuation of a jumping guard
    moves into its else arm, and suffixes shared by both arms of a
    conditional move after it.  Inlining replaces the call with the
    action body; it is sound at a position after which the action
    terminates, or when the body cannot fall off its end.  Selector
    actions (dispatch) never absorb bodies, so call resolution keeps
    working on them.
    """
    system = _as_system(program, target)
    order = [name for name, _ in system.actions]
    table = dict(system.actions)
    changed = False

    for name in order:
        if pure_selector(table[name]):
            continue
        normal = _factor_suffixes(_absorb_jumps(table[name]))
        if normal != table[name]:
            table[name] = normal
            changed = True

    while True:
        keep = _reachable(table, system.start)
        if len(keep) < len(table):
            order = [name for name in order if name in keep]
            table = {name: table[name] for name in order}
            changed = True
            continue

        sites: dict[str, list[tuple[str, n.Path]]] = {}
        for name in order:
            for path, callee in _call_paths(table[name]):
                sites.setdefault(callee, []).append((name, path))

        inlined = False
        for callee, where in sites.items():
            if len(where) != 1 or callee == system.start or callee not in table:
                continue
            caller, path = where[0]
            if caller == callee or pure_selector(table[caller]):
                continue
            fact = next(f for f in st.analyze(table[caller]).units
                        if f.path == path)
            never_falls = st.analyze(table[callee]).root_tau == -1
            if fact.after != st.TERMINATE and not never_falls:
                continue
            table[caller] = n.replace_at(table[caller], path, table[callee])
            order.remove(callee)
            del table[callee]
            changed = inlined = True
            break
        if not inlined:
            break

    if not changed:
        raise NotApplicable("nothing unreachable or single-use to splice")
    new = n.ActionSystem(system.start, tuple((name, table[name]) for name in order))
    return rewrite_target(program, target, new)


def _rotate_tail_call(body: n.Stmt, name: str) -> n.Stmt:
    """Move a guarded self-call into tail position.

    `if c then call name fi; call other` jumps to exactly one of the
    two actions, so it equals `if not c then call other fi; call name`.
    The rotated form has the recursion last, where the do-loop rule
    can roll it.
    """
    def go(s: n.Stmt) -> n.Stmt:
        match s:
            case n.Sequence(items):
                out = [go(x) for x in items]
                for i in range(len(out) - 1):
                    match out[i], out[i + 1]:
                        case (n.If(c, n.ActionCall(a), n.Skip()),
                              n.ActionCall(b)) if a == name and b != name:
                            out[i] = n.If(negate(c), n.ActionCall(b), n.Skip())
                            out[i + 1] = n.ActionCall(a)
                return n.seq(*out)
            case n.If(c, then, els):
                return n.If(c, go(then), go(els))
            case _:
                return s
    return go(body)


@register("introduce_loops", "equivalence")
def introduce_loops(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Replace a self-calling action's recursion with a do-loop.

    The body may additionally jump to one other action: the loop then
    exits to a trailing call.  Positions where the body would fall off
    get an explicit `call z`, preserving the fall-off-terminates rule
    once the body sits inside a loop.
    """
    system = _as_system(program, target)

    for idx, (name, body) in enumerate(system.actions):
        body = _rotate_tail_call(body, name)
        facts = st.analyze(body)
        if facts.root_tau > 0:
            continue
        calls = [f for f in facts.units if isinstance(f.node, n.ActionCall)]
        names = {f.node.name for f in calls}
        if name not in names:
            continue
        others = names - {name, TERMINAL}
        if len(others) > 1:
            continue
        tail = others.pop() if others else None

        # make implicit termination explicit before wrapping in a loop
        body2 = st.global_substitute(
            body, st.SubstitutionSpec(st.TauIs("=", 0),
                                      lambda f: n.ActionCall(TERMINAL)))
        facts2 = st.analyze(body2)
        calls2 = [f for f in facts2.units if isinstance(f.node, n.ActionCall)]
        if any(f.after != st.TERMINATE for f in calls2 if f.node.name == name):
            continue
        if tail is not None and any(
                f.depth != 0 for f in calls2 if f.node.name == tail):
            continue

        for f in sorted(calls2, key=lambda f: f.path, reverse=True):
            if f.node.name == name:
                body2 = n.replace_at(body2, f.path, n.Skip())
            elif f.node.name == tail:
                body2 = n.replace_at(body2, f.path, n.Exit(1))
        looped = n.Do(body2)
        new_body = looped if tail is None else n.seq(looped, n.ActionCall(tail))
        actions = list(system.actions)
        actions[idx] = (name, new_body)
        ctx.note(f"looped action {name}")
        return rewrite_target(program, target,
                              n.ActionSystem(system.start, tuple(actions)))

    raise NotApplicable("no action calls itself in tail position")


@register("unwrap_action_system", "equivalence")
def unwrap_action_system(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Replace a system reduced to its start action by the action body.

    A `call z` in tail position becomes skip.  One buried under loops
    becomes exit(d), which is exact when popping the d loops already
    terminates the body; the tau of the introduced exit certifies that.
    """
    system = _as_system(program, target)
    if len(system.actions) != 1 or system.actions[0][0] != system.start:
        raise NotApplicable("system still has several actions")
    body = system.actions[0][1]
    facts = st.analyze(body)
    calls = [f for f in facts.units if isinstance(f.node, n.ActionCall)]
    if any(f.node.name != TERMINAL for f in calls):
        raise NotApplicable("start action still jumps somewhere")
    shallow = [f for f in calls if f.depth == 0]
    buried = [f for f in calls if f.depth > 0]
    if any(f.after != st.TERMINATE for f in shallow):
        raise NotApplicable("a z call is not in tail position")
    for f in buried:
        body = n.replace_at(body, f.path, n.Exit(f.depth))
    check = st.analyze(body)
    if any(check.tau(f.path) != 0 for f in buried):
        raise NotApplicable("a z call's loops do not end the action")
    for f in sorted(shallow, key=lambda f: f.path, reverse=True):
        body = n.replace_at(body, f.path, n.Skip())
    return rewrite_target(program, target, body)


def _group_closure(table: dict[str, n.Stmt], entry: str) -> set[str]:
    group: set[str] = set()
    frontier = [entry]
    while frontier:
        name = frontier.pop()
        if name in group:
            continue
        group.add(name)
        for _, callee in _call_paths(table[name]):
            if callee in table and callee not in (DISPATCH, TERMINAL):
                frontier.append(callee)
    return group


@register("extract_procedures", "equivalence", params=("action",))
def extract_procedures(ctx: Ctx, program: n.Program, target: Target,
                       action: str | None = None) -> n.Program:
    """Lift a single-entry group of actions into a procedure.

    A group qualifies when outside actions only ever jump to its entry,
    nothing in it stops the system or falls off an action, and every
    jump out of it is a return: `call dispatch` reached with destination
    holding the value the return register had on entry.  Those dispatch
    calls become `call z`, the group becomes a procedure whose body is
    its own little system, and each former `call entry` turns into
    `entry(); call dispatch`.
    """
    system = _as_system(program, target)
    order = [name for name, _ in system.actions]
    table = dict(system.actions)
    summaries = proc_summaries(program)
    relays = relay_procs(program, summaries)
    taken = {p.name for p in program.procs} | {f.name for f in program.functs}

    candidates = [action] if action is not None else \
        [a for a in order if a not in (system.start, DISPATCH)]
    for entry in candidates:
        if entry not in table:
            raise NotApplicable(f"no action named {entry}")
        if entry in (system.start, DISPATCH) or entry in taken:
            continue
        group = _group_closure(table, entry)
        if system.start in group or DISPATCH in group:
            continue
        outside_ok = all(
            callee == entry
            for name in order if name not in group
            for _, callee in _call_paths(table[name]) if callee in group)
        if not outside_ok:
            continue
        if not group_returns_cleanly(
                program, table, entry, group,
                summaries=summaries, relays=relays,
                returns_on=frozenset({DISPATCH}),
                fall_is_return=False, require_reg=False):
            continue

        sub_actions = tuple(
            (name, _map_calls(table[name],
                              lambda c: n.ActionCall(TERMINAL) if c == DISPATCH else None))
            for name in order if name in group)
        proc = n.ProcDef(entry, (), (), n.ActionSystem(entry, sub_actions))

        def to_call(c: str) -> n.Stmt | None:
            if c != entry:
                return None
            return n.seq(n.ProcCall(entry, (), ()), n.ActionCall(DISPATCH))

        outer = tuple((name, _map_calls(table[name], to_call))
                      for name in order if name not in group)
        out = rewrite_target(program, target,
                             n.ActionSystem(system.start, outer))
        ctx.note(f"extracted {entry} ({len(group)} actions)")
        return replace(out, procs=out.procs + (proc,))

    raise NotApplicable("no action group can be extracted")
