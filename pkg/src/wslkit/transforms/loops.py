"""Loop and sequence equivalences: the structural rule catalog.

Every rule here is an equivalence: interpreter-observable behaviour is
preserved, and the test suite checks that against the execution oracle
on randomly generated programs.
"""

from __future__ import annotations

from .. import nodes as n
from .. import structure as st
from .base import Ctx, NotApplicable, Target, register, rewrite_target, scope_body, target_node, with_scope_body
from .simplify import fold_cond_deep, negate

Path = tuple[int, ...]


def _as_do(node: n.Stmt) -> n.Stmt:
    if not isinstance(node, n.Do):
        raise NotApplicable("target is not a do ... od loop")
    return node.body


def _tau0_paths(body: n.Stmt) -> set[Path]:
    return {f.path for f in st.terminals(body) if f.tau == 0}


def _selector_arg(body: n.Stmt, arg, name: str) -> st.Selector:
    """Turn a script argument (all | none | path list) into a selector."""
    if arg in (None, "none", ()):
        return st.PathIn(frozenset())
    if arg == "all":
        return st.TauIs("=", 0)
    paths = {tuple(p) for p in arg}
    bad = paths - _tau0_paths(body)
    if bad:
        raise NotApplicable(
            f"{name} selects {sorted(bad)} which are not terminal "
            "positions with value zero")
    return st.PathIn(frozenset(paths))


@register("expand_forwards", "equivalence", params=("count",))
def expand_forwards(ctx: Ctx, program: n.Program, target: Target,
                    count: int = 0) -> n.Program:
    """Duplicate statements after a conditional into both branches.

    `count` limits how many following statements are pulled in (0 = all).
    """
    body = scope_body(program, target.scope)
    node = target_node(program, target)
    path = target.path
    if isinstance(node, n.Sequence) and isinstance(node.items[0], n.If):
        path = path + (0,)
    elif not isinstance(node, n.If):
        raise NotApplicable("target is neither a conditional nor a sequence "
                            "starting with one")
    try:
        new_body = st.expand_forwards(body, path, int(count))
    except ValueError as exc:
        raise NotApplicable(str(exc)) from exc
    ctx.note("conditional has trailing statements to absorb")
    return with_scope_body(program, target.scope, new_body)


@register("floop_to_while", "equivalence")
def floop_to_while(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Rewrite do if B then exit fi; S od as while (not B) do S od.

    Also recognises the guarded form if B then skip else do S; if B then
    exit fi od fi, where the same test protects loop entry and ends the
    body: it folds to while (not B) do S od in one step.
    """
    node = target_node(program, target)
    if isinstance(node, n.If):
        return _guarded_floop_to_while(ctx, program, target, node)
    body = _as_do(node)
    guard = None
    if isinstance(body, n.Sequence) and isinstance(body.items[0], n.If):
        head, rest = body.items[0], body.items[1:]
        if head.then == n.Exit(1):
            guard, loop_body = negate(head.cond), n.seq(head.els, *rest)
        elif head.els == n.Exit(1):
            guard, loop_body = head.cond, n.seq(head.then, *rest)
    elif isinstance(body, n.If):
        if body.then == n.Exit(1):
            guard, loop_body = negate(body.cond), body.els
        elif body.els == n.Exit(1):
            guard, loop_body = body.cond, body.then
    if guard is None:
        raise NotApplicable("loop body does not start with an exit guard")
    ctx.note("guard is the first statement and exits one level")
    ctx.require(st.is_proper_sequence(loop_body),
                "the guarded body is a proper sequence")
    return rewrite_target(program, target,
                          n.While(fold_cond_deep(guard), loop_body))


def _guarded_floop_to_while(ctx: Ctx, program: n.Program, target: Target,
                            node: n.If) -> n.Program:
    if node.then == n.Skip() and isinstance(node.els, n.Do):
        test, loop = node.cond, node.els
    elif node.els == n.Skip() and isinstance(node.then, n.Do):
        test, loop = negate(node.cond), node.then
    else:
        raise NotApplicable("conditional does not guard a single loop")
    body = loop.body
    if not (isinstance(body, n.Sequence) and isinstance(body.items[-1], n.If)):
        raise NotApplicable("guarded loop body does not end with a test")
    tail = body.items[-1]
    ctx.require(tail.then == n.Exit(1) and tail.els == n.Skip(),
                "trailing test exits one level and has no else part")
    ctx.require(fold_cond_deep(tail.cond) == fold_cond_deep(test),
                "trailing test matches the entry guard")
    loop_body = n.seq(*body.items[:-1])
    ctx.require(st.is_proper_sequence(loop_body),
                "the guarded body is a proper sequence")
    return rewrite_target(program, target,
                          n.While(fold_cond_deep(negate(test)), loop_body))


@register("while_to_floop", "equivalence")
def while_to_floop(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Rewrite while B do S od as do if B then S else exit fi od."""
    node = target_node(program, target)
    if not isinstance(node, n.While):
        raise NotApplicable("target is not a while loop")
    return rewrite_target(
        program, target, n.Do(n.If(node.cond, node.body, n.Exit(1))))


@register("absorb_right", "equivalence", params=("split",))
def absorb_right(ctx: Ctx, program: n.Program, target: Target,
                 split: int = 1) -> n.Program:
    """Absorb the tail of a sequence into the statement before it.

    The tail lands after every terminal position of the head with value
    zero, incremented by the position's loop depth; terminal exits are
    replaced outright.
    """
    node = target_node(program, target)
    if not isinstance(node, n.Sequence):
        raise NotApplicable("target is not a sequence")
    ctx.require(1 <= split < len(node.items), "split point inside the sequence")
    s1 = n.seq(*node.items[:split])
    s2 = n.seq(*node.items[split:])
    ctx.require(bool(_tau0_paths(s1)),
                "head has a terminal statement with value zero")
    spec = st.SubstitutionSpec(
        st.TauIs("=", 0), lambda f: st.increment(s2, f.depth))
    return rewrite_target(program, target, st.global_substitute(s1, spec))


_STRAIGHT_LINE = (n.Assign, n.Skip, n.Comment, n.ProcCall, n.ExternCall)


@register("take_out_of_loop", "equivalence", params=("count",))
def take_out_of_loop(ctx: Ctx, program: n.Program, target: Target,
                     count: int = 1) -> n.Program:
    """Factor an identical trailing statement out of every completion point.

    Inverse of absorb_right: the `count` straight-line statements sitting
    immediately before each terminal position with value zero are removed
    from the body and appended once after it.
    """
    node = target_node(program, target)
    ctx.require(count >= 1, "count is positive")
    facts = st.analyze(node)
    t0 = [f for f in facts.terminals if f.tau == 0]
    ctx.require(bool(t0), "target has a terminal statement with value zero")

    removals: dict[Path, list[tuple[int, int]]] = {}
    copies: list[n.Stmt] = []
    for f in t0:
        if not f.path:
            raise NotApplicable("terminal position has no room for a copy")
        parent_path, idx = f.path[:-1], f.path[-1]
        parent = n.node_at(node, parent_path)
        if not isinstance(parent, n.Sequence):
            raise NotApplicable("terminal position is not inside a sequence")
        lo, hi = (idx - count, idx) if f.is_exit else (idx - count + 1, idx + 1)
        if lo < (0 if f.is_exit else 1):
            raise NotApplicable("not enough statements before the terminal")
        extracted = parent.items[lo:hi]
        if not all(isinstance(s, _STRAIGHT_LINE) for s in extracted):
            raise NotApplicable("trailing statements are not straight-line code")
        copies.append(n.seq(*extracted))
        removals.setdefault(parent_path, []).append((lo, hi))

    ctx.require(all(c == copies[0] for c in copies),
                "every completion point ends with the same statements")
    out = node
    for parent_path in sorted(removals, reverse=True):
        spans = sorted(removals[parent_path])
        for (a, b), (c, _) in zip(spans, spans[1:]):
            if b > c:
                raise NotApplicable("overlapping trailing statements")
        parent = n.node_at(node, parent_path)
        items = list(parent.items)
        for lo, hi in reversed(spans):
            del items[lo:hi]
        out = n.replace_at(out, parent_path, n.seq(*items))
    return rewrite_target(program, target, n.seq(out, copies[0]))


@register("false_loop", "equivalence")
def false_loop(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Wrap the target in a single-pass loop: S becomes do S+1 od."""
    node = target_node(program, target)
    return rewrite_target(program, target, n.Do(st.increment(node, 1)))


@register("unwrap_false_loop", "equivalence")
def unwrap_false_loop(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Remove a loop whose body can only run once (inverse of false_loop)."""
    body = _as_do(target_node(program, target))
    facts = st.analyze(body)
    edits: dict[Path, n.Stmt] = {}
    for f in facts.terminals:
        if not f.is_exit:
            raise NotApplicable("loop body can complete without exiting")
        if f.node.count == 1 and f.depth == 0:
            parent = n.node_at(body, f.path[:-1]) if f.path else None
            if isinstance(parent, n.Sequence) and f.path[-1] != len(parent.items) - 1:
                raise NotApplicable("exit(1) is not the tail of its sequence")
            edits[f.path] = n.Skip()
        else:
            ctx.require(f.node.count >= 2, "exit parameter can be decremented")
            edits[f.path] = n.Exit(f.node.count - 1)
    if not edits:
        ctx.note("loop body never completes; the loop is redundant")
        return rewrite_target(program, target, body)
    return rewrite_target(program, target, st.substitute_paths(body, edits))


@register("loop_double", "equivalence", params=("psi",))
def loop_double(ctx: Ctx, program: n.Program, target: Target,
                psi="none") -> n.Program:
    """Convert do S od to a double loop.

    psi picks the completion points of S that are pushed out to the new
    outer loop ("all" increments the whole body, "none" increments only
    the exits, a path list increments exactly those positions).
    """
    body = _as_do(target_node(program, target))
    sel = st.AnyOf(st.TauIs(">", 0), _selector_arg(body, psi, "psi"))
    return rewrite_target(
        program, target, n.Do(n.Do(st.increment_selected(body, 1, sel))))


@register("loop_isolate", "equivalence")
def loop_isolate(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Isolate the then-branch of a loop's trailing conditional.

    do S; if B then S1 else S2 fi od becomes
    do do S+(1,1); if B then exit else S2+(1,1) fi od; S1 od,
    so S1 runs outside the inner loop.
    """
    body = _as_do(target_node(program, target))
    if isinstance(body, n.Sequence) and isinstance(body.items[-1], n.If):
        head, cond = n.seq(*body.items[:-1]), body.items[-1]
    elif isinstance(body, n.If):
        head, cond = n.Skip(), body
    else:
        raise NotApplicable("loop body does not end with a conditional")
    inner = n.seq(
        st.partial_increment(head, 1, 1),
        n.If(cond.cond, n.Exit(1), st.partial_increment(cond.els, 1, 1)))
    return rewrite_target(
        program, target, n.Do(n.seq(n.Do(inner), cond.then)))


@register("loop_invert", "equivalence", params=("split", "roll"))
def loop_invert(ctx: Ctx, program: n.Program, target: Target,
                split: int = 1, roll=False) -> n.Program:
    """Rotate a loop body: do S1; S2 od becomes S1; do S2; S1 od.

    When S1 is not a proper sequence the rotated loop is wrapped in a
    single-pass outer loop and incremented instead.

    With roll set, the same equation is applied right to left: the target
    is a sequence ending in a loop, the `split` statements before the loop
    equal the loop body's trailing statements, and they roll into the top:
    S1; do S2; S1 od becomes do S1; S2 od.
    """
    if roll in (True, 1, "true", "1", "yes"):
        return _loop_roll(ctx, program, target, split)
    body = _as_do(target_node(program, target))
    if not isinstance(body, n.Sequence):
        raise NotApplicable("loop body is not a sequence")
    ctx.require(1 <= split < len(body.items), "split point inside the body")
    s1 = n.seq(*body.items[:split])
    s2 = n.seq(*body.items[split:])
    rotated = n.Do(n.seq(s2, s1))
    if st.is_proper_sequence(s1):
        ctx.note("rotated prefix is a proper sequence")
        return rewrite_target(program, target, n.seq(s1, rotated))
    return rewrite_target(
        program, target, n.Do(n.seq(s1, st.increment(rotated, 1))))


def _loop_roll(ctx: Ctx, program: n.Program, target: Target,
               split: int) -> n.Program:
    node = target_node(program, target)
    if not (isinstance(node, n.Sequence) and isinstance(node.items[-1], n.Do)):
        raise NotApplicable("target is not a sequence ending in a loop")
    loop = node.items[-1]
    ctx.require(1 <= split <= len(node.items) - 1,
                "split point inside the sequence")
    s1 = n.seq(*node.items[len(node.items) - 1 - split:-1])
    body = loop.body
    tail_items = body.items if isinstance(body, n.Sequence) else (body,)
    ctx.require(split < len(tail_items),
                "loop body has more statements than the rolled prefix")
    tail = n.seq(*tail_items[len(tail_items) - split:])
    ctx.require(tail == s1, "statements before the loop match the body's tail")
    ctx.require(st.is_proper_sequence(s1), "rolled prefix is a proper sequence")
    s2 = n.seq(*tail_items[:len(tail_items) - split])
    rolled = n.Do(n.seq(s1, s2))
    kept = node.items[:len(node.items) - 1 - split]
    return rewrite_target(program, target, n.seq(*kept, rolled))


@register("loop_unroll", "equivalence", params=("phi", "psi"))
def loop_unroll(ctx: Ctx, program: n.Program, target: Target,
                phi=None, psi=None) -> n.Program:
    """Unroll the first step of a loop, or insert loop copies selectively.

    With no selectors the loop is peeled: completion points get a copy of
    the whole loop and exit parameters drop by one.  With psi, a copy of
    the loop is inserted inside the loop at the chosen completion points;
    phi picks which completion points of the copy's own body are promoted
    to restart the outer loop rather than the copy.
    """
    body = _as_do(target_node(program, target))
    if psi is None:
        ctx.note("peeling the first iteration")
        return rewrite_target(program, target, st.unroll_first_step(body))

    phi_sel = st.AnyOf(st.TauIs(">=", 1),
                       st.AllOf(st.TauIs("=", 0), _selector_arg(body, phi, "phi")))

    def copy_at(f: st.Fact) -> n.Stmt:
        return n.Do(st.increment_selected(body, f.depth + 1, phi_sel))

    spec = st.SubstitutionSpec(
        st.AllOf(st.TauIs("=", 0), _selector_arg(body, psi, "psi")), copy_at)
    return rewrite_target(
        program, target, n.Do(st.global_substitute(body, spec)))
