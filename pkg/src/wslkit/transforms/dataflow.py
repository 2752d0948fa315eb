"""Constant propagation, branch merging, and return-address analysis.

The propagation pass is flow-sensitive inside a scope and across the
actions of an action system: entry environments are joined over all
call sites until they stabilise, so register values survive jumps.
Layout-backed variables are tracked too; writes through memory kill
them, but only within the data area the write can actually reach when
the address has a known root (a pointer derived from `address_of` or
a literal address).

The same symbolic walk powers the linkage analysis: a procedure is a
"return relay" when every way out of it leaves `destination` equal to
the value the return register held on entry.  Constant propagation
uses that fact to resolve `call dispatch` after a procedure call into
a direct jump, which is what lets a translated program shed its
subroutine linkage.
"""

from __future__ import annotations

import operator
import re
from dataclasses import replace

from .. import nodes as n
from .. import structure as st
from .base import Ctx, NotApplicable, Target, register, rewrite_target, target_node
from .simplify import fold_condition, fold_expression, map_condition, map_expression, simplify_statement

Env = dict[str, "n.Expr | frozenset[int]"]

RET_REG = "r10"
DEST_VAR = "destination"
_AREA_KEY = "@area"  # env key suffix carrying a pointer's target area
_SLOT = "@slot:"  # env key prefix for a literal-addressed memory word
_SET_CAP = 8  # widest tracked set of alternative integer values


def _as_int_set(v: "n.Expr | frozenset[int] | None") -> frozenset[int] | None:
    if isinstance(v, frozenset):
        return v
    if isinstance(v, n.IntLit):
        return frozenset({v.value})
    return None


def _join_values(a, b):
    """Meet of two env facts: equal values survive, int values widen to sets."""
    if a is None or b is None:
        return None
    if a == b:
        return a
    sa, sb = _as_int_set(a), _as_int_set(b)
    if sa is None or sb is None:
        return None
    u = sa | sb
    if len(u) > _SET_CAP:
        return None
    if len(u) == 1:
        return n.IntLit(next(iter(u)))
    return u


def lvalue_root(target: n.Expr) -> str | None:
    match target:
        case n.Var(name):
            return name
        case n.FieldRef(base, _) | n.IndexExpr(base, _) | n.SliceExpr(base, _, _):
            return lvalue_root(base)
        case _:
            return None


# --------------------------------------------------------------------------
# layout geometry and pointer roots


def layout_members(layout: n.LayoutMap | None) -> dict[str, frozenset[str]]:
    """Area name -> every name that denotes storage inside that area."""
    if layout is None:
        return {}
    return {a.name: frozenset({a.name, *(f.name for f in a.fields)})
            for a in layout.areas}


def name_area(layout: n.LayoutMap | None) -> dict[str, str]:
    out: dict[str, str] = {}
    if layout is not None:
        for a in layout.areas:
            out[a.name] = a.name
            for f in a.fields:
                out[f.name] = a.name
    return out


def pointer_area(e: n.Expr, roots: dict[str, str],
                 layout: n.LayoutMap | None, n2a: dict[str, str]) -> str | None:
    """The data area an address expression points into, when that is static."""
    match e:
        case n.ExternFunc("address_of", (n.Var(name),)):
            return n2a.get(name)
        case n.Var(name):
            return roots.get(name)
        case n.IntLit(value):
            if layout is not None:
                hit = layout.resolve(value, 1)
                if hit is not None:
                    return hit[0].name
            return None
        case n.BinOp("+" | "-", left, right):
            if isinstance(right, n.IntLit):
                return pointer_area(left, roots, layout, n2a)
            if e.op == "+" and isinstance(left, n.IntLit):
                return pointer_area(right, roots, layout, n2a)
            return None
        case _:
            return None


class _Geometry:
    """Shared alias bookkeeping over one program's layout."""

    def __init__(self, program: n.Program):
        self.layout = program.layout
        self.members = layout_members(program.layout)
        self.n2a = name_area(program.layout)
        self.all_members: frozenset[str] = frozenset().union(*self.members.values()) \
            if self.members else frozenset()

    def write_kills(self, root: str | None) -> frozenset[str]:
        """Names a write rooted at `root` may change (None = unknown memory)."""
        if root is None:
            return self.all_members
        area = self.n2a.get(root)
        if area is None:
            return frozenset({root})
        return self.members[area] | {root}

    def root_update(self, name: str, value: n.Expr, roots: dict[str, str]) -> None:
        area = pointer_area(value, roots, self.layout, self.n2a)
        if area is not None:
            roots[name] = area
        else:
            roots.pop(name, None)

    def extern_roots(self, call_name: str, var_args: tuple[n.Expr, ...],
                     roots: dict[str, str]) -> None:
        """edmk leaves its mark register pointing into the pattern area."""
        if call_name == "edmk" and len(var_args) == 2 and isinstance(var_args[1], n.Var):
            pat = lvalue_root(var_args[0])
            area = self.n2a.get(pat) if pat is not None else None
            if area is not None:
                roots[var_args[1].name] = area
            else:
                roots.pop(var_args[1].name, None)


# --------------------------------------------------------------------------
# write summaries (alias-aware, so a known edit mark does not smear)


def _walk_writes(s: n.Stmt, geo: _Geometry, roots: dict[str, str],
                 writes: set[str], calls: list[str]) -> None:
    match s:
        case n.Sequence(items):
            for item in items:
                _walk_writes(item, geo, roots, writes, calls)
        case n.Assign(n.Var(name), value):
            writes.add(name)
            geo.root_update(name, value, roots)
        case n.Assign(n.MemRef(addr, _), _):
            writes.update(geo.write_kills(
                pointer_area(addr, roots, geo.layout, geo.n2a)))
        case n.Assign(target, _):
            writes.update(geo.write_kills(lvalue_root(target)))
        case n.ProcCall(name, _, var_args):
            calls.append(name)
            for v in var_args:
                writes.update(geo.write_kills(lvalue_root(v)))
                roots.pop(lvalue_root(v) or "", None)
            geo.extern_roots(name, var_args, roots)
        case n.ExternCall(name, _, var_args):
            for v in var_args:
                writes.update(geo.write_kills(lvalue_root(v)))
                roots.pop(lvalue_root(v) or "", None)
            geo.extern_roots(name, var_args, roots)
        case n.If(_, then, els):
            r1, r2 = dict(roots), dict(roots)
            _walk_writes(then, geo, r1, writes, calls)
            _walk_writes(els, geo, r2, writes, calls)
            roots.clear()
            roots.update({k: v for k, v in r1.items() if r2.get(k) == v})
        case n.While(_, body) | n.Do(body):
            _walk_writes(body, geo, {}, writes, calls)
            roots.clear()
        case n.For(var, _, _, _, body):
            writes.add(var)
            _walk_writes(body, geo, {}, writes, calls)
            roots.clear()
        case n.VarBlock(inits, body):
            bound = {name for name, _ in inits}
            inner: set[str] = set()
            _walk_writes(body, geo, {}, inner, calls)
            writes.update(inner - bound)
            roots.clear()
        case n.ActionSystem(_, actions):
            for _, body in actions:
                _walk_writes(body, geo, {}, writes, calls)
            roots.clear()
        case _:
            pass


def proc_summaries(program: n.Program) -> dict[str, frozenset[str]]:
    """name -> variables a call may write, through nested calls."""
    geo = _Geometry(program)
    direct: dict[str, set[str]] = {}
    callees: dict[str, list[str]] = {}
    for p in program.procs:
        calls: list[str] = []
        writes: set[str] = set(p.var_params)
        _walk_writes(p.body, geo, {}, writes, calls)
        direct[p.name] = writes - set(p.params)
        callees[p.name] = calls
    current = {name: set(ws) for name, ws in direct.items()}
    for _ in range(len(program.procs) + 1):
        changed = False
        for name in current:
            for callee in callees[name]:
                extra = current.get(callee, set()) - current[name]
                if extra:
                    current[name] |= extra
                    changed = True
        if not changed:
            break
    return {name: frozenset(ws) for name, ws in current.items()}


def written_vars(s: n.Stmt, summaries: dict[str, frozenset[str]],
                 geo: _Geometry) -> set[str]:
    calls: list[str] = []
    out: set[str] = set()
    _walk_writes(s, geo, {}, out, calls)
    for name in calls:
        out |= summaries.get(name, frozenset())
    return out


def _completes(s: n.Stmt) -> bool:
    return any(f.tau == 0 for f in st.terminals(s))


def pure_selector(s: n.Stmt) -> bool:
    """True for bodies that only test variables and jump (the dispatch shape)."""
    match s:
        case n.ActionCall(_) | n.Skip() | n.Comment(_):
            return True
        case n.If(_, then, els):
            return pure_selector(then) and pure_selector(els)
        case n.Sequence(items):
            return all(pure_selector(i) for i in items)
        case _:
            return False


def cond_vars(c: n.Cond) -> set[str]:
    names: set[str] = set()

    def fe(e: n.Expr) -> n.Expr:
        if isinstance(e, n.Var):
            names.add(e.name)
        return e

    def fc(x: n.Cond) -> n.Cond:
        if isinstance(x, n.CondVar):
            names.add(x.name)
        return x

    map_condition(c, fe, fc)
    return names


# --------------------------------------------------------------------------
# symbolic return-address flow
#
# A state records which variables still hold the value the return register
# had on entry, and which data area each pointer variable aims at.  The walk
# reports every action call together with the state that reaches it.

_RetState = dict


def _ret_copy(state: _RetState) -> _RetState:
    return {"ret": set(state["ret"]), "roots": dict(state["roots"])}


def _ret_meet(a: _RetState | None, b: _RetState) -> _RetState:
    if a is None:
        return _ret_copy(b)
    return {"ret": a["ret"] & b["ret"],
            "roots": {k: v for k, v in a["roots"].items()
                      if b["roots"].get(k) == v}}


class _RetWalk:
    def __init__(self, geo: _Geometry, summaries: dict[str, frozenset[str]],
                 relays: frozenset[str], ret_reg: str):
        self.geo = geo
        self.summaries = summaries
        self.relays = relays
        self.ret_reg = ret_reg
        self.events: list[tuple[str, _RetState]] = []
        self.opaque = False

    def _kill(self, state: _RetState, names) -> None:
        for name in names:
            state["ret"].discard(name)
            state["roots"].pop(name, None)

    def walk(self, s: n.Stmt, state: _RetState) -> _RetState | None:
        match s:
            case n.Sequence(items):
                for item in items:
                    nxt = self.walk(item, state)
                    if nxt is None:
                        return None
                    state = nxt
                return state
            case n.Skip() | n.Comment(_):
                return state
            case n.Assign(n.Var(name), value):
                holds = isinstance(value, n.Var) and value.name in state["ret"]
                if holds:
                    state["ret"].add(name)
                else:
                    state["ret"].discard(name)
                self.geo.root_update(name, value, state["roots"])
                return state
            case n.Assign(n.MemRef(addr, _), _):
                area = pointer_area(addr, state["roots"], self.geo.layout, self.geo.n2a)
                self._kill(state, self.geo.write_kills(area) if area is not None
                           else self.geo.all_members)
                return state
            case n.Assign(target, _):
                self._kill(state, self.geo.write_kills(lvalue_root(target)))
                return state
            case n.If(_, then, els):
                s1 = self.walk(then, _ret_copy(state))
                s2 = self.walk(els, _ret_copy(state))
                if s1 is None:
                    return s2
                if s2 is None:
                    return s1
                return _ret_meet(s1, s2)
            case n.ActionCall(name):
                self.events.append((name, _ret_copy(state)))
                return None
            case n.ProcCall(name, _, var_args):
                writes = set(self.summaries.get(name, frozenset()))
                writes.update(r for v in var_args
                              if (r := lvalue_root(v)) is not None)
                if name in self.relays and self.ret_reg in state["ret"]:
                    self._kill(state, writes - {DEST_VAR, self.ret_reg})
                    state["ret"].add(DEST_VAR)
                else:
                    self._kill(state, writes)
                self.geo.extern_roots(name, var_args, state["roots"])
                return state
            case n.ExternCall(name, _, var_args):
                for v in var_args:
                    self._kill(state, self.geo.write_kills(lvalue_root(v)))
                self.geo.extern_roots(name, var_args, state["roots"])
                return state
            case _:
                # loops, exits, nested systems: too much structure to track
                self.opaque = True
                return None


def group_returns_cleanly(program: n.Program, actions: dict[str, n.Stmt],
                          start: str, group: set[str], *,
                          summaries: dict[str, frozenset[str]],
                          relays: frozenset[str],
                          returns_on: frozenset[str],
                          fall_is_return: bool,
                          require_reg: bool,
                          ret_reg: str = RET_REG) -> bool:
    """Every path out of the action group ends with destination = entry r10.

    `returns_on` names the calls that leave the group (dispatch before
    extraction, z after); any other call out of the group fails.  When
    `fall_is_return` a body that runs off its end counts as a way out.
    `require_reg` additionally demands the return register itself still
    holds its entry value at each way out.
    """
    geo = _Geometry(program)

    def ret_ok(state: _RetState) -> bool:
        if DEST_VAR not in state["ret"]:
            return False
        return not require_reg or ret_reg in state["ret"]

    entries: dict[str, _RetState] = {start: {"ret": {ret_reg}, "roots": {}}}
    for _ in range(4 * len(group) + 8):
        changed = False
        for name in [a for a in actions if a in entries and a in group]:
            w = _RetWalk(geo, summaries, relays, ret_reg)
            end = w.walk(actions[name], _ret_copy(entries[name]))
            if w.opaque:
                return False
            if end is not None:
                if not (fall_is_return and ret_ok(end)):
                    return False
            for callee, cstate in w.events:
                if callee in returns_on:
                    if not ret_ok(cstate):
                        return False
                elif callee in group:
                    merged = _ret_meet(entries.get(callee), cstate)
                    if merged != entries.get(callee):
                        entries[callee] = merged
                        changed = True
                else:
                    return False
        if not changed:
            return True
    return False


def relay_procs(program: n.Program,
                summaries: dict[str, frozenset[str]]) -> frozenset[str]:
    """Procedures that return with destination = the entry value of r10."""
    relays: set[str] = set()
    for _ in range(len(program.procs) + 1):
        changed = False
        for p in program.procs:
            if p.name in relays or p.params or p.var_params:
                continue
            if isinstance(p.body, n.ActionSystem):
                table = dict(p.body.actions)
                ok = group_returns_cleanly(
                    program, table, p.body.start, set(table),
                    summaries=summaries, relays=frozenset(relays),
                    returns_on=frozenset({"z"}), fall_is_return=True,
                    require_reg=True)
            else:
                ok = group_returns_cleanly(
                    program, {p.name: p.body}, p.name, {p.name},
                    summaries=summaries, relays=frozenset(relays),
                    returns_on=frozenset({"z"}), fall_is_return=True,
                    require_reg=True)
            if ok:
                relays.add(p.name)
                changed = True
        if not changed:
            break
    return frozenset(relays)


# --------------------------------------------------------------------------
# constant propagation


def entry_env(program: n.Program) -> Env:
    """Documented entry convention for translated programs: the register
    seeds recorded in the layout are known literals at the start."""
    if program.layout is None:
        return {}
    return {reg: n.IntLit(value) for reg, value in program.layout.bases}


class _Prop:
    def __init__(self, program: n.Program):
        self.program = program
        self.geo = _Geometry(program)
        self.summaries = proc_summaries(program)
        self.relays = relay_procs(program, self.summaries)
        self.layout_names = set(self.geo.all_members)
        self.actions: list[dict[str, n.Stmt]] = []
        self.pending: list[list[tuple[str, Env]]] = []
        self._name_addr: dict[str, int] = {}
        if program.layout is not None:
            for area in program.layout.areas:
                self._name_addr[area.name] = area.addr
                for f in area.fields:
                    self._name_addr[f.name] = area.addr + f.offset

    # -- pointer roots ride along in the env under reserved keys

    def _roots_view(self, env: Env) -> dict[str, str]:
        return {k[:-len(_AREA_KEY)]: v.name for k, v in env.items()
                if k.endswith(_AREA_KEY) and isinstance(v, n.Var)}

    def _set_root(self, env: Env, name: str, value: n.Expr) -> None:
        area = pointer_area(value, self._roots_view(env), self.geo.layout, self.geo.n2a)
        if area is not None:
            env[name + _AREA_KEY] = n.Var(area)
        else:
            env.pop(name + _AREA_KEY, None)

    def _addr_int(self, e: n.Expr, in_db: bool = False) -> int | None:
        """Static byte address of an address expression, when derivable.

        Inside a db() operand a bare data name denotes its address; anywhere
        else only explicit address_of forms and literals resolve.
        """
        match e:
            case n.IntLit(v):
                return v
            case (n.ExternFunc("address_of", (n.Var(name),))
                  | n.CallExpr("address_of", (n.Var(name),))):
                return self._name_addr.get(name)
            case n.Var(name) if in_db:
                return self._name_addr.get(name)
            case n.CallExpr("db", (disp, base)):
                d = self._addr_int(disp, in_db=True)
                b = self._addr_int(base, in_db=True)
                return None if d is None or b is None else d + b
            case n.BinOp("+", left, right):
                lv = self._addr_int(left, in_db)
                rv = self._addr_int(right, in_db)
                return None if lv is None or rv is None else lv + rv
            case n.BinOp("-", left, right):
                lv = self._addr_int(left, in_db)
                rv = self._addr_int(right, in_db)
                return None if lv is None or rv is None else lv - rv
        return None

    def _slot_key(self, addr: n.Expr, length: n.Expr) -> str | None:
        """Env key for a fully resolved memory reference, or None."""
        if self.geo.layout is not None and isinstance(length, n.IntLit):
            ai = self._addr_int(addr)
            if ai is not None:
                hit = self.geo.layout.resolve(ai, length.value)
                if hit is not None:
                    return f"{_SLOT}{hit[0].name}:{ai}:{length.value}"
        return None

    def _kill_range(self, env: Env, area: n.Area, lo: int, hi: int) -> None:
        """Forget exactly what a store to [lo, hi) inside area may change."""
        names = [area.name]
        names += [f.name for f in area.fields
                  if area.addr + f.offset < hi and lo < area.addr + f.offset + f.length]
        for name in names:
            env.pop(name, None)
            env.pop(name + _AREA_KEY, None)
        for key in [k for k in env if k.startswith(_SLOT)]:
            a_name, a_lo, a_len = key[len(_SLOT):].split(":")
            if a_name == area.name and int(a_lo) < hi and lo < int(a_lo) + int(a_len):
                env.pop(key)

    def _subst_one(self, x: n.Expr, env: Env) -> n.Expr:
        if isinstance(x, n.Var):
            got = env.get(x.name)
            if got is not None and not isinstance(got, frozenset):
                return got
        if isinstance(x, n.MemRef):
            key = self._slot_key(x.addr, x.length)
            got = env.get(key) if key is not None else None
            if got is not None and not isinstance(got, frozenset):
                return got
        return fold_expression(x)

    def _set_test(self, cond: n.Cond, env: Env):
        """Decide or refine an =/<> test against a tracked value set.

        Returns (verdict, var, then_fact, else_fact): a bool verdict when
        the set settles the test, else None with the per-branch refinement
        of the variable's fact.
        """
        match cond:
            case (n.Compare("=" | "<>", n.Var(name), n.IntLit(k))
                  | n.Compare("=" | "<>", n.IntLit(k), n.Var(name))):
                pass
            case _:
                return None
        s = env.get(name)
        if not isinstance(s, frozenset):
            return None
        eq = cond.op == "="
        if k not in s:
            return (not eq, name, None, None)
        rest = s - {k}
        if not rest:
            return (eq, name, None, None)
        rest_fact = n.IntLit(next(iter(rest))) if len(rest) == 1 else rest
        if eq:
            return (None, name, n.IntLit(k), rest_fact)
        return (None, name, rest_fact, n.IntLit(k))

    def subst(self, e: n.Expr, env: Env) -> n.Expr:
        return map_expression(e, lambda x: self._subst_one(x, env), fold_condition)

    def subst_cond(self, c: n.Cond, env: Env) -> n.Cond:
        return map_condition(c, lambda x: self._subst_one(x, env), fold_condition)

    def _subst_lvalue(self, target: n.Expr, env: Env) -> n.Expr:
        match target:
            case n.FieldRef(base, name):
                return n.FieldRef(self._subst_lvalue(base, env), name)
            case n.IndexExpr(base, index):
                return n.IndexExpr(self._subst_lvalue(base, env), self.subst(index, env))
            case n.SliceExpr(base, lo, hi):
                return n.SliceExpr(self._subst_lvalue(base, env),
                                   self.subst(lo, env), self.subst(hi, env))
            case n.MemRef(addr, length):
                return n.MemRef(self.subst(addr, env), self.subst(length, env))
            case _:
                return target

    def kill(self, env: Env, names) -> None:
        doomed = set()
        for name in names:
            env.pop(name, None)
            env.pop(name + _AREA_KEY, None)
            area = self.geo.n2a.get(name)
            if area is not None:
                doomed.add(area)
        if doomed:
            for key in [k for k in env if k.startswith(_SLOT)
                        and k[len(_SLOT):].split(":", 1)[0] in doomed]:
                env.pop(key)

    def written(self, body: n.Stmt) -> set[str]:
        return written_vars(body, self.summaries, self.geo)

    def stmt(self, s: n.Stmt, env: Env) -> n.Stmt:
        match s:
            case n.Sequence(items):
                return n.seq(*(self.stmt(item, env) for item in items))
            case n.Assign(target, value):
                value = self.subst(value, env)
                target = self._subst_lvalue(target, env)
                root = lvalue_root(target)
                if isinstance(target, n.Var):
                    # the value's pointer root and set facts refer to the
                    # state before the write, so read them ahead of the kill
                    area = pointer_area(value, self._roots_view(env),
                                        self.geo.layout, self.geo.n2a)
                    vset = env.get(value.name) \
                        if isinstance(value, n.Var) else None
                    self.kill(env, self.geo.write_kills(target.name)
                              if target.name in self.geo.n2a else [target.name])
                    if isinstance(value, (n.IntLit, n.StrLit)):
                        env[target.name] = value
                    elif isinstance(vset, frozenset):
                        env[target.name] = vset
                    if area is not None:
                        env[target.name + _AREA_KEY] = n.Var(area)
                    else:
                        env.pop(target.name + _AREA_KEY, None)
                elif isinstance(target, n.MemRef):
                    key = self._slot_key(target.addr, target.length)
                    if key is not None:
                        ai = self._addr_int(target.addr)
                        hit = self.geo.layout.resolve(ai, target.length.value)
                        self._kill_range(env, hit[0], ai,
                                         ai + target.length.value)
                        if isinstance(value, n.IntLit):
                            env[key] = value
                    else:
                        area = pointer_area(target.addr, self._roots_view(env),
                                            self.geo.layout, self.geo.n2a)
                        self.kill(env, self.geo.write_kills(area)
                                  if area is not None else self.geo.all_members)
                elif root is not None:
                    self.kill(env, self.geo.write_kills(root))
                return n.Assign(target, value)
            case n.If(cond, then, els):
                cond = self.subst_cond(cond, env)
                if isinstance(cond, n.BoolLit):
                    return self.stmt(then if cond.value else els, env)
                env_t, env_e = dict(env), dict(env)
                tested = self._set_test(cond, env)
                if tested is not None:
                    verdict, var, yes, no = tested
                    if verdict is not None:
                        return self.stmt(then if verdict else els, env)
                    env_t[var] = yes
                    env_e[var] = no
                then = self.stmt(then, env_t)
                els = self.stmt(els, env_e)
                live = [e for e, b in ((env_t, then), (env_e, els)) if _completes(b)]
                env.clear()
                if live:
                    for k, v in live[0].items():
                        for other in live[1:]:
                            v = _join_values(v, other.get(k))
                            if v is None:
                                break
                        if v is not None:
                            env[k] = v
                return n.If(cond, then, els)
            case n.While(cond, body):
                self.kill(env, self.written(body))
                return n.While(self.subst_cond(cond, env), self.stmt(body, dict(env)))
            case n.Do(body):
                self.kill(env, self.written(body))
                return n.Do(self.stmt(body, dict(env)))
            case n.For(var, start, stop, step, body):
                start = self.subst(start, env)
                stop = self.subst(stop, env)
                step = self.subst(step, env)
                self.kill(env, self.written(body) | {var})
                inner = dict(env)
                inner.pop(var, None)
                return n.For(var, start, stop, step, self.stmt(body, inner))
            case n.VarBlock(inits, body):
                saved = {name: env.get(name) for name, _ in inits}
                new_inits = []
                for name, init in inits:
                    init = self.subst(init, env)
                    new_inits.append((name, init))
                    if isinstance(init, (n.IntLit, n.StrLit)):
                        env[name] = init
                    else:
                        env.pop(name, None)
                    env.pop(name + _AREA_KEY, None)
                body = self.stmt(body, env)
                for name, old in saved.items():
                    if old is None:
                        env.pop(name, None)
                    else:
                        env[name] = old
                return n.VarBlock(tuple(new_inits), body)
            case n.ProcCall(name, args, var_args):
                args = tuple(self.subst(a, env) for a in args)
                kills = {r for v in var_args if (r := lvalue_root(v)) is not None}
                for r in set(kills):
                    kills |= self.geo.write_kills(r)
                kills |= self.summaries.get(name, frozenset())
                ret = env.get(RET_REG)
                if name in self.relays and isinstance(ret, n.IntLit):
                    self.kill(env, kills - {DEST_VAR, RET_REG})
                    env[DEST_VAR] = ret
                else:
                    self.kill(env, kills)
                roots = self._roots_view(env)
                self.geo.extern_roots(name, var_args, roots)
                for k in [k for k in env if k.endswith(_AREA_KEY)]:
                    env.pop(k)
                for var, area in roots.items():
                    env[var + _AREA_KEY] = n.Var(area)
                return n.ProcCall(name, args, var_args)
            case n.ExternCall(name, args, var_args):
                args = tuple(self.subst(a, env) for a in args)
                for v in var_args:
                    self.kill(env, self.geo.write_kills(lvalue_root(v)))
                roots = self._roots_view(env)
                self.geo.extern_roots(name, var_args, roots)
                for k in [k for k in env if k.endswith(_AREA_KEY)]:
                    env.pop(k)
                for var, area in roots.items():
                    env[var + _AREA_KEY] = n.Var(area)
                return n.ExternCall(name, args, var_args)
            case n.ActionCall(name):
                resolved = self.resolve_call(name, env)
                if resolved is not None:
                    if self.pending:
                        self.pending[-1].append((resolved.name, dict(env)))
                    env.clear()
                    return resolved
                if self.pending:
                    self.pending[-1].append((name, dict(env)))
                env.clear()
                return s
            case n.ActionSystem(start, actions):
                return self._system(s, env)
            case _:
                return s

    def _system(self, system: n.ActionSystem, env: Env) -> n.Stmt:
        """Propagate across actions: join entry states over all call sites."""
        table = dict(system.actions)
        self.actions.append(table)
        entries: dict[str, Env | None] = {system.start: dict(env)}
        converged = False
        for _ in range(_SET_CAP * 8 * len(table) + 64):
            changed = False
            for name in list(table):
                if entries.get(name) is None:
                    continue
                self.pending.append([])
                self.stmt(table[name], dict(entries[name]))
                for callee, cenv in self.pending.pop():
                    if callee not in table:
                        continue
                    old = entries.get(callee)
                    merged = dict(cenv) if old is None else \
                        {k: j for k, v in old.items()
                         if (j := _join_values(v, cenv.get(k))) is not None}
                    if merged != old:
                        entries[callee] = merged
                        changed = True
            if not changed:
                converged = True
                break
        if not converged:
            # stale entry facts would license wrong folds; leave it alone
            self.actions.pop()
            env.clear()
            return system
        new_actions = []
        for name, body in system.actions:
            seen = entries.get(name)
            new_actions.append((name, self.stmt(body, dict(seen) if seen else {})))
        self.actions.pop()
        env.clear()
        return n.ActionSystem(system.start, tuple(new_actions))

    def resolve_call(self, name: str, env: Env) -> n.ActionCall | None:
        """Fold `call name` through a pure selector action (dispatch)."""
        if not env:
            return None
        for table in reversed(self.actions):
            if name in table:
                body = table[name]
                break
        else:
            return None
        if not pure_selector(body):
            return None
        folded = simplify_statement(self._fold_only(body, env))
        if isinstance(folded, n.ActionCall) and folded.name != name:
            return folded
        return None

    def _fold_only(self, s: n.Stmt, env: Env) -> n.Stmt:
        match s:
            case n.If(cond, then, els):
                return n.If(self.subst_cond(cond, env),
                            self._fold_only(then, env), self._fold_only(els, env))
            case n.Sequence(items):
                return n.seq(*(self._fold_only(i, env) for i in items))
            case _:
                return s


def _trailing_literals(branch: n.Stmt) -> Env:
    """Literal assignments that end every run through the branch."""
    items = branch.items if isinstance(branch, n.Sequence) else (branch,)
    out: Env = {}
    for item in reversed(items):
        match item:
            case n.Assign(n.Var(name), (n.IntLit() | n.StrLit()) as lit):
                out.setdefault(name, lit)
            case _:
                break
    return out


def _merge_constant_tests(s: n.Stmt, avoid: set[str]) -> n.Stmt:
    """Push a flag test into the conditional that just set the flag.

    if c then ... f:=0 else ... f:=1 fi; if f=0 then A else B fi
    expands the test into both branches, where propagation folds it.
    """
    kids = n.children(s)
    if kids:
        s = n.with_children(
            s, tuple(_merge_constant_tests(c, avoid) for c in kids))
    if not isinstance(s, n.Sequence):
        return s
    items = list(s.items)
    i = 0
    while i + 1 < len(items):
        a, b = items[i], items[i + 1]
        if isinstance(a, n.If) and isinstance(b, n.If):
            need = cond_vars(b.cond)
            if need and not (need & avoid) \
                    and need <= set(_trailing_literals(a.then)) \
                    and need <= set(_trailing_literals(a.els)):
                items[i] = n.If(a.cond, n.seq(a.then, b), n.seq(a.els, b))
                del items[i + 1]
                continue
        i += 1
    return n.seq(*items)


# --------------------------------------------------------------------------
# condition-code resolution: fold tests of cc back into the comparison
# that set it, so the register-machine idiom reads as a plain conditional


_CC_VAR = "cc"

_REL = {"=": operator.eq, "<>": operator.ne, "<": operator.lt,
        "<=": operator.le, ">": operator.gt, ">=": operator.ge}

_FLIP = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}

# which comparison holds exactly on a given set of condition codes,
# with 0 = equal, 1 = first operand low, 2 = first operand high
_CC_OPS = {
    frozenset({0}): "=", frozenset({1}): "<", frozenset({2}): ">",
    frozenset({0, 1}): "<=", frozenset({0, 2}): ">=", frozenset({1, 2}): "<>",
}


class _CCWalk:
    """Track the comparison that last set cc and rewrite tests of it.

    A definition survives until cc, any variable of either operand, or
    (for memory operands) any data area might be written.  Tests are
    rewritten to compare the operands directly; the defining assignment
    is left behind for dead-store removal.
    """

    def __init__(self, geo: _Geometry, summaries: dict[str, frozenset[str]]):
        self.geo = geo
        self.summaries = summaries

    def _writes(self, s: n.Stmt) -> set[str]:
        return written_vars(s, self.summaries, self.geo)

    def _define(self, x: n.Expr, y: n.Expr):
        names: set[str] = {_CC_VAR}
        mem = False

        def f(e: n.Expr) -> n.Expr:
            nonlocal mem
            if isinstance(e, n.Var):
                names.update(self.geo.write_kills(e.name))
            elif isinstance(e, n.MemRef):
                mem = True
            return e

        for operand in (x, y):
            map_expression(operand, f, lambda c: c)
        return (x, y, frozenset(names), mem)

    def _invalidate(self, dfn, writes: set[str]):
        if dfn is None:
            return None
        if writes & dfn[2]:
            return None
        if dfn[3] and writes & self.geo.all_members:
            return None
        return dfn

    def _rewrite_cond(self, c: n.Cond, dfn) -> n.Cond:
        if dfn is None:
            return c
        x, y = dfn[0], dfn[1]

        def fc(cc: n.Cond) -> n.Cond:
            if isinstance(cc, n.Compare):
                op, left, right = cc.op, cc.left, cc.right
                if (isinstance(right, n.Var) and right.name == _CC_VAR
                        and isinstance(left, n.IntLit)):
                    op, left, right = _FLIP.get(op, op), right, left
                if (isinstance(left, n.Var) and left.name == _CC_VAR
                        and isinstance(right, n.IntLit)):
                    states = frozenset(v for v in (0, 1, 2)
                                       if _REL[op](v, right.value))
                    if not states:
                        return n.BoolLit(False)
                    if len(states) == 3:
                        return n.BoolLit(True)
                    return n.Compare(_CC_OPS[states], x, y)
            return cc

        return map_condition(c, lambda e: e, fc)

    def stmt(self, s: n.Stmt, dfn):
        """Rewrite s given the live cc definition; returns (s, after)."""
        match s:
            case n.Sequence(items):
                out = []
                for item in items:
                    item, dfn = self.stmt(item, dfn)
                    out.append(item)
                return n.seq(*out), dfn
            case n.Assign(n.Var(tname), n.ExternFunc(fname, fargs)) if (
                    tname == _CC_VAR and fname in ("cp", "clc")
                    and len(fargs) == 2):
                return s, self._define(fargs[0], fargs[1])
            case n.Assign():
                return s, self._invalidate(dfn, self._writes(s))
            case n.If(cond, then, els):
                cond = self._rewrite_cond(cond, dfn)
                then, d1 = self.stmt(then, dfn)
                els, d2 = self.stmt(els, dfn)
                return n.If(cond, then, els), d1 if d1 == d2 else None
            case n.While(cond, body):
                dfn = self._invalidate(dfn, self._writes(body))
                body, _ = self.stmt(body, dfn)
                return n.While(self._rewrite_cond(cond, dfn), body), dfn
            case n.Do(body):
                dfn = self._invalidate(dfn, self._writes(body))
                body, _ = self.stmt(body, dfn)
                return n.Do(body), dfn
            case n.For(var, start, stop, step, body):
                dfn = self._invalidate(dfn, self._writes(body) | {var})
                body, _ = self.stmt(body, dfn)
                return n.For(var, start, stop, step, body), dfn
            case n.VarBlock(inits, body):
                dfn = self._invalidate(dfn, {name for name, _ in inits})
                body, dfn = self.stmt(body, dfn)
                return n.VarBlock(inits, body), dfn
            case n.ActionSystem(start, actions):
                rebuilt = tuple((name, self.stmt(body, None)[0])
                                for name, body in actions)
                return n.ActionSystem(start, rebuilt), None
            case _:
                return s, self._invalidate(dfn, self._writes(s))


@register("constant_propagate", "equivalence")
def constant_propagate(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Propagate literal values, fold guards, prune dead branches.

    Also resolves calls through pure selector actions when the selector
    variable is known, and merges flag tests into the conditionals that
    assigned the flag.  Best effort: always applicable, idempotent once
    the program stops changing.
    """
    current = program
    for _ in range(25):
        prop = _Prop(current)
        cc = _CCWalk(prop.geo, prop.summaries)
        body = prop.stmt(current.body, entry_env(current))
        body = simplify_statement(_merge_constant_tests(
            cc.stmt(body, None)[0], prop.layout_names))
        procs = []
        for p in current.procs:
            prop_p = _Prop(current)
            p_body = cc.stmt(prop_p.stmt(p.body, {}), None)[0]
            procs.append(replace(p, body=simplify_statement(
                _merge_constant_tests(p_body, prop_p.layout_names))))
        nxt = replace(current, body=body, procs=tuple(procs))
        if nxt == current:
            break
        current = nxt
    return current


def _branch_items(s: n.Stmt) -> tuple[n.Stmt, ...]:
    if isinstance(s, n.Sequence):
        return s.items
    if s == n.Skip():
        return ()
    return (s,)


@register("factor_common_suffix", "equivalence", params=("count",))
def factor_common_suffix(ctx: Ctx, program: n.Program, target: Target,
                         count: int | None = None) -> n.Program:
    """Move a suffix common to both branches after the conditional."""
    node = target_node(program, target)
    if not isinstance(node, n.If):
        raise NotApplicable("target is not a conditional")
    then_items, els_items = _branch_items(node.then), _branch_items(node.els)
    shared = 0
    while (shared < min(len(then_items), len(els_items))
           and then_items[-1 - shared] == els_items[-1 - shared]):
        shared += 1
    if count is not None:
        ctx.require(count <= shared, "requested suffix is not common")
        shared = count
    ctx.require(shared >= 1, "branches share a trailing statement")
    suffix = then_items[len(then_items) - shared:]
    new_if = n.If(node.cond,
                  n.seq(*then_items[:len(then_items) - shared]),
                  n.seq(*els_items[:len(els_items) - shared]))
    return rewrite_target(program, target, n.seq(new_if, *suffix))


# --------------------------------------------------------------------------
# dead-store elimination: liveness by name, data areas tracked whole


_REG_NAME = re.compile(r"r\d{1,2}")


def _reads_of(e: n.Expr | n.Cond, geo: _Geometry) -> set[str]:
    """Names (area-granular) an expression or condition may read.

    An unresolved memory reference reads every area; taking an address
    counts as reading the area so its storage stays anchored.
    """
    out: set[str] = set()

    def f(x: n.Expr) -> n.Expr:
        if isinstance(x, n.Var):
            out.add(geo.n2a.get(x.name, x.name))
        elif isinstance(x, n.MemRef):
            area = pointer_area(x.addr, {}, geo.layout, geo.n2a)
            if area is not None:
                out.add(area)
            else:
                out.update(geo.members)
        return x

    def fc(c: n.Cond) -> n.Cond:
        if isinstance(c, n.CondVar):
            out.add(geo.n2a.get(c.name, c.name))
        return c

    if isinstance(e, n.Cond):
        map_condition(e, f, fc)
    else:
        map_expression(e, f, fc)
    return out


def _scope_reads(body: n.Stmt, geo: _Geometry,
                 every: frozenset[str]) -> tuple[set[str], list[str]]:
    """Every name a statement may read, plus the procedures it calls."""
    reads: set[str] = set()
    calls: list[str] = []
    for _, s in n.walk(body):
        match s:
            case n.Assign(target, value):
                reads |= _reads_of(value, geo)
                if not isinstance(target, n.Var):
                    reads |= _reads_of(target, geo)
            case n.If(cond, _, _) | n.While(cond, _):
                reads |= _reads_of(cond, geo)
            case n.For(_, start, stop, step, _):
                for e in (start, stop, step):
                    reads |= _reads_of(e, geo)
            case n.VarBlock(inits, _):
                for _, e in inits:
                    reads |= _reads_of(e, geo)
            case n.ProcCall(name, args, var_args):
                calls.append(name)
                for e in args + var_args:
                    reads |= _reads_of(e, geo)
            case n.ExternCall(_, args, var_args):
                for e in args + var_args:
                    reads |= _reads_of(e, geo)
            case n.ActionCall() | n.ActionSystem():
                reads |= set(every)
            case _:
                pass
    return reads, calls


def _all_names(program: n.Program, geo: _Geometry) -> frozenset[str]:
    names = {"output", DEST_VAR, RET_REG, _CC_VAR}
    names |= set(geo.n2a) | set(geo.members)
    bodies = [program.body] + [p.body for p in program.procs]
    for body in bodies:
        for e in n.walk_exprs(body):
            if isinstance(e, (n.Var, n.CondVar)):
                names.add(e.name)
        for _, s in n.walk(body):
            if isinstance(s, n.For):
                names.add(s.var)
            elif isinstance(s, n.VarBlock):
                names.update(name for name, _ in s.inits)
    for p in program.procs:
        names |= set(p.params) | set(p.var_params)
    return frozenset(names)


def _proc_reads(program: n.Program, geo: _Geometry,
                every: frozenset[str]) -> dict[str, frozenset[str]]:
    """name -> variables a call may read, through nested calls."""
    direct: dict[str, set[str]] = {}
    callees: dict[str, list[str]] = {}
    for p in program.procs:
        reads, calls = _scope_reads(p.body, geo, every)
        direct[p.name] = reads - set(p.params) - set(p.var_params)
        callees[p.name] = calls
    for _ in range(len(program.procs) + 1):
        changed = False
        for name in direct:
            for callee in callees[name]:
                extra = direct.get(callee, set()) - direct[name]
                if extra:
                    direct[name] |= extra
                    changed = True
        if not changed:
            break
    return {name: frozenset(reads) for name, reads in direct.items()}


class _DeadStores:
    """Backward liveness walker that drops unobservable assignments.

    Liveness is per-name for plain variables and whole-area for
    layout-backed storage.  A store is removed only when its value is
    dead on every path onward and its right-hand side cannot fault or
    touch machine state, so removal never changes behaviour.
    """

    def __init__(self, program: n.Program):
        self.geo = _Geometry(program)
        self.every = _all_names(program, self.geo)
        self.read_sums = _proc_reads(program, self.geo, self.every)
        self.kinds: dict[str, str] = {}
        if self.geo.layout is not None:
            for a in self.geo.layout.areas:
                self.kinds[a.name] = a.kind
                for fld in a.fields:
                    self.kinds[fld.name] = fld.kind

    def canon(self, name: str) -> str:
        return self.geo.n2a.get(name, name)

    def expr_reads(self, e: n.Expr | n.Cond) -> set[str]:
        return _reads_of(e, self.geo)

    # -- right-hand sides that always evaluate and have no effects

    def safe_rhs(self, e: n.Expr) -> bool:
        match e:
            case n.IntLit() | n.StrLit():
                return True
            case n.Var(name):
                if _REG_NAME.fullmatch(name):
                    return True
                return self.kinds.get(name) not in (None, "packed")
            case n.BinOp(op, _, _) if op in ("+", "-", "*"):
                return self._safe_int(e)
            case n.ExternFunc("address_of", (n.Var(name),)):
                return name in self.geo.n2a
            case n.ExternFunc(fn, args) if fn in ("cp", "clc") and len(args) == 2:
                return all(self._comparable(x) for x in args)
            case n.MemRef(n.IntLit(av), n.IntLit(lv)):
                return (self.geo.layout is not None
                        and self.geo.layout.resolve(av, lv) is not None)
            case _:
                return False

    def _safe_int(self, e: n.Expr) -> bool:
        match e:
            case n.IntLit():
                return True
            case n.Var(name):
                return bool(_REG_NAME.fullmatch(name))
            case n.ExternFunc("address_of", (n.Var(name),)):
                return name in self.geo.n2a
            case n.BinOp(op, left, right) if op in ("+", "-", "*"):
                return self._safe_int(left) and self._safe_int(right)
            case _:
                return False

    def _comparable(self, e: n.Expr) -> bool:
        match e:
            case n.IntLit() | n.StrLit():
                return True
            case n.Var(name):
                return name in self.geo.n2a
            case n.FieldRef(n.Var(name), _):
                return name in self.geo.n2a
            case n.SliceExpr(n.Var(name), n.IntLit(), n.IntLit()):
                return name in self.geo.n2a
            case n.MemRef(addr, n.IntLit()):
                return self._safe_int(addr)
            case _:
                return False

    # -- the backward walk

    def _assign(self, s: n.Assign, live: set[str]) -> tuple[n.Stmt, set[str]]:
        target, value = s.target, s.value
        reads = self.expr_reads(value)
        match target:
            case n.Var(name):
                c = self.canon(name)
                if c not in live and self.safe_rhs(value):
                    return n.Skip(), set(live)
                before = set(live)
                if name not in self.geo.n2a:
                    before.discard(name)
                return s, before | reads
            case n.MemRef(n.IntLit(av), n.IntLit(lv)):
                hit = self.geo.layout.resolve(av, lv) \
                    if self.geo.layout is not None else None
                if (hit is not None and hit[0].name not in live
                        and self.safe_rhs(value)):
                    return n.Skip(), set(live)
                return s, live | reads
            case _:
                return s, live | reads | self.expr_reads(target)

    def stmt(self, s: n.Stmt, live: set[str],
             stack: list[set[str]]) -> tuple[n.Stmt, set[str]]:
        """Rewrite s given names live after it; returns (s, live before)."""
        match s:
            case n.Sequence(items):
                out = []
                for item in reversed(items):
                    item, live = self.stmt(item, live, stack)
                    out.append(item)
                return n.seq(*reversed(out)), live
            case n.Assign():
                return self._assign(s, live)
            case n.If(cond, then, els):
                then, lt = self.stmt(then, set(live), stack)
                els, le = self.stmt(els, set(live), stack)
                return n.If(cond, then, els), lt | le | self.expr_reads(cond)
            case n.While(cond, body):
                after = set(live)
                head = after | self.expr_reads(cond)
                for _ in range(len(self.every) + 2):
                    _, lb = self.stmt(body, set(head), [])
                    if lb <= head:
                        break
                    head |= lb
                body, _ = self.stmt(body, set(head), [])
                return n.While(cond, body), head
            case n.Do(body):
                after = set(live)
                head: set[str] = set()
                for _ in range(len(self.every) + 2):
                    _, lb = self.stmt(body, set(head), stack + [after])
                    if lb <= head:
                        break
                    head |= lb
                body, _ = self.stmt(body, set(head), stack + [after])
                return n.Do(body), head
            case n.For(var, start, stop, step, body):
                after = set(live)
                bounds = (self.expr_reads(start) | self.expr_reads(stop)
                          | self.expr_reads(step))
                around = after - {var}
                head: set[str] = set()
                for _ in range(len(self.every) + 2):
                    _, lb = self.stmt(body, head | around, [])
                    if lb <= head:
                        break
                    head |= lb
                body, _ = self.stmt(body, head | around, [])
                return (n.For(var, start, stop, step, body),
                        after | bounds | (head - {var}))
            case n.VarBlock(inits, body):
                body, lb = self.stmt(body, set(live), stack)
                reads: set[str] = set()
                for _, e in inits:
                    reads |= self.expr_reads(e)
                return n.VarBlock(inits, body), live | lb | reads
            case n.Exit(count):
                if 1 <= count <= len(stack):
                    return s, set(stack[-count])
                return s, set(self.every)
            case n.ProcCall(name, args, var_args):
                reads = {self.canon(x)
                         for x in self.read_sums.get(name, self.every)}
                for e in args + var_args:
                    reads |= self.expr_reads(e)
                return s, live | reads
            case n.ExternCall(_, args, var_args):
                reads = set()
                for e in args + var_args:
                    reads |= self.expr_reads(e)
                return s, live | reads
            case n.Skip() | n.Comment():
                return s, live
            case _:
                return s, set(self.every)


def _global_live(program: n.Program, ds: _DeadStores) -> set[str]:
    """Names whose value may reach an observation point, program-wide.

    Reads inside the right-hand side of a removable store only count
    when the store's own target is live, so a web of assignments that
    feed only each other (saved-register linkage) drops out together.
    """
    anchored: set[str] = {"output"}
    feeds: list[tuple[str, set[str]]] = []
    for body in [program.body] + [p.body for p in program.procs]:
        for _, s in n.walk(body):
            match s:
                case n.Assign(n.Var(name), value) if ds.safe_rhs(value):
                    feeds.append((ds.canon(name), ds.expr_reads(value)))
                case n.Assign(n.MemRef(n.IntLit(av), n.IntLit(lv)), value) if (
                        ds.geo.layout is not None
                        and ds.geo.layout.resolve(av, lv) is not None
                        and ds.safe_rhs(value)):
                    feeds.append((ds.geo.layout.resolve(av, lv)[0].name,
                                  ds.expr_reads(value)))
                case n.Assign(target, value):
                    anchored |= ds.expr_reads(value)
                    if not isinstance(target, n.Var):
                        anchored |= ds.expr_reads(target)
                case n.If(cond, _, _) | n.While(cond, _):
                    anchored |= ds.expr_reads(cond)
                case n.For(_, start, stop, step, _):
                    for e in (start, stop, step):
                        anchored |= ds.expr_reads(e)
                case n.VarBlock(inits, _):
                    for _, e in inits:
                        anchored |= ds.expr_reads(e)
                case n.ProcCall(_, args, var_args) | n.ExternCall(_, args, var_args):
                    for e in args + var_args:
                        anchored |= ds.expr_reads(e)
                case n.ActionCall() | n.ActionSystem():
                    anchored |= set(ds.every)
                case _:
                    pass
    live = set(anchored)
    for _ in range(len(feeds) + 1):
        grew = False
        for tgt, reads in feeds:
            if tgt in live and not reads <= live:
                live |= reads
                grew = True
        if not grew:
            break
    return live


def _dead_sweep(program: n.Program) -> n.Program:
    ds = _DeadStores(program)
    whole = _global_live(program, ds)
    body, _ = ds.stmt(program.body, {"output"}, [])
    procs = []
    for p in program.procs:
        end = set(whole) | {ds.canon(v) for v in p.var_params}
        p_body, _ = ds.stmt(p.body, end, [])
        procs.append(replace(p, body=p_body))
    return replace(program, body=body, procs=tuple(procs))


@register("remove_dead_assignments", "equivalence")
def remove_dead_assignments(ctx: Ctx, program: n.Program, target: Target) -> n.Program:
    """Drop assignments whose stored value no later read can observe.

    Complements remove_dead_var: that rule retires a whole variable,
    this one removes individual stores (including stores into resolved
    memory) that are overwritten or never read again.  Best effort:
    always applicable, stable at fixpoint.
    """
    current = program
    for _ in range(25):
        nxt = _dead_sweep(current)
        if nxt == current:
            break
        current = nxt
    return current
