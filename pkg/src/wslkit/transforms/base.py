"""Rule registry and target addressing for program transformations.

A transformation rule has a name, a kind (equivalence, refinement or
abstraction), a checker and an applier.  Rules act on a *target*: a scope
(the main body or a named procedure) plus a path into that scope's
statement tree, using the same path convention as `nodes.node_at`.

Rules are written as a single function that validates its side conditions
and then builds the transformed program.  `check` runs the same function
and reports whether it got past validation, so the checker and the
applier can never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

from .. import nodes as n

Path = tuple[int, ...]


class NotApplicable(Exception):
    """Raised by a rule when its side conditions fail for the target."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Applicability:
    ok: bool
    reason: str = ""
    conditions: tuple[str, ...] = ()


@dataclass(frozen=True)
class Target:
    scope: str = "main"
    path: Path = ()

    def __str__(self) -> str:
        return format_target(self)


def parse_target(text: str) -> Target:
    """Parse `main`, `main:0.2`, `proc endgroup:1` into a Target."""
    text = text.strip()
    if ":" in text:
        scope, _, tail = text.rpartition(":")
        path = tuple(int(p) for p in tail.split(".")) if tail else ()
    else:
        scope, path = text, ()
    scope = scope.strip()
    if scope != "main" and not scope.startswith(("proc ", "funct ")):
        raise ValueError(f"bad target scope: {scope!r}")
    return Target(scope, path)


def format_target(target: Target) -> str:
    if not target.path:
        return target.scope
    return target.scope + ":" + ".".join(str(p) for p in target.path)


def scope_body(program: n.Program, scope: str) -> n.Stmt:
    if scope == "main":
        return program.body
    if scope.startswith("proc "):
        proc = program.proc(scope[5:])
        if proc is None:
            raise NotApplicable(f"no procedure named {scope[5:]}")
        return proc.body
    raise NotApplicable(f"bad scope: {scope!r}")


def with_scope_body(program: n.Program, scope: str, body: n.Stmt) -> n.Program:
    if scope == "main":
        return replace(program, body=body)
    name = scope[5:]
    procs = tuple(
        replace(p, body=body) if p.name == name else p for p in program.procs
    )
    return replace(program, procs=procs)


def target_node(program: n.Program, target: Target) -> n.Stmt:
    body = scope_body(program, target.scope)
    try:
        return n.node_at(body, target.path)
    except (IndexError, TypeError) as exc:
        raise NotApplicable(f"no statement at {target}") from exc


def rewrite_target(program: n.Program, target: Target, new: n.Stmt) -> n.Program:
    body = scope_body(program, target.scope)
    return with_scope_body(program, target.scope, n.replace_at(body, target.path, new))


class Ctx:
    """Collects discharged side conditions while a rule runs."""

    def __init__(self) -> None:
        self.conditions: list[str] = []

    def require(self, ok: bool, reason: str) -> None:
        if not ok:
            raise NotApplicable(reason)
        self.conditions.append(reason)

    def note(self, text: str) -> None:
        self.conditions.append(text)


RuleFn = Callable[..., n.Program]


@dataclass(frozen=True)
class Rule:
    name: str
    kind: str
    params: tuple[str, ...]
    doc: str
    fn: RuleFn = field(repr=False)

    def check(self, program: n.Program, target: Target, **args) -> Applicability:
        ctx = Ctx()
        try:
            self.fn(ctx, program, target, **args)
        except NotApplicable as exc:
            return Applicability(False, exc.reason, tuple(ctx.conditions))
        except TypeError as exc:
            return Applicability(False, f"bad arguments: {exc}", ())
        return Applicability(True, "", tuple(ctx.conditions))

    def apply(self, program: n.Program, target: Target, **args) -> n.Program:
        return self.fn(Ctx(), program, target, **args)


_REGISTRY: dict[str, Rule] = {}


def register(name: str, kind: str, params: tuple[str, ...] = ()):
    assert kind in ("equivalence", "refinement", "abstraction"), kind

    def deco(fn: RuleFn) -> Rule:
        rule = Rule(name, kind, params, (fn.__doc__ or "").strip(), fn)
        assert name not in _REGISTRY, f"duplicate rule {name}"
        _REGISTRY[name] = rule
        return rule

    return deco


def catalog() -> dict[str, Rule]:
    return dict(_REGISTRY)


def get_rule(name: str) -> Rule:
    if name not in _REGISTRY:
        raise KeyError(f"unknown transformation rule: {name}")
    return _REGISTRY[name]


def applicable_rules(program: n.Program, target: Target) -> list[tuple[str, Applicability]]:
    """Every registered zero-argument-checkable rule's verdict at target."""
    out = []
    for rule in _REGISTRY.values():
        try:
            verdict = rule.check(program, target)
        except Exception:
            continue
        out.append((rule.name, verdict))
    return out
