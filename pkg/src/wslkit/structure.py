"""Structural calculus: depths, terminal values, and exit arithmetic.

The calculus works on one statement at a time.  A *unit* is a statement the
analysis does not look inside: assignments, calls, exits, and whole
while/for/var/action constructs (exits cannot cross their boundaries, so an
enclosing analysis may treat them as black boxes that either complete
normally or never return).  Sequences, conditionals and do-loops are
traversed.

For each unit position p the analysis records:

  depth(p)   do-loops of the analysed statement strictly enclosing p
  after(p)   what normal completion at p does: TERMINATE the whole statement,
             REPEAT some enclosing do-loop, or CONTINUE to a later statement
  tau(p)     -1 if the statement cannot finish at p; otherwise how many
             loops of the *surrounding context* are left when it finishes
             here (0 = plain normal termination)

Exits measure tau against depth: exit(n) at depth d leaves n - d context
loops when n > d; when n <= d it lands just after its n-th enclosing do-loop
and is terminal only if that landing point completes the statement.  A unit
with tau >= 0 is a *terminal*.

A useful consequence used throughout: a non-exit terminal always has
depth 0 and tau 0, because a completion chain cannot cross a do-loop
boundary; likewise a terminal exit with tau 0 satisfies n = depth exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from . import nodes as n
from .nodes import Path

TERMINATE = 0
REPEAT = -1
CONTINUE = None


@dataclass(frozen=True)
class Fact:
    """Termination facts for one unit position."""

    path: Path
    node: n.Stmt
    depth: int
    after: int | None
    tau: int  # -1 when the analysed statement cannot finish here

    @property
    def is_exit(self) -> bool:
        return isinstance(self.node, n.Exit)

    @property
    def is_terminal(self) -> bool:
        return self.tau >= 0


@dataclass(frozen=True)
class StructureFacts:
    units: tuple[Fact, ...]  # preorder
    root_tau: int  # max terminal tau, -1 when the statement never terminates

    @property
    def terminals(self) -> tuple[Fact, ...]:
        return tuple(f for f in self.units if f.is_terminal)

    def depth(self, path: Path) -> int:
        return self._at(path).depth

    def tau(self, path: Path) -> int:
        return self._at(path).tau

    def _at(self, path: Path) -> Fact:
        for f in self.units:
            if f.path == path:
                return f
        raise KeyError(f"no unit at {path}")


def analyze(root: n.Stmt) -> StructureFacts:
    out: list[Fact] = []

    def visit(node: n.Stmt, path: Path, dos: tuple[int | None, ...], after: int | None) -> None:
        match node:
            case n.Sequence(items):
                last = len(items) - 1
                for i, item in enumerate(items):
                    visit(item, path + (i,), dos, after if i == last else CONTINUE)
            case n.If(_, then, els):
                visit(then, path + (0,), dos, after)
                visit(els, path + (1,), dos, after)
            case n.Do(body):
                visit(body, path + (0,), dos + (after,), REPEAT)
            case n.Exit(count):
                depth = len(dos)
                if count > depth:
                    tau = count - depth
                elif count >= 1:
                    tau = 0 if dos[depth - count] == TERMINATE else -1
                else:  # transient exit(0) jumps to the end of the analysed statement
                    tau = 0 if depth == 0 else -1
                out.append(Fact(path, node, depth, after, tau))
            case n.ActionCall():
                # a call never returns, so the system cannot finish *at* it
                out.append(Fact(path, node, len(dos), after, -1))
            case _:
                tau = 0 if after == TERMINATE else -1
                out.append(Fact(path, node, len(dos), after, tau))

    visit(root, (), (), TERMINATE)
    taus = [f.tau for f in out if f.tau >= 0]
    return StructureFacts(tuple(out), max(taus) if taus else -1)


def terminals(root: n.Stmt) -> tuple[Fact, ...]:
    return analyze(root).terminals


def terminal_tau(root: n.Stmt) -> int:
    return analyze(root).root_tau


def is_proper_sequence(root: n.Stmt) -> bool:
    """True when no exit of root can leave an enclosing loop of the context."""
    return terminal_tau(root) <= 0


def loop_depth(root: n.Stmt, path: Path) -> int:
    """Number of do-loops strictly between root and the node at path."""
    depth = 0
    node = root
    for i in path:
        if isinstance(node, n.Do):
            depth += 1
        node = n.children(node)[i]
    return depth


# --------------------------------------------------------------------------
# selectors: a small closed predicate language over unit facts


class Selector:
    def matches(self, fact: Fact) -> bool:
        raise NotImplementedError


_CMP: dict[str, Callable[[int, int], bool]] = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class TauIs(Selector):
    op: str
    value: int

    def matches(self, fact: Fact) -> bool:
        return _CMP[self.op](fact.tau, self.value)


@dataclass(frozen=True)
class DepthIs(Selector):
    op: str
    value: int

    def matches(self, fact: Fact) -> bool:
        return _CMP[self.op](fact.depth, self.value)


@dataclass(frozen=True)
class IsExit(Selector):
    def matches(self, fact: Fact) -> bool:
        return fact.is_exit


@dataclass(frozen=True)
class PathIn(Selector):
    paths: frozenset[Path]

    def matches(self, fact: Fact) -> bool:
        return fact.path in self.paths


@dataclass(frozen=True)
class AllOf(Selector):
    parts: tuple[Selector, ...]

    def matches(self, fact: Fact) -> bool:
        return all(p.matches(fact) for p in self.parts)


@dataclass(frozen=True)
class AnyOf(Selector):
    parts: tuple[Selector, ...]

    def matches(self, fact: Fact) -> bool:
        return any(p.matches(fact) for p in self.parts)


@dataclass(frozen=True)
class NotSel(Selector):
    part: Selector

    def matches(self, fact: Fact) -> bool:
        return not self.part.matches(fact)


def path_set(paths: Iterable[Path]) -> Selector:
    return PathIn(frozenset(paths))


@dataclass(frozen=True)
class SubstitutionSpec:
    """What to do at selected terminal positions.

    The generator sees the position's facts and produces the new statement.
    At an exit position the result replaces the exit; elsewhere it is appended
    after the unit (splicing into the parent sequence, never nesting).
    A generator returning None leaves the position alone.
    """

    selector: Selector
    generator: Callable[[Fact], n.Stmt | None]


def substitute_paths(root: n.Stmt, edits: dict[Path, n.Stmt]) -> n.Stmt:
    """Apply independent replacements.  Paths must not nest inside each other.

    Later positions are rewritten first so sequence splices cannot shift the
    indices of edits still to come.
    """
    for p in edits:
        for q in edits:
            if p != q and p[: len(q)] == q:
                raise ValueError(f"nested edit paths {q} and {p}")
    for path in sorted(edits, reverse=True):
        root = n.replace_at(root, path, edits[path])
    return root


def global_substitute(root: n.Stmt, spec: SubstitutionSpec) -> n.Stmt:
    edits: dict[Path, n.Stmt] = {}
    for f in terminals(root):
        if not spec.selector.matches(f):
            continue
        new = spec.generator(f)
        if new is None:
            continue
        edits[f.path] = new if f.is_exit else n.seq(f.node, new)
    return substitute_paths(root, edits)


# --------------------------------------------------------------------------
# incrementation


def increment_selected(root: n.Stmt, by: int, selector: Selector) -> n.Stmt:
    """Push selected terminals `by` loop levels outward.

    Terminal exits grow their parameter by `by`; other selected terminals get
    an exit(by + depth) appended -- nothing when that count is zero, which
    keeps incrementing by zero the identity.
    """
    def gen(f: Fact) -> n.Stmt | None:
        if isinstance(f.node, n.Exit):
            return n.Exit(f.node.count + by)
        if by + f.depth > 0:
            return n.Exit(by + f.depth)
        return None

    return global_substitute(root, SubstitutionSpec(selector, gen))


def increment(root: n.Stmt, by: int) -> n.Stmt:
    """S + by."""
    return increment_selected(root, by, TauIs(">=", 0))


def partial_increment(root: n.Stmt, by: int, min_tau: int) -> n.Stmt:
    """S + (by, min_tau)."""
    if min_tau < 0:
        raise ValueError("minimum terminal value must be non-negative")
    return increment_selected(root, by, TauIs(">=", min_tau))


# --------------------------------------------------------------------------
# derived rewrites used by the transformation catalog


def expand_forwards(root: n.Stmt, path: Path, count: int = 0) -> n.Stmt:
    """Push statements after the conditional at `path` into its branches.

    ... if B then S1 else S2 fi; REST  ==  ... if B then S1; REST else S2; REST fi

    `count` limits how many following statements move; 0 takes them all.
    """
    cond = n.node_at(root, path)
    if not isinstance(cond, n.If):
        raise ValueError("expand_forwards targets a conditional")
    if not path:
        raise ValueError("the conditional has no following statements")
    parent = n.node_at(root, path[:-1])
    i = path[-1]
    if not isinstance(parent, n.Sequence) or i == len(parent.items) - 1:
        raise ValueError("the conditional has no following statements")
    stop = len(parent.items) if count <= 0 else i + 1 + count
    if stop > len(parent.items):
        raise ValueError(f"only {len(parent.items) - i - 1} statements follow")
    rest = parent.items[i + 1:stop]
    new_if = n.If(cond.cond, n.seq(cond.then, *rest), n.seq(cond.els, *rest))
    new_parent = n.seq(*parent.items[:i], new_if, *parent.items[stop:])
    return n.replace_at(root, path[:-1], new_parent)


def eliminate_exit0(root: n.Stmt) -> n.Stmt:
    """Remove transient exit(0) markers without changing behaviour.

    An exit(0) terminates the whole statement on the spot.  Followers in its
    own sequence are dead and dropped; followers of an enclosing conditional
    are first pushed into the branches (where the other branch still runs
    them); once nothing follows, the marker is a plain skip.
    """
    for _ in range(10_000):
        target = next(
            (f for f in analyze(root).units
             if isinstance(f.node, n.Exit) and f.node.count == 0),
            None,
        )
        if target is None:
            return root
        if target.depth != 0:
            raise ValueError(f"exit(0) under {target.depth} do-loops at {target.path}")
        path = target.path
        if path and isinstance(n.node_at(root, path[:-1]), n.Sequence):
            parent = n.node_at(root, path[:-1])
            assert isinstance(parent, n.Sequence)
            if path[-1] != len(parent.items) - 1:
                kept = n.seq(*parent.items[: path[-1] + 1])
                root = n.replace_at(root, path[:-1], kept)
                continue
        if target.after == TERMINATE:
            root = n.replace_at(root, path, n.Skip())
            continue
        # interior through an enclosing conditional: expand the nearest
        # ancestor that still has followers, then retry
        expanded = False
        for cut in range(len(path) - 1, 0, -1):
            q = path[:cut]
            parent = n.node_at(root, q[:-1])
            if isinstance(parent, n.Sequence) and q[-1] != len(parent.items) - 1:
                root = expand_forwards(root, q)
                expanded = True
                break
        if not expanded:
            raise ValueError(f"cannot discharge exit(0) at {path}")
    raise ValueError("exit(0) elimination did not converge")


def unroll_first_step(body: n.Stmt) -> n.Stmt:
    """One unrolled step of `do body od`.

    Each place where the body completes normally grows a copy of the whole
    loop; terminal exits drop one level because the loop they crossed is
    gone.  The loop copy planted for a terminal exit(n) under n do-loops has
    its own escaping exits raised by n so they clear those bypassed loops.
    """
    def loop_copy(extra: int) -> n.Stmt:
        return increment(n.Do(body), extra)

    edits: dict[Path, n.Stmt] = {}
    for f in terminals(body):
        if isinstance(f.node, n.Exit):
            if f.tau == 0:
                edits[f.path] = loop_copy(f.depth)
            else:
                edits[f.path] = n.Exit(f.node.count - 1)
        elif f.tau == 0:
            edits[f.path] = n.seq(f.node, loop_copy(f.depth))
    return eliminate_exit0(substitute_paths(body, edits))
