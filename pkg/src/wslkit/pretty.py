"""Canonical printer for the wide-spectrum language.

`render_program(parse_program(text))` is a fixpoint: the printer emits the one
canonical layout, and parsing it back yields the identical tree.  The printer
can also record, for every statement, which text span it occupies; the session
service ships those spans to clients so they can map clicks to tree paths.
"""

from __future__ import annotations

from . import nodes as n

COMPACT_WIDTH = 72
INDENT = "  "

# expression precedence tiers, loosest first
_ADD, _MUL, _MAPRED, _UNARY, _POSTFIX, _ATOM = 1, 2, 3, 4, 5, 6


def render_expression(e: n.Expr, level: int = _ADD) -> str:
    text, mine = _expr(e)
    if mine < level:
        return f"({text})"
    return text


def _expr(e: n.Expr) -> tuple[str, int]:
    match e:
        case n.IntLit(v):
            return (str(v), _ATOM) if v >= 0 else (f"-{-v}", _UNARY)
        case n.StrLit(b):
            return _string(b), _ATOM
        case n.Var(name):
            return name, _ATOM
        case n.FieldRef(base, name):
            return f"{render_expression(base, _POSTFIX)}.{name}", _POSTFIX
        case n.ListLit(items):
            return "[" + ", ".join(render_expression(x) for x in items) + "]", _ATOM
        case n.BinOp(op, left, right):
            tier = _MUL if op == "*" else _ADD
            lt = render_expression(left, tier)
            rt = render_expression(right, tier + 1)
            return f"{lt} {op} {rt}", tier
        case n.Neg(operand):
            return f"-{render_expression(operand, _UNARY)}", _UNARY
        case n.Len(operand):
            return f"len({render_expression(operand)})", _POSTFIX
        case n.IndexExpr(base, index):
            return f"{render_expression(base, _POSTFIX)}[{render_expression(index)}]", _POSTFIX
        case n.SliceExpr(base, lo, hi):
            bt = render_expression(base, _POSTFIX)
            return f"{bt}[{render_expression(lo)} .. {render_expression(hi)}]", _POSTFIX
        case n.MemRef(addr, length):
            return f"a[{render_expression(addr)}, {render_expression(length)}]", _POSTFIX
        case n.MapExpr(func, operand):
            return f"{func} map {render_expression(operand, _MAPRED)}", _MAPRED
        case n.ReduceExpr(op, operand):
            return f"{op} reduce {render_expression(operand, _MAPRED)}", _MAPRED
        case n.SplitExpr(operand, pred):
            return f"split({render_expression(operand)}, {pred})", _POSTFIX
        case n.CallExpr(name, args):
            return f"{name}({', '.join(render_expression(x) for x in args)})", _POSTFIX
        case n.ExternFunc(name, args):
            return f"!XF {name}({', '.join(render_expression(x) for x in args)})", _ATOM
        case n.IfExpr(cond, then, els):
            return (
                f"if {render_condition(cond)} then {render_expression(then)}"
                f" else {render_expression(els)} fi",
                _ATOM,
            )
    raise TypeError(f"not an expression: {e!r}")


def _string(b: bytes) -> str:
    text = b.decode("ascii", errors="replace")
    printable = all(32 <= c <= 126 for c in b) and '"' not in text
    if printable and not text.startswith("hex 0x"):
        return f'"{text}"'
    return f'"hex 0x{b.hex()}"'


# condition precedence tiers
_OR, _AND, _NOT, _CATOM = 1, 2, 3, 4


def render_condition(c: n.Cond, level: int = _OR) -> str:
    text, mine = _cond(c)
    if mine < level:
        return f"({text})"
    return text


def _cond(c: n.Cond) -> tuple[str, int]:
    match c:
        case n.BoolLit(v):
            return ("true" if v else "false"), _CATOM
        case n.Compare(op, left, right):
            return f"{render_expression(left)} {op} {render_expression(right)}", _CATOM
        case n.And(left, right):
            return f"{render_condition(left, _AND)} and {render_condition(right, _NOT)}", _AND
        case n.Or(left, right):
            return f"{render_condition(left, _OR)} or {render_condition(right, _AND)}", _OR
        case n.Not(operand):
            return f"not {render_condition(operand, _NOT)}", _NOT
        case n.CondVar(name):
            return name, _CATOM
        case n.ExternCond(name, args):
            return f"!XC {name}({', '.join(render_expression(x) for x in args)})", _CATOM
        case n.CondCall(name, args):
            return f"{name}({', '.join(render_expression(x) for x in args)})", _CATOM
    raise TypeError(f"not a condition: {c!r}")


Span = tuple[int, int, int, int]  # start line, start col, end line, end col (1-based)


class _Printer:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.spans: dict[str, Span] = {}

    def line(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text if text else "")

    def mark(self, key: str, start_line: int, start_depth: int) -> None:
        end = self.lines[-1]
        self.spans[key] = (start_line + 1, start_depth * len(INDENT) + 1,
                           len(self.lines), len(end))

    # -- statements --------------------------------------------------------

    def stmt(self, s: n.Stmt, depth: int, key: str) -> None:
        start = len(self.lines)
        compact = _compact(s)
        if compact is not None and len(compact) + depth * len(INDENT) <= COMPACT_WIDTH:
            self.line(depth, compact)
            self.mark(key, start, depth)
            return
        match s:
            case n.Sequence(items):
                for i, item in enumerate(items):
                    self.stmt(item, depth, f"{key}.{i}" if key else str(i))
                    if i < len(items) - 1:
                        self.lines[-1] += ";"
            case n.If():
                self._if(s, depth, key, "if")
            case n.While(cond, body):
                self.line(depth, f"while {render_condition(cond)} do")
                self.stmt(body, depth + 1, f"{key}.0" if key else "0")
                self.line(depth, "od")
            case n.Do(body):
                self.line(depth, "do")
                self.stmt(body, depth + 1, f"{key}.0" if key else "0")
                self.line(depth, "od")
            case n.For(var, start_e, stop, step, body):
                head = f"for {var} := {render_expression(start_e)} to {render_expression(stop)}"
                if step != n.IntLit(1):
                    head += f" step {render_expression(step)}"
                self.line(depth, head + " do")
                self.stmt(body, depth + 1, f"{key}.0" if key else "0")
                self.line(depth, "od")
            case n.VarBlock(inits, body):
                decls = ", ".join(f"{v} := {render_expression(e)}" for v, e in inits)
                self.line(depth, f"var {decls} :")
                self.stmt(body, depth + 1, f"{key}.0" if key else "0")
                self.line(depth, "end")
            case n.ActionSystem(start_name, actions):
                self.line(depth, f"actions {start_name} :")
                for i, (name, body) in enumerate(actions):
                    self.line(depth + 1, f"{name} ==")
                    self.stmt(body, depth + 2, f"{key}.{i}" if key else str(i))
                    self.line(depth + 1, "end")
                self.line(depth, "endactions")
            case _:
                self.line(depth, _simple(s))
        self.mark(key, start, depth)

    def _if(self, s: n.If, depth: int, key: str, intro: str) -> None:
        self.line(depth, f"{intro} {render_condition(s.cond)} then")
        self.stmt(s.then, depth + 1, f"{key}.0" if key else "0")
        els = s.els
        if isinstance(els, n.If):
            els_key = f"{key}.1" if key else "1"
            start = len(self.lines)
            self._if(els, depth, els_key, "elsif")
            self.mark(els_key, start, depth)
            return
        if not isinstance(els, n.Skip):
            self.line(depth, "else")
            self.stmt(els, depth + 1, f"{key}.1" if key else "1")
        self.line(depth, "fi")


def _simple(s: n.Stmt) -> str:
    text = _compact(s)
    if text is None:
        raise TypeError(f"not a simple statement: {s!r}")
    return text


def _compact(s: n.Stmt) -> str | None:
    """One-line rendering, or None for statements that must span lines."""
    match s:
        case n.Skip():
            return "skip"
        case n.Comment(text):
            return f"(* {text} *)"
        case n.Exit(count):
            return "exit" if count == 1 else f"exit({count})"
        case n.Assign(target, value):
            return f"{render_expression(target)} := {render_expression(value)}"
        case n.ActionCall(name):
            return f"call {name}"
        case n.ProcCall(name, args, var_args):
            return f"{name}({_arglist(args, var_args)})"
        case n.ExternCall(name, args, var_args):
            return f"!P {name}({_arglist(args, var_args)})"
        case n.If(cond, then, els) if not isinstance(els, n.If):
            tc = _compact(then) if not isinstance(then, n.Sequence) else None
            if tc is None:
                return None
            head = f"if {render_condition(cond)} then {tc}"
            if isinstance(els, n.Skip):
                return head + " fi"
            ec = _compact(els) if not isinstance(els, n.Sequence) else None
            if ec is None:
                return None
            return f"{head} else {ec} fi"
        case _:
            return None


def _arglist(args: tuple[n.Expr, ...], var_args: tuple[n.Expr, ...]) -> str:
    parts = ", ".join(render_expression(x) for x in args)
    if var_args:
        vtext = "var " + ", ".join(render_expression(x) for x in var_args)
        parts = f"{parts} {vtext}" if parts else vtext
    return parts


def render_statement(s: n.Stmt, depth: int = 0) -> str:
    p = _Printer()
    p.stmt(s, depth, "")
    return "\n".join(p.lines)


def render_program(program: n.Program) -> str:
    text, _ = render_program_with_spans(program)
    return text


def render_program_with_spans(program: n.Program) -> tuple[str, dict[str, Span]]:
    """Render and return (text, spans).

    Span keys are "main" / "main.0.1" for body paths and "proc name.0" /
    "funct name" for the where-clause definitions.
    """
    p = _Printer()
    has_defs = bool(program.functs or program.procs)
    if not has_defs:
        p.stmt(program.body, 0, "main")
        return "\n".join(p.lines) + "\n", p.spans
    p.line(0, "begin")
    p.stmt(program.body, 1, "main")
    p.line(0, "where")
    for proc in program.procs:
        params = ", ".join(proc.params)
        if proc.var_params:
            vtext = "var " + ", ".join(proc.var_params)
            params = f"{params} {vtext}" if params else vtext
        p.line(1, f"proc {proc.name}({params}) ==")
        p.stmt(proc.body, 2, f"proc {proc.name}")
        p.line(1, "end")
    for f in program.functs:
        start = len(p.lines)
        p.line(1, f"funct {f.name}({', '.join(f.params)}) ==")
        body = (
            render_condition(f.body) if isinstance(f.body, n.Cond)
            else render_expression(f.body)
        )
        p.line(2, body)
        p.line(1, "end")
        p.mark(f"funct {f.name}", start, 1)
    p.line(0, "end")
    return "\n".join(p.lines) + "\n", p.spans
