"""Recursive-descent parser for the surface syntax.

The grammar is documented in docs/wsl-grammar.md.  The token stream is a flat
list, so speculative parses (parenthesised conditions versus expressions,
funct bodies that may be either) are handled by saving and restoring the
cursor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import nodes as n

KEYWORDS = {
    "skip", "exit", "if", "then", "elsif", "else", "fi", "while", "do", "od",
    "for", "to", "step", "var", "end", "call", "actions", "endactions",
    "proc", "funct", "where", "begin", "not", "and", "or", "true", "false",
    "map", "reduce",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\(\*.*?\*\))
  | (?P<bang>![A-Z]+)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"]*")
  | (?P<op>:=|==|\+\+|\.\.|<=|>=|<>|[=<>+\-*()\[\],;:.])
    """,
    re.VERBOSE | re.DOTALL,
)

COMPARE_OPS = {"=", "<>", "<", "<=", ">", ">="}


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # "num" | "name" | "kw" | "string" | "op" | "bang" | "comment" | "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup or ""
        tok = m.group()
        col = pos - line_start + 1
        if kind == "name" and tok in KEYWORDS:
            kind = "kw"
        if kind != "ws":
            out.append(Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, len(text) - line_start + 1))
    return out


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- cursor helpers ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def at(self, text: str, ahead: int = 0) -> bool:
        return self.peek(ahead).text == text and self.peek(ahead).kind in ("kw", "op", "bang")

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            tok = self.peek()
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return self.advance()

    def expect_name(self) -> str:
        tok = self.peek()
        if tok.kind != "name":
            raise ParseError(f"expected a name, found {tok.text!r}", tok.line, tok.col)
        self.advance()
        return tok.text

    def fail(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message + f" (found {tok.text!r})", tok.line, tok.col)

    # -- program -----------------------------------------------------------

    def parse_program(self) -> n.Program:
        has_begin = self.accept("begin")
        body = self.parse_stmts()
        functs: list[n.FunctDef] = []
        procs: list[n.ProcDef] = []
        if self.accept("where"):
            while not self.at("end"):
                if self.at("proc"):
                    procs.append(self.parse_proc_def())
                elif self.at("funct"):
                    functs.append(self.parse_funct_def())
                else:
                    raise self.fail("expected a proc or funct definition")
            self.expect("end")
        elif has_begin:
            self.expect("end")
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
        return n.Program(body=body, functs=tuple(functs), procs=tuple(procs))

    def parse_proc_def(self) -> n.ProcDef:
        self.expect("proc")
        name = self.expect_name()
        self.expect("(")
        params: list[str] = []
        var_params: list[str] = []
        if not self.at(")"):
            if not self.at("var"):
                params.append(self.expect_name())
                while self.accept(","):
                    params.append(self.expect_name())
            if self.accept("var"):
                var_params.append(self.expect_name())
                while self.accept(","):
                    var_params.append(self.expect_name())
        self.expect(")")
        self.expect("==")
        body = self.parse_stmts()
        self.expect("end")
        return n.ProcDef(name, tuple(params), tuple(var_params), body)

    def parse_funct_def(self) -> n.FunctDef:
        self.expect("funct")
        name = self.expect_name()
        self.expect("(")
        params: list[str] = []
        if not self.at(")"):
            params.append(self.expect_name())
            while self.accept(","):
                params.append(self.expect_name())
        self.expect(")")
        self.expect("==")
        save = self.pos
        try:
            body: n.Expr | n.Cond = self.parse_cond()
            if not self.at("end"):
                raise self.fail("expected 'end'")
        except ParseError:
            self.pos = save
            body = self.parse_expr()
        self.expect("end")
        return n.FunctDef(name, tuple(params), body)

    # -- statements ----------------------------------------------------------

    STMT_STOPPERS = {"fi", "else", "elsif", "od", "end", "endactions", "where", ""}

    def parse_stmts(self) -> n.Stmt:
        items = [self.parse_stmt()]
        while self.accept(";"):
            if self.peek().text in self.STMT_STOPPERS and self.peek().kind != "name":
                break
            items.append(self.parse_stmt())
        return n.seq(*items)

    def parse_stmt(self) -> n.Stmt:
        tok = self.peek()
        if tok.kind == "comment":
            self.advance()
            return n.Comment(tok.text[2:-2].strip())
        if tok.kind == "kw":
            handler = {
                "skip": self._stmt_skip,
                "exit": self._stmt_exit,
                "if": self._stmt_if,
                "while": self._stmt_while,
                "do": self._stmt_do,
                "for": self._stmt_for,
                "var": self._stmt_varblock,
                "call": self._stmt_call,
                "actions": self._stmt_actions,
            }.get(tok.text)
            if handler is None:
                raise self.fail("expected a statement")
            return handler()
        if tok.kind == "bang":
            if tok.text != "!P":
                raise self.fail("only !P calls may appear in statement position")
            self.advance()
            name = self.expect_name()
            args, var_args = self._parse_call_args()
            return n.ExternCall(name, args, var_args)
        if tok.kind == "name":
            if self.peek(1).text == "(" and self.peek(1).kind == "op":
                name = self.advance().text
                args, var_args = self._parse_call_args()
                return n.ProcCall(name, args, var_args)
            target = self.parse_postfix(n.Var(self.advance().text))
            self.expect(":=")
            return n.Assign(target, self.parse_expr())
        raise self.fail("expected a statement")

    def _stmt_skip(self) -> n.Stmt:
        self.expect("skip")
        return n.Skip()

    def _stmt_exit(self) -> n.Stmt:
        self.expect("exit")
        count = 1
        if self.accept("("):
            tok = self.peek()
            if tok.kind != "num":
                raise self.fail("exit takes a literal count")
            count = int(self.advance().text)
            self.expect(")")
        return n.Exit(count)

    def _stmt_if(self) -> n.Stmt:
        self.expect("if")
        return self._if_tail()

    def _if_tail(self) -> n.Stmt:
        cond = self.parse_cond()
        self.expect("then")
        then = self.parse_stmts()
        if self.accept("elsif"):
            node = n.If(cond, then, self._if_tail())
            return node
        els: n.Stmt = n.Skip()
        if self.accept("else"):
            els = self.parse_stmts()
        self.expect("fi")
        return n.If(cond, then, els)

    def _stmt_while(self) -> n.Stmt:
        self.expect("while")
        cond = self.parse_cond()
        self.expect("do")
        body = self.parse_stmts()
        self.expect("od")
        return n.While(cond, body)

    def _stmt_do(self) -> n.Stmt:
        self.expect("do")
        body = self.parse_stmts()
        self.expect("od")
        return n.Do(body)

    def _stmt_for(self) -> n.Stmt:
        self.expect("for")
        var = self.expect_name()
        self.expect(":=")
        start = self.parse_expr()
        self.expect("to")
        stop = self.parse_expr()
        step: n.Expr = n.IntLit(1)
        if self.accept("step"):
            step = self.parse_expr()
        self.expect("do")
        body = self.parse_stmts()
        self.expect("od")
        return n.For(var, start, stop, step, body)

    def _stmt_varblock(self) -> n.Stmt:
        self.expect("var")
        inits = []
        while True:
            name = self.expect_name()
            self.expect(":=")
            inits.append((name, self.parse_expr()))
            if not self.accept(","):
                break
        self.expect(":")
        body = self.parse_stmts()
        self.expect("end")
        return n.VarBlock(tuple(inits), body)

    def _stmt_call(self) -> n.Stmt:
        self.expect("call")
        return n.ActionCall(self.expect_name())

    def _stmt_actions(self) -> n.Stmt:
        self.expect("actions")
        start = self.expect_name()
        self.expect(":")
        actions: list[tuple[str, n.Stmt]] = []
        while not self.at("endactions"):
            name = self.expect_name()
            self.expect("==")
            body = self.parse_stmts()
            self.expect("end")
            actions.append((name, body))
        self.expect("endactions")
        return n.ActionSystem(start, tuple(actions))

    def _parse_call_args(self) -> tuple[tuple[n.Expr, ...], tuple[n.Expr, ...]]:
        self.expect("(")
        args: list[n.Expr] = []
        var_args: list[n.Expr] = []
        if not self.at(")"):
            if not self.at("var"):
                args.append(self.parse_expr())
                while self.accept(","):
                    args.append(self.parse_expr())
            if self.accept("var"):
                var_args.append(self.parse_expr())
                while self.accept(","):
                    var_args.append(self.parse_expr())
        self.expect(")")
        return tuple(args), tuple(var_args)

    # -- conditions ----------------------------------------------------------

    def parse_cond(self) -> n.Cond:
        left = self.parse_cond_and()
        while self.accept("or"):
            left = n.Or(left, self.parse_cond_and())
        return left

    def parse_cond_and(self) -> n.Cond:
        left = self.parse_cond_not()
        while self.accept("and"):
            left = n.And(left, self.parse_cond_not())
        return left

    def parse_cond_not(self) -> n.Cond:
        if self.accept("not"):
            return n.Not(self.parse_cond_not())
        return self.parse_cond_atom()

    _COND_BREAKERS = COMPARE_OPS | {"+", "-", "*", "++", "[", ".", "..", "map", "reduce"}

    def parse_cond_atom(self) -> n.Cond:
        tok = self.peek()
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.advance()
            return n.BoolLit(tok.text == "true")
        if tok.kind == "bang" and tok.text == "!XC":
            self.advance()
            name = self.expect_name()
            args, var_args = self._parse_call_args()
            if var_args:
                raise self.fail("!XC calls take no var arguments")
            return n.ExternCond(name, args)
        if self.at("("):
            save = self.pos
            try:
                self.expect("(")
                inner = self.parse_cond()
                self.expect(")")
                if self.peek().text not in self._COND_BREAKERS:
                    return inner
            except ParseError:
                pass
            self.pos = save
        left = self.parse_expr()
        op = self.peek().text
        if self.peek().kind in ("op", "kw") and op in COMPARE_OPS:
            self.advance()
            return n.Compare(op, left, self.parse_expr())
        if isinstance(left, n.CallExpr):
            return n.CondCall(left.name, left.args)
        if isinstance(left, n.Var):
            return n.CondVar(left.name)
        raise self.fail("expected a condition")

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> n.Expr:
        left = self.parse_mul()
        while self.peek().kind == "op" and self.peek().text in ("+", "-", "++"):
            op = self.advance().text
            left = n.BinOp(op, left, self.parse_mul())
        return left

    def parse_mul(self) -> n.Expr:
        left = self.parse_mapred()
        while self.at("*"):
            self.advance()
            left = n.BinOp("*", left, self.parse_mapred())
        return left

    def parse_mapred(self) -> n.Expr:
        tok, nxt = self.peek(), self.peek(1)
        if tok.kind == "name" and nxt.text == "map" and nxt.kind == "kw":
            self.advance(), self.advance()
            return n.MapExpr(tok.text, self.parse_mapred())
        if nxt.text == "reduce" and nxt.kind == "kw" and (
            tok.kind == "name" or (tok.kind == "op" and tok.text in ("+", "*", "++"))
        ):
            self.advance(), self.advance()
            return n.ReduceExpr(tok.text, self.parse_mapred())
        return self.parse_unary()

    def parse_unary(self) -> n.Expr:
        if self.at("-"):
            self.advance()
            operand = self.parse_unary()
            if isinstance(operand, n.IntLit):
                return n.IntLit(-operand.value)
            return n.Neg(operand)
        return self.parse_postfix(self.parse_atom())

    def parse_postfix(self, expr: n.Expr) -> n.Expr:
        while True:
            if self.at("(") and isinstance(expr, n.Var):
                name = expr.name
                args, var_args = self._parse_call_args()
                if var_args:
                    raise self.fail("function application takes no var arguments")
                if name == "len":
                    if len(args) != 1:
                        raise self.fail("len takes one argument")
                    expr = n.Len(args[0])
                elif name == "split":
                    if len(args) != 2 or not isinstance(args[1], n.Var):
                        raise self.fail("split takes a list and a funct name")
                    expr = n.SplitExpr(args[0], args[1].name)
                else:
                    expr = n.CallExpr(name, args)
            elif self.at("["):
                self.advance()
                first = self.parse_expr()
                if self.accept(","):
                    if not (isinstance(expr, n.Var) and expr.name == "a"):
                        raise self.fail("byte slices apply only to the memory array a")
                    length = self.parse_expr()
                    self.expect("]")
                    expr = n.MemRef(first, length)
                elif self.accept(".."):
                    hi = self.parse_expr()
                    self.expect("]")
                    expr = n.SliceExpr(expr, first, hi)
                else:
                    self.expect("]")
                    expr = n.IndexExpr(expr, first)
            elif self.at("."):
                self.advance()
                expr = n.FieldRef(expr, self.expect_name())
            else:
                return expr

    def parse_atom(self) -> n.Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return n.IntLit(int(tok.text))
        if tok.kind == "string":
            self.advance()
            body = tok.text[1:-1]
            if body.startswith("hex 0x"):
                return n.StrLit(bytes.fromhex(body[6:]))
            return n.StrLit(body.encode("ascii"))
        if tok.kind == "bang" and tok.text == "!XF":
            self.advance()
            name = self.expect_name()
            args, var_args = self._parse_call_args()
            if var_args:
                raise self.fail("!XF calls take no var arguments")
            return n.ExternFunc(name, args)
        if tok.kind == "kw" and tok.text == "if":
            self.advance()
            cond = self.parse_cond()
            self.expect("then")
            then = self.parse_expr()
            self.expect("else")
            els = self.parse_expr()
            self.expect("fi")
            return n.IfExpr(cond, then, els)
        if self.accept("("):
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if self.accept("["):
            items: list[n.Expr] = []
            if not self.at("]"):
                items.append(self.parse_expr())
                while self.accept(","):
                    items.append(self.parse_expr())
            self.expect("]")
            return n.ListLit(tuple(items))
        if tok.kind == "name":
            self.advance()
            return n.Var(tok.text)
        raise self.fail("expected an expression")


def parse_program(text: str) -> n.Program:
    return Parser(text).parse_program()


def parse_statement(text: str) -> n.Stmt:
    p = Parser(text)
    stmt = p.parse_stmts()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return stmt


def parse_expression(text: str) -> n.Expr:
    p = Parser(text)
    expr = p.parse_expr()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return expr


def parse_condition(text: str) -> n.Cond:
    p = Parser(text)
    cond = p.parse_cond()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return cond
