"""Executable semantics for the language, from specification level down to
translated assembler.

One interpreter covers both worlds.  Abstract programs keep all state in the
variable environment.  Translated programs additionally carry a LayoutMap;
names bound in the layout become views over a byte memory, so an assignment
to such a name re-encodes its value at the mapped address, and byte slices
a[addr, len] address the same memory directly.

The interpreter doubles as the semantic-equivalence oracle: `run` is
deterministic, counts steps against a budget, and reports one of three
outcome classes (terminated, budget, error) plus the observable output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from . import nodes as n
from .nodes import Path

DEFAULT_BUDGET = 1_000_000
ORACLE_BUDGET = 100_000

BLANK = 0x20  # the translated character set is plain ASCII (docs/asm-subset.md)


class Record(dict):
    """A record value: named fields, compared structurally."""

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        inner = ", ".join(f"{k}={v!r}" for k, v in self.items())
        return f"Record({inner})"


@dataclass(frozen=True)
class Packed:
    """A packed-decimal value: signed integer plus encoded byte length."""

    value: int
    length: int

    def encode(self, length: int | None = None) -> bytes:
        length = self.length if length is None else length
        digits = f"{abs(self.value):0{2 * length - 1}d}"
        if len(digits) > 2 * length - 1:
            raise WslError(f"packed overflow: {self.value} into {length} bytes")
        nibbles = digits + ("c" if self.value >= 0 else "d")
        return bytes.fromhex(nibbles)

    @staticmethod
    def decode(data: bytes) -> "Packed":
        nibbles = data.hex()
        sign, digits = nibbles[-1], nibbles[:-1]
        if sign not in "acefbd" or not all(c.isdigit() for c in digits):
            raise WslError(f"not a packed value: 0x{nibbles}")
        value = int(digits) if digits else 0
        if sign in "bd":
            value = -value
        return Packed(value, len(data))


Value = object  # int | bytes | Packed | Record | tuple


class WslError(Exception):
    """Runtime error inside the interpreted program."""

    def __init__(self, message: str, scope: str = "?", path: Path | None = None):
        super().__init__(message)
        self.message = message
        self.scope = scope
        self.path = path

    def locate(self, scope: str, path: Path) -> "WslError":
        if self.path is None:
            self.scope, self.path = scope, path
        return self


class _ExitLoops(Exception):
    def __init__(self, count: int):
        self.count = count


class _ActionJump(Exception):
    def __init__(self, name: str):
        self.name = name


class _BudgetExhausted(Exception):
    pass


@dataclass
class FileState:
    records: list[bytes] = field(default_factory=list)
    cursor: int = 0
    eof: bool = False
    written: list[Value] = field(default_factory=list)


@dataclass
class MachineState:
    env: dict[str, Value] = field(default_factory=dict)
    mem: bytearray | None = None
    layout: n.LayoutMap | None = None
    files: dict[str, FileState] = field(default_factory=dict)
    steps: int = 0
    budget: int = DEFAULT_BUDGET

    def file(self, dd: str) -> FileState:
        return self.files.setdefault(dd, FileState())


@dataclass
class RunResult:
    outcome: str  # "terminated" | "budget" | "error"
    output: tuple
    steps: int
    error: str | None
    state: MachineState

    @property
    def ok(self) -> bool:
        return self.outcome == "terminated"


TraceFn = Callable[[str, Path, n.Stmt, MachineState], None]


# --------------------------------------------------------------------------
# the external operation tables (translated-assembler support)


def _x_open(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    """open(dd, mode var os): ready the file and clear the status byte."""
    interp.state.file(_ddname(args[0]))
    for t in var_targets:
        interp.assign(t, 0)


def _x_close(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    _ddname(args[0])
    for t in var_targets:
        interp.assign(t, 0)


def _x_get(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    """get(dd var os, clobbers ..., target): read one record into the last var.

    The leading var targets (status byte, linkage registers) are zeroed
    deterministically.  At end of file only the end-of-file flag changes;
    the record target keeps its previous content.
    """
    f = interp.state.file(_ddname(args[0]))
    if not var_targets:
        raise WslError("get needs a record var target")
    for t in var_targets[:-1]:
        interp.assign(t, 0)
    if f.cursor >= len(f.records):
        f.eof = True
        return
    record = f.records[f.cursor]
    f.cursor += 1
    interp.assign(var_targets[-1], record)


def _x_put(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    f = interp.state.file(_ddname(args[0]))
    value = args[1]
    f.written.append(bytes(value) if isinstance(value, (bytes, bytearray)) else value)
    for t in var_targets:
        interp.assign(t, 0)


def _x_mvc(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    if len(args) != 1 or len(var_targets) != 1:
        raise WslError("mvc copies one source slice to one var target")
    src = args[0]
    if not isinstance(src, (bytes, bytearray)):
        raise WslError("mvc source must be bytes")
    interp.assign(var_targets[0], bytes(src))


def _x_ed(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    _edit(interp, args, var_targets, mark=False)


def _x_edmk(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr]) -> None:
    _edit(interp, args, var_targets, mark=True)


def _edit(interp: "Interpreter", args: list[Value], var_targets: list[n.Expr], mark: bool) -> None:
    """ED/EDMK: format packed digits through a byte pattern, in place.

    Pattern byte 0 is the fill character.  0x20 selects a digit; 0x21 selects
    a digit and then forces significance; any other byte shows through once
    significance is on and is filled otherwise.  EDMK additionally returns
    the address of the first digit that switched significance on.
    """
    if len(args) != 1:
        raise WslError("edit takes the packed source as its argument")
    pattern_target = var_targets[0]
    addr, length = interp.lvalue_address(pattern_target)
    pattern = interp.read_mem(addr, length)
    selects = sum(1 for b in pattern[1:] if b in (0x20, 0x21))
    raw = args[0]
    if isinstance(raw, (bytes, bytearray)):
        # the machine reads just enough source bytes to feed the selectors,
        # so an over-long source operand only contributes its prefix
        need = (selects + 2) // 2
        if len(raw) < need:
            raise WslError("edit source is shorter than the pattern selects")
        source = Packed.decode(bytes(raw[:need]))
    else:
        source = _as_packed(raw)
    digits = f"{abs(source.value):0{max(selects, 1)}d}"[-selects:] if selects else ""
    fill = pattern[0]
    out = [fill]
    significant = False
    digit_pos = 0
    marked: int | None = None
    for i, b in enumerate(pattern[1:], start=1):
        if b in (0x20, 0x21):
            d = int(digits[digit_pos]) if digit_pos < len(digits) else 0
            digit_pos += 1
            if significant or d != 0:
                if not significant and marked is None:
                    marked = addr + i
                significant = True
                out.append(0x30 + d)
            else:
                out.append(fill)
            if b == 0x21:
                significant = True
        else:
            out.append(b if significant else fill)
    interp.write_mem(addr, bytes(out))
    if mark:
        if len(var_targets) != 2 or not isinstance(var_targets[1], n.Var):
            raise WslError("edmk needs a register var target for the mark")
        if marked is not None:
            interp.state.env[var_targets[1].name] = marked


def _ddname(v: Value) -> str:
    if isinstance(v, (bytes, bytearray)):
        return bytes(v).decode("ascii").strip().lower()
    if isinstance(v, str):
        return v
    raise WslError("file operations take a dd name")


def _as_packed(v: Value) -> Packed:
    if isinstance(v, Packed):
        return v
    if isinstance(v, (bytes, bytearray)):
        return Packed.decode(bytes(v))
    if isinstance(v, int):
        return Packed(v, 8)
    raise WslError(f"not a packed operand: {v!r}")


def _xf_pack(args: list[Value]) -> Value:
    """PACK: zoned/character digits to packed decimal (sign in the last zone)."""
    data, length = args[0], args[1]
    if not isinstance(data, (bytes, bytearray)) or not isinstance(length, int):
        raise WslError("pack takes (bytes, length)")
    if not data:
        raise WslError("pack of an empty field")
    digits = "".join(str(b & 0x0F) for b in data)
    value = int(digits)
    if (data[-1] & 0xF0) >> 4 == 0x0D:
        value = -value
    return Packed(value, length)


def _xf_zap(args: list[Value]) -> Value:
    return _as_packed(args[0])


def _xf_ap(args: list[Value]) -> Value:
    a, b = _as_packed(args[0]), _as_packed(args[1])
    return Packed(a.value + b.value, a.length)


def _xf_sp(args: list[Value]) -> Value:
    a, b = _as_packed(args[0]), _as_packed(args[1])
    return Packed(a.value - b.value, a.length)


def _xf_cp(args: list[Value]) -> Value:
    a, b = _as_packed(args[0]), _as_packed(args[1])
    return 0 if a.value == b.value else (1 if a.value < b.value else 2)


def _as_byte_string(v: Value) -> bytes:
    if isinstance(v, (bytes, bytearray)):
        return bytes(v)
    raise WslError(f"not a byte string: {v!r}")


def _xf_clc(args: list[Value]) -> Value:
    """CLC/CLI: byte-wise comparison, 0 equal, 1 first low, 2 first high."""
    a, b = _as_byte_string(args[0]), _as_byte_string(args[1])
    return 0 if a == b else (1 if a < b else 2)


def _xc_end_of_file(interp: "Interpreter", args: list[Value]) -> bool:
    return interp.state.file(_ddname(args[0])).eof


EXTERN_PROCS: dict[str, Callable] = {
    "open": _x_open,
    "close": _x_close,
    "get": _x_get,
    "put": _x_put,
    "mvc": _x_mvc,
    "ed": _x_ed,
    "edmk": _x_edmk,
}

EXTERN_FUNCS: dict[str, Callable[[list[Value]], Value]] = {
    "pack": _xf_pack,
    "zap": _xf_zap,
    "ap": _xf_ap,
    "sp": _xf_sp,
    "cp": _xf_cp,
    "clc": _xf_clc,
}

EXTERN_CONDS: dict[str, Callable] = {
    "end_of_file": _xc_end_of_file,
}


# --------------------------------------------------------------------------
# the interpreter


class Interpreter:
    def __init__(
        self,
        program: n.Program,
        state: MachineState,
        trace: TraceFn | None = None,
    ):
        self.program = program
        self.state = state
        self.trace = trace
        self.scope = "main"
        self._layout_names: dict[str, tuple[int, int, str]] = {}
        if program.layout is not None:
            for area in program.layout.areas:
                self._layout_names[area.name] = (area.addr, area.length, area.kind)
                for f in area.fields:
                    self._layout_names[f.name] = (area.addr + f.offset, f.length, f.kind)

    # -- bookkeeping ---------------------------------------------------------

    def tick(self) -> None:
        self.state.steps += 1
        if self.state.steps > self.state.budget:
            raise _BudgetExhausted()

    # -- memory and layout views ----------------------------------------------

    def read_mem(self, addr: int, length: int) -> bytes:
        # reads only need to stay inside memory; a read may span several
        # adjacent variables when the layout packs them together
        mem = self.state.mem
        if mem is None:
            raise WslError("program has no byte memory")
        if addr < 0 or addr + length > len(mem):
            raise WslError(f"byte slice [{addr}, {length}] outside memory")
        return bytes(mem[addr:addr + length])

    def write_mem(self, addr: int, data: bytes) -> None:
        mem = self.state.mem
        if mem is None:
            raise WslError("program has no byte memory")
        self._check_bounds(addr, len(data))
        mem[addr:addr + len(data)] = data

    def _check_bounds(self, addr: int, length: int) -> None:
        layout = self.program.layout
        if layout is not None and layout.resolve(addr, length) is None:
            raise WslError(f"byte slice [{addr}, {length}] leaves its data area")
        assert self.state.mem is not None
        if addr < 0 or addr + length > len(self.state.mem):
            raise WslError(f"byte slice [{addr}, {length}] outside memory")

    def _encode_for(self, value: Value, length: int, kind: str) -> bytes:
        if isinstance(value, Packed):
            data = value.encode(length)
        elif isinstance(value, (bytes, bytearray)):
            data = bytes(value)
            if len(data) < length and kind in ("char", "pattern"):
                data = data.ljust(length, bytes([BLANK]))
        elif isinstance(value, int):
            if kind == "packed":
                data = Packed(value, length).encode()
            else:
                data = value.to_bytes(length, "big", signed=True)
        else:
            raise WslError(f"cannot store {type(value).__name__} into bytes")
        if len(data) != length:
            raise WslError(f"stored {len(data)} bytes into a {length}-byte slot")
        return data

    def _decode_layout(self, addr: int, length: int, kind: str) -> Value:
        data = self.read_mem(addr, length)
        if kind == "packed":
            return Packed.decode(data)
        if kind == "word":
            return int.from_bytes(data, "big", signed=True)
        return data

    def layout_slot(self, name: str) -> tuple[int, int, str] | None:
        return self._layout_names.get(name)

    def _ref_kind(self, addr: int, length: int) -> str:
        """Storage kind of a byte reference, judged by what it lands on."""
        layout = self.program.layout
        hit = layout.resolve(addr, length) if layout is not None else None
        if hit is None:
            return "char"
        area, field = hit
        if field is not None:
            return field.kind
        if addr == area.addr and length == area.length:
            return area.kind
        # a word area is an array of words, so any aligned word inside
        # it still carries integer traffic (register save slots)
        if area.kind == "word" and length == 4:
            return "word"
        return "char"

    def _read_ref(self, addr: int, length: int) -> Value:
        data = self.read_mem(addr, length)
        kind = self._ref_kind(addr, length)
        if kind == "word":
            return int.from_bytes(data, "big", signed=True)
        if kind == "packed":
            return Packed.decode(data)
        return data

    def lvalue_address(self, target: n.Expr) -> tuple[int, int]:
        """Absolute (address, length) of a memory-backed lvalue."""
        match target:
            case n.MemRef(addr_e, len_e):
                return int(self.eval(addr_e)), int(self.eval(len_e))
            case n.Var(name):
                slot = self.layout_slot(name)
                if slot is None:
                    raise WslError(f"{name} is not memory-backed")
                return slot[0], slot[1]
            case n.SliceExpr(n.Var(name), lo_e, hi_e):
                slot = self.layout_slot(name)
                if slot is None:
                    raise WslError(f"{name} is not memory-backed")
                lo, hi = int(self.eval(lo_e)), int(self.eval(hi_e))
                if lo < 1 or hi > slot[1] or lo > hi + 1:
                    raise WslError(f"slice [{lo} .. {hi}] outside {name}")
                return slot[0] + lo - 1, hi - lo + 1
            case n.FieldRef(n.Var(base), fname):
                area = self.program.layout.area(base) if self.program.layout else None
                if area is not None:
                    for f in area.fields:
                        if f.name == fname:
                            return area.addr + f.offset, f.length
                raise WslError(f"{base}.{fname} is not memory-backed")
        raise WslError(f"not a memory-backed lvalue: {type(target).__name__}")

    # -- expression evaluation -------------------------------------------------

    def eval(self, e: n.Expr) -> Value:
        match e:
            case n.IntLit(v):
                return v
            case n.StrLit(b):
                return b
            case n.Var(name):
                slot = self.layout_slot(name)
                if slot is not None:
                    return self._decode_layout(*slot)
                if name not in self.state.env:
                    raise WslError(f"undefined variable {name}")
                return self.state.env[name]
            case n.FieldRef(base, fname):
                if isinstance(base, n.Var) and self.program.layout is not None:
                    area = self.program.layout.area(base.name)
                    if area is not None:
                        for f in area.fields:
                            if f.name == fname:
                                return self._decode_layout(
                                    area.addr + f.offset, f.length, f.kind)
                base_v = self.eval(base)
                if isinstance(base_v, Record):
                    if fname not in base_v:
                        raise WslError(f"record has no field {fname}")
                    return base_v[fname]
                raise WslError(f"field access on {type(base_v).__name__}")
            case n.ListLit(items):
                return tuple(self.eval(x) for x in items)
            case n.BinOp(op, left, right):
                return self._binop(op, self.eval(left), self.eval(right))
            case n.Neg(operand):
                v = self.eval(operand)
                if isinstance(v, Packed):
                    return Packed(-v.value, v.length)
                if not isinstance(v, int):
                    raise WslError("negation needs a number")
                return -v
            case n.Len(operand):
                v = self.eval(operand)
                if isinstance(v, (tuple, bytes, bytearray)):
                    return len(v)
                raise WslError("len needs a list or string")
            case n.IndexExpr(base, index):
                return self._index(self.eval(base), self.eval(index))
            case n.SliceExpr(n.Var(name), lo_e, hi_e) if self.layout_slot(name) is not None:
                # a slice of a memory-backed variable reads raw storage, so it
                # may run past the variable into whatever is laid out after it
                slot = self.layout_slot(name)
                lo, hi = int(self.eval(lo_e)), int(self.eval(hi_e))
                if hi < lo:
                    return b""
                if lo < 1:
                    raise WslError(f"slice [{lo} .. {hi}] out of range")
                return self.read_mem(slot[0] + lo - 1, hi - lo + 1)
            case n.SliceExpr(base, lo, hi):
                return self._slice(self.eval(base), self.eval(lo), self.eval(hi))
            case n.MemRef(addr, length):
                return self._read_ref(int(self.eval(addr)), int(self.eval(length)))
            case n.MapExpr(func, operand):
                items = self.eval(operand)
                if not isinstance(items, tuple):
                    raise WslError("map needs a list")
                return tuple(self.apply_funct(func, [x]) for x in items)
            case n.ReduceExpr(op, operand):
                return self._reduce(op, self.eval(operand))
            case n.SplitExpr(operand, pred):
                return self.eval_split(self.eval(operand), pred)
            case n.CallExpr("address_of", args):
                if len(args) != 1:
                    raise WslError("address_of takes a data-area name")
                return self._funct_address_of(args[0])
            case n.CallExpr("db", args):
                if len(args) != 2:
                    raise WslError("db takes a displacement and a base")
                return self._addr_part(args[0]) + self._addr_part(args[1])
            case n.CallExpr(name, args):
                return self.apply_funct(name, [self.eval(a) for a in args])
            case n.ExternFunc("address_of", args):
                if len(args) != 1:
                    raise WslError("address_of takes a data-area name")
                return self._funct_address_of(args[0])
            case n.ExternFunc(name, args):
                fn = EXTERN_FUNCS.get(name)
                if fn is None:
                    raise WslError(f"unknown external function {name}")
                return fn([self.eval(a) for a in args])
            case n.IfExpr(cond, then, els):
                return self.eval(then) if self.cond(cond) else self.eval(els)
        raise WslError(f"cannot evaluate {type(e).__name__}")

    def _binop(self, op: str, a: Value, b: Value) -> Value:
        if op == "++":
            if isinstance(a, tuple) and isinstance(b, tuple):
                return a + b
            if isinstance(a, (bytes, bytearray)) and isinstance(b, (bytes, bytearray)):
                return bytes(a) + bytes(b)
            raise WslError("++ needs two lists or two strings")
        av = a.value if isinstance(a, Packed) else a
        bv = b.value if isinstance(b, Packed) else b
        if not isinstance(av, int) or not isinstance(bv, int):
            raise WslError(f"{op} needs numbers")
        if op == "+":
            return av + bv
        if op == "-":
            return av - bv
        if op == "*":
            return av * bv
        raise WslError(f"unknown operator {op}")

    def _index(self, base: Value, index: Value) -> Value:
        if not isinstance(index, int):
            raise WslError("index must be an integer")
        if isinstance(base, tuple):
            if not 1 <= index <= len(base):
                raise WslError(f"index {index} out of range 1 .. {len(base)}")
            return base[index - 1]
        if isinstance(base, (bytes, bytearray)):
            if not 1 <= index <= len(base):
                raise WslError(f"index {index} out of range 1 .. {len(base)}")
            return bytes(base[index - 1:index])
        raise WslError("indexing needs a list or string")

    def _slice(self, base: Value, lo: Value, hi: Value) -> Value:
        if not isinstance(lo, int) or not isinstance(hi, int):
            raise WslError("slice bounds must be integers")
        if not isinstance(base, (tuple, bytes, bytearray)):
            raise WslError("slicing needs a list or string")
        if hi < lo:  # the empty slice needs no bounds: s[i .. j] = <> for j < i
            return b"" if isinstance(base, (bytes, bytearray)) else ()
        if lo < 1 or hi > len(base):
            raise WslError(f"slice [{lo} .. {hi}] out of range 1 .. {len(base)}")
        part = base[lo - 1:hi]
        return bytes(part) if isinstance(base, (bytes, bytearray)) else part

    def _reduce(self, op: str, items: Value) -> Value:
        if not isinstance(items, tuple):
            raise WslError("reduce needs a list")
        if not items:
            raise WslError("reduce of an empty list")
        if len(items) == 1:
            return items[0]
        rest = self._reduce(op, items[1:])
        if op in ("+", "-", "*", "++"):
            return self._binop(op, items[0], rest)
        return self.apply_funct(op, [items[0], rest])

    def eval_split(self, items: Value, pred: str) -> tuple:
        """Break a list into maximal non-empty runs related by the predicate."""
        if not isinstance(items, tuple):
            raise WslError("split needs a list")
        sections: list[tuple] = []
        current: list[Value] = []
        for x in items:
            if current and not self._truthy(self.apply_funct(pred, [current[-1], x])):
                sections.append(tuple(current))
                current = []
            current.append(x)
        if current:
            sections.append(tuple(current))
        return tuple(sections)

    def apply_funct(self, name: str, args: list[Value]) -> Value:
        f = self.program.funct(name)
        if f is not None:
            if len(args) != len(f.params):
                raise WslError(f"{name} takes {len(f.params)} arguments")
            saved = self._bind(dict(zip(f.params, args)))
            try:
                if isinstance(f.body, n.Cond):
                    return self.cond(f.body)
                return self.eval(f.body)
            finally:
                self._restore(saved)
        if name == "len":
            v = args[0]
            if isinstance(v, (tuple, bytes, bytearray)):
                return len(v)
            raise WslError("len needs a list or string")
        if name == "db":
            if len(args) == 2 and all(isinstance(a, int) for a in args):
                return args[0] + args[1]  # type: ignore[operator]
            raise WslError("db takes two addresses")
        if name == "address_of":
            raise WslError("address_of takes a data-area name")
        raise WslError(f"unknown funct {name}")

    def _funct_address_of(self, arg: n.Expr) -> int:
        if not isinstance(arg, n.Var):
            raise WslError("address_of takes a data-area name")
        slot = self.layout_slot(arg.name)
        if slot is None:
            raise WslError(f"{arg.name} is not a data area")
        return slot[0]

    def _addr_part(self, e: n.Expr) -> int:
        """One db operand: a data name means its address, anything else its value."""
        match e:
            case n.IntLit(v):
                return v
            case n.Var(name) if self.layout_slot(name) is not None:
                return self.layout_slot(name)[0]
            case n.BinOp("+", left, right):
                return self._addr_part(left) + self._addr_part(right)
            case n.BinOp("-", left, right):
                return self._addr_part(left) - self._addr_part(right)
        v = self.eval(e)
        if not isinstance(v, int):
            raise WslError("address arithmetic on a non-integer")
        return v

    # -- conditions -------------------------------------------------------------

    def cond(self, c: n.Cond) -> bool:
        match c:
            case n.BoolLit(v):
                return v
            case n.Compare(op, left, right):
                return self._compare(op, self.eval(left), self.eval(right))
            case n.And(left, right):
                return self.cond(left) and self.cond(right)
            case n.Or(left, right):
                return self.cond(left) or self.cond(right)
            case n.Not(operand):
                return not self.cond(operand)
            case n.CondVar(name):
                if name not in self.state.env:
                    raise WslError(f"undefined variable {name}")
                return self._truthy(self.state.env[name])
            case n.ExternCond(name, args):
                fn = EXTERN_CONDS.get(name)
                if fn is None:
                    raise WslError(f"unknown external condition {name}")
                return bool(fn(self, [self.eval(a) for a in args]))
            case n.CondCall(name, args):
                return self._truthy(self.apply_funct(name, [self.eval(a) for a in args]))
        raise WslError(f"cannot evaluate condition {type(c).__name__}")

    @staticmethod
    def _truthy(v: Value) -> bool:
        if isinstance(v, bool):
            return v
        if isinstance(v, int) and v in (0, 1):
            return bool(v)
        raise WslError(f"not a truth value: {v!r}")

    def _compare(self, op: str, a: Value, b: Value) -> bool:
        if isinstance(a, Packed) or isinstance(b, Packed):
            a = _as_packed(a).value
            b = _as_packed(b).value
        if op == "=":
            return self._equal(a, b)
        if op == "<>":
            return not self._equal(a, b)
        if isinstance(a, int) and isinstance(b, int):
            pass
        elif isinstance(a, (bytes, bytearray)) and isinstance(b, (bytes, bytearray)):
            a, b = bytes(a), bytes(b)
        else:
            raise WslError(
                f"cannot order {type(a).__name__} against {type(b).__name__}")
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]

    def _equal(self, a: Value, b: Value) -> bool:
        if isinstance(a, Packed) or isinstance(b, Packed):
            return _as_packed(a).value == _as_packed(b).value
        if isinstance(a, bytearray):
            a = bytes(a)
        if isinstance(b, bytearray):
            b = bytes(b)
        if type(a) is not type(b):
            if isinstance(a, bool) and isinstance(b, int):
                return int(a) == b
            if isinstance(b, bool) and isinstance(a, int):
                return a == int(b)
            return False
        if isinstance(a, tuple):
            return len(a) == len(b) and all(self._equal(x, y) for x, y in zip(a, b))
        return a == b

    # -- assignment ---------------------------------------------------------------

    def assign(self, target: n.Expr, value: Value) -> None:
        match target:
            case n.Var(name):
                slot = self.layout_slot(name)
                if slot is not None:
                    addr, length, kind = slot
                    self.write_mem(addr, self._encode_for(value, length, kind))
                else:
                    self.state.env[name] = value
            case n.FieldRef(n.Var(base), fname):
                slot_area = self.program.layout.area(base) if self.program.layout else None
                if slot_area is not None:
                    for f in slot_area.fields:
                        if f.name == fname:
                            self.write_mem(
                                slot_area.addr + f.offset,
                                self._encode_for(value, f.length, f.kind))
                            return
                if base not in self.state.env:
                    raise WslError(f"undefined variable {base}")
                rec = self.state.env[base]
                if not isinstance(rec, Record):
                    raise WslError(f"{base} is not a record")
                updated = Record(rec)
                updated[fname] = value
                self.state.env[base] = updated
            case n.MemRef(addr_e, len_e):
                addr, length = int(self.eval(addr_e)), int(self.eval(len_e))
                kind = self._ref_kind(addr, length)
                self.write_mem(addr, self._encode_for(value, length, kind))
            case n.SliceExpr(n.Var(name), _, _) if self.layout_slot(name) is not None:
                addr, length = self.lvalue_address(target)
                self.write_mem(addr, self._encode_for(value, length, "char"))
            case n.IndexExpr(n.Var(name), idx_e):
                idx = self.eval(idx_e)
                if not isinstance(idx, int):
                    raise WslError("index must be an integer")
                slot = self.layout_slot(name)
                if slot is not None:
                    addr, length, _ = slot
                    if not 1 <= idx <= length:
                        raise WslError(f"index {idx} out of range 1 .. {length}")
                    self.write_mem(addr + idx - 1, self._encode_for(value, 1, "char"))
                    return
                if name not in self.state.env:
                    raise WslError(f"undefined variable {name}")
                base = self.state.env[name]
                if isinstance(base, tuple):
                    if not 1 <= idx <= len(base):
                        raise WslError(f"index {idx} out of range 1 .. {len(base)}")
                    self.state.env[name] = base[:idx - 1] + (value,) + base[idx:]
                    return
                if isinstance(base, (bytes, bytearray)):
                    if not 1 <= idx <= len(base):
                        raise WslError(f"index {idx} out of range 1 .. {len(base)}")
                    data = self._encode_for(value, 1, "char")
                    self.state.env[name] = bytes(base[:idx - 1]) + data + bytes(base[idx:])
                    return
                raise WslError("indexed assignment needs a list or string")
            case n.SliceExpr(n.Var(name), lo_e, hi_e):
                lo, hi = self.eval(lo_e), self.eval(hi_e)
                if not isinstance(lo, int) or not isinstance(hi, int):
                    raise WslError("slice bounds must be integers")
                if name not in self.state.env:
                    raise WslError(f"undefined variable {name}")
                base = self.state.env[name]
                if not isinstance(base, (bytes, bytearray)):
                    raise WslError("slice assignment needs a string")
                if lo < 1 or hi > len(base) or lo > hi + 1:
                    raise WslError(f"slice [{lo} .. {hi}] out of range")
                data = self._encode_for(value, hi - lo + 1, "char")
                self.state.env[name] = bytes(base[:lo - 1]) + data + bytes(base[hi:])
            case _:
                raise WslError(f"cannot assign to {type(target).__name__}")

    # -- statements ------------------------------------------------------------------

    def _bind(self, bindings: Mapping[str, Value]) -> list[tuple[str, Value, bool]]:
        saved = []
        for name, value in bindings.items():
            saved.append((name, self.state.env.get(name), name in self.state.env))
            self.state.env[name] = value
        return saved

    def _restore(self, saved: list[tuple[str, Value, bool]]) -> None:
        for name, value, existed in reversed(saved):
            if existed:
                self.state.env[name] = value
            else:
                self.state.env.pop(name, None)

    def exec(self, s: n.Stmt, path: Path = ()) -> None:
        if self.trace is not None:
            self.trace(self.scope, path, s, self.state)
        try:
            self._exec(s, path)
        except WslError as err:
            raise err.locate(self.scope, path)

    def _exec(self, s: n.Stmt, path: Path) -> None:
        match s:
            case n.Skip():
                self.tick()
            case n.Comment(_):
                pass
            case n.Assign(target, value):
                self.tick()
                # evaluate fully before writing: targets may share state
                self.assign(target, self.eval(value))
            case n.Sequence(items):
                for i, item in enumerate(items):
                    self.exec(item, path + (i,))
            case n.If(cond, then, els):
                self.tick()
                if self.cond(cond):
                    self.exec(then, path + (0,))
                else:
                    self.exec(els, path + (1,))
            case n.Do(body):
                while True:
                    self.tick()
                    try:
                        self.exec(body, path + (0,))
                    except _ExitLoops as ex:
                        if ex.count > 1:
                            raise _ExitLoops(ex.count - 1)
                        break
            case n.While(cond, body):
                while True:
                    self.tick()
                    if not self.cond(cond):
                        break
                    self._guard_loop(body, path)
            case n.For(var, start, stop, step, body):
                self.tick()
                start_v, stop_v, step_v = self.eval(start), self.eval(stop), self.eval(step)
                if not all(isinstance(v, int) for v in (start_v, stop_v, step_v)):
                    raise WslError("for bounds must be integers")
                if step_v == 0:
                    raise WslError("for step cannot be zero")
                saved = self._bind({var: start_v})
                try:
                    k = start_v
                    while (k <= stop_v) if step_v > 0 else (k >= stop_v):
                        self.state.env[var] = k
                        self._guard_loop(body, path)
                        k += step_v
                finally:
                    self._restore(saved)
            case n.Exit(count):
                self.tick()
                if count < 1:
                    raise WslError(f"exit({count}) has no loop to leave")
                raise _ExitLoops(count)
            case n.VarBlock(inits, body):
                self.tick()
                values = {}
                for name, e in inits:
                    values[name] = self.eval(e)
                saved = self._bind(values)
                try:
                    self._guard_block(body, path)
                finally:
                    self._restore(saved)
            case n.ProcCall(name, args, var_args):
                self.tick()
                self.call_proc(name, args, var_args, path)
            case n.ExternCall(name, args, var_args):
                self.tick()
                fn = EXTERN_PROCS.get(name)
                if fn is None:
                    raise WslError(f"unknown external procedure {name}")
                fn(self, [self.eval(a) for a in args], list(var_args))
            case n.ActionCall(name):
                self.tick()
                raise _ActionJump(name)
            case n.ActionSystem(start, actions):
                self.tick()
                self._run_actions(start, actions, path)
            case _:
                raise WslError(f"cannot execute {type(s).__name__}")

    def _guard_loop(self, body: n.Stmt, path: Path) -> None:
        try:
            self.exec(body, path + (0,))
        except _ExitLoops:
            raise WslError("exit crossed a while/for boundary")

    def _guard_block(self, body: n.Stmt, path: Path) -> None:
        try:
            self.exec(body, path + (0,))
        except _ExitLoops:
            raise WslError("exit crossed a var block boundary")

    def _run_actions(self, start: str, actions: tuple[tuple[str, n.Stmt], ...], path: Path) -> None:
        bodies = dict(actions)
        indices = {name: i for i, (name, _) in enumerate(actions)}
        current = start
        while True:
            body = bodies.get(current)
            if body is None:
                raise WslError(f"call {current} targets no action")
            try:
                self.exec(body, path + (indices[current],))
            except _ActionJump as jump:
                if jump.name == "z":
                    return
                current = jump.name
                continue
            except _ExitLoops:
                raise WslError("exit crossed an action boundary")
            return  # falling off an action body terminates the system

    def call_proc(self, name: str, args: tuple[n.Expr, ...], var_args: tuple[n.Expr, ...],
                  path: Path) -> None:
        proc = self.program.proc(name)
        if proc is None:
            raise WslError(f"unknown proc {name}")
        if len(args) != len(proc.params) or len(var_args) != len(proc.var_params):
            raise WslError(f"{name} takes ({len(proc.params)} var {len(proc.var_params)})")
        bindings: dict[str, Value] = {}
        for param, arg in zip(proc.params, args):
            bindings[param] = self.eval(arg)
        for param, arg in zip(proc.var_params, var_args):
            bindings[param] = self.eval(arg)
        saved = self._bind(bindings)
        outer_scope = self.scope
        self.scope = f"proc {name}"
        try:
            try:
                self.exec(proc.body, ())
            except _ActionJump as jump:
                if jump.name != "z":
                    raise WslError(f"call {jump.name} escaped proc {name}")
            except _ExitLoops:
                raise WslError("exit crossed a proc boundary")
            results = [self.state.env[p] for p in proc.var_params]
        finally:
            self.scope = outer_scope
            self._restore(saved)
        for target, value in zip(var_args, results):
            self.assign(target, value)


# --------------------------------------------------------------------------
# entry points


def initial_state(
    program: n.Program,
    env: Mapping[str, Value] | None = None,
    files: Mapping[str, Iterable[bytes]] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> MachineState:
    """Build the starting machine state.

    Layout-carrying programs get their assembled memory image and the seed
    register values recorded by the translator; plain programs start from the
    given environment alone.
    """
    state = MachineState(budget=budget)
    if env:
        state.env.update(env)
    layout = program.layout
    if layout is not None:
        state.layout = layout
        image = bytearray(layout.size)
        image[: len(layout.image)] = layout.image
        state.mem = image
        for r in range(16):
            state.env.setdefault(f"r{r}", 0)
        state.env.setdefault("cc", 0)
        state.env.setdefault("input", "input")
        state.env.setdefault("output", "output")
        for name, value in layout.bases:
            state.env[name] = value
    if files:
        for dd, records in files.items():
            state.files[dd] = FileState(records=[bytes(r) for r in records])
            state.env.setdefault(f"{dd}_ddname", dd)
    return state


def run(
    program: n.Program,
    env: Mapping[str, Value] | None = None,
    files: Mapping[str, Iterable[bytes]] | None = None,
    budget: int = DEFAULT_BUDGET,
    trace: TraceFn | None = None,
) -> RunResult:
    state = initial_state(program, env, files, budget)
    interp = Interpreter(program, state, trace=trace)
    outcome, error = "terminated", None
    try:
        interp.exec(program.body, ())
    except _BudgetExhausted:
        outcome, error = "budget", f"step budget {budget} exhausted"
    except _ActionJump as jump:
        if jump.name != "z":
            outcome, error = "error", f"call {jump.name} outside any action system"
    except _ExitLoops:
        outcome, error = "error", "exit outside any do-loop"
    except WslError as err:
        outcome, error = "error", f"{err.scope} {list(err.path or ())}: {err.message}"
    except RecursionError:
        outcome, error = "error", "recursion too deep"
    return RunResult(outcome, observable_output(state), state.steps, error, state)


def observable_output(state: MachineState) -> tuple:
    """What a run 'printed': written report lines, or the output variable."""
    for dd, f in state.files.items():
        if f.written:
            return tuple(f.written)
    out = state.env.get("output", ())
    return out if isinstance(out, tuple) else ()


def equivalent(
    p1: n.Program,
    p2: n.Program,
    runs: Iterable[tuple[Mapping[str, Value] | None, Mapping[str, Iterable[bytes]] | None]],
    budget: int = ORACLE_BUDGET,
    normalize: Callable[[RunResult], Value] | None = None,
) -> bool:
    """Observational agreement across the given (env, files) seedings."""
    for env, files in runs:
        r1 = run(p1, env, files, budget)
        r2 = run(p2, env, files, budget)
        if r1.outcome != r2.outcome:
            return False
        if normalize is not None:
            if normalize(r1) != normalize(r2):
                return False
        elif r1.output != r2.output:
            return False
    return True
