"""IBM System/370 assembler subset front end.

Reads fixed-column card source (label in column 1, mnemonic in column 10,
operands from column 16, a non-blank column 72 continuing the operand field
on the next card), assembles the data definitions into a byte layout, and
translates the instruction stream into a raw WSL action system.

The translation models the machine directly rather than cleverly:

* one action per instruction, named after its label where it has one;
* every transfer of control is an explicit action call, with branch-and-link
  storing the return offset in the link register and BR routing through a
  dispatch action that compares the register against every return point;
* the condition code is an ordinary variable written by compare and
  arithmetic instructions and read by conditional branches;
* storage is the byte-addressed memory view a[addr, len], with addresses
  built by db(displacement, base);
* registers are plain variables r0..r15, all zero at entry.

The only self-modification accepted is the branch-patch idiom: MVI of zero
into the mask byte of a branch instruction, which the translator turns into
a flag variable guarding the branch.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import nodes as n
from .interpreter import Packed

DISPATCH = "dispatch"
TERMINAL = "z"

_SIZES = {"RR": 2, "RX": 4, "RS": 4, "SI": 4, "SS": 6, "MACRO": 4}

_FORMAT = {
    "LR": "RR", "SLR": "RR", "BR": "RR", "BCTR": "RR",
    "L": "RX", "ST": "RX", "LA": "RX", "B": "RX", "BE": "RX", "BNE": "RX",
    "BNL": "RX", "BAL": "RX", "BCT": "RX", "EX": "RX",
    "STM": "RS", "LM": "RS",
    "MVI": "SI", "CLI": "SI",
    "MVC": "SS", "CLC": "SS", "CP": "SS", "PACK": "SS", "ZAP": "SS",
    "AP": "SS", "SP": "SS", "ED": "SS", "EDMK": "SS",
    "OPEN": "MACRO", "CLOSE": "MACRO", "GET": "MACRO", "PUT": "MACRO",
}

_DIRECTIVES = {"CSECT", "DC", "DS", "DCB", "EQU", "USING", "LTORG", "END",
               "REGEQU"}

_KINDS = {"C": "char", "X": "pattern", "P": "packed", "F": "word", "H": "word"}
_ALIGN = {"F": 4, "H": 2, "D": 8}

_DATA_RE = re.compile(r"^(\d*)([A-Z])(?:L(\d+))?$")


class AsmError(Exception):
    """A source problem the assembler refuses to translate."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# --------------------------------------------------------------------------
# card reading


@dataclass
class Card:
    no: int
    label: str | None
    mnemonic: str
    operands: str


def _scan_operand(text: str) -> str:
    """Operand field: up to the first blank outside quotes and parentheses."""
    depth = 0
    quoted = False
    for i, ch in enumerate(text):
        if quoted:
            if ch == "'":
                quoted = False
        elif ch == "'":
            quoted = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == " " and depth == 0:
            return text[:i]
    return text


def parse_cards(text: str) -> list[Card]:
    """Split card source into logical statements, joining continuations."""
    cards: list[Card] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        no = i + 1
        i += 1
        if not line.strip() or line.startswith("*"):
            continue
        body = line[:71]
        continued = len(line) > 71 and line[71] != " "
        label = None
        pos = 0
        if body[0] != " ":
            m = re.match(r"\S+", body)
            label = m.group(0)
            pos = m.end()
        m = re.match(r" *(\S+)", body[pos:])
        if m is None:
            raise AsmError("statement has no mnemonic", no)
        mnemonic = m.group(1).upper()
        rest = body[pos + m.end():].lstrip(" ")
        operands = _scan_operand(rest)
        while continued:
            if i >= len(lines):
                raise AsmError("continuation past end of source", no)
            cont = lines[i]
            i += 1
            continued = len(cont) > 71 and cont[71] != " "
            operands += _scan_operand(cont[:71].lstrip(" "))
        cards.append(Card(no, label, mnemonic, operands))
    return cards


def _split_commas(text: str) -> list[str]:
    out: list[str] = []
    depth = 0
    quoted = False
    start = 0
    for i, ch in enumerate(text):
        if quoted:
            if ch == "'":
                quoted = False
        elif ch == "'":
            quoted = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return [x for x in out if x != ""]


# --------------------------------------------------------------------------
# assembly: symbols, sizes, data


@dataclass
class Instr:
    no: int
    label: str | None
    mnemonic: str
    operands: list[str]
    offset: int
    size: int


@dataclass
class DataDef:
    no: int
    label: str | None
    mnemonic: str  # DC or DS
    dup: int
    type: str
    length: int  # element length in bytes
    value: str | None  # quoted content, sans quotes
    addr: int


@dataclass
class Dcb:
    name: str
    ddname: str
    eodad: str | None
    macrf: str
    dsorg: str


@dataclass
class AsmModule:
    """A parsed and located assembly: everything translate() needs."""

    name: str
    instructions: list[Instr]
    data: list[DataDef]
    dcbs: dict[str, Dcb]
    usings: list[tuple[str, int]]
    code_symbols: dict[str, int]
    data_symbols: dict[str, DataDef]
    equates: dict[str, int]
    code_end: int
    data_end: int


def _parse_data_operand(operands: str, no: int) -> tuple[int, str, int, str | None]:
    """(dup, type, element length, value) of a DC/DS operand."""
    text = operands.strip()
    value = None
    q = text.find("'")
    if q != -1:
        if not text.endswith("'"):
            raise AsmError(f"unterminated data value {text!r}", no)
        value = text[q + 1:-1]
        text = text[:q]
    m = _DATA_RE.match(text.upper())
    if m is None:
        raise AsmError(f"cannot read data definition {operands!r}", no)
    dup = int(m.group(1)) if m.group(1) else 1
    dtype = m.group(2)
    if dtype not in _KINDS and dtype != "D":
        raise AsmError(f"unsupported data type {dtype}", no)
    if m.group(3):
        length = int(m.group(3))
    elif dtype == "C":
        length = len(value) if value else 1
    elif dtype == "X":
        length = (len(value) + 1) // 2 if value else 1
    elif dtype == "P":
        digits = (value or "0").lstrip("+-")
        length = len(digits) // 2 + 1
    elif dtype in ("F", "D"):
        length = 4 if dtype == "F" else 8
    else:
        length = 2
    return dup, dtype, length, value


def _encode_data(dtype: str, length: int, value: str | None, no: int) -> bytes:
    if value is None:
        return bytes(length)
    if dtype == "C":
        data = value.encode("ascii")
        return data[:length].ljust(length, b" ")
    if dtype == "X":
        raw = bytes.fromhex(value)
        if len(raw) > length:
            return raw[-length:]
        return raw.rjust(length, b"\x00")
    if dtype == "P":
        return Packed(int(value), length).encode()
    if dtype in ("F", "H", "D"):
        return int(value).to_bytes(length, "big", signed=True)
    raise AsmError(f"no value encoding for type {dtype}", no)


def parse_asm(text: str) -> AsmModule:
    """Parse and locate a source module: offsets, symbols, data addresses."""
    cards = parse_cards(text)
    name = ""
    loc = 0
    instructions: list[Instr] = []
    data: list[DataDef] = []
    dcbs: dict[str, Dcb] = {}
    usings_raw: list[tuple[int, str, str]] = []
    code_symbols: dict[str, int] = {}
    data_symbols: dict[str, DataDef] = {}
    equates: dict[str, int] = {}
    code_end: int | None = None
    seen: set[str] = set()

    def define(label: str, no: int) -> None:
        if label in seen:
            raise AsmError(f"duplicate symbol {label}", no)
        seen.add(label)

    for card in cards:
        m = card.mnemonic
        if m == "END":
            break
        if m == "CSECT":
            if card.label:
                name = card.label
            continue
        if m == "REGEQU":
            for i in range(16):
                equates[f"R{i}"] = i
            continue
        if m == "EQU":
            if card.label is None:
                raise AsmError("EQU without a label", card.no)
            define(card.label, card.no)
            op = card.operands.strip()
            if op == "*":
                equates[card.label] = loc
            else:
                try:
                    equates[card.label] = int(op)
                except ValueError:
                    raise AsmError(f"cannot evaluate EQU {op!r}", card.no)
            continue
        if m == "USING":
            ops = _split_commas(card.operands)
            if len(ops) != 2:
                raise AsmError("USING needs a location and a register", card.no)
            usings_raw.append((card.no, ops[0], ops[1]))
            continue
        if m == "LTORG":
            # literal operands are translated by value, so the pool that
            # LTORG would dump is never addressed and occupies no layout
            continue
        if m == "DCB":
            if code_end is None:
                code_end = loc
            if card.label is None:
                raise AsmError("DCB without a label", card.no)
            define(card.label, card.no)
            kw = {}
            for part in _split_commas(card.operands):
                if "=" in part:
                    k, v = part.split("=", 1)
                    kw[k.strip().upper()] = v.strip()
            if "DDNAME" not in kw:
                raise AsmError("DCB without DDNAME", card.no)
            dcbs[card.label] = Dcb(card.label, kw["DDNAME"].lower(),
                                   kw.get("EODAD"), kw.get("MACRF", ""),
                                   kw.get("DSORG", ""))
            continue
        if m in ("DC", "DS"):
            if code_end is None:
                code_end = loc
                loc = (loc + 7) & ~7
            dup, dtype, length, value = _parse_data_operand(card.operands, card.no)
            align = _ALIGN.get(dtype, 1)
            loc = (loc + align - 1) & ~(align - 1)
            d = DataDef(card.no, card.label, m, dup, dtype, length, value, loc)
            data.append(d)
            if card.label:
                define(card.label, card.no)
                data_symbols[card.label] = d
            loc += dup * length
            continue
        if m in _FORMAT:
            if code_end is not None:
                raise AsmError("instruction after the data section", card.no)
            size = _SIZES[_FORMAT[m]]
            ins = Instr(card.no, card.label, m, _split_commas(card.operands),
                        loc, size)
            instructions.append(ins)
            if card.label:
                define(card.label, card.no)
                code_symbols[card.label] = loc
            loc += size
            continue
        raise AsmError(f"unsupported mnemonic {m}", card.no)

    if not instructions:
        raise AsmError("no instructions in source")
    if code_end is None:
        code_end = instructions[-1].offset + instructions[-1].size

    usings: list[tuple[str, int]] = []
    for no, sym, reg in usings_raw:
        target = sym.strip()
        value = 0 if target == name else code_symbols.get(target)
        if value is None:
            raise AsmError(f"USING of unknown location {target}", no)
        ri = equates.get(reg.strip().upper())
        if ri is None:
            raise AsmError(f"USING with unknown register {reg}", no)
        usings.append((f"r{ri}", value))

    return AsmModule(name or "main", instructions, data, dcbs, usings,
                     code_symbols, data_symbols, equates, code_end, loc)


# --------------------------------------------------------------------------
# layout extraction

SAVE_AREA = "csave"
SAVE_AREA_LEN = 72


def extract_layout(module: AsmModule) -> n.LayoutMap:
    """Build the byte layout: one area per definition, records grouped.

    A zero-duplication DS 0CLn opens a record of n bytes whose following
    named definitions become fields; everything else is its own area.  A
    synthetic caller save area sits at address 0, where the operating
    system convention points register 13 on entry.
    """
    areas: list[n.Area] = []
    image = bytearray()

    def put(addr: int, data: bytes) -> None:
        if len(image) < addr + len(data):
            image.extend(bytes(addr + len(data) - len(image)))
        image[addr:addr + len(data)] = data

    if SAVE_AREA in {d.label for d in module.data}:
        raise AsmError(f"symbol {SAVE_AREA} collides with the save area name")
    areas.append(n.Area(SAVE_AREA, 0, SAVE_AREA_LEN, "word"))
    put(0, bytes(SAVE_AREA_LEN))

    record: tuple[str, int, int] | None = None  # name, start, length
    fields: list[n.AreaField] = []

    def close_record() -> None:
        nonlocal record
        if record is not None:
            rname, rstart, rlen = record
            areas.append(n.Area(rname, rstart, rlen, "char", tuple(fields)))
            record = None
            fields.clear()

    for d in module.data:
        total = d.dup * d.length
        if d.dup == 0:
            close_record()
            if d.type == "C" and d.length > 0:
                if d.label is None:
                    raise AsmError("record anchor without a label", d.no)
                record = (d.label.lower(), d.addr, d.length)
            continue
        if record is not None:
            rname, rstart, rlen = record
            if d.addr + total > rstart + rlen:
                raise AsmError(f"definition overruns record {rname}", d.no)
            if d.label:
                fields.append(n.AreaField(d.label.lower(), d.addr - rstart,
                                          total, _KINDS[d.type]))
            if d.mnemonic == "DC":
                put(d.addr, _encode_data(d.type, d.length, d.value, d.no) * d.dup)
            else:
                put(d.addr, bytes(total))
            if d.addr + total == rstart + rlen:
                close_record()
            continue
        aname = d.label.lower() if d.label else f"data_{d.addr}"
        areas.append(n.Area(aname, d.addr, total, _KINDS[d.type]))
        if d.mnemonic == "DC":
            put(d.addr, _encode_data(d.type, d.length, d.value, d.no) * d.dup)
        else:
            put(d.addr, bytes(total))
    close_record()

    size = max(module.data_end, len(image))
    if len(image) < size:
        image.extend(bytes(size - len(image)))
    reserved = {f"r{i}" for i in range(16)}
    reserved |= {"cc", "os", "destination", "input", "output", DISPATCH,
                 TERMINAL}
    for a in areas:
        for taken in (a.name, *(f.name for f in a.fields)):
            if taken in reserved:
                raise AsmError(f"data name {taken} collides with a model name")
    bases = tuple((f"r{i}", 0) for i in range(16))
    return n.LayoutMap(tuple(areas), size, bases, bytes(image),
                       tuple(module.usings))


# --------------------------------------------------------------------------
# operand shapes


@dataclass
class Storage:
    """One storage operand: displacement off a base, with optional length."""

    disp_sym: str | None
    disp_off: int
    base: str | None  # register name, or None for an implied using base
    length: int | None
    no: int


_NUM_RE = re.compile(r"^\d+$")
_SYM_RE = re.compile(r"^([A-Za-z@#$][A-Za-z0-9@#$]*)([+-]\d+)?$")


class _Translator:
    def __init__(self, module: AsmModule):
        self.m = module
        self.layout = extract_layout(module)
        if not module.usings:
            raise AsmError("no USING base for symbolic addressing")
        self.using_reg = module.usings[0][0]
        self.using_val = module.usings[0][1]
        self.flags: dict[str, str] = {}  # patched code label -> flag var
        self.returns: set[int] = set()
        self.names: dict[int, str] = {}
        self.next_of: dict[int, int | None] = {}
        by_label = {i.label: i for i in module.instructions if i.label}
        self.by_label = by_label

    # -- small lookups

    def _reg(self, tok: str, no: int) -> str:
        t = tok.strip().upper()
        if t in self.m.equates:
            v = self.m.equates[t]
            if 0 <= v <= 15:
                return f"r{v}"
        if _NUM_RE.match(t) and 0 <= int(t) <= 15:
            return f"r{int(t)}"
        raise AsmError(f"{tok} is not a register", no)

    def _is_reg(self, tok: str) -> bool:
        t = tok.strip().upper()
        if t in self.m.equates and 0 <= self.m.equates[t] <= 15:
            return True
        return bool(_NUM_RE.match(t)) and 0 <= int(t) <= 15

    def _code_target(self, tok: str, no: int) -> str:
        t = tok.strip()
        ins = self.by_label.get(t)
        if ins is None:
            raise AsmError(f"branch to unknown label {t}", no)
        return self.names[ins.offset]

    def _data_len(self, sym: str, no: int) -> int:
        d = self.m.data_symbols.get(sym)
        if d is None:
            raise AsmError(f"unknown data symbol {sym}", no)
        return d.dup * d.length if d.dup else d.length

    # -- storage operand parsing

    def _storage(self, tok: str, no: int, *, paren_is_length: bool) -> Storage:
        """Parse SYM | SYM±k | D(B) | SYM(L) | D(L,B) into a Storage."""
        text = tok.strip()
        length = None
        base = None
        if text.endswith(")"):
            o = text.index("(")
            inside = _split_commas(text[o + 1:-1])
            text = text[:o]
            if len(inside) == 2:
                length = self._const(inside[0], no)
                base = self._reg(inside[1], no)
            elif len(inside) == 1:
                if self._is_reg(inside[0]) and not paren_is_length:
                    base = self._reg(inside[0], no)
                else:
                    length = self._const(inside[0], no)
            else:
                raise AsmError(f"cannot read operand {tok!r}", no)
        if _NUM_RE.match(text):
            return Storage(None, int(text), base, length, no)
        m = _SYM_RE.match(text)
        if m is None:
            raise AsmError(f"cannot read operand {tok!r}", no)
        off = int(m.group(2)) if m.group(2) else 0
        return Storage(m.group(1), off, base, length, no)

    def _const(self, tok: str, no: int) -> int:
        t = tok.strip().upper()
        if _NUM_RE.match(t):
            return int(t)
        if t in self.m.equates:
            return self.m.equates[t]
        raise AsmError(f"{tok} is not a constant", no)

    def _disp_expr(self, ref: Storage) -> n.Expr:
        if ref.disp_sym is None:
            return n.IntLit(ref.disp_off)
        sym = ref.disp_sym.lower()
        if ref.disp_off == 0:
            return n.Var(sym)
        op = "+" if ref.disp_off > 0 else "-"
        return n.BinOp(op, n.Var(sym), n.IntLit(abs(ref.disp_off)))

    def _addr_expr(self, ref: Storage) -> n.Expr:
        """Address of a storage operand as a db(displacement, base) term."""
        if ref.disp_sym is not None and ref.disp_sym not in self.m.data_symbols:
            raise AsmError(f"unknown data symbol {ref.disp_sym}", ref.no)
        base = ref.base
        if base is None:
            if ref.disp_sym is None:
                return n.IntLit(ref.disp_off)
            base = self.using_reg
        return n.CallExpr("db", (self._disp_expr(ref), n.Var(base)))

    def _mem(self, ref: Storage, length: n.Expr) -> n.MemRef:
        return n.MemRef(self._addr_expr(ref), length)

    def _ss_len(self, explicit: int | None, ref: Storage) -> n.Expr:
        """SS operand length, rendered as the encoded count plus one."""
        if explicit is None:
            if ref.disp_sym is None:
                raise AsmError("operand needs an explicit length", ref.no)
            explicit = self._data_len(ref.disp_sym, ref.no)
        return n.BinOp("+", n.IntLit(explicit - 1), n.IntLit(1))

    # -- immediates and literals

    def _imm(self, tok: str, no: int) -> n.Expr:
        t = tok.strip()
        if _NUM_RE.match(t):
            return n.IntLit(int(t))
        up = t.upper()
        if up.startswith("C'") and up.endswith("'"):
            return n.StrLit(t[2:-1].encode("ascii"))
        if up.startswith("X'") and up.endswith("'"):
            return n.StrLit(bytes.fromhex(t[2:-1]))
        if up in self.m.equates:
            return n.IntLit(self.m.equates[up])
        raise AsmError(f"cannot read immediate {tok!r}", no)

    def _literal(self, tok: str, no: int) -> tuple[n.StrLit, int]:
        """=type'value' operand: (literal node, byte length)."""
        dup, dtype, length, value = _parse_data_operand(tok[1:], no)
        if dup != 1:
            raise AsmError("literal with duplication", no)
        return n.StrLit(_encode_data(dtype, length, value, no)), length

    # -- instruction translations

    def translate(self) -> n.Program:
        ins = self.m.instructions
        for i in ins:
            self.names[i.offset] = i.label.lower() if i.label else f"lab_{i.offset}"
        for a, b in zip(ins, ins[1:]):
            self.next_of[a.offset] = b.offset
        self.next_of[ins[-1].offset] = None

        self._find_patches()
        for i in ins:
            if i.mnemonic == "BAL":
                nxt = self.next_of[i.offset]
                if nxt is None:
                    raise AsmError("BAL with no return point", i.no)
                self.returns.add(nxt)

        actions: list[tuple[str, n.Stmt]] = []
        for i in ins:
            stmts, closed = self._instr(i)
            if not closed:
                nxt = self.next_of[i.offset]
                # running past the last instruction ends the program
                stmts.append(n.ActionCall(self.names[nxt])
                             if nxt is not None else n.ActionCall(TERMINAL))
            actions.append((self.names[i.offset], n.seq(*stmts)))
        actions.append((DISPATCH, self._dispatch()))

        entry = self.names[ins[0].offset]
        flag_inits: list[n.Stmt] = [
            n.Assign(n.Var(f), n.IntLit(1))
            for _, f in sorted(self.flags.items())]
        if flag_inits:
            head = actions[0]
            actions[0] = (head[0], n.seq(*flag_inits, head[1]))
        body = n.ActionSystem(entry, tuple(actions))
        return n.Program(body=body, layout=self.layout)

    def _find_patches(self) -> None:
        for i in self.m.instructions:
            if i.mnemonic != "MVI" or not i.operands:
                continue
            ref = self._storage(i.operands[0], i.no, paren_is_length=False)
            if ref.disp_sym is None or ref.disp_sym not in self.m.code_symbols:
                continue
            target = self.by_label[ref.disp_sym]
            if ref.disp_off != 1 or target.mnemonic != "B":
                raise AsmError("store into code outside the branch-patch idiom",
                               i.no)
            imm = self._imm(i.operands[1], i.no)
            if imm != n.IntLit(0):
                raise AsmError("branch patch must store a zero mask", i.no)
            self.flags[ref.disp_sym] = f"f_{ref.disp_sym.lower()}"

    def _dispatch(self) -> n.Stmt:
        out: n.Stmt = n.ActionCall(TERMINAL)
        for off in sorted(self.returns, reverse=True):
            out = n.If(n.Compare("=", n.Var("destination"), n.IntLit(off)),
                       n.ActionCall(self.names[off]), out)
        return out

    def _cc_arith(self, target: n.Expr) -> n.Stmt:
        """AP/SP/ZAP set the condition code from the sign of the result."""
        return n.Assign(n.Var("cc"),
                        n.ExternFunc("cp", (target, n.StrLit(b"\x0c"))))

    def _sref(self, i: Instr, k: int, *, first: bool) -> Storage:
        return self._storage(i.operands[k], i.no, paren_is_length=first)

    def _need(self, i: Instr, count: int) -> None:
        if len(i.operands) != count:
            raise AsmError(f"{i.mnemonic} needs {count} operands", i.no)

    def _ss_pair(self, i: Instr) -> tuple[n.Expr, n.Expr, n.Expr]:
        """Destination ref, source expr and shared length of an SS pair."""
        dst = self._sref(i, 0, first=True)
        length = self._ss_len(dst.length, dst)
        d_expr = self._mem(dst, length)
        stok = i.operands[1]
        if stok.startswith("="):
            lit, _ = self._literal(stok, i.no)
            return d_expr, lit, length
        src = self._sref(i, 1, first=False)
        s_len = self._ss_len(src.length, src) if src.length else length
        return d_expr, self._mem(src, s_len), length

    def _packed_pair(self, i: Instr) -> tuple[n.Expr, n.Expr]:
        """Destination and source of a packed SS pair with two lengths."""
        dst = self._sref(i, 0, first=True)
        d_expr = self._mem(dst, self._ss_len(dst.length, dst))
        stok = i.operands[1]
        if stok.startswith("="):
            lit, _ = self._literal(stok, i.no)
            return d_expr, lit
        src = self._sref(i, 1, first=True)
        return d_expr, self._mem(src, self._ss_len(src.length, src))

    def _instr(self, i: Instr) -> tuple[list[n.Stmt], bool]:
        handler = getattr(self, f"_op_{i.mnemonic.lower()}", None)
        if handler is None:
            raise AsmError(f"unsupported mnemonic {i.mnemonic}", i.no)
        return handler(i)

    # load, store, register moves

    def _op_lr(self, i: Instr):
        self._need(i, 2)
        return [n.Assign(n.Var(self._reg(i.operands[0], i.no)),
                         n.Var(self._reg(i.operands[1], i.no)))], False

    def _op_l(self, i: Instr):
        self._need(i, 2)
        ref = self._sref(i, 1, first=False)
        return [n.Assign(n.Var(self._reg(i.operands[0], i.no)),
                         self._mem(ref, n.IntLit(4)))], False

    def _op_st(self, i: Instr):
        self._need(i, 2)
        ref = self._sref(i, 1, first=False)
        return [n.Assign(self._mem(ref, n.IntLit(4)),
                         n.Var(self._reg(i.operands[0], i.no)))], False

    def _op_la(self, i: Instr):
        self._need(i, 2)
        ref = self._sref(i, 1, first=False)
        return [n.Assign(n.Var(self._reg(i.operands[0], i.no)),
                         self._addr_expr(ref))], False

    def _op_slr(self, i: Instr):
        self._need(i, 2)
        r1 = self._reg(i.operands[0], i.no)
        r2 = self._reg(i.operands[1], i.no)
        if r1 != r2:
            raise AsmError("SLR supported only for clearing a register", i.no)
        return [n.Assign(n.Var(r1), n.IntLit(0)),
                n.Assign(n.Var("cc"), n.IntLit(2))], False

    def _reg_span(self, a: str, b: str) -> list[str]:
        lo, hi = int(a[1:]), int(b[1:])
        out = [lo]
        while out[-1] != hi:
            out.append((out[-1] + 1) & 15)
        return [f"r{x}" for x in out]

    def _op_stm(self, i: Instr):
        self._need(i, 3)
        regs = self._reg_span(self._reg(i.operands[0], i.no),
                              self._reg(i.operands[1], i.no))
        ref = self._sref(i, 2, first=False)
        out = []
        for k, r in enumerate(regs):
            slot = Storage(ref.disp_sym, ref.disp_off + 4 * k, ref.base,
                           None, ref.no)
            out.append(n.Assign(self._mem(slot, n.IntLit(4)), n.Var(r)))
        return out, False

    def _op_lm(self, i: Instr):
        self._need(i, 3)
        regs = self._reg_span(self._reg(i.operands[0], i.no),
                              self._reg(i.operands[1], i.no))
        ref = self._sref(i, 2, first=False)
        out = []
        for k, r in enumerate(regs):
            slot = Storage(ref.disp_sym, ref.disp_off + 4 * k, ref.base,
                           None, ref.no)
            out.append(n.Assign(n.Var(r), self._mem(slot, n.IntLit(4))))
        return out, False

    # branching

    def _op_b(self, i: Instr):
        self._need(i, 1)
        target = self._code_target(i.operands[0], i.no)
        if i.label in self.flags:
            flag = self.flags[i.label]
            return [n.If(n.Compare("=", n.Var(flag), n.IntLit(1)),
                         n.ActionCall(target), n.Skip())], False
        return [n.ActionCall(target)], True

    def _cond_branch(self, i: Instr, op: str, value: int):
        self._need(i, 1)
        target = self._code_target(i.operands[0], i.no)
        return [n.If(n.Compare(op, n.Var("cc"), n.IntLit(value)),
                     n.ActionCall(target), n.Skip())], False

    def _op_be(self, i: Instr):
        return self._cond_branch(i, "=", 0)

    def _op_bne(self, i: Instr):
        return self._cond_branch(i, "<>", 0)

    def _op_bnl(self, i: Instr):
        return self._cond_branch(i, "<>", 1)

    def _op_br(self, i: Instr):
        self._need(i, 1)
        return [n.Assign(n.Var("destination"),
                         n.Var(self._reg(i.operands[0], i.no))),
                n.ActionCall(DISPATCH)], True

    def _op_bal(self, i: Instr):
        self._need(i, 2)
        link = self._reg(i.operands[0], i.no)
        target = self._code_target(i.operands[1], i.no)
        ret = self.next_of[i.offset]
        return [n.Assign(n.Var(link), n.IntLit(ret)),
                n.ActionCall(target)], True

    def _op_bct(self, i: Instr):
        self._need(i, 2)
        r = self._reg(i.operands[0], i.no)
        target = self._code_target(i.operands[1], i.no)
        return [n.Assign(n.Var(r), n.BinOp("-", n.Var(r), n.IntLit(1))),
                n.If(n.Compare("<>", n.Var(r), n.IntLit(0)),
                     n.ActionCall(target), n.Skip())], False

    def _op_bctr(self, i: Instr):
        self._need(i, 2)
        r = self._reg(i.operands[0], i.no)
        if i.operands[1].strip() != "0":
            raise AsmError("BCTR branch form is not supported", i.no)
        return [n.Assign(n.Var(r), n.BinOp("-", n.Var(r), n.IntLit(1)))], False

    # byte moves and compares

    def _op_mvc(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr, _ = self._ss_pair(i)
        return [n.ExternCall("mvc", (s_expr,), (d_expr,))], False

    def _op_mvi(self, i: Instr):
        self._need(i, 2)
        ref = self._sref(i, 0, first=False)
        if ref.disp_sym in self.flags:
            return [n.Assign(n.Var(self.flags[ref.disp_sym]), n.IntLit(0))], False
        return [n.Assign(self._mem(ref, n.IntLit(1)),
                         self._imm(i.operands[1], i.no))], False

    def _op_clc(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr, _ = self._ss_pair(i)
        return [n.Assign(n.Var("cc"),
                         n.ExternFunc("clc", (d_expr, s_expr)))], False

    def _op_cli(self, i: Instr):
        self._need(i, 2)
        ref = self._sref(i, 0, first=False)
        return [n.Assign(n.Var("cc"),
                         n.ExternFunc("clc", (self._mem(ref, n.IntLit(1)),
                                              self._imm(i.operands[1], i.no))))], False

    # packed decimal

    def _op_cp(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr = self._packed_pair(i)
        return [n.Assign(n.Var("cc"),
                         n.ExternFunc("cp", (d_expr, s_expr)))], False

    def _op_ap(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr = self._packed_pair(i)
        return [n.Assign(d_expr, n.ExternFunc("ap", (d_expr, s_expr))),
                self._cc_arith(d_expr)], False

    def _op_sp(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr = self._packed_pair(i)
        return [n.Assign(d_expr, n.ExternFunc("sp", (d_expr, s_expr))),
                self._cc_arith(d_expr)], False

    def _op_zap(self, i: Instr):
        self._need(i, 2)
        d_expr, s_expr = self._packed_pair(i)
        return [n.Assign(d_expr, n.ExternFunc("zap", (s_expr,))),
                self._cc_arith(d_expr)], False

    def _op_pack(self, i: Instr):
        self._need(i, 2)
        dst = self._sref(i, 0, first=True)
        d_len = dst.length or self._data_len(dst.disp_sym, dst.no)
        src = self._sref(i, 1, first=True)
        s_expr = self._mem(src, self._ss_len(src.length, src))
        return [n.Assign(self._mem(dst, self._ss_len(dst.length, dst)),
                         n.ExternFunc("pack", (s_expr, n.IntLit(d_len))))], False

    # report editing

    def _edit_pair(self, i: Instr) -> tuple[n.Expr, n.Expr]:
        pat = self._sref(i, 0, first=True)
        p_len = pat.length or self._data_len(pat.disp_sym, pat.no)
        length = n.BinOp("+", n.IntLit(p_len - 1), n.IntLit(1))
        src = self._sref(i, 1, first=False)
        return self._mem(pat, length), self._mem(src, length)

    def _op_ed(self, i: Instr):
        self._need(i, 2)
        p_expr, s_expr = self._edit_pair(i)
        return [n.ExternCall("ed", (s_expr,), (p_expr,))], False

    def _op_edmk(self, i: Instr):
        self._need(i, 2)
        p_expr, s_expr = self._edit_pair(i)
        return [n.ExternCall("edmk", (s_expr,), (p_expr, n.Var("r1")))], False

    def _op_ex(self, i: Instr):
        self._need(i, 2)
        r = self._reg(i.operands[0], i.no)
        sym = i.operands[1].strip()
        template = self.by_label.get(sym)
        if template is None or template.mnemonic != "MVC":
            raise AsmError("EX supported only against an MVC template", i.no)
        dst = self._storage(template.operands[0], template.no,
                            paren_is_length=True)
        if (dst.length or 1) != 1:
            raise AsmError("EX expects a zero length byte in the template",
                           i.no)
        src = self._storage(template.operands[1], template.no,
                            paren_is_length=False)
        length = n.BinOp("+", n.Var(r), n.IntLit(1))
        return [n.ExternCall("mvc", (self._mem(src, length),),
                             (self._mem(dst, length),))], False

    # data set macros

    def _dd_var(self, tok: str, no: int) -> tuple[Dcb, n.Var]:
        name = tok.strip()
        dcb = self.m.dcbs.get(name)
        if dcb is None:
            raise AsmError(f"unknown data set {name}", no)
        return dcb, n.Var(f"{dcb.ddname}_ddname")

    def _op_open(self, i: Instr):
        self._need(i, 1)
        inner = _split_commas(i.operands[0].strip()[1:-1])
        if len(inner) != 2:
            raise AsmError("OPEN needs (dcb,(mode))", i.no)
        _, dd = self._dd_var(inner[0], i.no)
        mode = inner[1].strip().strip("()").lower()
        if mode not in ("input", "output"):
            raise AsmError(f"unsupported OPEN mode {mode}", i.no)
        return [n.ExternCall("open", (dd, n.Var(mode)), (n.Var("os"),))], False

    def _op_close(self, i: Instr):
        self._need(i, 1)
        _, dd = self._dd_var(i.operands[0].strip().strip("()"), i.no)
        return [n.ExternCall("close", (dd,), (n.Var("os"),))], False

    def _op_get(self, i: Instr):
        self._need(i, 2)
        dcb, dd = self._dd_var(i.operands[0], i.no)
        rec = self._sref(i, 1, first=False)
        if rec.disp_sym is None:
            raise AsmError("GET needs a record area", i.no)
        rec_len = self._data_len_or_record(rec.disp_sym, i.no)
        stmts: list[n.Stmt] = [
            n.Assign(n.Var("r0"), n.IntLit(0)),
            n.Assign(n.Var("r1"), n.IntLit(0)),
            n.Assign(n.Var("r15"), n.IntLit(0)),
            n.ExternCall("get", (dd,),
                         (n.Var("os"), n.Var("r0"), n.Var("r1"), n.Var("r15"),
                          self._mem(rec, n.IntLit(rec_len)))),
        ]
        if dcb.eodad:
            stmts.append(n.If(n.ExternCond("end_of_file", (dd,)),
                              n.ActionCall(self._code_target(dcb.eodad, i.no)),
                              n.Skip()))
        return stmts, False

    def _op_put(self, i: Instr):
        self._need(i, 2)
        _, dd = self._dd_var(i.operands[0], i.no)
        rec = self._sref(i, 1, first=False)
        if rec.disp_sym is None:
            raise AsmError("PUT needs a record area", i.no)
        rec_len = self._data_len_or_record(rec.disp_sym, i.no)
        return [n.ExternCall("put", (dd, self._mem(rec, n.IntLit(rec_len))),
                             (n.Var("os"),))], False

    def _data_len_or_record(self, sym: str, no: int) -> int:
        d = self.m.data_symbols.get(sym)
        if d is not None:
            if d.dup == 0:
                return d.length
            return d.dup * d.length
        raise AsmError(f"unknown data symbol {sym}", no)


def translate(module: AsmModule) -> n.Program:
    """Translate a located module into a raw WSL action system."""
    return _Translator(module).translate()


def translate_source(text: str) -> n.Program:
    return translate(parse_asm(text))
