"""Pragmatic textual LLVM IR (".ll") parser.

Parses function definitions, basic blocks and instructions into plain data
objects carrying exactly what the downstream representations need: opcodes,
result types, operand kinds and def-use structure.  Anything outside the
supported instruction families degrades to a generic (opcode, type, operands)
form instead of being rejected.  Metadata, attributes and comdats are stripped
while lexing.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class MalformedIr(Exception):
    """Structurally invalid IR text (unbalanced braces, stray instruction...)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UndefinedLocal(Exception):
    """A LocalValue operand has no defining instruction or parameter."""

    def __init__(self, identifier: str):
        super().__init__(f"undefined local value: {identifier}")
        self.identifier = identifier


class OperandKind(enum.Enum):
    LOCAL = "LocalValue"
    GLOBAL = "GlobalValue"
    CONSTANT = "Constant"
    LABEL = "Label"
    FUNCTION = "FunctionRef"


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    token: str


@dataclass(frozen=True)
class TokenTriple:
    opcode_token: str
    type_token: str
    arg_tokens: tuple[str, ...]


@dataclass
class IrInstruction:
    opcode: str
    type_str: str
    operands: tuple[Operand, ...]
    result_id: str | None = None
    call_target: str | None = None

    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS


@dataclass
class IrBlock:
    label: str
    instructions: list[IrInstruction] = field(default_factory=list)


@dataclass
class IrFunction:
    name: str
    params: list[tuple[str, str]]  # (identifier, type string)
    blocks: list[IrBlock]
    is_declaration: bool = False

    def block_labels(self) -> list[str]:
        return [b.label for b in self.blocks]


@dataclass
class IrModule:
    name: str
    functions: list[IrFunction]
    global_constants: list[tuple[str, str]]

    def function(self, name: str) -> IrFunction:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(name)

    def defined_functions(self) -> list[IrFunction]:
        return [f for f in self.functions if not f.is_declaration]

    def instructions(self):
        for fn in self.defined_functions():
            for block in fn.blocks:
                yield from block.instructions


# Block terminators, including ones whose bodies parse via the generic path.
TERMINATORS = frozenset({
    "ret", "br", "switch", "unreachable", "invoke",
    "resume", "indirectbr", "callbr", "cleanupret", "catchret",
})

SCALAR_TYPES = frozenset({
    "void", "half", "bfloat", "float", "double", "fp128", "x86_fp80",
    "ppc_fp128", "ptr", "label", "token", "metadata", "opaque", "x86_mmx",
})

FLOAT_TYPES = frozenset({
    "half", "bfloat", "float", "double", "fp128", "x86_fp80", "ppc_fp128",
})

CAST_OPCODES = frozenset({
    "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi",
    "uitofp", "sitofp", "ptrtoint", "inttoptr", "bitcast", "addrspacecast",
})

BINARY_OPCODES = frozenset({
    "add", "fadd", "sub", "fsub", "mul", "fmul", "udiv", "sdiv", "fdiv",
    "urem", "srem", "frem", "shl", "lshr", "ashr", "and", "or", "xor",
})

ARITH_FLAGS = frozenset({"nuw", "nsw", "exact", "fast", "nnan", "ninf",
                         "nsz", "arcp", "contract", "afn", "reassoc",
                         "disjoint", "samesign"})

CONSTANT_WORDS = frozenset({"true", "false", "null", "undef", "poison",
                            "none", "zeroinitializer"})

PARAM_ATTR_WORDS = frozenset({
    "noundef", "nonnull", "readonly", "readnone", "writeonly", "nocapture",
    "noalias", "zeroext", "signext", "inreg", "returned", "swiftself",
    "nofree", "nest", "immarg", "noext", "captures", "dereferenceable",
    "dereferenceable_or_null", "sret", "byval", "byref", "preallocated",
    "inalloca", "elementtype", "align", "range", "allocalign", "allocptr",
    "dead_on_unwind", "writable",
})

CALL_PREFIX_WORDS = frozenset({
    "tail", "musttail", "notail", "fastcc", "coldcc", "ccc", "tailcc",
    "swiftcc", "cc", "spir_func", "spir_kernel",
})

_TOKEN_RE = re.compile(
    r'c?"(?:[^"]*)"'                 # string constant / quoted name piece
    r"|[%@](?:\"[^\"]*\"|[-A-Za-z$._0-9]+)"  # sigil identifiers
    r"|![-A-Za-z$._0-9]*"            # metadata refs (stripped later)
    r"|\#\d+"                        # attribute group refs (stripped later)
    r"|[-A-Za-z$._][-A-Za-z$._0-9]*" # words / keywords / types
    r"|[-+]?(?:0x[0-9a-fA-F]+|\d+\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|\.\.\."
    r"|[,()\[\]{}<>*=]"
)

_NUMBER_RE = re.compile(r"^[-+]?(?:0x[0-9a-fA-F]+|\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)$")

_LABEL_LINE_RE = re.compile(r'^(?:"([^"]+)"|([-A-Za-z$._0-9]+)):')


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        elif ch == ";" and not in_string:
            break
        out.append(ch)
    return "".join(out).rstrip()


def _tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _strip_metadata_tokens(tokens: list[str]) -> list[str]:
    """Drop `!x !n` metadata pairs, attribute refs and align suffixes."""
    out: list[str] = []
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.startswith("!"):
            i += 1
            continue
        if t.startswith("#"):
            i += 1
            continue
        if t == "," and i + 1 < len(tokens) and (
                tokens[i + 1].startswith("!") or tokens[i + 1].startswith("#")):
            i += 1
            continue
        if t == "align" and i + 1 < len(tokens) and _NUMBER_RE.match(tokens[i + 1]):
            if out and out[-1] == ",":
                out.pop()
            i += 2
            continue
        out.append(t)
        i += 1
    return out


def _is_int_type(tok: str) -> bool:
    return len(tok) > 1 and tok[0] == "i" and tok[1:].isdigit()


def _looks_like_named_type(tok: str) -> bool:
    return tok.startswith("%") and any(
        tok.startswith(p) for p in ("%struct.", "%union.", "%class.", "%opaque."))


def _consume_group(tokens: list[str], i: int, open_tok: str, close_tok: str) -> int:
    depth = 0
    while i < len(tokens):
        if tokens[i] == open_tok:
            depth += 1
        elif tokens[i] == close_tok:
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    raise ValueError(f"unbalanced {open_tok}")


def consume_type(tokens: list[str], i: int, allow_named: bool = False) -> tuple[str, int] | None:
    """Try to read a type starting at tokens[i]; returns (type text, next index)."""
    if i >= len(tokens):
        return None
    start = i
    t = tokens[i]
    if t in ("[", "{"):
        close = "]" if t == "[" else "}"
        i = _consume_group(tokens, i, t, close)
    elif t == "<":
        # vector or packed struct <{...}>
        i = _consume_group(tokens, i, "<", ">")
    elif t in SCALAR_TYPES or _is_int_type(t):
        i += 1
    elif _looks_like_named_type(t) or (allow_named and t.startswith("%")):
        i += 1
    else:
        return None
    # function-type argument list directly after the base type
    if i < len(tokens) and tokens[i] == "(":
        i = _consume_group(tokens, i, "(", ")")
    # pointer suffixes
    while i < len(tokens):
        if tokens[i] == "*":
            i += 1
        elif tokens[i] == "addrspace" and i + 1 < len(tokens) and tokens[i + 1] == "(":
            i = _consume_group(tokens, i + 1, "(", ")")
        elif tokens[i] == "(":
            i = _consume_group(tokens, i, "(", ")")
        else:
            break
    return " ".join(tokens[start:i]), i


def canonical_type(type_str: str) -> str:
    """Collapse a type string to one of the canonical type-class tokens."""
    t = type_str.strip()
    if t == "void" or t == "":
        return "void"
    first = t.split(" ", 1)[0] if " " in t else t
    if t.endswith("*") or first == "ptr" or "addrspace" in t:
        return "ptrTy"
    if t.startswith("<") and not t.startswith("<{"):
        return "vecTy"
    if t.startswith("[") or t.startswith("{") or t.startswith("<{"):
        return "aggTy"
    if first.startswith("%"):
        return "aggTy"
    if _is_int_type(first):
        return "intTy"
    if first in FLOAT_TYPES:
        return "floatTy"
    if "(" in t:
        return "ptrTy"
    return "aggTy"


def _value_operand(tok: str) -> Operand:
    if tok.startswith("%"):
        return Operand(OperandKind.LOCAL, tok)
    if tok.startswith("@"):
        return Operand(OperandKind.GLOBAL, tok)
    if tok.startswith("c\"") or tok.startswith("\""):
        return Operand(OperandKind.CONSTANT, "string")
    return Operand(OperandKind.CONSTANT, tok)


def _split_top_level(tokens: list[str], sep: str = ",") -> list[list[str]]:
    parts: list[list[str]] = []
    cur: list[str] = []
    depth = 0
    opens = {"(": ")", "[": "]", "{": "}", "<": ">"}
    closes = {v: k for k, v in opens.items()}
    for t in tokens:
        if t in opens:
            depth += 1
        elif t in closes:
            depth -= 1
        if t == sep and depth == 0:
            parts.append(cur)
            cur = []
        else:
            cur.append(t)
    if cur:
        parts.append(cur)
    return parts


def _typed_value(fragment: list[str]) -> Operand | None:
    """Read `<type> <attrs>* <value>` or bare `<value>` from a fragment."""
    toks = [t for t in fragment if t not in PARAM_ATTR_WORDS]
    if not toks:
        return None
    got = consume_type(toks, 0)
    rest = toks[got[1]:] if got else toks
    if not rest:
        # fragment was only a type (e.g. varargs "..."), or a lone constant
        # expression; treat single non-type tokens as values
        if got and got[1] == len(toks) and len(toks) == 1 and toks[0].startswith("%"):
            return _value_operand(toks[0])
        return None
    val = rest[0]
    if val == "(":  # constant expression
        return Operand(OperandKind.CONSTANT, "constexpr")
    if val in ("getelementptr", "bitcast", "ptrtoint", "inttoptr", "add",
               "sub", "mul", "icmp", "select", "trunc"):
        return Operand(OperandKind.CONSTANT, "constexpr")
    if val in ("{", "[", "<"):
        return Operand(OperandKind.CONSTANT, "aggregate")
    return _value_operand(val)


class _FunctionParser:
    """Parses one function body, one logical line at a time."""

    def __init__(self, fn: IrFunction, lineno: int):
        self.fn = fn
        self.lineno = lineno
        self.current: IrBlock | None = None
        self.seen_labels: set[str] = set()

    def _open_block(self, label: str):
        if label in self.seen_labels:
            raise MalformedIr(self.lineno, f"duplicate block label {label!r}")
        if self.current is not None and (
                not self.current.instructions
                or not self.current.instructions[-1].is_terminator()):
            raise MalformedIr(self.lineno, f"block {self.current.label!r} has no terminator")
        self.seen_labels.add(label)
        self.current = IrBlock(label)
        self.fn.blocks.append(self.current)

    def feed(self, line: str, lineno: int):
        self.lineno = lineno
        m = _LABEL_LINE_RE.match(line)
        if m:
            label = m.group(1) or m.group(2)
            self._open_block(label)
            rest = line[m.end():].strip()
            if rest:
                self.feed(rest, lineno)
            return
        if self.current is None:
            self._open_block("entry")
        if self.current.instructions and self.current.instructions[-1].is_terminator():
            raise MalformedIr(lineno, "instruction after block terminator")
        self.current.instructions.append(parse_instruction(line, lineno))

    def finish(self):
        if self.current is not None and (
                not self.current.instructions
                or not self.current.instructions[-1].is_terminator()):
            raise MalformedIr(self.lineno, f"block {self.current.label!r} has no terminator")
        if not self.fn.blocks:
            raise MalformedIr(self.lineno, f"function @{self.fn.name} has an empty body")
        self._validate_labels()

    def _validate_labels(self):
        labels = {b.label for b in self.fn.blocks}
        for block in self.fn.blocks:
            for instr in block.instructions:
                for op in instr.operands:
                    if op.kind is OperandKind.LABEL and op.token not in labels:
                        raise MalformedIr(
                            self.lineno,
                            f"branch target %{op.token} does not name a block "
                            f"in @{self.fn.name}")


def parse_instruction(line: str, lineno: int = 0) -> IrInstruction:
    tokens = _strip_metadata_tokens(_tokenize(line))
    if not tokens:
        raise MalformedIr(lineno, "empty instruction")
    result_id = None
    if tokens[0].startswith("%") and len(tokens) > 1 and tokens[1] == "=":
        result_id = tokens[0]
        tokens = tokens[2:]
    i = 0
    while i < len(tokens) and tokens[i] in CALL_PREFIX_WORDS:
        i += 1
    if i >= len(tokens):
        raise MalformedIr(lineno, "missing opcode")
    opcode = tokens[i]
    rest = tokens[i + 1:]
    try:
        instr = _parse_opcode(opcode, rest, result_id)
    except (ValueError, IndexError, TypeError) as exc:
        raise MalformedIr(lineno, f"cannot parse {opcode!r} instruction: {exc}") from exc
    if result_id is not None:
        if instr.type_str == "void":
            raise MalformedIr(lineno, f"{opcode} assigns a result but has void type")
        instr.result_id = result_id
    elif instr.type_str != "void":
        # value-producing instruction with an ignored result defines nothing
        instr.type_str = "void"
    return instr


def _skip_flags(tokens: list[str]) -> list[str]:
    i = 0
    while i < len(tokens) and tokens[i] in ARITH_FLAGS:
        i += 1
    return tokens[i:]


def _parse_opcode(opcode: str, rest: list[str], result_id: str | None) -> IrInstruction:
    if opcode == "ret":
        if rest and rest[0] == "void":
            return IrInstruction("ret", "void", ())
        op = _typed_value(rest)
        return IrInstruction("ret", "void", (op,) if op else ())

    if opcode == "br":
        if rest and rest[0] == "label":
            return IrInstruction("br", "void",
                                 (Operand(OperandKind.LABEL, rest[1].lstrip("%")),))
        parts = _split_top_level(rest)
        cond = _typed_value(parts[0])
        labels = tuple(Operand(OperandKind.LABEL, p[1].lstrip("%"))
                       for p in parts[1:] if p and p[0] == "label")
        return IrInstruction("br", "void", (cond, *labels))

    if opcode == "switch":
        head, _, case_toks = _partition(rest, "[")
        parts = _split_top_level(head)
        value = _typed_value(parts[0])
        default = Operand(OperandKind.LABEL, parts[1][1].lstrip("%"))
        operands = [value, default]
        if case_toks and case_toks[-1] == "]":
            case_toks = case_toks[:-1]
        # cases are `<ty> <const>, label %bb` pairs
        for chunk in _split_top_level(case_toks):
            if not chunk:
                continue
            if chunk[0] == "label":
                operands.append(Operand(OperandKind.LABEL, chunk[1].lstrip("%")))
            else:
                operands.append(_typed_value(chunk))
        return IrInstruction("switch", "void", tuple(o for o in operands if o))

    if opcode == "unreachable":
        return IrInstruction("unreachable", "void", ())

    if opcode in ("call", "invoke"):
        return _parse_call(opcode, rest, result_id)

    if opcode == "load":
        toks = [t for t in rest if t not in ("atomic", "volatile")]
        parts = _split_top_level(toks)
        got = consume_type(parts[0], 0, allow_named=True)
        if got is None:
            raise ValueError("load without a type")
        type_str, j = got
        if j < len(parts[0]):  # old-style `load i32* %p`
            ptr = _typed_value(parts[0][j:]) or _value_operand(parts[0][j])
            if type_str.endswith("*"):
                type_str = type_str[:-1].strip()
            return IrInstruction("load", type_str, (ptr,))
        ptr = _typed_value(parts[1])
        return IrInstruction("load", type_str, (ptr,))

    if opcode == "store":
        toks = [t for t in rest if t not in ("atomic", "volatile")]
        parts = _split_top_level(toks)
        val = _typed_value(parts[0])
        ptr = _typed_value(parts[1])
        return IrInstruction("store", "void", (val, ptr))

    if opcode == "alloca":
        parts = _split_top_level([t for t in rest if t != "inalloca"])
        operands = []
        for extra in parts[1:]:
            op = _typed_value(extra)
            if op:
                operands.append(op)
        return IrInstruction("alloca", "ptr", tuple(operands))

    if opcode == "getelementptr":
        toks = [t for t in rest if t not in ("inbounds", "nuw", "nusw", "inrange")]
        parts = _split_top_level(toks)
        operands = []
        for frag in parts[1:]:
            op = _typed_value(frag)
            if op:
                operands.append(op)
        return IrInstruction("getelementptr", "ptr", tuple(operands))

    if opcode in BINARY_OPCODES:
        toks = _skip_flags(rest)
        got = consume_type(toks, 0, allow_named=True)
        if got is None:
            raise ValueError(f"{opcode} without a type")
        type_str, j = got
        parts = _split_top_level(toks[j:])
        ops = tuple(_value_operand(p[-1]) if p else None for p in parts)
        return IrInstruction(opcode, type_str, tuple(o for o in ops if o))

    if opcode == "fneg":
        toks = _skip_flags(rest)
        got = consume_type(toks, 0)
        type_str, j = got
        return IrInstruction("fneg", type_str, (_value_operand(toks[j]),))

    if opcode in ("icmp", "fcmp"):
        toks = _skip_flags(rest)
        pred, toks = toks[0], toks[1:]  # noqa: F841  (predicate not retained)
        got = consume_type(toks, 0, allow_named=True)
        _, j = got
        parts = _split_top_level(toks[j:])
        ops = tuple(_value_operand(p[-1]) for p in parts if p)
        return IrInstruction(opcode, "i1", ops)

    if opcode in CAST_OPCODES:
        head, _, tail = _partition(rest, "to")
        src = _typed_value(head)
        got = consume_type(tail, 0, allow_named=True)
        type_str = got[0] if got else "opaque"
        return IrInstruction(opcode, type_str, (src,) if src else ())

    if opcode == "freeze":
        got = consume_type(rest, 0, allow_named=True)
        type_str, j = got
        return IrInstruction("freeze", type_str, (_value_operand(rest[j]),))

    if opcode == "phi":
        toks = _skip_flags(rest)
        got = consume_type(toks, 0, allow_named=True)
        type_str, j = got
        operands: list[Operand] = []
        for pair in _split_top_level(toks[j:]):
            if not pair or pair[0] != "[":
                continue
            inner = pair[1:-1] if pair[-1] == "]" else pair[1:]
            halves = _split_top_level(inner)
            operands.append(_typed_value(halves[0]) or _value_operand(halves[0][-1]))
            operands.append(Operand(OperandKind.LABEL, halves[1][-1].lstrip("%")))
        return IrInstruction("phi", type_str, tuple(operands))

    if opcode == "select":
        parts = _split_top_level(rest)
        cond = _typed_value(parts[0])
        got = consume_type(parts[1], 0, allow_named=True)
        type_str = got[0] if got else "opaque"
        a = _typed_value(parts[1])
        b = _typed_value(parts[2])
        return IrInstruction("select", type_str, (cond, a, b))

    if opcode == "atomicrmw":
        toks = [t for t in rest if t != "volatile"]
        toks = toks[1:]  # drop the rmw operation name
        parts = _split_top_level(toks)
        ptr = _typed_value(parts[0])
        got = consume_type(parts[1], 0, allow_named=True)
        type_str = got[0] if got else "opaque"
        val = _typed_value(parts[1])
        return IrInstruction("atomicrmw", type_str, (ptr, val))

    if opcode == "cmpxchg":
        toks = [t for t in rest if t not in ("volatile", "weak")]
        parts = _split_top_level(toks)
        ptr = _typed_value(parts[0])
        got = consume_type(parts[1], 0, allow_named=True)
        inner = got[0] if got else "opaque"
        cmp = _typed_value(parts[1])
        new = _typed_value(parts[2])
        return IrInstruction("cmpxchg", "{ %s , i1 }" % inner, (ptr, cmp, new))

    if opcode == "fence":
        return IrInstruction("fence", "void", ())

    return _parse_generic(opcode, rest, result_id)


def _parse_call(opcode: str, rest: list[str], result_id: str | None) -> IrInstruction:
    toks = [t for t in rest if t not in PARAM_ATTR_WORDS and t not in CALL_PREFIX_WORDS]
    # locate the callee: last %/@ token directly followed by "(" at top level
    callee_idx = None
    depth = 0
    for k, t in enumerate(toks):
        if t in ("(", "[", "{", "<"):
            if (t == "(" and k > 0 and (toks[k - 1].startswith("@") or toks[k - 1].startswith("%"))
                    and depth == 0):
                callee_idx = k - 1
            depth += 1
        elif t in (")", "]", "}", ">"):
            depth -= 1
    if callee_idx is None:
        raise ValueError("call without a callable")
    callee = toks[callee_idx]
    got = consume_type(toks, 0, allow_named=True)
    if got is not None and got[1] <= callee_idx:
        ret_type = got[0]
        if "(" in ret_type:  # full function type: keep only the return part
            ret_type = ret_type.split("(", 1)[0].strip()
    else:
        ret_type = "void"
    if result_id is None:
        ret_type = "void"
    arg_end = _consume_group(toks, callee_idx + 1, "(", ")")
    arg_toks = toks[callee_idx + 2:arg_end - 1]
    if callee.startswith("@"):
        fn_operand = Operand(OperandKind.FUNCTION, callee)
        target = callee[1:]
    else:
        fn_operand = Operand(OperandKind.LOCAL, callee)
        target = callee
    operands = [fn_operand]
    for frag in _split_top_level(arg_toks):
        op = _typed_value(frag)
        if op:
            operands.append(op)
    if opcode == "invoke":
        tail = toks[arg_end:]
        for k, t in enumerate(tail):
            if t == "label" and k + 1 < len(tail):
                operands.append(Operand(OperandKind.LABEL, tail[k + 1].lstrip("%")))
    return IrInstruction(opcode, ret_type, tuple(operands),
                         result_id=None, call_target=target)


def _parse_generic(opcode: str, rest: list[str], result_id: str | None) -> IrInstruction:
    """Unknown opcode: harvest a type and any obvious value operands."""
    got = consume_type(rest, 0, allow_named=True)
    if got is not None:
        type_str, j = got
    else:
        type_str, j = ("opaque" if result_id is not None else "void"), 0
    operands = []
    for t in rest[j:]:
        if t.startswith("%") or t.startswith("@"):
            operands.append(_value_operand(t))
        elif _NUMBER_RE.match(t) or t in CONSTANT_WORDS:
            operands.append(_value_operand(t))
    if result_id is not None and type_str == "void":
        type_str = "opaque"
    return IrInstruction(opcode, type_str, tuple(operands))


def _partition(tokens: list[str], sep: str) -> tuple[list[str], str, list[str]]:
    depth = 0
    opens = {"(": 1, "[": 1, "{": 1, "<": 1}
    closes = {")": 1, "]": 1, "}": 1, ">": 1}
    for k, t in enumerate(tokens):
        if t == sep and depth == 0:
            return tokens[:k], t, tokens[k + 1:]
        if t in opens:
            depth += 1
        elif t in closes:
            depth -= 1
    return tokens, "", []


def _parse_signature(tokens: list[str], lineno: int) -> tuple[str, str, list[tuple[str, str]]]:
    """Parse `define`/`declare` token stream into (name, ret type, params)."""
    name_idx = None
    for k, t in enumerate(tokens):
        if t.startswith("@") and k + 1 < len(tokens) and tokens[k + 1] == "(":
            name_idx = k
            break
    if name_idx is None:
        raise MalformedIr(lineno, "function signature without @name(...)")
    name = tokens[name_idx][1:]
    if name.startswith('"') and name.endswith('"'):
        name = name[1:-1]
    ret = "void"
    j = 0
    while j < name_idx:
        got = consume_type(tokens, j, allow_named=True)
        if got is not None and got[1] <= name_idx:
            ret = got[0]
            break
        j += 1
    end = _consume_group(tokens, name_idx + 1, "(", ")")
    param_toks = tokens[name_idx + 2:end - 1]
    params: list[tuple[str, str]] = []
    unnamed = 0
    for raw_frag in _split_top_level(param_toks):
        frag: list[str] = []
        k = 0
        while k < len(raw_frag):
            t = raw_frag[k]
            if t in PARAM_ATTR_WORDS:
                # attributes may carry a numeric or parenthesized argument
                if k + 1 < len(raw_frag) and raw_frag[k + 1] == "(":
                    k = _consume_group(raw_frag, k + 1, "(", ")")
                elif k + 1 < len(raw_frag) and _NUMBER_RE.match(raw_frag[k + 1]):
                    k += 2
                else:
                    k += 1
                continue
            frag.append(t)
            k += 1
        if not frag or frag == ["..."]:
            continue
        got = consume_type(frag, 0, allow_named=False)
        if got is None:
            continue
        type_str, j2 = got
        if j2 < len(frag) and frag[j2].startswith("%"):
            pid = frag[j2]
        else:
            pid = f"%{unnamed}"
            unnamed += 1
        params.append((pid, type_str))
    return name, ret, params


def _logical_lines(raw_lines: list[str]):
    """Join physical lines while brackets other than the body brace are open."""
    i = 0
    n = len(raw_lines)
    while i < n:
        line = _strip_comment(raw_lines[i]).strip()
        lineno = i + 1
        i += 1
        if not line:
            continue
        probe = line[:-1] if line.endswith("{") else line
        depth = _bracket_depth(probe)
        while depth > 0 and i < n:
            nxt = _strip_comment(raw_lines[i]).strip()
            i += 1
            line = line + " " + nxt
            depth += _bracket_depth(nxt)
        yield lineno, line


def _bracket_depth(text: str) -> int:
    depth = 0
    in_string = False
    for ch in text:
        if ch == '"':
            in_string = not in_string
        elif not in_string:
            if ch in "([<":
                depth += 1
            elif ch in ")]>":
                depth -= 1
    return depth


_SKIP_PREFIXES = ("target ", "source_filename", "attributes ", "module asm",
                  "uselistorder", "declare_type")


def parse_ir(text: str, name: str = "") -> IrModule:
    """Parse textual LLVM IR into an IrModule.

    Raises MalformedIr on structural problems; unknown opcodes and
    module-level constructs outside the subset degrade gracefully.
    """
    module = IrModule(name=name, functions=[], global_constants=[])
    fn_parser: _FunctionParser | None = None
    for lineno, line in _logical_lines(text.splitlines()):
        if fn_parser is not None:
            if line == "}":
                fn_parser.finish()
                fn_parser = None
            elif line.startswith("define ") or line.startswith("declare "):
                raise MalformedIr(lineno, "function inside function body (unbalanced braces?)")
            else:
                fn_parser.feed(line, lineno)
            continue
        if line == "}":
            raise MalformedIr(lineno, "unmatched '}'")
        if line.startswith("define") and (line.endswith("{") or " {" in line):
            body_inline = None
            sig = line[len("define"):]
            if not sig.rstrip().endswith("{"):
                sig, body_inline = sig.split("{", 1)
            else:
                sig = sig.rstrip()[:-1]
            tokens = _strip_metadata_tokens(_tokenize(sig))
            fname, _ret, params = _parse_signature(tokens, lineno)
            if any(f.name == fname for f in module.functions):
                raise MalformedIr(lineno, f"duplicate function @{fname}")
            fn = IrFunction(name=fname, params=params, blocks=[], is_declaration=False)
            module.functions.append(fn)
            fn_parser = _FunctionParser(fn, lineno)
            if body_inline and body_inline.strip():
                inline = body_inline.strip()
                closed = inline.endswith("}")
                if closed:
                    inline = inline[:-1].strip()
                if inline:
                    fn_parser.feed(inline, lineno)
                if closed:
                    fn_parser.finish()
                    fn_parser = None
            continue
        if line.startswith("declare"):
            tokens = _strip_metadata_tokens(_tokenize(line[len("declare"):]))
            fname, _ret, params = _parse_signature(tokens, lineno)
            if any(f.name == fname for f in module.functions):
                raise MalformedIr(lineno, f"duplicate function @{fname}")
            module.functions.append(
                IrFunction(name=fname, params=params, blocks=[], is_declaration=True))
            continue
        if line.startswith("define"):
            raise MalformedIr(lineno, "define without a body brace")
        if line.startswith("@"):
            tokens = _strip_metadata_tokens(_tokenize(line))
            gname = tokens[0][1:]
            gtype = "opaque"
            for k in range(1, len(tokens)):
                got = consume_type(tokens, k, allow_named=True)
                if got is not None:
                    gtype = got[0]
                    break
            module.global_constants.append((gname, gtype))
            continue
        if line.startswith("%") and "= type" in line:
            continue
        if line.startswith("$") or line.startswith("!"):
            continue
        if any(line.startswith(p) for p in _SKIP_PREFIXES):
            continue
        raise MalformedIr(lineno, f"instruction outside a function/block: {line[:40]!r}")
    if fn_parser is not None:
        raise MalformedIr(len(text.splitlines()), "unbalanced braces: unterminated function body")
    return module


def token_triple(instr: IrInstruction) -> TokenTriple:
    """Canonical (opcode, type class, operand kinds) triple for one instruction."""
    args = tuple(op.kind.value for op in instr.operands
                 if op.kind is not OperandKind.LABEL)
    return TokenTriple(instr.opcode, canonical_type(instr.type_str), args)


def def_use_map(fn: IrFunction) -> dict[str, list[tuple[int, int]]]:
    """Map every defined local id (params included) to its list of use sites."""
    if fn.is_declaration:
        raise ValueError(f"@{fn.name} is a declaration")
    defs: dict[str, list[tuple[int, int]]] = {}
    for pid, _ in fn.params:
        defs[pid] = []
    for block in fn.blocks:
        for instr in block.instructions:
            if instr.result_id is not None:
                defs[instr.result_id] = []
    for bi, block in enumerate(fn.blocks):
        for ii, instr in enumerate(block.instructions):
            for op in instr.operands:
                if op.kind is OperandKind.LOCAL:
                    if op.token not in defs:
                        raise UndefinedLocal(op.token)
                    defs[op.token].append((bi, ii))
    return defs


def successors(block: IrBlock) -> list[str]:
    """Labels of the blocks this block's terminator may branch to."""
    if not block.instructions:
        return []
    term = block.instructions[-1]
    return [op.token for op in term.operands if op.kind is OperandKind.LABEL]


# ---------------------------------------------------------------------------
# Debug pretty-printer (tests only; no compatibility promise).

def render(module: IrModule) -> str:
    parts = []
    for gname, gtype in module.global_constants:
        parts.append(f"@{gname} = global {gtype} zeroinitializer")
    for fn in module.functions:
        params = ", ".join(f"{t} {p}" for p, t in fn.params)
        if fn.is_declaration:
            parts.append(f"declare void @{fn.name}({params})")
            continue
        parts.append(f"define void @{fn.name}({params}) {{")
        for bi, block in enumerate(fn.blocks):
            if bi > 0 or block.label != "entry":
                parts.append(f"{block.label}:")
            for instr in block.instructions:
                parts.append("  " + _render_instruction(instr))
        parts.append("}")
    return "\n".join(parts) + "\n"


def _render_value(op: Operand) -> str:
    return op.token


def _render_instruction(instr: IrInstruction) -> str:  # noqa: C901
    prefix = f"{instr.result_id} = " if instr.result_id is not None else ""
    ops = instr.operands
    op = instr.opcode
    if op == "ret":
        return "ret void" if not ops else f"ret i64 {_render_value(ops[0])}"
    if op == "br":
        if len(ops) == 1:
            return f"br label %{ops[0].token}"
        return (f"br i1 {_render_value(ops[0])}, label %{ops[1].token}, "
                f"label %{ops[2].token}")
    if op == "switch":
        cases = []
        rest = ops[2:]
        for k in range(0, len(rest) - 1, 2):
            cases.append(f"i64 {_render_value(rest[k])}, label %{rest[k + 1].token}")
        return (f"switch i64 {_render_value(ops[0])}, label %{ops[1].token} "
                f"[ {' '.join(cases)} ]")
    if op == "unreachable":
        return "unreachable"
    if op in ("call", "invoke"):
        callee = ops[0].token
        args = ", ".join(f"i64 {_render_value(o)}" for o in ops[1:]
                         if o.kind is not OperandKind.LABEL)
        ret = instr.type_str if instr.result_id is not None else "void"
        text = f"{prefix}{op} {ret} {callee}({args})"
        labels = [o for o in ops if o.kind is OperandKind.LABEL]
        if labels:
            text += f" to label %{labels[0].token} unwind label %{labels[1].token}"
        return text
    if op == "load":
        return f"{prefix}load {instr.type_str}, ptr {_render_value(ops[0])}"
    if op == "store":
        return f"store i64 {_render_value(ops[0])}, ptr {_render_value(ops[1])}"
    if op == "alloca":
        extra = f", i64 {_render_value(ops[0])}" if ops else ""
        return f"{prefix}alloca i64{extra}"
    if op == "getelementptr":
        idx = "".join(f", i64 {_render_value(o)}" for o in ops[1:])
        return f"{prefix}getelementptr i64, ptr {_render_value(ops[0])}{idx}"
    if op in BINARY_OPCODES:
        vals = ", ".join(_render_value(o) for o in ops)
        return f"{prefix}{op} {instr.type_str} {vals}"
    if op == "fneg":
        return f"{prefix}fneg {instr.type_str} {_render_value(ops[0])}"
    if op in ("icmp", "fcmp"):
        pred = "eq" if op == "icmp" else "oeq"
        return f"{prefix}{op} {pred} i64 {_render_value(ops[0])}, {_render_value(ops[1])}"
    if op in CAST_OPCODES:
        return f"{prefix}{op} i64 {_render_value(ops[0])} to {instr.type_str}"
    if op == "freeze":
        return f"{prefix}freeze {instr.type_str} {_render_value(ops[0])}"
    if op == "phi":
        pairs = []
        for k in range(0, len(ops) - 1, 2):
            pairs.append(f"[ {_render_value(ops[k])}, %{ops[k + 1].token} ]")
        return f"{prefix}phi {instr.type_str} {', '.join(pairs)}"
    if op == "select":
        return (f"{prefix}select i1 {_render_value(ops[0])}, "
                f"{instr.type_str} {_render_value(ops[1])}, "
                f"{instr.type_str} {_render_value(ops[2])}")
    if op == "atomicrmw":
        return (f"{prefix}atomicrmw add ptr {_render_value(ops[0])}, "
                f"{instr.type_str} {_render_value(ops[1])} seq_cst")
    if op == "cmpxchg":
        inner = instr.type_str.strip("{} ").rsplit(",", 1)[0].strip()
        return (f"{prefix}cmpxchg ptr {_render_value(ops[0])}, "
                f"{inner} {_render_value(ops[1])}, {inner} {_render_value(ops[2])} "
                f"seq_cst seq_cst")
    if op == "fence":
        return "fence seq_cst"
    vals = ", ".join(_render_value(o) for o in ops)
    ty = instr.type_str if instr.type_str != "void" else ""
    sep = " " if ty and vals else ""
    return f"{prefix}{op} {ty}{sep}{vals}".rstrip()


def structurally_equal(a: IrModule, b: IrModule) -> bool:
    """Structural equality over everything the representations consume."""
    def fn_key(f: IrFunction):
        return (f.name, f.is_declaration,
                tuple((p, canonical_type(t)) for p, t in f.params),
                tuple((b2.label, tuple((i.opcode, canonical_type(i.type_str),
                                        i.result_id, i.call_target, i.operands)
                                       for i in b2.instructions))
                      for b2 in f.blocks))
    return ([fn_key(f) for f in a.functions] == [fn_key(f) for f in b.functions]
            and a.global_constants == b.global_constants)
