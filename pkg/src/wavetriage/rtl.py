"""Verilog/SystemVerilog declaration scanner.

Builds the module lookup table: for every module, the declared variables
grouped by their declared type, plus the submodule instantiations needed to
resolve VCD scope paths back to modules. The supported grammar subset covers
module headers (ANSI and non-ANSI ports), net/variable declarations with
packed dimensions, parameters, and module instantiation; procedural bodies
are skipped opaquely.

The tokenizer keeps byte offsets into the original source so downstream
tools (the bug injector) can plan byte-exact edits.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable


class RtlError(Exception):
    pass


class ParseError(RtlError):
    def __init__(self, file: str, line: int, expected: str):
        super().__init__(f"{file}:{line}: expected {expected}")
        self.file = file
        self.line = line
        self.expected = expected


class DuplicateModule(RtlError):
    def __init__(self, name: str):
        super().__init__(f"module {name!r} declared twice")
        self.name = name


class UnknownModule(RtlError):
    def __init__(self, name: str):
        super().__init__(f"unknown module {name!r}")
        self.name = name


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    line: int


@dataclass(frozen=True)
class VarDecl:
    name: str
    decl_type: str
    module: str


@dataclass
class ModuleLookupTable:
    """module -> declared type -> variable names, plus instantiation edges.

    Parameters are recorded separately so they are never treated as
    selectable signals.
    """

    entries: dict[str, dict[str, set[str]]] = field(default_factory=dict)
    instances: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    params: dict[str, set[str]] = field(default_factory=dict)

    def modules(self) -> list[str]:
        return list(self.entries)

    def leaf_names(self, module: str) -> set[str]:
        if module not in self.entries:
            raise UnknownModule(module)
        names: set[str] = set()
        for group in self.entries[module].values():
            names |= group
        return names

    def decl_type_of(self, module: str, name: str) -> str | None:
        for decl_type, group in self.entries.get(module, {}).items():
            if name in group:
                return decl_type
        return None

    def merge(self, other: "ModuleLookupTable") -> None:
        for module in other.entries:
            if module in self.entries:
                raise DuplicateModule(module)
        self.entries.update(other.entries)
        self.instances.update(other.instances)
        self.params.update(other.params)

    def to_json(self) -> str:
        doc = {
            "modules": {
                module: {dt: sorted(names) for dt, names in sorted(groups.items())}
                for module, groups in sorted(self.entries.items())
            },
            "instances": {
                module: [[child, inst] for child, inst in insts]
                for module, insts in sorted(self.instances.items())
            },
            "parameters": {m: sorted(p) for m, p in sorted(self.params.items()) if p},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModuleLookupTable":
        doc = json.loads(text)
        table = cls()
        for module, groups in doc.get("modules", {}).items():
            table.entries[module] = {dt: set(names) for dt, names in groups.items()}
            table.instances[module] = [
                (child, inst) for child, inst in doc.get("instances", {}).get(module, [])
            ]
            table.params[module] = set(doc.get("parameters", {}).get(module, []))
        return table


@dataclass
class DesignSources:
    files: list[tuple[str, str]]

    @classmethod
    def from_paths(cls, paths: Iterable) -> "DesignSources":
        files = []
        for path in paths:
            with open(path, "r", encoding="utf-8") as handle:
                files.append((str(path), handle.read()))
        return cls(files=files)


# ---------------------------------------------------------------------------
# Tokenizer

_ID_START = re.compile(r"[A-Za-z_]")
_ID_CHARS = re.compile(r"[A-Za-z0-9_$]")
_NUM_CHARS = re.compile(r"[0-9a-fA-FxXzZ_?.]")

_MULTI_OPS = (
    "<<<=", ">>>=",
    "===", "!==", "==?", "!=?", "<<<", ">>>", "<<=", ">>=",
    "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "**", "+:", "-:",
    "::", "->", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
    "^=", "~&", "~|", "~^", "^~", "@*",
)

KEYWORDS = frozenset(
    """module endmodule input output inout wire reg logic bit integer int tri
    tri0 tri1 triand trior wand wor supply0 supply1 real realtime time byte
    shortint longint genvar signed unsigned parameter localparam assign
    always always_ff always_comb always_latch initial final begin end if else
    for while repeat forever case casex casez endcase default function
    endfunction task endtask generate endgenerate posedge negedge or and not
    specify endspecify fork join join_any join_none return typedef enum
    struct packed unique priority import export defparam""".split()
)

DECL_TYPES = frozenset(
    """wire reg logic bit integer int tri tri0 tri1 triand trior wand wor
    supply0 supply1 real realtime time byte shortint longint genvar""".split()
)

DIRECTIONS = frozenset({"input", "output", "inout"})

PROCEDURAL = frozenset(
    {"always", "always_ff", "always_comb", "always_latch", "initial", "final"}
)


def tokenize(text: str, file: str = "<text>") -> list[Token]:
    """Lex Verilog source, skipping comments and attributes."""
    tokens: list[Token] = []
    i = 0
    n = len(text)
    line = 1
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c in " \t\r\f":
            i += 1
            continue
        if c == "/" and i + 1 < n:
            if text[i + 1] == "/":
                j = text.find("\n", i)
                i = n if j < 0 else j
                continue
            if text[i + 1] == "*":
                j = text.find("*/", i + 2)
                if j < 0:
                    raise ParseError(file, line, "closing */")
                line += text.count("\n", i, j)
                i = j + 2
                continue
        if c == "(" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*)", i + 2)
            if j < 0:
                raise ParseError(file, line, "closing *)")
            line += text.count("\n", i, j)
            i = j + 2
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if j >= n:
                raise ParseError(file, line, "closing quote")
            tokens.append(Token(text[i : j + 1], i, j + 1, line))
            i = j + 1
            continue
        if c == "\\":  # escaped identifier, terminated by whitespace
            j = i + 1
            while j < n and not text[j].isspace():
                j += 1
            tokens.append(Token(text[i:j], i, j, line))
            i = j
            continue
        if c == "`":
            j = i + 1
            while j < n and _ID_CHARS.match(text[j]):
                j += 1
            tokens.append(Token(text[i:j], i, j, line))
            i = j
            continue
        if _ID_START.match(c):
            j = i + 1
            while j < n and _ID_CHARS.match(text[j]):
                j += 1
            tokens.append(Token(text[i:j], i, j, line))
            i = j
            continue
        if c.isdigit() or (c == "'" and i + 1 < n and text[i + 1] in "bodhBODH01xXzZ"):
            j = i
            seen_quote = False
            while j < n:
                ch = text[j]
                if ch == "'" and not seen_quote:
                    seen_quote = True
                    j += 1
                    if j < n and text[j] in "sS":
                        j += 1
                    if j < n and text[j] in "bodhBODH":
                        j += 1
                    continue
                if _NUM_CHARS.match(ch):
                    j += 1
                    continue
                break
            tokens.append(Token(text[i:j], i, j, line))
            i = j
            continue
        matched = False
        for op in _MULTI_OPS:
            if text.startswith(op, i):
                tokens.append(Token(op, i, i + len(op), line))
                i += len(op)
                matched = True
                break
        if matched:
            continue
        tokens.append(Token(c, i, i + 1, line))
        i += 1
    return tokens


def is_identifier(tok: Token) -> bool:
    t = tok.text
    if t.startswith("\\"):
        return len(t) > 1
    return bool(_ID_START.match(t[0])) and t not in KEYWORDS


# ---------------------------------------------------------------------------
# Scanner

_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")", "]", "}"}


class _Cursor:
    def __init__(self, tokens: list[Token], file: str):
        self.tokens = tokens
        self.file = file
        self.i = 0

    def eof(self) -> bool:
        return self.i >= len(self.tokens)

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def peek_text(self) -> str:
        tok = self.peek()
        return tok.text if tok else ""

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.file, self.last_line(), "more input")
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.advance()
        if tok.text != text:
            raise ParseError(self.file, tok.line, f"{text!r} (found {tok.text!r})")
        return tok

    def last_line(self) -> int:
        return self.tokens[-1].line if self.tokens else 1

    def skip_balanced(self):
        """Consume one bracketed group starting at the current token."""
        opener = self.advance()
        closer = _OPEN.get(opener.text)
        if closer is None:
            raise ParseError(self.file, opener.line, "( or [ or {")
        depth = 1
        while depth:
            tok = self.advance()
            if tok.text in _OPEN:
                depth += 1
            elif tok.text in _CLOSE:
                depth -= 1

    def skip_to(self, *stops: str, balanced: bool = True) -> Token:
        """Consume tokens up to and including the first stop at depth zero."""
        depth = 0
        while True:
            tok = self.advance()
            if balanced:
                if tok.text in _OPEN:
                    depth += 1
                    continue
                if tok.text in _CLOSE:
                    depth -= 1
                    continue
            if depth == 0 and tok.text in stops:
                return tok

    def skip_directive_line(self, line: int):
        while not self.eof() and self.tokens[self.i].line == line:
            self.i += 1


def _normalize_dims(tokens: list[Token]) -> str:
    out = []
    for tok in tokens:
        out.append(tok.text)
    text = "".join(out)
    return text


class _ModuleScan:
    def __init__(self, name: str):
        self.name = name
        self.var_types: dict[str, str] = {}  # name -> decl_type, last var decl wins
        self.params: set[str] = set()
        self.instances: list[tuple[str, str]] = []

    def record_var(self, name: str, decl_type: str, weak: bool = False):
        if weak and name in self.var_types:
            return
        self.var_types[name] = decl_type


def _scan_packed_dims(cur: _Cursor) -> str:
    dims = ""
    while cur.peek_text() == "[":
        start = cur.i
        cur.skip_balanced()
        dims += _normalize_dims(cur.tokens[start : cur.i])
    return dims


def _scan_decl_statement(cur: _Cursor, scan: _ModuleScan, base: str, weak: bool = False):
    """Parse `<base> [signed] [dims] name [dims] [= expr] {, ...} ;`."""
    decl_type = base
    if cur.peek_text() in ("signed", "unsigned"):
        decl_type += " " + cur.advance().text
    dims = _scan_packed_dims(cur)
    if dims:
        decl_type += " " + dims
    while True:
        tok = cur.advance()
        if not is_identifier(tok):
            raise ParseError(cur.file, tok.line, f"identifier (found {tok.text!r})")
        scan.record_var(tok.text, decl_type, weak=weak)
        while cur.peek_text() == "[":  # unpacked dims
            cur.skip_balanced()
        nxt = cur.advance()
        if nxt.text == "=":
            nxt = cur.skip_to(",", ";")
        if nxt.text == ";":
            return
        if nxt.text != ",":
            raise ParseError(cur.file, nxt.line, f"',' or ';' (found {nxt.text!r})")


def _scan_param_statement(cur: _Cursor, scan: _ModuleScan, *, in_header: bool = False):
    """Parse a parameter/localparam declaration; names recorded, not selected."""
    if cur.peek_text() == "type":
        cur.advance()
    elif cur.peek_text() in DECL_TYPES:
        cur.advance()
        if cur.peek_text() in ("signed", "unsigned"):
            cur.advance()
        _scan_packed_dims(cur)
    else:
        _scan_packed_dims(cur)
    while True:
        tok = cur.advance()
        if not is_identifier(tok):
            raise ParseError(cur.file, tok.line, f"parameter name (found {tok.text!r})")
        scan.params.add(tok.text)
        depth_stops = (",", ";", ")") if in_header else (",", ";")
        nxt = cur.peek_text()
        if nxt == "=":
            cur.advance()
            # value expression: consume to separator at depth 0 without eating it
            depth = 0
            while True:
                look = cur.peek()
                if look is None:
                    raise ParseError(cur.file, cur.last_line(), "end of parameter value")
                if look.text in _OPEN:
                    depth += 1
                elif look.text in _CLOSE:
                    if depth == 0 and look.text == ")":
                        return  # header list closes; caller consumes ')'
                    depth -= 1
                elif depth == 0 and look.text in depth_stops:
                    break
                cur.advance()
        sep = cur.peek_text()
        if sep == "," :
            cur.advance()
            if cur.peek_text() in ("parameter", "localparam"):
                cur.advance()
                return _scan_param_statement(cur, scan, in_header=in_header)
            continue
        if sep == ";":
            cur.advance()
            return
        if in_header and sep == ")":
            return
        raise ParseError(cur.file, cur.peek().line if cur.peek() else cur.last_line(), "',' or ';'")


def _scan_ansi_ports(cur: _Cursor, scan: _ModuleScan):
    """Scan the parenthesized ANSI port list. Cursor sits just after '('."""
    decl_type = "wire"
    while True:
        tok = cur.peek()
        if tok is None:
            raise ParseError(cur.file, cur.last_line(), "')' closing port list")
        if tok.text == ")":
            cur.advance()
            return
        if tok.text == ",":
            cur.advance()
            continue
        if tok.text in DIRECTIONS:
            cur.advance()
            decl_type = "wire"  # new direction resets the default type
            continue
        if tok.text in ("parameter", "localparam"):
            cur.advance()
            _scan_param_statement(cur, scan, in_header=True)
            continue
        if tok.text in DECL_TYPES:
            base = cur.advance().text
            if cur.peek_text() in ("signed", "unsigned"):
                base += " " + cur.advance().text
            dims = _scan_packed_dims(cur)
            decl_type = base + (" " + dims if dims else "")
            continue
        if tok.text == "[":
            dims = _scan_packed_dims(cur)
            decl_type = "wire " + dims
            continue
        if tok.text in ("signed", "unsigned"):
            cur.advance()
            continue
        if is_identifier(tok):
            cur.advance()
            scan.record_var(tok.text, decl_type)
            while cur.peek_text() == "[":
                cur.skip_balanced()
            if cur.peek_text() == "=":
                cur.advance()
                depth = 0
                while True:
                    look = cur.peek()
                    if look is None:
                        raise ParseError(cur.file, cur.last_line(), "port default value")
                    if look.text in _OPEN:
                        depth += 1
                    elif look.text == ")" and depth == 0:
                        break
                    elif look.text in _CLOSE:
                        depth -= 1
                    elif look.text == "," and depth == 0:
                        break
                    cur.advance()
            continue
        raise ParseError(cur.file, tok.line, f"port declaration (found {tok.text!r})")


def _header_is_ansi(cur: _Cursor) -> bool:
    """Peek inside '(' to decide ANSI vs. non-ANSI port style."""
    j = cur.i
    tokens = cur.tokens
    while j < len(tokens):
        t = tokens[j].text
        if t == ")":
            return False
        if t in DIRECTIONS or t in DECL_TYPES or t in ("parameter", "localparam"):
            return True
        if t in (".", "{"):
            return False
        if is_identifier(tokens[j]) or t in (",", "[", "]") or t == "signed":
            j += 1
            continue
        return False
    return False


def _skip_statement(cur: _Cursor):
    """Skip one procedural statement (used for always/initial bodies)."""
    tok = cur.peek()
    if tok is None:
        raise ParseError(cur.file, cur.last_line(), "statement")
    text = tok.text
    if text == "begin":
        cur.advance()
        if cur.peek_text() == ":":
            cur.advance()
            cur.advance()
        depth = 1
        while depth:
            t = cur.advance().text
            if t in ("begin", "fork"):
                depth += 1
            elif t in ("case", "casex", "casez"):
                depth += 1
            elif t in ("end", "join", "join_any", "join_none", "endcase"):
                depth -= 1
        return
    if text in ("case", "casex", "casez"):
        cur.advance()
        if cur.peek_text() == "(":
            cur.skip_balanced()
        depth = 1
        while depth:
            t = cur.advance().text
            if t in ("case", "casex", "casez"):
                depth += 1
            elif t == "endcase":
                depth -= 1
        return
    if text in ("if",):
        cur.advance()
        if cur.peek_text() == "(":
            cur.skip_balanced()
        _skip_statement(cur)
        if cur.peek_text() == "else":
            cur.advance()
            _skip_statement(cur)
        return
    if text in ("for", "while", "repeat"):
        cur.advance()
        if cur.peek_text() == "(":
            cur.skip_balanced()
        _skip_statement(cur)
        return
    if text == "forever":
        cur.advance()
        _skip_statement(cur)
        return
    if text == "@":
        cur.advance()
        if cur.peek_text() == "(":
            cur.skip_balanced()
        else:
            cur.advance()  # @* or @identifier
        _skip_statement(cur)
        return
    if text == "@*":
        cur.advance()
        _skip_statement(cur)
        return
    if text == "#":
        cur.advance()
        if cur.peek_text() == "(":
            cur.skip_balanced()
        else:
            cur.advance()
        _skip_statement(cur)
        return
    if text == ";":
        cur.advance()
        return
    cur.skip_to(";")


def _scan_case_in_generate(cur: _Cursor, scan: _ModuleScan, file: str):
    # generate-level case: skip header, then scan items' blocks transparently
    cur.advance()  # case keyword
    cur.skip_balanced()  # (expr)
    depth = 1
    while depth:
        tok = cur.peek()
        if tok is None:
            raise ParseError(file, cur.last_line(), "endcase")
        if tok.text == "endcase":
            cur.advance()
            depth -= 1
            continue
        if tok.text in ("case", "casex", "casez"):
            cur.advance()
            depth += 1
            continue
        cur.advance()


def _scan_instance(cur: _Cursor, scan: _ModuleScan):
    child = cur.advance().text
    if cur.peek_text() == "#":
        cur.advance()
        cur.skip_balanced()
    while True:
        inst_tok = cur.advance()
        if not is_identifier(inst_tok):
            raise ParseError(cur.file, inst_tok.line, f"instance name (found {inst_tok.text!r})")
        while cur.peek_text() == "[":  # instance array range
            cur.skip_balanced()
        scan.instances.append((child, inst_tok.text))
        if cur.peek_text() == "(":
            cur.skip_balanced()
        sep = cur.advance()
        if sep.text == ";":
            return
        if sep.text != ",":
            raise ParseError(cur.file, sep.line, f"',' or ';' (found {sep.text!r})")


def _scan_module_body(cur: _Cursor, scan: _ModuleScan, terminator: str):
    file = cur.file
    while True:
        tok = cur.peek()
        if tok is None:
            raise ParseError(file, cur.last_line(), terminator)
        text = tok.text
        if text == terminator:
            cur.advance()
            return
        if text.startswith("`"):
            line = tok.line
            cur.advance()
            cur.skip_directive_line(line)
            continue
        if text == ";":
            cur.advance()
            continue
        if text in DIRECTIONS:
            cur.advance()
            base = "wire"
            weak = True
            if cur.peek_text() in DECL_TYPES:
                base = cur.advance().text
                weak = False
            _scan_decl_statement(cur, scan, base, weak=weak)
            continue
        if text in DECL_TYPES:
            cur.advance()
            _scan_decl_statement(cur, scan, text)
            if text == "genvar":
                # elaboration-time index, recorded alongside parameters
                for name, decl_type in list(scan.var_types.items()):
                    if decl_type == "genvar":
                        del scan.var_types[name]
                        scan.params.add(name)
            continue
        if text in ("parameter", "localparam"):
            cur.advance()
            _scan_param_statement(cur, scan)
            continue
        if text in ("assign", "defparam", "import", "export", "typedef"):
            cur.advance()
            cur.skip_to(";")
            continue
        if text in PROCEDURAL:
            cur.advance()
            if cur.peek_text() in ("@", "@*"):
                at = cur.advance()
                if at.text == "@":
                    if cur.peek_text() == "(":
                        cur.skip_balanced()
                    else:
                        cur.advance()
            _skip_statement(cur)
            continue
        if text == "function":
            cur.skip_to("endfunction", balanced=False)
            continue
        if text == "task":
            cur.skip_to("endtask", balanced=False)
            continue
        if text == "specify":
            cur.skip_to("endspecify", balanced=False)
            continue
        if text == "generate":
            cur.advance()
            _scan_module_body(cur, scan, "endgenerate")
            continue
        if text in ("for", "if"):
            cur.advance()
            if cur.peek_text() == "(":
                cur.skip_balanced()
            continue
        if text == "else":
            cur.advance()
            continue
        if text in ("case", "casex", "casez"):
            _scan_case_in_generate(cur, scan, file)
            continue
        if text == "begin":
            cur.advance()
            if cur.peek_text() == ":":
                cur.advance()
                cur.advance()
            continue
        if text == "end":
            cur.advance()
            continue
        if is_identifier(tok):
            _scan_instance(cur, scan)
            continue
        raise ParseError(file, tok.line, f"declaration or instantiation (found {text!r})")


def _scan_file(path: str, text: str, table: ModuleLookupTable):
    cur = _Cursor(tokenize(text, path), path)
    while not cur.eof():
        tok = cur.peek()
        if tok.text.startswith("`"):
            line = tok.line
            cur.advance()
            cur.skip_directive_line(line)
            continue
        if tok.text != "module":
            raise ParseError(path, tok.line, f"'module' (found {tok.text!r})")
        cur.advance()
        name_tok = cur.advance()
        if not is_identifier(name_tok):
            raise ParseError(path, name_tok.line, "module name")
        if name_tok.text in table.entries:
            raise DuplicateModule(name_tok.text)
        scan = _ModuleScan(name_tok.text)
        while cur.peek_text() == "import":
            cur.skip_to(";")
        if cur.peek_text() == "#":
            cur.advance()
            cur.expect("(")
            while cur.peek_text() != ")":
                if cur.peek_text() in ("parameter", "localparam"):
                    cur.advance()
                _scan_param_statement(cur, scan, in_header=True)
                if cur.peek_text() == ",":
                    cur.advance()
            cur.expect(")")
        if cur.peek_text() == "(":
            if _header_is_ansi(cur_after_paren(cur)):
                cur.advance()
                _scan_ansi_ports(cur, scan)
            else:
                cur.skip_balanced()
        cur.expect(";")
        _scan_module_body(cur, scan, "endmodule")

        groups: dict[str, set[str]] = {}
        for name, decl_type in scan.var_types.items():
            groups.setdefault(decl_type, set()).add(name)
        table.entries[scan.name] = groups
        table.instances[scan.name] = scan.instances
        table.params[scan.name] = scan.params


def cur_after_paren(cur: _Cursor) -> _Cursor:
    clone = _Cursor(cur.tokens, cur.file)
    clone.i = cur.i + 1
    return clone


def scan_sources(sources: DesignSources) -> ModuleLookupTable:
    """Build the module lookup table from design sources.

    Deterministic for identical input bytes; whitespace and comments do not
    affect the result.
    """
    table = ModuleLookupTable()
    for path, text in sources.files:
        _scan_file(path, text, table)
    return table


def signals_for_targets(
    table: ModuleLookupTable, targets: Iterable[str]
) -> dict[str, set[str]]:
    """Leaf variable names per target module.

    Each target maps to exactly its own declared names: labels stay
    per-module, so a parent target never absorbs a child target's variables.
    """
    out: dict[str, set[str]] = {}
    for target in targets:
        out[target] = table.leaf_names(target)
    return out


def module_body_ranges(tokens: list[Token]) -> dict[str, tuple[int, int]]:
    """Token index range [start, end) of each module's contents.

    The range starts at the token after the module name and ends at the
    matching ``endmodule`` (exclusive). Modules do not nest.
    """
    ranges: dict[str, tuple[int, int]] = {}
    i = 0
    while i < len(tokens):
        if tokens[i].text == "module" and i + 1 < len(tokens):
            name = tokens[i + 1].text
            start = i + 2
            j = start
            while j < len(tokens) and tokens[j].text != "endmodule":
                j += 1
            ranges[name] = (start, j)
            i = j + 1
        else:
            i += 1
    return ranges
