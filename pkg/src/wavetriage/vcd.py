"""Streaming reader and writer for IEEE-1364 Value Change Dump files.

Pure standard library on purpose: the parser must run under a tight memory
ceiling and inside subprocesses that should not pay the numpy import cost.

The reader is split in two halves that share one file object:

* :func:`parse_header` consumes the declaration section line by line and
  stops exactly at the line after ``$enddefinitions $end``, so the same
  stream can then be handed to :func:`stream_changes`.
* :func:`stream_changes` yields :class:`ValueChange` records one at a time
  with memory use independent of body length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Iterator, NamedTuple, Union

TIME_UNITS = ("s", "ms", "us", "ns", "ps", "fs")
TIME_MAGNITUDES = (1, 10, 100)

# 64-bit unsigned tick budget; larger timestamps are an error, not wraparound.
MAX_TICK = 2**64 - 1

# IEEE-1364 / 1800 var kinds we normalize. Anything unknown maps to "other"
# because real dumps contain tool-specific kinds.
_KIND_MAP = {
    "wire": "wire",
    "reg": "reg",
    "logic": "logic",
    "bit": "logic",
    "integer": "integer",
}
VAR_KINDS = ("wire", "reg", "logic", "integer", "other")

_SCALAR_CHARS = frozenset("01xzXZ")
_VECTOR_CHARS = frozenset("01xz")

# Identifier codes may be any printable chars including '$', so only these
# exact words are treated as body keywords.
_BODY_KEYWORDS = frozenset(
    {"$end", "$comment", "$dumpvars", "$dumpall", "$dumpon", "$dumpoff"}
)


class VcdError(Exception):
    """Base class for all VCD format errors."""


class MalformedHeader(VcdError):
    pass


class DuplicateFullName(VcdError):
    pass


class MalformedChange(VcdError):
    pass


class TimeRegression(VcdError):
    """A ``#`` timestamp went backwards. Recoverable: reported, stream continues."""


class UndeclaredId(VcdError):
    pass


@dataclass(frozen=True)
class Timescale:
    magnitude: int = 1
    unit: str = "ns"

    def __post_init__(self):
        if self.magnitude not in TIME_MAGNITUDES:
            raise MalformedHeader(f"illegal timescale magnitude {self.magnitude!r}")
        if self.unit not in TIME_UNITS:
            raise MalformedHeader(f"illegal timescale unit {self.unit!r}")

    def __str__(self) -> str:
        return f"{self.magnitude}{self.unit}"


@dataclass(frozen=True)
class SignalDecl:
    """One ``$var`` declaration. ``kind`` is normalized; ``kind_raw`` keeps the
    token as written so a parsed tree can be re-emitted losslessly."""

    id_code: str
    name: str
    width: int
    kind: str
    scope_path: tuple[str, ...]
    kind_raw: str = ""

    def __post_init__(self):
        if not self.id_code:
            raise MalformedHeader("empty identifier code")
        if self.width < 1:
            raise MalformedHeader(f"illegal width {self.width} for {self.name!r}")
        if not self.scope_path:
            raise MalformedHeader(f"$var {self.name!r} outside any scope")
        if not self.kind_raw:
            object.__setattr__(self, "kind_raw", self.kind)

    @property
    def full_name(self) -> str:
        return ".".join(self.scope_path) + "." + self.name

    @property
    def is_real(self) -> bool:
        return self.kind_raw in ("real", "realtime")


@dataclass
class Scope:
    name: str
    kind: str = "module"
    items: list[Union["Scope", SignalDecl]] = field(default_factory=list)


@dataclass
class ScopeTree:
    timescale: Timescale = field(default_factory=Timescale)
    roots: list[Scope] = field(default_factory=list)

    def iter_signals(self) -> Iterator[SignalDecl]:
        """All declarations in depth-first declaration order."""
        stack = [iter(self.roots)]
        while stack:
            try:
                item = next(stack[-1])
            except StopIteration:
                stack.pop()
                continue
            if isinstance(item, SignalDecl):
                yield item
            else:
                stack.append(iter(item.items))

    def id_widths(self) -> dict[str, int]:
        """id_code -> declared width (first declaration wins for aliases)."""
        widths: dict[str, int] = {}
        for sig in self.iter_signals():
            widths.setdefault(sig.id_code, sig.width)
        return widths

    def declared_ids(self) -> frozenset[str]:
        return frozenset(sig.id_code for sig in self.iter_signals())


class ValueChange(NamedTuple):
    time: int
    id_code: str
    value: str  # "0"/"1"/"x"/"z", vector bits like "x01", or real like "r1.5"


def list_full_names(tree: ScopeTree) -> list[tuple[str, str, int]]:
    """Depth-first, declaration-ordered ``(full_name, id_code, width)`` list."""
    return [(s.full_name, s.id_code, s.width) for s in tree.iter_signals()]


def expand_vector(value: str, width: int) -> str:
    """Left-extend a possibly truncated vector value to its declared width.

    Extension char is '0' when the leftmost bit is '1', otherwise the
    leftmost char is replicated ('0', 'x', 'z').
    """
    if len(value) >= width:
        return value
    fill = "0" if value[0] == "1" else value[0]
    return fill * (width - len(value)) + value


def _read_text_line(stream) -> str | None:
    line = stream.readline()
    if not line:
        return None
    if isinstance(line, bytes):
        return line.decode("latin-1")
    return line


def parse_header(stream: IO) -> ScopeTree:
    """Parse the declaration section of a VCD file.

    Accepts text or binary file-like objects. On return the stream is
    positioned at the first change record (the line following
    ``$enddefinitions $end``).
    """
    tree = ScopeTree()
    scope_stack: list[Scope] = []
    seen_names: set[tuple[tuple[str, ...], str]] = set()
    timescale_seen = False

    tokens: list[str] = []
    pos = 0

    def next_token() -> str:
        nonlocal tokens, pos
        while pos >= len(tokens):
            line = _read_text_line(stream)
            if line is None:
                raise MalformedHeader("unexpected end of file before $enddefinitions")
            tokens = line.split()
            pos = 0
        tok = tokens[pos]
        pos += 1
        return tok

    def skip_until_end() -> list[str]:
        body = []
        while True:
            tok = next_token()
            if tok == "$end":
                return body
            body.append(tok)

    while True:
        tok = next_token()
        if tok in ("$comment", "$date", "$version"):
            skip_until_end()
        elif tok == "$timescale":
            body = skip_until_end()
            joined = "".join(body)
            mag_part = joined.rstrip("smunpf")
            unit_part = joined[len(mag_part):]
            try:
                magnitude = int(mag_part)
            except ValueError:
                raise MalformedHeader(f"bad $timescale {' '.join(body)!r}") from None
            tree.timescale = Timescale(magnitude, unit_part)
            timescale_seen = True
        elif tok == "$scope":
            kind = next_token()
            name = next_token()
            if next_token() != "$end":
                raise MalformedHeader("unterminated $scope directive")
            scope = Scope(name=name, kind=kind)
            if scope_stack:
                scope_stack[-1].items.append(scope)
            else:
                tree.roots.append(scope)
            scope_stack.append(scope)
        elif tok == "$upscope":
            if next_token() != "$end":
                raise MalformedHeader("unterminated $upscope directive")
            if not scope_stack:
                raise MalformedHeader("$upscope with no open scope")
            scope_stack.pop()
        elif tok == "$var":
            body = skip_until_end()
            if len(body) < 4:
                raise MalformedHeader(f"$var with too few fields: {' '.join(body)!r}")
            kind_raw, width_tok, id_code, name = body[0], body[1], body[2], body[3]
            # Optional bit-range token ("data [7:0]") folds into the name so
            # split buses stay distinct.
            for extra in body[4:]:
                if extra.startswith("["):
                    name += extra
                else:
                    raise MalformedHeader(f"unexpected token {extra!r} in $var")
            try:
                width = int(width_tok)
            except ValueError:
                raise MalformedHeader(f"bad $var width {width_tok!r}") from None
            if not scope_stack:
                raise MalformedHeader(f"$var {name!r} outside any scope")
            path = tuple(s.name for s in scope_stack)
            if (path, name) in seen_names:
                raise DuplicateFullName(".".join(path) + "." + name)
            seen_names.add((path, name))
            decl = SignalDecl(
                id_code=id_code,
                name=name,
                width=width,
                kind=_KIND_MAP.get(kind_raw, "other"),
                scope_path=path,
                kind_raw=kind_raw,
            )
            scope_stack[-1].items.append(decl)
        elif tok == "$enddefinitions":
            if next_token() != "$end":
                raise MalformedHeader("unterminated $enddefinitions")
            if pos < len(tokens):
                # Change records on the $enddefinitions line would be lost to
                # a line-based reader; reject rather than silently drop them.
                raise MalformedHeader("content after $enddefinitions $end on the same line")
            break
        else:
            raise MalformedHeader(f"unexpected token {tok!r} in header")

    if scope_stack:
        raise MalformedHeader(f"unclosed scope {scope_stack[-1].name!r}")
    if not timescale_seen:
        # Tolerated: many tools omit it. Default (1, ns) applies.
        pass
    return tree


def stream_changes(
    stream: Iterable,
    id_filter: frozenset[str] | set[str] = frozenset(),
    *,
    strict: bool = True,
    on_problem: Callable[[VcdError], None] | None = None,
) -> Iterator[ValueChange]:
    """Yield value changes from a VCD body in file order.

    The header must already have been consumed. An empty ``id_filter`` keeps
    every change. Timestamp regressions are reported through ``on_problem``
    and the stream continues; malformed records raise when ``strict`` is
    true, otherwise they are reported and skipped.
    """
    keep_all = not id_filter

    def report(exc: VcdError):
        if isinstance(exc, TimeRegression) or not strict:
            if on_problem is not None:
                on_problem(exc)
        else:
            raise exc

    current_time = 0
    pending_value: str | None = None  # vector/real value waiting for its id token
    in_comment = False

    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("latin-1")
        for tok in raw.split():
            if in_comment:
                if tok == "$end":
                    in_comment = False
                continue
            if pending_value is not None:
                value, pending_value = pending_value, None
                if tok in _BODY_KEYWORDS:
                    report(MalformedChange(f"vector value without identifier before {tok!r}"))
                    continue
                if keep_all or tok in id_filter:
                    yield ValueChange(current_time, tok, value)
                continue
            c0 = tok[0]
            if c0 == "#":
                try:
                    t = int(tok[1:])
                except ValueError:
                    report(MalformedChange(f"bad timestamp {tok!r}"))
                    continue
                if t < 0 or t > MAX_TICK:
                    report(MalformedChange(f"timestamp {tok!r} outside 64-bit tick range"))
                    continue
                if t < current_time:
                    report(TimeRegression(f"timestamp went backwards: {current_time} -> {t}"))
                current_time = t
            elif c0 in _SCALAR_CHARS:
                ident = tok[1:]
                if not ident:
                    report(MalformedChange(f"scalar change {tok!r} missing identifier"))
                    continue
                if keep_all or ident in id_filter:
                    yield ValueChange(current_time, ident, c0.lower())
            elif c0 in "bB":
                bits = tok[1:].lower()
                if not bits or not _VECTOR_CHARS.issuperset(bits):
                    report(MalformedChange(f"bad vector value {tok!r}"))
                    continue
                pending_value = bits
            elif c0 in "rR":
                num = tok[1:]
                try:
                    float(num)
                except ValueError:
                    report(MalformedChange(f"bad real value {tok!r}"))
                    continue
                pending_value = "r" + num
            elif tok in _BODY_KEYWORDS:
                if tok == "$comment":
                    in_comment = True
                # $dumpvars / $dumpall / $dumpon / $dumpoff / $end pass through;
                # the value records inside them are ordinary changes.
            else:
                report(MalformedChange(f"unrecognized change record {tok!r}"))
    if pending_value is not None:
        report(MalformedChange("vector value at end of file missing identifier"))


def _validate_value(value: str, width: int) -> str | None:
    if value.startswith("r"):
        try:
            float(value[1:])
        except ValueError:
            return f"bad real value {value!r}"
        return None
    if len(value) == 1 and width == 1:
        return None if value in "01xz" else f"bad scalar value {value!r}"
    if not value or not _VECTOR_CHARS.issuperset(value):
        return f"bad vector value {value!r}"
    if len(value) > width:
        return f"vector value {value!r} longer than declared width {width}"
    return None


def write_vcd(
    tree: ScopeTree,
    changes: Iterable[ValueChange],
    out: IO | None = None,
) -> bytes | None:
    """Emit a canonically formatted VCD file.

    Every change's id must be declared in ``tree`` and times must be
    non-decreasing; :func:`parse_header` + :func:`stream_changes` on the
    output recover an equivalent tree and change list.
    """
    import io as _io

    sink = out if out is not None else _io.BytesIO()

    def emit(text: str):
        sink.write(text.encode("latin-1"))

    emit(f"$timescale {tree.timescale} $end\n")

    def emit_scope(scope: Scope):
        emit(f"$scope {scope.kind} {scope.name} $end\n")
        for item in scope.items:
            if isinstance(item, SignalDecl):
                emit(f"$var {item.kind_raw} {item.width} {item.id_code} {item.name} $end\n")
            else:
                emit_scope(item)
        emit("$upscope $end\n")

    for root in tree.roots:
        emit_scope(root)
    emit("$enddefinitions $end\n")

    widths = tree.id_widths()
    last_time: int | None = None
    for change in changes:
        if change.id_code not in widths:
            raise UndeclaredId(change.id_code)
        if change.time < 0 or change.time > MAX_TICK:
            raise TimeRegression(f"time {change.time} outside 64-bit tick range")
        if last_time is not None and change.time < last_time:
            raise TimeRegression(f"time went backwards: {last_time} -> {change.time}")
        problem = _validate_value(change.value, widths[change.id_code])
        if problem:
            raise MalformedChange(problem)
        if change.time != last_time:
            emit(f"#{change.time}\n")
            last_time = change.time
        if change.value.startswith("r"):
            emit(f"{change.value} {change.id_code}\n")
        elif len(change.value) == 1 and widths[change.id_code] == 1:
            emit(f"{change.value}{change.id_code}\n")
        else:
            emit(f"b{change.value} {change.id_code}\n")

    if out is None:
        return sink.getvalue()
    return None
