"""The ``.cvm`` text format: parser (text -> prototypes -> types), canonical
writer, and the type-path file source used by loaders.

Grammar (whitespace-insensitive, ``#`` starts a line comment)::

    file    := { typedef } [ scene ]
    typedef := "type" QNAME "{" "interface" "{" { prop } "}" "impl" "{" { item } "}" "}"
    prop    := "[" flags "]" TYPEREF NAME [ "=" value ]
    item    := node | route | deny
    node    := [ "DEF" NAME ] TYPEREF "{" { NAME ":" value } "}"
    value   := literal | node | "USE" NAME [ "." NAME ] | "[" { value } "]"
    route   := "route" NAME "." NAME "->" NAME "." NAME
    deny    := "deny" NAME "." NAME "[" flags "]"
    scene   := "scene" "{" { item } "}"
    literal := INT | FLOAT | "true" | "false" | STRING

``USE`` of an interface property shares it; ``USE`` of a DEF reuses that
instance as a child; ``USE def.prop`` shares a composing property.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .composer import ChildRef, ComposedImplementation, Literal, create_from_prototype
from .core import MISSING, Access, Type, TypeLoader, same_value
from .errors import CompoVMError, NotSerializable, ParseError, UnknownName, UnresolvedType, ValidationFault
from .prototype import ComposingInstance, Prototype, PropertyPrototype
from .runtime import Instance, Space

SCENE_TYPE_NAME = "Scene"
EXTENSION = ".cvm"

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<float>-?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+))
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>[{}\[\]=:])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str, path=None) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, path)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class ParseResult:
    types: list = field(default_factory=list)
    scene: Optional[Prototype] = None


class _Parser:
    def __init__(self, text: str, loader: TypeLoader, path=None):
        self.tokens = tokenize(text, path)
        self.pos = 0
        self.loader = loader
        self.path = path
        self.space = Space(loader)
        self._anon = 0

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset=1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message, tok=None, cls=ParseError):
        tok = tok or self.tok
        return cls(message, tok.line, tok.column, self.path)

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("name", "punct", "arrow")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def simple_name(self) -> Token:
        tok = self.expect_kind("name", "a name")
        if "." in tok.text:
            raise self.error(f"expected a plain name, found {tok.text!r}", tok)
        return tok

    def dotted_pair(self) -> tuple[Token, str, str]:
        tok = self.expect_kind("name", "NAME.NAME")
        parts = tok.text.split(".")
        if len(parts) != 2:
            raise self.error(f"expected NAME.NAME, found {tok.text!r}", tok)
        return tok, parts[0], parts[1]

    def flags(self) -> Access:
        self.expect("[")
        text = ""
        if self.tok.kind == "name":
            tok = self.advance()
            text = tok.text
            try:
                access = Access.parse(text)
            except CompoVMError as e:
                raise self.error(str(e), tok) from None
        else:
            access = Access.NONE
        self.expect("]")
        return access

    def typeref(self) -> str:
        tok = self.expect_kind("name", "a type name")
        name = tok.text
        while self.at("[") and self.peek().text == "]":
            self.advance()
            self.advance()
            name += "[]"
        return name

    def wrap(self, tok: Token, fn, *args):
        """Run a prototype operation, attaching the source location to failures."""
        try:
            return fn(*args)
        except ParseError:
            raise
        except CompoVMError as e:
            if e.where is None:
                e.where = f"{self.path + ':' if self.path else ''}{tok.line}:{tok.column}"
                e.location = (tok.line, tok.column)
            raise

    # -- grammar -------------------------------------------------------------

    def parse_file(self) -> ParseResult:
        result = ParseResult()
        while self.at("type"):
            result.types.append(self.typedef())
        if self.at("scene"):
            start = self.advance()
            proto = Prototype(SCENE_TYPE_NAME, self.space)
            self.expect("{")
            while not self.at("}"):
                self.item(proto)
            self.expect("}")
            result.scene = proto
            result.scene_location = (start.line, start.column)
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return result

    def typedef(self) -> Type:
        start = self.expect("type")
        name_tok = self.expect_kind("name", "a type name")
        proto = Prototype(name_tok.text, self.space)
        self.expect("{")
        self.expect("interface")
        self.expect("{")
        while not self.at("}"):
            self.prop(proto)
        self.expect("}")
        self.expect("impl")
        self.expect("{")
        while not self.at("}"):
            self.item(proto)
        self.expect("}")
        self.expect("}")
        return self.wrap(name_tok, create_from_prototype, self.loader, proto)

    def prop(self, proto: Prototype) -> None:
        start = self.tok
        access = self.flags()
        vt = self.typeref()
        name = self.simple_name()
        default = MISSING
        if self.at("="):
            self.advance()
            default = self.value_literal()
        self.wrap(start, proto.add_interface_property, name.text, vt, access, default)

    def item(self, proto: Prototype) -> None:
        if self.at("route"):
            start = self.advance()
            _, sd, sp = self.dotted_pair()
            self.expect("->")
            _, td, tp = self.dotted_pair()
            for d, tok in ((sd, start), (td, start)):
                if proto.lookup(d) is None:
                    raise self.error(f"unknown name {d!r}", tok, UnknownName)
            self.wrap(start, proto.add_route, (sd, sp), (td, tp))
        elif self.at("deny"):
            start = self.advance()
            tok, d, p = self.dotted_pair()
            if proto.lookup(d) is None:
                raise self.error(f"unknown name {d!r}", tok, UnknownName)
            access = self.flags()
            self.wrap(start, proto.restrict_access, (d, p), access)
        else:
            self.node(proto)

    def node(self, proto: Prototype) -> ComposingInstance:
        start = self.tok
        if self.at("DEF"):
            self.advance()
            def_name = self.simple_name().text
        else:
            def_name = self._anonymous(proto)
        type_tok = self.tok
        tname = self.typeref()
        ci = self.wrap(type_tok, proto.add_component, def_name, tname)
        self.expect("{")
        while not self.at("}"):
            field_tok = self.simple_name()
            self.expect(":")
            self.field(proto, ci, field_tok)
        self.expect("}")
        return ci

    def _anonymous(self, proto: Prototype) -> str:
        while True:
            self._anon += 1
            name = f"_{self._anon}"
            if proto.lookup(name) is None:
                return name

    def field(self, proto: Prototype, ci: ComposingInstance, field_tok: Token) -> None:
        prop = field_tok.text
        self.wrap(field_tok, ci.index, prop)
        if self.at("USE"):
            self.use(proto, ci, prop, field_tok)
        elif self.at("["):
            self.advance()
            items: list = []
            while not self.at("]"):
                if self.at("USE"):
                    self.advance()
                    tok = self.simple_name()
                    target = proto.lookup(tok.text)
                    if not isinstance(target, ComposingInstance):
                        raise self.error(f"unknown DEF {tok.text!r}", tok, UnknownName)
                    items.append(("child", tok.text, tok))
                elif self.tok.kind == "name" and self.tok.text not in ("true", "false"):
                    tok = self.tok
                    items.append(("child", self.node(proto).def_name, tok))
                else:
                    items.append(("lit", self.value_literal(), self.tok))
            self.expect("]")
            kinds = {k for k, _, _ in items}
            if kinds == {"child"}:
                # replace, then accumulate
                self.wrap(field_tok, proto.set_field, ci, prop, (), False)
                for _, name, tok in items:
                    self.wrap(tok, proto.link_child, ci, prop, name, False)
            elif len(kinds) > 1:
                raise self.error("cannot mix literals and nodes in one array", field_tok)
            else:
                self.wrap(field_tok, proto.set_field, ci, prop, tuple(v for _, v, _ in items), False)
        elif self.tok.kind == "name" and self.tok.text not in ("true", "false"):
            tok = self.tok
            child = self.node(proto)
            self.wrap(tok, proto.link_child, ci, prop, child.def_name, False)
        else:
            tok = self.tok
            self.wrap(tok, proto.set_field, ci, prop, self.literal(), False)

    def use(self, proto: Prototype, ci: ComposingInstance, prop: str, field_tok: Token) -> None:
        self.expect("USE")
        tok = self.expect_kind("name", "a name after USE")
        parts = tok.text.split(".")
        if len(parts) > 2:
            raise self.error(f"bad USE target {tok.text!r}", tok)
        target = proto.lookup(parts[0])
        if target is None:
            raise self.error(f"unknown name {parts[0]!r}", tok, UnknownName)
        if len(parts) == 2:
            if not isinstance(target, ComposingInstance):
                raise self.error(f"{parts[0]!r} is not a DEF", tok, UnknownName)
            source = self.wrap(tok, target.slot, parts[1])
            self.wrap(tok, proto.share_property, ci, prop, source)
        elif isinstance(target, PropertyPrototype):
            self.wrap(tok, proto.share_property, ci, prop, target)
        else:
            self.wrap(tok, proto.link_child, ci, prop, target.def_name, False)

    def value_literal(self):
        """A literal or a bracketed list of literals."""
        if self.at("["):
            self.advance()
            items = []
            while not self.at("]"):
                items.append(self.value_literal())
            self.expect("]")
            return tuple(items)
        return self.literal()

    def literal(self):
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return int(tok.text)
        if tok.kind == "float":
            self.advance()
            return float(tok.text)
        if tok.kind == "string":
            self.advance()
            try:
                return json.loads(tok.text)
            except ValueError:
                raise self.error(f"bad string literal {tok.text}", tok) from None
        if tok.kind == "name" and tok.text in ("true", "false"):
            self.advance()
            return tok.text == "true"
        raise self.error(f"expected a literal, found {tok.text or 'end of input'!r}")


def parse(text: str, loader: TypeLoader, path=None) -> ParseResult:
    """Parse source text, registering every defined type in ``loader``."""
    return _Parser(text, loader, path).parse_file()


def parse_literal(text: str):
    """Parse a single literal or literal array, e.g. for scripts and the shell."""
    p = _Parser(text, None)
    value = p.value_literal()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after literal")
    return value


def parse_file(path, loader: TypeLoader) -> ParseResult:
    path = str(path)
    with open(path, encoding="utf-8") as f:
        return parse(f.read(), loader, path)


# -- writing -----------------------------------------------------------------


def format_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise NotSerializable(f"{v!r} has no literal form")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, tuple):
        return "[" + " ".join(format_value(x) for x in v) + "]"
    if isinstance(v, Instance):
        return f"<{v.type.name} {v.label}>"
    raise NotSerializable(f"{v!r} has no literal form")


def _format_initial(init) -> str:
    if isinstance(init, Literal):
        if init.value is None:
            raise NotSerializable("null references have no literal form")
        return format_value(init.value)
    refs = [f"USE {n}" for n in init.names]
    return "[" + " ".join(refs) + "]" if init.array else refs[0]


def write_type(t: Type) -> str:
    """Canonical source text for a composed type."""
    impl = t.implementation
    if not isinstance(impl, ComposedImplementation):
        raise NotSerializable(f"{t.name} is not a composed type")
    n = len(t.interface)
    out = [f"type {t.name} {{"]
    if n == 0:
        out.append("  interface {}")
    else:
        out.append("  interface {")
        for p in t.interface:
            line = f"    [{p.access}] {p.value_type.name} {p.name}"
            if p.default is not None:
                line += f" = {format_value(p.default)}"
            out.append(line)
        out.append("  }")

    body: list[str] = []
    hidden_owner: dict[int, str] = {}
    denies: list[str] = []
    for ct in impl.composing:
        iface = ct.component_type.interface
        fields = []
        for idx, p in enumerate(iface):
            link = ct.link_of(idx)
            init = ct.initial_of(idx)
            if link is not None and link < n:
                fields.append(f"{p.name}: USE {t.interface[link].name}")
            elif link is not None:
                if link in hidden_owner:
                    fields.append(f"{p.name}: USE {hidden_owner[link]}")
                else:
                    hidden_owner[link] = f"{ct.def_name}.{p.name}"
                    h = impl.hidden[link - n]
                    if not (isinstance(h.initial, Literal) and same_value(h.initial.value, p.default)):
                        fields.append(f"{p.name}: {_format_initial(h.initial)}")
            elif init is not None:
                fields.append(f"{p.name}: {_format_initial(init)}")
            denied = p.access & ~ct.access[idx]
            if denied:
                denies.append(f"    deny {ct.def_name}.{p.name} [{denied}]")
        head = f"    DEF {ct.def_name} {ct.component_type.name} {{"
        if fields:
            body.append(head)
            body.extend(f"      {f}" for f in fields)
            body.append("    }")
        else:
            body.append(head + "}")
    body.extend(denies)

    def end(def_name, idx):
        if def_name is None:
            return f"{t.interface[idx].name}.value"
        ct = impl.by_name(def_name)
        return f"{def_name}.{ct.component_type.interface[idx].name}"

    for r in impl.routes:
        body.append(f"    route {end(r.source, r.source_index)} -> {end(r.target, r.target_index)}")
    if body:
        out.append("  impl {")
        out.extend(body)
        out.append("  }")
    else:
        out.append("  impl {}")
    out.append("}")
    return "\n".join(out) + "\n"


# -- type path -----------------------------------------------------------------


def type_path_from_env(extra=()) -> list[str]:
    """``extra`` directories first, then ``COMPOVM_TYPE_PATH`` entries."""
    env = os.environ.get("COMPOVM_TYPE_PATH", "")
    return [str(p) for p in extra] + [p for p in env.split(os.pathsep) if p]


def type_file(directory, name: str) -> Path:
    return Path(directory, *name.split(".")).with_suffix(EXTENSION)


def load_from_type_path(loader: TypeLoader, name: str) -> Optional[Type]:
    """Find ``a/b/C.cvm`` for ``a.b.C`` on the loader's type path and parse it."""
    if "<" in name or name.endswith("[]"):
        return None
    for directory in loader.type_path:
        path = type_file(directory, name)
        if path.is_file():
            result = parse_file(path, loader)
            found = loader.lookup(name)
            if found is None:
                defined = ", ".join(t.name for t in result.types) or "nothing"
                raise UnresolvedType(name, f"{path} defines {defined}, not {name}")
            return found
    return None


def file_source_resolve(loader: TypeLoader, name: str, type_path=None) -> Type:
    if type_path is not None:
        loader = TypeLoader(loader, type_path)
    found = loader.lookup(name) or load_from_type_path(loader, name)
    if found is None:
        raise UnresolvedType(name)
    return found
