"""Immutable type model: type refs, access rights, property and interface
types, value domains, and the caching type-loader hierarchy."""

from __future__ import annotations

import enum
import itertools
import re
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Iterator, Mapping, Optional

from .errors import InvalidAccess, NameConflict, TypeMismatch, UnknownProperty, UnresolvedType


class _Missing:
    __slots__ = ()

    def __repr__(self):
        return "MISSING"

    def __bool__(self):
        return False


MISSING: Any = _Missing()

_SEGMENT = r"[A-Za-z_][A-Za-z0-9_]*"
_QNAME_RE = re.compile(rf"{_SEGMENT}(?:\.{_SEGMENT})*\Z")
_ids = itertools.count(1)

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1


def valid_type_name(name: str) -> bool:
    return bool(name) and _QNAME_RE.match(name) is not None


def wrap_int32(v: int) -> int:
    return (v - INT32_MIN) % 2**32 + INT32_MIN


class Access(enum.Flag):
    NONE = 0
    R = enum.auto()
    W = enum.auto()
    B = enum.auto()
    IR = enum.auto()
    IW = enum.auto()

    @classmethod
    def parse(cls, text: "str | Access") -> "Access":
        """Parse a comma-free flag string such as ``RWB`` or ``[RBIRIW]``."""
        if isinstance(text, Access):
            return text
        s = text.strip()
        if s.startswith("[") and s.endswith("]"):
            s = s[1:-1]
        result = cls.NONE
        pos = 0
        while pos < len(s):
            for token in ("IR", "IW", "R", "W", "B"):
                if s.startswith(token, pos):
                    result |= cls[token]
                    pos += len(token)
                    break
            else:
                raise InvalidAccess(f"bad access flags {text!r}")
        return result

    def flags(self) -> list["Access"]:
        return [f for f in _FLAG_ORDER if f in self]

    def __str__(self) -> str:
        return "".join(f.name for f in self.flags())


_FLAG_ORDER = (Access.R, Access.W, Access.B, Access.IR, Access.IW)
FULL_VARIABLE_ACCESS = Access.R | Access.W | Access.B
INDEXED = Access.IR | Access.IW


class Category(enum.Enum):
    IMMUTABLE = "Immutable"
    MUTABLE = "Mutable"
    BOUND = "Bound"
    EXTERNAL = "External"

    @classmethod
    def for_access(cls, access: Access) -> "Category":
        if Access.B in access:
            return cls.BOUND
        if Access.W in access:
            return cls.MUTABLE
        return cls.IMMUTABLE


def check_access(access: Access, value_type: "Type | None" = None) -> Access:
    if Access.B in access and Access.R not in access:
        raise InvalidAccess(f"[{access}]: a bound property must be readable")
    if access & INDEXED and value_type is not None and not value_type.is_array:
        raise InvalidAccess(f"[{access}]: indexed access needs an array type, got {value_type.name}")
    return access


def narrow_access(base: Access, deny: Access, value_type: "Type | None" = None) -> Access:
    """Remove the ``deny`` rights from ``base``. Never adds rights."""
    return check_access(base & ~deny, value_type)


@dataclass(frozen=True)
class TypeRef:
    id: int
    name: str

    def __str__(self):
        return self.name


class InstanceBase:
    """Marker base so value domains can recognise runtime instances."""

    __slots__ = ()
    type: "Type"


# -- implementations ---------------------------------------------------------


@dataclass(frozen=True)
class ValueDomain:
    """A primitive value type decided by a membership predicate."""

    predicate: Callable[[Any], bool]
    zero: Any = MISSING
    supertypes: tuple = ()


@dataclass(frozen=True)
class ArrayImpl:
    element: "Type"


@dataclass(frozen=True)
class VariableImpl:
    value_type: "Type"


# -- property / interface / type ---------------------------------------------


@dataclass(frozen=True)
class PropertyType:
    name: str
    value_type: "Type"
    access: Access
    default: Any = MISSING
    category: Category = Category.MUTABLE
    index: int = 0
    link: Optional[int] = None  # enclosing interface index, External only

    @property
    def has_default(self) -> bool:
        return self.default is not MISSING


def make_property(name: str, value_type: "Type", access: Access, default: Any = MISSING,
                  index: int = 0) -> PropertyType:
    check_access(access, value_type)
    if default is not MISSING:
        default = normalize(value_type, default)
        if not value_conforms(value_type, default):
            raise TypeMismatch(f"default {default!r} for {name!r} is not a {value_type.name}")
    return PropertyType(name, value_type, access, default, Category.for_access(access), index)


@dataclass(frozen=True)
class InterfaceType:
    properties: tuple = ()
    by_name: Mapping[str, int] = field(default_factory=lambda: MappingProxyType({}))

    @classmethod
    def build(cls, props) -> "InterfaceType":
        props = tuple(props)
        names: dict[str, int] = {}
        fixed = []
        for i, p in enumerate(props):
            if p.name in names:
                raise NameConflict(f"duplicate property {p.name!r}")
            names[p.name] = i
            if p.index != i:
                p = PropertyType(p.name, p.value_type, p.access, p.default, p.category, i, p.link)
            fixed.append(p)
        return cls(tuple(fixed), MappingProxyType(names))

    def __len__(self):
        return len(self.properties)

    def __iter__(self) -> Iterator[PropertyType]:
        return iter(self.properties)

    def __getitem__(self, i: int) -> PropertyType:
        return self.properties[i]

    def index(self, prop: "str | int") -> int:
        if isinstance(prop, int) and not isinstance(prop, bool):
            if 0 <= prop < len(self.properties):
                return prop
            raise UnknownProperty(f"no property #{prop}")
        try:
            return self.by_name[prop]
        except KeyError:
            raise UnknownProperty(f"no property {prop!r}") from None


def lookup_property(interface: InterfaceType, name: str) -> int:
    return interface.index(name)


@dataclass(frozen=True, eq=False)
class Type:
    """``{name, interface, implementation}``; compared by identity."""

    ref: TypeRef
    interface: InterfaceType
    implementation: Any

    @property
    def name(self) -> str:
        return self.ref.name

    @property
    def id(self) -> int:
        return self.ref.id

    @property
    def is_value_domain(self) -> bool:
        return isinstance(self.implementation, (ValueDomain, ArrayImpl))

    @property
    def is_array(self) -> bool:
        return isinstance(self.implementation, ArrayImpl)

    @property
    def is_component(self) -> bool:
        if self.is_value_domain:
            return False
        return all(p.has_default for p in self.interface)

    def __repr__(self):
        return f"<Type {self.name}#{self.id}>"


def new_type(name: str, interface: InterfaceType, implementation: Any) -> Type:
    return Type(TypeRef(next(_ids), name), interface, implementation)


# -- values ------------------------------------------------------------------


def zero_value(t: Type) -> Any:
    impl = t.implementation
    if isinstance(impl, ValueDomain):
        return impl.zero
    if isinstance(impl, ArrayImpl):
        return ()
    return MISSING


def normalize(t: Type, value: Any) -> Any:
    """Arrays are stored as tuples so a stored value can never be mutated."""
    if isinstance(t.implementation, ArrayImpl) and isinstance(value, (list, tuple)):
        return tuple(normalize(t.implementation.element, v) for v in value)
    return value


def value_conforms(t: Type, value: Any) -> bool:
    impl = t.implementation
    if isinstance(impl, ValueDomain):
        return bool(impl.predicate(value))
    if isinstance(impl, ArrayImpl):
        return isinstance(value, (tuple, list)) and all(value_conforms(impl.element, v) for v in value)
    return isinstance(value, InstanceBase) and value.type is t


def assignable(src: Type, dst: Type) -> bool:
    """May a value of ``src`` always be stored in a property of ``dst``?"""
    if src is dst:
        return True
    if isinstance(src.implementation, ArrayImpl) and isinstance(dst.implementation, ArrayImpl):
        return assignable(src.implementation.element, dst.implementation.element)
    if dst.name == "Node":
        return not src.is_value_domain or src.name == "Node"
    if isinstance(src.implementation, ValueDomain):
        return dst.name in src.implementation.supertypes
    return False


def same_value(a: Any, b: Any) -> bool:
    """Structural equality for primitives and arrays, identity for instances."""
    if isinstance(a, InstanceBase) or isinstance(b, InstanceBase):
        return a is b
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(same_value(x, y) for x, y in zip(a, b))
    return type(a) is type(b) and a == b


def _is_int32(v):
    return type(v) is int and INT32_MIN <= v <= INT32_MAX


PRIMITIVES = {
    "Int32": ValueDomain(_is_int32, 0),
    "Float64": ValueDomain(lambda v: type(v) is float, 0.0),
    "Boolean": ValueDomain(lambda v: type(v) is bool, False),
    "String": ValueDomain(lambda v: type(v) is str, ""),
    # null or any instance; the only value type whose zero is a reference
    "Node": ValueDomain(lambda v: v is None or isinstance(v, InstanceBase), None),
}


# -- loaders -----------------------------------------------------------------


class TypeLoader:
    """Parent-first, caching resolver from dotted names to types.

    Resolution order: parent loader, own cache, synthesized array and
    variable types, then ``a/b/C.cvm`` files on the type path.
    """

    def __init__(self, parent: "TypeLoader | None" = None, type_path=()):
        self.parent = parent
        self.type_path = tuple(str(p) for p in type_path)
        self._cache: dict[str, Type] = {}
        self._lock = threading.RLock()
        self._loading: set[str] = set()

    @classmethod
    def root(cls, type_path=()) -> "TypeLoader":
        loader = cls(type_path=type_path)
        for name, domain in PRIMITIVES.items():
            loader.register(new_type(name, InterfaceType.build(()), domain))
        return loader

    def lookup(self, name: str) -> Optional[Type]:
        """Return an already materialized type without loading anything."""
        if self.parent is not None:
            found = self.parent.lookup(name)
            if found is not None:
                return found
        return self._cache.get(name)

    def is_bound(self, name: str) -> bool:
        return self.lookup(name) is not None

    def names(self) -> list[str]:
        out = self.parent.names() if self.parent else []
        return out + [n for n in self._cache if n not in out]

    def register(self, t: Type) -> Type:
        with self._lock:
            if self.is_bound(t.name):
                raise NameConflict(f"type {t.name!r} is already defined")
            self._cache[t.name] = t
        return t

    def resolve(self, name: "str | Type") -> Type:
        if isinstance(name, Type):
            return name
        if self.parent is not None:
            try:
                return self.parent.resolve(name)
            except UnresolvedType as e:
                if not e.args or e.args[0] not in _constituents(name):
                    raise
        with self._lock:
            cached = self._cache.get(name)
            if cached is not None:
                return cached
            t = self._synthesize(name)
            if t is not None:
                self._cache[name] = t
                return t
            if name in self._loading:
                raise UnresolvedType(name, "circular type-file dependency")
            self._loading.add(name)
            try:
                from .textio import load_from_type_path

                t = load_from_type_path(self, name)
            finally:
                self._loading.discard(name)
            if t is not None:
                return t
        raise UnresolvedType(name)

    def _synthesize(self, name: str) -> Optional[Type]:
        if name.endswith("[]"):
            elem = self.resolve(name[:-2])
            return new_type(name, InterfaceType.build(()), ArrayImpl(elem))
        if name.startswith("var<") and name.endswith(">"):
            return _build_variable_type(name, self.resolve(name[4:-1]))
        return None


def _constituents(name: str) -> set:
    """``name`` plus the names it is synthesized from (``var<X[]>`` -> X[], X)."""
    out = {name}
    while True:
        if name.endswith("[]"):
            name = name[:-2]
        elif name.startswith("var<") and name.endswith(">"):
            name = name[4:-1]
        else:
            return out
        out.add(name)


def _build_variable_type(name: str, value_type: Type) -> Type:
    access = FULL_VARIABLE_ACCESS | (INDEXED if value_type.is_array else Access.NONE)
    prop = make_property("value", value_type, access, zero_value(value_type))
    return new_type(name, InterfaceType.build([prop]), VariableImpl(value_type))


def synthesize_variable_type(loader: TypeLoader, value_type: "str | Type") -> Type:
    vt = loader.resolve(value_type)
    return loader.resolve(f"var<{vt.name}>")
