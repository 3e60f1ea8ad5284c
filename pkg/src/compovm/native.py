"""Native (hardcoded) components: descriptors, behaviors, default capture
and the foreign-object adaptor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from .core import (
    MISSING,
    Access,
    InterfaceType,
    Type,
    TypeLoader,
    make_property,
    new_type,
    normalize,
    valid_type_name,
    value_conforms,
)
from .errors import (
    CompoVMError,
    DuplicateInit,
    MissingDefault,
    NameConflict,
    ShapeMismatch,
    TypeMismatch,
    UnknownProperty,
)
from .runtime import Cell


@dataclass(frozen=True)
class PropertyDecl:
    name: str
    value_type: str
    access: Access | str = Access.R | Access.W

    def __post_init__(self):
        object.__setattr__(self, "access", Access.parse(self.access))


class Behavior:
    """Reactions of a native component. Override what you need.

    ``init`` runs once per type, while defaults are captured. ``on_set`` runs
    after every write to one of the instance's properties.
    """

    def init(self, ctx) -> None:
        pass

    def on_set(self, ctx, index: int, old: Any, new: Any) -> None:
        pass


@dataclass(frozen=True)
class NativeDescriptor:
    type_name: str
    properties: tuple
    behavior_factory: Callable[[], Behavior] = Behavior

    def __post_init__(self):
        object.__setattr__(self, "properties", tuple(self.properties))


@dataclass(frozen=True)
class NativeImpl:
    descriptor: NativeDescriptor

    def populate(self, space, inst) -> None:
        inst.behavior = self.descriptor.behavior_factory()


class CaptureContext:
    """Context seen by ``Behavior.init`` during type creation."""

    def __init__(self, names: Sequence[str], value_types: Sequence[Type]):
        self._index = {n: i for i, n in enumerate(names)}
        self._types = list(value_types)
        self.captured: list[Any] = [MISSING] * len(names)

    def index(self, name) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownProperty(f"no property {name!r}") from None

    def init_property_value(self, name, value) -> None:
        i = self.index(name)
        if self.captured[i] is not MISSING:
            raise DuplicateInit(f"{name!r} initialised twice")
        vt = self._types[i]
        value = normalize(vt, value)
        if not value_conforms(vt, value):
            raise TypeMismatch(f"default {value!r} for {name!r} is not a {vt.name}")
        self.captured[i] = value

    def get(self, prop):
        i = prop if isinstance(prop, int) else self.index(prop)
        return self.captured[i]

    def set(self, prop, value):
        raise CompoVMError("only init_property_value may be used while defaults are captured")


def init_property_value(ctx, name: str, value: Any) -> None:
    ctx.init_property_value(name, value)


def _check_new_name(loader: TypeLoader, name: str) -> None:
    if not valid_type_name(name):
        raise CompoVMError(f"invalid type name {name!r}")
    if loader.is_bound(name):
        raise NameConflict(f"type {name!r} is already defined")


def type_from_descriptor(loader: TypeLoader, d: NativeDescriptor) -> Type:
    """Create, register and return the native type described by ``d``."""
    _check_new_name(loader, d.type_name)
    names = [p.name for p in d.properties]
    if len(set(names)) != len(names):
        raise NameConflict(f"{d.type_name}: duplicate property names")
    vtypes = [loader.resolve(p.value_type) for p in d.properties]
    ctx = CaptureContext(names, vtypes)
    d.behavior_factory().init(ctx)
    missing = [n for n, v in zip(names, ctx.captured) if v is MISSING]
    if missing:
        raise MissingDefault(f"{d.type_name}: no default for {', '.join(missing)}")
    props = [make_property(p.name, vt, p.access, v)
             for p, vt, v in zip(d.properties, vtypes, ctx.captured)]
    return loader.register(new_type(d.type_name, InterfaceType.build(props), NativeImpl(d)))


# -- foreign objects ---------------------------------------------------------


@dataclass(frozen=True)
class ForeignObjectView:
    """Hooks exposing an arbitrary host object as a set of properties."""

    properties: tuple
    get: Callable[[str], Any]
    set: Callable[[str, Any], None]
    subscribe: Optional[Callable[[str, Callable[[Any, Any], None]], Any]] = None

    def __post_init__(self):
        object.__setattr__(self, "properties", tuple(
            p if isinstance(p, PropertyDecl) else PropertyDecl(*p) for p in self.properties))


class ForeignCell(Cell):
    __slots__ = ("view", "name", "writing")

    def __init__(self, view: ForeignObjectView, name: str):
        super().__init__(None)
        self.view = view
        self.name = name
        self.writing = False

    @property
    def value(self):
        return self.view.get(self.name)

    @value.setter
    def value(self, v):
        if not hasattr(self, "view"):  # base __init__ assigns before view exists
            return
        self.writing = True
        try:
            self.view.set(self.name, v)
        finally:
            self.writing = False


@dataclass(frozen=True)
class ForeignImpl:
    view: ForeignObjectView

    def populate(self, space, inst) -> None:
        for i, p in enumerate(self.view.properties):
            cell = ForeignCell(self.view, p.name)
            inst.attach(i, cell)
            if self.view.subscribe is not None:
                self.view.subscribe(p.name, _echo(space, cell))


def _echo(space, cell: ForeignCell):
    def changed(old, new):
        if cell.writing:
            return
        with space.cascade():
            space.notify_cell(cell, old, new)

    return changed


def wrap_foreign(loader: TypeLoader, name: str, view: ForeignObjectView) -> Type:
    """Register an adaptor type whose instances delegate to ``view``."""
    _check_new_name(loader, name)
    props = []
    for p in view.properties:
        vt = loader.resolve(p.value_type)
        value = normalize(vt, view.get(p.name))
        if not value_conforms(vt, value):
            raise ShapeMismatch(f"{name}.{p.name}: {value!r} is not a {vt.name}")
        props.append(make_property(p.name, vt, p.access, value))
    return loader.register(new_type(name, InterfaceType.build(props), ForeignImpl(view)))
