"""Prototype-to-type transformation and instantiation of composed types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Optional, Union

from .core import (
    Access,
    Category,
    InterfaceType,
    Type,
    TypeLoader,
    make_property,
    new_type,
    same_value,
)
from .errors import CompoVMError, NameConflict, ValidationFault
from .prototype import ComposingInstance, Prototype, PropertyPrototype
from .runtime import Cell, External, Instance, Space


@dataclass(frozen=True)
class Literal:
    value: Any


@dataclass(frozen=True)
class ChildRef:
    """Reference to sibling composing instances by DEF name."""

    names: tuple
    array: bool = False


InitialValue = Union[Literal, ChildRef]


@dataclass(frozen=True)
class ComposingType:
    """A component refined for one place in a composed implementation.

    ``links`` map a property index to an outer slot: an interface index, or
    ``len(interface) + k`` for the k-th hidden shared cell.
    """

    def_name: str
    component_type: Type
    access: tuple
    links: tuple = ()
    initial: tuple = ()

    def link_of(self, index: int) -> Optional[int]:
        for i, target in self.links:
            if i == index:
                return target
        return None

    def initial_of(self, index: int) -> Optional[InitialValue]:
        for i, v in self.initial:
            if i == index:
                return v
        return None

    def category(self, index: int) -> Category:
        if self.link_of(index) is not None:
            return Category.EXTERNAL
        return Category.for_access(self.access[index])


@dataclass(frozen=True)
class HiddenCell:
    """Storage shared by several composing properties but not exported."""

    value_type: Type
    initial: InitialValue


@dataclass(frozen=True)
class RouteSpec:
    source: Optional[str]  # None: the composed instance's own interface
    source_index: int
    target: Optional[str]
    target_index: int


@dataclass(frozen=True)
class ComposedImplementation:
    composing: tuple = ()  # topological order, children first
    hidden: tuple = ()
    routes: tuple = ()

    uses_context: ClassVar[bool] = True

    def populate(self, space: Space, inst: Instance) -> None:
        instantiate_composed(space, inst.type)

    def by_name(self, def_name: str) -> ComposingType:
        for ct in self.composing:
            if ct.def_name == def_name:
                return ct
        raise KeyError(def_name)


def _materialize(initial: InitialValue, inner: dict):
    if isinstance(initial, Literal):
        return initial.value
    values = tuple(inner[n] for n in initial.names)
    return values if initial.array else values[0]


def instantiate_composed(space: Space, t: Type, outer: Instance | None = None) -> None:
    """Build the implementation graph of ``outer``, an instance of ``t``.

    ``outer`` defaults to the top of the space's instantiation-context stack.
    """
    if outer is None:
        outer = space.context_stack[-1]
    impl: ComposedImplementation = t.implementation
    n = len(t.interface)
    for k, h in enumerate(impl.hidden):
        cell = Cell(None)
        cell.watchers.append((outer, n + k))
        outer.slots.append(cell)
        outer.hidden_types.append(h.value_type)
    for pos, ct in enumerate(impl.composing):
        child = space.instantiate(ct.component_type)
        child.rank = (1, pos)
        child.label = ct.def_name
        child.access = list(ct.access)
        for idx, target in ct.links:
            child.attach(idx, External(outer, target))
            outer.forward.setdefault(target, []).append((child, idx))
        outer.inner[ct.def_name] = child
    for k, h in enumerate(impl.hidden):
        outer.slots[n + k].value = _materialize(h.initial, outer.inner)
    for ct in impl.composing:
        child = outer.inner[ct.def_name]
        for idx, init in ct.initial:
            if child.slots[idx] is None:
                child.attach(idx, Cell(None))
            child.cell(idx).value = _materialize(init, outer.inner)
    for r in impl.routes:
        src = outer if r.source is None else outer.inner[r.source]
        dst = outer if r.target is None else outer.inner[r.target]
        space.connect(src, r.source_index, dst, r.target_index)


def _encode(value, by_instance: dict) -> InitialValue:
    if isinstance(value, Instance):
        return ChildRef((by_instance[id(value)],))
    if isinstance(value, tuple) and value and all(isinstance(v, Instance) for v in value):
        return ChildRef(tuple(by_instance[id(v)] for v in value), array=True)
    return Literal(value)


def create_from_prototype(loader: TypeLoader, p: Prototype) -> Type:
    """Freeze ``p`` into an immutable composed type and register it.

    Live values become defaults and context values, narrowed access becomes
    the access type, and sharing becomes External links. Later edits to
    ``p`` never affect the returned type.
    """
    faults = p.validate()
    if faults:
        raise ValidationFault(faults)
    if loader.is_bound(p.name):
        raise NameConflict(f"type {p.name!r} is already defined")

    props = [make_property(pp.name, pp.value_type, pp.access, pp.value) for pp in p.interface]
    n = len(props)
    iface_index = {id(pp): k for k, pp in enumerate(p.interface)}

    order = p.topological_order()
    by_instance = {id(ci.instance): ci.def_name for ci in order}
    users: dict[int, int] = {}
    for ci in order:
        for pp in ci.instance.slots[:ci.instance.property_count]:
            users[id(pp)] = users.get(id(pp), 0) + 1

    hidden: list[HiddenCell] = []
    hidden_index: dict[int, int] = {}
    composing = []
    for ci in order:
        t = ci.type
        links, initial = [], []
        for idx, prop in enumerate(t.interface):
            pp: PropertyPrototype = ci.instance.slots[idx]
            if id(pp) in iface_index:
                links.append((idx, iface_index[id(pp)]))
            elif users[id(pp)] > 1:
                if id(pp) not in hidden_index:
                    hidden_index[id(pp)] = len(hidden)
                    hidden.append(HiddenCell(pp.value_type, _encode(pp.value, by_instance)))
                links.append((idx, n + hidden_index[id(pp)]))
            elif not same_value(pp.value, prop.default):
                initial.append((idx, _encode(pp.value, by_instance)))
        composing.append(ComposingType(ci.def_name, t, tuple(ci.instance.access[:len(t.interface)]),
                                       tuple(links), tuple(initial)))

    def endpoint(node):
        return node.def_name if isinstance(node, ComposingInstance) else None

    routes = []
    for r in p.routes:
        sidx = iface_index[id(r.source)] if isinstance(r.source, PropertyPrototype) else r.source_index
        tidx = iface_index[id(r.target)] if isinstance(r.target, PropertyPrototype) else r.target_index
        routes.append(RouteSpec(endpoint(r.source), sidx, endpoint(r.target), tidx))

    impl = ComposedImplementation(tuple(composing), tuple(hidden), tuple(routes))
    return loader.register(new_type(p.name, InterfaceType.build(props), impl))


def instance_for(space: Space, t: Type | str) -> Instance:
    """Class-based instantiation; a convenience alias for ``space.instantiate``."""
    return space.instantiate(t)
