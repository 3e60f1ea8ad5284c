"""Mutable, live prototype objects from which composed types are extracted.

A prototype has an interface made of typed variables (property
prototypes) and an implementation made of composing instances whose
properties are each backed by a property prototype. Sharing a property
means pointing a composing slot at another property prototype, so every
alias reads and writes one cell.
"""

from __future__ import annotations

import heapq
import itertools
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .core import (
    MISSING,
    Access,
    Category,
    Type,
    check_access,
    narrow_access,
    normalize,
    same_value,
    synthesize_variable_type,
    valid_type_name,
    value_conforms,
    zero_value,
)
from .errors import (
    AccessViolation,
    CompoVMError,
    CycleDetected,
    InvalidAccess,
    NameConflict,
    NotAComponent,
    TypeMismatch,
    UnknownProperty,
)
from .runtime import Cell, Instance, Route, Space

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_own_serial = itertools.count()


class PropertyPrototype:
    """Live handle for a future property type: a typed variable plus access."""

    def __init__(self, prototype: "Prototype", name: Optional[str], value_type: Type,
                 variable: Instance, declared_default: Any = MISSING, owner=None):
        self.prototype = prototype
        self.name = name
        self.value_type = value_type
        self.variable = variable
        self.declared_default = declared_default
        self.owner = owner  # (ComposingInstance, index) for per-slot prototypes

    def __repr__(self):
        where = self.name if self.owner is None else f"{self.owner[0].def_name}#{self.owner[1]}"
        return f"<PropertyPrototype {where}: {self.value_type.name}>"

    @property
    def is_interface(self) -> bool:
        return self.owner is None

    @property
    def access(self) -> Access:
        return self.variable.access[0]

    def resolve(self) -> Cell:
        return self.variable.cell(0)

    @property
    def value(self):
        return self.variable.read(0)

    def get(self):
        return self.variable.space.get(self.variable, 0)

    def set(self, value) -> None:
        self.variable.space.set(self.variable, 0, value)


@dataclass(frozen=True)
class AccessPrototype:
    deny: Access = Access.NONE

    def __post_init__(self):
        object.__setattr__(self, "deny", Access.parse(self.deny))


class ComposingInstance:
    def __init__(self, prototype: "Prototype", def_name: str, instance: Instance):
        self.prototype = prototype
        self.def_name = def_name
        self.instance = instance
        self.own: list[PropertyPrototype] = []
        self.children: dict[int, list[str]] = {}

    def __repr__(self):
        return f"<ComposingInstance {self.def_name}: {self.type.name}>"

    @property
    def type(self) -> Type:
        return self.instance.type

    def index(self, prop) -> int:
        return self.instance.index(prop)

    def slot(self, prop) -> PropertyPrototype:
        return self.instance.slots[self.index(prop)]

    def slot_kind(self, prop) -> str:
        idx = self.index(prop)
        pp = self.instance.slots[idx]
        if pp is not self.own[idx]:
            return "shared"
        if idx in self.children:
            return "child"
        default = self.type.interface[idx].default
        return "own" if same_value(pp.value, default) else "value"


@dataclass(frozen=True)
class Fault:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


Endpoint = Union[str, PropertyPrototype, tuple]


@dataclass
class RouteRecord:
    source: Union[ComposingInstance, PropertyPrototype]
    source_index: int
    target: Union[ComposingInstance, PropertyPrototype]
    target_index: int
    route: Route


def _instance_of(node) -> Instance:
    return node.variable if isinstance(node, PropertyPrototype) else node.instance


class Prototype:
    """Builder for a composed type. Everything in it is live and operational."""

    def __init__(self, name: str, space: Space):
        self.name = name
        self.space = space
        self.interface: list[PropertyPrototype] = []
        self.composing: dict[str, ComposingInstance] = {}
        self.routes: list[RouteRecord] = []

    def __repr__(self):
        return f"<Prototype {self.name!r}>"

    @property
    def loader(self):
        return self.space.loader

    # -- namespace -----------------------------------------------------------

    def interface_property(self, name: str) -> PropertyPrototype:
        for pp in self.interface:
            if pp.name == name:
                return pp
        raise UnknownProperty(f"{self.name}: no interface property {name!r}")

    def lookup(self, name: str):
        """Resolve a name in the single DEF / interface namespace."""
        if name in self.composing:
            return self.composing[name]
        for pp in self.interface:
            if pp.name == name:
                return pp
        return None

    def _claim(self, name: str) -> None:
        if not _NAME_RE.match(name or ""):
            raise CompoVMError(f"invalid name {name!r}")
        if self.lookup(name) is not None:
            raise NameConflict(f"{name!r} is already used in {self.name or 'prototype'}")

    def _variable(self, value_type: Type, value, rank: tuple, label: str) -> Instance:
        var_t = synthesize_variable_type(self.loader, value_type)
        var = Instance(var_t, self.space)
        cell = Cell(value)
        cell.watchers.append((var, 0))
        var.slots.append(cell)
        var.rank = rank
        var.label = label
        return var

    # -- interface -----------------------------------------------------------

    def add_interface_property(self, name: str, value_type, access="RWB",
                               default: Any = MISSING) -> PropertyPrototype:
        self._claim(name)
        vt = self.loader.resolve(value_type)
        access = check_access(Access.parse(access), vt)
        if default is not MISSING:
            default = normalize(vt, default)
            if not value_conforms(vt, default) or isinstance(default, Instance):
                raise TypeMismatch(f"default {default!r} for {name!r} is not a {vt.name}")
        elif vt.name == "Node":
            default = None
        initial = default if default is not MISSING else zero_value(vt)
        var = self._variable(vt, initial, (0, len(self.interface)), name)
        var.access[0] = access
        pp = PropertyPrototype(self, name, vt, var, default)
        self.interface.append(pp)
        return pp

    # -- implementation ------------------------------------------------------

    def add_component(self, def_name: str, component_type) -> ComposingInstance:
        self._claim(def_name)
        t = self.loader.resolve(component_type)
        if not t.is_component:
            raise NotAComponent(f"{t.name} is not a component")
        inst = self.space.instantiate(t)
        inst.label = def_name
        ci = ComposingInstance(self, def_name, inst)
        for idx, p in enumerate(t.interface):
            var = self._variable(p.value_type, inst.read(idx), (2, next(_own_serial)),
                                 f"{def_name}.{p.name}")
            var.access[0] = Access.R | Access.W | (p.access & (Access.IR | Access.IW))
            pp = PropertyPrototype(self, None, p.value_type, var, owner=(ci, idx))
            ci.own.append(pp)
            inst.attach(idx, pp)
        self.composing[def_name] = ci
        self._rerank()
        return ci

    def component(self, def_name: str) -> ComposingInstance:
        try:
            return self.composing[def_name]
        except KeyError:
            raise UnknownProperty(f"{self.name}: no DEF {def_name!r}") from None

    def _ci(self, c) -> ComposingInstance:
        return self.component(c) if isinstance(c, str) else c

    def share_property(self, c, prop, source) -> None:
        """Make ``c.prop`` an alias of the property prototype ``source``."""
        c = self._ci(c)
        idx = c.index(prop)
        if isinstance(source, str):
            source = self.property_prototype(source)
        if source.prototype is not self:
            raise CompoVMError("cannot share a property prototype of another prototype")
        vt = c.type.interface[idx].value_type
        if source.value_type is not vt:
            raise TypeMismatch(
                f"cannot share {source.value_type.name} with {c.def_name}.{c.type.interface[idx].name}: {vt.name}")
        c.children.pop(idx, None)
        c.instance.attach(idx, source)
        self._rerank()

    def property_prototype(self, ref: str) -> PropertyPrototype:
        """``name`` for an interface property, ``def.prop`` for a composing slot."""
        if "." in ref:
            d, p = ref.split(".", 1)
            return self.component(d).slot(p)
        return self.interface_property(ref)

    def _own_slot(self, c: ComposingInstance, idx: int) -> PropertyPrototype:
        pp = c.own[idx]
        if c.instance.slots[idx] is not pp:
            c.instance.attach(idx, pp)
        return pp

    def _store(self, c: ComposingInstance, idx: int, value, react: bool) -> None:
        if react:
            with self.space.cascade():
                self.space.write(c.instance, idx, value)
        else:
            c.instance.cell(idx).value = value

    def set_field(self, c, prop, value, react: bool = True) -> None:
        """Record a context value for ``c.prop``; takes effect immediately.

        With ``react`` the write notifies listeners and behaviors like any
        other write; without it the cell is simply assigned.
        """
        c = self._ci(c)
        idx = c.index(prop)
        vt = c.type.interface[idx].value_type
        value = normalize(vt, value)
        if not value_conforms(vt, value) or _holds_instance(value):
            raise TypeMismatch(f"{value!r} is not a {vt.name} value")
        c.children.pop(idx, None)
        self._own_slot(c, idx)
        self._store(c, idx, value, react)

    def set_interface_value(self, name: str, value, react: bool = True) -> None:
        """Design-time assignment of an interface property (ignores access)."""
        pp = self.interface_property(name)
        value = normalize(pp.value_type, value)
        if not value_conforms(pp.value_type, value) or _holds_instance(value):
            raise TypeMismatch(f"{value!r} is not a {pp.value_type.name} value")
        if react:
            with self.space.cascade():
                self.space.write(pp.variable, 0, value)
        else:
            pp.resolve().value = value

    def link_child(self, parent, prop, child_def: str, react: bool = True) -> None:
        """Use the composing instance ``child_def`` as the value of ``parent.prop``.

        Array-typed properties accumulate children; others are replaced.
        """
        parent = self._ci(parent)
        child = self.component(child_def)
        idx = parent.index(prop)
        vt = parent.type.interface[idx].value_type
        target = vt.implementation.element if vt.is_array else vt
        if not (target.name == "Node" or target is child.type):
            raise TypeMismatch(f"{child.type.name} cannot be stored in {vt.name}")
        edges = self._edges()
        if child is parent or self._reaches(child.def_name, parent.def_name, edges):
            raise CycleDetected(f"{parent.def_name} -> {child_def} closes a reference cycle")
        self._own_slot(parent, idx)
        if vt.is_array:
            names = list(parent.children.get(idx, ()))
            current = parent.instance.read(idx) if idx in parent.children else ()
            value = tuple(current) + (child.instance,)
            names.append(child_def)
        else:
            names, value = [child_def], child.instance
        self._store(parent, idx, value, react)
        parent.children[idx] = names
        if child_def not in edges[parent.def_name]:
            edges[parent.def_name].append(child_def)
        # an edge the current order already satisfies leaves the order unchanged
        if not child.instance.rank < parent.instance.rank:
            self._rerank(edges)

    def unlink_child(self, parent, prop, child_def: str) -> None:
        """Remove one reference to ``child_def`` from ``parent.prop``."""
        parent = self._ci(parent)
        idx = parent.index(prop)
        names = list(parent.children.get(idx, ()))
        if child_def not in names:
            raise UnknownProperty(f"{parent.def_name}.{prop} does not reference {child_def!r}")
        k = len(names) - 1 - names[::-1].index(child_def)
        del names[k]
        if parent.type.interface[idx].value_type.is_array:
            current = parent.instance.read(idx)
            value = current[:k] + current[k + 1:]
        else:
            value = None
        parent.instance.cell(idx).value = value
        if names:
            parent.children[idx] = names
        else:
            parent.children.pop(idx)
        self._rerank()

    def _edges(self) -> dict[str, list[str]]:
        edges = {name: [] for name in self.composing}
        by_instance = {id(ci.instance): name for name, ci in self.composing.items()}
        for name, ci in self.composing.items():
            out = edges[name]
            for names in ci.children.values():
                out.extend(n for n in names if n in edges and n not in out)
            for idx in _reference_slots(ci.type):
                for v in _instances_in(ci.instance.read(idx)):
                    child = by_instance.get(id(v))
                    if child is not None and child not in out:
                        out.append(child)
        return edges

    def _reaches(self, start: str, goal: str, edges=None) -> bool:
        edges = self._edges() if edges is None else edges
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(edges.get(node, ()))
        return False

    def topological_order(self, edges=None) -> list[ComposingInstance]:
        """Children before parents; ties broken by creation order."""
        edges = self._edges() if edges is None else edges
        names = list(self.composing)
        position = {n: k for k, n in enumerate(names)}
        waiting = {n: len(set(edges[n])) for n in names}
        parents: dict[str, list[str]] = {n: [] for n in names}
        for n in names:
            for c in set(edges[n]):
                parents[c].append(n)
        ready = [position[n] for n in names if waiting[n] == 0]
        heapq.heapify(ready)
        order: list[str] = []
        while ready:
            n = names[heapq.heappop(ready)]
            order.append(n)
            for parent in parents[n]:
                waiting[parent] -= 1
                if waiting[parent] == 0:
                    heapq.heappush(ready, position[parent])
        if len(order) < len(names):
            raise CycleDetected("reference graph has a cycle: " +
                                ", ".join(n for n in names if n not in order))
        return [self.composing[n] for n in order]

    def _rerank(self, edges=None) -> None:
        try:
            order = self.topological_order(edges)
        except CycleDetected:
            order = list(self.composing.values())
        for pos, ci in enumerate(order):
            ci.instance.rank = (1, pos)

    # -- events --------------------------------------------------------------

    def endpoint(self, ref) -> tuple:
        """Normalise ``"def.prop"``, ``"name.value"``, ``(node, prop)`` or a
        property prototype to ``(node, index)``."""
        if isinstance(ref, PropertyPrototype):
            if not ref.is_interface or ref.prototype is not self:
                raise CompoVMError("route endpoints must be interface or composing properties")
            return ref, 0
        if isinstance(ref, str):
            if "." not in ref:
                return self.interface_property(ref), 0
            head, prop = ref.split(".", 1)
            node = self.lookup(head)
            if node is None:
                raise UnknownProperty(f"{self.name}: no DEF or interface property {head!r}")
        else:
            node, prop = ref
            if isinstance(node, str):
                node = self.lookup(node)
                if node is None:
                    raise UnknownProperty(f"{self.name}: no DEF or interface property {ref[0]!r}")
        return node, _instance_of(node).index(prop)

    def add_route(self, source, target) -> Route:
        src, sidx = self.endpoint(source)
        dst, didx = self.endpoint(target)
        route = self.space.add_route(_instance_of(src), sidx, _instance_of(dst), didx)
        self.routes.append(RouteRecord(src, sidx, dst, didx, route))
        return route

    # -- access --------------------------------------------------------------

    def restrict_access(self, target, deny) -> Access:
        """Deny some rights of an interface property or composing slot."""
        if isinstance(deny, AccessPrototype):
            deny = deny.deny
        deny = Access.parse(deny)
        if isinstance(target, str) and "." not in target:
            target = self.interface_property(target)
        if isinstance(target, PropertyPrototype):
            if not target.is_interface:
                raise CompoVMError("narrow composing slots through (instance, property)")
            inst, idx = target.variable, 0
        else:
            node, idx = self.endpoint(target)
            inst = _instance_of(node)
        new = narrow_access(inst.access[idx], deny, inst.value_type(idx))
        for r in self.routes:
            if _instance_of(r.source) is inst and r.source_index == idx and Access.B not in new:
                raise InvalidAccess(f"{r.route} needs its source bound")
            if _instance_of(r.target) is inst and r.target_index == idx and Access.W not in new:
                raise InvalidAccess(f"{r.route} needs its target writable")
        inst.access[idx] = new
        return new

    # -- validation ----------------------------------------------------------

    def validate(self) -> list[Fault]:
        faults: list[Fault] = []
        if not valid_type_name(self.name or ""):
            faults.append(Fault("InvalidName", f"type name {self.name!r} is not a dotted identifier"))
        seen: set[str] = set()
        for n in [pp.name for pp in self.interface] + list(self.composing):
            if n in seen:
                faults.append(Fault("NameConflict", f"{n!r} defined twice"))
            seen.add(n)

        edges = self._edges()
        state: dict[str, int] = {}

        def visit(n, path):
            state[n] = 1
            for c in edges.get(n, ()):
                if state.get(c) == 1:
                    faults.append(Fault("CycleDetected", " -> ".join(path + [n, c])))
                elif c not in state:
                    visit(c, path + [n])
            state[n] = 2

        for n in edges:
            if n not in state:
                visit(n, [])

        known = {id(ci.instance) for ci in self.composing.values()}
        shared_iface: dict[int, list[tuple[ComposingInstance, int]]] = {}
        for ci in self.composing.values():
            for idx, p in enumerate(ci.type.interface):
                pp = ci.instance.slots[idx]
                if pp.value_type is not p.value_type:
                    faults.append(Fault("TypeMismatch",
                                        f"{ci.def_name}.{p.name} shares a {pp.value_type.name} prototype"))
                if pp.prototype is not self:
                    faults.append(Fault("ForeignPrototype", f"{ci.def_name}.{p.name}"))
                if pp.is_interface:
                    shared_iface.setdefault(id(pp), []).append((ci, idx))
                for v in _instances_in(pp.value):
                    if id(v) not in known:
                        faults.append(Fault("ForeignReference",
                                            f"{ci.def_name}.{p.name} refers to an instance outside the prototype"))

        for r in self.routes:
            src, dst = _instance_of(r.source), _instance_of(r.target)
            if Access.B not in src.access[r.source_index]:
                faults.append(Fault("AccessViolation", f"{r.route}: source is not bound"))
            if Access.W not in dst.access[r.target_index]:
                faults.append(Fault("AccessViolation", f"{r.route}: target is not writable"))

        for pp in self.interface:
            users = shared_iface.get(id(pp), [])
            if pp.declared_default is MISSING and pp.resolve().version == 0 and not users:
                faults.append(Fault("NotAComponent", f"interface property {pp.name!r} has no default"))
            value = pp.value
            if value is MISSING or not value_conforms(pp.value_type, value) or _holds_instance(value):
                faults.append(Fault("NotAComponent",
                                    f"interface property {pp.name!r} holds no immutable {pp.value_type.name}"))
            if Category.for_access(pp.access) is Category.IMMUTABLE:
                for ci, idx in users:
                    if ci.instance.access[idx] & (Access.W | Access.B):
                        faults.append(Fault(
                            "ImmutableShared",
                            f"read-only {pp.name!r} is shared with changeable "
                            f"{ci.def_name}.{ci.type.interface[idx].name}"))
        return faults


_ref_slot_cache: dict[int, tuple] = {}


def _reference_slots(t: Type) -> tuple:
    """Indices of properties whose values may hold instances."""
    found = _ref_slot_cache.get(t.id)
    if found is None:
        found = []
        for p in t.interface:
            vt = p.value_type
            while vt.is_array:
                vt = vt.implementation.element
            if not vt.is_value_domain or vt.name == "Node":
                found.append(p.index)
        found = _ref_slot_cache[t.id] = tuple(found)
    return found


def _instances_in(value):
    if isinstance(value, Instance):
        return [value]
    if isinstance(value, tuple):
        return [v for v in value if isinstance(v, Instance)]
    return []


def _holds_instance(value) -> bool:
    return bool(_instances_in(value))


def new_prototype(name: str, space: Space) -> Prototype:
    return Prototype(name, space)
