"""Instances, property cells, bound-property events, routes and the
cascade scheduler."""

from __future__ import annotations

import itertools
import weakref
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .core import (
    Access,
    Category,
    InstanceBase,
    Type,
    TypeLoader,
    assignable,
    normalize,
    same_value,
    value_conforms,
)
from .errors import AccessViolation, IndexOutOfBounds, NotAComponent, TypeMismatch

Listener = Callable[[Any, Any], None]


class Cell:
    """A mutable storage slot. Every alias of a property value points here.

    ``watchers`` lists the ``(instance, index)`` pairs that address the cell
    directly; they are notified in rank order on every write.
    """

    __slots__ = ("value", "watchers", "version")

    def __init__(self, value):
        self.value = value
        self.watchers: list[tuple[Instance, int]] = []
        self.version = 0

    def resolve(self) -> "Cell":
        return self

    def ordered_watchers(self):
        if len(self.watchers) < 2:
            return list(self.watchers)
        return sorted(self.watchers, key=lambda w: (w[0].rank, w[1]))


class External:
    """Storage delegated to a property (or hidden cell) of the enclosing instance."""

    __slots__ = ("outer", "index")

    def __init__(self, outer: "Instance", index: int):
        self.outer = outer
        self.index = index

    def resolve(self) -> Optional[Cell]:
        return self.outer.cell(self.index)


@dataclass(frozen=True)
class Route:
    id: int
    source: "Instance"
    source_index: int
    target: "Instance"
    target_index: int

    def __repr__(self):
        s = self.source.type.interface[self.source_index].name
        t = self.target.type.interface[self.target_index].name
        return f"<Route #{self.id} {self.source.label}.{s} -> {self.target.label}.{t}>"


@dataclass
class Event:
    instance: "Instance"
    index: int
    old: Any
    new: Any
    cascade: int


class Subscription:
    def __init__(self, instance: "Instance", index: int, listener: Listener):
        self.instance = instance
        self.index = index
        self.listener = listener
        self.active = True

    def cancel(self):
        if self.active:
            self.instance.listeners[self.index].remove(self.listener)
            self.active = False

    unsubscribe = cancel


class Instance(InstanceBase):
    """A live component instance.

    Slots hold a :class:`Cell`, an :class:`External` link, a property
    prototype (inside a prototype container), or ``None`` for immutable
    properties whose value lives in the type.
    """

    __slots__ = ("type", "space", "access", "slots", "hidden_types", "forward", "listeners",
                 "routes_out", "behavior", "inner", "rank", "label", "ctx", "__weakref__")

    def __init__(self, t: Type, space: "Space"):
        self.type = t
        self.space = space
        self.access = [p.access for p in t.interface]
        self.slots: list[Any] = []
        self.hidden_types: list[Type] = []
        self.forward: dict[int, list[tuple[Instance, int]]] = {}
        self.listeners: dict[int, list[Listener]] = {}
        self.routes_out: dict[int, list[Route]] = {}
        self.behavior = None
        self.inner: dict[str, Instance] = {}
        self.rank: tuple = (0,)
        self.label = t.name
        self.ctx = InstanceContext(self)

    def __repr__(self):
        return f"<Instance {self.type.name} {self.label!r}>"

    @property
    def property_count(self) -> int:
        return len(self.type.interface)

    def index(self, prop) -> int:
        return self.type.interface.index(prop)

    def value_type(self, index: int) -> Type:
        n = self.property_count
        return self.type.interface[index].value_type if index < n else self.hidden_types[index - n]

    def cell(self, index: int) -> Optional[Cell]:
        slot = self.slots[index]
        return None if slot is None else slot.resolve()

    def read(self, index: int) -> Any:
        slot = self.slots[index]
        if slot is None:
            return self.type.interface[index].default
        if isinstance(slot, External):
            return slot.outer.read(slot.index)
        cell = slot.resolve()
        if cell is None:
            return self.type.interface[index].default
        return cell.value

    def attach(self, index: int, slot) -> None:
        """Point property ``index`` at a new storage slot, moving the watcher."""
        old = self.slots[index]
        if old is not None and not isinstance(old, External):
            _unwatch(old.resolve(), self, index)
        self.slots[index] = slot
        if slot is not None and not isinstance(slot, External):
            slot.resolve().watchers.append((self, index))


def _unwatch(cell, inst, index):
    cell.watchers[:] = [w for w in cell.watchers if not (w[0] is inst and w[1] == index)]


class InstanceContext:
    """The property API handed to native behaviors. Bypasses access rights."""

    __slots__ = ("instance",)

    def __init__(self, instance: Instance):
        self.instance = instance

    @property
    def space(self) -> "Space":
        return self.instance.space

    def index(self, name) -> int:
        return self.instance.index(name)

    def get(self, prop) -> Any:
        return self.instance.read(self.instance.index(prop))

    def set(self, prop, value) -> None:
        space = self.instance.space
        with space.cascade():
            space.write(self.instance, self.instance.index(prop), value)

    def init_property_value(self, name, value) -> None:
        # Defaults were captured when the type was created; nothing to do here.
        pass


class Space:
    """Single-threaded container for instances, routes and the event queue."""

    def __init__(self, loader: TypeLoader | None = None):
        self.loader = loader if loader is not None else TypeLoader.root()
        self.instances = weakref.WeakSet()
        self.routes: list[Route] = []
        self.context_stack: list[Instance] = []
        self._queue: deque[Event] = deque()
        self._route_ids = itertools.count(1)
        self._cascade_ids = itertools.count(1)
        self._cascade: Optional[int] = None
        self._pending: dict[int, int] = {}
        self._delivered: dict[int, set[int]] = {}
        self._active: set[tuple[int, int]] = set()

    # -- lifecycle -----------------------------------------------------------

    def instantiate(self, t: "Type | str") -> Instance:
        t = self.loader.resolve(t)
        if not t.is_component:
            raise NotAComponent(f"{t.name} cannot be instantiated without outside information")
        inst = Instance(t, self)
        for p in t.interface:
            if p.category is Category.IMMUTABLE:
                inst.slots.append(None)
            else:
                cell = Cell(p.default)
                cell.watchers.append((inst, p.index))
                inst.slots.append(cell)
        populate = getattr(t.implementation, "populate", None)
        if populate is not None:
            if getattr(t.implementation, "uses_context", False):
                depth = len(self.context_stack)
                self.context_stack.append(inst)
                try:
                    populate(self, inst)
                finally:
                    del self.context_stack[depth:]
            else:
                populate(self, inst)
        self.instances.add(inst)
        return inst

    # -- property access -----------------------------------------------------

    def get(self, inst: Instance, prop) -> Any:
        idx = inst.index(prop)
        if Access.R not in inst.access[idx]:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is not readable")
        return inst.read(idx)

    def set(self, inst: Instance, prop, value) -> None:
        idx = inst.index(prop)
        if Access.W not in inst.access[idx]:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is not writable")
        with self.cascade():
            self.write(inst, idx, value)

    def get_indexed(self, inst: Instance, prop, k: int) -> Any:
        idx = inst.index(prop)
        if Access.IR not in inst.access[idx]:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is not indexed-readable")
        value = inst.read(idx)
        if not isinstance(k, int) or not 0 <= k < len(value):
            raise IndexOutOfBounds(f"index {k} outside 0..{len(value) - 1}")
        return value[k]

    def set_indexed(self, inst: Instance, prop, k: int, value) -> None:
        idx = inst.index(prop)
        if Access.IW not in inst.access[idx]:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is not indexed-writable")
        current = inst.read(idx)
        if not isinstance(k, int) or not 0 <= k < len(current):
            raise IndexOutOfBounds(f"index {k} outside 0..{len(current) - 1}")
        element = inst.value_type(idx).implementation.element
        value = normalize(element, value)
        if not value_conforms(element, value):
            raise TypeMismatch(f"{value!r} is not a {element.name}")
        with self.cascade():
            self.write(inst, idx, current[:k] + (value,) + current[k + 1:])

    @contextmanager
    def cascade(self):
        """Run writes inside the current cascade, or open a new one."""
        if self._cascade is not None:
            yield self._cascade
            return
        self._cascade = next(self._cascade_ids)
        try:
            yield self._cascade
        finally:
            self._cascade = None

    def write(self, inst: Instance, idx: int, value) -> None:
        """Type-checked write that ignores access rights (internal use)."""
        vt = inst.value_type(idx)
        value = normalize(vt, value)
        if not value_conforms(vt, value):
            raise TypeMismatch(f"{value!r} is not a {vt.name}")
        cell = inst.cell(idx)
        if cell is None:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is immutable")
        old = cell.value
        cell.value = value
        cell.version += 1
        self.notify_cell(cell, old, value)

    def notify_cell(self, cell, old, new) -> None:
        changed = not same_value(old, new)
        for w, widx in cell.ordered_watchers():
            self._notify(w, widx, old, new, changed)

    def _notify(self, inst: Instance, idx: int, old, new, changed: bool) -> None:
        if idx < inst.property_count:
            if changed and Access.B in inst.access[idx]:
                cascade = self._cascade if self._cascade is not None else next(self._cascade_ids)
                self._queue.append(Event(inst, idx, old, new, cascade))
                self._pending[cascade] = self._pending.get(cascade, 0) + 1
            if inst.behavior is not None:
                key = (id(inst), idx)
                # an alias already inside its own hook is not re-entered
                if key not in self._active:
                    self._active.add(key)
                    try:
                        inst.behavior.on_set(inst.ctx, idx, old, new)
                    finally:
                        self._active.discard(key)
        for inner, iidx in inst.forward.get(idx, ()):
            self._notify(inner, iidx, old, new, changed)

    # -- events --------------------------------------------------------------

    def subscribe(self, inst: Instance, prop, listener: Listener) -> Subscription:
        idx = inst.index(prop)
        if Access.B not in inst.access[idx]:
            raise AccessViolation(f"{inst.label}.{inst.type.interface[idx].name} is not bound")
        inst.listeners.setdefault(idx, []).append(listener)
        return Subscription(inst, idx, listener)

    def add_route(self, source: Instance, source_prop, target: Instance, target_prop) -> Route:
        sidx = source.index(source_prop)
        tidx = target.index(target_prop)
        sname = f"{source.label}.{source.type.interface[sidx].name}"
        tname = f"{target.label}.{target.type.interface[tidx].name}"
        if Access.B not in source.access[sidx]:
            raise AccessViolation(f"route source {sname} is not bound")
        if Access.W not in target.access[tidx]:
            raise AccessViolation(f"route target {tname} is not writable")
        st, tt = source.value_type(sidx), target.value_type(tidx)
        if not assignable(st, tt):
            raise TypeMismatch(f"cannot route {st.name} {sname} to {tt.name} {tname}")
        return self.connect(source, sidx, target, tidx)

    def connect(self, source: Instance, sidx: int, target: Instance, tidx: int) -> Route:
        route = Route(next(self._route_ids), source, sidx, target, tidx)
        source.routes_out.setdefault(sidx, []).append(route)
        self.routes.append(route)
        return route

    @property
    def pending(self) -> int:
        return len(self._queue)

    def pump(self) -> int:
        """Deliver queued events FIFO; each route fires at most once per cascade."""
        delivered = 0
        while self._queue:
            ev = self._queue.popleft()
            prev, self._cascade = self._cascade, ev.cascade
            try:
                for listener in list(ev.instance.listeners.get(ev.index, ())):
                    listener(ev.old, ev.new)
                for route in list(ev.instance.routes_out.get(ev.index, ())):
                    seen = self._delivered.setdefault(ev.cascade, set())
                    if route.id in seen:
                        continue
                    seen.add(route.id)
                    delivered += 1
                    self.write(route.target, route.target_index, ev.new)
            finally:
                self._cascade = prev
                left = self._pending[ev.cascade] - 1
                if left:
                    self._pending[ev.cascade] = left
                else:
                    del self._pending[ev.cascade]
                    self._delivered.pop(ev.cascade, None)
        return delivered
