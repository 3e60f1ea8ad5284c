"""The standard component kit registered under ``std.``.

All components are deterministic and timer-free. Integer arithmetic wraps
to 32 bits so results always stay inside the Int32 domain.
"""

from __future__ import annotations

from .core import TypeLoader, wrap_int32
from .native import Behavior, NativeDescriptor, PropertyDecl, type_from_descriptor


class _Defaults(Behavior):
    defaults: dict = {}

    def init(self, ctx):
        for name, value in self.defaults.items():
            ctx.init_property_value(name, value)


class Const(_Defaults):
    defaults = {"value": 0}


class ConstFloat(_Defaults):
    defaults = {"value": 0.0}


class ConstBool(_Defaults):
    defaults = {"value": False}


class ConstString(_Defaults):
    defaults = {"value": ""}


class Adder(_Defaults):
    defaults = {"a": 0, "b": 0, "sum": 0}

    def combine(self, a, b):
        return a + b

    def on_set(self, ctx, index, old, new):
        if index < 2:
            ctx.set(2, wrap_int32(self.combine(ctx.get(0), ctx.get(1))))


class Mul(Adder):
    defaults = {"a": 0, "b": 0, "prod": 0}

    def combine(self, a, b):
        return a * b


class Gate(_Defaults):
    defaults = {"in": 0, "open": False, "out": 0}

    def on_set(self, ctx, index, old, new):
        if index < 2 and ctx.get("open"):
            ctx.set("out", ctx.get("in"))


class Counter(_Defaults):
    defaults = {"tick": 0, "count": 0}

    def on_set(self, ctx, index, old, new):
        if index == 0:
            ctx.set("count", wrap_int32(ctx.get("count") + 1))


class Relay(_Defaults):
    defaults = {"in": 0, "out": 0}

    def on_set(self, ctx, index, old, new):
        if index == 0:
            ctx.set("out", new)


class Probe(_Defaults):
    """Records every value written to ``in``; read it back via ``.trace``."""

    defaults = {"in": 0}

    def __init__(self):
        self.trace = []

    def on_set(self, ctx, index, old, new):
        self.trace.append(new)


class Group(_Defaults):
    defaults = {"children": ()}


class Holder(_Defaults):
    defaults = {"child": None}


def _d(name, behavior, *props):
    return NativeDescriptor(name, tuple(PropertyDecl(*p) for p in props), behavior)


STANDARD_KIT = (
    _d("std.Const", Const, ("value", "Int32", "RWB")),
    _d("std.ConstFloat", ConstFloat, ("value", "Float64", "RWB")),
    _d("std.ConstBool", ConstBool, ("value", "Boolean", "RWB")),
    _d("std.ConstString", ConstString, ("value", "String", "RWB")),
    _d("std.Adder", Adder, ("a", "Int32", "RW"), ("b", "Int32", "RW"), ("sum", "Int32", "RB")),
    _d("std.Mul", Mul, ("a", "Int32", "RW"), ("b", "Int32", "RW"), ("prod", "Int32", "RB")),
    _d("std.Gate", Gate, ("in", "Int32", "RW"), ("open", "Boolean", "RW"), ("out", "Int32", "RB")),
    _d("std.Counter", Counter, ("tick", "Int32", "W"), ("count", "Int32", "RB")),
    _d("std.Relay", Relay, ("in", "Int32", "RW"), ("out", "Int32", "RB")),
    _d("std.Probe", Probe, ("in", "Int32", "RW")),
    _d("std.Group", Group, ("children", "Node[]", "RWIRIW")),
    _d("std.Holder", Holder, ("child", "Node", "RW")),
)


def register_standard_kit(loader: TypeLoader) -> list:
    return [type_from_descriptor(loader, d) for d in STANDARD_KIT]


def standard_loader(type_path=()) -> TypeLoader:
    """A root loader with primitives and the standard kit registered."""
    loader = TypeLoader.root(type_path)
    register_standard_kit(loader)
    return loader
