import pytest
from hypothesis import given, strategies as st

from compovm.core import Access, InterfaceType, make_property, new_type
from compovm.errors import AccessViolation, IndexOutOfBounds, NotAComponent, TypeMismatch, UnknownProperty
from compovm.native import NativeDescriptor, PropertyDecl, type_from_descriptor
from compovm.runtime import Space
from compovm.stdkit import Behavior, standard_loader

from helpers import int32


@pytest.fixture
def space():
    return Space(standard_loader())


def test_instantiate_adder(space):
    a = space.instantiate("std.Adder")
    assert [space.get(a, p) for p in ("a", "b", "sum")] == [0, 0, 0]


def test_instantiate_non_component(space):
    i32 = space.loader.resolve("Int32")
    t = new_type("t.NoDefault", InterfaceType.build([make_property("v", i32, Access.R)]), None)
    with pytest.raises(NotAComponent):
        space.instantiate(t)
    with pytest.raises(NotAComponent):
        space.instantiate("Int32")


def test_instances_independent(space):
    a1, a2 = space.instantiate("std.Adder"), space.instantiate("std.Adder")
    space.set(a1, "a", 5)
    assert space.get(a2, "a") == 0


def test_get_by_index_and_name(space):
    c = space.instantiate("std.Const")
    assert space.get(c, "value") == 0
    assert space.get(c, 0) == space.get(c, "value")
    with pytest.raises(UnknownProperty):
        space.get(c, "nope")


def test_get_write_only(space):
    c = space.instantiate("std.Counter")
    with pytest.raises(AccessViolation):
        space.get(c, "tick")


@given(st.integers(-2**31, 2**31 - 1), st.integers(-2**31, 2**31 - 1))
def test_adder_oracle(a, b):
    space = Space(standard_loader())
    add = space.instantiate("std.Adder")
    space.set(add, "a", a)
    space.set(add, "b", b)
    assert space.get(add, "sum") == int32(a + b)


def test_set_examples(space):
    add = space.instantiate("std.Adder")
    space.set(add, "a", 2)
    space.set(add, "b", 3)
    assert space.get(add, "sum") == 5
    with pytest.raises(TypeMismatch):
        space.set(add, "a", "x")
    with pytest.raises(AccessViolation):
        space.set(add, "sum", 1)


def test_unchanged_value_enqueues_nothing(space):
    c = space.instantiate("std.Const")
    space.set(c, "value", 0)
    assert space.pending == 0
    space.set(c, "value", 1)
    assert space.pending == 1


def test_mutation_visible_before_events(space):
    c = space.instantiate("std.Const")
    seen = []
    space.subscribe(c, "value", lambda old, new: seen.append((old, new, space.get(c, "value"))))
    space.set(c, "value", 3)
    assert seen == []
    space.pump()
    assert seen == [(0, 3, 3)]


def _array_type(loader, access):
    class Arr(Behavior):
        def init(self, ctx):
            ctx.init_property_value("v", (1, 2, 3))

    name = f"t.Arr{access}"
    return type_from_descriptor(loader, NativeDescriptor(name, [PropertyDecl("v", "Int32[]", access)], Arr))


def test_indexed_access(space):
    t = _array_type(space.loader, "RWBIRIW")
    inst = space.instantiate(t)
    assert space.get_indexed(inst, "v", 1) == 2
    with pytest.raises(IndexOutOfBounds):
        space.set_indexed(inst, "v", 5, 0)
    with pytest.raises(TypeMismatch):
        space.set_indexed(inst, "v", 0, "x")
    events = []
    space.subscribe(inst, "v", lambda old, new: events.append(new))
    space.set_indexed(inst, "v", 0, 9)
    space.pump()
    assert events == [(9, 2, 3)]


def test_indexed_denied(space):
    plain = space.instantiate(_array_type(space.loader, "RW"))
    with pytest.raises(AccessViolation):
        space.get_indexed(plain, "v", 0)
    adder = space.instantiate("std.Adder")
    with pytest.raises(AccessViolation):
        space.set_indexed(adder, "a", 0, 1)


def test_array_values_are_snapshots(space):
    inst = space.instantiate(_array_type(space.loader, "RWB"))
    data = [4, 5]
    space.set(inst, "v", data)
    data.append(6)
    assert space.get(inst, "v") == (4, 5)


def test_route_single_hop(space):
    c, add = space.instantiate("std.Const"), space.instantiate("std.Adder")
    space.add_route(c, "value", add, "a")
    space.set(c, "value", 4)
    assert space.pump() == 1
    assert space.get(add, "a") == 4
    assert space.get(add, "sum") == 4


def test_route_errors(space):
    add, c = space.instantiate("std.Adder"), space.instantiate("std.Const")
    s = space.instantiate("std.ConstString")
    with pytest.raises(AccessViolation):
        space.add_route(add, "a", c, "value")
    with pytest.raises(AccessViolation):
        space.add_route(c, "value", add, "sum")
    with pytest.raises(TypeMismatch):
        space.add_route(c, "value", s, "value")


def test_two_route_cycle(space):
    a, b = space.instantiate("std.Const"), space.instantiate("std.Const")
    space.add_route(a, "value", b, "value")
    space.add_route(b, "value", a, "value")
    space.set(a, "value", 1)
    assert space.pump() <= 2
    assert space.get(b, "value") == 1


def test_empty_pump(space):
    assert space.pump() == 0


def test_fan_out_in_creation_order(space):
    c = space.instantiate("std.Const")
    probes = [space.instantiate("std.Probe") for _ in range(3)]
    order = []
    for k, p in enumerate(probes):
        space.add_route(c, "value", p, "in")
        space.subscribe(c, "value", lambda old, new, k=k: order.append(k))
    space.set(c, "value", 7)
    assert space.pump() == 3
    assert [p.behavior.trace for p in probes] == [[7], [7], [7]]
    assert order == [0, 1, 2]


def test_subscribe(space):
    c = space.instantiate("std.Const")
    seen = []
    sub = space.subscribe(c, "value", lambda old, new: seen.append(new))
    space.set(c, "value", 1)
    space.pump()
    assert seen == [1]
    sub.unsubscribe()
    space.set(c, "value", 2)
    space.pump()
    assert seen == [1]
    with pytest.raises(AccessViolation):
        space.subscribe(space.instantiate("std.Adder"), "a", lambda o, n: None)


def test_separate_cascades_each_deliver(space):
    a, b = space.instantiate("std.Relay"), space.instantiate("std.Relay")
    space.add_route(a, "out", b, "in")
    space.set(a, "in", 1)
    space.set(a, "in", 2)
    assert space.pump() == 2
    assert space.get(b, "out") == 2


def test_counter_counts_every_write(space):
    c = space.instantiate("std.Counter")
    for _ in range(3):
        space.set(c, "tick", 1)
    assert space.get(c, "count") == 3


def test_gate(space):
    g = space.instantiate("std.Gate")
    space.set(g, "in", 5)
    assert space.get(g, "out") == 0
    space.set(g, "open", True)
    assert space.get(g, "out") == 5


def test_context_stack_balanced_on_error(space):
    class BoomImpl:
        uses_context = True

        def populate(self, space, inst):
            raise RuntimeError("boom")

    i32 = space.loader.resolve("Int32")
    t = new_type("t.Boom", InterfaceType.build([make_property("v", i32, Access.R, 0)]), BoomImpl())
    with pytest.raises(RuntimeError):
        space.instantiate(t)
    assert space.context_stack == []
