import threading

import pytest
from hypothesis import given, strategies as st

from compovm.core import (
    Access,
    Category,
    InterfaceType,
    TypeLoader,
    check_access,
    lookup_property,
    make_property,
    narrow_access,
    synthesize_variable_type,
    valid_type_name,
    value_conforms,
    wrap_int32,
    zero_value,
)
from compovm.errors import InvalidAccess, NameConflict, UnknownProperty, UnresolvedType
from compovm.runtime import Space
from compovm.stdkit import standard_loader
from compovm.textio import write_type

from helpers import FIXTURES, int32

flag_sets = st.sets(st.sampled_from(["R", "W", "B", "IR", "IW"])).map(
    lambda s: Access.parse("".join(sorted(s))))


@pytest.fixture
def loader():
    return standard_loader()


class TestValueConforms:
    def test_primitives(self, loader):
        assert value_conforms(loader.resolve("Int32"), 5)
        assert not value_conforms(loader.resolve("Int32"), "x")
        assert not value_conforms(loader.resolve("Int32"), True)
        assert not value_conforms(loader.resolve("Int32"), 2**31)
        assert value_conforms(loader.resolve("Int32"), -2**31)
        assert value_conforms(loader.resolve("Float64"), 1.5)
        assert not value_conforms(loader.resolve("Float64"), 1)
        assert value_conforms(loader.resolve("Boolean"), False)
        assert value_conforms(loader.resolve("String"), "")

    def test_arrays(self, loader):
        ints = loader.resolve("Int32[]")
        assert value_conforms(ints, (1, 2, 3))
        assert value_conforms(ints, ())
        assert not value_conforms(ints, (1, "2"))
        assert not value_conforms(ints, 1)

    def test_component_instances_are_nominal(self, loader):
        space = Space(loader)
        adder = space.instantiate("std.Adder")
        assert value_conforms(loader.resolve("std.Adder"), adder)
        assert not value_conforms(loader.resolve("std.Mul"), adder)
        assert value_conforms(loader.resolve("Node"), adder)
        assert value_conforms(loader.resolve("Node"), None)

    def test_unknown_value_type(self, loader):
        with pytest.raises(UnresolvedType):
            loader.resolve("no.Such")


class TestLookupProperty:
    def test_ordinal(self, loader):
        iface = loader.resolve("std.Adder").interface
        assert lookup_property(iface, "b") == 1
        assert [p.index for p in iface] == [0, 1, 2]

    def test_unknown(self, loader):
        with pytest.raises(UnknownProperty):
            lookup_property(loader.resolve("std.Adder").interface, "z")
        with pytest.raises(UnknownProperty):
            lookup_property(InterfaceType.build(()), "x")

    def test_duplicate_names_rejected(self, loader):
        i32 = loader.resolve("Int32")
        with pytest.raises(NameConflict):
            InterfaceType.build([make_property("a", i32, Access.R, 0), make_property("a", i32, Access.R, 0)])


class TestAccess:
    def test_parse_and_format(self):
        assert Access.parse("RWB") == Access.R | Access.W | Access.B
        assert Access.parse("[RBIRIW]") == Access.R | Access.B | Access.IR | Access.IW
        assert str(Access.parse("BWR")) == "RWB"
        assert Access.parse("") == Access.NONE
        with pytest.raises(InvalidAccess):
            Access.parse("RX")

    def test_narrow_examples(self):
        rwb = Access.parse("RWB")
        assert narrow_access(rwb, Access.W) == Access.R | Access.B
        assert narrow_access(Access.R, Access.NONE) == Access.R
        with pytest.raises(InvalidAccess):
            narrow_access(Access.R | Access.B, Access.R)

    def test_invariants(self, loader):
        with pytest.raises(InvalidAccess):
            check_access(Access.B)
        with pytest.raises(InvalidAccess):
            check_access(Access.parse("RIR"), loader.resolve("Int32"))
        check_access(Access.parse("RIR"), loader.resolve("Int32[]"))

    @given(flag_sets, flag_sets)
    def test_narrow_is_monotone_and_idempotent(self, base, deny):
        try:
            once = narrow_access(base, deny)
        except InvalidAccess:
            assert Access.B in base & ~deny and Access.R not in base & ~deny
            return
        assert once & ~base == Access.NONE
        assert narrow_access(once, deny) == once

    def test_categories(self):
        assert Category.for_access(Access.parse("R")) is Category.IMMUTABLE
        assert Category.for_access(Access.parse("RIR")) is Category.IMMUTABLE
        assert Category.for_access(Access.parse("RW")) is Category.MUTABLE
        assert Category.for_access(Access.parse("W")) is Category.MUTABLE
        assert Category.for_access(Access.parse("RB")) is Category.BOUND
        assert Category.for_access(Access.parse("RWB")) is Category.BOUND


class TestVariableTypes:
    def test_scalar(self, loader):
        t = synthesize_variable_type(loader, "Int32")
        assert t.name == "var<Int32>"
        (p,) = t.interface
        assert (p.name, p.value_type.name, str(p.access), p.default) == ("value", "Int32", "RWB", 0)
        assert t.is_component

    def test_array(self, loader):
        t = synthesize_variable_type(loader, "Int32[]")
        assert t.name == "var<Int32[]>"
        assert str(t.interface[0].access) == "RWBIRIW"
        assert t.interface[0].default == ()

    def test_cached(self, loader):
        a = synthesize_variable_type(loader, "Int32")
        assert synthesize_variable_type(loader, "Int32") is a
        assert a.id == loader.resolve("var<Int32>").id

    def test_zero_values(self, loader):
        assert [zero_value(loader.resolve(n)) for n in ("Int32", "Float64", "Boolean", "String", "Node")] \
            == [0, 0.0, False, "", None]

    def test_unresolved(self, loader):
        with pytest.raises(UnresolvedType):
            synthesize_variable_type(loader, "no.Such")


class TestLoader:
    def test_native_hit(self, loader):
        t = loader.resolve("std.Adder")
        assert loader.resolve("std.Adder") is t
        assert [p.name for p in t.interface] == ["a", "b", "sum"]

    def test_file_type_loaded_once(self):
        loader = TypeLoader(standard_loader(), [FIXTURES])
        t = loader.resolve("demo.Doubler")
        assert loader.resolve("demo.Doubler").id == t.id
        assert "demo.Doubler" in loader.names()

    def test_parent_first(self):
        root = standard_loader([FIXTURES])
        child = TypeLoader(root, [FIXTURES])
        t = child.resolve("demo.Doubler")
        assert root.lookup("demo.Doubler") is t
        assert child._cache == {}

    def test_child_types_invisible_to_parent(self):
        root = standard_loader()
        child = TypeLoader(root, [FIXTURES])
        child.resolve("demo.Quadrupler")
        assert root.lookup("demo.Quadrupler") is None
        with pytest.raises(UnresolvedType):
            root.resolve("demo.Quadrupler")
        # a variable over a child-only type lives in the child
        assert child.resolve("var<demo.Doubler>").interface[0].value_type is child.resolve("demo.Doubler")

    def test_name_conflict(self, loader):
        with pytest.raises(NameConflict):
            loader.register(loader.resolve("std.Adder"))

    def test_valid_names(self):
        assert valid_type_name("a.b.C_1")
        for bad in ("", "1a", "a..b", "a.", "a-b"):
            assert not valid_type_name(bad)

    def test_concurrent_resolution_single_winner(self):
        loader = TypeLoader(standard_loader(), [FIXTURES])
        results, errors = [], []

        def work():
            try:
                results.append(loader.resolve("demo.Quadrupler"))
            except Exception as e:  # pragma: no cover - reported below
                errors.append(e)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert not errors
        assert len({id(t) for t in results}) == 1


def test_types_unchanged_by_runtime_activity():
    loader = TypeLoader(standard_loader(), [FIXTURES])
    t = loader.resolve("demo.Quadrupler")
    before = write_type(t)
    space = Space(loader)
    for x in range(-3, 4):
        inst = space.instantiate(t)
        space.set(inst, "x", x)
        space.pump()
    assert write_type(t) == before
    with pytest.raises(AttributeError):
        t.name = "other"


def test_component_iff_all_defaults(loader):
    for name in loader.names():
        t = loader.resolve(name)
        if t.is_value_domain:
            assert not t.is_component
        else:
            assert t.is_component == all(p.has_default for p in t.interface)


@given(st.integers(min_value=-2**40, max_value=2**40))
def test_int32_wrap_matches_oracle(v):
    assert wrap_int32(v) == int32(v)
