"""Shared test helpers: random prototype generation, trace recording and
small independent oracles."""

from __future__ import annotations

import random
from pathlib import Path

from compovm.composer import create_from_prototype
from compovm.core import MISSING, Access, TypeLoader
from compovm.errors import CompoVMError
from compovm.prototype import Prototype
from compovm.runtime import Space
from compovm.stdkit import standard_loader

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

KIT = ("std.Const", "std.Adder", "std.Mul", "std.Gate", "std.Counter",
       "std.Relay", "std.Probe", "std.ConstBool", "std.Holder", "std.Group")
IFACE_ACCESS = ("RWB", "RWB", "RW", "RB", "R")


# -- oracles -----------------------------------------------------------------

def int32(v: int) -> int:
    """Two's-complement wrap, written independently of the library helper."""
    v &= 0xFFFFFFFF
    return v - 0x100000000 if v & 0x80000000 else v


def doubler(x: int) -> int:
    return int32(x + x)


def quadrupler(x: int) -> int:
    return doubler(doubler(x))


# -- random values -------------------------------------------------------------

def random_value(rng: random.Random, vt: str):
    if vt == "Boolean":
        return rng.random() < 0.5
    if rng.random() < 0.15:
        return rng.choice((-2**31, 2**31 - 1, rng.randint(-2**31, 2**31 - 1)))
    return rng.randint(-9, 9)


# -- random prototypes ---------------------------------------------------------

def random_prototype(rng: random.Random, loader: TypeLoader, name: str = "gen.T",
                     space: Space | None = None) -> Prototype:
    """A prototype with <=6 interface properties, <=5 kit components,
    random sharing, values, child links, access narrowing and <=8 routes."""
    space = space or Space(loader)
    p = Prototype(name, space)
    for k in range(rng.randint(1, 6)):
        vt = "Int32" if rng.random() < 0.8 else "Boolean"
        default = random_value(rng, vt) if rng.random() < 0.85 else MISSING
        p.add_interface_property(f"i{k}", vt, rng.choice(IFACE_ACCESS), default)
    comps = [p.add_component(f"c{j}", rng.choice(KIT)) for j in range(rng.randint(1, 5))]

    for ci in comps:
        for prop in ci.type.interface:
            vt = prop.value_type.name
            r = rng.random()
            if vt in ("Node", "Node[]"):
                if r < 0.5:
                    kids = [c for c in comps if c is not ci]
                    if kids:
                        try:
                            p.link_child(ci, prop.name, rng.choice(kids).def_name, rng.random() < 0.5)
                        except CompoVMError:
                            pass
                continue
            if r < 0.35:
                cands = [pp for pp in p.interface if pp.value_type is prop.value_type
                         and (Access.W in pp.access or Access.B in pp.access
                              or not prop.access & (Access.W | Access.B))]
                if cands:
                    p.share_property(ci, prop.name, rng.choice(cands))
            elif r < 0.45:
                cands = [(o, q.name) for o in comps for q in o.type.interface
                         if q.value_type is prop.value_type and (o, q.name) != (ci, prop.name)]
                if cands:
                    o, q = rng.choice(cands)
                    p.share_property(ci, prop.name, o.slot(q))
            elif r < 0.65:
                p.set_field(ci, prop.name, random_value(rng, vt), react=rng.random() < 0.5)

    for pp in p.interface:
        if rng.random() < 0.3:
            p.set_interface_value(pp.name, random_value(rng, pp.value_type.name))

    for _ in range(rng.randint(0, 2)):
        ci = rng.choice(comps)
        prop = rng.choice(ci.type.interface)
        try:
            p.restrict_access((ci.def_name, prop.name), rng.choice(("B", "W", "IW")))
        except CompoVMError:
            pass

    sources, targets = [], []
    for pp in p.interface:
        if pp.value_type.name in ("Int32", "Boolean"):
            if Access.B in pp.access:
                sources.append((pp, pp.value_type))
            if Access.W in pp.access:
                targets.append((pp, pp.value_type))
    for ci in comps:
        for idx, prop in enumerate(ci.type.interface):
            if prop.value_type.name not in ("Int32", "Boolean"):
                continue
            ref = (ci.def_name, prop.name)
            if Access.B in ci.instance.access[idx]:
                sources.append((ref, prop.value_type))
            if Access.W in ci.instance.access[idx]:
                targets.append((ref, prop.value_type))
    for _ in range(rng.randint(0, 8)):
        if not sources:
            break
        src, vt = rng.choice(sources)
        tgts = [t for t, tv in targets if tv is vt]
        if tgts:
            p.add_route(src, rng.choice(tgts))
    space.pump()
    return p


def writable_interface(p: Prototype) -> list:
    return [pp for pp in p.interface if Access.W in pp.access]


def random_script(rng: random.Random, p: Prototype, steps: int = 20) -> list:
    """``(name, value)`` sets; ``None`` entries mean a bare pump."""
    names = [(pp.name, pp.value_type.name) for pp in writable_interface(p)]
    script = []
    for _ in range(steps):
        if not names or rng.random() < 0.1:
            script.append(None)
        else:
            n, vt = rng.choice(names)
            script.append((n, random_value(rng, vt)))
    return script


# -- traces ----------------------------------------------------------------------

class PrototypeDriver:
    """Reads, writes and observes a live prototype through its interface."""

    def __init__(self, p: Prototype):
        self.p = p
        self.space = p.space
        self.events = []
        for pp in p.interface:
            if Access.B in pp.access:
                self.space.subscribe(pp.variable, 0, self._listener(pp.name))

    def _listener(self, name):
        return lambda old, new: self.events.append((name, new))

    def set(self, name, value):
        self.p.interface_property(name).set(value)

    def snapshot(self):
        return tuple(pp.value for pp in self.p.interface)


class InstanceDriver:
    def __init__(self, space: Space, t):
        self.space = space
        self.inst = space.instantiate(t)
        self.events = []
        for prop in t.interface:
            if Access.B in prop.access:
                space.subscribe(self.inst, prop.name, self._listener(prop.name))

    def _listener(self, name):
        return lambda old, new: self.events.append((name, new))

    def set(self, name, value):
        self.space.set(self.inst, name, value)

    def snapshot(self):
        return tuple(self.inst.read(i) for i in range(self.inst.property_count))


def run_trace(driver, script) -> list:
    trace = [("init", driver.snapshot())]
    for step in script:
        if step is not None:
            driver.set(*step)
        driver.space.pump()
        trace.append((tuple(driver.events), driver.snapshot()))
        driver.events.clear()
    return trace


def fresh_loader() -> TypeLoader:
    return TypeLoader(standard_loader(), [str(FIXTURES)])


def frozen_pair(seed: int):
    """Generate, validate and freeze a random prototype. Returns
    ``(prototype, type, loader)`` or ``None`` when validation fails."""
    rng = random.Random(seed)
    loader = fresh_loader()
    p = random_prototype(rng, loader, f"gen.T{seed}")
    if p.validate():
        return None
    t = create_from_prototype(loader, p)
    return p, t, loader
