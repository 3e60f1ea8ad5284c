"""Interactive composition shell. Each verb maps onto one prototype operation."""

from __future__ import annotations

import cmd
import shlex
import sys
from typing import Optional

from .composer import create_from_prototype
from .core import MISSING, Type, TypeLoader
from .errors import CompoVMError, ValidationFault
from .prototype import Prototype
from .runtime import Space
from .textio import format_value, parse_literal, write_type


class Shell(cmd.Cmd):
    intro = "compovm shell. Type help or ? to list commands."

    def __init__(self, loader: TypeLoader, stdin=None, stdout=None, stderr=None):
        super().__init__(stdin=stdin, stdout=stdout or sys.stdout)
        self.err = stderr or sys.stderr
        self.loader = loader
        self.space = Space(loader)
        self.proto: Optional[Prototype] = None
        self.frozen: Optional[Type] = None
        interactive = (stdin or sys.stdin).isatty() if hasattr(stdin or sys.stdin, "isatty") else False
        if stdin is not None:
            self.use_rawinput = False
        self.prompt = "compovm> " if interactive else ""
        if not interactive:
            self.intro = None

    # -- plumbing ------------------------------------------------------------

    def say(self, text: str) -> None:
        print(text, file=self.stdout)

    def fail(self, text: str) -> None:
        print(f"error: {text}", file=self.err)

    def onecmd(self, line):
        try:
            return super().onecmd(line)
        except ValidationFault as e:
            self.fail("validation failed")
            for fault in e.report:
                print(f"  {fault}", file=self.err)
        except (CompoVMError, ValueError, OSError) as e:
            self.fail(str(e))
        return False

    def emptyline(self):
        return False

    def default(self, line):
        if line.strip().startswith("#"):
            return False
        self.fail(f"unknown command {line.split()[0]!r}")
        return False

    def need_proto(self) -> Prototype:
        if self.proto is None:
            raise CompoVMError("no prototype; start one with: proto NAME")
        return self.proto

    # -- verbs ---------------------------------------------------------------

    def do_proto(self, arg):
        """proto NAME: start a new prototype."""
        name = arg.strip()
        if not name:
            raise CompoVMError("usage: proto NAME")
        self.proto = Prototype(name, self.space)
        self.say(f"prototype {name}")

    def do_iface(self, arg):
        """iface [FLAGS] TYPE NAME [= LITERAL]: add an interface property."""
        head, eq, literal = arg.partition("=")
        words = head.split()
        if len(words) != 3 or not (words[0].startswith("[") and words[0].endswith("]")):
            raise CompoVMError("usage: iface [FLAGS] TYPE NAME [= LITERAL]")
        default = parse_literal(literal.strip()) if eq else MISSING
        self.need_proto().add_interface_property(words[2], words[1], words[0][1:-1], default)

    def do_add(self, arg):
        """add DEF TYPE: add a composing instance."""
        words = arg.split()
        if len(words) != 2:
            raise CompoVMError("usage: add DEF TYPE")
        self.need_proto().add_component(words[0], words[1])

    def do_set(self, arg):
        """set DEF.PROP LITERAL | set NAME LITERAL: assign a value (live)."""
        target, _, literal = arg.strip().partition(" ")
        value = parse_literal(literal.strip())
        proto = self.need_proto()
        if "." in target:
            d, p = target.split(".", 1)
            proto.set_field(d, p, value)
        else:
            proto.set_interface_value(target, value)

    def do_share(self, arg):
        """share DEF.PROP NAME|DEF2.PROP2: make DEF.PROP an alias of another property."""
        words = arg.split()
        if len(words) != 2 or "." not in words[0]:
            raise CompoVMError("usage: share DEF.PROP NAME")
        d, p = words[0].split(".", 1)
        self.need_proto().share_property(d, p, words[1])

    def do_link(self, arg):
        """link DEF.PROP CHILD: use composing instance CHILD as the value of DEF.PROP."""
        words = arg.split()
        if len(words) != 2 or "." not in words[0]:
            raise CompoVMError("usage: link DEF.PROP CHILD")
        d, p = words[0].split(".", 1)
        self.need_proto().link_child(d, p, words[1])

    def do_route(self, arg):
        """route A.P -> B.Q: connect a bound property to a writable one."""
        src, arrow, dst = arg.partition("->")
        if not arrow or not src.strip() or not dst.strip():
            raise CompoVMError("usage: route A.P -> B.Q")
        self.need_proto().add_route(src.strip(), dst.strip())

    def do_deny(self, arg):
        """deny TARGET FLAGS: remove access rights from NAME or DEF.PROP."""
        words = arg.split()
        if len(words) != 2:
            raise CompoVMError("usage: deny TARGET FLAGS")
        flags = words[1].strip("[]")
        target = words[0]
        proto = self.need_proto()
        if "." in target:
            target = tuple(target.split(".", 1))
        new = proto.restrict_access(target, flags)
        self.say(f"{words[0]} [{new}]")

    def do_get(self, arg):
        """get NAME | get DEF.PROP: print the current live value."""
        path = arg.strip()
        proto = self.need_proto()
        if "." in path:
            d, p = path.split(".", 1)
            ci = proto.component(d)
            value = ci.instance.read(ci.index(p))
        else:
            value = proto.interface_property(path).value
        self.say(f"{path} = {format_value(value)}")

    def do_pump(self, arg):
        """pump: deliver pending events."""
        self.say(f"delivered {self.space.pump()}")

    def do_freeze(self, arg):
        """freeze: create an immutable type from the current prototype."""
        proto = self.need_proto()
        self.frozen = create_from_prototype(self.loader, proto)
        self.say(f"created {self.frozen.name}")

    def do_save(self, arg):
        """save FILE: write the last frozen type in canonical form."""
        path = shlex.split(arg)[0] if arg.strip() else ""
        if not path:
            raise CompoVMError("usage: save FILE")
        if self.frozen is None:
            raise CompoVMError("nothing frozen yet")
        with open(path, "w", encoding="utf-8") as f:
            f.write(write_type(self.frozen))
        self.say(f"saved {self.frozen.name} to {path}")

    def do_show(self, arg):
        """show [TYPE]: print a type in canonical form (default: last frozen)."""
        t = self.loader.resolve(arg.strip()) if arg.strip() else self.frozen
        if t is None:
            raise CompoVMError("nothing frozen yet")
        self.stdout.write(write_type(t))

    def do_quit(self, arg):
        """quit: leave the shell."""
        return True

    do_EOF = do_quit
