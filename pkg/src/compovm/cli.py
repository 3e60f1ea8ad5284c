"""``compovm`` command-line front end."""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .composer import ComposedImplementation, create_from_prototype
from .core import Type, TypeLoader, normalize, same_value, value_conforms
from .errors import CompoVMError
from .runtime import Instance, Space
from .stdkit import standard_loader
from .textio import format_value, parse_file, parse_literal, type_path_from_env, write_type

EXIT_OK, EXIT_EXPECT, EXIT_ERROR = 0, 1, 2


class ScriptError(CompoVMError):
    pass


class ExpectFailed(Exception):
    pass


def make_loader(type_path=()) -> TypeLoader:
    """Root loader with the standard kit, plus a child searching the type path."""
    return TypeLoader(standard_loader(), type_path_from_env(type_path))


def resolve_path(scene: Instance, path: str) -> tuple[Instance, str]:
    """``def.prop`` (or ``def.inner.prop``) to an instance and property name."""
    parts = path.split(".")
    if len(parts) < 2:
        raise ScriptError(f"bad path {path!r}: expected DEF.PROP")
    inst = scene
    for name in parts[:-1]:
        try:
            inst = inst.inner[name]
        except KeyError:
            raise ScriptError(f"no instance {name!r} in {path!r}") from None
    return inst, parts[-1]


class ScriptRunner:
    def __init__(self, space: Space, scene: Instance, out=None):
        self.space = space
        self.scene = scene
        self.out = out or sys.stdout

    def run(self, text: str) -> None:
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                self.step(line)
            except ExpectFailed:
                raise
            except CompoVMError as e:
                raise ScriptError(f"script line {lineno}: {e}") from None

    def step(self, line: str) -> None:
        verb, _, rest = line.partition(" ")
        rest = rest.strip()
        if verb == "pump":
            self.space.pump()
        elif verb == "set":
            path, _, literal = rest.partition(" ")
            inst, prop = resolve_path(self.scene, path)
            self.space.set(inst, prop, parse_literal(literal))
            self.space.pump()
        elif verb == "expect":
            path, _, literal = rest.partition(" ")
            inst, prop = resolve_path(self.scene, path)
            actual = self.space.get(inst, prop)
            vt = inst.value_type(inst.index(prop))
            wanted = normalize(vt, parse_literal(literal))
            if not (value_conforms(vt, wanted) and same_value(actual, wanted)):
                print(f"FAIL {path}: expected {format_value(wanted)}, got {format_value(actual)}",
                      file=self.out)
                raise ExpectFailed(path)
            print(f"ok {path} = {format_value(actual)}", file=self.out)
        elif verb == "trace":
            inst, prop = resolve_path(self.scene, rest)
            print(f"{rest} = {format_value(self.space.get(inst, prop))}", file=self.out)
        else:
            raise ScriptError(f"unknown script verb {verb!r}")


def load_scene(files, loader: TypeLoader) -> Type:
    scenes = []
    for f in files:
        result = parse_file(f, loader)
        if result.scene is not None:
            scenes.append((f, result.scene))
    if len(scenes) != 1:
        found = ", ".join(str(f) for f, _ in scenes) or "none"
        raise CompoVMError(f"expected exactly one scene block, found {len(scenes)} ({found})")
    scene_loader = TypeLoader(loader)
    return create_from_prototype(scene_loader, scenes[0][1])


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    loader = make_loader(args.type_path)
    try:
        scene_type = load_scene(args.files, loader)
        space = Space(loader)
        scene = space.instantiate(scene_type)
        script = ""
        if args.script:
            with open(args.script, encoding="utf-8") as f:
                script = f.read()
        ScriptRunner(space, scene, out).run(script)
    except ExpectFailed:
        return EXIT_EXPECT
    except (CompoVMError, OSError) as e:
        print(f"compovm: {e}", file=err)
        return EXIT_ERROR
    return EXIT_OK


def describe_type(t: Type) -> str:
    rows = [("name", "type", "access", "default", "category")]
    for p in t.interface:
        rows.append((p.name, p.value_type.name, str(p.access),
                     format_value(p.default), p.category.value))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = [f"type {t.name}"]
    lines += ["  " + "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    if isinstance(t.implementation, ComposedImplementation):
        lines.append("")
        lines.append(write_type(t).rstrip("\n"))
    return "\n".join(lines) + "\n"


def cmd_types(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    loader = make_loader(args.type_path)
    try:
        if args.action == "list":
            for name in loader.names():
                print(name, file=out)
        else:
            if not args.name:
                raise CompoVMError("types show needs a type name")
            out.write(describe_type(loader.resolve(args.name)))
    except (CompoVMError, OSError) as e:
        print(f"compovm: {e}", file=err)
        return EXIT_ERROR
    return EXIT_OK


def cmd_shell(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    from .shell import Shell

    Shell(make_loader(args.type_path), stdout=out, stderr=err).cmdloop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--type-path", action="append", default=[], metavar="DIR",
                        help="directory searched for type files (repeatable; before COMPOVM_TYPE_PATH)")
    parser = argparse.ArgumentParser(prog="compovm", parents=[common],
                                     description="Compose, inspect and run component types.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a scene with a stimulus script")
    run.add_argument("files", nargs="+", help="type files; exactly one must contain a scene")
    run.add_argument("--script", metavar="FILE", help="stimulus script")
    run.set_defaults(func=cmd_run)

    types = sub.add_parser("types", parents=[common], help="inspect registered types")
    types.add_argument("action", choices=("list", "show"))
    types.add_argument("name", nargs="?")
    types.set_defaults(func=cmd_types)

    shell = sub.add_parser("shell", parents=[common], help="interactive composition shell")
    shell.set_defaults(func=cmd_shell)
    return parser


def _merge_type_path(args, argv) -> None:
    # --type-path may appear before or after the subcommand; keep command-line order
    paths, it = [], iter(argv)
    for a in it:
        if a == "--type-path":
            paths.append(next(it, ""))
        elif a.startswith("--type-path="):
            paths.append(a.split("=", 1)[1])
    args.type_path = [p for p in paths if p]


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    _merge_type_path(args, argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
