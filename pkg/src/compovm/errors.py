"""Exception hierarchy shared by every compovm module."""


class CompoVMError(Exception):
    """Base class for all runtime and composition failures.

    ``where`` is set to a source location when the failure happened while
    parsing a file.
    """

    where = None

    def describe(self) -> str:
        return super().__str__()

    def __str__(self):
        return f"{self.where}: {self.describe()}" if self.where else self.describe()


class UnresolvedType(CompoVMError):
    """``args[0]`` is always the unresolved name."""

    def describe(self) -> str:
        detail = f": {self.args[1]}" if len(self.args) > 1 else ""
        return f"unresolved type {self.args[0]!r}{detail}"


class UnknownProperty(CompoVMError):
    pass


class NameConflict(CompoVMError):
    pass


class InvalidAccess(CompoVMError):
    """An access-rights set that cannot exist (e.g. bound but not readable)."""


class AccessViolation(CompoVMError):
    """An operation was attempted that the property's access rights deny."""


class TypeMismatch(CompoVMError):
    pass


class ShapeMismatch(TypeMismatch):
    """A foreign object does not behave like its declared property shape."""


class NotAComponent(CompoVMError):
    pass


class MissingDefault(CompoVMError):
    pass


class DuplicateInit(CompoVMError):
    pass


class IndexOutOfBounds(CompoVMError):
    pass


class CycleDetected(CompoVMError):
    pass


class NotSerializable(CompoVMError):
    pass


class ValidationFault(CompoVMError):
    def __init__(self, report):
        self.report = list(report)
        super().__init__("; ".join(str(f) for f in self.report) or "invalid prototype")


class ParseError(CompoVMError):
    """Malformed source text. ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line=0, column=0, path=None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        where = f"{path}:" if path else ""
        super().__init__(f"{where}{line}:{column}: {message}")


class UnknownName(ParseError):
    pass
