"""A component runtime in which composed component types are built live
from prototype objects and then frozen into immutable, instantiable types."""

from .composer import create_from_prototype, instantiate_composed
from .core import (
    Access,
    Category,
    InterfaceType,
    PropertyType,
    Type,
    TypeLoader,
    lookup_property,
    narrow_access,
    synthesize_variable_type,
    value_conforms,
)
from .errors import *  # noqa: F401,F403
from .native import (
    Behavior,
    ForeignObjectView,
    NativeDescriptor,
    PropertyDecl,
    init_property_value,
    type_from_descriptor,
    wrap_foreign,
)
from .prototype import AccessPrototype, Prototype, new_prototype
from .runtime import Instance, Route, Space
from .stdkit import register_standard_kit, standard_loader
from .textio import file_source_resolve, parse, parse_file, write_type

__version__ = "0.1.0"
