"""The transformation catalog.

Importing this package registers every rule; look rules up with
`transforms.catalog()` or `transforms.get_rule(name)`.
"""

from .base import (  # noqa: F401
    Applicability,
    NotApplicable,
    Rule,
    Target,
    catalog,
    get_rule,
    parse_target,
    target_node,
)

from . import loops  # noqa: F401,E402
from . import simplify  # noqa: F401,E402
from . import dataflow  # noqa: F401,E402
from . import actions  # noqa: F401,E402
from . import abstraction  # noqa: F401,E402
