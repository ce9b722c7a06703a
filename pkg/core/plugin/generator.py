"""
Dialect generation.

Every shipped dialect is one of four base families rendered with a variant
index. The variant knobs are derived from the index so that any two dialects
differ in at least one exchanged message:

- a revision literal on the handshake verb (every index above 0)
- a PING/PONG preamble before the handshake (index % 3 == 1)
- renamed verbs or operations (odd indices)
- reversed acknowledgement argument order (index % 4 >= 2)
"""
import re
import logging
from functools import lru_cache
from typing import List

from pydantic import Field

from core.models import Record
from core.plugin.descriptor import PluginDescriptor, parse_descriptor
from core.templates import get_environment

logger = logging.getLogger(__name__)

DIALECT_FAMILIES = ["hello", "at", "cfg", "reg"]
VARIANTS_PER_FAMILY = 13
DIALECT_ID = re.compile(r"^(?P<family>[a-z]+)-(?P<index>\d{2})$")


class DialectVariant(Record):
    """A base family plus a variant index, e.g. ``hello-00`` or ``cfg-07``."""
    family: str
    index: int = Field(ge=0, lt=VARIANTS_PER_FAMILY)

    @property
    def dialect_id(self) -> str:
        return f"{self.family}-{self.index:02d}"

    @property
    def revision(self) -> str:
        return f"{self.index:02d}" if self.index else ""

    @property
    def preamble(self) -> bool:
        return self.index % 3 == 1

    @property
    def renamed(self) -> bool:
        return self.index % 2 == 1

    @property
    def reverse_acks(self) -> bool:
        return self.index % 4 >= 2

    @classmethod
    def parse(cls, dialect_id: str) -> "DialectVariant":
        match = DIALECT_ID.match(dialect_id)
        if not match or match.group("family") not in DIALECT_FAMILIES:
            raise ValueError(f"unknown dialect {dialect_id!r}")
        return cls(family=match.group("family"), index=int(match.group("index")))


def shipped_dialects() -> List[str]:
    """All 52 dialect ids, family by family."""
    return [DialectVariant(family=family, index=index).dialect_id
            for family in DIALECT_FAMILIES
            for index in range(VARIANTS_PER_FAMILY)]


def render_plugin_document(plugin_id: str, model: str, manufacturer: str, dialect_id: str) -> str:
    """
    Render the plugin document for one model speaking the given dialect.

    Raises:
        ValueError: If the dialect id is not shipped
    """
    variant = DialectVariant.parse(dialect_id)
    template = get_environment("plugins").get_template(f"{variant.family}.toml.j2")
    document = template.render(
        plugin_id=plugin_id,
        model=model,
        manufacturer=manufacturer,
        variant=variant.dialect_id,
        revision=variant.revision,
        preamble=variant.preamble,
        renamed=variant.renamed,
        reverse_acks=variant.reverse_acks,
    )
    logger.debug(f"Rendered plugin {plugin_id} from dialect {variant.dialect_id}")
    return document


@lru_cache(maxsize=None)
def dialect_descriptor(plugin_id: str, model: str, manufacturer: str, dialect_id: str) -> PluginDescriptor:
    """Parsed descriptor for a rendered dialect; simulated sensors mirror it."""
    return parse_descriptor(render_plugin_document(plugin_id, model, manufacturer, dialect_id))
