"""
Cloud middleware stand-in: catalog, plugin store, registrations, reasoner and join tokens.
"""
from core.registry.reasoner import (
    ContextRule,
    Reasoner,
    RuleTable,
    RuleTableError,
    StrategyInfeasible,
)
from core.registry.service import NotFound, RegistryService, UnknownUid
from core.registry.store import CorruptRecord, InvalidRecordId, RegistryError, RegistryStore, content_digest
from core.registry.tokens import TokenLedger
