"""
Declarative protocol adapters: descriptor documents, their interpreter and the dialect generator.
"""
from core.plugin.descriptor import (
    CANONICAL_ORDER,
    PIPELINE_PARAMS,
    PROFILE_CAPTURES,
    CanonicalOp,
    PluginDescriptor,
    SequenceScript,
    SequenceStep,
    PluginError,
    ParseError,
    ValidationError,
    content_digest,
    parse_descriptor,
    match_plugin,
)
from core.plugin.interpreter import (
    SequenceRunner,
    StepMismatch,
    StepTimeout,
    match_reply,
    run_sequence,
)
from core.plugin.generator import (
    DIALECT_FAMILIES,
    DialectVariant,
    dialect_descriptor,
    render_plugin_document,
    shipped_dialects,
)
