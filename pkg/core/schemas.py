"""
Schema loading and validation for shipped data files.

This module provides:
1. Schema file loading from templates/schemas/ (YAML or JSON)
2. Validation of shipped data files (rule table, fleet spec) against them
"""
from typing import Any, Dict, Optional
import logging
import json
import os

import yaml
from jsonschema import Draft202012Validator
from jsonschema.exceptions import SchemaError as JsonSchemaError

logger = logging.getLogger(__name__)

# Cache for loaded schema files
_schema_cache: Dict[str, Dict[str, Any]] = {}


class SchemaError(Exception):
    """Base exception for schema-related errors."""
    pass


class SchemaNotFoundError(SchemaError):
    """Raised when a schema file cannot be found."""
    pass


class SchemaValidationError(SchemaError):
    """Raised when a schema is invalid, or a document does not satisfy its schema."""

    def __init__(self, message: str, source: Optional[str] = None):
        super().__init__(message)
        self.source = source


def clear_schema_cache() -> None:
    """Clear the schema file cache. Useful for testing."""
    _schema_cache.clear()


def load_schema_file(file_path: str) -> Dict[str, Any]:
    """
    Load a JSON Schema from a file.

    Supports both YAML (.yaml, .yml) and JSON (.json) formats.
    Results are cached to avoid repeated disk reads.

    Raises:
        SchemaNotFoundError: If the file doesn't exist
        SchemaValidationError: If the file isn't valid JSON Schema
    """
    abs_path = os.path.abspath(file_path)
    if abs_path in _schema_cache:
        return _schema_cache[abs_path]

    if not os.path.exists(abs_path):
        raise SchemaNotFoundError(f"Schema file not found: {file_path}")

    try:
        with open(abs_path, "r", encoding="utf-8") as f:
            if abs_path.endswith(".json"):
                schema = json.load(f)
            else:
                schema = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise SchemaValidationError(f"Invalid YAML in schema file {file_path}: {e}", file_path)
    except json.JSONDecodeError as e:
        raise SchemaValidationError(f"Invalid JSON in schema file {file_path}: {e}", file_path)

    if not isinstance(schema, dict):
        raise SchemaValidationError(f"Schema must be a mapping, got {type(schema).__name__}: {file_path}", file_path)
    try:
        Draft202012Validator.check_schema(schema)
    except JsonSchemaError as e:
        raise SchemaValidationError(f"Invalid JSON Schema in {file_path}: {e.message}", file_path)

    _schema_cache[abs_path] = schema
    logger.debug(f"Loaded and cached schema: {abs_path}")
    return schema


def get_shipped_schema(name: str) -> Dict[str, Any]:
    """
    Load a schema by file name from the registered schema directories.

    Raises:
        SchemaNotFoundError: If no directory holds it
    """
    from core.templates import resolve_template_path

    try:
        path = resolve_template_path("schemas", name)
    except FileNotFoundError as e:
        raise SchemaNotFoundError(str(e))
    return load_schema_file(str(path))


def validate_document(document: Any, schema_name: str, source: str = "<document>") -> None:
    """
    Validate a loaded data file against a shipped schema.

    Args:
        document: Parsed data (from YAML or JSON)
        schema_name: Schema file name, e.g. 'rule_table.yaml'
        source: Where the document came from (for error messages)

    Raises:
        SchemaValidationError: Naming the source and the first offending location
    """
    validator = Draft202012Validator(get_shipped_schema(schema_name))
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(part) for part in first.absolute_path) or "<root>"
        raise SchemaValidationError(f"{source}: {where}: {first.message}", source)
    logger.debug(f"{source} satisfies {schema_name}")
