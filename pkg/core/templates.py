"""
Template registry and utilities.
"""
import os
import logging
from pathlib import Path
from typing import Dict, List

from jinja2 import Environment, FileSystemLoader, StrictUndefined

logger = logging.getLogger(__name__)

TEMPLATE_ROOT = Path(__file__).resolve().parent.parent / "templates"

# Registry of template directories by type; shipped directory first
_template_directories: Dict[str, List[str]] = {
    "plugins": [str(TEMPLATE_ROOT / "plugins")],
    "text": [str(TEMPLATE_ROOT / "text")],
    "rules": [str(TEMPLATE_ROOT / "rules")],
    "schemas": [str(TEMPLATE_ROOT / "schemas")],
}


def register_template_directory(template_type: str, directory: str) -> None:
    """
    Register an extra directory for a template type.

    Args:
        template_type: 'plugins', 'text', 'rules' or 'schemas'
        directory: Path to the directory
    """
    directories = _template_directories.setdefault(template_type, [])
    if directory not in directories:
        directories.append(directory)
        logger.info(f"Registered {template_type} template directory: {directory}")


def get_template_directories(template_type: str) -> List[str]:
    return _template_directories.get(template_type, [])


def resolve_template_path(template_type: str, name: str) -> Path:
    """
    Find a template file by name in the registered directories.

    Raises:
        FileNotFoundError: If no directory holds it
    """
    for directory in get_template_directories(template_type):
        candidate = Path(directory) / name
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{template_type} template not found: {name}")


def get_environment(template_type: str) -> Environment:
    """Jinja2 environment over the registered directories of one template type."""
    directories = [d for d in get_template_directories(template_type) if os.path.isdir(d)]
    return Environment(
        loader=FileSystemLoader(directories),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
