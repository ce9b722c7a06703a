"""
Architecture test helpers: documentation links for failure messages.
"""
import os
from pathlib import Path

project_root = Path(__file__).parent.parent.parent

# Documentation references for helpful error messages
DOCS = {
    "architecture": "docs/concepts/architecture.md",
    "layering": "docs/architecture/decisions/adr-0001-layered-core-packages.md",
    "dialects": "docs/guides/adding-dialects.md",
    "reasoning": "docs/concepts/reasoning.md",
    "configuration": "docs/guides/configuration.md",
    "cli": "docs/reference/cli-commands.md",
}


def get_doc_link(doc_key):
    """Generate a helpful documentation link for error messages."""
    if doc_key in DOCS:
        relative_path = DOCS[doc_key]
        full_path = os.path.join(str(project_root), relative_path)
        return f"See: {relative_path} (full path: {full_path})"
    return ""
