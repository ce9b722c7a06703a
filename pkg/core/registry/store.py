"""
On-disk store for the registry: one directory, one JSON document per record.

Layout under the store root::

    catalog/<model>@<manufacturer>.json
    plugins/<plugin id>.toml         verbatim descriptor document
    plugins/<plugin id>.meta.json    digest and publish time
    registrations/<uid>.json
    tokens/<uid>.json
"""
import os
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Optional, Type

from pydantic import BaseModel

from core.plugin.descriptor import content_digest

logger = logging.getLogger(__name__)


class RegistryError(Exception):
    """Base exception for registry errors."""
    pass


class InvalidRecordId(RegistryError):
    """A record id that would leave its collection directory."""

    def __init__(self, id: str):
        super().__init__(f"invalid record id {id!r}")
        self.id = id


class CorruptRecord(RegistryError):
    """A stored document that no longer parses as its record type."""

    def __init__(self, collection: str, id: str, detail: str):
        super().__init__(f"stored {collection} record {id} is corrupt: {detail}")
        self.collection = collection
        self.id = id


def check_id(id: str) -> str:
    """Ids name one file inside one collection; no separators, no parent steps."""
    if not id or "/" in id or "\\" in id or ".." in id or "\0" in id:
        raise InvalidRecordId(id)
    return id


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def dump_json(data: Any) -> bytes:
    """Canonical JSON rendering, so unchanged records stay byte-identical."""
    return (json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


class StorageAdapter(BaseModel):
    """Base model for storage adapters"""
    name: str
    collection: str

    _registry: ClassVar[Dict[str, Type["StorageAdapter"]]] = {}

    def save(self, id: str, data: Dict[str, Any]) -> None:
        raise NotImplementedError("Storage adapters must implement save method")

    def get(self, id: str) -> Optional[Dict[str, Any]]:
        raise NotImplementedError("Storage adapters must implement get method")

    def delete(self, id: str) -> bool:
        raise NotImplementedError("Storage adapters must implement delete method")

    def ids(self) -> List[str]:
        raise NotImplementedError("Storage adapters must implement ids method")

    @classmethod
    def register(cls, adapter_class: Type["StorageAdapter"]) -> None:
        """Register an adapter implementation"""
        cls._registry[adapter_class.model_fields["name"].default] = adapter_class

    @classmethod
    def lookup(cls, name: str) -> Optional[Type["StorageAdapter"]]:
        return cls._registry.get(name)


class FileAdapter(StorageAdapter):
    """File-based storage adapter"""
    name: str = "file"
    base_dir: str = "storage/registry"

    def _get_file_path(self, id: str) -> Path:
        return Path(self.base_dir) / self.collection / f"{check_id(id)}.json"

    def save(self, id: str, data: Dict[str, Any]) -> None:
        _write_atomic(self._get_file_path(id), dump_json(data))

    def get(self, id: str) -> Optional[Dict[str, Any]]:
        file_path = self._get_file_path(id)
        if not file_path.exists():
            return None
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading JSON file {file_path}: {e}")
            return None

    def delete(self, id: str) -> bool:
        file_path = self._get_file_path(id)
        if not file_path.exists():
            return False
        os.remove(file_path)
        return True

    def ids(self) -> List[str]:
        collection_dir = Path(self.base_dir) / self.collection
        if not collection_dir.exists():
            return []
        return sorted(p.name[:-len(".json")] for p in collection_dir.iterdir()
                      if p.name.endswith(".json") and not p.name.endswith(".meta.json"))


StorageAdapter.register(FileAdapter)


class Repository:
    """Repository for managing records in a collection."""

    def __init__(self, collection_name: str, base_dir: Path, adapter_name: str = "file"):
        self.collection_name = collection_name
        adapter_cls = StorageAdapter.lookup(adapter_name)
        if not adapter_cls:
            raise ValueError(f"Storage adapter '{adapter_name}' not found")
        self.adapter = adapter_cls(collection=collection_name, base_dir=str(base_dir))

    def save(self, id: str, data: Dict[str, Any]) -> None:
        self.adapter.save(id, data)

    def get(self, id: str) -> Optional[Dict[str, Any]]:
        return self.adapter.get(id)

    def delete(self, id: str) -> bool:
        return self.adapter.delete(id)

    def all(self) -> List[Dict[str, Any]]:
        return [doc for doc in (self.adapter.get(id) for id in self.adapter.ids()) if doc is not None]


class RegistryStore:
    """The registry's collections plus the plugin document store."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.catalog = Repository("catalog", self.root)
        self.registrations = Repository("registrations", self.root)
        self.tokens = Repository("tokens", self.root)
        self.plugin_dir = self.root / "plugins"
        self.plugin_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Registry store at {self.root}")

    @staticmethod
    def catalog_key(model: str, manufacturer: str) -> str:
        return check_id(f"{model}@{manufacturer}")

    def _plugin_path(self, plugin_id: str, suffix: str) -> Path:
        return self.plugin_dir / f"{check_id(plugin_id)}{suffix}"

    def save_plugin(self, plugin_id: str, document: bytes) -> str:
        """Store a descriptor verbatim; returns its publish-time digest."""
        digest = content_digest(document)
        meta_path = self._plugin_path(plugin_id, ".meta.json")
        doc_path = self._plugin_path(plugin_id, ".toml")
        if doc_path.exists() and self.plugin_digest(plugin_id) == digest:
            return digest
        _write_atomic(doc_path, document)
        _write_atomic(meta_path, dump_json({
            "plugin_id": plugin_id,
            "digest": digest,
            "published_at": datetime.now(timezone.utc).isoformat(),
        }))
        logger.info(f"Published plugin {plugin_id} ({digest[:12]})")
        return digest

    def load_plugin(self, plugin_id: str) -> Optional[bytes]:
        path = self._plugin_path(plugin_id, ".toml")
        if not path.exists():
            return None
        return path.read_bytes()

    def plugin_digest(self, plugin_id: str) -> Optional[str]:
        """Digest recorded when the plugin was published."""
        path = self._plugin_path(plugin_id, ".meta.json")
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f).get("digest")

    def plugin_ids(self) -> List[str]:
        return sorted(p.name[:-len(".toml")] for p in self.plugin_dir.glob("*.toml"))
