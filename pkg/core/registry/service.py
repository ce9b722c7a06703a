"""
Registry service: identification, plugin store, registration, reasoning and join tokens.
"""
import logging
import threading
from datetime import datetime, timedelta, timezone
from typing import Dict, Iterable, List, Optional, Tuple

from pydantic import ValidationError as PydanticValidationError

from core.config import RegistryConfig
from core.models import (
    CatalogEntry,
    Credentials,
    IdentificationResult,
    IdentificationStatus,
    RegistrationRecord,
    RegistrationStatus,
    SensingStrategy,
    SensorIdentity,
    SensorProfile,
)
from core.plugin.generator import render_plugin_document
from core.registry.reasoner import Reasoner, RuleTable
from core.registry.store import CorruptRecord, InvalidRecordId, RegistryError, RegistryStore, content_digest
from core.registry.tokens import TokenLedger
from core.simsensor.catalog import SHIPPED_MODELS, CatalogModel

logger = logging.getLogger(__name__)

# Phenomena that together make a frost prediction possible
FROST_WATCH = {"air_temperature", "soil_temperature", "humidity"}


class NotFound(RegistryError):
    pass


class UnknownUid(RegistryError):
    def __init__(self, uid: str):
        super().__init__(f"no registration for uid {uid}")
        self.uid = uid


class RegistryService:
    """
    All registry operations over one store.
    Registration and token issuance are atomic per call.
    """

    def __init__(self, config: RegistryConfig, store: Optional[RegistryStore] = None,
                 rules: Optional[RuleTable] = None):
        self.config = config
        self.store = store or RegistryStore(config.store_dir)
        self.reasoner = Reasoner(rules or RuleTable.from_file(config.rules_path), config.defaults)
        self.tokens = TokenLedger(self.store.tokens)
        self._lock = threading.RLock()

    # identification and plugins

    def identify_sensor(self, identity: SensorIdentity) -> IdentificationResult:
        return self.identify(identity.model, identity.manufacturer)

    def identify(self, model: str, manufacturer: str) -> IdentificationResult:
        """Exact, case-sensitive catalog lookup."""
        try:
            data = self.store.catalog.get(self.store.catalog_key(model, manufacturer))
        except InvalidRecordId:
            data = None
        if data is None:
            logger.info(f"Unknown sensor model {model!r} by {manufacturer!r}")
            return IdentificationResult(status=IdentificationStatus.UNKNOWN)
        entry = self._parse(CatalogEntry, "catalog", f"{model}@{manufacturer}", data)
        return IdentificationResult(
            status=IdentificationStatus.KNOWN,
            plugin_id=entry.plugin_id,
            plugin_digest=self.store.plugin_digest(entry.plugin_id),
            capabilities=entry.capabilities,
        )

    def get_plugin(self, plugin_id: str) -> Tuple[bytes, str]:
        """
        Stored descriptor bytes plus the digest of exactly those bytes.

        Raises:
            NotFound: If no plugin has this id
        """
        document = self.store.load_plugin(plugin_id)
        if document is None:
            raise NotFound(f"no plugin {plugin_id}")
        return document, content_digest(document)

    def publish(self, entry: CatalogEntry, document: str) -> str:
        with self._lock:
            digest = self.store.save_plugin(entry.plugin_id, document.encode("utf-8"))
            self.store.catalog.save(self.store.catalog_key(entry.model, entry.manufacturer), entry.to_dict())
        return digest

    def seed(self, models: Optional[Iterable[CatalogModel]] = None) -> int:
        """Publish the shipped catalog: one entry and one rendered plugin per model."""
        if models is None:
            models = SHIPPED_MODELS
        count = 0
        for model in models:
            entry = CatalogEntry(model=model.model, manufacturer=model.manufacturer,
                                 plugin_id=model.plugin_id, capabilities=model.phenomena)
            self.publish(entry, render_plugin_document(model.plugin_id, model.model, model.manufacturer,
                                                       model.dialect))
            count += 1
        logger.info(f"Seeded {count} catalog models")
        return count

    def catalog(self) -> List[CatalogEntry]:
        return [CatalogEntry.from_dict(data) for data in self.store.catalog.all()]

    # registration

    def register(self, profile: SensorProfile) -> RegistrationRecord:
        """Persist a profile; re-registering a uid supersedes its record."""
        record = RegistrationRecord(profile=profile, registered_at=datetime.now(timezone.utc))
        with self._lock:
            superseded = self.store.registrations.get(profile.identity.uid) is not None
            self.store.registrations.save(record.uid, record.to_dict())
        logger.info(f"{'Re-registered' if superseded else 'Registered'} {record.uid} ({profile.identity.model})")
        return record

    def record(self, uid: str) -> RegistrationRecord:
        data = self.store.registrations.get(uid)
        if data is None:
            raise UnknownUid(uid)
        return self._parse(RegistrationRecord, "registrations", uid, data)

    def registrations(self) -> List[RegistrationRecord]:
        self.refresh_stale()
        return self._registration_records()

    def refresh_stale(self, now: Optional[datetime] = None) -> int:
        """Mark records older than stale_after_s as stale."""
        now = now or datetime.now(timezone.utc)
        cutoff = now - timedelta(seconds=self.config.stale_after_s)
        marked = 0
        with self._lock:
            for record in self._registration_records():
                if record.status != RegistrationStatus.STALE and record.registered_at < cutoff:
                    stale = record.model_copy(update={"status": RegistrationStatus.STALE})
                    self.store.registrations.save(record.uid, stale.to_dict())
                    marked += 1
        return marked

    # reasoning

    def derived_facts(self, profile: SensorProfile) -> Dict[str, str]:
        """Companion facts from live registrations (the sensor itself included)."""
        self.refresh_stale()
        live = set(profile.phenomena)
        for record in self._registration_records():
            if record.status != RegistrationStatus.STALE:
                live.update(record.profile.phenomena)
        return {
            "companion_air_temperature": "present" if "air_temperature" in live else "absent",
            "frost_watch": "complete" if FROST_WATCH <= live else "partial",
        }

    def reason(self, uid: str, facts: Optional[Dict[str, str]] = None) -> SensingStrategy:
        """
        Design and record the strategy for a registered sensor.

        Raises:
            UnknownUid: If the uid is not registered
            StrategyInfeasible: If the rules force sampling out of range
        """
        record = self.record(uid)
        merged = {**self.derived_facts(record.profile), **(facts or {})}
        strategy = self.reasoner.reason(record.profile, merged)
        with self._lock:
            current = self.record(uid)
            self.store.registrations.save(uid, current.model_copy(update={"strategy": strategy}).to_dict())
        return strategy

    # credentials

    def issue_credentials(self, uid: str) -> Credentials:
        """Fresh single-use token for a registered uid, pointing at the data endpoint."""
        self.record(uid)
        with self._lock:
            token = self.tokens.issue(uid)
        return Credentials(host=self.config.sink_host, port=self.config.sink_port, token=token)

    def validate_join(self, uid: str, token: str) -> bool:
        with self._lock:
            accepted = self.tokens.validate(uid, token)
            if accepted:
                data = self.store.registrations.get(uid)
                if data is not None:
                    record = self._parse(RegistrationRecord, "registrations", uid, data)
                    configured = record.model_copy(update={"status": RegistrationStatus.CONFIGURED})
                    self.store.registrations.save(uid, configured.to_dict())
        logger.info(f"Join by {uid} {'accepted' if accepted else 'rejected'}")
        return accepted

    # stored documents

    @staticmethod
    def _parse(record_type, collection: str, id: str, data: Dict):
        try:
            return record_type.from_dict(data)
        except PydanticValidationError as e:
            raise CorruptRecord(collection, id, e.errors()[0]["msg"])

    def _registration_records(self) -> List[RegistrationRecord]:
        """Every readable registration; corrupt documents are logged and skipped."""
        records = []
        for data in self.store.registrations.all():
            try:
                records.append(RegistrationRecord.from_dict(data))
            except PydanticValidationError as e:
                logger.error(f"Skipping corrupt registration document: {e.errors()[0]['msg']}")
        return records
