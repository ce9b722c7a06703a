"""
Single-use join tokens.

Tokens carry 128 bits of entropy and are stored only as SHA-256 hashes. A new
issuance for a uid replaces the previous live token.
"""
import hmac
import hashlib
import logging
import secrets
from datetime import datetime, timezone

from pydantic import ValidationError as PydanticValidationError

from core.models import Record
from core.registry.store import CorruptRecord, Repository

logger = logging.getLogger(__name__)

TOKEN_BYTES = 16


def new_token() -> str:
    return secrets.token_hex(TOKEN_BYTES)


def hash_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


class TokenRecord(Record):
    uid: str
    token_hash: str
    issued_at: datetime
    used: bool = False


class TokenLedger:
    """Issues tokens and validates them exactly once."""

    def __init__(self, repository: Repository):
        self.repository = repository

    def issue(self, uid: str) -> str:
        token = new_token()
        record = TokenRecord(uid=uid, token_hash=hash_token(token), issued_at=datetime.now(timezone.utc))
        self.repository.save(uid, record.to_dict())
        logger.debug(f"Issued join token for {uid}")
        return token

    def validate(self, uid: str, token: str) -> bool:
        """Accept iff ``token`` is the live, unused issuance for ``uid``; marks it used."""
        data = self.repository.get(uid)
        if data is None:
            return False
        try:
            record = TokenRecord.from_dict(data)
        except PydanticValidationError as e:
            raise CorruptRecord("tokens", uid, e.errors()[0]["msg"])
        if record.used or not hmac.compare_digest(record.token_hash, hash_token(token)):
            return False
        self.repository.save(uid, record.model_copy(update={"used": True}).to_dict())
        return True
