"""
HTTP/JSON surface of the registry.
"""
import logging
from typing import Annotated, Dict, List

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field, StringConstraints

from core.models import (
    UID_PATTERN,
    Credentials,
    IdentificationResult,
    RegistrationRecord,
    SensingStrategy,
    SensorProfile,
)
from core.registry.reasoner import StrategyInfeasible
from core.registry.service import NotFound, RegistryService, UnknownUid
from core.registry.store import CorruptRecord, RegistryError

logger = logging.getLogger(__name__)

DIGEST_HEADER = "X-Content-Digest"

Uid = Annotated[str, StringConstraints(pattern=UID_PATTERN.pattern)]


class StrategyRequest(BaseModel):
    uid: Uid
    facts: Dict[str, str] = Field(default_factory=dict)


class CredentialsRequest(BaseModel):
    uid: Uid


class JoinRequest(BaseModel):
    uid: Uid
    token: str


class JoinResponse(BaseModel):
    accepted: bool


def create_app(service: RegistryService) -> FastAPI:
    app = FastAPI(title="caddot registry")
    app.state.service = service

    @app.exception_handler(RegistryError)
    async def registry_error(request: Request, exc: RegistryError) -> JSONResponse:
        if isinstance(exc, (NotFound, UnknownUid)):
            status = 404
        elif isinstance(exc, StrategyInfeasible):
            status = 409
        elif isinstance(exc, CorruptRecord):
            status = 500
        else:
            status = 422
        logger.info(f"{request.method} {request.url.path} -> {status}: {exc}")
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/identify", response_model=IdentificationResult, response_model_exclude_none=True)
    async def identify(model: str, mfr: str) -> IdentificationResult:
        return service.identify(model, mfr)

    @app.get("/plugins/{plugin_id}")
    async def get_plugin(plugin_id: str) -> Response:
        document, digest = service.get_plugin(plugin_id)
        return Response(content=document, media_type="text/plain; charset=utf-8",
                        headers={DIGEST_HEADER: digest})

    @app.post("/register", response_model=RegistrationRecord)
    async def register(profile: SensorProfile) -> RegistrationRecord:
        return service.register(profile)

    @app.post("/strategy", response_model=SensingStrategy)
    async def strategy(request: StrategyRequest) -> SensingStrategy:
        return service.reason(request.uid, request.facts)

    @app.post("/credentials", response_model=Credentials)
    async def credentials(request: CredentialsRequest) -> Credentials:
        return service.issue_credentials(request.uid)

    @app.post("/join", response_model=JoinResponse)
    async def join(request: JoinRequest) -> JoinResponse:
        return JoinResponse(accepted=service.validate_join(request.uid, request.token))

    @app.get("/registrations", response_model=List[RegistrationRecord])
    async def registrations() -> List[RegistrationRecord]:
        return service.registrations()

    return app
