"""Model I/O: wire protocol, HTTP clients, response cache, and the oracle world.

The mock server lives in ftc.modelio.mock_server (imported on demand so the
client-side surface stays free of the rewrite machinery it echoes).
"""
from .cache import ResponseCache, cached_call
from .client import CachedModel, ModelClient
from .oracle import OracleClassifier, OracleWorld, oracle_classify
from .protocol import (
    ClassifyRequest,
    GenerateRequest,
    ProtocolError,
    TransportError,
    canonical_json,
    request_key,
)

__all__ = [
    "CachedModel",
    "ClassifyRequest",
    "GenerateRequest",
    "ModelClient",
    "OracleClassifier",
    "OracleWorld",
    "ProtocolError",
    "ResponseCache",
    "TransportError",
    "cached_call",
    "canonical_json",
    "oracle_classify",
    "request_key",
]
