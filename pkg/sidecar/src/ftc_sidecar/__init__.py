"""Sidecar serving real NLI classifiers and text generators over the
classify/generate wire protocol."""
from .config import SidecarConfig, SidecarError
from .server import SidecarServer, serve_real_models
from .service import InferenceService, RequestError

__all__ = [
    "InferenceService",
    "RequestError",
    "SidecarConfig",
    "SidecarError",
    "SidecarServer",
    "serve_real_models",
]
