"""HTTP scoring service: entailment probabilities and mock next-token logits."""

from .app import create_app
from .config import MAX_BATCH_CAP, ServiceConfig
from .scoring import (
    MockEntailmentBackend,
    MockLmBackend,
    RealNliBackend,
    fallback_probs,
)

__all__ = [
    "MAX_BATCH_CAP",
    "MockEntailmentBackend",
    "MockLmBackend",
    "RealNliBackend",
    "ServiceConfig",
    "create_app",
    "fallback_probs",
]

__version__ = "0.1.0"
