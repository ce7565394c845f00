"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

MAX_BATCH_CAP = 256


@dataclass(frozen=True)
class ServiceConfig:
    """Static settings for one service process.

    ``mock`` mode serves deterministic fixture-backed scores (plus a toy
    language model) and requires a fixtures file; otherwise ``model`` names a
    three-class NLI checkpoint to load.  ``token``, when set, is the shared
    bearer token every request must carry.
    """

    model: str = "mock"
    device: str = "cpu"
    mock: bool = True
    fixtures: str | None = None
    max_batch: int = MAX_BATCH_CAP
    host: str = "127.0.0.1"
    port: int = 8130
    token: str | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.max_batch <= MAX_BATCH_CAP:
            raise ValueError(f"max_batch must be in 1..{MAX_BATCH_CAP}")
        if self.mock and not self.fixtures:
            raise ValueError("mock mode requires a fixtures file")
        if self.mock and not Path(self.fixtures).is_file():
            raise ValueError(f"fixtures file {self.fixtures!r} does not exist")
        if not self.mock and self.model == "mock":
            raise ValueError("real mode requires a model checkpoint name")
