"""HTTP service: facade, state, persistence."""

from .app import create_app
from .state import (
    Account,
    CorruptMetadata,
    ServiceState,
    StoredPipeline,
    StudyRecord,
    UnknownId,
    bootstrap_tokens_file,
    instantiate_template,
    load_accounts,
)

__all__ = [
    "Account",
    "CorruptMetadata",
    "ServiceState",
    "StoredPipeline",
    "StudyRecord",
    "UnknownId",
    "bootstrap_tokens_file",
    "create_app",
    "instantiate_template",
    "load_accounts",
]
