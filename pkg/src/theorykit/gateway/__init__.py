from .core import (
    FREE_TEXT,
    STRUCTURED,
    BeliefSamples,
    ChatRequest,
    ChatResponse,
    ContractViolation,
    Gateway,
    GatewayError,
    GatewayFailure,
    PermanentError,
    RetryPolicy,
    SearchFilter,
    SearchHit,
    TokenBucket,
    TransientError,
    Usage,
    parse_json_object,
)
from .ledger import CostLedger, LedgerEntry, Price, parallel_map
from .mock import MockCall, MockProvider, UnmappedRequest, mock_key
from .prompts import PromptAsset, PromptError, load_prompt

__all__ = [
    "FREE_TEXT",
    "STRUCTURED",
    "BeliefSamples",
    "ChatRequest",
    "ChatResponse",
    "ContractViolation",
    "CostLedger",
    "Gateway",
    "GatewayError",
    "GatewayFailure",
    "LedgerEntry",
    "MockCall",
    "MockProvider",
    "PermanentError",
    "Price",
    "PromptAsset",
    "PromptError",
    "RetryPolicy",
    "SearchFilter",
    "SearchHit",
    "TokenBucket",
    "TransientError",
    "UnmappedRequest",
    "Usage",
    "load_prompt",
    "mock_key",
    "parallel_map",
    "parse_json_object",
]
