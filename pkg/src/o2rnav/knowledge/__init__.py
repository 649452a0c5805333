"""LLM-derived object-to-room knowledge."""

from .llm import (
    API_KEY_ENV,
    DEFAULT_PROMPTS,
    AuthError,
    EndpointConfig,
    LLMParseError,
    PromptPair,
    TransportError,
    parse_scores,
    query_llm_matrix,
)
from .matrix import (
    BUNDLED_DATASETS,
    MatrixFormatError,
    O2RMatrix,
    bundled_for,
    bundled_matrix,
    combine_scores,
    load_matrix,
    save_matrix,
    top_rooms,
)
