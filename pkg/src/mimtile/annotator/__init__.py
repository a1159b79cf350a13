"""Annotation of image sets through a chat-completions endpoint."""

from .client import (
    AnnotationJob,
    AnnotationResult,
    AnnotatorClient,
    EndpointConfig,
    QAItem,
    ReplyParseError,
    augment_batch,
    augment_rationale,
    build_request,
    parse_reply,
    replay_log,
    sample_for_review,
)
from .templates import TemplateStore

__all__ = [
    "AnnotationJob",
    "AnnotationResult",
    "AnnotatorClient",
    "EndpointConfig",
    "QAItem",
    "ReplyParseError",
    "TemplateStore",
    "augment_batch",
    "augment_rationale",
    "build_request",
    "parse_reply",
    "replay_log",
    "sample_for_review",
]
