"""Repeated-sampling harvest client for the conformal QA engine."""

from .client import HarvestError, HarvestResult, QuestionInput, harvest, read_questions
from .config import DEFAULT_PROMPT_TEMPLATE, RetryPolicy, SamplerConfig

__version__ = "0.1.0"
