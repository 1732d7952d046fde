"""Token and word counters.

Real model tokenizers are not bundled; counting is pluggable so corpora can be
filtered and batched under whatever counter the deployment configures. The
whitespace counter doubles as the word counter for the too-short filter
(baseline convention: tokens are words).
"""

from __future__ import annotations

import math
from typing import Callable

TokenCounter = Callable[[str], int]


def whitespace_tokens(text: str) -> int:
    """Number of whitespace-separated tokens."""
    return len(text.split())


def chars_per_token(chars: int = 4) -> TokenCounter:
    """Crude BPE stand-in: ceil(len/chars) tokens."""

    def count(text: str) -> int:
        return math.ceil(len(text) / chars) if text else 0

    return count


def get_counter(name: str) -> TokenCounter:
    if name == "whitespace":
        return whitespace_tokens
    if name.startswith("chars:"):
        return chars_per_token(int(name.split(":", 1)[1]))
    raise ValueError(f"unknown token counter {name!r}")
