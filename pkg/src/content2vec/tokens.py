"""Minimal text tokenization: lowercase, whitespace split, edge punctuation strip.

Deliberately small; product titles and descriptions get no linguistic
processing beyond this.
"""

from __future__ import annotations

import re

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_EDGE_PUNCT = re.compile(r"^\W+|\W+$", re.UNICODE)


def normalize_text(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation per token."""
    out = []
    for raw in text.lower().split():
        tok = _EDGE_PUNCT.sub("", raw)
        if tok:
            out.append(tok)
    return out


def tokenize(title: str, description: str, max_len: int = 10) -> list[str]:
    """First `max_len` tokens of title followed by description, right-padded."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    toks = normalize_text(title + " " + description)[:max_len]
    toks.extend([PAD_TOKEN] * (max_len - len(toks)))
    return toks


def clip_tokens(tokens, max_len: int) -> list[str]:
    """Truncate/pad an already-tokenized sequence to exactly `max_len`."""
    toks = list(tokens[:max_len])
    toks.extend([PAD_TOKEN] * (max_len - len(toks)))
    return toks
