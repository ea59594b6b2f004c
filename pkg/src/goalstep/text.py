"""Language tags and per-language tokenization.

English and Spanish text is tokenized into lowercased word tokens.
Thai has no whitespace word boundaries, so Thai strings are reduced to
character trigrams over the concatenated word characters instead.
"""
from __future__ import annotations

import re
from enum import Enum

_WORD_RE = re.compile(r"\w+", re.UNICODE)


class Language(str, Enum):
    en = "en"
    es = "es"
    th = "th"


def word_tokens(text: str) -> list[str]:
    """Lowercased word tokens (unicode word characters)."""
    return _WORD_RE.findall(text.lower())


def char_trigrams(text: str) -> list[str]:
    """Character trigrams over word characters, for unsegmented scripts.

    Strings shorter than 3 word characters collapse to a single token so
    that identical short strings still compare as equal token sets.
    """
    squeezed = "".join(_WORD_RE.findall(text.lower()))
    if not squeezed:
        return []
    if len(squeezed) < 3:
        return [squeezed]
    return [squeezed[i : i + 3] for i in range(len(squeezed) - 2)]


def tokenize(text: str, language: Language) -> list[str]:
    if language is Language.th:
        return char_trigrams(text)
    return word_tokens(text)


def token_set(text: str, language: Language) -> frozenset[str]:
    return frozenset(tokenize(text, language))
