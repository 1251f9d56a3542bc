"""Small text helpers shared by oracles, seeding, and metrics."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_RE = re.compile(r"[^.!?]+[.!?]?")
_WS_RE = re.compile(r"\s+")

# Deliberately small: enough to keep keyword heuristics from latching onto
# glue words, not an attempt at linguistic completeness.
STOPWORDS = frozenset(
    """
    a an the and or but if then than of in on at to for from by with without
    is are was were be been being do does did have has had will would can
    could shall should may might must it its this that these those there here
    as so not no nor about into over under between who whom whose which what
    where when why how
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def content_words(text: str) -> list[str]:
    """Tokens with stopwords removed. Order preserved, duplicates kept."""
    return [t for t in tokenize(text) if t not in STOPWORDS]


def content_word_set(text: str) -> set[str]:
    return set(content_words(text))


def sentences(text: str) -> list[str]:
    """Split on sentence punctuation. Keeps the terminator, strips whitespace."""
    return [s.strip() for s in _SENTENCE_RE.findall(text) if s.strip()]


def squash_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return _WS_RE.sub(" ", text).strip()


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit costs, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]
