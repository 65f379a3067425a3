"""Small text helpers shared by lexical scoring and the mock provider."""
from __future__ import annotations

import re

_WORD_RE = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    """
    a an and are as at be been between build by can do does for from has have how in into is it
    its of on or over such than that the their theory these this those through to under using
    via was were what when where whether which while who why will with within without
    """.split()
)


def terms(text: str) -> set[str]:
    """Lowercase content words longer than two characters."""
    return {w for w in _WORD_RE.findall(text.lower()) if len(w) > 2 and w not in STOPWORDS}


def overlap_score(query: str, document: str) -> float:
    """Fraction of query terms that occur in the document."""
    q = terms(query)
    if not q:
        return 0.0
    return len(q & terms(document)) / len(q)


def jaccard(a: str, b: str) -> float:
    ta, tb = terms(a), terms(b)
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def slugify(text: str, max_words: int = 4) -> str:
    words = [w for w in _WORD_RE.findall(text.lower()) if w not in STOPWORDS]
    return "_".join(words[:max_words]) or "item"
