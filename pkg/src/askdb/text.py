"""Deterministic text machinery: tokenization, stemming, abbreviation
expansion, and hashed character-trigram vectors.

Everything here is frozen and offline so that index construction, grounding
and the embedding fallback are bit-reproducible across runs and machines.
"""

from __future__ import annotations

import hashlib
import math
import re
from functools import lru_cache
from importlib import resources

EMBED_DIM = 512

_WORD_RE = re.compile(r"[A-Za-z]+|\d+(?:\.\d+)?")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")

# Frozen suffix-stripping rules, applied once, first match wins.
# (suffix, replacement, minimum stem length left behind)
_STEM_RULES = (
    ("sses", "ss", 2),
    ("ies", "y", 2),
    ("xes", "x", 2),
    ("ches", "ch", 2),
    ("shes", "sh", 2),
    ("ings", "", 4),
    ("ing", "", 4),
    ("edly", "", 4),
    ("ed", "", 4),
    ("s", "", 3),
)


def stem(token: str) -> str:
    """Lightweight frozen stemmer; favors reproducibility over linguistics."""
    t = token.lower()
    if t.endswith("ss") or t.endswith("us") or len(t) <= 3:
        return t
    for suffix, repl, keep in _STEM_RULES:
        if t.endswith(suffix) and len(t) - len(suffix) >= keep:
            return t[: len(t) - len(suffix)] + repl
    return t


def singularize(token: str) -> str:
    t = token.lower()
    if t.endswith("ies") and len(t) > 4:
        return t[:-3] + "y"
    if t.endswith("s") and not t.endswith("ss") and len(t) > 3:
        return t[:-1]
    return t


def split_identifier(name: str) -> list[str]:
    """Split a raw identifier into lowercase word tokens.

    Handles snake_case, camelCase, digit boundaries and punctuation.
    """
    parts: list[str] = []
    for chunk in re.split(r"[_\W]+", name):
        if not chunk:
            continue
        for piece in _CAMEL_RE.split(chunk):
            parts.extend(m.group(0).lower() for m in _WORD_RE.finditer(piece))
    return parts


def words(text: str) -> list[str]:
    """Lowercase word/number tokens of free text, punctuation dropped."""
    return [m.group(0).lower() for m in _WORD_RE.finditer(text)]


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    raw = resources.files("askdb.data").joinpath("stopwords.txt").read_text("utf-8")
    out = {line.strip() for line in raw.splitlines()}
    return frozenset(w for w in out if w and not w.startswith("#"))


@lru_cache(maxsize=1)
def abbreviations() -> dict[str, str]:
    raw = resources.files("askdb.data").joinpath("abbrev.tsv").read_text("utf-8")
    table: dict[str, str] = {}
    for line in raw.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        abbr, _, expansion = line.partition("\t")
        table[abbr.strip().lower()] = expansion.strip().lower()
    return table


def expand_token(token: str) -> str:
    return abbreviations().get(token.lower(), token.lower())


def normalize_tokens(text: str, *, keep_numbers: bool = True) -> list[str]:
    """Question/index normalization: tokenize, drop stopwords, stem."""
    out = []
    for tok in words(text):
        if tok in stopwords():
            continue
        if tok.isdigit() and not keep_numbers:
            continue
        out.append(tok if tok.isdigit() else stem(tok))
    return out


def dedupe_adjacent(tokens: list[str]) -> list[str]:
    out: list[str] = []
    for tok in tokens:
        if not out or out[-1] != tok:
            out.append(tok)
    return out


def edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def name_similarity(a: str, b: str) -> float:
    """Similarity in [0,1] blending token overlap and character distance."""
    ta, tb = set(split_identifier(a)), set(split_identifier(b))
    jaccard = len(ta & tb) / len(ta | tb) if ta | tb else 0.0
    la, lb = a.lower(), b.lower()
    dist = edit_distance(la, lb)
    char_sim = 1.0 - dist / max(len(la), len(lb), 1)
    return max(jaccard, char_sim)


def _trigrams(text: str) -> list[str]:
    padded = f"#{text.lower()}#"
    if len(padded) < 3:
        return [padded]
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def _bucket(gram: str) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big") % EMBED_DIM


def embed_text(text: str, idf: dict[str, float] | None = None) -> list[float]:
    """Hashed character-trigram vector, L2-normalized, EMBED_DIM dims.

    Sublinear term frequency; optional idf table (see TrigramVectorizer).
    Identical inputs produce identical vectors.
    """
    vec = [0.0] * EMBED_DIM
    counts: dict[str, int] = {}
    for gram in _trigrams(" ".join(words(text)) or text):
        counts[gram] = counts.get(gram, 0) + 1
    for gram, n in counts.items():
        weight = (1.0 + math.log(n)) * (idf.get(gram, 1.0) if idf else 1.0)
        vec[_bucket(gram)] += weight
    norm = math.sqrt(sum(v * v for v in vec))
    if norm > 0:
        vec = [v / norm for v in vec]
    else:
        vec[0] = 1.0
    return vec


def cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


class TrigramVectorizer:
    """TF-IDF flavored trigram embedder; idf is fit on a corpus when one
    exists (schema texts, question bank) and defaults to 1 otherwise."""

    def __init__(self):
        self.idf: dict[str, float] = {}

    def fit(self, corpus: list[str]) -> "TrigramVectorizer":
        df: dict[str, int] = {}
        for doc in corpus:
            for gram in set(_trigrams(" ".join(words(doc)) or doc)):
                df[gram] = df.get(gram, 0) + 1
        n = max(len(corpus), 1)
        self.idf = {g: 1.0 + math.log(n / (1 + c)) for g, c in df.items()}
        return self

    def transform(self, texts: list[str]) -> list[list[float]]:
        return [embed_text(t, self.idf or None) for t in texts]
