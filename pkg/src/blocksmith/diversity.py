"""Instruction-set diversity: mean pairwise embedding distance and curves.

Diversity of a set of sentences is the mean pairwise cosine distance of
their embeddings. The default embedder is a seeded feature-hashing bag of
words and bigrams: fully deterministic, offline, and dependency-free, so
scores are reproducible anywhere. A hosted embedding model can be swapped
in through the :class:`EmbeddingProvider` protocol without changing any
of the curve math.
"""
from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

EMBEDDING_DIMS = 256
DEFAULT_SHUFFLES = 100


class TooFewTasks(ValueError):
    """Pairwise diversity needs at least two texts."""


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Row-per-text matrix; rows are expected to be L2-normalized."""
        ...


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Feature-hashed unigrams and bigrams in a fixed-width vector.

    Each token hashes (sha256) to a coordinate and a sign, counts
    accumulate, and rows are L2-normalized. No fitted state, no network.
    """

    def __init__(self, dims: int = EMBEDDING_DIMS) -> None:
        if dims < 2:
            raise ValueError("need at least 2 dimensions")
        self.dims = dims

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        index = int.from_bytes(digest[:4], "big") % self.dims
        sign = 1.0 if digest[4] & 1 else -1.0
        return index, sign

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dims), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            grams = tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]
            for gram in grams:
                index, sign = self._slot(gram)
                out[row, index] += sign
            norm = float(np.linalg.norm(out[row]))
            if norm > 0.0:
                out[row] /= norm
        return out


_DEFAULT_EMBEDDER = HashingEmbedder()


def mean_pairwise_diversity(
    texts: Sequence[str], embedder: Optional[EmbeddingProvider] = None
) -> float:
    """Mean over unordered pairs of (1 - cosine similarity)."""
    if len(texts) < 2:
        raise TooFewTasks(f"need at least 2 texts, got {len(texts)}")
    vectors = (embedder or _DEFAULT_EMBEDDER).embed(texts)
    return _diversity_of_vectors(vectors)


def _diversity_of_vectors(vectors: np.ndarray) -> float:
    n = vectors.shape[0]
    gram = vectors @ vectors.T
    upper = gram[np.triu_indices(n, k=1)]
    return float(np.mean(1.0 - upper))


@dataclass(frozen=True)
class PooledCurve:
    """Diversity of k pooled users, averaged over random user subsets."""

    ks: tuple[int, ...]
    mean: tuple[float, ...]
    ci95: tuple[float, ...]


@dataclass(frozen=True)
class CumulativeCurve:
    """Diversity of the first n tasks of one stream, for growing n."""

    ns: tuple[int, ...]
    values: tuple[float, ...]


def pooled_curve(
    groups: Mapping[str, Sequence[str]],
    shuffles: int = DEFAULT_SHUFFLES,
    seed: int = 0,
    embedder: Optional[EmbeddingProvider] = None,
) -> PooledCurve:
    """Mean diversity of the pooled tasks of k users, k = 2..#users.

    For every k, ``shuffles`` random user subsets are pooled; the half
    width reported is 1.96 * std / sqrt(shuffles).
    """
    names = list(groups)
    if len(names) < 2:
        raise TooFewTasks("pooled curve needs at least two groups")
    provider = embedder or _DEFAULT_EMBEDDER
    vectors = {name: provider.embed(list(groups[name])) for name in names}
    for name in names:
        if vectors[name].shape[0] == 0:
            raise TooFewTasks(f"group {name!r} has no texts")

    rng = random.Random(seed)
    ks: list[int] = []
    means: list[float] = []
    cis: list[float] = []
    for k in range(2, len(names) + 1):
        samples = []
        for _ in range(shuffles):
            chosen = rng.sample(names, k)
            pooled = np.vstack([vectors[name] for name in chosen])
            samples.append(_diversity_of_vectors(pooled))
        mean = float(np.mean(samples))
        std = float(np.std(samples, ddof=1)) if len(samples) > 1 else 0.0
        ks.append(k)
        means.append(mean)
        cis.append(1.96 * std / math.sqrt(len(samples)))
    return PooledCurve(ks=tuple(ks), mean=tuple(means), ci95=tuple(cis))


def cumulative_curve(
    texts: Sequence[str], embedder: Optional[EmbeddingProvider] = None
) -> CumulativeCurve:
    """Diversity of the first n tasks for every prefix n >= 2."""
    if len(texts) < 2:
        raise TooFewTasks(f"need at least 2 texts, got {len(texts)}")
    vectors = (embedder or _DEFAULT_EMBEDDER).embed(texts)
    ns: list[int] = []
    values: list[float] = []
    for n in range(2, len(texts) + 1):
        ns.append(n)
        values.append(_diversity_of_vectors(vectors[:n]))
    return CumulativeCurve(ns=tuple(ns), values=tuple(values))


# ---------------------------------------------------------------------------
# Corpus and curve IO.
# ---------------------------------------------------------------------------


def load_corpus_tsv(lines: Iterable[str]) -> dict[str, list[str]]:
    """Parse ``user<TAB>text`` lines, keeping first-seen user order."""
    corpus: dict[str, list[str]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValueError(f"line {lineno}: expected 'user<TAB>text'")
        user, text = line.split("\t", 1)
        if not user.strip() or not text.strip():
            raise ValueError(f"line {lineno}: empty user or text")
        corpus.setdefault(user.strip(), []).append(text.strip())
    return corpus


def dump_pooled_curve_tsv(curve: PooledCurve) -> str:
    rows = ["k\tmean\tci95"]
    for k, mean, ci in zip(curve.ks, curve.mean, curve.ci95):
        rows.append(f"{k}\t{mean:.6f}\t{ci:.6f}")
    return "\n".join(rows) + "\n"


def dump_cumulative_curve_tsv(curve: CumulativeCurve) -> str:
    rows = ["n\tdiversity"]
    for n, value in zip(curve.ns, curve.values):
        rows.append(f"{n}\t{value:.6f}")
    return "\n".join(rows) + "\n"
