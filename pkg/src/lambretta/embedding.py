"""Sentence embeddings behind a pluggable encoder interface.

Two encoders ship here: a client for a remote encoding service
(``POST /embed {texts: [...]} -> {vectors: [[...]]}``) and a deterministic
offline fallback that hashes tokens into a fixed-dimension bag-of-words
vector and L2-normalizes it. The fallback is order-invariant by
construction and produces cosines in [0, 1].
"""

from __future__ import annotations

import hashlib
import threading
import warnings

import numpy as np

from .textquery import normalize

__all__ = [
    "EncoderError",
    "Encoder",
    "HashingEncoder",
    "RemoteEncoder",
    "EmbeddingCache",
    "cosine",
]

DEFAULT_DIM = 256


class EncoderError(Exception):
    """Raised when an encoder cannot produce a vector."""


class Encoder:
    """Interface: encode(text) -> np.ndarray of shape (dim,)."""

    dim: int
    name: str = "encoder"

    def encode(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def encode_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self.encode(t) for t in texts]


def _token_slot(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashingEncoder(Encoder):
    """Offline fallback: L2-normalized hashed bag-of-tokens.

    Not a faithful stand-in for a neural sentence encoder; similarity
    reduces to (hashed) token overlap. It exists so the full pipeline and
    test suite run with no model service.
    """

    name = "hashing"

    def __init__(self, dim: int = DEFAULT_DIM, stopwords: frozenset[str] | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.stopwords = stopwords

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in normalize(text, self.stopwords).tokens:
            vec[_token_slot(token, self.dim)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec


class RemoteEncoder(Encoder):
    """Client for an embedding service speaking the /embed protocol."""

    name = "remote"

    def __init__(self, url: str, dim: int, timeout: float = 30.0, client=None):
        self.url = url.rstrip("/")
        self.dim = dim
        self.timeout = timeout
        if client is None:
            import httpx

            client = httpx.Client(timeout=timeout)
        self._client = client

    def encode(self, text: str) -> np.ndarray:
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: list[str]) -> list[np.ndarray]:
        try:
            resp = self._client.post(self.url + "/embed", json={"texts": texts})
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except Exception as exc:
            raise EncoderError(f"embedding service failed: {exc}") from exc
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise EncoderError(f"encoder returned dim {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise EncoderError("encoder returned non-finite components")
            out.append(arr)
        return out


class EmbeddingCache:
    """Text-keyed embedding cache wrapped around an encoder.

    Feature extraction revisits the same tweets across many candidates, so
    vectors are memoized by text. Reads are lock-free on hit; inserts are
    serialized.
    """

    def __init__(self, encoder: Encoder):
        self.encoder = encoder
        self.dim = encoder.dim
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def encode(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        vec = self.encoder.encode(text)
        with self._lock:
            self._cache.setdefault(text, vec)
        return self._cache[text]

    def __len__(self) -> int:
        return len(self._cache)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero vectors compare as 0.0 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero vector defined as 0.0")
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
