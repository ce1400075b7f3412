"""Min-Hash encoding of string columns over character n-grams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from prodcat.errors import PipelineError

# Mersenne prime 2^61 - 1; hash values lie in [0, PRIME).
PRIME = (1 << 61) - 1
_RANGE = float(PRIME - 1)


def normalise(s: str) -> str:
    return " ".join(s.lower().split())


def shingle(s: str, ngram_size: int = 3) -> set[str]:
    """Contiguous character n-grams of the case-folded, whitespace-collapsed string.

    Strings shorter than ``ngram_size`` give a single space-padded shingle.
    """
    s = normalise(s)
    if len(s) < ngram_size:
        return {s.ljust(ngram_size)}
    return {s[i : i + ngram_size] for i in range(len(s) - ngram_size + 1)}


def fingerprint(gram: str) -> int:
    return int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class MinHashEncoder:
    n_components: int
    ngram_size: int
    seed: int
    multipliers: tuple[int, ...]
    offsets: tuple[int, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.n_components < 1 or self.ngram_size < 1:
            raise PipelineError("n_components and ngram_size must both be at least 1")
        if len(self.multipliers) != self.n_components or len(self.offsets) != self.n_components:
            raise PipelineError("hash parameter lists must have n_components entries")

    def _gram_hashes(self, gram: str) -> np.ndarray:
        hit = self._cache.get(gram)
        if hit is None:
            x = fingerprint(gram)
            hit = np.array([(a * x + b) % PRIME for a, b in zip(self.multipliers, self.offsets)], dtype=np.uint64)
            self._cache[gram] = hit
        return hit

    def encode(self, s: str | None) -> np.ndarray:
        return encode_string(self, s)

    def encode_column(self, values, missing=None) -> np.ndarray:
        """Encode a sequence of strings into an ``(n, n_components)`` matrix.

        Each distinct string is hashed once.
        """
        out = np.empty((len(values), self.n_components), dtype=np.float64)
        seen: dict[str, np.ndarray] = {}
        for i, v in enumerate(values):
            key = "" if (missing is not None and missing[i]) or v is None else v
            vec = seen.get(key)
            if vec is None:
                vec = seen[key] = encode_string(self, key)
            out[i] = vec
        return out

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "ngram_size": self.ngram_size,
            "seed": self.seed,
            "multipliers": [str(a) for a in self.multipliers],
            "offsets": [str(b) for b in self.offsets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinHashEncoder":
        return cls(
            n_components=int(d["n_components"]),
            ngram_size=int(d["ngram_size"]),
            seed=int(d["seed"]),
            multipliers=tuple(int(a) for a in d["multipliers"]),
            offsets=tuple(int(b) for b in d["offsets"]),
        )


def fit_minhash(seed: int = 0, n_components: int = 128, ngram_size: int = 3) -> MinHashEncoder:
    """Draw seeded universal-hash parameters. Needs no data."""
    if n_components < 1 or ngram_size < 1:
        raise PipelineError(f"n_components ({n_components}) and ngram_size ({ngram_size}) must be >= 1")
    rng = np.random.default_rng(seed)
    # 61-bit values built from two 31-bit draws; multipliers forced odd and nonzero
    hi = rng.integers(0, 1 << 30, size=(2, n_components), dtype=np.int64)
    lo = rng.integers(0, 1 << 31, size=(2, n_components), dtype=np.int64)
    raw = [[(int(h) << 31 | int(l)) % PRIME for h, l in zip(hi[r], lo[r])] for r in range(2)]
    multipliers = tuple(a | 1 for a in raw[0])
    offsets = tuple(raw[1])
    return MinHashEncoder(n_components, ngram_size, seed, multipliers, offsets)


def encode_string(enc: MinHashEncoder, s: str | None) -> np.ndarray:
    """Componentwise minimum hash over the string's shingles, scaled to [0, 1].

    Missing or blank input maps to the all-ones vector.
    """
    if s is None or not normalise(s):
        return np.ones(enc.n_components)
    grams = sorted(shingle(s, enc.ngram_size))
    mins = enc._gram_hashes(grams[0]).copy()
    for g in grams[1:]:
        np.minimum(mins, enc._gram_hashes(g), out=mins)
    return mins.astype(np.float64) / _RANGE


def estimate_jaccard(va, vb) -> float:
    va, vb = np.asarray(va), np.asarray(vb)
    if va.shape != vb.shape:
        raise PipelineError(f"vector length mismatch: {va.shape} vs {vb.shape}")
    return float(np.mean(va == vb))


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)
