"""Caption conditioning: word-level tokens over the template vocabulary,
learned token + position embeddings producing the cross-attention sequence.
"""

from __future__ import annotations

import numpy as np

from .. import nn
from ..nn import Module, Tensor
from ..synthdata import caption_vocabulary

MAX_TOKENS = 16
PAD = "<pad>"


class VocabularyError(ValueError):
    pass


def tokenize(caption: str) -> list[str]:
    return caption.lower().split()


class TextEncoder(Module):
    """Captions -> (B, MAX_TOKENS, cond_dim) embedding sequences."""

    def __init__(self, cond_dim: int, rng: np.random.Generator,
                 vocab: list[str] | None = None):
        super().__init__()
        self.vocab = [PAD] + (caption_vocabulary() if vocab is None else list(vocab))
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.tokens = nn.Embedding(len(self.vocab), cond_dim, rng)
        self.pos = nn.Parameter(
            (rng.standard_normal((1, MAX_TOKENS, cond_dim)) * 0.02).astype(np.float32)
        )

    def ids_for(self, caption: str) -> np.ndarray:
        words = tokenize(caption)
        if len(words) > MAX_TOKENS:
            raise VocabularyError(f"caption longer than {MAX_TOKENS} tokens: {caption!r}")
        unknown = [w for w in words if w not in self.index]
        if unknown:
            raise VocabularyError(
                f"unknown tokens {unknown}; vocabulary: {', '.join(self.vocab[1:])}"
            )
        ids = [self.index[w] for w in words]
        return np.array(ids + [0] * (MAX_TOKENS - len(ids)), dtype=np.int64)

    def __call__(self, captions: list[str]) -> Tensor:
        """Empty captions are not allowed here; route them to the null branch."""
        ids = np.stack([self.ids_for(c) for c in captions])
        return nn.embedding(self.tokens.weight, ids) + self.pos


def null_mask_for(captions: list[str]) -> np.ndarray:
    """Empty captions mean the unconditional branch."""
    return np.array([len(tokenize(c)) == 0 for c in captions])
