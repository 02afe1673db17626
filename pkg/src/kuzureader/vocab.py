"""Token vocabulary with reserved start/end markers.

On disk a vocabulary is UTF-8 text with one token per line: line 1 is the
literal ``<S>``, line 2 is ``<E>``, and every following line is one
character token. A token's index is its line number minus one.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Sequence

START_TOKEN = "<S>"
END_TOKEN = "<E>"
START = 0
END = 1


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if len(tokens) < 2 or tokens[0] != START_TOKEN or tokens[1] != END_TOKEN:
            raise ValueError(f"vocabulary must begin with {START_TOKEN!r}, {END_TOKEN!r}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        if any("\n" in t or t == "" for t in tokens):
            raise ValueError("tokens must be non-empty and newline-free")
        self.tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_characters(cls, characters: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from content tokens, prepending the markers."""
        return cls((START_TOKEN, END_TOKEN, *characters))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in vocabulary") from None

    def token(self, index: int) -> str:
        return self.tokens[index]

    @property
    def content_tokens(self) -> tuple[str, ...]:
        return self.tokens[2:]

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index(t) for t in tokens)

    def decode(self, indices: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.tokens[i] for i in indices)

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line != ""])
