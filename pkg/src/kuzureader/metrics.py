"""Character and sequence error rates over token sequences.

Tokens compare by vocabulary index (exact match). CER is the summed edit
distance divided by the total number of target tokens, so it can exceed
1 when hypotheses run long; SER is the fraction of sequences that are
not exact matches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimal number of insertions, deletions and substitutions (unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,            # delete from a
                current[j - 1] + 1,         # insert into a
                previous[j - 1] + (x != y)  # substitute
            ))
        previous = current
    return previous[len(b)]


@dataclass
class EvalReport:
    cer: float
    ser: float
    total_target_chars: int
    num_sequences: int
    distances: list[int]

    def to_json(self) -> str:
        payload = {
            "cer": self.cer,
            "ser": self.ser,
            "total_target_chars": self.total_target_chars,
            "num_sequences": self.num_sequences,
            "distances": self.distances,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls(cer=payload["cer"], ser=payload["ser"],
                   total_target_chars=payload["total_target_chars"],
                   num_sequences=payload["num_sequences"],
                   distances=list(payload["distances"]))

    def to_text(self) -> str:
        """key=value lines, one metric per line."""
        return (f"cer={self.cer:.6f}\n"
                f"ser={self.ser:.6f}\n"
                f"total_target_chars={self.total_target_chars}\n"
                f"num_sequences={self.num_sequences}\n")


def evaluate(pairs: Sequence[tuple[Sequence, Sequence]]) -> EvalReport:
    """Score (target, hypothesis) pairs.

    Raises ValueError on an empty pair list or when the targets contain
    no tokens at all (the character rate would divide by zero).
    """
    if not pairs:
        raise ValueError("evaluate needs at least one (target, hypothesis) pair")
    total_chars = sum(len(target) for target, _ in pairs)
    if total_chars == 0:
        raise ValueError("targets contain no tokens; character error rate undefined")
    distances = [levenshtein(target, hypothesis) for target, hypothesis in pairs]
    mismatches = sum(1 for target, hypothesis in pairs
                     if list(target) != list(hypothesis))
    return EvalReport(
        cer=sum(distances) / total_chars,
        ser=mismatches / len(pairs),
        total_target_chars=total_chars,
        num_sequences=len(pairs),
        distances=distances,
    )
