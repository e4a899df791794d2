"""Term-overlap consensus between proposed command sequences.

A solution is segmented into terms: commands split on shell separators,
then on whitespace, lowercased, with pure punctuation dropped. Agreement
between solutions is the number of distinct terms shared by all of them,
normalized by the smallest solution's distinct-term count.
"""

from __future__ import annotations

import re
from collections import Counter

SEPARATORS = (";", "&&", "||", "|")
_SPLIT = re.compile(r"\|\||&&|;|\|")
_PUNCT_ONLY = re.compile(r"[^\w]+$")

DEFAULT_THETA = 0.6


def segment_terms(commands: list[str] | tuple[str, ...]) -> Counter:
    """Multiset of lowercase terms across a command sequence."""
    terms: Counter = Counter()
    for command in commands:
        for segment in _SPLIT.split(command):
            for token in segment.split():
                token = token.lower()
                if _PUNCT_ONLY.fullmatch(token):
                    continue
                terms[token] += 1
    return terms


def check_consensus(
    solutions: list, theta: float = DEFAULT_THETA
) -> tuple[bool, float]:
    """(reached, score) where score = |shared terms| / min distinct terms.

    Any solution with no terms forces a score of 0.0.
    """
    if not solutions:
        return False, 0.0
    term_sets = [set(segment_terms(commands)) for commands in solutions]
    if any(not s for s in term_sets):
        return False, 0.0
    shared = set.intersection(*term_sets)
    score = len(shared) / min(len(s) for s in term_sets)
    return score >= theta, score


def pairwise_overlap(a: list, b: list) -> float:
    """Overlap between two solutions, normalized by the smaller one."""
    set_a = set(segment_terms(a))
    set_b = set(segment_terms(b))
    if not set_a or not set_b:
        return 0.0
    return len(set_a & set_b) / min(len(set_a), len(set_b))
