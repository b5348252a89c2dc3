"""Multiple-access interference combinatorics for the asynchronous uplink.

With unity cross-correlation codes each interfering user can hit at most
one mark chip of the desired user per bit slot, with hit probability
W**2 / (2F) (codeword overlap times the fair-bit probability).  The hit,
when it occurs, is uniform over the W mark chips.  An interference
pattern alpha = (alpha_1, ..., alpha_W) counts the interferers landing on
each mark chip; its joint probability factors into a binomial term for
the total interferer count l and a multinomial term for the split.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

from .ooc import OocParams

__all__ = [
    "InterferencePattern",
    "PatternDistribution",
    "prob_num_interferers",
    "enumerate_patterns",
    "pattern_conditional_prob",
    "pattern_conditional_prob_exact",
    "pattern_multiplicity",
    "grouped_patterns",
    "fading_dimension",
    "pattern_distribution",
    "interference_table",
]


@dataclass(frozen=True)
class InterferencePattern:
    """Interference counts on the desired user's mark chips."""

    alpha: tuple[int, ...]

    def __post_init__(self):
        if any(a < 0 for a in self.alpha):
            raise ValueError("interference counts must be nonnegative")

    @property
    def total(self) -> int:
        return sum(self.alpha)

    @property
    def hit_chips(self) -> int:
        return sum(1 for a in self.alpha if a > 0)


def hit_probability(ooc: OocParams) -> float:
    """Probability that one interferer lands on some mark chip of the
    desired user in a given bit slot: W**2 / (2F)."""
    return ooc.weight**2 / (2.0 * ooc.length)


def prob_num_interferers(l: int, users: int, ooc: OocParams) -> float:
    """Binomial probability of exactly l interferers among users - 1."""
    if not 0 <= l <= users - 1:
        raise ValueError("l must lie in [0, users - 1]")
    p = hit_probability(ooc)
    return comb(users - 1, l) * p**l * (1.0 - p) ** (users - 1 - l)


def enumerate_patterns(l: int, weight: int) -> list[tuple[int, ...]]:
    """All weak compositions of l into weight parts, lexicographic order.

    Count equals C(l + weight - 1, weight - 1).
    """
    if l < 0 or weight < 1:
        raise ValueError("need l >= 0 and weight >= 1")
    out: list[tuple[int, ...]] = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for v in range(remaining + 1):
            rec(prefix + (v,), remaining - v, slots - 1)

    rec((), l, weight)
    return out


def pattern_conditional_prob_exact(alpha) -> Fraction:
    """Multinomial probability of the pattern given its total, as a fraction:
    l! / (W**l * prod(alpha_q!))."""
    alpha = tuple(alpha)
    l = sum(alpha)
    denom = len(alpha) ** l
    for a in alpha:
        denom *= factorial(a)
    return Fraction(factorial(l), denom)


def pattern_conditional_prob(alpha) -> float:
    return float(pattern_conditional_prob_exact(alpha))


def pattern_multiplicity(alpha) -> int:
    """Number of distinct permutations of the pattern's components."""
    alpha = tuple(alpha)
    counts: dict[int, int] = {}
    for a in alpha:
        counts[a] = counts.get(a, 0) + 1
    mult = factorial(len(alpha))
    for c in counts.values():
        mult //= factorial(c)
    return mult


def grouped_patterns(l: int, weight: int) -> list[tuple[tuple[int, ...], int]]:
    """Distinct patterns up to permutation (sorted ascending) with their
    permutation multiplicities; multiplicities sum to C(l + W - 1, W - 1)."""
    seen = set()
    for p in enumerate_patterns(l, weight):
        seen.add(tuple(sorted(p)))
    return [(p, pattern_multiplicity(p)) for p in sorted(seen)]


def fading_dimension(alpha, relays: int) -> int:
    """Dimension of the fading vector entering the conditional-BER average:
    one coefficient for the desired first-hop link, one per relayed hop,
    plus one interference coefficient per hit mark chip."""
    pattern = InterferencePattern(tuple(alpha))
    return relays + 1 + pattern.hit_chips


@dataclass(frozen=True)
class PatternDistribution:
    """Joint law of (l, alpha) for a given user count and code."""

    users: int
    ooc: OocParams
    entries: tuple[tuple[tuple[int, ...], float], ...]

    def total_probability(self) -> float:
        return sum(p for _, p in self.entries)


def pattern_distribution(users: int, ooc: OocParams) -> PatternDistribution:
    """Enumerate every (l, alpha) pair with its joint probability."""
    if users < 1:
        raise ValueError("need at least one user")
    entries = []
    for l in range(users):
        pl = prob_num_interferers(l, users, ooc)
        for alpha in enumerate_patterns(l, ooc.weight):
            entries.append((alpha, pl * pattern_conditional_prob(alpha)))
    return PatternDistribution(users, ooc, tuple(entries))


def interference_table(users: int, ooc: OocParams) -> list[dict]:
    """Rows of the interference characterization table.

    One row per distinct pattern (up to permutation) and interferer count:
    total probability of l, number of compositions, the pattern, its
    conditional probability (exact fraction), the count of similar
    patterns (permutations other than itself), and the fading dimension
    offset so the dimension reads 'N + offset'.
    """
    rows = []
    for l in range(users):
        pl = prob_num_interferers(l, users, ooc)
        n_alpha = comb(l + ooc.weight - 1, ooc.weight - 1)
        for alpha, mult in grouped_patterns(l, ooc.weight):
            rows.append({
                "interferers": l,
                "prob_interferers": pl,
                "num_patterns": n_alpha,
                "pattern": alpha,
                "conditional_prob": pattern_conditional_prob_exact(alpha),
                "similar_patterns": mult - 1,
                "dimension_offset": 1 + sum(1 for a in alpha if a > 0),
            })
    return rows
