"""Optical orthogonal codes (OOC) for incoherent optical CDMA.

A codeword is a set of W mark positions inside a frame of F chips.  The
codebooks generated here satisfy the unity auto- and cross-correlation
constraints: every cyclic autocorrelation sidelobe and every pairwise
cyclic cross-correlation value is at most 1.  Under these constraints the
family size is bounded by floor((F-1)/(W*(W-1))).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OocParams",
    "OocCodebook",
    "ChipFrame",
    "CorrelationReport",
    "CodebookSearchError",
    "max_users",
    "downlink_mai_free_bound",
    "validate_codebook",
    "generate_codebook",
    "encode_bits",
    "decode_frames",
    "disjoint_shift_assignment",
    "format_codebook",
    "parse_codebook",
]


class CodebookSearchError(RuntimeError):
    """Raised when the randomized codeword search exhausts its attempt budget."""


@dataclass(frozen=True)
class OocParams:
    """Parameters of an (F, W, 1, 1) optical orthogonal code family.

    length is the number of chips per bit frame (F), weight the number of
    mark chips per codeword (W).  Only unity correlation constraints are
    supported.
    """

    length: int
    weight: int
    lambda_auto: int = 1
    lambda_cross: int = 1

    def __post_init__(self):
        if self.length <= 0 or self.weight <= 0:
            raise ValueError("length and weight must be positive")
        if self.weight > self.length:
            raise ValueError("weight cannot exceed length")
        if self.lambda_auto != 1 or self.lambda_cross != 1:
            raise ValueError("only unity correlation constraints are supported")
        if self.weight > 1 and self.length < self.weight * (self.weight - 1) + 1:
            raise ValueError(
                "length %d too short for weight %d: no (F, W, 1, 1) family exists"
                % (self.length, self.weight)
            )


def max_users(params: OocParams) -> int:
    """Largest family size compatible with unity correlation constraints.

    Equals floor((F - 1) / (W * (W - 1))).
    """
    if params.weight <= 1:
        raise ValueError("weight must exceed 1")
    return (params.length - 1) // (params.weight * (params.weight - 1))


def downlink_mai_free_bound(params: OocParams) -> int:
    """Largest user count M for which a synchronous downlink is free of MAI.

    This is the largest integer strictly below F / W**2 + 1; with at most
    that many users the codewords can be placed on disjoint chip positions.
    """
    f, w2 = params.length, params.weight**2
    total = f + w2  # M * w2 < f + w2
    return total // w2 - 1 if total % w2 == 0 else total // w2


@dataclass(frozen=True)
class OocCodebook:
    """A family of OOC codewords plus its capacity bound."""

    params: OocParams
    codewords: tuple[tuple[int, ...], ...]
    capacity_bound: int = field(default=0)

    def __post_init__(self):
        if self.capacity_bound == 0:
            object.__setattr__(self, "capacity_bound", max_users(self.params))
        for cw in self.codewords:
            if len(set(cw)) != self.params.weight:
                raise ValueError("codeword %r does not have %d distinct marks"
                                 % (cw, self.params.weight))
            if any(p < 0 or p >= self.params.length for p in cw):
                raise ValueError("codeword %r has marks outside [0, F)" % (cw,))
        if len(self.codewords) > self.capacity_bound:
            raise ValueError("codebook exceeds the capacity bound %d" % self.capacity_bound)

    def __len__(self) -> int:
        return len(self.codewords)


@dataclass(frozen=True)
class ChipFrame:
    """One bit slot worth of chips (F chips of duration chip_duration)."""

    chips: np.ndarray
    chip_duration: float

    @property
    def bit_duration(self) -> float:
        return len(self.chips) * self.chip_duration


@dataclass
class CorrelationReport:
    """Exhaustive cyclic-correlation check results for a codebook.

    auto_violations holds (codeword index, shift, sidelobe value) entries,
    cross_violations holds (index i, index j, shift, value) entries.
    """

    auto_violations: list[tuple[int, int, int]]
    cross_violations: list[tuple[int, int, int, int]]

    @property
    def ok(self) -> bool:
        return not self.auto_violations and not self.cross_violations


def _cyclic_overlap(a: frozenset, b: frozenset, shift: int, length: int) -> int:
    return sum(1 for p in a if (p - shift) % length in b)


def validate_codebook(codebook: OocCodebook) -> CorrelationReport:
    """Check every cyclic auto/cross correlation of the codebook.

    Runs the exhaustive check over all F shifts and all codeword pairs;
    the report is empty iff the codebook satisfies the unity constraints.
    """
    f = codebook.params.length
    la = codebook.params.lambda_auto
    lc = codebook.params.lambda_cross
    sets = [frozenset(cw) for cw in codebook.codewords]
    auto = []
    for i, s in enumerate(sets):
        for shift in range(1, f):
            v = _cyclic_overlap(s, s, shift, f)
            if v > la:
                auto.append((i, shift, v))
    cross = []
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            for shift in range(f):
                v = _cyclic_overlap(sets[i], sets[j], shift, f)
                if v > lc:
                    cross.append((i, j, shift, v))
    return CorrelationReport(auto, cross)


def _canonical(marks) -> tuple[int, ...]:
    """Sorted marks rotated so the smallest position is 0."""
    marks = sorted(marks)
    lo = marks[0]
    return tuple(m - lo for m in marks)


def _ordered_differences(marks: tuple[int, ...], length: int) -> list[int]:
    return [(a - b) % length for a in marks for b in marks if a != b]


def generate_codebook(params: OocParams, target_count: int, seed: int = 0,
                      attempts_per_codeword: int = 50_000,
                      restarts: int = 8) -> OocCodebook:
    """Build target_count codewords by randomized difference-set search.

    Codewords are accepted when their internal cyclic differences are all
    distinct (autocorrelation <= 1) and disjoint from every previously
    accepted codeword's differences (cross-correlation <= 1).  The search
    is deterministic for a fixed seed.  Raises CodebookSearchError when
    the attempt budget is exhausted.
    """
    bound = max_users(params)
    if target_count > bound:
        raise CodebookSearchError(
            "search exhausted: requested %d codewords exceeds the capacity bound %d"
            % (target_count, bound))
    if target_count < 0:
        raise ValueError("target_count must be nonnegative")
    f, w = params.length, params.weight

    for restart in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(restart,)))
        used: set[int] = set()
        words: list[tuple[int, ...]] = []
        while len(words) < target_count:
            placed = False
            for _ in range(attempts_per_codeword):
                rest = rng.choice(np.arange(1, f), size=w - 1, replace=False)
                cand = _canonical([0, *rest.tolist()])
                diffs = _ordered_differences(cand, f)
                if len(set(diffs)) != w * (w - 1):
                    continue  # repeated internal difference: sidelobe 2
                if used.intersection(diffs):
                    continue  # shares a difference with an accepted codeword
                used.update(diffs)
                words.append(cand)
                placed = True
                break
            if not placed:
                break
        if len(words) == target_count:
            return OocCodebook(params, tuple(words))
    raise CodebookSearchError("search exhausted after %d restarts" % restarts)


def encode_bits(bits, codeword, params: OocParams,
                chip_duration: float) -> list[ChipFrame]:
    """On-off-keyed chip encoding: bit 1 places marks, bit 0 is silent."""
    marks = sorted(codeword)
    if len(set(marks)) != params.weight or any(
            p < 0 or p >= params.length for p in marks):
        raise ValueError("codeword is not valid for the given parameters")
    frames = []
    for b in bits:
        if b not in (0, 1):
            raise ValueError("bits must be 0 or 1")
        chips = np.zeros(params.length, dtype=np.uint8)
        if b:
            chips[marks] = 1
        frames.append(ChipFrame(chips, chip_duration))
    return frames


def decode_frames(frames, codeword) -> list[int]:
    """Recover bits from noiseless frames: 1 iff all marks are lit."""
    marks = list(codeword)
    return [int(all(fr.chips[m] for m in marks)) for fr in frames]


def disjoint_shift_assignment(codebook: OocCodebook) -> list[int]:
    """Cyclic shifts making all codeword supports disjoint (synchronous downlink).

    Exists whenever the user count respects the downlink MAI-free bound.
    """
    f = codebook.params.length
    shifts: list[int] = []
    occupied: set[int] = set()
    for cw in codebook.codewords:
        for s in range(f):
            support = {(p + s) % f for p in cw}
            if not support & occupied:
                occupied |= support
                shifts.append(s)
                break
        else:
            raise CodebookSearchError(
                "no disjoint shift assignment exists for this codebook")
    return shifts


def format_codebook(codebook: OocCodebook) -> str:
    """Serialize as one line per codeword: 'F W: p1,p2,...,pW'."""
    p = codebook.params
    lines = ["%d %d: %s" % (p.length, p.weight, ",".join(str(m) for m in cw))
             for cw in codebook.codewords]
    return "\n".join(lines) + "\n"


def parse_codebook(text: str) -> OocCodebook:
    """Parse the plain-text codebook format produced by format_codebook."""
    words = []
    params = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            head, tail = line.split(":")
            f_s, w_s = head.split()
            marks = tuple(int(tok) for tok in tail.split(","))
        except ValueError as exc:
            raise ValueError("line %d: malformed codebook entry %r" % (lineno, raw)) from exc
        p = OocParams(int(f_s), int(w_s))
        if params is None:
            params = p
        elif p != params:
            raise ValueError("line %d: inconsistent code parameters" % lineno)
        if len(marks) != p.weight:
            raise ValueError("line %d: expected %d marks" % (lineno, p.weight))
        words.append(marks)
    if params is None:
        raise ValueError("empty codebook text")
    return OocCodebook(params, tuple(words))
