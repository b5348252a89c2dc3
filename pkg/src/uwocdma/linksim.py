"""Bit-level Monte Carlo of the chip detect-and-forward relay chain.

Simulates the full pipeline per bit slot: on-off chip encoding, chip-
synchronous interferer superposition at the first uplink receiver,
Poisson + Gaussian photodetection against the Gaussian-approximation
threshold at every node, re-emission of detected chips at full chip
power, and the all-marks-on bit decision at the destination.

Only the desired user's mark chips are tracked: with unity cross-
correlation each interferer can land on at most one mark chip per slot,
relays process chips independently, and the destination never looks at
non-mark chips.  The interferer geometry is reduced to a per-delay
lookup of (hit chip, covering-bit segment) computed once from the
codebook.

The bit budget is split into blocks with generators derived from
(seed, block index); integer tallies merge additively, so results are
identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ber import LinkEvaluation
from .ooc import OocCodebook, disjoint_shift_assignment

__all__ = [
    "SimRun",
    "SimResult",
    "InsufficientBitsError",
    "run_simulation",
    "superpose_mai",
    "detect_chip",
    "wilson_interval",
]

POISSON_EXACT_LIMIT = 1e3  # exact sampling below, Gaussian approximation above


class InsufficientBitsError(RuntimeError):
    """The requested error-rate resolution needs more simulated bits."""


@dataclass(frozen=True)
class SimRun:
    """One Monte Carlo run of a configured link.

    delays, when given, are per-user chip offsets fixed for the whole run
    (the desired user's must be 0).  When omitted, interferer delays are
    redrawn uniformly every bit slot, which makes the run estimate the
    delay-ensemble average that the analytic engine computes.
    """

    link: LinkEvaluation
    direction: str
    bit_count: int
    seed: int = 0
    codebook: OocCodebook | None = None
    delays: tuple[int, ...] | None = None
    block_size: int = 1 << 16
    jobs: int = 1
    min_resolvable_ber: float | None = None

    def __post_init__(self):
        if self.direction not in ("uplink", "downlink", "p2p"):
            raise ValueError("direction must be uplink, downlink or p2p")
        if self.bit_count < 1000:
            raise ValueError("bit_count must be at least 1000")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.delays is not None:
            if len(self.delays) != self.link.users:
                raise ValueError("need one delay per user")
            if self.delays[0] != 0:
                raise ValueError("the receiver is synchronized to the desired "
                                 "user: the first delay must be 0")
            if any(not 0 <= t < self.link.ooc.length for t in self.delays):
                raise ValueError("delays must lie in [0, F)")
        if self.direction == "uplink" and self.link.users > 1:
            if self.codebook is None or len(self.codebook) < self.link.users:
                raise ValueError("uplink interference needs a codebook with "
                                 "at least one codeword per user")
        if self.min_resolvable_ber is not None:
            if self.min_resolvable_ber < 10.0 / self.bit_count:
                raise InsufficientBitsError(
                    "insufficient bits: resolving BER %.1e needs at least %d bits"
                    % (self.min_resolvable_ber,
                       math.ceil(10.0 / self.min_resolvable_ber)))


@dataclass
class SimResult:
    """Tallies of one run; ber = errors / bits."""

    errors: int
    bits: int
    ber: float
    wilson_low: float
    wilson_high: float
    per_hop_chip_flips: tuple[int, ...]
    e2e_chip_errors: int
    chips: int
    metadata: dict = field(default_factory=dict)


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _sample_counts(rng: np.random.Generator, means: np.ndarray) -> np.ndarray:
    """Photoelectron counts with the configured hybrid sampler: exact
    Poisson below POISSON_EXACT_LIMIT, Gaussian approximation above."""
    means = np.asarray(means, dtype=float)
    out = np.empty_like(means)
    small = means < POISSON_EXACT_LIMIT
    out[small] = rng.poisson(means[small])
    big = ~small
    out[big] = rng.normal(means[big], np.sqrt(means[big]))
    return out


def detect_chip(signal_mean, noise_mean, sigma2_th, threshold, rng=None):
    """Sample one (or many) chip decision(s): the decision statistic is
    Poisson(signal + noise mean) plus Gaussian thermal noise, compared
    strictly against the threshold."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mean = np.asarray(signal_mean, dtype=float) + noise_mean
    stat = _sample_counts(rng, mean) + rng.normal(0.0, math.sqrt(sigma2_th),
                                                  size=mean.shape)
    return (stat > threshold).astype(np.uint8)


def superpose_mai(chips_per_user, delays, losses, fadings):
    """Chip-wise superposition of delayed, loss- and fading-scaled user
    streams at the first receiver (units of chip power).

    chips_per_user: per user, a (slots, F) 0/1 array; delays: per-user
    chip offsets; fadings: per user, per-slot coefficients applied to the
    slots of that user's own stream.  Streams wrap around cyclically.
    """
    mats = [np.asarray(c, dtype=float) for c in chips_per_user]
    slots, length = mats[0].shape
    total = np.zeros(slots * length)
    for chips, tau, loss, fade in zip(mats, delays, losses, fadings):
        if chips.shape != (slots, length):
            raise ValueError("all users must share the same frame shape")
        if not 0 <= tau < length:
            raise ValueError("delays must lie in [0, F)")
        scaled = chips * (loss * np.asarray(fade, dtype=float)[:, None])
        total += np.roll(scaled.ravel(), tau)
    return total


def _hit_table(desired: tuple[int, ...], interferer: tuple[int, ...],
               length: int) -> np.ndarray:
    """For every chip delay, which desired mark chip (index into the sorted
    marks, -1 for none) the shifted interferer codeword lands on.

    Unity cross-correlation guarantees at most one landing per delay.
    """
    marks = sorted(desired)
    other = frozenset(interferer)
    table = np.full(length, -1, dtype=np.int16)
    for tau in range(length):
        for q, p in enumerate(marks):
            if (p - tau) % length in other:
                if table[tau] != -1:
                    raise ValueError("codebook violates the unity "
                                     "cross-correlation constraint")
                table[tau] = q
    return table


def _simulate_block(run: SimRun, block_index: int, n_bits: int,
                    hit_tables: list[np.ndarray] | None):
    link = run.link
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=run.seed, spawn_key=(block_index,)))
    w_code = link.ooc.weight
    scale = link.count_scale
    e0 = link.noise_counts
    s2th = link.resolved_thermal_var
    sigma_th = math.sqrt(s2th)
    first = link.hops[0]

    bits = rng.integers(0, 2, size=n_bits).astype(bool)
    # fading draws always consume the stream, even at zero variance, so
    # runs differing only in fading strength share their other randomness
    mu1, s2x1 = first.fading.log_stats
    h11 = np.exp(2.0 * rng.normal(mu1, math.sqrt(s2x1), n_bits))

    interference = np.zeros((n_bits, w_code))
    if hit_tables is not None:
        k_users = link.users - 1
        if run.delays is not None:
            taus = np.tile(np.asarray(run.delays[1:], dtype=np.int64), (n_bits, 1))
        else:
            taus = rng.integers(0, link.ooc.length, size=(n_bits, k_users))
        other_bits = rng.integers(0, 2, size=(n_bits, k_users)).astype(bool)
        fade = np.exp(2.0 * rng.normal(mu1, math.sqrt(s2x1), (n_bits, k_users)))
        for k in range(k_users):
            q_hit = hit_tables[k][taus[:, k]]
            active = (q_hit >= 0) & other_bits[:, k]
            rows = np.nonzero(active)[0]
            np.add.at(interference, (rows, q_hit[rows].astype(np.int64)),
                      first.loss * fade[rows, k])

    # first hop: desired marks plus interference, CSI-based threshold
    mean = scale * (first.loss * (h11 * bits)[:, None] + interference) + e0
    counts = _sample_counts(rng, mean) + rng.normal(0.0, sigma_th, mean.shape)
    e1 = scale * first.loss * h11 + e0
    theta = np.sqrt((e1 + s2th) * (e0 + s2th)) - s2th
    chips = counts > theta[:, None]

    sent = np.repeat(bits[:, None], w_code, axis=1)
    hop_flips = [int((chips != sent).sum())]

    for hop in link.hops[1:]:
        mu_i, s2x_i = hop.fading.log_stats
        h_i = np.exp(2.0 * rng.normal(mu_i, math.sqrt(s2x_i), n_bits))
        mean = scale * hop.loss * h_i[:, None] * chips + e0
        counts = _sample_counts(rng, mean) + rng.normal(0.0, sigma_th, mean.shape)
        e1_i = scale * hop.loss * h_i + e0
        theta_i = np.sqrt((e1_i + s2th) * (e0 + s2th)) - s2th
        new_chips = counts > theta_i[:, None]
        hop_flips.append(int((new_chips != chips).sum()))
        chips = new_chips

    decided = chips.all(axis=1)
    errors = int((decided != bits).sum())
    e2e_chip_errors = int((chips != sent).sum())
    return errors, hop_flips, e2e_chip_errors


def run_simulation(run: SimRun) -> SimResult:
    """Execute the run and tally bit, chip and per-hop errors.

    Deterministic for a fixed seed and independent of the worker count.
    """
    link = run.link
    hit_tables = None
    collision_note = {}
    if run.direction == "uplink" and link.users > 1:
        desired = run.codebook.codewords[0]
        hit_tables = [
            _hit_table(desired, run.codebook.codewords[1 + k], link.ooc.length)
            for k in range(link.users - 1)]
    elif run.direction == "downlink" and link.users > 1:
        if run.codebook is not None:
            # synchronous downlink: verify an interference-free placement
            shifts = disjoint_shift_assignment(run.codebook)
            collision_note["downlink_disjoint_shifts"] = shifts
    if run.direction == "p2p" and (link.ooc.length != 1 or link.ooc.weight != 1):
        raise ValueError("p2p runs require length = weight = 1")

    n_blocks = (run.bit_count + run.block_size - 1) // run.block_size
    sizes = [min(run.block_size, run.bit_count - i * run.block_size)
             for i in range(n_blocks)]

    def work(item):
        i, n = item
        return _simulate_block(run, i, n, hit_tables)

    if run.jobs > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=run.jobs) as pool:
            results = list(pool.map(work, enumerate(sizes)))
    else:
        results = [work(x) for x in enumerate(sizes)]

    errors = sum(r[0] for r in results)
    n_hops = len(link.hops)
    hop_flips = tuple(sum(r[1][i] for r in results) for i in range(n_hops))
    chip_errors = sum(r[2] for r in results)
    lo, hi = wilson_interval(errors, run.bit_count)
    chips = run.bit_count * link.ooc.weight
    meta = {
        "seed": run.seed,
        "direction": run.direction,
        "delays": "fixed" if run.delays is not None else "per-slot",
        "poisson_sampler": "exact below %g counts, gaussian above" % POISSON_EXACT_LIMIT,
        **collision_note,
    }
    return SimResult(errors, run.bit_count, errors / run.bit_count, lo, hi,
                     hop_flips, chip_errors, chips, meta)
