"""Analytic BER of the relay-assisted optical CDMA link.

Chip error rates come from photon counting under the Gaussian
approximation: the integrate-and-dump statistic is the Poisson signal
plus dark/background counts plus zero-mean Gaussian thermal noise, and
each Poisson term is replaced by a Gaussian of equal mean and variance.
The first uplink hop sees multiple-access interference on the desired
user's mark chips; every later hop only relays detected chips.  A chip
survives the pipeline only if every hop detects it correctly (lucky
double flips are neglected, giving an upper bound), a bit decision is
"1" iff all mark chips are on, and the result is averaged over the
lognormal fading coefficients with Gauss-Hermite quadrature.

The interference-pattern sum uses the fact that, conditioned on the
desired user's first-hop fading, the per-chip interference fadings are
independent, so the mark-chip product averages chip by chip; relay
fading enters only through powers of the pipeline survival probability,
whose expectations factorize hop by hop.  The general tensor-grid
average is also provided (average_over_fading) as the direct route for
cross-checks and custom conditionals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from . import mai
from .constants import BOLTZMANN, ELEMENTARY_CHARGE, photon_energy
from .ooc import OocParams, downlink_mai_free_bound
from .turbulence import FadingModel, approx_lognormal_sum

__all__ = [
    "DetectorParams",
    "HopSpec",
    "PowerPlan",
    "QuadratureSpec",
    "LinkEvaluation",
    "DimensionError",
    "qfunc",
    "thermal_variance",
    "chip_counts_uplink_first_hop",
    "gaussian_threshold",
    "cer_first_hop_uplink",
    "cer_hop",
    "e2e_cer",
    "conditional_ber_from_cers",
    "average_over_fading",
    "uplink_ber",
    "uplink_mai_ber",
    "downlink_ber",
    "p2p_ber",
]

_CHUNK_LIMIT = 1 << 21


class DimensionError(RuntimeError):
    """The requested tensor quadrature dimension exceeds the configured cap."""


def qfunc(x):
    """Standard Gaussian tail probability Q(x) = 0.5*erfc(x/sqrt(2)).

    The erfc formulation keeps relative accuracy deep into the tail;
    below the double-precision floor the result is simply 0.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass(frozen=True)
class DetectorParams:
    """Photodetector and receiver front-end parameters."""

    quantum_efficiency: float
    wavelength: float
    load_resistance: float
    temperature: float
    dark_current: float
    background_rate: float

    def __post_init__(self):
        for name in ("quantum_efficiency", "wavelength", "load_resistance",
                     "temperature", "dark_current", "background_rate"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)

    @property
    def dark_rate(self) -> float:
        """Dark-current photoelectron rate (counts/s)."""
        return self.dark_current / ELEMENTARY_CHARGE

    @property
    def counts_per_joule(self) -> float:
        """Detected photoelectrons per joule of incident optical energy."""
        return self.quantum_efficiency / photon_energy(self.wavelength)

    def noise_counts(self, duration: float) -> float:
        """Mean dark + background count over an integration window."""
        return (self.dark_rate + self.background_rate) * duration


@dataclass(frozen=True)
class HopSpec:
    """Channel loss and fading statistics of one hop."""

    loss: float
    fading: FadingModel
    index: int = 1

    def __post_init__(self):
        if not 0.0 < self.loss <= 1.0:
            raise ValueError("hop loss must lie in (0, 1]")
        if self.index < 1:
            raise ValueError("hop index starts at 1")


@dataclass(frozen=True)
class PowerPlan:
    """Either a chip power or an average transmitted power per bit.

    The average-power form resolves to the multi-hop chip power
    2F / ((N+1) W) * P_avg, so an N-relay chain spends the same average
    bit energy as a direct link.
    """

    chip_power: float | None = None
    avg_bit_power: float | None = None

    def __post_init__(self):
        given = [v for v in (self.chip_power, self.avg_bit_power) if v is not None]
        if len(given) != 1:
            raise ValueError("specify exactly one of chip_power, avg_bit_power")
        if given[0] <= 0:
            raise ValueError("power must be positive")

    def resolve_chip_power(self, ooc: OocParams, n_hops: int) -> float:
        if self.chip_power is not None:
            return self.chip_power
        return (2.0 * ooc.length / (n_hops * ooc.weight)) * self.avg_bit_power


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite grid controls for the fading averages.

    nodes_per_dimension drives the tensor grid of average_over_fading.
    The analytic engine's factorized one-dimensional averages cost only
    linearly, so they run at oned_oversample times that count; heavy
    fading tails (log-amplitude variance up to ~0.2) then stay converged
    well below 1e-4 at the default settings.
    """

    nodes_per_dimension: int = 24
    max_dimension: int = 8
    oned_oversample: int = 4

    def __post_init__(self):
        if self.nodes_per_dimension < 4:
            raise ValueError("need at least 4 quadrature nodes")
        if self.max_dimension < 1:
            raise ValueError("max_dimension must be positive")
        if self.oned_oversample < 1:
            raise ValueError("oned_oversample must be at least 1")


@dataclass(frozen=True)
class LinkEvaluation:
    """Everything the analytic engine needs for one operating point."""

    users: int
    ooc: OocParams
    hops: tuple[HopSpec, ...]
    detector: DetectorParams
    chip_power: float
    chip_duration: float
    thermal_var: float | None = None
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.users < 1:
            raise ValueError("need at least one user")
        if not self.hops:
            raise ValueError("need at least one hop")
        if self.chip_power <= 0 or self.chip_duration <= 0:
            raise ValueError("chip power and duration must be positive")

    @property
    def resolved_thermal_var(self) -> float:
        if self.thermal_var is not None:
            return self.thermal_var
        return thermal_variance(self.detector, self.chip_duration)

    @property
    def count_scale(self) -> float:
        """Mean signal count of a fully received chip: (eta/hf) * Pc * Tc."""
        return self.detector.counts_per_joule * self.chip_power * self.chip_duration

    @property
    def noise_counts(self) -> float:
        return self.detector.noise_counts(self.chip_duration)


def thermal_variance(det: DetectorParams, integration_time: float) -> float:
    """Variance (counts^2) of the integrated thermal noise:
    2 k_B T_r T / (R e^2)."""
    if integration_time <= 0:
        raise ValueError("integration time must be positive")
    return (2.0 * BOLTZMANN * det.temperature * integration_time
            / (det.load_resistance * ELEMENTARY_CHARGE**2))


def chip_counts_uplink_first_hop(det: DetectorParams, chip_power: float,
                                 chip_duration: float, loss: float,
                                 fading: float, interference: float):
    """Mean photoelectron counts of one mark chip at the first uplink
    receiver for transmitted chip off/on.

    interference is the summed loss-weighted fading of the users hitting
    this chip (0 when the chip is interference free).
    """
    scale = det.counts_per_joule * chip_power * chip_duration
    m0 = scale * interference + det.noise_counts(chip_duration)
    m1 = m0 + scale * loss * fading
    return m0, m1


def gaussian_threshold(e0: float, e1: float, sigma2_th: float) -> float:
    """Decision threshold between the interference-free off/on count means:
    sqrt((E1 + var)(E0 + var)) - var.

    Equal to the classic (sigma0*E1 + sigma1*E0)/(sigma0 + sigma1) rule
    for Gaussian statistics of variance mean + thermal variance.
    """
    if not 0 <= e0 <= e1:
        raise ValueError("need 0 <= e0 <= e1")
    return math.sqrt((e1 + sigma2_th) * (e0 + sigma2_th)) - sigma2_th


def cer_first_hop_uplink(m0, m1, threshold, sigma2_th):
    """Conditional chip error rates of the first uplink hop.

    Returns (P(detect on | off sent), P(detect off | on sent)) for the
    given count means and threshold; interference enters through the
    means, not the threshold, so heavy interference drives the first
    probability toward 1.
    """
    m0 = np.asarray(m0, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    p10 = qfunc((threshold - m0) / np.sqrt(m0 + sigma2_th))
    p01 = qfunc((m1 - threshold) / np.sqrt(m1 + sigma2_th))
    return p10, p01


def cer_hop(m0, m1, sigma2_th):
    """Symmetric chip error rate of an interference-free hop:
    Q((m1 - m0) / (sqrt(m1 + var) + sqrt(m0 + var)))."""
    m0 = np.asarray(m0, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    if (m1 < m0).any():
        raise ValueError("need m1 >= m0")
    return qfunc((m1 - m0) / (np.sqrt(m1 + sigma2_th) + np.sqrt(m0 + sigma2_th)))


def e2e_cer(per_hop_cers) -> float:
    """Pipeline chip error rate neglecting compensating double flips:
    1 - prod(1 - p_i).  An upper bound on the exact pipeline error."""
    acc = 0.0
    for p in per_hop_cers:
        if not 0.0 <= p <= 1.0:
            raise ValueError("chip error rates must lie in [0, 1]")
        acc += math.log1p(-p) if p < 1.0 else -math.inf
    return -math.expm1(acc)


def conditional_ber_from_cers(cer_10, cer_01):
    """Bit error probabilities from per-mark-chip error rates under the
    all-marks-on decision rule: a sent 0 is read as 1 only if every mark
    chip flips on; a sent 1 is lost if any mark chip flips off."""
    cer_10 = list(cer_10)
    cer_01 = list(cer_01)
    if len(cer_10) != len(cer_01):
        raise ValueError("need one error-rate pair per mark chip")
    p10 = math.exp(sum(math.log(p) for p in cer_10)) if all(
        p > 0 for p in cer_10) else 0.0
    p01 = -math.expm1(sum(math.log1p(-p) for p in cer_01))
    return p10, p01


@lru_cache(maxsize=32)
def _hermite(n: int):
    x, w = special.roots_hermite(n)
    return x, w / math.sqrt(math.pi)


@lru_cache(maxsize=32)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(max(n, 16))


def _oned_nodes(quad: QuadratureSpec) -> int:
    return quad.nodes_per_dimension * quad.oned_oversample


def _lognormal_nodes(mu: float, sigma2: float, n: int):
    """Quadrature atoms of h = exp(2 Z), Z ~ Normal(mu, sigma2)."""
    if sigma2 <= 0.0:
        return np.array([math.exp(2.0 * mu)]), np.array([1.0])
    x, w = _hermite(n)
    return np.exp(2.0 * (mu + math.sqrt(2.0 * sigma2) * x)), w


def average_over_fading(conditional_ber, components, quad: QuadratureSpec) -> float:
    """Average a conditional error probability over independent lognormal
    fading coefficients with a tensor Gauss-Hermite grid.

    components is a sequence of (mu, sigma2) log-amplitude statistics; the
    callable receives an (n_points, J) array of coefficient values, one
    column per component, and must return the conditional probability per
    row.  Components with zero variance collapse to a single node.
    Raises DimensionError above quad.max_dimension.
    """
    comps = [(float(m), float(s2)) for m, s2 in components]
    j = len(comps)
    if j == 0:
        raise ValueError("need at least one fading component")
    if j > quad.max_dimension:
        raise DimensionError(
            "dimension too large: %d exceeds the cap %d" % (j, quad.max_dimension))
    values = []
    weights = []
    for mu, s2 in comps:
        v, w = _lognormal_nodes(mu, s2, quad.nodes_per_dimension)
        values.append(v)
        weights.append(w)
    sizes = [len(v) for v in values]
    total = 0.0
    for idx_chunk in _iter_index_chunks(sizes):
        h = np.empty((len(idx_chunk[0]), j))
        wt = np.ones(len(idx_chunk[0]))
        for d in range(j):
            h[:, d] = values[d][idx_chunk[d]]
            wt *= weights[d][idx_chunk[d]]
        total += float(np.sum(wt * np.asarray(conditional_ber(h), dtype=float)))
    return total


def _iter_index_chunks(sizes):
    """Yield per-dimension index arrays covering the full tensor grid in
    flat chunks of at most _CHUNK_LIMIT points."""
    total = 1
    for s in sizes:
        total *= s
    for start in range(0, total, _CHUNK_LIMIT):
        stop = min(start + _CHUNK_LIMIT, total)
        flat = np.arange(start, stop)
        idx = []
        rem = flat
        for s in reversed(sizes):
            idx.append(rem % s)
            rem = rem // s
        yield list(reversed(idx))


def _hop_flip_atoms(hop: HopSpec, link: LinkEvaluation):
    """Quadrature atoms of one relayed hop's symmetric chip error rate."""
    s2th = link.resolved_thermal_var
    e0 = link.noise_counts
    h, w = _lognormal_nodes(hop.fading.mu_x, hop.fading.sigma2_x,
                            _oned_nodes(link.quad))
    m1 = link.count_scale * hop.loss * h + e0
    return cer_hop(np.full_like(m1, e0), m1, s2th), w


def _pipeline_moments(flip_atoms, max_power: int):
    """Moments E[D^a * R^b] for a + b = max_power, where R is the product
    of independent per-hop survival probabilities (1 - p_i) and D = 1 - R.

    Independence factorizes E[R^m] into per-hop one-dimensional moments;
    the D powers expand binomially.  Hop deficits are accumulated through
    expm1/log1p so tiny flip probabilities keep their precision; the
    alternating binomial sums are clamped at zero (they lose meaning only
    once the true moment falls below double-precision noise).
    """
    w_pow = max_power
    if not flip_atoms:
        moments = {(a, w_pow - a): (1.0 if a == 0 else 0.0)
                   for a in range(w_pow + 1)}
        return moments, 0.0
    # log E[R^m] per power m, each hop entering via its deficit
    log_r_moment = np.zeros(w_pow + 1)
    for p, wt in flip_atoms:
        lp = np.log1p(-p)
        for m in range(1, w_pow + 1):
            deficit = float(wt @ -np.expm1(m * lp))
            log_r_moment[m] += math.log1p(-deficit) if deficit < 1.0 else -math.inf
    moments = {}
    for a in range(w_pow + 1):
        b = w_pow - a
        total = 0.0
        for j in range(a + 1):
            total += math.comb(a, j) * (-1.0) ** j * math.exp(log_r_moment[b + j])
        moments[(a, b)] = max(0.0, total)
    return moments, float(log_r_moment[w_pow])


def _elementary_symmetric(p: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_W of the columns of p,
    per row; all-positive recurrence, no cancellation."""
    n_rows, w = p.shape
    e = np.zeros((n_rows, w + 1))
    e[:, 0] = 1.0
    for q in range(w):
        e[:, 1:q + 2] += e[:, 0:q + 1] * p[:, q:q + 1]
    return e


def uplink_mai_ber(link: LinkEvaluation) -> float:
    """Average uplink BER with the full interference-pattern sum.

    All interferers share the desired user's first-hop loss and fading
    variance (equidistant users); the interferers landing on one mark
    chip are lumped into a single moment-matched lognormal.
    """
    w_code = link.ooc.weight
    n_nodes = _oned_nodes(link.quad)
    s2th = link.resolved_thermal_var
    e0 = link.noise_counts
    scale = link.count_scale
    first = link.hops[0]

    max_hit_chips = min(link.users - 1, w_code)
    if len(link.hops) + max_hit_chips > link.quad.max_dimension:
        raise DimensionError(
            "dimension too large: reduce the relay count or use the bit-level simulator")

    # relay pipeline moments (shared by every pattern)
    relay_atoms = [_hop_flip_atoms(hop, link) for hop in link.hops[1:]]
    moments, log_survival_w = _pipeline_moments(relay_atoms, w_code)
    t_vec = np.array([moments[(w_code - k, k)] for k in range(w_code + 1)])

    # desired-user first-hop fading grid
    h11, w11 = _lognormal_nodes(first.fading.mu_x, first.fading.sigma2_x, n_nodes)
    e1 = scale * first.loss * h11 + e0
    thresholds = np.sqrt((e1 + s2th) * (e0 + s2th)) - s2th
    p_clean = cer_hop(np.full_like(e1, e0), e1, s2th)

    # interfered-chip error rates, averaged over the lumped interference
    # fading, per interferer count a and per desired-fading node.  The
    # false-alarm rate jumps from ~0 to ~1 where the interference crosses
    # the threshold, so the average is split there and each smooth side
    # integrated with a Gauss-Legendre panel against the normal density.
    max_hits = link.users - 1
    p10_by_count = {0: p_clean}
    p01_by_count = {0: p_clean}
    for a in range(1, max_hits + 1):
        lump = approx_lognormal_sum([first.loss] * a, [first.fading.sigma2_x] * a)
        if lump.sigma2_z <= 0.0:
            beta = np.full((len(h11), 1), math.exp(2.0 * lump.mu_z))
            z_weights = np.ones((len(h11), 1))
        else:
            sd = math.sqrt(lump.sigma2_z)
            z_lo, z_hi = lump.mu_z - 9.0 * sd, lump.mu_z + 9.0 * sd
            crossing = 0.5 * np.log(np.maximum(thresholds - e0, 1e-300) / scale)
            split = np.clip(crossing, z_lo, z_hi)
            gl_x, gl_w = _legendre(n_nodes // 2)
            z_nodes, z_weights = [], []
            for lo, hi in (((np.full_like(split, z_lo)), split),
                           (split, np.full_like(split, z_hi))):
                mid = 0.5 * (lo + hi)[:, None]
                half = 0.5 * (hi - lo)[:, None]
                z = mid + half * gl_x[None, :]
                dens = np.exp(-0.5 * ((z - lump.mu_z) / sd) ** 2) / (
                    sd * math.sqrt(2.0 * math.pi))
                z_nodes.append(z)
                z_weights.append(half * gl_w[None, :] * dens)
            beta = np.exp(2.0 * np.concatenate(z_nodes, axis=1))
            z_weights = np.concatenate(z_weights, axis=1)
        extra = scale * beta
        m0 = e0 + extra
        m1 = e1[:, None] + extra
        p10, p01 = cer_first_hop_uplink(m0, m1, thresholds[:, None], s2th)
        p10_by_count[a] = np.sum(p10 * z_weights, axis=1)
        p01_by_count[a] = np.sum(p01 * z_weights, axis=1)

    p_be_10 = 0.0
    p_be_01 = 0.0
    for l in range(link.users):
        pl = mai.prob_num_interferers(l, link.users, link.ooc)
        for alpha, mult in mai.grouped_patterns(l, w_code):
            weight = pl * mai.pattern_conditional_prob(alpha) * mult
            p10 = np.stack([p10_by_count[a] for a in alpha], axis=1)
            p01 = np.stack([p01_by_count[a] for a in alpha], axis=1)
            # sent 0: all marks must flip on; expand the product over chips
            # in elementary symmetric polynomials of the per-chip rates,
            # paired with the matching pipeline moments E[D^(W-k) R^k]
            term_10 = _elementary_symmetric(p10) @ t_vec
            p_be_10 += weight * float(w11 @ term_10)
            # sent 1: any mark flipping off loses the bit
            chip_deficit = -np.expm1(np.sum(np.log1p(-p01), axis=1))
            first_hop_deficit = float(w11 @ chip_deficit)
            p_be_01 += weight * -math.expm1(
                math.log1p(-first_hop_deficit) + log_survival_w)
    return 0.5 * (p_be_10 + p_be_01)


def uplink_ber(link: LinkEvaluation) -> float:
    """Average uplink BER of the desired user.

    With no more concurrent users than the code weight, interference
    leaves the error rate unchanged and the uplink coincides with the
    interference-free downlink; the pattern sum is evaluated only above
    that point.
    """
    if link.users <= link.ooc.weight:
        return downlink_ber(link, _check_bound=False)
    return uplink_mai_ber(link)


def downlink_ber(link: LinkEvaluation, _check_bound: bool = True) -> float:
    """Average downlink BER: interference-free chips through the relay
    pipeline, fading-averaged hop by hop through the survival moments."""
    w_code = link.ooc.weight
    if _check_bound and link.users > downlink_mai_free_bound(link.ooc):
        warnings.warn(
            "user count exceeds the interference-free downlink bound; the "
            "downlink model is not valid for this load", stacklevel=2)
    atoms = [_hop_flip_atoms(hop, link) for hop in link.hops]
    moments, log_survival_w = _pipeline_moments(atoms, w_code)
    p_be_10 = moments[(w_code, 0)]              # E[(1 - R)^W]
    p_be_01 = -math.expm1(log_survival_w)       # 1 - E[R^W]
    return 0.5 * (p_be_10 + p_be_01)


def p2p_ber(link: LinkEvaluation) -> float:
    """Single-user point-to-point BER with bit detect-and-forward.

    Requires a weight-1, length-1 code (one chip per bit); the fading
    average then factorizes into one-dimensional integrals per hop and
    the pipeline composes their averaged error rates.
    """
    if link.users != 1:
        raise ValueError("point-to-point evaluation requires a single user")
    if link.ooc.length != 1 or link.ooc.weight != 1:
        raise ValueError("point-to-point evaluation requires length = weight = 1")
    per_hop = []
    for hop in link.hops:
        p, w = _hop_flip_atoms(hop, link)
        per_hop.append(float(p @ w))
    return e2e_cer(per_hop)
