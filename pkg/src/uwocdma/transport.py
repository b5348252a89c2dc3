"""Monte Carlo photon transport through absorbing/scattering seawater.

Photons are launched inside the transmitter divergence cone and tracked
through exponential free paths (rate = extinction coefficient).  At each
interaction the packet weight is multiplied by the single-scattering
albedo and the direction is resampled from a Henyey-Greenstein phase
function.  A packet crossing the receiver plane inside the aperture and
within the acceptance cone deposits its weight into an arrival-time bin;
the time origin is the straight-line arrival time, so bin 0 holds
unscattered light.  Low-weight packets undergo unbiased Russian roulette.

The photon budget is split into fixed-size blocks, each driven by a
generator derived from (seed, block index); block results are merged in
block order, so the output is bit-identical for any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import SPEED_OF_LIGHT

__all__ = [
    "WaterOptics",
    "LinkGeometry",
    "McTransportConfig",
    "ImpulseResponse",
    "EnergyLedger",
    "BinOverflowError",
    "simulate_impulse_response",
    "channel_loss",
    "check_isi_condition",
    "write_impulse_response_csv",
    "read_impulse_response_csv",
    "CLEAR_OCEAN",
]

ROULETTE_SURVIVAL = 0.1


class BinOverflowError(RuntimeError):
    """A photon arrived later than the binnable time window."""


@dataclass(frozen=True)
class WaterOptics:
    """Inherent optical properties of a water type (1/m coefficients)."""

    absorption: float
    scattering: float
    extinction: float
    phase_g: float = 0.924  # Henyey-Greenstein asymmetry, Petzold-like ocean

    def __post_init__(self):
        if self.absorption < 0 or self.scattering < 0:
            raise ValueError("absorption and scattering must be nonnegative")
        if abs(self.extinction - (self.absorption + self.scattering)) > 1e-9:
            raise ValueError("extinction must equal absorption + scattering")
        if not -1.0 < self.phase_g < 1.0:
            raise ValueError("phase asymmetry must lie in (-1, 1)")

    @classmethod
    def from_ab(cls, absorption: float, scattering: float,
                phase_g: float = 0.924) -> "WaterOptics":
        return cls(absorption, scattering, absorption + scattering, phase_g)

    @property
    def albedo(self) -> float:
        return self.scattering / self.extinction if self.extinction > 0 else 0.0


CLEAR_OCEAN = WaterOptics.from_ab(0.114, 0.037)


@dataclass(frozen=True)
class LinkGeometry:
    """Transmitter/receiver geometry of one hop.

    The receiver is a disk of diameter rx_aperture_diameter on the beam
    axis at the link range, facing the transmitter; rays within
    rx_half_fov of its normal are accepted.
    """

    range_m: float
    tx_full_divergence_deg: float
    rx_aperture_diameter_m: float = 0.20
    rx_half_fov_deg: float = 40.0
    wavelength_m: float = 532e-9
    refractive_index: float = 1.331

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError("range must be positive")
        if not 0 < self.tx_full_divergence_deg < 180:
            raise ValueError("divergence must lie in (0, 180) degrees")
        if self.rx_aperture_diameter_m <= 0:
            raise ValueError("aperture diameter must be positive")
        if not 0 < self.rx_half_fov_deg <= 90:
            raise ValueError("half field of view must lie in (0, 90] degrees")


@dataclass(frozen=True)
class McTransportConfig:
    """Photon budget and discretization of the transport run."""

    photon_count: int
    seed: int = 0
    weight_threshold: float = 1e-6
    bin_width: float = 1e-10
    max_bins: int = 10_000
    block_size: int = 1 << 17
    jobs: int = 1

    def __post_init__(self):
        if self.photon_count < 1:
            raise ValueError("photon_count must be at least 1")
        if not 0 < self.weight_threshold < 1:
            raise ValueError("weight_threshold must lie in (0, 1)")
        if self.bin_width <= 0 or self.max_bins < 1:
            raise ValueError("bad binning parameters")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class EnergyLedger:
    """Weight bookkeeping of a transport run.

    roulette_net accumulates killed weight minus the boost granted to
    survivors, so launched = deposited + absorbed + escaped + roulette_net
    holds exactly (up to float summation error).
    """

    launched: float = 0.0
    deposited: float = 0.0
    absorbed: float = 0.0
    escaped: float = 0.0
    roulette_net: float = 0.0

    @property
    def accounted(self) -> float:
        return self.deposited + self.absorbed + self.escaped + self.roulette_net


@dataclass
class ImpulseResponse:
    """Binned fading-free channel response h0(t), unit launched energy.

    bins[k] is the received weight fraction arriving in
    [k*bin_width, (k+1)*bin_width) after the straight-line arrival time.
    """

    bin_width: float
    bins: np.ndarray
    total_received_fraction: float
    ledger: EnergyLedger = field(default_factory=EnergyLedger)

    def __post_init__(self):
        if (self.bins < 0).any():
            raise ValueError("bins must be nonnegative")
        if not 0.0 <= self.total_received_fraction <= 1.0 + 1e-12:
            raise ValueError("total received fraction must lie in [0, 1]")


def _hg_cosines(g: float, xi: np.ndarray) -> np.ndarray:
    """Sample scattering-angle cosines from a Henyey-Greenstein phase function."""
    if g == 0.0:
        return 2.0 * xi - 1.0
    frac = (1.0 - g * g) / (1.0 + g - 2.0 * g * xi)
    return np.clip((1.0 + g * g - frac * frac) / (2.0 * g), -1.0, 1.0)


def _rotate(dirs: np.ndarray, cos_t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Rotate unit vectors by polar angle acos(cos_t) and azimuth phi."""
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    ux, uy, uz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cp, sp = np.cos(phi), np.sin(phi)
    near_axis = np.abs(uz) > 0.99999
    denom = np.sqrt(np.maximum(1.0 - uz * uz, 1e-300))
    nx = sin_t * (ux * uz * cp - uy * sp) / denom + ux * cos_t
    ny = sin_t * (uy * uz * cp + ux * sp) / denom + uy * cos_t
    nz = -sin_t * cp * denom + uz * cos_t
    nx = np.where(near_axis, sin_t * cp, nx)
    ny = np.where(near_axis, sin_t * sp, ny)
    nz = np.where(near_axis, np.sign(uz) * cos_t, nz)
    out = np.stack([nx, ny, nz], axis=1)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out


def _run_block(water: WaterOptics, geom: LinkGeometry, cfg: McTransportConfig,
               block_index: int, n_photons: int):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(block_index,)))
    c = water.extinction
    albedo = water.albedo
    d0 = geom.range_m
    r_ap2 = (geom.rx_aperture_diameter_m / 2.0) ** 2
    cos_fov = np.cos(np.deg2rad(geom.rx_half_fov_deg))
    half_div = np.deg2rad(geom.tx_full_divergence_deg) / 2.0
    speed = SPEED_OF_LIGHT / geom.refractive_index
    path_limit = d0 + cfg.max_bins * cfg.bin_width * speed

    # launch uniformly over the solid angle of the divergence cone
    u = rng.random(n_photons)
    cz = 1.0 - u * (1.0 - np.cos(half_div))
    sz = np.sqrt(1.0 - cz * cz)
    phi0 = 2.0 * np.pi * rng.random(n_photons)
    dirs = np.stack([sz * np.cos(phi0), sz * np.sin(phi0), cz], axis=1)
    pos = np.zeros((n_photons, 3))
    weight = np.ones(n_photons)
    path = np.zeros(n_photons)

    bins = np.zeros(cfg.max_bins)
    deposited = absorbed = escaped = roulette_net = 0.0

    while len(weight):
        step = rng.exponential(1.0 / c, len(weight)) if c > 0 else np.full(len(weight), np.inf)
        uz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_plane = np.where(uz > 0, (d0 - pos[:, 2]) / uz, np.inf)
        crossing = t_plane <= step

        if crossing.any():
            tc = t_plane[crossing]
            hit = pos[crossing] + dirs[crossing] * tc[:, None]
            total_path = path[crossing] + tc
            inside = hit[:, 0] ** 2 + hit[:, 1] ** 2 <= r_ap2
            accepted = inside & (dirs[crossing][:, 2] >= cos_fov)
            w_cross = weight[crossing]
            if accepted.any():
                t_arrival = (total_path[accepted] - d0) / speed
                idx = np.floor(t_arrival / cfg.bin_width).astype(np.int64)
                if (idx >= cfg.max_bins).any():
                    raise BinOverflowError(
                        "bin overflow: arrival beyond max_bins; widen the time window")
                np.add.at(bins, idx, w_cross[accepted])
                deposited += float(w_cross[accepted].sum())
            escaped += float(w_cross[~accepted].sum())

        alive = ~crossing
        pos = pos[alive] + dirs[alive] * step[alive, None]
        dirs = dirs[alive]
        path = path[alive] + step[alive]
        weight = weight[alive]
        if not len(weight):
            break

        # interaction: absorb then scatter
        absorbed += float((weight * (1.0 - albedo)).sum())
        weight = weight * albedo
        dead = weight <= 0.0

        # packets that can no longer arrive inside the time window
        overtime = path > path_limit
        drop = dead | overtime
        escaped += float(weight[overtime & ~dead].sum())
        if drop.any():
            keep = ~drop
            pos, dirs, weight, path = pos[keep], dirs[keep], weight[keep], path[keep]
            if not len(weight):
                break

        cos_t = _hg_cosines(water.phase_g, rng.random(len(weight)))
        dirs = _rotate(dirs, cos_t, 2.0 * np.pi * rng.random(len(weight)))

        low = weight < cfg.weight_threshold
        if low.any():
            survive = rng.random(int(low.sum())) < ROULETTE_SURVIVAL
            w_low = weight[low]
            boosted = w_low / ROULETTE_SURVIVAL
            roulette_net += float(w_low[~survive].sum())
            roulette_net += float((w_low[survive] - boosted[survive]).sum())
            new_w = np.where(survive, boosted, 0.0)
            weight = weight.copy()
            weight[np.where(low)[0]] = new_w
            keep = weight > 0.0
            pos, dirs, weight, path = pos[keep], dirs[keep], weight[keep], path[keep]

    return bins, deposited, absorbed, escaped, roulette_net


def simulate_impulse_response(water: WaterOptics, geom: LinkGeometry,
                              cfg: McTransportConfig) -> ImpulseResponse:
    """Run the transport Monte Carlo and bin the received weight over time.

    Deterministic for a fixed config seed: the budget is partitioned into
    blocks of cfg.block_size photons, each with its own derived stream,
    and block results are accumulated in index order no matter how many
    worker threads execute them.
    """
    n_blocks = (cfg.photon_count + cfg.block_size - 1) // cfg.block_size
    sizes = [min(cfg.block_size, cfg.photon_count - i * cfg.block_size)
             for i in range(n_blocks)]

    if cfg.jobs > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(
                lambda ib: _run_block(water, geom, cfg, ib[0], ib[1]),
                enumerate(sizes)))
    else:
        results = [_run_block(water, geom, cfg, i, n) for i, n in enumerate(sizes)]

    bins = np.zeros(cfg.max_bins)
    ledger = EnergyLedger(launched=float(cfg.photon_count))
    for blk_bins, dep, absd, esc, rnet in results:
        bins += blk_bins
        ledger.deposited += dep
        ledger.absorbed += absd
        ledger.escaped += esc
        ledger.roulette_net += rnet

    bins /= cfg.photon_count
    ledger_frac = EnergyLedger(
        launched=1.0,
        deposited=ledger.deposited / cfg.photon_count,
        absorbed=ledger.absorbed / cfg.photon_count,
        escaped=ledger.escaped / cfg.photon_count,
        roulette_net=ledger.roulette_net / cfg.photon_count,
    )
    return ImpulseResponse(cfg.bin_width, bins, float(bins.sum()), ledger_frac)


def channel_loss(ir: ImpulseResponse, chip_duration: float) -> float:
    """Fraction of transmitted chip energy captured within one chip window.

    With delay spread well below the chip duration this is simply the
    received energy arriving in [0, chip_duration); a bin straddling the
    window edge contributes proportionally.
    """
    if chip_duration <= 0:
        raise ValueError("chip duration must be positive")
    n_full = int(chip_duration // ir.bin_width)
    loss = float(ir.bins[:n_full].sum())
    if n_full < len(ir.bins):
        frac = (chip_duration - n_full * ir.bin_width) / ir.bin_width
        loss += float(ir.bins[n_full]) * frac
    return loss


def check_isi_condition(ir: ImpulseResponse, chip_duration: float,
                        ratio_threshold: float = 100.0) -> tuple[bool, float]:
    """Energy ratio inside/outside one chip window, and whether it clears the bar.

    A response wholly inside the window yields an infinite ratio.
    """
    inside = channel_loss(ir, chip_duration)
    outside = ir.total_received_fraction - inside
    if outside <= 0.0:
        return True, float("inf")
    ratio = inside / outside
    return ratio > ratio_threshold, ratio


def write_impulse_response_csv(path, ir: ImpulseResponse, water: WaterOptics,
                               geom: LinkGeometry, cfg: McTransportConfig) -> None:
    """Dump nonzero bins as time_s,weight rows; the full input record and
    seed travel in a leading comment so runs can be reproduced."""
    meta = {
        "water": {"absorption": water.absorption, "scattering": water.scattering,
                  "extinction": water.extinction, "phase_g": water.phase_g},
        "geometry": {"range_m": geom.range_m,
                     "tx_full_divergence_deg": geom.tx_full_divergence_deg,
                     "rx_aperture_diameter_m": geom.rx_aperture_diameter_m,
                     "rx_half_fov_deg": geom.rx_half_fov_deg,
                     "wavelength_m": geom.wavelength_m,
                     "refractive_index": geom.refractive_index},
        "config": {"photon_count": cfg.photon_count, "seed": cfg.seed,
                   "weight_threshold": cfg.weight_threshold,
                   "bin_width": cfg.bin_width, "max_bins": cfg.max_bins,
                   "block_size": cfg.block_size},
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# %s\n" % json.dumps(meta, sort_keys=True))
        fh.write("time_s,weight\n")
        for k in np.nonzero(ir.bins)[0]:
            fh.write("%.12e,%.17e\n" % (k * ir.bin_width, ir.bins[k]))


def read_impulse_response_csv(path) -> tuple[ImpulseResponse, dict]:
    """Rebuild an ImpulseResponse written by write_impulse_response_csv."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise ValueError("missing metadata comment")
        meta = json.loads(header[2:])
        fh.readline()  # column names
        bin_width = meta["config"]["bin_width"]
        bins = np.zeros(meta["config"]["max_bins"])
        for line in fh:
            t_s, w_s = line.strip().split(",")
            bins[int(round(float(t_s) / bin_width))] = float(w_s)
    return ImpulseResponse(bin_width, bins, float(bins.sum())), meta
