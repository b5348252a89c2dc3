"""Scenario files, campaign orchestration and CSV emission.

A scenario is one TOML file describing the network (users, relays, code,
detector, channel resolution mode, power sweep) plus the evaluations to
run.  Loading fully resolves every hop to a (loss, fading) pair, either
from the bundled channel table, from explicit values, or by running the
photon-transport and turbulence models (cached by input hash).  A
campaign evaluates every (case, power, seed) row and writes one CSV,
atomically and in a stable row order, so identical inputs give
byte-identical output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import ber, linksim, mai, transport, turbulence
from .channel_table import CHANNEL_ROWS, lookup_row
from .ooc import (OocCodebook, OocParams, downlink_mai_free_bound,
                  generate_codebook, max_users, parse_codebook)

__all__ = [
    "SchemaError",
    "NetworkScenario",
    "ScenarioCase",
    "ResultRow",
    "load_scenario",
    "run_campaign",
    "write_result_csv",
    "emit_reference_tables",
]

DEFAULT_DETECTOR = dict(
    quantum_efficiency=0.8,
    wavelength_m=532e-9,
    load_resistance_ohm=100.0,
    temperature_k=290.0,
    dark_current_a=1.226e-9,
    background_rate_hz=1.206e10,
)
DEFAULT_TURBULENCE = dict(chi_t=1e-7, epsilon=5e-5, w_ratio=-3.5)
DEFAULT_WATER = dict(absorption=0.114, scattering=0.037, phase_asymmetry=0.924)

CSV_COLUMNS = [
    "scenario", "scenario_hash", "case", "direction", "users", "relays",
    "seed", "power_dbm", "chip_power_w", "ber_analytic", "ber_mc",
    "ci_low", "ci_high", "bits", "status", "detail",
]


class SchemaError(ValueError):
    """Scenario file violates the schema; message names the field."""


def _require(table: dict, key: str, kind, where: str):
    if key not in table:
        raise SchemaError("%s: missing required field %r" % (where, key))
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise SchemaError("%s.%s: expected %s, got %r"
                          % (where, key, getattr(kind, "__name__", kind), value))
    return value


def _optional(table: dict, key: str, kind, default, where: str):
    if key not in table:
        return default
    return _require(table, key, kind, where)


@dataclass(frozen=True)
class ScenarioCase:
    """One resolved sub-scenario: a relay chain with per-hop channel data
    and (optionally) its own concurrent-user count."""

    name: str
    relays: int
    hops: tuple[ber.HopSpec, ...]
    users: int = 1


@dataclass
class NetworkScenario:
    """A fully resolved scenario ready for evaluation."""

    name: str
    direction: str
    users: int
    ooc: OocParams
    codebook: OocCodebook | None
    detector: ber.DetectorParams
    thermal_var: float | None
    chip_duration: float
    cases: tuple[ScenarioCase, ...]
    powers_dbm: tuple[float, ...]
    evaluation: str
    bit_count: int
    seeds: tuple[int, ...]
    quad: ber.QuadratureSpec
    content_hash: str
    source: str = ""
    notes: list = field(default_factory=list)

    def link_for(self, case: ScenarioCase, power_dbm: float) -> ber.LinkEvaluation:
        avg_power = 1e-3 * 10.0 ** (power_dbm / 10.0)
        plan = ber.PowerPlan(avg_bit_power=avg_power)
        chip_power = plan.resolve_chip_power(self.ooc, len(case.hops))
        return ber.LinkEvaluation(
            users=case.users, ooc=self.ooc, hops=case.hops,
            detector=self.detector, chip_power=chip_power,
            chip_duration=self.chip_duration, thermal_var=self.thermal_var,
            quad=self.quad)


def _power_grid(spec, where: str) -> tuple[float, ...]:
    if isinstance(spec, list):
        return tuple(float(v) for v in spec)
    if isinstance(spec, dict):
        start = _require(spec, "start", float, where)
        stop = _require(spec, "stop", float, where)
        step = _require(spec, "step", float, where)
        if step <= 0:
            raise SchemaError("%s.step: must be positive" % where)
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(max(0, n)))
    raise SchemaError("%s: expected list or {start, stop, step}" % where)


def _hash_inputs(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _resolve_mc_hop(length: float, divergence: float, raw_channel: dict,
                    chip_duration: float, cache_dir: Path | None) -> tuple[float, float]:
    """Run (or fetch from cache) the transport and turbulence models for
    one hop; returns (loss, sigma2_x)."""
    water_cfg = {**DEFAULT_WATER, **raw_channel.get("water", {})}
    turb_cfg = {**DEFAULT_TURBULENCE, **raw_channel.get("turbulence", {})}
    mc_cfg = raw_channel.get("mc", {})
    photons = int(mc_cfg.get("photons", 10_000_000))
    seed = int(mc_cfg.get("seed", 0))
    geom = transport.LinkGeometry(
        range_m=length, tx_full_divergence_deg=divergence,
        rx_aperture_diameter_m=float(mc_cfg.get("aperture_m", 0.20)),
        rx_half_fov_deg=float(mc_cfg.get("half_fov_deg", 40.0)),
        wavelength_m=float(mc_cfg.get("wavelength_m", 532e-9)),
        refractive_index=float(mc_cfg.get("refractive_index", 1.331)))
    key = _hash_inputs("hop-v1", water_cfg, turb_cfg, photons, seed,
                       geom.__dict__, chip_duration)
    if cache_dir is not None:
        hit = cache_dir / ("%s.json" % key)
        if hit.exists():
            cached = json.loads(hit.read_text())
            return cached["loss"], cached["sigma2_x"]
    water = transport.WaterOptics.from_ab(
        water_cfg["absorption"], water_cfg["scattering"],
        water_cfg.get("phase_asymmetry", 0.924))
    cfg = transport.McTransportConfig(photon_count=photons, seed=seed)
    ir = transport.simulate_impulse_response(water, geom, cfg)
    loss = transport.channel_loss(ir, chip_duration)
    params = turbulence.TurbulenceParams(
        chi_t=turb_cfg["chi_t"], epsilon=turb_cfg["epsilon"],
        w_ratio=turb_cfg["w_ratio"])
    s2i = turbulence.scintillation_index(params, length, geom.wavelength_m)
    s2x = turbulence.fading_from_scintillation(s2i).sigma2_x
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        (cache_dir / ("%s.json" % key)).write_text(
            json.dumps({"loss": loss, "sigma2_x": s2x, "sigma2_i": s2i}))
    return loss, s2x


def _resolve_hops(case_name: str, relays: int, hop_specs, raw_channel: dict,
                  chip_duration: float, cache_dir: Path | None) -> tuple[ber.HopSpec, ...]:
    resolution = raw_channel.get("resolution", "table")
    total = raw_channel.get("total_range_m")
    n_hops = relays + 1
    where = "cases.%s" % case_name

    if hop_specs is None:
        if total is None:
            raise SchemaError("channel.total_range_m: required when a case "
                              "does not list explicit hops")
        divergence = float(raw_channel.get("divergence_deg", 0.02))
        hop_specs = [{"length_m": float(total) / n_hops,
                      "divergence_deg": divergence} for _ in range(n_hops)]
    if len(hop_specs) != n_hops:
        raise SchemaError("%s: %d relays need %d hops, got %d"
                          % (where, relays, n_hops, len(hop_specs)))

    lengths = [h.get("length_m") for h in hop_specs]
    if total is not None and all(v is not None for v in lengths):
        if abs(sum(float(v) for v in lengths) - float(total)) > 1e-6 * float(total):
            raise SchemaError("%s: hop lengths sum to %g, expected total %g"
                              % (where, sum(lengths), total))

    hops = []
    for i, spec in enumerate(hop_specs, start=1):
        if "loss" in spec and "sigma2_x" in spec:
            loss, s2x = float(spec["loss"]), float(spec["sigma2_x"])
        else:
            length = spec.get("length_m")
            if length is None:
                raise SchemaError("%s.hops[%d]: need either (loss, sigma2_x) "
                                  "or length_m" % (where, i - 1))
            divergence = float(spec.get(
                "divergence_deg", raw_channel.get("divergence_deg", 0.02)))
            if resolution == "table":
                try:
                    loss, _, s2x = lookup_row(float(length), divergence)
                except KeyError as exc:
                    raise SchemaError("%s.hops[%d]: %s" % (where, i - 1, exc)) from exc
            elif resolution == "mc":
                loss, s2x = _resolve_mc_hop(float(length), divergence,
                                            raw_channel, chip_duration, cache_dir)
            else:
                raise SchemaError("channel.resolution: expected 'table', 'mc' "
                                  "or explicit hop values, got %r" % resolution)
        hops.append(ber.HopSpec(loss=loss,
                                fading=turbulence.FadingModel(sigma2_x=s2x),
                                index=i))
    return tuple(hops)


def load_scenario(path, cache_dir: Path | str | None = None) -> NetworkScenario:
    """Parse, validate and fully resolve a scenario file.

    Raises SchemaError with a field-level message on any violation;
    'mc'-resolution hops trigger channel simulation, cached under
    cache_dir keyed by the full input hash.
    """
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
        raw = tomllib.loads(raw_bytes.decode("utf-8"))
    except FileNotFoundError:
        raise SchemaError("scenario file not found: %s" % path)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError("scenario file is not valid TOML: %s" % exc)
    content_hash = hashlib.sha256(raw_bytes).hexdigest()[:16]
    cache_dir = Path(cache_dir) if cache_dir is not None else None
    notes = []

    name = _optional(raw, "name", str, path.stem, "scenario")
    direction = _require(raw, "direction", str, "scenario")
    if direction not in ("uplink", "downlink", "p2p"):
        raise SchemaError("direction: expected uplink, downlink or p2p, got %r"
                          % direction)
    users = _optional(raw, "users", int, 1, "scenario")
    if users < 1:
        raise SchemaError("users: must be at least 1")
    chip_duration = _require(raw, "chip_duration_s", float, "scenario")
    if chip_duration <= 0:
        raise SchemaError("chip_duration_s: must be positive")
    evaluation = _optional(raw, "evaluation", str, "analytic", "scenario")
    if evaluation not in ("analytic", "montecarlo", "both"):
        raise SchemaError("evaluation: expected analytic, montecarlo or both")
    bit_count = _optional(raw, "bit_count", int, 1_000_000, "scenario")
    seeds = tuple(_optional(raw, "seeds", list, [1], "scenario"))
    if not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise SchemaError("seeds: expected nonnegative integers")

    ooc_raw = raw.get("ooc", {})
    if direction == "p2p":
        if ooc_raw and (ooc_raw.get("length", 1) != 1 or ooc_raw.get("weight", 1) != 1):
            notes.append("p2p forces a length-1, weight-1 code")
        ooc = OocParams(1, 1)
        if users != 1:
            notes.append("p2p forces a single user")
            users = 1
        codebook = None
    else:
        length = _require(ooc_raw, "length", int, "ooc")
        weight = _require(ooc_raw, "weight", int, "ooc")
        try:
            ooc = OocParams(length, weight)
        except ValueError as exc:
            raise SchemaError("ooc: %s" % exc)
        if weight > 1 and users > max_users(ooc):
            raise SchemaError("users: too many users for codebook (bound %d)"
                              % max_users(ooc))
        source = _optional(ooc_raw, "codebook", str, "generate", "ooc")
        if source == "generate":
            codebook = None  # generated once the per-case user counts are known
        else:
            codebook = parse_codebook((path.parent / source).read_text())
            if codebook.params != ooc:
                raise SchemaError("ooc.codebook: file parameters %r do not "
                                  "match the scenario" % (codebook.params,))
            if len(codebook) < users:
                raise SchemaError("ooc.codebook: %d codewords for %d users"
                                  % (len(codebook), users))
        if direction == "downlink" and users > downlink_mai_free_bound(ooc):
            notes.append("warning: user count exceeds the interference-free "
                         "downlink bound; the downlink model is invalid")

    det_raw = {**DEFAULT_DETECTOR, **raw.get("detector", {})}
    detector = ber.DetectorParams(
        quantum_efficiency=float(det_raw["quantum_efficiency"]),
        wavelength=float(det_raw["wavelength_m"]),
        load_resistance=float(det_raw["load_resistance_ohm"]),
        temperature=float(det_raw["temperature_k"]),
        dark_current=float(det_raw["dark_current_a"]),
        background_rate=float(det_raw["background_rate_hz"]))
    thermal_var = det_raw.get("thermal_variance_counts2")
    thermal_var = float(thermal_var) if thermal_var is not None else None

    power_raw = raw.get("power", {})
    if "avg_bit_power_dbm" in power_raw:
        powers = _power_grid(power_raw["avg_bit_power_dbm"], "power.avg_bit_power_dbm")
    else:
        raise SchemaError("power.avg_bit_power_dbm: required")

    quad_raw = raw.get("quadrature", {})
    quad = ber.QuadratureSpec(
        nodes_per_dimension=_optional(quad_raw, "nodes", int, 24, "quadrature"),
        max_dimension=_optional(quad_raw, "max_dimension", int, 8, "quadrature"))

    raw_channel = raw.get("channel", {})
    cases_raw = raw.get("cases")
    if cases_raw is None:
        relay_spec = raw.get("relays", 0)
        relay_list = relay_spec if isinstance(relay_spec, list) else [relay_spec]
        cases_raw = [{"name": "N%d" % n, "relays": int(n)} for n in relay_list]
    cases = []
    for c in cases_raw:
        cname = _require(c, "name", str, "cases")
        relays = _require(c, "relays", int, "cases.%s" % cname)
        if relays < 0:
            raise SchemaError("cases.%s.relays: must be nonnegative" % cname)
        case_users = _optional(c, "users", int, users, "cases.%s" % cname)
        if direction == "p2p":
            case_users = 1
        elif ooc.weight > 1 and case_users > max_users(ooc):
            raise SchemaError("cases.%s.users: too many users for codebook "
                              "(bound %d)" % (cname, max_users(ooc)))
        hops = _resolve_hops(cname, relays, c.get("hops"), raw_channel,
                             chip_duration, cache_dir)
        cases.append(ScenarioCase(cname, relays, hops, case_users))

    if direction != "p2p":
        need = max((c.users for c in cases), default=users)
        if codebook is None:
            codebook = generate_codebook(
                ooc, need, seed=_optional(ooc_raw, "codebook_seed", int, 1, "ooc"))
        elif len(codebook) < need:
            raise SchemaError("ooc.codebook: %d codewords but a case needs %d"
                              % (len(codebook), need))

    return NetworkScenario(
        name=name, direction=direction, users=users, ooc=ooc,
        codebook=codebook, detector=detector, thermal_var=thermal_var,
        chip_duration=chip_duration, cases=tuple(cases), powers_dbm=powers,
        evaluation=evaluation, bit_count=bit_count, seeds=seeds, quad=quad,
        content_hash=content_hash, source=str(path), notes=notes)


@dataclass
class ResultRow:
    case: str
    power_dbm: float
    seed: int
    chip_power_w: float = float("nan")
    ber_analytic: float | None = None
    ber_mc: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    bits: int | None = None
    status: str = "ok"
    detail: str = ""


def _evaluate_row(scn: NetworkScenario, case: ScenarioCase, power_dbm: float,
                  seed: int, bit_count: int) -> ResultRow:
    row = ResultRow(case=case.name, power_dbm=power_dbm, seed=seed)
    try:
        link = scn.link_for(case, power_dbm)
        row.chip_power_w = link.chip_power
        if scn.evaluation in ("analytic", "both"):
            if scn.direction == "uplink":
                row.ber_analytic = ber.uplink_ber(link)
            elif scn.direction == "downlink":
                row.ber_analytic = ber.downlink_ber(link)
            else:
                row.ber_analytic = ber.p2p_ber(link)
        if scn.evaluation in ("montecarlo", "both"):
            run = linksim.SimRun(link=link, direction=scn.direction,
                                 bit_count=bit_count, seed=seed,
                                 codebook=scn.codebook)
            res = linksim.run_simulation(run)
            row.ber_mc = res.ber
            row.ci_low, row.ci_high = res.wilson_low, res.wilson_high
            row.bits = res.bits
    except Exception as exc:  # row failure must not abort the campaign
        row.status = "failed"
        row.detail = "%s: %s" % (type(exc).__name__, exc)
    return row


def run_campaign(scn: NetworkScenario, jobs: int = 1,
                 bit_count: int | None = None,
                 seeds: tuple[int, ...] | None = None) -> list[ResultRow]:
    """Evaluate every (case, power, seed) combination of the scenario.

    Rows are independent jobs; failures are recorded per row rather than
    aborting.  The returned list is sorted by (case, power, seed) no
    matter the execution order.
    """
    bits = bit_count if bit_count is not None else scn.bit_count
    seed_list = seeds if seeds is not None else scn.seeds
    work = [(case, p, s) for case in scn.cases for p in scn.powers_dbm
            for s in seed_list]
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                lambda t: _evaluate_row(scn, t[0], t[1], t[2], bits), work))
    else:
        rows = [_evaluate_row(scn, c, p, s, bits) for c, p, s in work]
    order = {case.name: i for i, case in enumerate(scn.cases)}
    rows.sort(key=lambda r: (order[r.case], r.power_dbm, r.seed))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return "%.10e" % value
    return str(value)


def write_result_csv(path, scn: NetworkScenario, rows: list[ResultRow]) -> None:
    """Write the campaign table atomically (UTF-8, '.' decimal separator,
    scientific notation for error rates)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in rows:
                case = next(c for c in scn.cases if c.name == r.case)
                writer.writerow([
                    scn.name, scn.content_hash, r.case, scn.direction,
                    case.users, case.relays, r.seed, _fmt(float(r.power_dbm)),
                    _fmt(r.chip_power_w), _fmt(r.ber_analytic), _fmt(r.ber_mc),
                    _fmt(r.ci_low), _fmt(r.ci_high),
                    r.bits if r.bits is not None else "", r.status, r.detail,
                ])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_campaign_metadata(path, scn: NetworkScenario) -> None:
    """Sidecar JSON describing the resolved scenario: per-case hop losses
    and fading statistics, code parameters and evaluation settings."""
    payload = {
        "scenario": scn.name,
        "scenario_hash": scn.content_hash,
        "direction": scn.direction,
        "ooc": {"length": scn.ooc.length, "weight": scn.ooc.weight},
        "chip_duration_s": scn.chip_duration,
        "thermal_variance_counts2": scn.thermal_var,
        "evaluation": scn.evaluation,
        "quadrature_nodes": scn.quad.nodes_per_dimension,
        "notes": scn.notes,
        "cases": [{
            "name": c.name,
            "relays": c.relays,
            "users": c.users,
            "hops": [{"loss": h.loss, "sigma2_x": h.fading.sigma2_x,
                      "mu_x": h.fading.mu_x, "sigma2_i": h.fading.sigma2_i}
                     for h in c.hops],
        } for c in scn.cases],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def emit_reference_tables(out_dir, turbulence_params=None,
                          compute_scintillation: bool = True) -> dict[str, Path]:
    """Write the bundled reference tables as CSV.

    interference_patterns.csv reproduces the 5-user interference
    characterization from the pattern combinatorics; channel_table.csv
    lists the bundled per-hop rows, the log-amplitude variance re-derived
    from the scintillation index, and (optionally) the scintillation
    index recomputed from the turbulence spectrum with a relative error
    column.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    pat_path = out / "interference_patterns.csv"
    with open(pat_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interferers", "prob_interferers", "num_patterns",
                         "pattern", "conditional_prob", "similar_patterns",
                         "fading_dimension"])
        for row in mai.interference_table(5, OocParams(50, 3)):
            frac: Fraction = row["conditional_prob"]
            writer.writerow([
                row["interferers"], "%.4g" % row["prob_interferers"],
                row["num_patterns"],
                "(%s)" % ",".join(str(a) for a in row["pattern"]),
                "1" if frac == 1 else "%d/%d" % (frac.numerator, frac.denominator),
                row["similar_patterns"], "N+%d" % row["dimension_offset"],
            ])
    paths["interference_patterns"] = pat_path

    if compute_scintillation:
        if turbulence_params is None:
            turbulence_params = turbulence.TurbulenceParams(**DEFAULT_TURBULENCE)
        computed = {r: turbulence.scintillation_index(turbulence_params, r, 532e-9)
                    for r in sorted({k[0] for k in CHANNEL_ROWS})}
    else:
        computed = {}

    chan_path = out / "channel_table.csv"
    with open(chan_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["range_m", "divergence_deg", "loss",
                         "scintillation_index", "log_amplitude_variance",
                         "log_amplitude_variance_derived",
                         "scintillation_index_computed", "relative_error"])
        for (rng_m, div), (loss, s2i, s2x) in sorted(CHANNEL_ROWS.items()):
            derived = math.log1p(s2i) / 4.0
            comp = computed.get(rng_m, 0.0)
            rel = abs(comp - s2i) / s2i if comp else 0.0
            writer.writerow(["%g" % rng_m, "%g" % div, "%.6g" % loss,
                             "%.6g" % s2i, "%.6g" % s2x, "%.6g" % derived,
                             "%.6g" % comp, "%.4g" % rel])
    paths["channel_table"] = chan_path
    return paths
