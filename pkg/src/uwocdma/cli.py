"""Command-line front end.

Subcommands: run (evaluate a scenario file), dump-patterns (interference
characterization CSV), reference-tables (bundled tables + recomputed
scintillation), channel (one transport run from a hop-spec file).
Exit codes: 0 success, 2 schema error, 3 campaign finished with failed rows.
"""

from __future__ import annotations

import argparse
import csv
import sys
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import mai, scenario, transport
from .ooc import OocParams

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_PARTIAL = 3


def _cmd_run(args) -> int:
    out_dir = Path(args.out)
    try:
        scn = scenario.load_scenario(args.scenario,
                                     cache_dir=out_dir / "channel-cache")
    except scenario.SchemaError as exc:
        print("schema error: %s" % exc, file=sys.stderr)
        return EXIT_SCHEMA
    for note in scn.notes:
        print("note: %s" % note, file=sys.stderr)
    seeds = (args.seed,) if args.seed is not None else None
    rows = scenario.run_campaign(scn, jobs=args.jobs, bit_count=args.bits,
                                 seeds=seeds)
    csv_path = out_dir / ("%s.csv" % scn.name)
    scenario.write_result_csv(csv_path, scn, rows)
    scenario.write_campaign_metadata(out_dir / ("%s.meta.json" % scn.name), scn)
    failed = [r for r in rows if r.status != "ok"]
    print("wrote %s (%d rows, %d failed)" % (csv_path, len(rows), len(failed)))
    for r in failed:
        print("failed row case=%s power=%g seed=%d: %s"
              % (r.case, r.power_dbm, r.seed, r.detail), file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_dump_patterns(args) -> int:
    try:
        rows = mai.interference_table(args.users, OocParams(args.length, args.weight))
    except ValueError as exc:
        print("schema error: %s" % exc, file=sys.stderr)
        return EXIT_SCHEMA
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["interferers", "prob_interferers", "num_patterns",
                         "pattern", "conditional_prob", "similar_patterns",
                         "fading_dimension"])
        for row in rows:
            frac: Fraction = row["conditional_prob"]
            writer.writerow([
                row["interferers"], "%.4g" % row["prob_interferers"],
                row["num_patterns"],
                "(%s)" % ",".join(str(a) for a in row["pattern"]),
                "1" if frac == 1 else "%d/%d" % (frac.numerator, frac.denominator),
                row["similar_patterns"], "N+%d" % row["dimension_offset"],
            ])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _cmd_reference_tables(args) -> int:
    paths = scenario.emit_reference_tables(
        args.out, compute_scintillation=not args.no_computed)
    for name, p in sorted(paths.items()):
        print("wrote %s" % p)
    return EXIT_OK


def _cmd_channel(args) -> int:
    try:
        raw = tomllib.loads(Path(args.hopspec).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print("schema error: %s" % exc, file=sys.stderr)
        return EXIT_SCHEMA
    try:
        water_raw = {**scenario.DEFAULT_WATER, **raw.get("water", {})}
        water = transport.WaterOptics.from_ab(
            water_raw["absorption"], water_raw["scattering"],
            water_raw.get("phase_asymmetry", 0.924))
        geom_raw = raw.get("geometry", {})
        geom = transport.LinkGeometry(
            range_m=geom_raw["range_m"],
            tx_full_divergence_deg=geom_raw.get("divergence_deg", 0.02),
            rx_aperture_diameter_m=geom_raw.get("aperture_m", 0.20),
            rx_half_fov_deg=geom_raw.get("half_fov_deg", 40.0),
            wavelength_m=geom_raw.get("wavelength_m", 532e-9),
            refractive_index=geom_raw.get("refractive_index", 1.331))
        mc_raw = raw.get("mc", {})
        cfg = transport.McTransportConfig(
            photon_count=int(mc_raw.get("photons", 1_000_000)),
            seed=args.seed if args.seed is not None else int(mc_raw.get("seed", 0)),
            bin_width=float(mc_raw.get("bin_width_s", 1e-10)),
            max_bins=int(mc_raw.get("max_bins", 10_000)),
            jobs=args.jobs)
    except (KeyError, ValueError) as exc:
        print("schema error: %s" % exc, file=sys.stderr)
        return EXIT_SCHEMA
    ir = transport.simulate_impulse_response(water, geom, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "impulse_response.csv"
    transport.write_impulse_response_csv(csv_path, ir, water, geom, cfg)
    chip = float(raw.get("chip_duration_s", 1e-8))
    loss = transport.channel_loss(ir, chip)
    ok, ratio = transport.check_isi_condition(ir, chip)
    print("wrote %s" % csv_path)
    print("received fraction: %.6e" % ir.total_received_fraction)
    print("chip-window loss coefficient (Tc=%g s): %.6e" % (chip, loss))
    print("in/out-of-window energy ratio: %s (no-ISI condition %s)"
          % ("inf" if ratio == float("inf") else "%.3g" % ratio,
             "holds" if ok else "fails"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwocdma",
        description="Relay-assisted underwater optical CDMA link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seeds with a single seed")
    p_run.add_argument("--bits", type=int, default=None,
                       help="override the Monte Carlo bit budget")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_pat = sub.add_parser("dump-patterns",
                           help="interference characterization table as CSV")
    p_pat.add_argument("--users", type=int, default=5)
    p_pat.add_argument("--length", type=int, default=50)
    p_pat.add_argument("--weight", type=int, default=3)
    p_pat.add_argument("--out", default=None, help="CSV path (default stdout)")
    p_pat.set_defaults(func=_cmd_dump_patterns)

    p_ref = sub.add_parser("reference-tables",
                           help="bundled reference tables as CSV")
    p_ref.add_argument("--out", default="reference-tables")
    p_ref.add_argument("--no-computed", action="store_true",
                       help="skip recomputing the scintillation index")
    p_ref.set_defaults(func=_cmd_reference_tables)

    p_ch = sub.add_parser("channel",
                          help="run photon transport for one hop spec")
    p_ch.add_argument("hopspec", help="TOML file with water/geometry/mc tables")
    p_ch.add_argument("--out", default="channel-out")
    p_ch.add_argument("--seed", type=int, default=None)
    p_ch.add_argument("--jobs", type=int, default=1)
    p_ch.set_defaults(func=_cmd_channel)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
