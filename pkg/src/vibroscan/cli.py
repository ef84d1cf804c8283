"""Command-line pipeline: simulate | calibrate | buildmap | stats | serve | replay.

One subcommand per pipeline stage, mirroring the dataflow: synthesize a scan
session, calibrate the camera from marked points, build the vibration map,
inspect its statistics, then serve it or replay a contact script against a
running server. Logs go to stderr; all data lands in the declared output
files only.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import alignment, client, geometry, scansim, server, vibmap

logger = logging.getLogger("vibroscan")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


@dataclass
class BuildReport:
    """What buildmap did: per-pass fit quality plus which passes were dropped."""

    pass_rmse_mm: dict[int, float] = field(default_factory=dict)
    rejected: dict[int, str] = field(default_factory=dict)

    @property
    def used_count(self) -> int:
        return len(self.pass_rmse_mm)

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)


def build_map_from_session(
    session: scansim.ScanSession,
    proj: geometry.CameraProjection,
    width_px: int,
    height_px: int,
    window_frac: float = 0.45,
    taxel_pitch_mm: float = 1.0,
    stretch_px: int = 3,
    baseline_g: float = 1.0,
) -> tuple[vibmap.VibrationMap, vibmap.VibrationMap, list[vibmap.TaxelLane], BuildReport]:
    """Run the full alignment + mapping chain over a session.

    Bad passes (shuffled timestamps, empty windows) are rejected and counted
    rather than poisoning the rest. Returns (raw map, normalized map, taxel
    lanes, report).
    """
    report = BuildReport()
    per_lane: dict[float, list[alignment.PositionedVibration]] = {}
    for k, scan_pass in enumerate(session.passes):
        try:
            positioned, fit = alignment.align_pass(
                scan_pass, session.config.y_len_mm, window_frac
            )
        except (
            alignment.NonMonotonicTimestamps,
            alignment.EmptyWindow,
            alignment.TooFewSamples,
            alignment.DegenerateWindow,
        ) as e:
            report.rejected[k] = str(e)
            logger.warning("pass %d rejected: %s", k, e)
            continue
        report.pass_rmse_mm[k] = fit.rmse_mm
        logger.info("pass %d: fit rmse %.6f mm over [%.3f, %.3f] s", k, fit.rmse_mm, fit.t_lo, fit.t_hi)
        per_lane.setdefault(scan_pass.x_mm, []).extend(positioned)

    if not per_lane:
        raise ValueError("every pass was rejected; nothing to map")

    lanes = []
    for lane_x in sorted(per_lane):
        d = vibmap.sort_by_position(vibmap.to_intensity(per_lane[lane_x], baseline_g))
        ys = [p.y_mm for p in d]
        y0 = math.floor(min(ys) / taxel_pitch_mm) * taxel_pitch_mm
        n_bins = int(math.floor((max(ys) - y0) / taxel_pitch_mm)) + 1
        lanes.append(vibmap.bin_taxels(d, lane_x, y0, n_bins, taxel_pitch_mm))

    raw = vibmap.rasterize(lanes, proj, width_px, height_px, stretch_px)
    return raw, vibmap.normalize(raw), lanes, report


def _load_json(path) -> dict:
    with Path(path).open(encoding="utf-8") as f:
        return json.load(f)


def _load_projection(path) -> geometry.CameraProjection:
    obj = _load_json(path)
    h = obj["h"]
    return geometry.CameraProjection([h[0:3], h[3:6], h[6:9]])


def cmd_simulate(args) -> int:
    try:
        if not args.config:
            raise scansim.ConfigError("simulate needs a config (--config)")
        cfg_obj = _load_json(args.config)
        scan_cfg = scansim.ScanConfig.from_json(cfg_obj["scan"])
        intensity_field = scansim.IntensityField.from_json(cfg_obj["field"])
        out_dir = args.out or cfg_obj.get("out_dir")
        if not out_dir:
            raise scansim.ConfigError("no output directory (use --out or config out_dir)")
    except (OSError, KeyError, TypeError, ValueError) as e:
        logger.error("bad simulate config: %s", e)
        return EXIT_CONFIG
    session = scansim.simulate_session(intensity_field, scan_cfg)
    scansim.save_session(session, out_dir)
    logger.info("wrote %d passes to %s", len(session.passes), out_dir)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        points = geometry.load_correspondences(args.points)
    except (OSError, ValueError) as e:
        logger.error("cannot read correspondences: %s", e)
        return EXIT_CONFIG
    try:
        proj, rmse = geometry.calibrate_planar(points)
    except (geometry.FewerThan8Points, geometry.DegenerateConfiguration) as e:
        logger.error("calibration failed: %s", e)
        return EXIT_FAILURE
    payload = {"h": [float(x) for x in proj.h.flatten()], "rmse_px": rmse}
    with Path(args.out).open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    logger.info("reprojection rmse %.6g px", rmse)
    return EXIT_OK


def cmd_buildmap(args) -> int:
    try:
        cfg_obj = _load_json(args.config) if args.config else {}
        width = args.width or cfg_obj.get("map", {}).get("width_px")
        height = args.height or cfg_obj.get("map", {}).get("height_px")
        if not width or not height:
            raise ValueError("map dimensions required (--width/--height or config map)")
        window_frac = args.window_frac or cfg_obj.get("window_frac", 0.45)
        taxel_pitch = args.taxel_pitch or cfg_obj.get("taxel_pitch_mm", 1.0)
        stretch = args.stretch if args.stretch is not None else cfg_obj.get("stretch_px", 3)
        baseline = args.baseline or cfg_obj.get("baseline_g", 1.0)
    except (OSError, ValueError) as e:
        logger.error("bad buildmap config: %s", e)
        return EXIT_CONFIG

    try:
        session = scansim.load_session(args.session)
        proj = _load_projection(args.projection)
    except (OSError, KeyError, ValueError, AssertionError) as e:
        logger.error("cannot load inputs: %s", e)
        return EXIT_CONFIG

    try:
        raw, norm, lanes, report = build_map_from_session(
            session, proj, width, height,
            window_frac=window_frac, taxel_pitch_mm=taxel_pitch,
            stretch_px=stretch, baseline_g=baseline,
        )
    except (ValueError, geometry.PointAtInfinity) as e:
        logger.error("buildmap failed: %s", e)
        return EXIT_FAILURE

    out = Path(args.out)
    vibmap.write_map(norm, out)
    png = Path(args.png) if args.png else out.with_suffix(".png")
    vibmap.write_preview(norm, png, fill=args.fill_preview)
    if args.raw_out:
        vibmap.write_map(raw, args.raw_out)

    if report.rejected_count:
        logger.warning(
            "rejected %d of %d passes: %s",
            report.rejected_count, len(session.passes),
            ", ".join(f"#{k} ({why})" for k, why in report.rejected.items()),
        )
    logger.info(
        "map %dx%d from %d passes; raw stats: %s",
        norm.width_px, norm.height_px, report.used_count, vibmap.stats_csv_line(raw),
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        m = vibmap.read_map(args.map)
    except (OSError, vibmap.MalformedFile) as e:
        logger.error("cannot read map: %s", e)
        return EXIT_CONFIG
    try:
        line = vibmap.stats_csv_line(m)
    except vibmap.NoTouchedPixels as e:
        logger.error("%s", e)
        return EXIT_FAILURE
    print("v_scale,v_mean,v_std")
    print(line)
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        cfg_obj = _load_json(args.config) if args.config else {}
        cfg = server.ServerConfig.from_json(cfg_obj) if cfg_obj else server.ServerConfig()
        if args.textures:
            cfg.texture_dir = args.textures
        if args.port is not None:
            cfg.tcp_port = args.port
        if args.ws_port is not None:
            cfg.ws_port = args.ws_port
        if args.f_out is not None:
            cfg.f_out = args.f_out
        if args.frame_size is not None:
            cfg.frame_size = args.frame_size
        if args.d_ref is not None:
            cfg.d_ref_mm = args.d_ref
        if args.ui:
            cfg.ui_dir = args.ui
        if not Path(cfg.texture_dir).is_dir():
            raise ValueError(f"texture directory {cfg.texture_dir} does not exist")
    except (OSError, TypeError, ValueError) as e:
        logger.error("bad server config: %s", e)
        return EXIT_CONFIG
    server.run_server(cfg)
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        host, port_text = args.server.rsplit(":", 1)
        port = int(port_text)
        script = client.load_script(args.script)
    except (OSError, ValueError) as e:
        logger.error("bad replay arguments: %s", e)
        return EXIT_CONFIG
    try:
        trace = client.replay(
            script, host, port, args.texture,
            accelerated=args.accelerated, duration_s=args.duration,
        )
    except (client.ConnectionFailed, client.ProtocolError, client.UnknownTexture) as e:
        logger.error("replay failed: %s", e)
        return EXIT_FAILURE
    client.export_trace(trace, args.out, svg_path=args.svg)
    logger.info("trace of %d samples written to %s", len(trace), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibroscan",
        description="Vibrotactile texture maps from raster scans, and a streaming touch server.",
    )
    parser.add_argument(
        "--config", dest="global_config", metavar="FILE",
        help="JSON config used by any subcommand that takes one",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scan session")
    p.add_argument("--config", help="JSON with scan + field sections (or the global --config)")
    p.add_argument("--out", help="session output directory (overrides config out_dir)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit the world-to-pixel projection")
    p.add_argument("--points", required=True, help="correspondence CSV (x_mm,y_mm,u_px,v_px)")
    p.add_argument("--out", required=True, help="projection JSON output")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("buildmap", help="build a vibration map from a session")
    p.add_argument("--session", required=True, help="session directory")
    p.add_argument("--projection", required=True, help="projection JSON from calibrate")
    p.add_argument("--out", required=True, help=".vibmap output path")
    p.add_argument("--png", help="preview PNG path (default: alongside --out)")
    p.add_argument("--raw-out", help="also write the unnormalized map here")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--width", type=int, help="map width in pixels")
    p.add_argument("--height", type=int, help="map height in pixels")
    p.add_argument("--window-frac", type=float, help="cruise window fraction (default 0.45)")
    p.add_argument("--taxel-pitch", type=float, help="taxel size in mm (default 1.0)")
    p.add_argument("--stretch", type=int, help="stripe half-width in px (default 3)")
    p.add_argument("--baseline", type=float, help="baseline acceleration (default 1.0 g)")
    p.add_argument("--fill-preview", action="store_true", help="fill preview gaps (visual only)")
    p.set_defaults(fn=cmd_buildmap)

    p = sub.add_parser("stats", help="print map statistics as CSV")
    p.add_argument("map", help=".vibmap file")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve", help="run the touch streaming server")
    p.add_argument("--config", help="server config JSON")
    p.add_argument("--textures", help="directory of .vibmap files")
    p.add_argument("--port", type=int, help="TCP port for the binary protocol")
    p.add_argument("--ws-port", type=int, help="HTTP/WebSocket port for the JSON mirror + UI")
    p.add_argument("--f-out", type=int, help="output sample rate in Hz (default 1000)")
    p.add_argument("--frame-size", type=int, help="samples per frame (default 64)")
    p.add_argument("--d-ref", type=float, help="depth saturation in mm (default 1.0)")
    p.add_argument("--ui", help="directory with the browser UI to serve")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="replay a contact script against a server")
    p.add_argument("--server", required=True, help="HOST:PORT of the binary protocol")
    p.add_argument("--texture", required=True, type=int, help="texture id to select")
    p.add_argument("--script", required=True, help="contact script CSV (t,u,v,depth_mm)")
    p.add_argument("--out", required=True, help="trace CSV output")
    p.add_argument("--svg", help="also render an SVG plot here")
    p.add_argument("--duration", type=float, help="session length in s (default: last event)")
    p.add_argument("--accelerated", action="store_true", help="send without wall-clock pacing")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    # the global --config feeds any subcommand that did not get its own
    if args.global_config and getattr(args, "config", None) is None:
        args.config = args.global_config
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
