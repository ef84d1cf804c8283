"""Builds the checkerboard texture the UI loopback test drives against.

Usage: python3 build-test-textures.py OUT_DIR

Writes OUT_DIR/textures/checker.{vibmap,png} plus OUT_DIR/reference.json
holding the exact lookup values the streaming server will serve at the
test's drag positions (so the TS side only has to compare).
"""

import json
import sys
from pathlib import Path

from vibroscan.cli import build_map_from_session
from vibroscan.geometry import CameraProjection
from vibroscan.protocol import Contact
from vibroscan.scansim import IntensityField, ScanConfig, simulate_session
from vibroscan.server import contact_intensity
from vibroscan.vibmap import write_map, write_preview

MAP_SIZE = 48  # 1 px per mm over the 40 mm field, with margin


def main(out_dir: Path) -> None:
    field = IntensityField.checkerboard(10.0, 0.1, 0.5)
    cfg = ScanConfig(
        y_start_mm=0.0,
        y_len_mm=40.0,
        lanes=20,
        lane_pitch_mm=2.0,
        passes_per_lane=8,
        cruise_speed_mm_s=20.0,
        accel_mm_s2=2000.0,
        robot_rate_hz=125.0,
        accel_rate_hz=1000.0,
        clock_offset_s=0.003,
        noise_sigma_g=0.01,
        seed=77,
    )
    session = simulate_session(field, cfg)
    proj = CameraProjection([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    _, norm, _, report = build_map_from_session(session, proj, MAP_SIZE, MAP_SIZE)
    assert report.rejected_count == 0

    textures = out_dir / "textures"
    textures.mkdir(parents=True, exist_ok=True)
    write_map(norm, textures / "checker.vibmap")
    write_preview(norm, textures / "checker.png")

    # drag row v=0.5 crosses four 10 mm bands; these are the exact values
    # the server's bilinear lookup returns at the band centers
    band_x = [5, 15, 25, 35]
    v = 0.5
    lookups = {}
    for x in band_x:
        u = x / (MAP_SIZE - 1)
        c = Contact(t=0.0, u=u, v=v, depth_mm=2.0)
        lookups[str(x)] = {"u": u, "value": contact_intensity(norm, c, 1.0)}

    (out_dir / "reference.json").write_text(
        json.dumps({"v": v, "map_px": MAP_SIZE, "bands": lookups}, indent=1)
    )
    print(f"built {textures / 'checker.vibmap'}")


if __name__ == "__main__":
    main(Path(sys.argv[1]))
