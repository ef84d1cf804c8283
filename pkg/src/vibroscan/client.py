"""Headless replay client: drives a scripted contact path and records the stream.

Feeds timestamped contact events to a running touch server, decodes every
vibrotactile frame that comes back, and stitches them into a single
intensity-vs-time trace suitable for plotting or regression comparison.
Accelerated mode sends the script without pacing, so a full session runs in
milliseconds; wall-clock mode sleeps between events for live demos.
"""

from __future__ import annotations

import csv
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import protocol
from .protocol import Bye, Contact, Hello, ListTextures, Select


class ConnectionFailed(ConnectionError):
    """Could not reach the server."""


class ProtocolError(RuntimeError):
    """Server answered with an error or out-of-contract message."""

    def __init__(self, code: int, text: str = ""):
        super().__init__(f"server error {code}: {text}")
        self.code = code
        self.text = text


class UnknownTexture(ValueError):
    """Requested texture id is not in the server's listing."""


@dataclass(frozen=True)
class ScriptPoint:
    t: float
    u: float
    v: float
    depth_mm: float


@dataclass
class TrajectoryScript:
    points: list[ScriptPoint]

    def __post_init__(self):
        for a, b in zip(self.points, self.points[1:]):
            if b.t <= a.t:
                raise ValueError("script timestamps must be strictly increasing")

    @property
    def duration(self) -> float:
        return self.points[-1].t if self.points else 0.0


SCRIPT_HEADER = ["t", "u", "v", "depth_mm"]


def load_script(path) -> TrajectoryScript:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SCRIPT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SCRIPT_HEADER)}")
        pts = [ScriptPoint(*(float(c) for c in row)) for row in reader if row]
    return TrajectoryScript(points=pts)


def save_script(script: TrajectoryScript, path) -> None:
    with Path(path).open("w", newline="\n", encoding="utf-8") as f:
        f.write(",".join(SCRIPT_HEADER) + "\n")
        for p in script.points:
            f.write(f"{p.t!r},{p.u!r},{p.v!r},{p.depth_mm!r}\n")


@dataclass
class Trace:
    times: list[float]
    intensities: list[float]

    def __len__(self):
        return len(self.times)


def _recv_all_frames(sock: socket.socket, frames: list, errors: list) -> None:
    while True:
        try:
            msg = protocol.recv_message(sock)
        except (OSError, ValueError):
            break
        if msg is None:
            break
        if isinstance(msg, protocol.VibFrame):
            frames.append(msg)
        elif isinstance(msg, protocol.Error):
            errors.append(msg)
            break


def replay(
    script: TrajectoryScript,
    host: str,
    port: int,
    texture_id: int,
    accelerated: bool = True,
    duration_s: float | None = None,
    timeout_s: float = 30.0,
) -> Trace:
    """Run one scripted session and return the decoded intensity trace.

    The script's contact events are followed by a release event at
    duration_s (default: the last scripted timestamp), so the stream always
    covers the full script duration. In accelerated mode events are sent
    back-to-back and only their timestamps carry timing.
    """
    if duration_s is None:
        duration_s = script.duration
    if script.points and duration_s < script.duration:
        raise ValueError("duration_s must not cut the script short")

    try:
        sock = socket.create_connection((host, port), timeout=timeout_s)
    except OSError as e:
        raise ConnectionFailed(f"cannot connect to {host}:{port}: {e}") from e

    with sock:
        protocol.send_message(sock, Hello())
        reply = protocol.recv_message(sock)
        if isinstance(reply, protocol.Error):
            raise ProtocolError(reply.code, reply.text)
        if not isinstance(reply, Hello):
            raise ProtocolError(0, f"expected HELLO back, got {reply!r}")

        protocol.send_message(sock, ListTextures())
        listing = protocol.recv_message(sock)
        if not isinstance(listing, protocol.TextureList):
            raise ProtocolError(0, f"expected TEXTURE_LIST, got {listing!r}")
        if texture_id not in {e.id for e in listing.entries}:
            raise UnknownTexture(f"texture {texture_id} not offered by server")

        protocol.send_message(sock, Select(id=texture_id))

        frames: list[protocol.VibFrame] = []
        errors: list[protocol.Error] = []
        receiver = threading.Thread(
            target=_recv_all_frames, args=(sock, frames, errors), daemon=True
        )
        receiver.start()

        wall_start = time.monotonic()
        last_uv = (0.0, 0.0)
        for p in script.points:
            if not accelerated:
                lag = p.t - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)
            protocol.send_message(sock, Contact(t=p.t, u=p.u, v=p.v, depth_mm=p.depth_mm))
            last_uv = (p.u, p.v)

        # release event marks the end of the touch and flushes the timeline
        if not accelerated:
            lag = duration_s - (time.monotonic() - wall_start)
            if lag > 0:
                time.sleep(lag)
        protocol.send_message(
            sock, Contact(t=duration_s, u=last_uv[0], v=last_uv[1], depth_mm=0.0)
        )
        protocol.send_message(sock, Bye())
        receiver.join(timeout=timeout_s)
        if receiver.is_alive():
            raise ProtocolError(0, "timed out waiting for the stream to finish")

    if errors:
        raise ProtocolError(errors[0].code, errors[0].text)

    seqs = [f.seq for f in frames]
    if seqs != list(range(len(seqs))):
        raise ProtocolError(0, f"frame sequence has gaps: {seqs[:10]}...")

    times: list[float] = []
    values: list[float] = []
    index = 0
    for f in frames:
        rate = round(1.0 / f.dt)
        for s in protocol.decode_frame(f):
            times.append(index / rate)
            values.append(s)
            index += 1
    return Trace(times=times, intensities=values)


def export_trace(trace: Trace, path, svg_path=None) -> None:
    """Write the trace CSV (t,intensity at 6 decimals) and an optional SVG plot."""
    with Path(path).open("w", newline="\n", encoding="utf-8") as f:
        f.write("t,intensity\n")
        for t, x in zip(trace.times, trace.intensities):
            f.write(f"{t:.6f},{x:.6f}\n")
    if svg_path is not None:
        Path(svg_path).write_text(render_trace_svg(trace), encoding="utf-8")


def load_trace(path) -> Trace:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t", "intensity"]:
            raise ValueError(f"{path}: expected header t,intensity")
        times, values = [], []
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            values.append(float(row[1]))
    return Trace(times=times, intensities=values)


SVG_Y_MAX = 0.8  # fixed plotting ceiling for intensity traces


def render_trace_svg(trace: Trace, width: int = 800, height: int = 240) -> str:
    """Minimal line plot: time along x, intensity clamped to [0, SVG_Y_MAX]."""
    pad = 30
    t_max = trace.times[-1] if trace.times else 1.0
    if t_max <= 0:
        t_max = 1.0
    pts = []
    for t, x in zip(trace.times, trace.intensities):
        px = pad + (width - 2 * pad) * (t / t_max)
        clamped = min(max(x, 0.0), SVG_Y_MAX)
        py = height - pad - (height - 2 * pad) * (clamped / SVG_Y_MAX)
        pts.append(f"{px:.2f},{py:.2f}")
    polyline = " ".join(pts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'data-y-min="0" data-y-max="{SVG_Y_MAX}">\n'
        f'  <rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        f'fill="none" stroke="#999"/>\n'
        f'  <text x="2" y="{pad + 4}" font-size="10">{SVG_Y_MAX}</text>\n'
        f'  <text x="2" y="{height - pad}" font-size="10">0</text>\n'
        f'  <polyline fill="none" stroke="#06c" stroke-width="1" points="{polyline}"/>\n'
        f"</svg>\n"
    )
