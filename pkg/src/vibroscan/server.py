"""Touch streaming server: texture store, per-session synthesis, transports.

Each client session selects a texture, streams contact events (normalized
UV position plus contact depth) and receives encoded vibrotactile frames.
Sample synthesis is zero-order hold at a fixed output rate, driven by the
contact timestamps themselves, which keeps a replayed session bit-for-bit
reproducible. The same session logic runs behind two transports: the binary
TCP protocol and a WebSocket JSON mirror for browser clients (which also
serves the static UI and texture previews over HTTP).
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import socket
import threading
from dataclasses import dataclass
from pathlib import Path

from . import protocol
from .protocol import (
    Bye,
    Contact,
    Error,
    Hello,
    ListTextures,
    Message,
    Select,
    TextureEntryInfo,
    TextureList,
    VibFrame,
    encode_frame,
)
from .vibmap import VibrationMap, read_map

logger = logging.getLogger(__name__)


class UVOutOfRange(ValueError):
    """Contact UV coordinates must lie in [0, 1]."""


class NoTextureSelected(ValueError):
    """Session tried to stream before selecting a texture."""


def lookup_bilinear(m: VibrationMap, u: float, v: float) -> float:
    """Bilinearly interpolated map value at normalized (u, v).

    (u, v) = (0, 0) is the top-left pixel, (1, 1) the bottom-right; values at
    exact grid nodes are returned bit-exactly.
    """
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise UVOutOfRange(f"uv ({u}, {v}) outside [0,1]")
    x = u * (m.width_px - 1)
    y = v * (m.height_px - 1)
    x0 = min(int(math.floor(x)), m.width_px - 2) if m.width_px > 1 else 0
    y0 = min(int(math.floor(y)), m.height_px - 2) if m.height_px > 1 else 0
    fx = x - x0
    fy = y - y0
    g = m.data
    a = float(g[y0, x0])
    b = float(g[y0, x0 + 1]) if m.width_px > 1 else a
    c = float(g[y0 + 1, x0]) if m.height_px > 1 else a
    d = float(g[y0 + 1, x0 + 1]) if (m.width_px > 1 and m.height_px > 1) else a
    return (
        a * (1 - fx) * (1 - fy)
        + b * fx * (1 - fy)
        + c * (1 - fx) * fy
        + d * fx * fy
    )


def contact_intensity(m: VibrationMap, contact: Contact, d_ref_mm: float = 1.0) -> float:
    """Map value at the contact point, scaled by depth: linear ramp to d_ref, then flat."""
    base = lookup_bilinear(m, contact.u, contact.v)
    return base * min(contact.depth_mm / d_ref_mm, 1.0)


@dataclass
class TextureEntry:
    id: int
    name: str
    map: VibrationMap
    preview_path: Path | None = None
    texture_path: Path | None = None


class TextureStore:
    """Immutable id -> texture mapping, shared read-only by all sessions."""

    def __init__(self, entries: list[TextureEntry]):
        self.entries = list(entries)
        self.by_id = {e.id: e for e in entries}
        if len(self.by_id) != len(entries):
            raise ValueError("texture ids must be unique")

    @staticmethod
    def from_directory(directory) -> "TextureStore":
        """Load every .vibmap in a directory; ids follow sorted file names.

        A sibling <name>.png is the preview; an optional <name>.texture.png
        is the photographic texture shown by the UI (preview used otherwise).
        """
        directory = Path(directory)
        entries = []
        for i, path in enumerate(sorted(directory.glob("*.vibmap"))):
            m = read_map(path)
            if not m.normalized:
                raise ValueError(f"{path}: served maps must be normalized")
            preview = path.with_suffix(".png")
            texture = path.with_name(path.stem + ".texture.png")
            entries.append(
                TextureEntry(
                    id=i,
                    name=path.stem,
                    map=m,
                    preview_path=preview if preview.exists() else None,
                    texture_path=texture if texture.exists() else None,
                )
            )
        return TextureStore(entries)

    def listing(self) -> TextureList:
        return TextureList(
            entries=tuple(
                TextureEntryInfo(
                    id=e.id, name=e.name, width_px=e.map.width_px, height_px=e.map.height_px
                )
                for e in self.entries
            )
        )


class StreamSession:
    """Protocol state machine for one client; transport-agnostic.

    The output sample clock is driven by contact timestamps: a contact at
    time t first back-fills samples up to floor(t * f_out) with the held
    intensity, then updates the held value. Several contacts inside one
    sample period leave the last one standing.
    """

    def __init__(self, store: TextureStore, f_out: int = 1000, frame_size: int = 64,
                 d_ref_mm: float = 1.0):
        self.store = store
        self.f_out = f_out
        self.frame_size = frame_size
        self.d_ref_mm = d_ref_mm
        self.selected: TextureEntry | None = None
        self.intensity = 0.0
        self.out_clock = 0  # samples synthesized so far
        self.seq = 0
        self.pending: list[float] = []

    def _advance(self, target_samples: int) -> None:
        if target_samples > self.out_clock:
            self.pending.extend([self.intensity] * (target_samples - self.out_clock))
            self.out_clock = target_samples

    def _drain_frames(self, flush: bool = False) -> list[VibFrame]:
        frames = []
        while len(self.pending) >= self.frame_size or (flush and self.pending):
            chunk = self.pending[: self.frame_size]
            del self.pending[: len(chunk)]
            first_index = self.out_clock - len(self.pending) - len(chunk)
            frames.append(
                encode_frame(
                    chunk, seq=self.seq, t0=first_index / self.f_out, dt=1.0 / self.f_out
                )
            )
            self.seq += 1
        return frames

    def session_tick(self, now: float) -> list[VibFrame]:
        """Synthesize up to time `now` and return any complete frames."""
        if self.selected is None:
            raise NoTextureSelected("no texture selected")
        self._advance(int(math.floor(now * self.f_out)))
        return self._drain_frames()

    def handle(self, msg: Message) -> tuple[list[Message], bool]:
        """Process one message; returns (replies, close_after_send)."""
        if isinstance(msg, Hello):
            if msg.version != protocol.PROTOCOL_VERSION:
                return [
                    Error(
                        code=protocol.ERR_VERSION_MISMATCH,
                        text=f"server speaks version {protocol.PROTOCOL_VERSION}",
                    )
                ], False
            return [Hello(version=protocol.PROTOCOL_VERSION)], False
        if isinstance(msg, ListTextures):
            return [self.store.listing()], False
        if isinstance(msg, Select):
            entry = self.store.by_id.get(msg.id)
            if entry is None:
                return [
                    Error(code=protocol.ERR_UNKNOWN_TEXTURE, text=f"no texture id {msg.id}")
                ], False
            self.selected = entry
            self.intensity = 0.0
            self.out_clock = 0
            self.seq = 0
            self.pending = []
            return [], False
        if isinstance(msg, Contact):
            if self.selected is None:
                return [
                    Error(code=protocol.ERR_NO_TEXTURE_SELECTED, text="select a texture first")
                ], False
            try:
                frames = self.session_tick(msg.t)
                self.intensity = contact_intensity(self.selected.map, msg, self.d_ref_mm)
            except UVOutOfRange as e:
                return [Error(code=protocol.ERR_BAD_CONTACT, text=str(e))], False
            return list(frames), False
        if isinstance(msg, Bye):
            return list(self._drain_frames(flush=True)), True
        return [Error(code=protocol.ERR_BAD_CONTACT, text="unexpected message")], False


class TouchServer:
    """Threaded TCP server speaking the binary protocol."""

    def __init__(self, store: TextureStore, host: str = "127.0.0.1", port: int = 0,
                 f_out: int = 1000, frame_size: int = 64, d_ref_mm: float = 1.0):
        self.store = store
        self.host = host
        self.f_out = f_out
        self.frame_size = frame_size
        self.d_ref_mm = d_ref_mm
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self._accept_thread: threading.Thread | None = None
        self._stopping = threading.Event()

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, addr = self._listener.accept()
            except OSError:
                break
            threading.Thread(target=self._serve_client, args=(conn, addr), daemon=True).start()

    def _serve_client(self, conn: socket.socket, addr) -> None:
        session = StreamSession(
            self.store, f_out=self.f_out, frame_size=self.frame_size, d_ref_mm=self.d_ref_mm
        )
        try:
            with conn:
                while True:
                    try:
                        msg = protocol.recv_message(conn)
                    except protocol.UnknownTag as e:
                        protocol.send_message(
                            conn, Error(code=protocol.ERR_BAD_CONTACT, text=str(e))
                        )
                        continue
                    except (ValueError, protocol.TruncatedFrame) as e:
                        logger.warning("client %s: unreadable message: %s", addr, e)
                        break
                    if msg is None:
                        break
                    replies, close = session.handle(msg)
                    for r in replies:
                        protocol.send_message(conn, r)
                    if close:
                        break
        except OSError as e:
            logger.debug("client %s: connection dropped: %s", addr, e)

    def stop(self) -> None:
        self._stopping.set()
        # poke the listener so a blocked accept() returns
        try:
            with socket.create_connection((self.host, self.port), timeout=1):
                pass
        except OSError:
            pass
        self._listener.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)


class WsGateway:
    """aiohttp app mirroring the protocol as JSON over WebSocket at /ws,
    plus static hosting for the browser UI and texture previews."""

    def __init__(self, store: TextureStore, host: str = "127.0.0.1", port: int = 0,
                 ui_dir=None, f_out: int = 1000, frame_size: int = 64, d_ref_mm: float = 1.0):
        self.store = store
        self.host = host
        self.port = port
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.f_out = f_out
        self.frame_size = frame_size
        self.d_ref_mm = d_ref_mm
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._runner = None

    def _build_app(self):
        from aiohttp import web

        async def ws_handler(request):
            ws = web.WebSocketResponse()
            await ws.prepare(request)
            session = StreamSession(
                self.store, f_out=self.f_out, frame_size=self.frame_size,
                d_ref_mm=self.d_ref_mm,
            )
            async for raw in ws:
                if raw.type != web.WSMsgType.TEXT:
                    continue
                try:
                    msg = protocol.message_from_json(json.loads(raw.data))
                except (ValueError, KeyError) as e:
                    await ws.send_json(
                        protocol.message_to_json(
                            Error(code=protocol.ERR_BAD_CONTACT, text=str(e))
                        )
                    )
                    continue
                replies, close = session.handle(msg)
                for r in replies:
                    await ws.send_json(protocol.message_to_json(r))
                if close:
                    await ws.close()
                    break
            return ws

        async def texture_file(request):
            name = request.match_info["name"]
            for entry in self.store.entries:
                for candidate in (entry.preview_path, entry.texture_path):
                    if candidate is not None and candidate.name == name:
                        return web.FileResponse(candidate)
            raise web.HTTPNotFound()

        async def index(request):
            if self.ui_dir and (self.ui_dir / "index.html").exists():
                return web.FileResponse(self.ui_dir / "index.html")
            raise web.HTTPNotFound(text="UI directory not configured")

        app = web.Application()
        app.router.add_get("/ws", ws_handler)
        app.router.add_get("/textures/{name}", texture_file)
        app.router.add_get("/", index)
        if self.ui_dir and self.ui_dir.exists():
            app.router.add_static("/ui", self.ui_dir)
        return app

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=10):
            raise RuntimeError("WebSocket gateway failed to start")

    def _run(self) -> None:
        from aiohttp import web

        self._loop = asyncio.new_event_loop()
        asyncio.set_event_loop(self._loop)

        async def boot():
            app = self._build_app()
            self._runner = web.AppRunner(app)
            await self._runner.setup()
            site = web.TCPSite(self._runner, self.host, self.port)
            await site.start()
            for s in self._runner.sites:
                self.port = s._server.sockets[0].getsockname()[1]
            self._started.set()

        self._loop.run_until_complete(boot())
        self._loop.run_forever()
        self._loop.run_until_complete(self._runner.cleanup())
        self._loop.close()

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._loop.stop)
        if self._thread is not None:
            self._thread.join(timeout=5)


@dataclass
class ServerConfig:
    texture_dir: str = "textures"
    host: str = "127.0.0.1"
    tcp_port: int = 9000
    ws_port: int = 9001
    f_out: int = 1000
    frame_size: int = 64
    d_ref_mm: float = 1.0
    ui_dir: str | None = None

    @staticmethod
    def from_json(obj: dict) -> "ServerConfig":
        return ServerConfig(**obj)


def start_servers(cfg: ServerConfig) -> tuple[TouchServer, WsGateway]:
    """Bring up both transports; returns them with their bound ports filled in."""
    store = TextureStore.from_directory(cfg.texture_dir)
    logger.info("loaded %d textures from %s", len(store.entries), cfg.texture_dir)
    tcp = TouchServer(
        store, host=cfg.host, port=cfg.tcp_port, f_out=cfg.f_out,
        frame_size=cfg.frame_size, d_ref_mm=cfg.d_ref_mm,
    )
    tcp.start()
    ws = WsGateway(
        store, host=cfg.host, port=cfg.ws_port, ui_dir=cfg.ui_dir, f_out=cfg.f_out,
        frame_size=cfg.frame_size, d_ref_mm=cfg.d_ref_mm,
    )
    ws.start()
    logger.info("tcp on %s:%d, ws/http on %s:%d", cfg.host, tcp.port, cfg.host, ws.port)
    return tcp, ws


def run_server(cfg: ServerConfig, ready: threading.Event | None = None,
               stop: threading.Event | None = None) -> None:
    """Start both transports and block until `stop` is set (or forever)."""
    tcp, ws = start_servers(cfg)
    try:
        if ready is not None:
            ready.set()
        (stop or threading.Event()).wait()
    except KeyboardInterrupt:
        pass
    finally:
        tcp.stop()
        ws.stop()
