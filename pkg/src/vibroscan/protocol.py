"""Wire protocol and vibrotactile codec for the touch streaming link.

Framing: big-endian u32 payload length, u8 message tag, payload. The length
counts payload bytes only (not the tag). Numeric fields are big-endian;
strings are u16 length + UTF-8. Frames of vibrotactile samples are
compressed with per-frame min-max uniform 8-bit quantization; the first
payload byte of a sample frame is a codec id so other schemes can coexist
later (0 = uniform 8-bit).

Every message also has a JSON form (one object per message, same field
names, sample bytes as base64) used by the WebSocket gateway.
"""

from __future__ import annotations

import base64
import math
import socket
import struct
from dataclasses import dataclass

PROTOCOL_VERSION = 1
CODEC_UNIFORM8 = 0

TAG_HELLO = 1
TAG_LIST_TEXTURES = 2
TAG_TEXTURE_LIST = 3
TAG_SELECT = 4
TAG_CONTACT = 5
TAG_VIB_FRAME = 6
TAG_ERROR = 7
TAG_BYE = 8

ERR_VERSION_MISMATCH = 1
ERR_UNKNOWN_TEXTURE = 2
ERR_NO_TEXTURE_SELECTED = 3
ERR_BAD_CONTACT = 4


class EmptyFrame(ValueError):
    """A sample frame needs at least one sample."""


class NonFiniteSample(ValueError):
    """Samples must be finite to quantize."""


class MalformedFrame(ValueError):
    """Frame fields are inconsistent (byte count, ranges)."""


class UnknownTag(ValueError):
    """Unrecognized message tag. The full frame was consumed, so reading can
    resume at the next length boundary (see .next_offset)."""

    def __init__(self, tag: int, next_offset: int):
        super().__init__(f"unknown message tag {tag}")
        self.tag = tag
        self.next_offset = next_offset


class LengthMismatch(ValueError):
    """Declared payload length disagrees with the fields inside it."""


class TruncatedFrame(ValueError):
    """Buffer ends before the declared frame does."""


def as_f32(x: float) -> float:
    """Round to the nearest float32, the precision these fields have on the wire."""
    return struct.unpack(">f", struct.pack(">f", x))[0]


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class ListTextures:
    pass


@dataclass(frozen=True)
class TextureEntryInfo:
    id: int
    name: str
    width_px: int
    height_px: int


@dataclass(frozen=True)
class TextureList:
    entries: tuple[TextureEntryInfo, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class Select:
    id: int


@dataclass(frozen=True)
class Contact:
    t: float
    u: float
    v: float
    depth_mm: float

    def __post_init__(self):
        object.__setattr__(self, "u", as_f32(self.u))
        object.__setattr__(self, "v", as_f32(self.v))
        object.__setattr__(self, "depth_mm", as_f32(self.depth_mm))
        if not (0.0 <= self.u <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError(f"contact uv ({self.u}, {self.v}) outside [0,1]")
        if not self.depth_mm >= 0.0:
            raise ValueError(f"contact depth {self.depth_mm} must be >= 0")


@dataclass(frozen=True)
class VibFrame:
    seq: int
    t0: float
    dt: float
    n: int
    qmin: float
    qmax: float
    q: bytes
    codec: int = CODEC_UNIFORM8

    def __post_init__(self):
        object.__setattr__(self, "dt", as_f32(self.dt))
        object.__setattr__(self, "qmin", as_f32(self.qmin))
        object.__setattr__(self, "qmax", as_f32(self.qmax))
        if self.n < 1:
            raise MalformedFrame("frame must hold at least one sample")
        if len(self.q) != self.n:
            raise MalformedFrame(f"frame declares n={self.n} but carries {len(self.q)} bytes")
        if not self.qmin <= self.qmax:
            raise MalformedFrame(f"qmin {self.qmin} > qmax {self.qmax}")


@dataclass(frozen=True)
class Error:
    code: int
    text: str = ""


@dataclass(frozen=True)
class Bye:
    pass


Message = Hello | ListTextures | TextureList | Select | Contact | VibFrame | Error | Bye


def encode_frame(samples, seq: int, t0: float, dt: float) -> VibFrame:
    """Quantize samples to one byte each against the frame's own min/max range.

    Quantization is computed against the float32-rounded range actually
    stored in the frame, so encoder and decoder agree bit-for-bit.
    """
    samples = list(samples)
    if len(samples) == 0:
        raise EmptyFrame("no samples to encode")
    if len(samples) > 0xFFFF:
        raise ValueError(f"frame of {len(samples)} samples exceeds u16 count")
    if not all(math.isfinite(s) for s in samples):
        raise NonFiniteSample("samples must be finite")

    qmin = as_f32(min(samples))
    qmax = as_f32(max(samples))
    if qmax > qmin:
        scale = 255.0 / (qmax - qmin)
        q = bytes(
            min(255, max(0, int(math.floor((s - qmin) * scale + 0.5)))) for s in samples
        )
    else:
        q = bytes(len(samples))
    return VibFrame(seq=seq, t0=t0, dt=dt, n=len(samples), qmin=qmin, qmax=qmax, q=q)


def decode_frame(frame: VibFrame) -> list[float]:
    """Reconstruct samples: qmin + byte * (qmax - qmin) / 255."""
    if frame.codec != CODEC_UNIFORM8:
        raise MalformedFrame(f"unsupported codec id {frame.codec}")
    step = (frame.qmax - frame.qmin) / 255.0
    return [frame.qmin + b * step for b in frame.q]


def _pack_text(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("text field exceeds u16 length")
    return struct.pack(">H", len(raw)) + raw


def _unpack_text(payload: bytes, off: int) -> tuple[str, int]:
    if off + 2 > len(payload):
        raise LengthMismatch("text length field runs past payload")
    (n,) = struct.unpack_from(">H", payload, off)
    off += 2
    if off + n > len(payload):
        raise LengthMismatch("text runs past payload")
    return payload[off : off + n].decode("utf-8"), off + n


def _payload(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, Hello):
        return TAG_HELLO, struct.pack(">B", msg.version)
    if isinstance(msg, ListTextures):
        return TAG_LIST_TEXTURES, b""
    if isinstance(msg, TextureList):
        parts = [struct.pack(">H", len(msg.entries))]
        for e in msg.entries:
            parts.append(struct.pack(">H", e.id))
            parts.append(_pack_text(e.name))
            parts.append(struct.pack(">HH", e.width_px, e.height_px))
        return TAG_TEXTURE_LIST, b"".join(parts)
    if isinstance(msg, Select):
        return TAG_SELECT, struct.pack(">H", msg.id)
    if isinstance(msg, Contact):
        return TAG_CONTACT, struct.pack(">dfff", msg.t, msg.u, msg.v, msg.depth_mm)
    if isinstance(msg, VibFrame):
        head = struct.pack(
            ">BIdfHff", msg.codec, msg.seq, msg.t0, msg.dt, msg.n, msg.qmin, msg.qmax
        )
        return TAG_VIB_FRAME, head + msg.q
    if isinstance(msg, Error):
        return TAG_ERROR, struct.pack(">B", msg.code) + _pack_text(msg.text)
    if isinstance(msg, Bye):
        return TAG_BYE, b""
    raise TypeError(f"not a protocol message: {msg!r}")


def write_message(msg: Message) -> bytes:
    tag, payload = _payload(msg)
    return struct.pack(">IB", len(payload), tag) + payload


def _parse(tag: int, payload: bytes) -> Message:
    if tag == TAG_HELLO:
        if len(payload) != 1:
            raise LengthMismatch("HELLO payload must be 1 byte")
        return Hello(version=payload[0])
    if tag == TAG_LIST_TEXTURES:
        if payload:
            raise LengthMismatch("LIST_TEXTURES carries no payload")
        return ListTextures()
    if tag == TAG_TEXTURE_LIST:
        if len(payload) < 2:
            raise LengthMismatch("TEXTURE_LIST payload too short")
        (count,) = struct.unpack_from(">H", payload, 0)
        off = 2
        entries = []
        for _ in range(count):
            if off + 2 > len(payload):
                raise LengthMismatch("TEXTURE_LIST entry runs past payload")
            (tid,) = struct.unpack_from(">H", payload, off)
            off += 2
            name, off = _unpack_text(payload, off)
            if off + 4 > len(payload):
                raise LengthMismatch("TEXTURE_LIST entry runs past payload")
            w, h = struct.unpack_from(">HH", payload, off)
            off += 4
            entries.append(TextureEntryInfo(id=tid, name=name, width_px=w, height_px=h))
        if off != len(payload):
            raise LengthMismatch("TEXTURE_LIST payload has trailing bytes")
        return TextureList(entries=tuple(entries))
    if tag == TAG_SELECT:
        if len(payload) != 2:
            raise LengthMismatch("SELECT payload must be 2 bytes")
        return Select(id=struct.unpack(">H", payload)[0])
    if tag == TAG_CONTACT:
        if len(payload) != 20:
            raise LengthMismatch("CONTACT payload must be 20 bytes")
        t, u, v, depth = struct.unpack(">dfff", payload)
        return Contact(t=t, u=u, v=v, depth_mm=depth)
    if tag == TAG_VIB_FRAME:
        head = struct.calcsize(">BIdfHff")
        if len(payload) < head:
            raise LengthMismatch("VIB_FRAME payload too short")
        codec, seq, t0, dt, n, qmin, qmax = struct.unpack_from(">BIdfHff", payload, 0)
        q = payload[head:]
        if len(q) != n:
            raise LengthMismatch(f"VIB_FRAME declares {n} samples, carries {len(q)}")
        return VibFrame(seq=seq, t0=t0, dt=dt, n=n, qmin=qmin, qmax=qmax, q=q, codec=codec)
    if tag == TAG_ERROR:
        if len(payload) < 1:
            raise LengthMismatch("ERROR payload too short")
        code = payload[0]
        text, off = _unpack_text(payload, 1)
        if off != len(payload):
            raise LengthMismatch("ERROR payload has trailing bytes")
        return Error(code=code, text=text)
    if tag == TAG_BYE:
        if payload:
            raise LengthMismatch("BYE carries no payload")
        return Bye()
    raise AssertionError("unreachable")


KNOWN_TAGS = frozenset(
    [
        TAG_HELLO,
        TAG_LIST_TEXTURES,
        TAG_TEXTURE_LIST,
        TAG_SELECT,
        TAG_CONTACT,
        TAG_VIB_FRAME,
        TAG_ERROR,
        TAG_BYE,
    ]
)


def read_message(data: bytes, offset: int = 0) -> tuple[Message, int]:
    """Parse one framed message starting at offset; returns (message, next offset).

    Raises TruncatedFrame when the buffer ends mid-frame and UnknownTag when
    the tag is unrecognized; in the latter case the frame boundary is known,
    so .next_offset on the exception points at the next frame.
    """
    if offset + 5 > len(data):
        raise TruncatedFrame("frame header incomplete")
    length, tag = struct.unpack_from(">IB", data, offset)
    end = offset + 5 + length
    if end > len(data):
        raise TruncatedFrame(f"payload of {length} bytes incomplete")
    if tag not in KNOWN_TAGS:
        raise UnknownTag(tag, end)
    return _parse(tag, data[offset + 5 : end]), end


def send_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(write_message(msg))


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket) -> Message | None:
    """Read exactly one message from a stream socket; None on clean EOF.

    An unknown tag consumes its whole frame before raising, so the stream
    stays aligned for the next call.
    """
    header = _recv_exact(sock, 5)
    if header is None:
        return None
    length, tag = struct.unpack(">IB", header)
    payload = _recv_exact(sock, length)
    if payload is None:
        raise TruncatedFrame("connection closed mid-payload")
    if tag not in KNOWN_TAGS:
        raise UnknownTag(tag, 0)
    return _parse(tag, payload)


_TYPE_NAMES = {
    Hello: "HELLO",
    ListTextures: "LIST_TEXTURES",
    TextureList: "TEXTURE_LIST",
    Select: "SELECT",
    Contact: "CONTACT",
    VibFrame: "VIB_FRAME",
    Error: "ERROR",
    Bye: "BYE",
}


def message_to_json(msg: Message) -> dict:
    """JSON-object mirror of a message, used verbatim by the WebSocket gateway."""
    name = _TYPE_NAMES[type(msg)]
    if isinstance(msg, Hello):
        return {"type": name, "version": msg.version}
    if isinstance(msg, (ListTextures, Bye)):
        return {"type": name}
    if isinstance(msg, TextureList):
        return {
            "type": name,
            "entries": [
                {"id": e.id, "name": e.name, "width_px": e.width_px, "height_px": e.height_px}
                for e in msg.entries
            ],
        }
    if isinstance(msg, Select):
        return {"type": name, "id": msg.id}
    if isinstance(msg, Contact):
        return {"type": name, "t": msg.t, "u": msg.u, "v": msg.v, "depth_mm": msg.depth_mm}
    if isinstance(msg, VibFrame):
        return {
            "type": name,
            "seq": msg.seq,
            "t0": msg.t0,
            "dt": msg.dt,
            "n": msg.n,
            "qmin": msg.qmin,
            "qmax": msg.qmax,
            "q": base64.b64encode(msg.q).decode("ascii"),
        }
    if isinstance(msg, Error):
        return {"type": name, "code": msg.code, "text": msg.text}
    raise TypeError(f"not a protocol message: {msg!r}")


def message_from_json(obj: dict) -> Message:
    kind = obj.get("type")
    if kind == "HELLO":
        return Hello(version=obj["version"])
    if kind == "LIST_TEXTURES":
        return ListTextures()
    if kind == "TEXTURE_LIST":
        return TextureList(
            entries=tuple(
                TextureEntryInfo(
                    id=e["id"], name=e["name"], width_px=e["width_px"], height_px=e["height_px"]
                )
                for e in obj["entries"]
            )
        )
    if kind == "SELECT":
        return Select(id=obj["id"])
    if kind == "CONTACT":
        return Contact(t=obj["t"], u=obj["u"], v=obj["v"], depth_mm=obj["depth_mm"])
    if kind == "VIB_FRAME":
        return VibFrame(
            seq=obj["seq"],
            t0=obj["t0"],
            dt=obj["dt"],
            n=obj["n"],
            qmin=obj["qmin"],
            qmax=obj["qmax"],
            q=base64.b64decode(obj["q"]),
        )
    if kind == "ERROR":
        return Error(code=obj["code"], text=obj.get("text", ""))
    if kind == "BYE":
        return Bye()
    raise ValueError(f"unknown message type {kind!r}")
