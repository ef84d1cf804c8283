import asyncio
import json
import math

import numpy as np
import pytest

from vibroscan import protocol
from vibroscan.protocol import Bye, Contact, Error, Hello, ListTextures, Select, VibFrame
from vibroscan.server import (
    NoTextureSelected,
    StreamSession,
    TextureStore,
    UVOutOfRange,
    WsGateway,
    contact_intensity,
    lookup_bilinear,
)

from conftest import full_map


class TestLookupBilinear:
    def test_exact_at_grid_nodes(self):
        rng = np.random.default_rng(50)
        m = full_map(rng.uniform(0, 1, size=(7, 9)))
        for j in range(7):
            for i in range(9):
                u = i / 8
                v = j / 6
                assert lookup_bilinear(m, u, v) == m.data[j, i]

    def test_midpoint_of_horizontal_neighbours(self):
        m = full_map([[0.2, 0.4]])
        assert lookup_bilinear(m, 0.5, 0.0) == pytest.approx(0.3)

    def test_matches_weighted_sum_oracle(self):
        rng = np.random.default_rng(51)
        m = full_map(rng.uniform(0, 1, size=(12, 17)))
        g = m.data.astype(np.float64)
        for u, v in rng.uniform(0, 1, size=(10_000, 2)):
            got = lookup_bilinear(m, float(u), float(v))
            x = u * 16
            y = v * 11
            x0, y0 = min(int(math.floor(x)), 15), min(int(math.floor(y)), 10)
            fx, fy = x - x0, y - y0
            expected = (
                g[y0, x0] * (1 - fx) * (1 - fy)
                + g[y0, x0 + 1] * fx * (1 - fy)
                + g[y0 + 1, x0] * (1 - fx) * fy
                + g[y0 + 1, x0 + 1] * fx * fy
            )
            assert abs(got - expected) <= 1e-12

    def test_result_bounded_by_corners(self):
        rng = np.random.default_rng(52)
        m = full_map(rng.uniform(0, 1, size=(5, 5)))
        for u, v in rng.uniform(0, 1, size=(500, 2)):
            value = lookup_bilinear(m, float(u), float(v))
            assert 0.0 <= value <= 1.0

    def test_uv_out_of_range(self):
        m = full_map([[0.0, 1.0]])
        for u, v in [(-0.01, 0.5), (1.01, 0.5), (0.5, -0.1), (0.5, 2.0)]:
            with pytest.raises(UVOutOfRange):
                lookup_bilinear(m, u, v)


class TestContactIntensity:
    def test_zero_depth_is_silent(self):
        m = full_map([[1.0]])
        c = Contact(t=0.0, u=0.0, v=0.0, depth_mm=0.0)
        assert contact_intensity(m, c) == 0.0

    def test_saturates_at_reference_depth(self):
        m = full_map([[0.6]])
        for depth in (1.0, 2.0, 50.0):
            c = Contact(t=0.0, u=0.0, v=0.0, depth_mm=depth)
            assert contact_intensity(m, c, d_ref_mm=1.0) == np.float32(0.6)

    def test_half_depth_halves_intensity(self):
        m = full_map([[0.6]])
        c = Contact(t=0.0, u=0.0, v=0.0, depth_mm=0.5)
        assert contact_intensity(m, c, d_ref_mm=1.0) == pytest.approx(0.3)


def select_ok(session, tid=0):
    replies, close = session.handle(Select(id=tid))
    assert replies == [] and not close
    return session


class TestStreamSession:
    def test_hello_echoes_version(self, texture_store):
        s = StreamSession(texture_store)
        replies, close = s.handle(Hello(version=protocol.PROTOCOL_VERSION))
        assert replies == [Hello(version=protocol.PROTOCOL_VERSION)]
        assert not close

    def test_version_mismatch_errors(self, texture_store):
        s = StreamSession(texture_store)
        replies, _ = s.handle(Hello(version=99))
        assert isinstance(replies[0], Error)
        assert replies[0].code == protocol.ERR_VERSION_MISMATCH

    def test_listing_names_all_textures(self, texture_store):
        s = StreamSession(texture_store)
        (listing,), _ = s.handle(ListTextures())
        assert [e.name for e in listing.entries] == ["checker", "gradient"]
        assert [e.id for e in listing.entries] == [0, 1]

    def test_unknown_texture_select(self, texture_store):
        s = StreamSession(texture_store)
        replies, _ = s.handle(Select(id=42))
        assert replies[0].code == protocol.ERR_UNKNOWN_TEXTURE

    def test_contact_before_select_errors(self, texture_store):
        s = StreamSession(texture_store)
        replies, _ = s.handle(Contact(t=0.0, u=0.5, v=0.5, depth_mm=1.0))
        assert replies[0].code == protocol.ERR_NO_TEXTURE_SELECTED

    def test_tick_requires_selection(self, texture_store):
        s = StreamSession(texture_store)
        with pytest.raises(NoTextureSelected):
            s.session_tick(1.0)

    def test_no_contact_streams_zeros(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        frames = s.session_tick(0.2)  # 200 samples -> 3 frames of 64
        assert [f.seq for f in frames] == [0, 1, 2]
        for f in frames:
            assert protocol.decode_frame(f) == [0.0] * 64

    def test_constant_hold_is_exact(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        held = Contact(t=0.0, u=0.0, v=1.0, depth_mm=5.0)  # bottom-left checker pixel
        s.handle(held)
        expected = contact_intensity(texture_store.by_id[0].map, held, 1.0)
        frames = s.session_tick(0.128)
        samples = [x for f in frames for x in protocol.decode_frame(f)]
        assert len(samples) == 128
        assert all(x == expected for x in samples)

    def test_latest_contact_wins_within_sample_period(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        # both contacts land in sample period 0; the second sets the level
        s.handle(Contact(t=0.0002, u=0.0, v=1.0, depth_mm=5.0))
        s.handle(Contact(t=0.0004, u=0.5, v=1.0, depth_mm=0.0))
        frames = s.session_tick(0.064)
        samples = [x for f in frames for x in protocol.decode_frame(f)]
        assert samples == [0.0] * 64

    def test_seq_is_gapless_across_ticks(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        collected = []
        for k in range(1, 30):
            collected.extend(s.session_tick(0.037 * k))
        assert [f.seq for f in collected] == list(range(len(collected)))

    def test_bye_flushes_partial_frame(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        s.session_tick(0.070)  # 70 samples: one frame out, 6 pending
        replies, close = s.handle(Bye())
        assert close
        assert len(replies) == 1
        assert isinstance(replies[0], VibFrame)
        assert replies[0].n == 6

    def test_sample_count_tracks_duration(self, texture_store):
        s = select_ok(StreamSession(texture_store))
        duration = 1.2345
        frames = s.session_tick(duration)
        replies, _ = s.handle(Bye())
        frames.extend(r for r in replies if isinstance(r, VibFrame))
        total = sum(f.n for f in frames)
        assert abs(total - duration * s.f_out) <= s.frame_size


class TestTextureStore:
    def test_requires_normalized_maps(self, tmp_path):
        from vibroscan.vibmap import VibrationMap, write_map

        raw = VibrationMap(
            data=np.array([[0.5]], dtype=np.float32),
            touched=np.array([[True]]),
            normalized=False,
            raw_min=0.5,
            raw_max=0.5,
            raw_mean=0.5,
            raw_std=0.0,
        )
        write_map(raw, tmp_path / "raw.vibmap")
        with pytest.raises(ValueError):
            TextureStore.from_directory(tmp_path)

    def test_listing_carries_dimensions(self, texture_store):
        listing = texture_store.listing()
        checker = listing.entries[0]
        assert (checker.width_px, checker.height_px) == (40, 40)


class TestWsGateway:
    def test_json_mirror_handshake_and_stream(self, texture_store):
        gw = WsGateway(texture_store, port=0)
        gw.start()
        try:
            payload = asyncio.run(self._drive(gw.port))
        finally:
            gw.stop()
        types = [m["type"] for m in payload]
        assert types[0] == "HELLO"
        assert types[1] == "TEXTURE_LIST"
        assert "VIB_FRAME" in types
        frame = next(m for m in payload if m["type"] == "VIB_FRAME")
        decoded = protocol.decode_frame(protocol.message_from_json(frame))
        assert len(decoded) == 64

    @staticmethod
    async def _drive(port):
        import aiohttp

        received = []
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"http://127.0.0.1:{port}/ws") as ws:
                await ws.send_json(protocol.message_to_json(Hello()))
                received.append(json.loads((await ws.receive()).data))
                await ws.send_json(protocol.message_to_json(ListTextures()))
                received.append(json.loads((await ws.receive()).data))
                await ws.send_json(protocol.message_to_json(Select(id=0)))
                await ws.send_json(
                    protocol.message_to_json(Contact(t=0.0, u=0.5, v=0.5, depth_mm=2.0))
                )
                await ws.send_json(
                    protocol.message_to_json(Contact(t=0.1, u=0.5, v=0.5, depth_mm=2.0))
                )
                await ws.send_json(protocol.message_to_json(Bye()))
                while True:
                    msg = await ws.receive()
                    if msg.type.name in ("CLOSE", "CLOSED", "CLOSING"):
                        break
                    received.append(json.loads(msg.data))
        return received

    def test_texture_files_served_over_http(self, texture_dir):
        store = TextureStore.from_directory(texture_dir)
        gw = WsGateway(store, port=0)
        gw.start()
        try:
            body = asyncio.run(self._fetch(gw.port, "/textures/checker.png"))
        finally:
            gw.stop()
        assert body[:8] == b"\x89PNG\r\n\x1a\n"

    @staticmethod
    async def _fetch(port, path):
        import aiohttp

        async with aiohttp.ClientSession() as http:
            async with http.get(f"http://127.0.0.1:{port}{path}") as resp:
                assert resp.status == 200
                return await resp.read()
