import io
import json
import socket
import threading
import time

import numpy as np
import pytest

from fbgbezier.errors import UsageError
from fbgbezier.field_synth import SynthParams, field_at, fiber_profile, synth_deformation, synth_frame
from fbgbezier.frames import encode_frame
from fbgbezier.sensor_model import SensorGeometry
from fbgbezier.stream import ReplayServer, reconstruct_lines, stream_client

GEOM = SensorGeometry()


def frame_lines(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        t = k / 30
        robot = synth_deformation(field_at(10, 0.6, t), 95.0, SynthParams(), 5)
        out.append(encode_frame(synth_frame(fiber_profile(robot, GEOM), GEOM, t, rng, 2.0)))
    return out


@pytest.fixture
def frames_file(tmp_path):
    path = tmp_path / "frames.ndjson"
    path.write_text("\n".join(frame_lines(40)) + "\n")
    return path


def serve(server):
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def batch_csv(path):
    out = io.StringIO()
    with path.open("rb") as fh:
        reconstruct_lines(fh, GEOM, out)
    return out.getvalue()


def test_stream_equals_batch(frames_file):
    with serve(ReplayServer(frames_file, rate=400.0)) as srv:
        out = io.StringIO()
        rec = stream_client(*srv.address, GEOM, out)
        srv.shutdown()
    assert out.getvalue() == batch_csv(frames_file)
    assert rec.n_ok == 40


def test_pacing_follows_rate(frames_file):
    with serve(ReplayServer(frames_file, rate=100.0)) as srv:
        t0 = time.monotonic()
        stream_client(*srv.address, GEOM, io.StringIO())
        elapsed = time.monotonic() - t0
        srv.shutdown()
    assert 0.39 - 0.05 <= elapsed <= 0.39 + 0.15


def test_rate_must_be_positive(frames_file):
    for rate in (0, -5):
        with pytest.raises(UsageError):
            ReplayServer(frames_file, rate=rate)


def test_fuzzed_lines_are_skipped(tmp_path):
    rng = np.random.default_rng(11)
    good = frame_lines(5)
    bad = []
    for i in range(1000):
        base = good[i % 5]
        kind = i % 5
        if kind == 0:
            bad.append(base[: rng.integers(1, len(base))])
        elif kind == 1:
            d = json.loads(base)
            d["v"] = d["v"][: rng.integers(0, 26)]
            bad.append(json.dumps(d))
        elif kind == 2:
            bad.append(base.replace("0.", "x.", 1))
        elif kind == 3:
            bad.append(bytes(rng.integers(1, 255, rng.integers(1, 200), dtype=np.uint8))
                       .decode("latin-1").replace("\n", " "))
        else:
            d = json.loads(base)
            d["v"][3][2] = "NaN"
            bad.append(json.dumps(d))
    lines = bad[:500] + good + bad[500:]
    path = tmp_path / "fuzz.ndjson"
    path.write_bytes("\n".join(lines).encode("utf-8", "surrogateescape") + b"\n")
    with serve(ReplayServer(path, rate=1e6)) as srv:
        rec = stream_client(*srv.address, GEOM, io.StringIO())
        srv.shutdown()
    assert rec.n_ok == 5
    n_lines = sum(1 for ln in path.read_bytes().split(b"\n") if ln.strip())
    assert rec.n_ok + rec.n_skipped == n_lines
    out = io.StringIO()
    with path.open("rb") as fh:
        batch = reconstruct_lines(fh, GEOM, out)
    assert (batch.n_ok, batch.n_skipped) == (rec.n_ok, rec.n_skipped)


class FlakyServer:
    """Drops the first connection mid-line, then replays everything."""

    def __init__(self, lines, cut):
        self.payload = b"".join(ln.encode() + b"\n" for ln in lines)
        self.cut = cut
        self.sock = socket.create_server(("127.0.0.1", 0))
        self.address = self.sock.getsockname()
        self.thread = threading.Thread(target=self.run, daemon=True)
        self.thread.start()

    def run(self):
        for attempt in range(2):
            conn, _ = self.sock.accept()
            with conn:
                conn.sendall(self.payload[: self.cut] if attempt == 0 else self.payload)
        self.sock.close()


def test_reconnect_dedupes_by_timestamp(frames_file):
    lines = frames_file.read_text().splitlines()
    cut = sum(len(ln) + 1 for ln in lines[:12]) + 50
    srv = FlakyServer(lines, cut)
    out = io.StringIO()
    rec = stream_client(*srv.address, GEOM, out, retries=2, retry_delay=0.05)
    assert out.getvalue() == batch_csv(frames_file)
    assert rec.n_skipped == 0


def test_gives_up_after_bounded_retries():
    sock = socket.create_server(("127.0.0.1", 0))
    addr = sock.getsockname()
    sock.close()
    t0 = time.monotonic()
    with pytest.raises(OSError):
        stream_client(*addr, GEOM, io.StringIO(), retries=2, retry_delay=0.01)
    assert time.monotonic() - t0 < 5
