"""Frame replay over TCP and the online reconstruction client.

The server paces lines of a frames file at a fixed rate: frame ``k`` is
sent no earlier than ``start + k / rate`` on the monotonic clock, so timing
errors do not accumulate.  The client reconstructs each frame as it arrives
and produces the same CSV rows as the batch path.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from pathlib import Path

from .errors import FrameError, FrameShapeError, UsageError
from .frames import parse_frame
from .pipeline import CSV_HEADER, ROBOT_LENGTH, format_row, reconstruct_frame
from .sensor_model import SensorGeometry

log = logging.getLogger(__name__)


class Reconstructor:
    """Turns frame lines into CSV rows; malformed frames are skipped and counted."""

    def __init__(self, geom: SensorGeometry, robot_length: float = ROBOT_LENGTH,
                 fmt: str = "%.6g", on_result=None, midpoint: bool = False,
                 parameterization: str = "chord"):
        self.geom = geom
        self.midpoint = midpoint
        self.parameterization = parameterization
        self.robot_length = robot_length
        self.fmt = fmt
        self.on_result = on_result
        self.n_ok = 0
        self.n_skipped = 0
        self.n_shape_mismatch = 0
        self.results = []

    def process_line(self, line, lineno=None) -> str | None:
        if not line.strip():
            return None
        try:
            frame = parse_frame(line, self.geom.n_gratings, self.geom.n_cores)
        except FrameError as exc:
            self.n_skipped += 1
            self.n_shape_mismatch += isinstance(exc, FrameShapeError)
            log.warning("skipping frame at line %s: %s", lineno, exc)
            return None
        rec = reconstruct_frame(frame, self.geom, self.robot_length, self.midpoint,
                                self.parameterization)
        row = format_row(self.n_ok, rec, self.fmt)
        self.n_ok += 1
        self.results.append(rec)
        if self.on_result is not None:
            self.on_result(rec, row)
        return row

    def summary(self) -> str:
        return f"frames={self.n_ok + self.n_skipped} ok={self.n_ok} skipped={self.n_skipped}"


def reconstruct_lines(lines, geom: SensorGeometry, out, robot_length: float = ROBOT_LENGTH,
                      fmt: str = "%.6g", **options) -> Reconstructor:
    """Batch reconstruction of an iterable of lines into the text stream ``out``."""
    rec = Reconstructor(geom, robot_length, fmt, **options)
    out.write(CSV_HEADER + "\n")
    for lineno, line in enumerate(lines, start=1):
        row = rec.process_line(line, lineno)
        if row is not None:
            out.write(row + "\n")
    return rec


# ----------------------------------------------------------------- server --

class _ReplayHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        lines = server.lines
        period = 1.0 / server.rate
        start = time.monotonic()
        try:
            for k, line in enumerate(lines):
                delay = start + k * period - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                self.request.sendall(line)
        except OSError as exc:
            log.info("client %s disconnected: %s", self.client_address, exc)
        finally:
            server.sessions_done.release()


class ReplayServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, frames_path, rate: float = 30.0, host: str = "127.0.0.1", port: int = 0):
        if not rate > 0:
            raise UsageError("replay rate must be positive")
        # split on LF only, exactly as the batch reader iterates a file
        raw = Path(frames_path).read_bytes().split(b"\n")
        self.lines = [ln + b"\n" for ln in raw if ln.strip()]
        self.rate = float(rate)
        self.sessions_done = threading.Semaphore(0)
        super().__init__((host, port), _ReplayHandler)

    @property
    def address(self):
        return self.server_address[:2]


def replay_server(frames_path, rate: float = 30.0, host: str = "127.0.0.1", port: int = 5005,
                  max_sessions: int | None = None, ready=None) -> None:
    """Serve ``frames_path`` to every client that connects.

    Returns after ``max_sessions`` clients have been served (forever when
    ``None``).  ``ready`` is called with the bound address once listening.
    """
    with ReplayServer(frames_path, rate, host, port) as server:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        log.info("replaying %d frames at %g Hz on %s:%d", len(server.lines), rate, *server.address)
        if ready is not None:
            ready(server.address)
        try:
            if max_sessions is None:
                thread.join()
            else:
                for _ in range(max_sessions):
                    server.sessions_done.acquire()
        finally:
            server.shutdown()


# ----------------------------------------------------------------- client --

def stream_client(host: str, port: int, geom: SensorGeometry, out,
                  robot_length: float = ROBOT_LENGTH, fmt: str = "%.6g", retries: int = 5,
                  retry_delay: float = 0.5, on_result=None, **options) -> Reconstructor:
    """Consume a frame stream and write reconstruction rows to ``out``.

    Connection failures and mid-stream resets are retried up to ``retries``
    times; after a reconnect, frames not newer than the last processed
    timestamp are dropped so replays from the start are not duplicated.
    End-of-stream after a complete line finishes the session; ending inside
    a line counts as a disconnect.
    """
    rec = Reconstructor(geom, robot_length, fmt, on_result, **options)
    out.write(CSV_HEADER + "\n")
    attempts = 0
    last_t = None
    while True:
        try:
            with socket.create_connection((host, port), timeout=10.0) as sock:
                sock.settimeout(None)
                reconnected = last_t is not None
                with sock.makefile("rb") as fh:
                    for lineno, line in enumerate(fh, start=1):
                        if not line.endswith(b"\n"):
                            raise ConnectionResetError("stream ended in the middle of a line")
                        if reconnected:
                            try:
                                t = parse_frame(line, geom.n_gratings, geom.n_cores).timestamp
                            except FrameError:
                                t = None
                            if t is not None and t <= last_t:
                                continue
                            reconnected = False
                        row = rec.process_line(line, lineno)
                        if row is not None:
                            out.write(row + "\n")
                            last_t = rec.results[-1].timestamp
                return rec
        except OSError as exc:
            attempts += 1
            if attempts > retries:
                log.error("giving up after %d attempts: %s", attempts, exc)
                raise
            log.warning("connection to %s:%d failed (%s); retry %d/%d", host, port, exc,
                        attempts, retries)
            time.sleep(retry_delay)
