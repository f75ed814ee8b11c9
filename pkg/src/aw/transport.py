"""Line-oriented channels between parties.

A link is any callable taking one request line and returning one reply
line. In-process links are plain functions; ``serve_tcp`` and ``TcpLink``
carry the same lines over a local socket, one line per message.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from typing import Callable

Handler = Callable[[str], str]


def recording_link(handler: Handler, log: list[tuple[str, str]]) -> Handler:
    """Wrap ``handler`` so every (request, reply) pair is appended to ``log``."""

    def link(line: str) -> str:
        reply = handler(line)
        log.append((line, reply))
        return reply

    return link


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        for raw in self.rfile:
            reply = self.server.line_handler(raw.decode("utf-8").rstrip("\n"))
            self.wfile.write(reply.encode("utf-8") + b"\n")
            self.wfile.flush()


class LineServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0) -> None:
        super().__init__((host, port), _LineHandler)
        # One logical thread per party: requests are serialized.
        lock = threading.Lock()

        def locked(line: str) -> str:
            with lock:
                return handler(line)

        self.line_handler = locked

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]


def serve_tcp(handler: Handler, host: str = "127.0.0.1", port: int = 0) -> LineServer:
    server = LineServer(handler, host, port)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


class TcpLink:
    def __init__(self, address: tuple[str, int], timeout: float = 30.0) -> None:
        self._sock = socket.create_connection(address, timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def __call__(self, line: str) -> str:
        if "\n" in line:
            raise ValueError("a message must fit on one line")
        self._file.write(line.encode("utf-8") + b"\n")
        self._file.flush()
        reply = self._file.readline()
        if not reply:
            raise ConnectionError("peer closed the channel")
        return reply.decode("utf-8").rstrip("\n")

    def close(self) -> None:
        self._file.close()
        self._sock.close()
