"""Transports backed by a :class:`FixtureUniverse`."""

from __future__ import annotations

import contextlib
import socket
import socketserver
import struct
import threading
from typing import Iterator

from dnsaudit.sim.universe import FixtureUniverse
from dnsaudit.wire import SocketTransport


class SimTransport:
    """Answers in-process; no sockets, zero latency, fully deterministic."""

    simulated = True

    def __init__(self, universe: FixtureUniverse):
        self.universe = universe

    def exchange(self, server, payload, *, tcp, timeout, stream=False):
        return self.universe.handle(server, payload, tcp)


class _UDPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        replies = self.server.universe.handle(self.server.fixture_address, data, tcp=False)
        if replies:
            sock.sendto(replies[0], self.client_address)


class _TCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        self.request.settimeout(5.0)
        try:
            head = self.request.recv(2)
            if len(head) < 2:
                return
            (length,) = struct.unpack("!H", head)
            data = b""
            while len(data) < length:
                chunk = self.request.recv(length - len(data))
                if not chunk:
                    return
                data += chunk
            replies = self.server.universe.handle(self.server.fixture_address, data, tcp=True) or []
            for reply in replies:
                self.request.sendall(struct.pack("!H", len(reply)) + reply)
        except OSError:
            return


class _UDPServer(socketserver.ThreadingUDPServer):
    daemon_threads = True
    allow_reuse_address = True


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def _free_port(host: str) -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


@contextlib.contextmanager
def serve_loopback(universe: FixtureUniverse, host: str = "127.0.0.1") -> Iterator[dict[str, tuple[str, int]]]:
    """Serve every fixture address on its own loopback port.

    Yields the address -> (host, port) map to hand to :class:`SocketTransport`.
    Disabled transports are simply not bound, so clients see a refused
    connection (TCP) or an ICMP port-unreachable (UDP).
    """
    port_map: dict[str, tuple[str, int]] = {}
    servers: list[socketserver.BaseServer] = []
    try:
        for address, fixture in sorted(universe.by_address.items()):
            for _ in range(20):
                port = _free_port(host)
                try:
                    bound = []
                    if fixture.tcp_enabled:
                        bound.append(_TCPServer((host, port), _TCPHandler))
                    if fixture.udp_enabled:
                        bound.append(_UDPServer((host, port), _UDPHandler))
                except OSError:
                    for srv in bound:
                        srv.server_close()
                    continue
                break
            else:
                raise OSError(f"could not bind a loopback port for {address}")
            for srv in bound:
                srv.universe = universe
                srv.fixture_address = address
                threading.Thread(target=srv.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True).start()
                servers.append(srv)
            port_map[address] = (host, port)
        yield port_map
    finally:
        # shutdown() waits out a poll interval; stop all servers at once
        stoppers = [threading.Thread(target=srv.shutdown) for srv in servers]
        for t in stoppers:
            t.start()
        for t in stoppers:
            t.join()
        for srv in servers:
            srv.server_close()


def loopback_transport(port_map: dict[str, tuple[str, int]]) -> SocketTransport:
    return SocketTransport(port_map=port_map, strict=True)
