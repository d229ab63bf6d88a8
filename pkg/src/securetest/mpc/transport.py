"""Reliable, ordered, framed links between the three parties.

Both backends move complete frames, so byte counts are identical whether the
parties share a process or talk over TCP.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from collections import Counter
from typing import Mapping

from ..errors import DesyncError, TransportError
from .framing import HEADER_SIZE, MsgType, decode_frame, decode_header, encode_frame

DEFAULT_TIMEOUT = 120.0
_CLOSED = object()


class Transport:
    """Framing, sequence numbers and byte accounting on top of a raw frame link.

    Subclasses implement `_send_frame(to, frame)` and `_recv_frame(frm) -> bytes`.
    """

    def __init__(self, party_id: int, timeout: float = DEFAULT_TIMEOUT):
        self.party_id = party_id
        self.timeout = timeout
        self._send_seq: Counter = Counter()
        self._recv_seq: Counter = Counter()
        self.sent_bytes: Counter = Counter()  # (peer, msg_type) -> bytes
        self.recv_bytes: Counter = Counter()

    @property
    def peers(self) -> tuple[int, int]:
        return ((self.party_id + 1) % 3, (self.party_id + 2) % 3)

    def send(self, to: int, msg_type: MsgType, payload: bytes) -> None:
        if to not in self.peers:
            raise ValueError(f"party {self.party_id} has no link to {to}")
        frame = encode_frame(self.party_id, msg_type, self._send_seq[to], payload)
        self._send_seq[to] += 1
        self._send_frame(to, frame)
        self.sent_bytes[(to, int(msg_type))] += len(frame)

    def recv(self, frm: int, msg_type: MsgType) -> bytes:
        if frm not in self.peers:
            raise ValueError(f"party {self.party_id} has no link to {frm}")
        frame = self._recv_frame(frm)
        sender, mtype, seq, payload = decode_frame(frame)
        expected = self._recv_seq[frm]
        if sender != frm or mtype != msg_type or seq != expected:
            raise DesyncError(
                f"party {self.party_id} expected {MsgType(msg_type).name} #{expected} from {frm}, "
                f"got type {mtype} #{seq} from {sender}"
            )
        self._recv_seq[frm] += 1
        self.recv_bytes[(frm, int(msg_type))] += len(frame)
        return payload

    def bytes_sent_to(self, peer: int) -> int:
        return sum(v for (p, _), v in self.sent_bytes.items() if p == peer)

    def close(self) -> None:
        pass

    def _send_frame(self, to: int, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_frame(self, frm: int) -> bytes:
        raise NotImplementedError


class InProcessNetwork:
    """Six directed queues connecting three in-process parties."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.queues = {(s, d): queue.Queue() for s in range(3) for d in range(3) if s != d}
        self.timeout = timeout

    def transport(self, party_id: int) -> "InProcessTransport":
        return InProcessTransport(self, party_id, self.timeout)

    def abort(self) -> None:
        """Wake every blocked receiver with a transport error."""
        for q in self.queues.values():
            q.put(_CLOSED)


class InProcessTransport(Transport):
    def __init__(self, network: InProcessNetwork, party_id: int, timeout: float):
        super().__init__(party_id, timeout)
        self.network = network

    def _send_frame(self, to, frame):
        self.network.queues[(self.party_id, to)].put(frame)

    def _recv_frame(self, frm):
        try:
            item = self.network.queues[(frm, self.party_id)].get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"party {self.party_id}: timed out waiting for party {frm}") from None
        if item is _CLOSED:
            raise TransportError(f"party {self.party_id}: link from {frm} closed")
        return item


def make_inprocess_transports(timeout: float = DEFAULT_TIMEOUT):
    net = InProcessNetwork(timeout)
    return net, [net.transport(i) for i in range(3)]


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("connection closed by peer")
        buf.extend(chunk)
    return bytes(buf)


def _read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, HEADER_SIZE)
    length = decode_header(header)[0]
    return header + _read_exact(sock, length)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


class TcpTransport(Transport):
    """Full mesh over TCP.

    Party i dials every lower-numbered party and accepts connections from the
    higher-numbered ones.  An accepted socket is attributed to a peer by the
    sender id in the first frame it carries, which is always the handshake.
    One reader thread per link drains frames into a queue, so a send never
    blocks on a peer that is itself busy sending.
    """

    def __init__(self, party_id: int, listener: socket.socket, peers: Mapping[int, tuple[str, int]],
                 timeout: float = DEFAULT_TIMEOUT):
        super().__init__(party_id, timeout)
        self._socks: dict[int, socket.socket] = {}
        self._inbox = {p: queue.Queue() for p in self.peers}
        self._send_locks = {p: threading.Lock() for p in self.peers}
        deadline = time.monotonic() + timeout
        try:
            for peer in sorted(p for p in self.peers if p < party_id):
                self._socks[peer] = self._dial(peers[peer], deadline)
            expected = [p for p in self.peers if p > party_id]
            listener.settimeout(max(deadline - time.monotonic(), 0.1))
            for _ in expected:
                conn, _ = listener.accept()
                conn.settimeout(max(deadline - time.monotonic(), 0.1))
                first = _read_frame(conn)
                sender = first[4]
                if sender not in expected or sender in self._socks:
                    conn.close()
                    raise TransportError(f"party {party_id}: unexpected connection from party {sender}")
                conn.settimeout(None)
                self._socks[sender] = conn
                self._inbox[sender].put(first)
        except (OSError, socket.timeout) as exc:
            self.close()
            raise TransportError(f"party {party_id}: could not establish links: {exc}") from exc
        finally:
            listener.close()
        for peer, sock in self._socks.items():
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._reader, args=(peer, sock), daemon=True).start()

    @staticmethod
    def listen(address: tuple[str, int]) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(address)
        sock.listen(2)
        return sock

    @staticmethod
    def _dial(address: tuple[str, int], deadline: float) -> socket.socket:
        while True:
            try:
                return socket.create_connection(address, timeout=max(deadline - time.monotonic(), 0.1))
            except OSError:
                if time.monotonic() >= deadline:
                    raise
                time.sleep(0.05)

    def _reader(self, peer: int, sock: socket.socket) -> None:
        inbox = self._inbox[peer]
        try:
            while True:
                inbox.put(_read_frame(sock))
        except (OSError, TransportError):
            inbox.put(_CLOSED)

    def _send_frame(self, to, frame):
        try:
            with self._send_locks[to]:
                self._socks[to].sendall(frame)
        except OSError as exc:
            raise TransportError(f"party {self.party_id}: send to {to} failed: {exc}") from exc

    def _recv_frame(self, frm):
        try:
            item = self._inbox[frm].get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"party {self.party_id}: timed out waiting for party {frm}") from None
        if item is _CLOSED:
            raise TransportError(f"party {self.party_id}: link from {frm} closed")
        return item

    def close(self) -> None:
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        self._socks.clear()
