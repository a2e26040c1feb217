"""Pull-based manager/worker execution.

Workers ask for work, the manager generates a candidate on demand and hands
it out, and results ride along on the worker's next request. Every message
crosses the transport as a length-prefixed JSON frame, even in process.

Wire format: a 4-byte big-endian payload length followed by UTF-8 JSON::

    {"v": 1, "kind": "request", "worker_id": int, "prev_result": null | {
        "genome_hash": str, "mse": float, "eval_wall_time": float,
        "train_wall_time": float, "epochs_used": int, "status": str,
        "trained": null | str, "error": null | str}}
    {"v": 1, "kind": "assignment", "task_id": int, "genome": str,
     "mode": "bp_free" | "bp", "epochs": int, "lr": float, "seed": int}
    {"v": 1, "kind": "shutdown"}
"""
from __future__ import annotations

import json
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from .colony import Colony, RunConfig
from .errors import CantsError, FramingError, GenomeFormatError, MessageSchemaError, StructuralError
from .genome import RnnGenome, deserialize, serialize
from .rnn import WORST_FITNESS, FitnessReport, bptt_train, evaluate_mse, instantiate

log = logging.getLogger(__name__)

WIRE_VERSION = 1
_HEADER = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024


@dataclass(frozen=True)
class WorkResult:
    genome_hash: str
    report: FitnessReport
    trained: str | None = None  # serialized genome after local training (bp mode)
    error: str | None = None


@dataclass(frozen=True)
class WorkRequest:
    worker_id: int
    prev_result: WorkResult | None = None


@dataclass(frozen=True)
class WorkAssignment:
    task_id: int
    genome: str
    mode: str
    epochs: int
    lr: float
    seed: int


@dataclass(frozen=True)
class Shutdown:
    pass


Message = WorkRequest | WorkAssignment | Shutdown


# -- codec -----------------------------------------------------------------

def _payload(msg) -> dict:
    if isinstance(msg, WorkRequest):
        r = msg.prev_result
        prev = None
        if r is not None:
            rep = r.report
            prev = {
                "genome_hash": r.genome_hash,
                "mse": rep.mse,
                "eval_wall_time": rep.eval_wall_time,
                "train_wall_time": rep.train_wall_time,
                "epochs_used": rep.epochs_used,
                "status": rep.status,
                "trained": r.trained,
                "error": r.error,
            }
        return {"v": WIRE_VERSION, "kind": "request", "worker_id": msg.worker_id, "prev_result": prev}
    if isinstance(msg, WorkAssignment):
        return {
            "v": WIRE_VERSION, "kind": "assignment", "task_id": msg.task_id, "genome": msg.genome,
            "mode": msg.mode, "epochs": msg.epochs, "lr": msg.lr, "seed": msg.seed,
        }
    if isinstance(msg, Shutdown):
        return {"v": WIRE_VERSION, "kind": "shutdown"}
    raise MessageSchemaError(f"cannot encode {type(msg).__name__}")


def encode(msg) -> bytes:
    try:
        body = json.dumps(_payload(msg), separators=(",", ":"), allow_nan=False).encode("utf-8")
    except ValueError as exc:
        raise MessageSchemaError(f"message not encodable: {exc}") from None
    return _HEADER.pack(len(body)) + body


def _get(d: dict, key: str, kinds, nullable: bool = False):
    if key not in d:
        raise MessageSchemaError(f"missing field {key!r}")
    v = d[key]
    if v is None and nullable:
        return None
    if isinstance(v, bool) or not isinstance(v, kinds):
        raise MessageSchemaError(f"field {key!r} has wrong type {type(v).__name__}")
    return v


def _message(d) -> Message:
    if not isinstance(d, dict):
        raise MessageSchemaError("message must be a JSON object")
    if d.get("v") != WIRE_VERSION:
        raise MessageSchemaError(f"unsupported wire version {d.get('v')!r}")
    kind = d.get("kind")
    if kind == "shutdown":
        return Shutdown()
    if kind == "assignment":
        return WorkAssignment(
            _get(d, "task_id", int), _get(d, "genome", str), _get(d, "mode", str),
            _get(d, "epochs", int), float(_get(d, "lr", (int, float))), _get(d, "seed", int),
        )
    if kind == "request":
        prev = _get(d, "prev_result", dict, nullable=True)
        result = None
        if prev is not None:
            report = FitnessReport(
                float(_get(prev, "mse", (int, float))),
                float(_get(prev, "eval_wall_time", (int, float))),
                float(_get(prev, "train_wall_time", (int, float))),
                _get(prev, "epochs_used", int),
                _get(prev, "status", str),
            )
            result = WorkResult(
                _get(prev, "genome_hash", str), report,
                _get(prev, "trained", str, nullable=True), _get(prev, "error", str, nullable=True),
            )
        return WorkRequest(_get(d, "worker_id", int), result)
    raise MessageSchemaError(f"unknown message kind {kind!r}")


def decode(frame: bytes) -> Message:
    """Inverse of ``encode``; the frame must hold exactly one message."""
    if len(frame) < _HEADER.size:
        raise FramingError(f"frame too short for a length prefix ({len(frame)} bytes)")
    (n,) = _HEADER.unpack_from(frame)
    if n != len(frame) - _HEADER.size:
        raise FramingError(f"length prefix says {n} bytes, frame carries {len(frame) - _HEADER.size}")
    try:
        d = json.loads(frame[_HEADER.size:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MessageSchemaError(f"payload is not valid JSON: {exc}") from None
    return _message(d)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one frame from a stream; ``None`` on a clean close between frames."""
    head = _read_exact(sock, _HEADER.size, allow_eof=True)
    if head is None:
        return None
    (n,) = _HEADER.unpack(head)
    if n > MAX_FRAME:
        raise FramingError(f"frame of {n} bytes exceeds limit")
    return head + _read_exact(sock, n)


def _read_exact(sock, n: int, allow_eof: bool = False):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if allow_eof and not buf:
                return None
            raise FramingError(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


# -- evaluation --------------------------------------------------------------

class Evaluator:
    """Worker-side evaluation of one assignment against a fixed dataset."""

    def __init__(self, dataset):
        self.dataset = dataset

    def __call__(self, task: WorkAssignment) -> WorkResult:
        try:
            genome = deserialize(task.genome)
            inst = instantiate(genome)
        except (GenomeFormatError, StructuralError, KeyError, ValueError) as exc:
            log.warning("task %d unusable: %s", task.task_id, exc)
            return WorkResult("", FitnessReport(WORST_FITNESS, status="bad_genome"), None, str(exc))
        if task.mode == "bp":
            report = bptt_train(inst, self.dataset, task.epochs, task.lr)
            trained = serialize(inst.to_genome())
        else:
            report = evaluate_mse(inst, self.dataset)
            trained = None
        return WorkResult(genome.hash, report, trained)


# -- manager -----------------------------------------------------------------

@dataclass
class Outstanding:
    task_id: int
    genome: RnnGenome
    genome_hash: str
    gen_time: float
    deadline: float


class Manager:
    """Serializes every colony mutation; one outstanding task per worker."""

    def __init__(self, colony: Colony, cfg: RunConfig, timeout: float = 600.0, clock=time.monotonic):
        self.colony = colony
        self.cfg = cfg
        self.timeout = timeout
        self.clock = clock
        self.assigned = 0
        self.outstanding: dict[int, Outstanding] = {}
        self.stopped: set[int] = set()
        self.seen: set[int] = set()
        self.lost = 0
        self.late = 0

    @property
    def budget_spent(self) -> bool:
        return self.assigned >= self.cfg.iterations

    @property
    def finished(self) -> bool:
        return self.budget_spent and not self.outstanding

    def expire(self) -> int:
        now = self.clock()
        gone = [w for w, o in self.outstanding.items() if o.deadline <= now]
        for w in gone:
            log.warning("worker %d timed out on task %d; forgetting it", w, self.outstanding[w].task_id)
            del self.outstanding[w]
        self.lost += len(gone)
        return len(gone)

    def _apply(self, worker_id: int, result: WorkResult) -> None:
        task = self.outstanding.pop(worker_id, None)
        if task is None:
            self.late += 1
            return
        genome = task.genome
        if result.trained is not None:
            try:
                genome = deserialize(result.trained)
            except GenomeFormatError as exc:
                log.warning("discarding trained genome from worker %d: %s", worker_id, exc)
        self.colony.on_result(genome, result.report, task.genome_hash, task.gen_time)

    def handle(self, req: WorkRequest):
        self.seen.add(req.worker_id)
        if req.prev_result is not None:
            self._apply(req.worker_id, req.prev_result)
        else:
            # a fresh request means anything still held for this worker is dead
            if self.outstanding.pop(req.worker_id, None) is not None:
                self.lost += 1
        self.expire()
        if self.budget_spent:
            self.stopped.add(req.worker_id)
            return Shutdown()
        cand = self.colony.generate_candidate()
        task_id = self.assigned
        self.assigned += 1
        h = cand.genome.hash
        self.outstanding[req.worker_id] = Outstanding(
            task_id, cand.genome, h, cand.gen_time, self.clock() + self.timeout
        )
        return WorkAssignment(task_id, serialize(cand.genome), self.cfg.mode, self.cfg.epochs, self.cfg.lr, self.cfg.seed)

    def step(self, transport, timeout: float | None = 0.0) -> bool:
        """Serve at most one request; returns whether one was served."""
        msg = transport.recv(timeout)
        if msg is None:
            self.expire()
            return False
        if not isinstance(msg, WorkRequest):
            log.warning("manager ignoring unexpected %s", type(msg).__name__)
            return True
        transport.send(msg.worker_id, self.handle(msg))
        return True


def manager_loop(colony: Colony, transport, cfg: RunConfig, timeout: float = 600.0, poll: float = 0.05) -> Manager:
    """Serve requests until the budget is spent and in-flight work has drained."""
    mgr = Manager(colony, cfg, timeout)
    try:
        while not mgr.finished:
            mgr.step(transport, poll)
    finally:
        transport.close()
    return mgr


# -- worker ------------------------------------------------------------------

class Worker:
    def __init__(self, worker_id: int, endpoint, evaluator):
        self.id = worker_id
        self.endpoint = endpoint
        self.evaluator = evaluator
        self.pending: WorkResult | None = None
        self.awaiting = False
        self.stopped = False
        self.evaluations = 0

    def send_request(self) -> None:
        self.endpoint.send(WorkRequest(self.id, self.pending))
        self.pending = None
        self.awaiting = True

    def handle_reply(self, msg) -> None:
        self.awaiting = False
        if isinstance(msg, Shutdown):
            self.stopped = True
            return
        self.pending = self.evaluator(msg)
        self.evaluations += 1

    def step(self) -> bool:
        """Take the next action without blocking; False if nothing can happen yet."""
        if self.stopped:
            return False
        if not self.awaiting:
            self.send_request()
            return True
        if self.endpoint.ready():
            self.handle_reply(self.endpoint.recv())
            return True
        return False


def worker_loop(endpoint, evaluator, worker_id: int = 0) -> Worker:
    w = Worker(worker_id, endpoint, evaluator)
    while not w.stopped:
        w.send_request()
        w.handle_reply(endpoint.recv())
    return w


# -- transports ---------------------------------------------------------------

class InProcessEndpoint:
    def __init__(self, transport: "InProcessTransport", worker_id: int):
        self.transport = transport
        self.worker_id = worker_id
        self.inbox: queue.Queue[bytes] = queue.Queue()

    def send(self, msg) -> None:
        self.transport.inbox.put(encode(msg))

    def recv(self, timeout: float | None = None):
        return decode(self.inbox.get(timeout=timeout))

    def ready(self) -> bool:
        return not self.inbox.empty()


class InProcessTransport:
    def __init__(self):
        self.inbox: queue.Queue[bytes] = queue.Queue()
        self.endpoints: dict[int, InProcessEndpoint] = {}

    def endpoint(self, worker_id: int) -> InProcessEndpoint:
        ep = InProcessEndpoint(self, worker_id)
        self.endpoints[worker_id] = ep
        return ep

    def recv(self, timeout: float | None = None):
        try:
            frame = self.inbox.get(block=timeout != 0, timeout=timeout or None)
        except queue.Empty:
            return None
        return decode(frame)

    def pending(self) -> int:
        return self.inbox.qsize()

    def send(self, worker_id: int, msg) -> None:
        self.endpoints[worker_id].inbox.put(encode(msg))

    def close(self) -> None:
        # wake anybody still waiting so nothing blocks past the run
        for ep in self.endpoints.values():
            ep.inbox.put(encode(Shutdown()))


class TcpTransport:
    """Manager side of the TCP transport; one reader thread per connection."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.server = socket.create_server((host, port))
        self.address = self.server.getsockname()[:2]
        self.inbox: queue.Queue = queue.Queue()
        self.conns: dict[int, socket.socket] = {}
        self._all: list[socket.socket] = []
        self._lock = threading.Lock()
        self._closed = False
        threading.Thread(target=self._accept, daemon=True).start()

    def _accept(self) -> None:
        while not self._closed:
            try:
                conn, _ = self.server.accept()
            except OSError:
                return
            with self._lock:
                self._all.append(conn)
            threading.Thread(target=self._read, args=(conn,), daemon=True).start()

    def _read(self, conn) -> None:
        try:
            while True:
                frame = read_frame(conn)
                if frame is None:
                    return
                try:
                    msg = decode(frame)
                except MessageSchemaError as exc:
                    log.warning("dropping malformed message: %s", exc)
                    continue
                if isinstance(msg, WorkRequest):
                    with self._lock:
                        self.conns[msg.worker_id] = conn
                self.inbox.put(msg)
        except (OSError, FramingError) as exc:
            if not self._closed:
                log.warning("worker connection lost: %s", exc)

    def recv(self, timeout: float | None = None):
        try:
            return self.inbox.get(block=timeout != 0, timeout=timeout or None)
        except queue.Empty:
            return None

    def send(self, worker_id: int, msg) -> None:
        with self._lock:
            conn = self.conns.get(worker_id)
        if conn is None:
            return
        try:
            conn.sendall(encode(msg))
        except OSError as exc:
            log.warning("could not reach worker %d: %s", worker_id, exc)

    def close(self) -> None:
        self._closed = True
        with self._lock:
            conns = list(self._all)
        for c in conns:
            try:
                c.sendall(encode(Shutdown()))
            except OSError:
                pass
            c.close()
        self.server.close()


class TcpEndpoint:
    """Worker side of the TCP transport. A closed connection reads as Shutdown."""

    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        self.sock.settimeout(None)

    def send(self, msg) -> None:
        self.sock.sendall(encode(msg))

    def recv(self, timeout: float | None = None):
        try:
            frame = read_frame(self.sock)
        except (OSError, FramingError):
            return Shutdown()
        return Shutdown() if frame is None else decode(frame)

    def close(self) -> None:
        self.sock.close()


# -- drivers -----------------------------------------------------------------

@dataclass
class RunOutcome:
    manager: Manager
    wall_time: float
    worker_evaluations: list[int] = field(default_factory=list)


def run_in_process(colony: Colony, cfg: RunConfig, dataset, workers: int = 1, timeout: float = 600.0) -> RunOutcome:
    """Manager on this thread, ``workers`` worker threads on in-process channels."""
    if workers < 1:
        raise CantsError("worker count must be >= 1")
    t0 = time.perf_counter()
    transport = InProcessTransport()
    done: list[Worker] = []
    threads = []
    for wid in range(workers):
        ep = transport.endpoint(wid)
        t = threading.Thread(
            target=lambda ep=ep, wid=wid: done.append(worker_loop(ep, Evaluator(dataset), wid)),
            daemon=True,
        )
        threads.append(t)
        t.start()
    mgr = manager_loop(colony, transport, cfg, timeout)
    for t in threads:
        t.join(timeout=max(timeout, 1.0))
    return RunOutcome(mgr, time.perf_counter() - t0, sorted(w.evaluations for w in done))


def run_tcp(colony: Colony, cfg: RunConfig, host: str = "127.0.0.1", port: int = 0, timeout: float = 600.0,
            on_bound=None) -> RunOutcome:
    """Serve workers that connect over TCP; ``on_bound(address)`` fires once listening."""
    t0 = time.perf_counter()
    transport = TcpTransport(host, port)
    if on_bound is not None:
        on_bound(transport.address)
    mgr = manager_loop(colony, transport, cfg, timeout)
    return RunOutcome(mgr, time.perf_counter() - t0)

