"""Host side of the external-evaluator wire protocol.

A child process is spawned and spoken to over newline-delimited JSON on its
stdin/stdout: one message per line, numbers as IEEE-754 doubles in decimal,
child stderr passing straight through to the host's. After a hello/ready
handshake the host sends evaluate requests and matches fitness responses by
request id, so a conforming child may answer out of order. Aggregation of
per-seed measurements into a fitness value always happens on the host.

Message types::

    host -> child   {"type": "hello", "protocol_version": 1, "num_blocks": N}
    child -> host   {"type": "ready"}                      # may echo protocol_version
    host -> child   {"type": "evaluate", "protocol_version": 1, "request_id": k,
                     "genome": [...], "eta": [...], "generation": g,
                     "fold_index": f, "seeds": [...], "data_fraction": x}
    child -> host   {"type": "fitness", "request_id": k, "status": "ok"|"error",
                     "per_seed_accuracy": [...], "per_seed_loss": [...],
                     "message": null | "..."}
    host -> child   {"type": "shutdown"}

A request that times out is reported as an evaluation failure (the search
maps it to worst fitness) while the session stays usable; malformed traffic
or an unexpected child exit break the session, and the high-level evaluator
transparently reopens a fresh one on the next call.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

from .errors import EvaluationError, ProtocolError, SessionClosedError, SessionError
from .fitness import EvalContext, FitnessSpec, aggregate
from .genome import DEFAULT_WEIGHT_FUNCTION, Genome, WeightFunction, decode

__all__ = [
    "PROTOCOL_VERSION",
    "FitnessRequest",
    "FitnessResponse",
    "EvaluatorSession",
    "ExternalEvaluator",
    "session_open",
    "request_fitness",
]

log = logging.getLogger("biotune.extproto")

PROTOCOL_VERSION = 1
DEFAULT_HANDSHAKE_TIMEOUT = 5.0
DEFAULT_REQUEST_TIMEOUT = 60.0


@dataclass(frozen=True)
class FitnessRequest:
    request_id: int
    genome: tuple[float, ...]
    eta: tuple[float, ...]
    generation: int
    fold_index: int
    seeds: tuple[int, ...]
    data_fraction: float
    protocol_version: int = PROTOCOL_VERSION

    def to_message(self) -> dict:
        return {
            "type": "evaluate",
            "protocol_version": self.protocol_version,
            "request_id": self.request_id,
            "genome": list(self.genome),
            "eta": list(self.eta),
            "generation": self.generation,
            "fold_index": self.fold_index,
            "seeds": list(self.seeds),
            "data_fraction": self.data_fraction,
        }


@dataclass(frozen=True)
class FitnessResponse:
    request_id: int
    status: str
    per_seed_accuracy: tuple[float, ...] = ()
    per_seed_loss: tuple[float, ...] = ()
    message: str | None = None

    @classmethod
    def from_message(cls, msg: dict) -> "FitnessResponse":
        return cls(
            request_id=int(msg["request_id"]),
            status=str(msg.get("status", "error")),
            per_seed_accuracy=tuple(float(a) for a in msg.get("per_seed_accuracy") or ()),
            per_seed_loss=tuple(float(x) for x in msg.get("per_seed_loss") or ()),
            message=msg.get("message"),
        )


class _Pending:
    __slots__ = ("event", "response", "error")

    def __init__(self):
        self.event = threading.Event()
        self.response: FitnessResponse | None = None
        self.error: Exception | None = None


class EvaluatorSession:
    """One child evaluator process and its request/response bookkeeping.

    One writer and one reader thread per session; up to max_in_flight
    requests may be outstanding at once, matched back to their submitters by
    request id. Sessions are not meant to be shared across searches.
    """

    def __init__(
        self,
        command: str | Sequence[str],
        num_blocks: int,
        env: dict[str, str] | None = None,
        handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        max_in_flight: int = 1,
    ):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = argv
        self.num_blocks = num_blocks
        self.request_timeout = request_timeout
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._abandoned: set[int] = set()
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._next_id = 0
        self._broken: Exception | None = None
        self._closing = False
        self._ready = threading.Event()
        self._ready_error: Exception | None = None

        full_env = None
        if env:
            import os

            full_env = {**os.environ, **env}
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,  # child stderr flows through to host logs
                env=full_env,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SessionError(f"could not spawn evaluator {argv!r}: {exc}") from exc

        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._send({"type": "hello", "protocol_version": PROTOCOL_VERSION, "num_blocks": num_blocks})
        if not self._ready.wait(handshake_timeout):
            self.close(force=True)
            raise SessionError(f"evaluator {argv!r} did not complete the handshake in time")
        if self._ready_error is not None:
            self.close(force=True)
            raise self._ready_error

    # -- plumbing -----------------------------------------------------------

    def _send(self, msg: dict) -> None:
        line = json.dumps(msg)
        with self._write_lock:
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError, OSError) as exc:
                raise SessionClosedError("evaluator stdin is closed") from exc

    def _read_loop(self) -> None:
        try:
            for line in self._proc.stdout:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                except json.JSONDecodeError as exc:
                    self._fail(ProtocolError(f"malformed evaluator output: {line[:200]!r}"))
                    return
                self._dispatch(msg)
        except ValueError:
            pass  # stdout closed under us during shutdown
        if not self._ready.is_set():
            self._ready_error = SessionClosedError("evaluator exited before handshake")
            self._ready.set()
        self._fail(SessionClosedError("evaluator process exited"), quiet=self._closing)

    def _dispatch(self, msg: dict) -> None:
        kind = msg.get("type")
        if kind == "ready":
            version = msg.get("protocol_version", PROTOCOL_VERSION)
            if version != PROTOCOL_VERSION:
                self._ready_error = SessionError(
                    f"evaluator speaks protocol {version}, host speaks {PROTOCOL_VERSION}"
                )
            self._ready.set()
            return
        if kind == "fitness":
            try:
                response = FitnessResponse.from_message(msg)
            except (KeyError, TypeError, ValueError):
                self._fail(ProtocolError(f"unparseable fitness message: {msg!r}"))
                return
            with self._lock:
                pending = self._pending.pop(response.request_id, None)
                abandoned = pending is None and response.request_id in self._abandoned
                if abandoned:
                    self._abandoned.discard(response.request_id)
            if abandoned:
                return  # late answer to a timed-out request
            if pending is None:
                self._fail(
                    ProtocolError(f"response for unknown request_id {response.request_id}")
                )
                return
            pending.response = response
            pending.event.set()
            return
        self._fail(ProtocolError(f"unexpected message type {kind!r}"))

    def _fail(self, error: Exception, quiet: bool = False) -> None:
        with self._lock:
            if self._broken is None:
                self._broken = error
            waiters = list(self._pending.values())
            self._pending.clear()
        if not quiet and not isinstance(error, SessionClosedError):
            log.warning("evaluator session failed: %s", error)
        for pending in waiters:
            pending.error = error
            pending.event.set()

    # -- public API ---------------------------------------------------------

    @property
    def broken(self) -> Exception | None:
        return self._broken

    def next_request_id(self) -> int:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
        return rid

    def request_fitness(self, req: FitnessRequest) -> FitnessResponse:
        """Submit one request and wait for its response.

        Raises EvaluationError on per-request timeout (session stays alive)
        and SessionError subclasses once the session is broken.
        """
        if self._broken is not None:
            raise self._broken
        pending = _Pending()
        with self._lock:
            if req.request_id in self._pending:
                raise ValueError(f"request_id {req.request_id} already in flight")
            self._pending[req.request_id] = pending
        with self._slots:
            try:
                self._send(req.to_message())
            except SessionError:
                with self._lock:
                    self._pending.pop(req.request_id, None)
                raise
            if not pending.event.wait(self.request_timeout):
                with self._lock:
                    self._pending.pop(req.request_id, None)
                    self._abandoned.add(req.request_id)
                raise EvaluationError(
                    f"request {req.request_id} timed out after {self.request_timeout}s"
                )
        if pending.error is not None:
            raise pending.error
        return pending.response

    def close(self, force: bool = False) -> None:
        self._closing = True
        if not force and self._proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
            except SessionError:
                pass
        try:
            self._proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                if stream:
                    stream.close()
            except OSError:
                pass
        self._reader.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def session_open(
    command: str | Sequence[str],
    num_blocks: int,
    env: dict[str, str] | None = None,
    timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
    **kwargs,
) -> EvaluatorSession:
    """Spawn and handshake an evaluator child process."""
    return EvaluatorSession(command, num_blocks, env=env, handshake_timeout=timeout, **kwargs)


def request_fitness(session: EvaluatorSession, req: FitnessRequest) -> FitnessResponse:
    """Module-level alias for EvaluatorSession.request_fitness."""
    return session.request_fitness(req)


class ExternalEvaluator:
    """Search evaluator backed by an external child process.

    Builds protocol requests from (genome, context), validates responses,
    and aggregates per-seed measurements per the fitness spec. Session
    failures surface as EvaluationError (worst fitness upstream) and the
    next call reopens a fresh session, so a crashed child does not kill a
    running search.
    """

    def __init__(
        self,
        command: str | Sequence[str],
        num_blocks: int,
        fitness_spec: FitnessSpec | None = None,
        weight_function: WeightFunction = DEFAULT_WEIGHT_FUNCTION,
        base_lr: float = 0.05,
        env: dict[str, str] | None = None,
        handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        max_in_flight: int = 1,
    ):
        self.command = command
        self.num_blocks = num_blocks
        self.fitness_spec = fitness_spec or FitnessSpec()
        self.weight_function = weight_function
        self.base_lr = base_lr
        self.env = env
        self.handshake_timeout = handshake_timeout
        self.request_timeout = request_timeout
        self.max_in_flight = max_in_flight
        self._session: EvaluatorSession | None = None
        self._session_lock = threading.Lock()

    def _ensure_session(self) -> EvaluatorSession:
        with self._session_lock:
            if self._session is not None and self._session.broken is None:
                return self._session
            if self._session is not None:
                self._session.close(force=True)
                log.info("reopening evaluator session after failure")
            self._session = EvaluatorSession(
                self.command,
                self.num_blocks,
                env=self.env,
                handshake_timeout=self.handshake_timeout,
                request_timeout=self.request_timeout,
                max_in_flight=self.max_in_flight,
            )
            return self._session

    def __call__(self, genome: Genome, ctx: EvalContext) -> float:
        try:
            session = self._ensure_session()
        except SessionError as exc:
            raise EvaluationError(f"could not open evaluator session: {exc}") from exc
        cfg = decode(genome, self.weight_function, self.base_lr)
        req = FitnessRequest(
            request_id=session.next_request_id(),
            genome=tuple(float(g) for g in genome.genes),
            eta=tuple(float(e) for e in cfg.eta),
            generation=ctx.generation,
            fold_index=ctx.fold_index,
            seeds=ctx.seed_list,
            data_fraction=self.fitness_spec.data_fraction,
        )
        try:
            resp = session.request_fitness(req)
        except EvaluationError:
            raise
        except SessionError as exc:
            raise EvaluationError(f"evaluator session failed: {exc}") from exc
        if resp.status != "ok":
            raise EvaluationError(resp.message or "evaluator reported an error")
        n = len(req.seeds)
        if len(resp.per_seed_accuracy) != n or len(resp.per_seed_loss) != n:
            raise EvaluationError(
                f"evaluator returned {len(resp.per_seed_accuracy)} accuracies and "
                f"{len(resp.per_seed_loss)} losses for {n} seeds"
            )
        if any(not (0.0 <= a <= 1.0) for a in resp.per_seed_accuracy):
            raise EvaluationError("evaluator returned an accuracy outside [0, 1]")
        return aggregate(resp.per_seed_accuracy, resp.per_seed_loss, self.fitness_spec.variant)

    def close(self) -> None:
        with self._session_lock:
            if self._session is not None:
                self._session.close()
                self._session = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
