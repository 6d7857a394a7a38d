"""Simulators running in a child process, spoken to over newline-delimited JSON.

Protocol (one JSON object per line, UTF-8)::

    -> {"type": "hello", "d_theta": K, "d_s": D, "n": N}
    <- {"type": "ready"}
    -> {"type": "sim", "id": I, "theta": [...], "seed": U64, "n": N}
    <- {"type": "sum", "id": I, "summary": [...]}
    -> {"type": "bye"}            (then stdin is closed)

Requests are strictly serialised and never retried. Any deviation raises
:class:`ProtocolError` carrying the tail of the child's stderr.
"""

from __future__ import annotations

import collections
import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .core import Prior, SimulatorModel

__all__ = ["ProtocolError", "ExternalSimulatorSpec", "ExternalSimulator", "external_simulate"]

_EOF = object()


class ProtocolError(RuntimeError):
    """The child process broke the wire protocol, timed out or exited."""


@dataclass(frozen=True)
class ExternalSimulatorSpec:
    command: tuple[str, ...]
    d_theta: int
    d_s: int
    n: int
    timeout: float = 10.0

    def __post_init__(self):
        cmd = shlex.split(self.command) if isinstance(self.command, str) else tuple(self.command)
        if not cmd:
            raise ValueError("external simulator command is empty")
        object.__setattr__(self, "command", tuple(cmd))
        if self.d_theta < 1 or self.d_s < 1 or self.n < 1:
            raise ValueError("external simulator dimensions d_theta, d_s and n must be >= 1")
        if not self.timeout > 0:
            raise ValueError(f"handshake timeout must be positive, got {self.timeout}")


class ExternalSimulator(SimulatorModel):
    """A :class:`SimulatorModel` backed by a child process.

    The child is launched and handshaken on construction; use as a context
    manager or call :meth:`close`. ``prior`` is required because the child
    declares none.
    """

    def __init__(self, spec: ExternalSimulatorSpec, prior: Prior | None = None):
        self.spec = spec
        self.name = f"external:{' '.join(spec.command)}"
        self.d_theta, self.d_s, self.n = spec.d_theta, spec.d_s, spec.n
        self._prior = prior
        self._next_id = 0
        self._stderr = collections.deque(maxlen=50)
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                list(spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot launch external simulator {spec.command}: {exc}") from exc
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        try:
            self._send({"type": "hello", "d_theta": spec.d_theta, "d_s": spec.d_s, "n": spec.n})
            reply = self._receive(spec.timeout)
            if reply.get("type") != "ready":
                raise self._error(f"handshake expected {{'type': 'ready'}}, got {reply}")
        except ProtocolError:
            self.kill()
            raise

    # -- plumbing ---------------------------------------------------------

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr.append(line.rstrip("\n"))

    def _error(self, message: str) -> ProtocolError:
        tail = "\n".join(self._stderr)
        return ProtocolError(f"{message}" + (f"\n--- child stderr ---\n{tail}" if tail else ""))

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise self._error(f"cannot write to external simulator: {exc}") from None

    def _receive(self, timeout: float) -> dict:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise self._error(f"external simulator did not reply within {timeout} s") from None
        if line is _EOF:
            code = self._proc.poll()
            raise self._error(f"external simulator closed its output (exit code {code})")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise self._error(f"malformed reply from external simulator: {line.strip()!r}") from None
        if not isinstance(obj, dict):
            raise self._error(f"reply is not a JSON object: {line.strip()!r}")
        return obj

    # -- SimulatorModel ---------------------------------------------------

    def simulate(self, theta, seed: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.d_theta:
            raise ValueError(f"theta has length {theta.shape[0]}, simulator expects {self.d_theta}")
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            self._send({"type": "sim", "id": rid, "theta": theta.tolist(), "seed": int(seed), "n": self.n})
            reply = self._receive(self.spec.timeout)
        if reply.get("type") != "sum":
            raise self._error(f"expected a 'sum' reply to request {rid}, got {reply}")
        if reply.get("id") != rid:
            raise self._error(f"reply id {reply.get('id')!r} does not match request id {rid}")
        summary = reply.get("summary")
        if not isinstance(summary, list):
            raise self._error(f"reply to request {rid} has no summary list")
        if len(summary) != self.d_s:
            raise self._error(f"summary has length {len(summary)}, expected {self.d_s}")
        try:
            return np.array(summary, dtype=np.float64)
        except (TypeError, ValueError):
            raise self._error(f"summary for request {rid} is not numeric: {summary}") from None

    def default_prior(self) -> Prior:
        if self._prior is None:
            raise ValueError("external simulators declare no prior; configure one explicitly")
        return self._prior

    # -- lifecycle --------------------------------------------------------

    def close(self, timeout: float = 5.0) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"})
                self._proc.stdin.close()
            except (ProtocolError, OSError):
                pass
            try:
                self._proc.wait(timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_simulate(sim: ExternalSimulator, theta, seed: int) -> np.ndarray:
    return sim.simulate(theta, seed)
