"""Out-of-process execution of notebook code cells.

One worker subprocess per executor; executions are serialized in submission
order, and interrupt is the only call allowed to overtake an in-flight execute.
"""

from __future__ import annotations

import json
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .errors import SpawnError, WorkerDead
from .notebook import Output

DEFAULT_TIMEOUT_MS = 120_000
GRACE_MS = 2_000


@dataclass
class ExecutionResult:
    status: str  # ok | error | interrupted | timeout
    outputs: list[Output] = field(default_factory=list)
    duration_ms: int = 0
    execution_count: int | None = None


class Executor:
    def __init__(self):
        self._proc: subprocess.Popen | None = None
        self._exec_lock = threading.Lock()   # serializes execute/reset
        self._write_lock = threading.Lock()
        self._next_id = 0
        self._spawn()

    def _spawn(self) -> None:
        try:
            self._proc = subprocess.Popen(
                [sys.executable, "-u", "-m", "capy.worker"],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as exc:
            raise SpawnError(str(exc)) from exc

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _send(self, message: dict) -> None:
        if not self._alive():
            raise WorkerDead("worker process is not running")
        try:
            with self._write_lock:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise WorkerDead(str(exc)) from exc

    def execute(self, source: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> ExecutionResult:
        """Run source in the persistent worker namespace, capturing outputs."""
        with self._exec_lock:
            self._next_id += 1
            request_id = self._next_id
            self._send({"op": "exec", "id": request_id, "code": source,
                        "timeout_ms": timeout_ms})
            outputs: list[Output] = []
            execution_count = None
            deadline = time.monotonic() + (timeout_ms + GRACE_MS) / 1000.0
            while True:
                if time.monotonic() > deadline:
                    self._kill()
                    raise WorkerDead("worker missed the execution deadline")
                line = self._proc.stdout.readline()
                if not line:
                    raise WorkerDead("worker closed its event stream")
                try:
                    event = json.loads(line)
                except ValueError:
                    continue
                if event.get("id") != request_id:
                    continue
                kind = event.get("event")
                if kind == "stream":
                    name = event.get("name", "stdout")
                    out = Output.stream(name, event.get("text", ""))
                    # coalesce consecutive writes to the same stream
                    if outputs and outputs[-1].kind == out.kind:
                        merged = Output.stream(name, outputs[-1].text + out.text)
                        outputs[-1] = merged
                    else:
                        outputs.append(out)
                elif kind == "display":
                    out = Output.rich(event.get("mime", "text/plain"),
                                      event.get("data", ""),
                                      execute_result=event.get("execute_result", False),
                                      execution_count=event.get("execution_count"))
                    if event.get("execute_result"):
                        execution_count = event.get("execution_count")
                    outputs.append(out)
                elif kind == "error":
                    outputs.append(Output.error(event.get("ename", ""),
                                                event.get("evalue", ""),
                                                event.get("traceback", [])))
                elif kind == "done":
                    return ExecutionResult(status=event.get("status", "error"),
                                           outputs=outputs,
                                           duration_ms=event.get("duration_ms", 0),
                                           execution_count=execution_count)

    def interrupt(self) -> None:
        """Ask the worker to abort any in-flight execution. Idempotent."""
        self._send({"op": "interrupt"})

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except OSError:
                pass

    def reset(self) -> None:
        """Terminate the worker (dead or alive) and start a fresh one."""
        with self._exec_lock:
            self._kill()
            self._spawn()

    def close(self) -> None:
        self._kill()
