"""Execution worker: persistent interpreter behind a line-delimited JSON protocol.

Requests on stdin:  {"op":"exec","id":n,"code":s,"timeout_ms":t} | {"op":"interrupt"}
Events on stdout:   {"id":n,"event":"stream"|"display"|"error"|"done", ...}

Runs as `python -m capy.worker`. One namespace lives across requests; lines
beginning with "!" run as shell commands; new matplotlib figures are captured
as base64 PNG display events after each exec.
"""

from __future__ import annotations

import ast
import base64
import io
import json
import os
import queue
import signal
import subprocess
import sys
import threading
import time
import traceback as tb_module

os.environ.setdefault("MPLBACKEND", "Agg")

_proto = sys.stdout
_proto_lock = threading.Lock()


def _emit(event: dict) -> None:
    with _proto_lock:
        _proto.write(json.dumps(event) + "\n")
        _proto.flush()


class _StreamWriter(io.TextIOBase):
    def __init__(self, name: str, request_id_ref: dict):
        self.name = name
        self.request_id_ref = request_id_ref

    def writable(self) -> bool:
        return True

    def write(self, text: str) -> int:
        if text:
            _emit({"id": self.request_id_ref["id"], "event": "stream",
                   "name": self.name, "text": text})
        return len(text)


def _rewrite_shell_lines(code: str) -> str:
    lines = []
    for line in code.split("\n"):
        stripped = line.lstrip()
        if stripped.startswith("!"):
            indent = line[:len(line) - len(stripped)]
            lines.append(f"{indent}__capy_shell__({stripped[1:]!r})")
        else:
            lines.append(line)
    return "\n".join(lines)


def _capy_shell(command: str) -> None:
    proc = subprocess.run(command, shell=True, capture_output=True, text=True)
    if proc.stdout:
        sys.stdout.write(proc.stdout)
    if proc.stderr:
        sys.stderr.write(proc.stderr)


def _capture_figures(request_id: int) -> None:
    if "matplotlib" not in sys.modules:
        return
    try:
        import matplotlib.pyplot as plt
    except Exception:
        return
    for num in plt.get_fignums():
        buf = io.BytesIO()
        try:
            plt.figure(num).savefig(buf, format="png")
        except Exception:
            continue
        _emit({"id": request_id, "event": "display", "mime": "image/png",
               "data": base64.b64encode(buf.getvalue()).decode()})
    plt.close("all")


class Worker:
    def __init__(self):
        self.namespace: dict = {"__name__": "__main__", "__capy_shell__": _capy_shell}
        self.requests: queue.Queue = queue.Queue()
        self.executing = threading.Event()
        self.interrupt_flag = {"timeout": False}
        self.execution_count = 0
        self.current = {"id": 0}
        self._done_emitted = False

    def reader(self) -> None:
        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
            except ValueError:
                continue
            if req.get("op") == "interrupt":
                if self.executing.is_set():
                    self.interrupt_flag["timeout"] = False
                    os.kill(os.getpid(), signal.SIGINT)
            else:
                self.requests.put(req)
        self.requests.put(None)  # EOF

    def _timeout_fire(self) -> None:
        if self.executing.is_set():
            self.interrupt_flag["timeout"] = True
            os.kill(os.getpid(), signal.SIGINT)

    def run_exec(self, req: dict) -> None:
        request_id = req.get("id", 0)
        self._done_emitted = False
        self.current["id"] = request_id
        code = req.get("code", "")
        timeout_ms = req.get("timeout_ms", 120_000)
        status = "ok"
        timer = threading.Timer(timeout_ms / 1000.0, self._timeout_fire)
        start = time.monotonic()
        old_stdout, old_stderr = sys.stdout, sys.stderr
        sys.stdout = _StreamWriter("stdout", self.current)
        sys.stderr = _StreamWriter("stderr", self.current)
        self.executing.set()
        timer.start()
        try:
            tree = ast.parse(_rewrite_shell_lines(code))
            trailing_expr = None
            if tree.body and isinstance(tree.body[-1], ast.Expr):
                trailing_expr = ast.Expression(tree.body.pop(-1).value)
            if tree.body:
                exec(compile(tree, "<cell>", "exec"), self.namespace)
            if trailing_expr is not None:
                value = eval(compile(trailing_expr, "<cell>", "eval"), self.namespace)
                if value is not None:
                    self.execution_count += 1
                    _emit({"id": request_id, "event": "display",
                           "mime": "text/plain", "data": repr(value),
                           "execute_result": True,
                           "execution_count": self.execution_count})
        except KeyboardInterrupt:
            status = "timeout" if self.interrupt_flag["timeout"] else "interrupted"
        except BaseException as exc:  # noqa: BLE001 - user code may raise anything
            status = "error"
            _emit({"id": request_id, "event": "error",
                   "ename": type(exc).__name__, "evalue": str(exc),
                   "traceback": tb_module.format_exception(type(exc), exc,
                                                           exc.__traceback__)})
        finally:
            timer.cancel()
            self.executing.clear()
            sys.stdout, sys.stderr = old_stdout, old_stderr
        try:
            _capture_figures(request_id)
        except Exception:
            pass
        self._done_emitted = True
        _emit({"id": request_id, "event": "done", "status": status,
               "duration_ms": int((time.monotonic() - start) * 1000)})

    def serve(self) -> None:
        threading.Thread(target=self.reader, daemon=True).start()
        while True:
            try:
                req = self.requests.get()
            except KeyboardInterrupt:
                continue  # stray interrupt between requests
            if req is None:
                return
            try:
                self.run_exec(req)
            except KeyboardInterrupt:
                # interrupt landed just outside the guarded region
                if not self._done_emitted:
                    _emit({"id": req.get("id", 0), "event": "done",
                           "status": "interrupted", "duration_ms": 0})


def main() -> None:
    worker = Worker()
    try:
        worker.serve()
    except Exception as exc:  # internal crash: report, then die loudly
        _emit({"id": worker.current["id"], "event": "error",
               "ename": type(exc).__name__, "evalue": str(exc),
               "traceback": tb_module.format_exception(type(exc), exc,
                                                       exc.__traceback__)})
        sys.exit(1)


if __name__ == "__main__":
    main()
