"""Execution worker wire protocol, exercised over a real subprocess."""

import json
import subprocess
import sys
import time

import pytest


class WorkerClient:
    def __init__(self):
        self.proc = subprocess.Popen(
            [sys.executable, "-u", "-m", "capy.worker"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True)
        self.next_id = 0

    def send(self, message):
        self.proc.stdin.write(json.dumps(message) + "\n")
        self.proc.stdin.flush()

    def exec(self, code, timeout_ms=10_000):
        """Send an exec request and collect its events through done."""
        self.next_id += 1
        request_id = self.next_id
        self.send({"op": "exec", "id": request_id, "code": code,
                   "timeout_ms": timeout_ms})
        return request_id, self.collect(request_id)

    def collect(self, request_id):
        events = []
        while True:
            line = self.proc.stdout.readline()
            assert line, "worker closed its event stream"
            event = json.loads(line)
            events.append(event)
            if event["event"] == "done":
                return events

    def close(self):
        self.proc.kill()
        self.proc.wait()


@pytest.fixture
def worker():
    client = WorkerClient()
    yield client
    client.close()


def stream_text(events, name="stdout"):
    return "".join(e["text"] for e in events
                   if e["event"] == "stream" and e.get("name") == name)


def done(events):
    assert events[-1]["event"] == "done"
    return events[-1]


def test_print_streams_and_done(worker):
    request_id, events = worker.exec("print('hi')")
    assert stream_text(events) == "hi\n"
    d = done(events)
    assert d["status"] == "ok"
    assert isinstance(d["duration_ms"], int)
    assert all(e["id"] == request_id for e in events)
    assert sum(1 for e in events if e["event"] == "done") == 1


def test_trailing_expression_display(worker):
    _, events = worker.exec("import math\nmath.sqrt(2)")
    displays = [e for e in events if e["event"] == "display"]
    assert len(displays) == 1
    assert displays[0]["mime"] == "text/plain"
    assert displays[0]["data"] == "1.4142135623730951"
    assert displays[0]["execute_result"] is True
    assert displays[0]["execution_count"] == 1
    assert done(events)["status"] == "ok"


def test_execution_count_increments(worker):
    _, events1 = worker.exec("1+1")
    _, events2 = worker.exec("2+2")
    counts = [e["execution_count"] for events in (events1, events2)
              for e in events if e["event"] == "display"]
    assert counts == [1, 2]


def test_trailing_none_produces_no_display(worker):
    _, events = worker.exec("print('x')")
    assert not [e for e in events if e["event"] == "display"]


def test_namespace_persists(worker):
    _, events = worker.exec("x = 5")
    assert done(events)["status"] == "ok"
    _, events = worker.exec("x * 2")
    displays = [e for e in events if e["event"] == "display"]
    assert displays[0]["data"] == "10"


def test_error_event(worker):
    _, events = worker.exec("1/0")
    errors = [e for e in events if e["event"] == "error"]
    assert len(errors) == 1
    assert errors[0]["ename"] == "ZeroDivisionError"
    assert errors[0]["evalue"] == "division by zero"
    assert isinstance(errors[0]["traceback"], list)
    assert done(events)["status"] == "error"


def test_syntax_error_reported(worker):
    _, events = worker.exec("def broken(:")
    errors = [e for e in events if e["event"] == "error"]
    assert errors[0]["ename"] == "SyntaxError"
    assert done(events)["status"] == "error"


def test_worker_survives_errors(worker):
    worker.exec("raise RuntimeError('boom')")
    _, events = worker.exec("'still alive'")
    assert done(events)["status"] == "ok"


def test_stderr_stream(worker):
    _, events = worker.exec("import sys\nsys.stderr.write('warn\\n')")
    assert stream_text(events, "stderr") == "warn\n"


def test_shell_escape(worker):
    _, events = worker.exec("!echo hi")
    assert stream_text(events) == "hi\n"
    assert done(events)["status"] == "ok"


def test_shell_escape_preserves_surrounding_code(worker):
    _, events = worker.exec("n = 2\n!echo shell-line\nn * 3")
    assert stream_text(events) == "shell-line\n"
    displays = [e for e in events if e["event"] == "display"]
    assert displays[0]["data"] == "6"


def test_timeout_status(worker):
    start = time.monotonic()
    _, events = worker.exec("import time\ntime.sleep(30)", timeout_ms=300)
    assert done(events)["status"] == "timeout"
    assert time.monotonic() - start < 5


def test_interrupt_infinite_loop(worker):
    worker.next_id += 1
    request_id = worker.next_id
    worker.send({"op": "exec", "id": request_id,
                 "code": "while True:\n    pass", "timeout_ms": 60_000})
    time.sleep(0.3)
    start = time.monotonic()
    worker.send({"op": "interrupt"})
    events = worker.collect(request_id)
    assert time.monotonic() - start < 2
    assert done(events)["status"] == "interrupted"


def test_interrupt_while_idle_is_ignored(worker):
    worker.send({"op": "interrupt"})
    time.sleep(0.2)
    _, events = worker.exec("'fine'")
    assert done(events)["status"] == "ok"


def test_state_survives_interrupt(worker):
    worker.exec("counter = 7")
    worker.next_id += 1
    request_id = worker.next_id
    worker.send({"op": "exec", "id": request_id,
                 "code": "while True:\n    pass", "timeout_ms": 60_000})
    time.sleep(0.2)
    worker.send({"op": "interrupt"})
    worker.collect(request_id)
    _, events = worker.exec("counter")
    displays = [e for e in events if e["event"] == "display"]
    assert displays[0]["data"] == "7"
