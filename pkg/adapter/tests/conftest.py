from __future__ import annotations

import socket
import threading
import time

import pytest
import uvicorn

from cotseg_adapter.service import create_app
from cotseg_adapter.training import finetune


def make_toy_records(n=50):
    rows = []
    for i in range(n):
        a, b = i % 7, (i * 3) % 5
        rows.append(
            {"input": f"{a} plus {b}|", "target": f"sum is {a + b}.<STOP>"}
        )
    return rows


class ServerThread:
    def __init__(self, app):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        self.port = sock.getsockname()[1]
        sock.close()
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def __enter__(self):
        self.thread.start()
        deadline = time.monotonic() + 15
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("uvicorn did not start")
            time.sleep(0.01)
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=5)


@pytest.fixture(scope="session")
def toy_records():
    return make_toy_records(50)


@pytest.fixture(scope="session")
def trained():
    records = make_toy_records(50)
    model, vocab, log_rows = finetune(
        records, epochs=4, batch_size=16, lr=5e-3, seed=3, max_length=256
    )
    return model, vocab, log_rows


@pytest.fixture(scope="session")
def served(trained):
    model, _, _ = trained
    app = create_app(model, identity="tiny-gru:test", fine_tuned=True)
    with ServerThread(app) as server:
        yield server
