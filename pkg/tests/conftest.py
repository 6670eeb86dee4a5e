import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from flocwatch import nn, simulator
from flocwatch.dataset import load_csv

ROOT = Path(__file__).resolve().parents[1]
TABLE3 = ROOT / "data" / "table3.csv"
TESTDATA = ROOT / "testdata"


class CountingReceiver:
    """Local webhook endpoint that records every request it sees."""

    def __init__(self, status=200):
        self.status = status
        self.requests = []
        self._lock = threading.Lock()
        receiver = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with receiver._lock:
                    receiver.requests.append({"headers": dict(self.headers), "body": body})
                self.send_response(receiver.status)
                self.end_headers()

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/hook"

    def payloads(self):
        with self._lock:
            return [json.loads(r["body"]) for r in self.requests]

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def receiver():
    r = CountingReceiver()
    yield r
    r.close()


@pytest.fixture(scope="session")
def table3():
    return load_csv(TABLE3)


@pytest.fixture(scope="session")
def synthetic():
    return simulator.gen_labeled(2000, seed=0)


@pytest.fixture(scope="session")
def synthetic_model(synthetic):
    params, report = nn.train(synthetic, nn.TrainConfig(seed=7))
    return params, report


@pytest.fixture(scope="session")
def synthetic_model_file(synthetic_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "synthetic.json"
    nn.save_model(synthetic_model[0], path)
    return path
