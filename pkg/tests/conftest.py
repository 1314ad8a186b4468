from __future__ import annotations

import json
import sys
import threading
import urllib.error
import urllib.request

import pytest

from citybench.citygen import CityParams, generate_city
from citybench.config import ServiceConfig
from citybench.service import SimService, make_server


@pytest.fixture(scope="session")
def city7():
    """The default benchmark city; generation is pure so sharing is safe."""
    return generate_city(7)


@pytest.fixture(scope="session")
def small_city():
    return generate_city(3, CityParams(rows=2, cols=2, block_size=120.0))


class LiveService:
    def __init__(self, config: ServiceConfig, scene=None):
        self.service = SimService(config, scene=scene)
        self.server = make_server(self.service)
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()

    def request(self, method: str, path: str, body=None, headers=None):
        """(status, parsed json) without raising on HTTP errors."""
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(
            self.base + path, data=data, method=method,
            headers={"Content-Type": "application/json", **(headers or {})})
        try:
            with urllib.request.urlopen(req, timeout=30) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as e:
            return e.code, json.loads(e.read())

    def raw(self, path: str) -> bytes:
        with urllib.request.urlopen(self.base + path, timeout=30) as resp:
            return resp.read()

    def close(self):
        self.server.shutdown()
        self.service.close()
        self.server.server_close()


@pytest.fixture
def live_service_factory():
    """Yields a factory so tests can pick config; everything closes at teardown."""
    started = []

    def make(scene=None, **kwargs):
        kwargs.setdefault("port", 0)
        ls = LiveService(ServiceConfig(**kwargs), scene=scene)
        started.append(ls)
        return ls

    yield make
    for ls in started:
        ls.close()


@pytest.fixture(scope="session")
def shared_service(small_city):
    """One long-lived lockstep service for read-mostly protocol tests."""
    ls = LiveService(ServiceConfig(port=0, drones=2, vehicles=2), scene=small_city)
    yield ls
    ls.close()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance scorecard when that module ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in results:
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] {name}{suffix}")
