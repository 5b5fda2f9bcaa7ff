"""Shared fixtures built on the wire_stub protocol server.

Also hosts the acceptance-gate reporter, which prints one PASS/FAIL line per
criterion registered in test_acceptance.py directly on the terminal.
"""

from __future__ import annotations

import sys

import pytest
from wire_stub import StubServer


class _AcceptanceGateReporter:
    """Emit one PASS/FAIL terminal line per acceptance criterion."""

    def __init__(self, config):
        self._config = config
        self._done: set[str] = set()

    def _emit(self, line):
        reporter = self._config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.ensure_newline()
            reporter.write_line(line)
        else:
            print(line)

    def pytest_runtest_logreport(self, report):
        module_id, _, test_id = report.nodeid.rpartition("::")
        if not module_id.endswith("test_acceptance.py"):
            return
        module = sys.modules.get("test_acceptance")
        label = getattr(module, "CRITERIA", {}).get(test_id.split("[")[0])
        if label is None or report.nodeid in self._done:
            return
        if report.when == "call" or report.failed or report.skipped:
            self._done.add(report.nodeid)
            ok = report.when == "call" and report.passed
            self._emit(f"{'PASS' if ok else 'FAIL'}  {label}")


def pytest_configure(config):
    config.pluginmanager.register(_AcceptanceGateReporter(config), "acceptance-gate")


@pytest.fixture
def stub_server():
    """Factory fixture: start stub servers that are torn down after the test."""
    servers = []

    def _start(app):
        server = StubServer(app).start()
        servers.append(server)
        return server

    yield _start
    for server in servers:
        server.stop()


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    """Point the response cache at a throwaway directory via the env override."""
    path = tmp_path / "cache"
    monkeypatch.setenv("REFCHECK_CACHE_DIR", str(path))
    return path
