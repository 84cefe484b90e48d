from __future__ import annotations

import ipaddress
import json
from pathlib import Path

import numpy as np
import pytest

from genai_traffic.flows import Content, LabelMap, apply_labels, assemble_biflows
from genai_traffic.pcapio import IpProto, PacketRecord

DATA = Path(__file__).parent / "data"
T0 = 1_700_000_000_000_000


@pytest.fixture(scope="session")
def rfc_vectors() -> dict:
    return json.loads((DATA / "rfc9001_initial.json").read_text())


def rec(ts_us, src, dst, payload=b"", proto=IpProto.TCP, wire_len=None):
    """Record with the wire length write_capture synthesizes."""
    sa, sp = src
    da, dp = dst
    sa, da = ipaddress.ip_address(sa), ipaddress.ip_address(da)
    hdr = 14 + (20 if sa.version == 4 else 40) + (20 if proto == IpProto.TCP else 8)
    return PacketRecord(ts_us, sa, da, IpProto(proto), sp, dp, len(payload), bytes(payload),
                        hdr + len(payload) if wire_len is None else wire_len)


def labeled(packets, app="app.x", content=Content.TEXT, source="cap.pcap"):
    """Assemble and label every biflow with one app."""
    flows = assemble_biflows(packets, source_path=source)
    entries = {f.server: app for f in flows}
    return apply_labels(flows, LabelMap(entries, app, content))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.setdefault(marker.args[0], []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}")
