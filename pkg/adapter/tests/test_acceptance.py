"""Adapter acceptance: protocol conformance against the reference worker."""

from __future__ import annotations

import json
import time

from conftest import adapter_cmd, golden_lines, primary_mock_cmd, replay


def test_protocol_conformance_criterion(tmp_path):
    start = time.monotonic()
    failed = None
    try:
        lines = golden_lines()
        assert len(lines) == 20
        reference = replay(primary_mock_cmd(tmp_path / "ref"), lines)
        mine = replay(adapter_cmd(tmp_path / "sim"), lines)
        assert mine == reference

        # malformed-line robustness: one error response, session intact
        probe = ["not json at all", lines[0]]
        responses = replay(adapter_cmd(tmp_path / "rob"), probe)
        assert json.loads(responses[0])["error"]["code"] == "malformed"
        assert json.loads(responses[1])["status"] == "ok"
    except BaseException as exc:
        failed = exc
        raise
    finally:
        elapsed = time.monotonic() - start
        verdict = "FAIL" if failed else "PASS"
        print(f"{verdict}: adapter golden-corpus conformance ({elapsed:.2f}s, budget 30s)")
    assert elapsed < 30.0
