from __future__ import annotations

import re

import numpy as np
import pytest

from state_saliency.mlp import Activation, LayerSpec, MlpPolicy

_AC_RESULTS: dict[int, tuple[str, str]] = {}
_AC_NAME = re.compile(r"test_ac(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    m = _AC_NAME.search(report.nodeid)
    if m is None or "test_acceptance.py" not in report.nodeid:
        return
    key = int(m.group(1))
    prev = _AC_RESULTS.get(key, ("", "passed"))[1]
    outcome = report.outcome if prev == "passed" else prev
    _AC_RESULTS[key] = (m.group(2).replace("_", " "), outcome)


def pytest_terminal_summary(terminalreporter):
    if not _AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_AC_RESULTS):
        label, outcome = _AC_RESULTS[k]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"AC{k:<2} {verdict}  {label}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_layer(w, b=None, act=Activation.IDENTITY) -> LayerSpec:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    b = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    return LayerSpec(w, b, act)


def linear_policy(w, mask=None) -> MlpPolicy:
    return MlpPolicy((dense_layer(w),), action_mask=mask)
