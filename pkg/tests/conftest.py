import json
import time
from functools import lru_cache
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("yfs", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("yfs")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# criterion number -> (passed, message); filled by test_acceptance.py
ACCEPTANCE = {}
# config name -> wall time of its single run
RUNTIME = {}


def load_raw_config(name: str) -> dict:
    return json.loads((CONFIG_DIR / f"{name}.json").read_text(encoding="utf-8"))


@lru_cache(maxsize=None)
def experiment(name: str):
    """Run a shipped config once per session."""
    from yfs.config import load_config
    from yfs.experiments import run_experiment

    start = time.perf_counter()
    res = run_experiment(load_config(load_raw_config(name)))
    RUNTIME[name] = time.perf_counter() - start
    return res


@pytest.fixture(scope="session")
def run_named():
    return experiment


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
