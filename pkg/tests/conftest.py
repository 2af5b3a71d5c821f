from pathlib import Path

import numpy as np
import pytest

from sore.core import CleanConfig, Cleaner

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def news_html() -> str:
    return (FIXTURES / "news_page.html").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def cleaner() -> Cleaner:
    """Default pipeline: builtin groups, hashing embedder, shipped config."""
    return Cleaner(CleanConfig())


def unit_rows(n: int, dim: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, dim)).astype(np.float32)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# acceptance summary: one line per criterion in the terminal report

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, label, informational=False): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None and item.module.__name__ == "test_acceptance":
        # companion tests share the criterion of the test named with the same prefix
        prefix = item.name.split("_")[1]
        marker = next((m for other in item.session.items if other.name.startswith(f"test_{prefix}_")
                       for m in [other.get_closest_marker("acceptance")] if m is not None), None)
    if marker is None or (report.when != "call" and report.passed):
        return
    n, label = marker.args
    entry = _ACCEPTANCE.setdefault(n, {"label": label, "ok": True, "detail": [],
                                       "informational": marker.kwargs.get("informational", False)})
    entry["ok"] = entry["ok"] and not report.failed
    entry["detail"] += [v for k, v in item.user_properties if k == "detail" and v not in entry["detail"]]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        status = "PASS" if e["ok"] else "FAIL"
        if e["informational"] and e["ok"]:
            status = "INFO"
        detail = "; ".join(e["detail"])
        terminalreporter.write_line(f"AC{n:02d} {status}  {e['label']}" + (f"  [{detail}]" if detail else ""))
