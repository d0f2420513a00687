import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from noteconsensus.data import RatingEvent, RatingMatrix

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def dense_matrix(values: np.ndarray, mask: np.ndarray | None = None) -> RatingMatrix:
    """RatingMatrix over a dense note x rater grid, optionally masked."""
    nn, nr = values.shape
    mask = np.ones_like(values, dtype=bool) if mask is None else mask
    ni, ri = np.nonzero(mask)
    return RatingMatrix(tuple(f"n{i:03d}" for i in range(nn)), tuple(f"r{j:03d}" for j in range(nr)),
                        ni.astype(np.int64), ri.astype(np.int64), values[mask].astype(float),
                        np.ones(ni.size, dtype=np.int64))


def events_from_grid(levels: dict[tuple[str, str], float], t0: int = 1_000) -> list[RatingEvent]:
    return [RatingEvent(n, r, t0 + k, v) for k, ((n, r), v) in enumerate(sorted(levels.items()))]


@pytest.fixture
def tmp_tsv(tmp_path):
    def write(name: str, text: str):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return write


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
