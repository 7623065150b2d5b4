import numpy as np
import pytest

from rydcount.instance import build_chain, build_grid, punch_grid, punched_grid_ensemble


def build_corpus() -> dict:
    """Fifty small instances: chains, full grids and punched grids."""
    out = {f"chain_{n}": build_chain(n) for n in range(1, 21)}
    for lx in range(2, 5):
        for ly in range(2, 6):
            out[f"grid_{lx}x{ly}"] = build_grid(lx, ly)
    out.update(punched_grid_ensemble())
    rng = np.random.default_rng(2024)
    shapes = [(3, 3), (3, 4), (4, 4), (3, 5), (4, 5), (3, 6)]
    while len(out) < 50:
        lx, ly = shapes[len(out) % len(shapes)]
        n_holes = int(rng.integers(1, 4))
        holes = sorted(rng.choice(lx * ly, size=n_holes, replace=False).tolist())
        g = punch_grid(build_grid(lx, ly), holes)
        if g.n <= 18:
            out[f"punched_{lx}x{ly}_" + "_".join(map(str, holes))] = g
    return out


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report(capsys):
    """Print and record one pass/fail line per acceptance criterion."""

    def _report(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report
