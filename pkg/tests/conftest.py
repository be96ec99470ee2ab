import numpy as np
import pytest

from quickcpd.types import ChangeLabel, Dataset, LabeledSequence

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str = "") -> None:
    line = f"{name}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def step_dataset(n=40, length=12, lo=0.0, hi=100.0, seed=0, noise=0.0) -> Dataset:
    """Half the sequences jump from ``lo`` to ``hi`` at a random index."""
    g = np.random.default_rng(seed)
    seqs = []
    for i in range(n):
        x = np.full((length, 1), lo)
        if i % 2 == 0:
            theta = int(g.integers(1, length))
            x[theta:] = hi
            lab = ChangeLabel.change(theta)
        else:
            lab = ChangeLabel.no_change()
        x = x + noise * g.standard_normal(x.shape)
        seqs.append(LabeledSequence(f"s{i}", x, lab))
    return Dataset(seqs)
