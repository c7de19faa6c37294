from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from threadloom.corpus import Dialogue, ReplyForest, Utterance

DATA = Path(__file__).parent / "data"

VERDICTS: dict[int, tuple[bool, str]] = {}


def record_verdict(num: int, ok: bool, detail: str) -> None:
    VERDICTS[num] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(VERDICTS):
        ok, detail = VERDICTS[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


@st.composite
def forests(draw, min_size=1, max_size=30):
    n = draw(st.integers(min_size, max_size))
    return ReplyForest(tuple(draw(st.integers(0, c)) for c in range(n)))


@st.composite
def label_pairs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    g = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    p = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    return g, p


def make_dialogue(speakers, texts=None, id="d"):
    texts = texts or [f"line {k}" for k in range(len(speakers))]
    return Dialogue(tuple(Utterance(k, s, t) for k, (s, t) in enumerate(zip(speakers, texts))), id=id)


def random_forest(rng: np.random.Generator, n: int) -> ReplyForest:
    return ReplyForest(tuple(int(rng.integers(0, c + 1)) for c in range(n)))


@pytest.fixture
def data_dir():
    return DATA
