import numpy as np
import pytest
from hypothesis import settings

from pfgan.generator import GeneratorConfig

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def tiny_gen_config():
    return GeneratorConfig(vocab_size=6, frame_dim=4, embed_dim=5, encoder_hidden=4,
                           prenet_dims=(6, 5), attn_rnn_hidden=7, dec_rnn_hidden=6,
                           attention_dim=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    def emit(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
