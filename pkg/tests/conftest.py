import numpy as np
import pytest

from specflow import instances as inst
from specflow.algebra import BlockOperator, TraceContext


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def diag(values, blocks=None):
    """Diagonal operator; ``blocks`` is a list of (dim, weight), default one unit-weight block."""
    ctx = TraceContext(tuple(blocks)) if blocks else TraceContext.single(len(values))
    return BlockOperator.diag(ctx, values)


def random_pair(rng, total_dim=(2, 8), spread=3.0):
    ctx = inst.random_context(rng, total_dim)
    return inst.random_hermitian(ctx, rng, (-spread, spread)), inst.random_hermitian(ctx, rng, (-spread, spread))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for r in test_acceptance.RESULTS:
            extra = f" {r.detail}" if r.detail else ""
            terminalreporter.write_line(r.line() + extra)
