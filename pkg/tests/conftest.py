import numpy as np
import pytest

from splitep.model import HierarchicalModel, LinearOperatorSpec
from splitep.phantoms_io import PhantomSpec, prior_draw_phantom, simulate_observation

# one "CRITERION k: PASS|FAIL detail" line per acceptance criterion
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def record():
    def _record(k: int, ok: bool, detail: str):
        ACCEPTANCE_LINES[k] = f"CRITERION {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[k])
    return _record


@pytest.fixture(scope="session")
def recovery_problem():
    """Cylinder-supported field draw (precision 100) under blur 0.5 and noise sd 0.1."""
    model = HierarchicalModel(LinearOperatorSpec.blur(0.5), LinearOperatorSpec())
    s_texture, s_noise = np.random.SeedSequence(7).spawn(2)
    x = prior_draw_phantom(PhantomSpec(), 100.0, s_texture)
    y = simulate_observation(x, model, 0.1, s_noise)
    return x, y, model


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
