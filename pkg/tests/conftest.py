import sys
import numpy as np
import pytest

from beetlenet.data import AttackStage, CrownPatch


def make_patch(pixels, stage=AttackStage.GREEN, flight="Jun60", tree_id="t0", synthetic=False):
    return CrownPatch(np.asarray(pixels, dtype=np.uint8), AttackStage(stage), flight, tree_id, synthetic)


def random_patches(counts, side=8, seed=0, flight="Jun60"):
    """Random-pixel patches with the given per-class counts."""
    rng = np.random.default_rng(seed)
    out = []
    for stage, n in enumerate(counts):
        for _ in range(n):
            px = rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
            out.append(make_patch(px, stage, flight, f"{flight}_{len(out):04d}"))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
