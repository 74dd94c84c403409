from __future__ import annotations

import numpy as np
from hypothesis import settings
from scipy.spatial.transform import Rotation

settings.register_profile("repo", max_examples=100, deadline=None, derandomize=True)
settings.load_profile("repo")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


# Acceptance results, printed as one line per criterion at the end of the run.
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
