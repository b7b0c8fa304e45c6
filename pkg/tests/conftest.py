import math

import numpy as np
import pytest
from hypothesis import settings
from scipy.special import psi

from mmfou.model import ParameterVector

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

EXP_PSI_1 = math.exp(psi(1.0))


@pytest.fixture
def theta_mix3():
    return ParameterVector(EXP_PSI_1, (0.3, 0.5, 0.7), (0.5, 1.0, 1.5))


@pytest.fixture
def theta_ou():
    return ParameterVector(1.0, (0.5,), (1.0,))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion -> {part: (passed, detail)}, filled by test_acceptance and printed at the end
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str, part: str = "") -> bool:
    ACCEPTANCE.setdefault(number, {})[part] = (bool(passed), detail)
    print(f"criterion {number}{part}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts.values())
        detail = "; ".join(f"({k}) {'PASS' if p else 'FAIL'} {d}" if k else d for k, (p, d) in sorted(parts.items()))
        terminalreporter.write_line(f"{number:>2}. {'PASS' if ok else 'FAIL'}  {detail}")
