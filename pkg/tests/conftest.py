import warnings
from dataclasses import replace

import pytest

from covert_mitm.detectors import DegenerateCalibrationWarning, RankDeficiencyWarning
from covert_mitm.experiments import SimulationConfig, run_closed_loop

NOISE_FREE = replace(SimulationConfig(), noise_power=0.0)


def quiet(fn, *args, **kwargs):
    """Call ``fn`` with the noise-free calibration warnings silenced."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        warnings.simplefilter("ignore", DegenerateCalibrationWarning)
        return fn(*args, **kwargs)


@pytest.fixture(scope="session")
def nominal_trace():
    """Noise-free, attack-free closed loop."""
    return run_closed_loop(replace(NOISE_FREE, gamma_ref=0.0, alpha=1.0))


@pytest.fixture(scope="session")
def perfect_attack_trace():
    return run_closed_loop(replace(NOISE_FREE, gamma_ref=0.25, alpha=1.0))


@pytest.fixture(scope="session")
def mismatched_attack_trace():
    return run_closed_loop(replace(NOISE_FREE, gamma_ref=0.25, alpha=1.05))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
