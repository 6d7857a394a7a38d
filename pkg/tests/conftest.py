import numpy as np
import pytest

from synlik.core import Normal, Prior, SimulatorModel, Uniform


class ConstantModel(SimulatorModel):
    """Always returns ``value``, whatever theta and seed."""

    name = "constant"

    def __init__(self, value, d_theta=1):
        self.value = np.asarray(value, dtype=float)
        self.d_s = self.value.size
        self.d_theta = d_theta
        self.n = 1

    def simulate_many(self, thetas, seeds):
        return np.tile(self.value, (len(seeds), 1))

    def default_prior(self):
        return Prior(tuple(Uniform(-10, 10) for _ in range(self.d_theta)))


class IdentityModel(SimulatorModel):
    """Summary equals theta exactly."""

    name = "identity"
    d_theta = 1
    d_s = 1
    n = 1

    def simulate_many(self, thetas, seeds):
        return np.asarray(thetas, dtype=float).reshape(-1, 1).copy()

    def default_prior(self):
        return Prior((Uniform(0.0, 1.0),))


class CountingModel(SimulatorModel):
    """Wraps a model and records every batch it is asked for."""

    def __init__(self, inner):
        self.inner = inner
        self.name, self.d_theta, self.d_s, self.n = inner.name, inner.d_theta, inner.d_s, inner.n
        self.batches = []

    def simulate_many(self, thetas, seeds):
        self.batches.append((np.array(thetas[0]), np.array(seeds)))
        return self.inner.simulate_many(thetas, seeds)

    def default_prior(self):
        return self.inner.default_prior()


@pytest.fixture
def std_normal_prior():
    return Prior((Normal(0.0, 1.0),))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line, then assert the criterion."""

    def _report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
