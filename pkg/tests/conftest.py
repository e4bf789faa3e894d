import numpy as np
import pytest
from hypothesis import settings

from bprm.model import Dataset, Individual, PriorConfig
from bprm.sampler import Model, initial_state

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def make_dataset(n=6, K=1, J=0, M=3, seed=0, exposed=None, entry=0.0, events=True):
    """Small synthetic dataset with every covariate present."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(1.0, 3.0, n)
    delta = (rng.random(n) < 0.5).astype(int) if events else np.zeros(n, dtype=int)
    x = np.exp(rng.normal(0.0, 1.0, (n, K)))
    xk = rng.integers(0, M, (n, J))
    ex = np.ones(n, dtype=bool) if exposed is None else np.asarray(exposed)
    return Dataset([f"r{i}" for i in range(n)], y, delta, np.full(n, entry), x, xk, ex, (M,) * J)


def make_model(data, **prior_kw):
    kw = dict(mu_sd=2.0, sigma_shape=3.0, sigma_rate=2.0, epsilon=1.0, nu_shape=4.0, nu_rate=4.0)
    kw.update(prior_kw)
    return Model.build(data, PriorConfig(**kw))


@pytest.fixture
def tiny():
    data = make_dataset()
    model = make_model(data)
    state = initial_state(model, np.random.default_rng(1), init_clusters=3)
    return data, model, state


def individual(y=60.0, delta=1, entry=30.0, x_cont=(2.0,), x_cat=(), exposed=True, id="a"):
    return Individual(id, y, delta, entry, x_cont, x_cat, exposed)


# one line per acceptance criterion, echoed after the run whatever the capture mode
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
