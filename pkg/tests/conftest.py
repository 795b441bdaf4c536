import pytest

from pedcross.domain import Outcome, Participant, Trial
from pedcross.synthgen import GeneratorConfig, generate_dataset

# Lines collected by the acceptance suite, printed once at the end of the run.
ACCEPTANCE_LINES = []


_DEFAULT = object()


def make_trial(pair_id="P01", tta=5.0, waiting_time=50.0, location="zebra", decision=1,
               cit=_DEFAULT, cd=_DEFAULT, driver=None, pedestrian=None):
    """A valid trial; crossing trials default to cit 0.8 s and cd 2.5 s."""
    if cit is _DEFAULT:
        cit = 0.8 if decision == 1 else None
    if cd is _DEFAULT:
        cd = 2.5 if decision == 1 else None
    driver = driver or Participant(f"{pair_id}-D", "driver", 30, "M", 53.17, 53.78)
    pedestrian = pedestrian or Participant(f"{pair_id}-P", "pedestrian", 25, "F", 53.67, 50.47)
    return Trial(pair_id, driver, pedestrian, float(tta), float(waiting_time), location,
                 Outcome(decision, cit, cd))


@pytest.fixture(scope="session")
def default_trials():
    return generate_dataset(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def small_trials():
    return generate_dataset(GeneratorConfig(n_pairs=8, seed=3))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
