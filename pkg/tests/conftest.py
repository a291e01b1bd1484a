import pytest

from risfed.config import loads_config

TINY_YAML = """
map:
  x_max: 5.0
  y_max: 5.0
  walls: [[2.0, 3.0, 5.0, 3.0]]
  ap_position: [2.5, 5.0, 2.0]
  ris_position: [5.0, 1.5, 2.0]
fleet:
  num_robots: 2
  starts: [[0.25, 4.75], [0.25, 0.25]]
  destinations: [[4.25, 1.25], [4.25, 1.25]]
  t_max: 12
channel:
  bandwidth_hz: 100000.0
ris:
  elements_per_side: 2
training:
  batch_size: 8
  memory_capacity: 64
  hidden_layers: [8]
  target_sync_period: 10
  optimizer: adam
federation:
  sync_period: 5
run:
  episodes: 3
  eval_episodes: 2
  seed: 7
"""


@pytest.fixture
def tiny_cfg():
    return loads_config(TINY_YAML)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS.values():
            terminalreporter.write_line(line)
