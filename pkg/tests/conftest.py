import textwrap

import pytest

from icejam.synthetic import make_dataset, make_scenarios

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


CONFIG = """\
stations:
  precip: {target: data/gp.csv, donor: data/bl.csv}
  upstream: {target: data/fv.csv, donor: data/hl.csv}
  downstream: {target: data/fc.csv, donor: data/fs.csv}
flood_file: data/floods.csv
scenario_files: [data/scenarios.csv]
seed: 20210128
B: 60
models: 40
replicates_per_model: 50
"""


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    make_dataset(root / "data")
    make_scenarios(root / "data" / "scenarios.csv")
    (root / "run.yaml").write_text(textwrap.dedent(CONFIG))
    return root
