import pytest

from emotic_mbn.dataset_io import ImageStore, generate_fixture, load_annotations
from emotic_mbn.engine import FeatureBank


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture200")
    generate_fixture(200, 1, out)
    return out


@pytest.fixture(scope="session")
def table(fixture_dir):
    return load_annotations(fixture_dir / "annotations.csv")


@pytest.fixture(scope="session")
def images(fixture_dir):
    return ImageStore(fixture_dir)


@pytest.fixture(scope="session")
def bank(table, images):
    return FeatureBank(table, images)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
