import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def write(tmp_path):
    """Write UTF-8 text (or bytes) to a file under tmp_path and return its path."""

    def _write(name, content):
        path = tmp_path / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def metric_fixture():
    lines = (DATA / "metric_fixture.tsv").read_text(encoding="utf-8").splitlines()
    pairs = [line.split("\t") for line in lines]
    return [h for h, _ in pairs], [r for _, r in pairs]


@pytest.fixture(scope="session")
def metric_oracle():
    return json.loads((DATA / "metric_oracle.json").read_text(encoding="utf-8"))
